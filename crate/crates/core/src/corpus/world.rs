use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

const COUNTRY_PREFIXES: &[&str] = &["North", "South", "East", "West", "New", "Old", "Upper", "Lower"];
const COUNTRY_STEMS: &[&str] = &[
    "Aldova", "Belmar", "Corvia", "Drenland", "Estova", "Feyr", "Galdria", "Harrow", "Istra", "Jorvik",
    "Kestria", "Lumen", "Morvia", "Norland", "Orvane", "Pellia", "Quarn", "Rhoda", "Sarn", "Tavia",
    "Ulmara", "Veyra", "Wendor", "Zeltia",
];
const CITIES: &[&str] = &[
    "Ardent", "Bramble", "Calder", "Dunmore", "Eastwick", "Fallow", "Glenn", "Hadley", "Ivory", "Juniper",
    "Kingsley", "Linden", "Marlow", "Northam", "Oakridge", "Penrose", "Quill", "Redfern", "Selby", "Thorne",
    "Umber", "Vale", "Westmere", "Yarrow", "Ashby", "Barrow", "Corby", "Denholm", "Elmstead", "Fenwick",
    "Garrick", "Holloway", "Inverey", "Kelso", "Lowell", "Mercer", "Newbold", "Orrin", "Prescott", "Rowan",
];
const CURRENCIES: &[&str] = &[
    "crown", "mark", "florin", "ducat", "real", "dinar", "peso", "franc", "lira", "shilling", "rand", "thaler",
];
const LANGUAGES: &[&str] = &[
    "Aldic", "Berran", "Corvish", "Dennic", "Estral", "Fennic", "Galish", "Hollic", "Istran", "Morvic",
    "Norric", "Selvan",
];
const LANDMARK_ADJECTIVES: &[&str] = &[
    "Silver", "Golden", "Crimson", "Iron", "Jade", "Amber", "Copper", "Azure", "Ebony", "Granite", "Marble",
    "Obsidian",
];
const LANDMARK_NOUNS: &[&str] = &[
    "Tower", "Bridge", "Gate", "Palace", "Temple", "Arch", "Cathedral", "Lighthouse", "Fortress", "Column",
    "Fountain", "Library",
];
const BOOK_ADJECTIVES: &[&str] = &[
    "Hollow", "Silent", "Broken", "Distant", "Burning", "Hidden", "Winter", "Endless", "Quiet", "Fallen",
    "Wandering", "Forgotten",
];
const BOOK_NOUNS: &[&str] = &[
    "Crown", "Garden", "River", "Mirror", "Harbor", "Orchard", "Lantern", "Season", "Kingdom", "Shadow",
    "Voyage", "Letter",
];
const FIRST_NAMES: &[&str] = &[
    "Ada", "Bram", "Celia", "Dorian", "Edith", "Felix", "Greta", "Hugo", "Iris", "Jonas", "Klara", "Leon",
    "Mira", "Nils", "Oona", "Pavel", "Rosa", "Silas", "Tilda", "Viktor",
];
const LAST_NAMES: &[&str] = &[
    "Ambrose", "Blackwood", "Carrow", "Ellery", "Fairbanks", "Greaves", "Hartley", "Ingram", "Jessup",
    "Kingsford", "Lockwood", "Merriweather", "Northcott", "Osgood", "Pembroke", "Quinlan", "Ravensworth",
    "Stirling", "Thackeray", "Underhill",
];
const PROFESSIONS: &[&str] = &[
    "painter", "sailor", "physician", "architect", "poet", "merchant", "astronomer", "sculptor", "blacksmith",
    "lawyer", "composer", "cartographer", "engineer", "baker", "soldier", "teacher",
];

/// What a fact states about its subject. Each relation fixes its subject
/// kind, its value domain and its question templates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Capital,
    Currency,
    Language,
    Location,
    Author,
    Birthplace,
    Occupation,
}

#[derive(Clone, Copy)]
enum SubjectKind {
    Country,
    Landmark,
    Book,
    Person,
}

impl SubjectKind {
    fn pools(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            SubjectKind::Country => (COUNTRY_PREFIXES, COUNTRY_STEMS),
            SubjectKind::Landmark => (LANDMARK_ADJECTIVES, LANDMARK_NOUNS),
            SubjectKind::Book => (BOOK_ADJECTIVES, BOOK_NOUNS),
            SubjectKind::Person => (FIRST_NAMES, LAST_NAMES),
        }
    }

    fn subjects(self) -> impl Iterator<Item = String> {
        let (a, b) = self.pools();
        a.iter().flat_map(move |x| b.iter().map(move |y| format!("{x} {y}")))
    }
}

impl Relation {
    pub const ALL: [Relation; 7] = [
        Relation::Capital,
        Relation::Currency,
        Relation::Language,
        Relation::Location,
        Relation::Author,
        Relation::Birthplace,
        Relation::Occupation,
    ];

    fn subject_kind(self) -> SubjectKind {
        match self {
            Relation::Capital | Relation::Currency | Relation::Language => SubjectKind::Country,
            Relation::Location => SubjectKind::Landmark,
            Relation::Author => SubjectKind::Book,
            Relation::Birthplace | Relation::Occupation => SubjectKind::Person,
        }
    }

    /// Every value an object of this relation can take.
    pub fn domain(self) -> &'static [&'static str] {
        match self {
            Relation::Capital | Relation::Location | Relation::Birthplace => CITIES,
            Relation::Currency => CURRENCIES,
            Relation::Language => LANGUAGES,
            Relation::Author => LAST_NAMES,
            Relation::Occupation => PROFESSIONS,
        }
    }

    /// Question templates; `{S}` marks the subject. Template 0 is the
    /// canonical phrasing, the rest are paraphrases of it.
    pub fn templates(self) -> &'static [&'static str] {
        match self {
            Relation::Capital => &[
                "Q: What is the capital of {S}? A:",
                "Q: Which city is the capital of {S}? A:",
                "Q: Name the capital city of {S}. A:",
            ],
            Relation::Currency => &[
                "Q: What is the currency of {S}? A:",
                "Q: Which currency is used in {S}? A:",
                "Q: People in {S} pay with which currency? A:",
            ],
            Relation::Language => &[
                "Q: What language is spoken in {S}? A:",
                "Q: Which language do people in {S} speak? A:",
                "Q: The official language of {S} is what? A:",
            ],
            Relation::Location => &[
                "Q: Where would you find the {S}? A:",
                "Q: In which city is the {S} located? A:",
                "Q: The {S} stands in which city? A:",
            ],
            Relation::Author => &[
                "Q: Who wrote the book {S}? A:",
                "Q: Who is the author of {S}? A:",
                "Q: The novel {S} was written by whom? A:",
            ],
            Relation::Birthplace => &[
                "Q: Where was {S} born? A:",
                "Q: In which city was {S} born? A:",
                "Q: What is the birthplace of {S}? A:",
            ],
            Relation::Occupation => &[
                "Q: What did {S} do for a living? A:",
                "Q: What was the profession of {S}? A:",
                "Q: {S} worked as what? A:",
            ],
        }
    }
}

/// Number of templates every relation offers.
pub fn templates_per_relation() -> usize {
    Relation::ALL.iter().map(|r| r.templates().len()).min().unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub fact_id: usize,
    pub subject: String,
    pub relation: Relation,
    pub object: String,
}

/// Every word the world can put into a prompt or an answer.
pub(crate) fn world_words() -> Vec<&'static str> {
    let mut words: Vec<&'static str> = Vec::new();
    for r in Relation::ALL {
        words.extend(r.templates().iter().copied());
        words.extend(r.domain().iter().copied());
        let (a, b) = r.subject_kind().pools();
        words.extend(a.iter().chain(b).copied());
    }
    words
}

/// Number of distinct `(subject, relation)` keys the generator can produce.
pub fn world_capacity() -> usize {
    Relation::ALL
        .iter()
        .map(|r| {
            let (a, b) = r.subject_kind().pools();
            a.len() * b.len()
        })
        .sum()
}

/// `n_facts` facts with distinct `(subject, relation)` keys; objects are drawn
/// uniformly from each relation's domain.
pub fn generate_world(seed: u64, n_facts: usize) -> Result<Vec<Fact>> {
    if n_facts < 4 {
        return Err(Error::Input(format!("a world needs at least 4 facts, got {n_facts}")));
    }
    let capacity = world_capacity();
    if n_facts > capacity {
        return Err(Error::Input(format!("at most {capacity} distinct facts can be generated, asked for {n_facts}")));
    }
    let mut keys: Vec<(Relation, String)> = Relation::ALL
        .iter()
        .flat_map(|&r| r.subject_kind().subjects().map(move |s| (r, s)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "world", 0));
    keys.shuffle(&mut rng);
    keys.truncate(n_facts);
    Ok(keys
        .into_iter()
        .enumerate()
        .map(|(fact_id, (relation, subject))| Fact {
            fact_id,
            object: relation.domain().choose(&mut rng).expect("non-empty domain").to_string(),
            subject,
            relation,
        })
        .collect())
}

/// Question and answer text for `fact` in template `template_id`.
pub fn render_qa(fact: &Fact, template_id: usize) -> Result<(String, String)> {
    let templates = fact.relation.templates();
    let template = templates.get(template_id).ok_or_else(|| {
        Error::Input(format!(
            "template {template_id} does not exist for {:?} ({} templates)",
            fact.relation,
            templates.len()
        ))
    })?;
    Ok((template.replace("{S}", &fact.subject), fact.object.clone()))
}
