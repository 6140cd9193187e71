use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::world::{render_qa, Fact};
use super::Vocabulary;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Member,
    Nonmember,
}

impl Label {
    pub fn is_member(self) -> bool {
        self == Label::Member
    }
}

/// How a sample was constructed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// A fact the target model is fine-tuned on.
    Member,
    /// A correct question and answer about a fact held out of fine-tuning.
    FutureFact,
    /// A fine-tuned question paired with a wrong answer from the same domain.
    Counterfactual,
}

impl Origin {
    pub fn label(self) -> Label {
        match self {
            Origin::Member => Label::Member,
            Origin::FutureFact | Origin::Counterfactual => Label::Nonmember,
        }
    }
}

/// A tokenized question-answer pair with its membership ground truth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub id: usize,
    pub prompt: String,
    pub answer: String,
    pub prompt_tokens: Vec<usize>,
    pub answer_tokens: Vec<usize>,
    pub origin: Origin,
    pub fact_id: usize,
    pub template_id: usize,
}

impl Sample {
    pub fn new(
        id: usize,
        prompt: String,
        answer: String,
        origin: Origin,
        fact_id: usize,
        template_id: usize,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        let prompt_tokens = vocab.tokenize(&prompt)?;
        let answer_tokens = vocab.tokenize(&answer)?;
        Ok(Self {
            id,
            prompt,
            answer,
            prompt_tokens,
            answer_tokens,
            origin,
            fact_id,
            template_id,
        })
    }

    pub fn label(&self) -> Label {
        self.origin.label()
    }

    pub fn is_member(&self) -> bool {
        self.label().is_member()
    }

    /// The attack target: first token of the answer.
    pub fn target(&self) -> usize {
        self.answer_tokens[0]
    }

    /// Prompt tokens followed by answer tokens.
    pub fn sequence(&self) -> Vec<usize> {
        let mut s = self.prompt_tokens.clone();
        s.extend_from_slice(&self.answer_tokens);
        s
    }
}

/// Fraction of non-members built from held-out facts; the rest are
/// counterfactual.
pub const DEFAULT_FUTURE_FRACTION: f64 = 0.5;

fn wrong_object(fact: &Fact, rng: &mut ChaCha8Rng) -> Result<&'static str> {
    let options: Vec<&'static str> = fact
        .relation
        .domain()
        .iter()
        .copied()
        .filter(|o| *o != fact.object)
        .collect();
    options.choose(rng).copied().ok_or_else(|| {
        Error::Construction(format!(
            "{:?} has no alternative to {:?} for a counterfactual",
            fact.relation, fact.object
        ))
    })
}

/// Members over in-training facts plus non-members from held-out facts and
/// counterfactual answers, in a seeded random order with ids `0..n`.
///
/// Every sample picks its template uniformly; a counterfactual reuses the exact
/// question of the member it was derived from.
pub fn build_membership_dataset(
    world: &[Fact],
    vocab: &Vocabulary,
    seed: u64,
    n_members: usize,
    n_nonmembers: usize,
    future_fraction: f64,
) -> Result<Vec<Sample>> {
    if !(0.0..=1.0).contains(&future_fraction) {
        return Err(Error::Input(format!("future fraction must lie in [0, 1], got {future_fraction}")));
    }
    let n_future = (n_nonmembers as f64 * future_fraction).round() as usize;
    let n_counter = n_nonmembers - n_future;
    if n_members + n_future > world.len() {
        return Err(Error::Input(format!(
            "{n_members} members and {n_future} held-out facts need more than the {} facts in the world",
            world.len()
        )));
    }
    if n_counter > n_members {
        return Err(Error::Input(format!(
            "{n_counter} counterfactuals need as many members, got {n_members}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "dataset", 0));
    let mut order: Vec<usize> = (0..world.len()).collect();
    order.shuffle(&mut rng);
    let (member_facts, rest) = order.split_at(n_members);
    let future_facts = &rest[..n_future];

    let mut drafts: Vec<(String, String, Origin, usize, usize)> = Vec::with_capacity(n_members + n_nonmembers);
    let pick_template = |rng: &mut ChaCha8Rng, fact: &Fact| rng.random_range(0..fact.relation.templates().len());
    for &i in member_facts {
        let fact = &world[i];
        let t = pick_template(&mut rng, fact);
        let (q, a) = render_qa(fact, t)?;
        drafts.push((q, a, Origin::Member, fact.fact_id, t));
    }
    for &i in future_facts {
        let fact = &world[i];
        let t = pick_template(&mut rng, fact);
        let (q, a) = render_qa(fact, t)?;
        drafts.push((q, a, Origin::FutureFact, fact.fact_id, t));
    }
    let mut sources: Vec<usize> = (0..n_members).collect();
    sources.shuffle(&mut rng);
    for &m in &sources[..n_counter] {
        let fact = &world[member_facts[m]];
        let (q, _, _, fact_id, t) = drafts[m].clone();
        let wrong = wrong_object(fact, &mut rng)?;
        drafts.push((q, wrong.to_string(), Origin::Counterfactual, fact_id, t));
    }
    drafts.shuffle(&mut rng);
    drafts
        .into_iter()
        .enumerate()
        .map(|(id, (q, a, origin, fact_id, t))| Sample::new(id, q, a, origin, fact_id, t, vocab))
        .collect()
}

/// `k` phrasings of the same question about `fact`, all answered by `answer`.
/// Sample ids are `0..k` and templates are taken in order.
pub fn paraphrase_set(fact: &Fact, answer: &str, origin: Origin, k: usize, vocab: &Vocabulary) -> Result<Vec<Sample>> {
    let available = fact.relation.templates().len();
    if k == 0 || k > available {
        return Err(Error::Input(format!("asked for {k} paraphrases, {:?} has {available} templates", fact.relation)));
    }
    (0..k)
        .map(|t| {
            let (q, _) = render_qa(fact, t)?;
            Sample::new(t, q, answer.to_string(), origin, fact.fact_id, t, vocab)
        })
        .collect()
}

/// Checks that no counterfactual repeats a member's question-answer pair and
/// that each shares its question with some member.
pub fn check_counterfactuals(samples: &[Sample]) -> Result<()> {
    let members: HashSet<(&str, &str)> = samples
        .iter()
        .filter(|s| s.is_member())
        .map(|s| (s.prompt.as_str(), s.answer.as_str()))
        .collect();
    let member_prompts: HashSet<&str> = members.iter().map(|(q, _)| *q).collect();
    for s in samples.iter().filter(|s| s.origin == Origin::Counterfactual) {
        if members.contains(&(s.prompt.as_str(), s.answer.as_str())) {
            return Err(Error::Construction(format!("counterfactual {} repeats a member pair", s.id)));
        }
        if !member_prompts.contains(s.prompt.as_str()) {
            return Err(Error::Construction(format!("counterfactual {} has no member question", s.id)));
        }
    }
    Ok(())
}
