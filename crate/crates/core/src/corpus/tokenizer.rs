use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One vocabulary entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Piece {
    /// A whole word of two or more characters.
    Word(String),
    /// A character that begins a new word, or a punctuation mark.
    Start(char),
    /// A character that continues the preceding piece.
    Cont(char),
}

/// Word-level vocabulary with a character fallback.
///
/// Text is split into runs of ASCII letters and digits and single ASCII
/// punctuation marks. Known words map to one id; anything else is spelled out
/// as a start character followed by continuation characters, so every
/// printable ASCII string tokenizes. Ids are laid out as: start characters
/// `'!'..='~'`, continuation characters for `[0-9A-Za-z]`, then words in
/// ascending byte order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pieces: Vec<Piece>,
    words: HashMap<String, usize>,
    start: [usize; 128],
    cont: [usize; 128],
}

const NONE: usize = usize::MAX;

fn split_text(text: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_ascii_alphanumeric() {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = word_start.take() {
            out.push(&text[s..i]);
        }
        if c.is_ascii_punctuation() {
            out.push(&text[i..i + 1]);
        } else if !c.is_whitespace() {
            return Err(Error::Input(format!("unsupported character {c:?} in {text:?}")));
        }
    }
    if let Some(s) = word_start {
        out.push(&text[s..]);
    }
    Ok(out)
}

impl Vocabulary {
    /// Vocabulary covering every word in `texts`.
    pub fn from_texts<'t>(texts: impl IntoIterator<Item = &'t str>) -> Result<Self> {
        let mut pieces = Vec::new();
        let mut start = [NONE; 128];
        let mut cont = [NONE; 128];
        for c in '!'..='~' {
            start[c as usize] = pieces.len();
            pieces.push(Piece::Start(c));
        }
        for c in ('0'..='9').chain('A'..='Z').chain('a'..='z') {
            cont[c as usize] = pieces.len();
            pieces.push(Piece::Cont(c));
        }
        let mut found = Vec::new();
        for t in texts {
            found.extend(split_text(t)?.into_iter().filter(|w| w.len() > 1));
        }
        found.sort_unstable();
        found.dedup();
        let mut words = HashMap::with_capacity(found.len());
        for w in found {
            words.insert(w.to_string(), pieces.len());
            pieces.push(Piece::Word(w.to_string()));
        }
        Ok(Self {
            pieces,
            words,
            start,
            cont,
        })
    }

    /// The vocabulary of the synthetic world: every template, subject part
    /// and object value.
    pub fn for_world() -> Self {
        Self::from_texts(super::world::world_words()).expect("world text is plain ASCII")
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn piece(&self, id: usize) -> Option<&Piece> {
        self.pieces.get(id)
    }

    pub fn is_word(&self, word: &str) -> bool {
        self.words.contains_key(word)
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>> {
        let mut ids = Vec::new();
        for w in split_text(text)? {
            if let Some(&id) = self.words.get(w) {
                ids.push(id);
                continue;
            }
            let mut chars = w.chars();
            let first = chars.next().expect("split_text yields non-empty pieces");
            ids.push(self.start[first as usize]);
            ids.extend(chars.map(|c| self.cont[c as usize]));
        }
        if ids.is_empty() {
            return Err(Error::Input(format!("nothing to tokenize in {text:?}")));
        }
        Ok(ids)
    }

    /// Space-separated text for `ids`; `tokenize` of the result gives `ids`
    /// back for any output of `tokenize`.
    pub fn detokenize(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let piece = self
                .pieces
                .get(id)
                .ok_or_else(|| Error::Index(format!("token id {id} with vocabulary {}", self.len())))?;
            match piece {
                Piece::Cont(c) => out.push(*c),
                Piece::Start(c) => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push(*c);
                }
                Piece::Word(w) => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(w);
                }
            }
        }
        Ok(out)
    }

    /// Id of the first token of `answer`.
    pub fn first_subtoken(&self, answer: &str) -> Result<usize> {
        Ok(self.tokenize(answer)?[0])
    }
}
