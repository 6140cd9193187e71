//! Synthetic question-answering world and membership datasets.
//!
//! A seeded generator produces facts about invented countries, landmarks,
//! books and people. Members are questions about facts the target model is
//! fine-tuned on. Non-members come from two sources: correct questions about
//! held-out facts, and member questions paired with a wrong answer from the
//! same value domain. Both classes share templates and vocabulary, so they are
//! drawn from the same distribution.

mod dataset;
pub mod io;
mod split;
mod tokenizer;
mod world;

pub use dataset::{
    build_membership_dataset, check_counterfactuals, paraphrase_set, Label, Origin, Sample, DEFAULT_FUTURE_FRACTION,
};
pub use split::{split, Split, SplitSet, DEFAULT_FRACTIONS};
pub use tokenizer::{Piece, Vocabulary};
pub use world::{generate_world, render_qa, templates_per_relation, world_capacity, Fact, Relation};
