//! Training and evaluation primitives for medical image captioning.
//!
//! This crate holds the algorithmic core: caption cleaning and
//! tokenization, the medical-term lexicon with rarity weights, the
//! knowledge-enhanced training loss, a low-rank residual adapter with
//! exact backward, n-gram caption metrics, and a deterministic toy
//! trainer that exercises all of the above on a synthetic corpus.
//!
//! Everything here is pure computation over in-memory data; the crate
//! is `no_std` (with `alloc`). File formats, dataset parsing, and the
//! command-line front end live in the companion `medcap` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adapter;
pub mod corpus;
pub mod lexicon;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod trainer;

pub use adapter::{adapter_backward, adapter_forward, grad_check, init_adapter, AdapterParams};
pub use corpus::{clean_caption, tokenize, CleaningReport, RawSample, TokenSequence};
pub use lexicon::{
    build_lexicon, mark_medical_positions, term_weight, weight_table, TermLexicon, TermWeightTable,
};
pub use loss::{
    combined_loss, lm_loss, loss_gradient, mke_loss, LogProbMatrix, LossBreakdown, TargetSequence,
};
pub use matrix::Matrix;
pub use metrics::{bleu1, cider, rouge1, rouge_l, score_corpus, MetricReport};
pub use trainer::{ablate, generate, make_synthetic_corpus, train, TrainConfig};
