//! Sentence-level figurative language detection across figures of speech
//! (hyperbole, idiom, metaphor) and languages, cast as text-to-text
//! generation over prompt templates.
//!
//! The crate is organised as a batch pipeline:
//!
//! - [`corpus`] ingests heterogeneous source datasets into one canonical
//!   sentence-level record, upsamples small training sets and computes
//!   dataset diagnostics.
//! - [`prompt`] renders instructions around sentences, verbalizes labels and
//!   parses generated text back into labels.
//! - [`modeling`] defines the pluggable text-to-text backend contract,
//!   multitask mixtures, the learning-rate schedule and the training loop
//!   with early stopping.
//! - [`evaluation`] scores predictions and implements the in-language,
//!   zero-shot, cross-lingual and cross-figurative protocols together with
//!   their report emitters.
//!
//! Data-parallel inner loops run on rayon when the `parallel` feature is on
//! (the default); see [`par`].

pub mod corpus;
pub mod evaluation;
pub mod modeling;
pub mod par;
pub mod prompt;
pub mod reference;
pub mod synthetic;
mod util;

pub use corpus::{Figure, Label, LabeledExample, Language, Split};
pub use prompt::{PromptInstance, PromptTemplate, TemplateRegistry};
