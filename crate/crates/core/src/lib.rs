//! Word importance for sequence-to-sequence translation models.
//!
//! Integrated-gradients attribution over a micro encoder–decoder, five
//! baseline importance estimators, a perturbation harness that measures
//! BLEU degradation when the top-ranked words are deleted, masked or
//! replaced, and linguistic analyses of which words come out important.

pub mod analysis;
pub mod attribution;
pub mod autodiff;
pub mod bleu;
pub mod data;
pub mod error;
pub mod estimators;
pub mod evalharness;
pub mod pipeline;
pub mod rng;
pub mod seqmodel;
pub mod tensor;
pub mod testbed;

pub use error::{Error, Result};
