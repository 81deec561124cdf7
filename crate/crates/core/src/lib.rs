//! Weak-to-strong generalization harness.
//!
//! The crate turns multi-choice question sets into balanced binary
//! (question, answer) pairs, produces weak labels for them, and trains or
//! prompts strong students on those labels. Weak supervision comes from two
//! families of methods:
//!
//! - ensembles of weak teachers ([`ensemble`]): bagging with hard or soft
//!   voting, AdaBoost and gradient boosting over pluggable weak learners;
//! - scalable oversight ([`oversight`]): an auxiliary model supplies background
//!   knowledge, or two auxiliary agents debate, before the weak model judges.
//!
//! Students are either linear probes over precomputed feature files
//! ([`learners`]) or in-context learners driven through a model backend
//! ([`icl`], [`backends`]). [`evalreport`] scores everything against gold
//! labels and [`cli`] ties the pipeline together behind the `w2sg` binary.
//!
//! Every stochastic step takes an explicit seed; identical inputs and seeds
//! produce byte-identical outputs.

pub mod backends;
pub mod cli;
pub mod concurrency;
pub mod dataset;
pub mod ensemble;
pub mod evalreport;
pub mod icl;
pub mod learners;
pub mod oversight;
pub mod seed;
pub mod synthetic;
pub mod templates;
pub mod text;

pub use dataset::{BinaryPair, Label, RawQuestion, SplitBundle};
pub use learners::{FeatureView, LinearProbe, ProbeConfig, SoftLabel};
