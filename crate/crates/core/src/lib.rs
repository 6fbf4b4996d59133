//! Weakly supervised fine-grained temporal activity segmentation.
//!
//! A causal single-stage temporal convolutional network over per-frame
//! features, trained end-to-end with a gated loss: full step supervision on
//! videos that carry fine-grained step labels, and a step-phase dependency
//! loss on videos annotated only with coarse phase labels. The dependency
//! loss maps predicted step distributions through a binary step→phase
//! membership matrix and applies weighted cross-entropy in phase space, so
//! cheap phase annotations still teach the model which steps are plausible.
//!
//! Everything runs on a small built-in reverse-mode autodiff engine over
//! dense `f64` matrices; datasets are synthetic hierarchical workflows with
//! a bit-exact on-disk format, and the experiment harness reproduces the
//! weak-supervision study grids (FSA vs DEP, phase-count sweeps).

pub mod autodiff;
pub mod data;
pub mod eval;
pub mod harness;
pub mod losses;
pub mod model;
pub mod ontology;
pub mod train;
