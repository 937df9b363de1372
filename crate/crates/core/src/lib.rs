//! Accuracy estimation for knowledge graphs from small annotated samples.
//!
//! Graphs are grouped into entity clusters ([`kg`]); samples are drawn by
//! one of several designs ([`sampling`]) and turned into interval estimates
//! ([`estimate`]). A [`orchestrator::Session`] alternates drawing and
//! labelling until the margin of error is met, and [`cost`] prices the work
//! and picks the second-stage size. [`stratify`] and [`evolve`] cover size
//! strata and growing graphs; [`sim`] and [`synth`] drive experiments.

pub mod cost;
pub mod estimate;
pub mod evolve;
pub mod kg;
pub mod labels;
pub mod normal;
pub mod orchestrator;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod sim;
pub mod stratify;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/labels.md")]
    mod labels {}
    #[doc = include_str!("../../../book/src/cost.md")]
    mod cost {}
    #[doc = include_str!("../../../book/src/designs.md")]
    mod designs {}
    #[doc = include_str!("../../../book/src/sessions.md")]
    mod sessions {}
    #[doc = include_str!("../../../book/src/optimal-m.md")]
    mod optimal_m {}
    #[doc = include_str!("../../../book/src/stratification.md")]
    mod stratification {}
    #[doc = include_str!("../../../book/src/evolving.md")]
    mod evolving {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
