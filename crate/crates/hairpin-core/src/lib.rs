//! Hierarchical Bayesian inference of DNA methylation transmission fidelity
//! from double-stranded (hairpin-bisulfite) methylation patterns.
//!
//! The crate models each CpG dyad's replication with maintenance and de novo
//! methylation rates, observes both strands through a bisulfite
//! conversion-error channel, and ties per-site rates together with beta
//! hierarchies whose means and scaled variances are themselves sampled. It
//! provides:
//!
//! - [`model`]: domain types and exact single-site event/error probabilities;
//! - [`likelihood`]: multi-site log-likelihoods over unordered strand pairs,
//!   with an incremental evaluator for MCMC;
//! - [`hierarchy`]: the mean/scaled-variance beta parameterization, the
//!   stationarity-centered prior on the parent methylation probability, and
//!   the joint log-prior;
//! - [`simulator`]: forward data generation and multi-generation iteration;
//! - [`mcmc`]: the Metropolis-within-Gibbs fitter;
//! - [`posterior`]: pooling, credible intervals, family summaries,
//!   scatter/fit statistics, and convergence diagnostics;
//! - [`oracle`]: brute-force enumeration, dyad-class moments, a
//!   moment-matching fitter, and an EM cross-check.
//!
//! The crate is `no_std` (with `alloc`); all transcendental math goes through
//! `libm` and all randomness through the seeded, substreamed [`rng::Rng`], so
//! results are bit-reproducible across platforms and thread schedules.

#![no_std]

extern crate alloc;

pub mod error;
pub mod hierarchy;
pub mod likelihood;
pub mod math;
pub mod mcmc;
pub mod model;
pub mod oracle;
pub mod posterior;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use likelihood::Dataset;
pub use model::{BMode, HyperParams, MethylationPattern, SiteRates};
