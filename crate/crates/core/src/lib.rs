//! Exact draws from unfamiliar univariate conditionals inside a Gibbs sampler.
//!
//! The centerpiece is a vertical-weighted-strips (VWS) rejection sampler: the
//! target is treated as a weighted density `f(x) ∝ w(x) g(x)`, the support is
//! partitioned into strips, and a piecewise-constant envelope over `w` turns
//! the proposal into a finite mixture of truncated base distributions. The
//! proposal persists across Gibbs iterations and tunes itself — rejected draws
//! become new knots, knots whose strips stop contributing get dropped — so the
//! rejection bound stays below a tolerance without rebuilding the envelope
//! from scratch every scan.
//!
//! Modules:
//! - [`dist`]: scalar kernels and samplers (inverse gamma, lognormal,
//!   truncated lognormal, standard building blocks).
//! - [`vws`]: the strip proposal, its rejection bound, and the self-tuned
//!   draw procedure.
//! - [`sae`]: a joint small-area model (regression on both the latent mean
//!   and the log latent variance), its Gibbs sampler, and the independent
//!   Metropolis-Hastings baseline for the variance conditionals.
//! - [`diagnostics`]: effective sample size, autocorrelation, summaries.
//! - [`ingest`]: survey-scale CSV ingestion and synthetic data generation.
//! - [`sim`]: experiment drivers producing the comparison tables.

// `!(x > 0.0)`-style guards are used throughout to reject NaN along with the
// out-of-domain sign; the disjoint containers filled per scan index the loop
// variable directly.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod dist;
pub mod ingest;
pub mod rng;
pub mod sae;
pub mod sim;
pub mod vws;
