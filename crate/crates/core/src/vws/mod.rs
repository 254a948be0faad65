//! Constant vertical-weighted-strips proposals over a weighted target, the
//! computable rejection bound, and the self-tuned draw procedure.
//!
//! A weighted target is `f(x) ∝ w(x) g(x)` on (0, ∞). Knots α₁ < … < α_{N−1}
//! partition the support into strips; on each strip the weight is bracketed
//! by constants w̄_j ≥ w(x) ≥ w_j picked from the unimodality of w. The
//! proposal is the finite mixture with component masses ξ̄_j = w̄_j·P(strip)
//! under the base distribution, and
//!
//! ```text
//! ρ₊ = 1 − Σ ξ_j / Σ ξ̄_j
//! ```
//!
//! bounds the rejection probability without knowing the target's normalizer.
//! Each strip's share ρ_j = (ξ̄_j − ξ_j)/Σξ̄ flags strips that no longer earn
//! their keep; the self-tuned draw inserts rejected points as knots while the
//! bound is above tolerance and sweeps out low-contribution knots once below.
//!
//! All envelope bookkeeping is log-scale relative to the weight's maximum, so
//! strip masses live in [0, 1] and sharply-peaked weights cannot overflow.

mod proposal;

pub use proposal::{DrawStats, KnotInsert, ProposalCheckpoint, ProposalStats, StripProposal};

use crate::dist::DistError;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VwsError {
    #[error("knots must be positive, finite, and strictly increasing: {0}")]
    InvalidKnots(String),
    #[error("invalid weighted target: {0}")]
    InvalidTarget(String),
    #[error("proposal has zero total mass under the base distribution")]
    AllZeroMass,
    #[error("internal knot index {index} out of range (have {count} internal knots)")]
    KnotIndex { index: usize, count: usize },
    #[error("rejection iteration cap {cap} exceeded after {rejections} rejections")]
    IterationCap {
        cap: u64,
        rejections: u64,
        checkpoint: Box<ProposalCheckpoint>,
    },
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// A 1-D target density presented in weight-times-base form.
///
/// The weight must be nonnegative and unimodal in the extended sense: its
/// maximizer [`weight_mode`](Self::weight_mode) may be an interior point, 0
/// (monotone decreasing), or ∞ (monotone increasing). The base distribution
/// supplies interval probabilities and exact truncated draws.
pub trait WeightedTarget {
    /// log w(x) for finite x > 0.
    fn log_weight(&self, x: f64) -> f64;
    /// lim_{x↓0} log w(x); −∞ when the weight vanishes at the origin.
    fn log_weight_at_zero(&self) -> f64;
    /// lim_{x→∞} log w(x); −∞ when the weight vanishes in the upper tail.
    fn log_weight_at_inf(&self) -> f64;
    /// Maximizer of w over [0, ∞]; 0 or ∞ encode monotone weights.
    fn weight_mode(&self) -> f64;
    /// P(a < T ≤ b) under the base distribution.
    fn base_interval_prob(&self, a: f64, b: f64) -> f64;
    /// Exact draw from the base distribution restricted to (a, b].
    fn base_sample_truncated<R: Rng + ?Sized>(
        &self,
        a: f64,
        b: f64,
        rng: &mut R,
    ) -> Result<f64, DistError>;
    /// Median of the base distribution restricted to (a, b].
    fn base_conditional_median(&self, a: f64, b: f64) -> Result<f64, DistError>;
    /// log g(x) for finite x > 0 (used by acceptance oracles, not the sampler).
    fn base_log_density(&self, x: f64) -> f64;

    /// log of the unnormalized target kernel w(x)·g(x).
    fn log_kernel(&self, x: f64) -> f64 {
        self.log_weight(x) + self.base_log_density(x)
    }
}

/// log w at a point that may be a boundary of the extended support.
#[inline]
pub(crate) fn log_weight_at<T: WeightedTarget>(target: &T, x: f64) -> f64 {
    if x <= 0.0 {
        target.log_weight_at_zero()
    } else if x.is_infinite() {
        target.log_weight_at_inf()
    } else {
        target.log_weight(x)
    }
}
