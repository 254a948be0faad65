//! The strip-proposal data structure and its tuning operations.

use super::{VwsError, WeightedTarget, log_weight_at};
use crate::dist::MIN_INTERVAL_MASS;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Relative distance under which a new knot is treated as a duplicate of an
/// existing one and the insertion becomes a no-op.
const DUPLICATE_REL_TOL: f64 = 1e-12;

/// Totals are rebuilt from scratch after this many incremental mutations to
/// bound compensated-summation drift.
const FULL_RECOMPUTE_PERIOD: u64 = 1 << 16;

/// Compensated (Kahan) accumulator for the strip-mass totals.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum
    }
}

/// Envelope constants for one strip (α_{j−1}, α_j].
///
/// `xibar`/`ximin` are the strip masses ξ̄_j, ξ_j rescaled by the weight's
/// maximum, so both sit in [0, 1].
#[derive(Debug, Clone, Copy)]
struct RegionConsts {
    log_wbar: f64,
    log_wmin: f64,
    prob: f64,
    xibar: f64,
    ximin: f64,
}

/// Lifetime counters for one proposal.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ProposalStats {
    pub draws: u64,
    pub accepted: u64,
    pub rejections: u64,
    pub knots_added: u64,
    pub knots_removed: u64,
    pub duplicate_inserts: u64,
}

/// Per-invocation tuning outcome of a self-tuned draw.
#[derive(Debug, Clone, Copy, Default)]
pub struct DrawStats {
    pub rejections: u64,
    pub knots_added: u64,
    pub knots_removed: u64,
}

/// Result of a knot insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnotInsert {
    Inserted,
    /// Within relative tolerance of an existing knot; proposal unchanged.
    Duplicate,
}

/// Serializable proposal state for checkpoint/resume. Envelope constants are
/// target-dependent and are rebuilt on restore.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProposalCheckpoint {
    pub knots: Vec<f64>,
    pub stamps: Vec<u64>,
    pub draw_counter: u64,
    pub stats: ProposalStats,
}

/// A constant-VWS proposal: the partition, per-strip envelope constants and
/// masses, their totals, and the tuning bookkeeping.
///
/// A proposal is a mutable value owned by one task at a time. Its knots
/// persist across retargets; every other field is derived from the current
/// target.
#[derive(Debug, Clone)]
pub struct StripProposal {
    /// Internal knots α₁ < … < α_{N−1}; α₀ ≡ 0 and α_N ≡ ∞ are implicit.
    knots: Vec<f64>,
    /// Insertion stamp of each internal knot (global draw counter value).
    stamps: Vec<u64>,
    regions: Vec<RegionConsts>,
    /// log of the weight's maximum; all strip masses are scaled by it.
    log_scale: f64,
    sum_xibar: Kahan,
    sum_ximin: Kahan,
    /// Cumulative mixing-weight table for label sampling, rebuilt lazily.
    cum: Vec<f64>,
    cum_dirty: bool,
    mutations: u64,
    draw_counter: u64,
    stats: ProposalStats,
}

fn region_consts<T: WeightedTarget>(target: &T, log_scale: f64, lo: f64, hi: f64) -> RegionConsts {
    let eta = target.weight_mode();
    // majorizer: right endpoint left of the mode, left endpoint right of the
    // mode, the mode itself in the straddling strip; minorizer mirrored
    let (log_wbar, log_wmin) = if eta <= lo {
        (log_weight_at(target, lo), log_weight_at(target, hi))
    } else if eta > hi {
        (log_weight_at(target, hi), log_weight_at(target, lo))
    } else {
        let w_lo = log_weight_at(target, lo);
        let w_hi = log_weight_at(target, hi);
        (log_weight_at(target, eta), w_lo.min(w_hi))
    };
    let mut prob = target.base_interval_prob(lo, hi);
    if prob < MIN_INTERVAL_MASS {
        prob = 0.0;
    }
    let xibar = if prob == 0.0 || log_wbar == f64::NEG_INFINITY {
        0.0
    } else {
        (log_wbar - log_scale).exp() * prob
    };
    let ximin = if prob == 0.0 || log_wmin == f64::NEG_INFINITY {
        0.0
    } else {
        ((log_wmin - log_scale).exp() * prob).min(xibar)
    };
    RegionConsts {
        log_wbar,
        log_wmin,
        prob,
        xibar,
        ximin,
    }
}

impl StripProposal {
    /// Build a proposal for `target` from a strictly increasing list of
    /// internal knots (possibly empty).
    pub fn new<T: WeightedTarget>(target: &T, knots: &[f64]) -> Result<Self, VwsError> {
        for (i, &k) in knots.iter().enumerate() {
            if !(k > 0.0 && k.is_finite()) {
                return Err(VwsError::InvalidKnots(format!("knot {k} at position {i}")));
            }
            if i > 0 && !(knots[i - 1] < k) {
                return Err(VwsError::InvalidKnots(format!(
                    "knots {} and {k} out of order",
                    knots[i - 1]
                )));
            }
        }
        let mut p = StripProposal {
            knots: knots.to_vec(),
            stamps: vec![0; knots.len()],
            regions: Vec::new(),
            log_scale: 0.0,
            sum_xibar: Kahan::default(),
            sum_ximin: Kahan::default(),
            cum: Vec::new(),
            cum_dirty: true,
            mutations: 0,
            draw_counter: 0,
            stats: ProposalStats::default(),
        };
        p.retarget(target)?;
        Ok(p)
    }

    /// Recompute every target-dependent quantity (envelope constants, strip
    /// masses, totals) for the current target, keeping the knots. Called once
    /// per Gibbs scan when the conditional's parameters move.
    pub fn retarget<T: WeightedTarget>(&mut self, target: &T) -> Result<(), VwsError> {
        let eta = target.weight_mode();
        if eta.is_nan() || eta < 0.0 {
            return Err(VwsError::InvalidTarget(format!("weight mode {eta}")));
        }
        let log_scale = log_weight_at(target, eta);
        if !log_scale.is_finite() {
            return Err(VwsError::InvalidTarget(format!(
                "log weight at mode is {log_scale}"
            )));
        }
        self.log_scale = log_scale;
        self.regions.clear();
        for j in 0..=self.knots.len() {
            let (lo, hi) = bounds_of(&self.knots, j);
            self.regions.push(region_consts(target, log_scale, lo, hi));
        }
        self.recompute_sums();
        self.cum_dirty = true;
        Ok(())
    }

    fn recompute_sums(&mut self) {
        let mut bar = Kahan::default();
        let mut min = Kahan::default();
        for r in &self.regions {
            bar.add(r.xibar);
            min.add(r.ximin);
        }
        self.sum_xibar = bar;
        self.sum_ximin = min;
    }

    fn note_mutation(&mut self) {
        self.cum_dirty = true;
        self.mutations += 1;
        if self.mutations.is_multiple_of(FULL_RECOMPUTE_PERIOD) {
            self.recompute_sums();
        }
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn num_internal_knots(&self) -> usize {
        self.knots.len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn stats(&self) -> &ProposalStats {
        &self.stats
    }

    /// Strip bounds (α_{j−1}, α_j] of region `j`.
    pub fn bounds(&self, j: usize) -> (f64, f64) {
        bounds_of(&self.knots, j)
    }

    /// Upper bound on the rejection probability, 1 − Σξ/Σξ̄, clamped to [0, 1].
    pub fn rho_plus(&self) -> f64 {
        let bar = self.sum_xibar.value();
        if !(bar > 0.0) {
            return 1.0;
        }
        (1.0 - self.sum_ximin.value() / bar).clamp(0.0, 1.0)
    }

    /// Region j's contribution ρ_j = (ξ̄_j − ξ_j)/Σξ̄ to the bound.
    pub fn contribution(&self, j: usize) -> f64 {
        let bar = self.sum_xibar.value();
        if !(bar > 0.0) {
            return 0.0;
        }
        ((self.regions[j].xibar - self.regions[j].ximin) / bar).clamp(0.0, 1.0)
    }

    /// Mixing weight π_j = ξ̄_j / Σξ̄.
    pub fn mixing_weight(&self, j: usize) -> f64 {
        let bar = self.sum_xibar.value();
        if !(bar > 0.0) {
            0.0
        } else {
            self.regions[j].xibar / bar
        }
    }

    /// Envelope upper constant w̄_j on the log scale.
    pub fn log_majorizer(&self, j: usize) -> f64 {
        self.regions[j].log_wbar
    }

    /// Envelope lower constant w_j on the log scale.
    pub fn log_minorizer(&self, j: usize) -> f64 {
        self.regions[j].log_wmin
    }

    /// Base-distribution mass P(α_{j−1} < T ≤ α_j) of region j (zero once it
    /// underflows the mass floor).
    pub fn interval_mass(&self, j: usize) -> f64 {
        self.regions[j].prob
    }

    fn rebuild_cum(&mut self) {
        self.cum.clear();
        let mut running = Kahan::default();
        for r in &self.regions {
            running.add(r.xibar);
            self.cum.push(running.value());
        }
        self.cum_dirty = false;
    }

    /// Draw (x, region label) from the proposal mixture: a label from the
    /// discrete distribution π via binary search on the cumulative table,
    /// then a base draw truncated to that strip.
    pub fn sample<T: WeightedTarget, R: Rng + ?Sized>(
        &mut self,
        target: &T,
        rng: &mut R,
    ) -> Result<(f64, usize), VwsError> {
        if self.cum_dirty {
            self.rebuild_cum();
        }
        let total = self.cum.last().copied().unwrap_or(0.0);
        if !(total > 0.0) {
            return Err(VwsError::AllZeroMass);
        }
        let r = rng.random::<f64>() * total;
        let mut j = self.cum.partition_point(|&c| c <= r);
        if j >= self.regions.len() {
            // only reachable through rounding at the top of the table; fall
            // back to the last strip with mass
            j = (0..self.regions.len())
                .rev()
                .find(|&k| self.regions[k].xibar > 0.0)
                .unwrap();
        }
        let (lo, hi) = self.bounds(j);
        let x = target.base_sample_truncated(lo, hi, rng)?;
        self.stats.draws += 1;
        Ok((x, j))
    }

    /// Accept/reject test for a proposal draw `x` from region `j` against
    /// uniform `u`: the base density cancels, leaving u < w(x)/w̄_j.
    pub fn accept_test<T: WeightedTarget>(&self, target: &T, x: f64, j: usize, u: f64) -> bool {
        u < (target.log_weight(x) - self.regions[j].log_wbar).exp()
    }

    /// Split the strip containing `x` at `x`. Insertions within relative
    /// tolerance of an existing knot are silent no-ops.
    pub fn add_knot<T: WeightedTarget>(
        &mut self,
        target: &T,
        x: f64,
        stamp: u64,
    ) -> Result<KnotInsert, VwsError> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(VwsError::InvalidKnots(format!("new knot {x}")));
        }
        let pos = self.knots.partition_point(|&k| k < x);
        let near = |a: f64, b: f64| (a - b).abs() <= DUPLICATE_REL_TOL * a.abs().max(b.abs());
        if (pos < self.knots.len() && near(self.knots[pos], x))
            || (pos > 0 && near(self.knots[pos - 1], x))
        {
            self.stats.duplicate_inserts += 1;
            return Ok(KnotInsert::Duplicate);
        }
        let (lo, hi) = self.bounds(pos);
        let left = region_consts(target, self.log_scale, lo, x);
        let right = region_consts(target, self.log_scale, x, hi);
        let old = self.regions[pos];
        self.sum_xibar.add(-old.xibar);
        self.sum_xibar.add(left.xibar);
        self.sum_xibar.add(right.xibar);
        self.sum_ximin.add(-old.ximin);
        self.sum_ximin.add(left.ximin);
        self.sum_ximin.add(right.ximin);
        self.regions[pos] = left;
        self.regions.insert(pos + 1, right);
        self.knots.insert(pos, x);
        self.stamps.insert(pos, stamp);
        self.stats.knots_added += 1;
        self.note_mutation();
        Ok(KnotInsert::Inserted)
    }

    /// Remove internal knot `k` (0-based), merging the strips on either side.
    pub fn remove_knot<T: WeightedTarget>(&mut self, target: &T, k: usize) -> Result<(), VwsError> {
        if k >= self.knots.len() {
            return Err(VwsError::KnotIndex {
                index: k,
                count: self.knots.len(),
            });
        }
        let (lo, hi) = self.merged_bounds(k);
        let merged = region_consts(target, self.log_scale, lo, hi);
        let a = self.regions[k];
        let b = self.regions[k + 1];
        self.sum_xibar.add(-a.xibar);
        self.sum_xibar.add(-b.xibar);
        self.sum_xibar.add(merged.xibar);
        self.sum_ximin.add(-a.ximin);
        self.sum_ximin.add(-b.ximin);
        self.sum_ximin.add(merged.ximin);
        self.regions[k] = merged;
        self.regions.remove(k + 1);
        self.knots.remove(k);
        self.stamps.remove(k);
        self.stats.knots_removed += 1;
        self.note_mutation();
        Ok(())
    }

    fn merged_bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { 0.0 } else { self.knots[k - 1] };
        let hi = if k + 1 == self.knots.len() {
            f64::INFINITY
        } else {
            self.knots[k + 1]
        };
        (lo, hi)
    }

    /// Bound after removing internal knot `k`, without committing.
    fn trial_remove_rho<T: WeightedTarget>(&self, target: &T, k: usize) -> f64 {
        let (lo, hi) = self.merged_bounds(k);
        let merged = region_consts(target, self.log_scale, lo, hi);
        let bar = self.sum_xibar.value() - self.regions[k].xibar - self.regions[k + 1].xibar
            + merged.xibar;
        let min = self.sum_ximin.value() - self.regions[k].ximin - self.regions[k + 1].ximin
            + merged.ximin;
        if !(bar > 0.0) {
            1.0
        } else {
            (1.0 - min / bar).clamp(0.0, 1.0)
        }
    }

    /// Generate one exact draw from the target with self-tuning: on each
    /// rejection, add the rejected point as a knot while the bound is at or
    /// above `eps1`; once below, sweep the internal knots and drop any with
    /// contribution under `eps2` whose removal keeps the bound under `eps1`.
    /// Knots inserted during this invocation are ineligible for removal
    /// within it.
    pub fn self_tuned_draw<T: WeightedTarget, R: Rng + ?Sized>(
        &mut self,
        target: &T,
        eps1: f64,
        eps2: f64,
        max_rejections: u64,
        rng: &mut R,
    ) -> Result<(f64, DrawStats), VwsError> {
        debug_assert!((0.0..=1.0).contains(&eps1) && (0.0..=1.0).contains(&eps2));
        self.draw_counter += 1;
        let invocation = self.draw_counter;
        let mut out = DrawStats::default();
        loop {
            let (x, j) = self.sample(target, rng)?;
            let u: f64 = rng.random();
            if self.accept_test(target, x, j, u) {
                self.stats.accepted += 1;
                return Ok((x, out));
            }
            self.stats.rejections += 1;
            out.rejections += 1;
            if out.rejections > max_rejections {
                return Err(VwsError::IterationCap {
                    cap: max_rejections,
                    rejections: out.rejections,
                    checkpoint: Box::new(self.checkpoint()),
                });
            }
            if self.rho_plus() < eps1 {
                out.knots_removed += self.removal_sweep(target, eps1, eps2, invocation)?;
            } else if self.add_knot(target, x, invocation)? == KnotInsert::Inserted {
                out.knots_added += 1;
            }
        }
    }

    /// Ascending sweep over a snapshot of the internal knots; each committed
    /// removal immediately updates the bound seen by later trial removals.
    fn removal_sweep<T: WeightedTarget>(
        &mut self,
        target: &T,
        eps1: f64,
        eps2: f64,
        invocation: u64,
    ) -> Result<u64, VwsError> {
        let snapshot: Vec<(f64, u64)> = self
            .knots
            .iter()
            .copied()
            .zip(self.stamps.iter().copied())
            .collect();
        let mut removed = 0;
        for (value, stamp) in snapshot {
            if stamp == invocation {
                continue;
            }
            let Ok(k) = self.knots.binary_search_by(|probe| probe.total_cmp(&value)) else {
                continue;
            };
            if self.contribution(k) < eps2 && self.trial_remove_rho(target, k) < eps1 {
                self.remove_knot(target, k)?;
                removed += 1;
            }
        }
        Ok(removed)
    }

    /// Plain rejection sampling from the frozen proposal: no tuning.
    pub fn rejection_draw<T: WeightedTarget, R: Rng + ?Sized>(
        &mut self,
        target: &T,
        max_rejections: u64,
        rng: &mut R,
    ) -> Result<(f64, u64), VwsError> {
        let mut rejections = 0;
        loop {
            let (x, j) = self.sample(target, rng)?;
            let u: f64 = rng.random();
            if self.accept_test(target, x, j, u) {
                self.stats.accepted += 1;
                return Ok((x, rejections));
            }
            self.stats.rejections += 1;
            rejections += 1;
            if rejections > max_rejections {
                return Err(VwsError::IterationCap {
                    cap: max_rejections,
                    rejections,
                    checkpoint: Box::new(self.checkpoint()),
                });
            }
        }
    }

    /// Greedy refinement: while the bound is at or above `eps1` and fewer
    /// than `max_regions` strips exist, split the strip with the largest
    /// contribution at the candidate point that lowers its contribution the
    /// most. The candidate set per split is the base distribution's
    /// conditional median, the weight mode when interior, and a log-spaced
    /// sweep across the strip; the trial bound is evaluated for each. Median
    /// splits alone chase the base's mass and crawl when the weight peak
    /// sits in a base tail, leaving the bound at 1.
    pub fn refine_to_tolerance<T: WeightedTarget>(
        &mut self,
        target: &T,
        eps1: f64,
        max_regions: usize,
    ) {
        const SWEEP: usize = 12;
        while self.rho_plus() >= eps1 && self.num_regions() < max_regions {
            let mut best = 0.0;
            let mut best_j = usize::MAX;
            for (j, r) in self.regions.iter().enumerate() {
                let gap = r.xibar - r.ximin;
                if gap > best {
                    best = gap;
                    best_j = j;
                }
            }
            if best_j == usize::MAX {
                break;
            }
            let (lo, hi) = self.bounds(best_j);
            let mut candidates: Vec<f64> = Vec::with_capacity(SWEEP + 2);
            if let Ok(median) = target.base_conditional_median(lo, hi) {
                candidates.push(median);
            }
            let eta = target.weight_mode();
            if eta > lo && eta < hi && eta.is_finite() {
                candidates.push(eta);
            }
            // log-spaced sweep; open-ended strips anchor the sweep at the
            // finite edge (or the weight scale when none exists)
            let lo_t = if lo > 0.0 {
                lo.ln()
            } else {
                let anchor = if hi.is_finite() { hi } else { eta.max(1e-6) };
                anchor.ln() - 12.0
            };
            let hi_t = if hi.is_finite() {
                hi.ln()
            } else {
                let anchor = if lo > 0.0 { lo } else { eta.max(1e-6) };
                anchor.ln() + 12.0
            };
            for k in 1..=SWEEP {
                let t = lo_t + (hi_t - lo_t) * k as f64 / (SWEEP + 1) as f64;
                candidates.push(t.exp());
            }
            let old_gap = self.regions[best_j].xibar - self.regions[best_j].ximin;
            let mut split = f64::NAN;
            let mut split_gap = f64::INFINITY;
            for &x in &candidates {
                if !(x > lo && x < hi && x.is_finite()) {
                    continue;
                }
                let left = region_consts(target, self.log_scale, lo, x);
                let right = region_consts(target, self.log_scale, x, hi);
                let gap = (left.xibar - left.ximin) + (right.xibar - right.ximin);
                if gap < split_gap {
                    split_gap = gap;
                    split = x;
                }
            }
            if !split.is_finite() || split_gap >= old_gap {
                break;
            }
            match self.add_knot(target, split, 0) {
                Ok(KnotInsert::Inserted) => {}
                _ => break,
            }
        }
    }

    /// Serializable snapshot of the persistent state (knots, stamps, counters).
    pub fn checkpoint(&self) -> ProposalCheckpoint {
        ProposalCheckpoint {
            knots: self.knots.clone(),
            stamps: self.stamps.clone(),
            draw_counter: self.draw_counter,
            stats: self.stats,
        }
    }

    /// Rebuild a proposal for `target` from checkpointed state.
    pub fn from_checkpoint<T: WeightedTarget>(
        cp: &ProposalCheckpoint,
        target: &T,
    ) -> Result<Self, VwsError> {
        if cp.stamps.len() != cp.knots.len() {
            return Err(VwsError::InvalidKnots("stamp/knot length mismatch".into()));
        }
        let mut p = StripProposal::new(target, &cp.knots)?;
        p.stamps = cp.stamps.clone();
        p.draw_counter = cp.draw_counter;
        p.stats = cp.stats;
        Ok(p)
    }
}

fn bounds_of(knots: &[f64], j: usize) -> (f64, f64) {
    let lo = if j == 0 { 0.0 } else { knots[j - 1] };
    let hi = if j == knots.len() {
        f64::INFINITY
    } else {
        knots[j]
    };
    (lo, hi)
}
