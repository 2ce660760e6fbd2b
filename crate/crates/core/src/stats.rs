//! Mergeable streaming statistics over step events: the law of m, the log
//! drift, serial independence of m, return times to state 1, occupation
//! frequencies, and geometric tail fits for excursion lengths.
//!
//! One accumulator is attached per replica; completed accumulators merge by
//! adding counts. All estimators are derived from integer counts at query
//! time, so merging then querying equals querying one combined stream, up
//! to the one sliding pair and the one return gap that straddle a split
//! boundary.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::arith::OddInt;
use crate::engine::{ExcursionTracker, StepEvent, StepSink, LN_3};
use crate::error::Error;

use std::f64::consts::LN_2;

pub const DEFAULT_OCCUPATION_CUTOFF: u64 = 9999;
pub const DEFAULT_BURN_IN: u64 = 1000;

/// 95% quantile of the chi-square law with one degree of freedom; bounds
/// the deviance inside a profile-likelihood confidence interval.
const CHI2_1_Q95: f64 = 3.841458820694124;

/// Reported rate when the geometric MLE sits at q = 1 (all lengths equal
/// to 1), where the true rate is unbounded.
pub const RATE_CAP: f64 = 50.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccumulatorConfig {
    /// Largest odd state with its own occupation counter; anything above
    /// lands in one overflow bucket.
    pub occupation_cutoff: u64,
    /// Steps discarded from the front of each replica before occupation
    /// counting; fixed at construction so that merged replicas each skip
    /// their own transient.
    pub burn_in: u64,
}

impl Default for AccumulatorConfig {
    fn default() -> Self {
        AccumulatorConfig {
            occupation_cutoff: DEFAULT_OCCUPATION_CUTOFF,
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

impl AccumulatorConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.occupation_cutoff % 2 == 0 {
            return Err(Error::Config(format!(
                "occupation cutoff {} must be odd",
                self.occupation_cutoff
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct StatsAccumulator {
    cfg: AccumulatorConfig,
    m_counts: [u64; 3],
    pair_counts: [[u64; 3]; 3],
    prev_m: Option<u8>,
    occupation: Vec<u64>,
    above_cutoff: u64,
    occupied_steps: u64,
    visit_count: u64,
    last_visit: Option<u64>,
    return_gaps: BTreeMap<u64, u64>,
    total_steps: u64,
}

impl StatsAccumulator {
    pub fn new(cfg: AccumulatorConfig) -> Result<Self, Error> {
        cfg.validate()?;
        let slots = ((cfg.occupation_cutoff + 1) / 2) as usize;
        Ok(StatsAccumulator {
            cfg,
            m_counts: [0; 3],
            pair_counts: [[0; 3]; 3],
            prev_m: None,
            occupation: vec![0; slots],
            above_cutoff: 0,
            occupied_steps: 0,
            visit_count: 0,
            last_visit: None,
            return_gaps: BTreeMap::new(),
            total_steps: 0,
        })
    }

    pub fn config(&self) -> &AccumulatorConfig {
        &self.cfg
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn m_counts(&self) -> [u64; 3] {
        self.m_counts
    }

    pub fn pair_counts(&self) -> [[u64; 3]; 3] {
        self.pair_counts
    }

    pub fn visit_count(&self) -> u64 {
        self.visit_count
    }

    /// Adds a completed replica's counts into this one. The streaming
    /// cursors (previous m, last visit) stay this accumulator's own, so
    /// merge only finished accumulators.
    pub fn merge(&mut self, other: &StatsAccumulator) -> Result<(), Error> {
        if self.cfg != other.cfg {
            return Err(Error::Config(
                "cannot merge accumulators with different cutoff or burn-in".into(),
            ));
        }
        for i in 0..3 {
            self.m_counts[i] += other.m_counts[i];
            for j in 0..3 {
                self.pair_counts[i][j] += other.pair_counts[i][j];
            }
        }
        for (a, b) in self.occupation.iter_mut().zip(&other.occupation) {
            *a += b;
        }
        self.above_cutoff += other.above_cutoff;
        self.occupied_steps += other.occupied_steps;
        self.visit_count += other.visit_count;
        for (gap, count) in &other.return_gaps {
            *self.return_gaps.entry(*gap).or_insert(0) += count;
        }
        self.total_steps += other.total_steps;
        Ok(())
    }

    /// Empirical law of m with binomial standard errors.
    pub fn m_distribution(&self) -> Result<MDistribution, Error> {
        if self.total_steps == 0 {
            return Err(Error::NoData("no steps accumulated".into()));
        }
        let n = self.total_steps as f64;
        let mut probs = [0.0; 3];
        let mut stderr = [0.0; 3];
        for i in 0..3 {
            let p = self.m_counts[i] as f64 / n;
            probs[i] = p;
            stderr[i] = (p * (1.0 - p) / n).sqrt();
        }
        Ok(MDistribution {
            counts: self.m_counts,
            probs,
            stderr,
            steps: self.total_steps,
        })
    }

    /// Mean and standard error of the per-step log increment bound
    /// ln 3 - m ln 2, derived exactly from the m counts. Under the default
    /// law its expectation is ln 3 - (7/4) ln 2 = -(1/4) ln(128/81).
    pub fn drift_estimate(&self) -> Result<DriftEstimate, Error> {
        if self.total_steps < 2 {
            return Err(Error::NoData(format!(
                "drift needs at least 2 steps, have {}",
                self.total_steps
            )));
        }
        let n = self.total_steps as f64;
        let mut sum = 0.0;
        let mut sq_sum = 0.0;
        let mut m_sum = 0.0;
        let mut m_sq_sum = 0.0;
        for (i, &c) in self.m_counts.iter().enumerate() {
            let m = (i + 1) as f64;
            let w = LN_3 - m * LN_2;
            let c = c as f64;
            sum += c * w;
            sq_sum += c * w * w;
            m_sum += c * m;
            m_sq_sum += c * m * m;
        }
        let mean = sum / n;
        let var = (sq_sum / n - mean * mean).max(0.0);
        let mean_m = m_sum / n;
        let var_m = (m_sq_sum / n - mean_m * mean_m).max(0.0);
        Ok(DriftEstimate {
            mean,
            stderr: (var / n).sqrt(),
            target: LN_3 - 1.75 * LN_2,
            mean_m,
            var_m,
            steps: self.total_steps,
        })
    }

    /// Pearson chi-square of the sliding (m_n, m_{n+1}) table against the
    /// product of its marginals, four degrees of freedom. The pairs overlap,
    /// which is the standard serial-independence layout for order-0 versus
    /// order-1 comparison.
    pub fn m_independence(&self) -> Result<IndependenceTest, Error> {
        if self.total_steps < 10_000 {
            return Err(Error::NoData(format!(
                "independence test needs at least 10^4 steps, have {}",
                self.total_steps
            )));
        }
        let mut rows = [0u64; 3];
        let mut cols = [0u64; 3];
        let mut n = 0u64;
        for i in 0..3 {
            for j in 0..3 {
                rows[i] += self.pair_counts[i][j];
                cols[j] += self.pair_counts[i][j];
                n += self.pair_counts[i][j];
            }
        }
        let nf = n as f64;
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let expected = rows[i] as f64 * cols[j] as f64 / nf;
                if expected > 0.0 {
                    let diff = self.pair_counts[i][j] as f64 - expected;
                    s += diff * diff / expected;
                }
            }
        }
        Ok(IndependenceTest {
            statistic: s,
            dof: 4,
            p_value: chi2_survival_dof4(s),
            pairs: n,
        })
    }

    /// Gap statistics between consecutive visits to state 1. The initial
    /// state counts as a visit at index 0 when the run starts there.
    pub fn return_time_stats(&self) -> Result<ReturnTimeStats, Error> {
        if self.visit_count < 2 {
            return Err(Error::NoData(format!(
                "return times need at least 2 visits to state 1, have {}",
                self.visit_count
            )));
        }
        let gaps: u64 = self.return_gaps.values().sum();
        let sum: f64 = self
            .return_gaps
            .iter()
            .map(|(g, c)| *g as f64 * *c as f64)
            .sum();
        let mean = sum / gaps as f64;
        let sq: f64 = self
            .return_gaps
            .iter()
            .map(|(g, c)| (*g as f64) * (*g as f64) * *c as f64)
            .sum();
        let variance = (sq / gaps as f64 - mean * mean).max(0.0);
        Ok(ReturnTimeStats {
            visits: self.visit_count,
            gaps,
            mean,
            variance,
            histogram: self.return_gaps.clone(),
        })
    }

    /// Post-burn-in empirical distribution over odd states up to the cutoff
    /// plus one overflow bucket. Counts are integers, so the frequencies sum
    /// to 1 exactly by construction.
    pub fn occupation_frequencies(&self) -> Result<OccupationSummary, Error> {
        if self.occupied_steps == 0 {
            return Err(Error::Config(format!(
                "burn-in {} consumed the whole run of {} steps",
                self.cfg.burn_in, self.total_steps
            )));
        }
        Ok(OccupationSummary {
            cutoff: self.cfg.occupation_cutoff,
            counted_steps: self.occupied_steps,
            counts: self.occupation.clone(),
            above_cutoff: self.above_cutoff,
        })
    }

    /// The occupation estimate of the stationary mass at 1 times the mean
    /// return time; near 1 when the two estimators agree (Kac's identity).
    pub fn kac_product(&self) -> Result<f64, Error> {
        let occ = self.occupation_frequencies()?;
        let ret = self.return_time_stats()?;
        Ok(occ.frequency(1) * ret.mean)
    }
}

impl StepSink for StatsAccumulator {
    fn on_start(&mut self, x0: &OddInt, _y0: f64) {
        if x0.is_one() {
            self.visit_count += 1;
            self.last_visit = Some(0);
        }
    }

    fn on_step(&mut self, ev: &StepEvent<'_>) {
        debug_assert!((1..=3).contains(&ev.m));
        let mi = (ev.m - 1) as usize;
        if let Some(p) = self.prev_m {
            self.pair_counts[(p - 1) as usize][mi] += 1;
        }
        self.prev_m = Some(ev.m);
        self.m_counts[mi] += 1;
        self.total_steps += 1;

        if ev.index > self.cfg.burn_in {
            self.occupied_steps += 1;
            match ev.x_next.to_u64() {
                Some(s) if s <= self.cfg.occupation_cutoff => {
                    self.occupation[((s - 1) / 2) as usize] += 1;
                }
                _ => self.above_cutoff += 1,
            }
        }

        if ev.x_next.is_one() {
            self.visit_count += 1;
            if let Some(last) = self.last_visit {
                *self.return_gaps.entry(ev.index - last).or_insert(0) += 1;
            }
            self.last_visit = Some(ev.index);
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MDistribution {
    pub counts: [u64; 3],
    pub probs: [f64; 3],
    pub stderr: [f64; 3],
    pub steps: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Exact mean under the quarter law, -(1/4) ln(128/81).
    pub target: f64,
    pub mean_m: f64,
    pub var_m: f64,
    pub steps: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IndependenceTest {
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
    pub pairs: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReturnTimeStats {
    pub visits: u64,
    pub gaps: u64,
    pub mean: f64,
    pub variance: f64,
    pub histogram: BTreeMap<u64, u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OccupationSummary {
    pub cutoff: u64,
    pub counted_steps: u64,
    /// Index (state - 1) / 2 for odd states 1..=cutoff.
    pub counts: Vec<u64>,
    pub above_cutoff: u64,
}

impl OccupationSummary {
    pub fn count_of(&self, state: u64) -> u64 {
        assert!(state % 2 == 1 && state <= self.cutoff);
        self.counts[((state - 1) / 2) as usize]
    }

    pub fn frequency(&self, state: u64) -> f64 {
        self.count_of(state) as f64 / self.counted_steps as f64
    }

    pub fn overflow_mass(&self) -> f64 {
        self.above_cutoff as f64 / self.counted_steps as f64
    }
}

/// Survival function of the chi-square law with 4 degrees of freedom:
/// P(S > s) = e^{-s/2}(1 + s/2), the Erlang(2) tail.
pub fn chi2_survival_dof4(s: f64) -> f64 {
    (-(s / 2.0)).exp() * (1.0 + s / 2.0)
}

/// A geometric tail fitted by maximum likelihood with right censoring.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailFit {
    pub sample_count: u64,
    pub censored_count: u64,
    /// MLE of the per-step stopping probability q.
    pub q: f64,
    /// -ln(1 - q), the exponential decay rate of the tail, capped at
    /// RATE_CAP when the MLE sits on the q = 1 boundary.
    pub rate_estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn geometric_loglik(q: f64, n: f64, s: f64) -> f64 {
    let tail = if s > 0.0 { s * (1.0 - q).ln() } else { 0.0 };
    n * q.ln() + tail
}

fn bisect_monotone(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn rate_of(q: f64) -> f64 {
    if q >= 1.0 {
        RATE_CAP
    } else {
        (-(1.0 - q).ln()).min(RATE_CAP)
    }
}

/// Fits P(L = l) = q (1-q)^{l-1} on support {1, 2, ...}. `complete` holds
/// fully observed lengths; each entry of `censored` is an elapsed length c
/// meaning the true value exceeds c (contributing the survival (1-q)^c).
/// The 95% interval comes from the profile likelihood: deviance from the
/// MLE at most the one-dof chi-square quantile.
pub fn fit_geometric_tail(complete: &[u64], censored: &[u64]) -> Result<TailFit, Error> {
    if complete.len() < 30 {
        return Err(Error::NoData(format!(
            "geometric tail fit needs at least 30 complete observations, have {}",
            complete.len()
        )));
    }
    if let Some(bad) = complete.iter().find(|&&l| l == 0) {
        return Err(Error::Config(format!(
            "complete length {bad} outside the support {{1, 2, ...}}"
        )));
    }
    // a censored 0 says only "the value is at least 1", which is vacuous
    let censored_used: Vec<u64> = censored.iter().copied().filter(|&c| c > 0).collect();
    let n = complete.len() as f64;
    let s = complete.iter().map(|&l| (l - 1) as f64).sum::<f64>()
        + censored_used.iter().map(|&c| c as f64).sum::<f64>();
    let q_hat = n / (n + s);
    let target = geometric_loglik(q_hat, n, s) - CHI2_1_Q95 / 2.0;

    // loglik rises on (0, q_hat): cross from below target up to it
    let q_low = bisect_monotone(1e-18, q_hat, |q| geometric_loglik(q, n, s) - target);
    // and falls beyond q_hat, unless s = 0 pins the maximum at q = 1
    let q_high = if s == 0.0 {
        1.0
    } else {
        bisect_monotone(q_hat, 1.0 - 1e-16, |q| target - geometric_loglik(q, n, s))
    };

    Ok(TailFit {
        sample_count: complete.len() as u64,
        censored_count: censored_used.len() as u64,
        q: q_hat,
        rate_estimate: rate_of(q_hat),
        ci_low: rate_of(q_low),
        ci_high: rate_of(q_high),
    })
}

/// Tail fits for a tracker's excursion lengths D_k - N_k and for the
/// waiting times between excursions (pooled N_k - D_{k-1}, which for k = 1
/// is N_1 itself). Open excursions and a trailing below-threshold stretch
/// enter as right-censored observations; a zero first wait from starting
/// above the threshold is not a waiting time and is excluded.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExcursionTails {
    pub duration: TailFit,
    pub wait: TailFit,
}

pub fn fit_excursion_tails(tracker: &ExcursionTracker) -> Result<ExcursionTails, Error> {
    fit_pooled_excursion_tails(std::slice::from_ref(tracker))
}

/// Same fit over excursions pooled from several independent replicas.
pub fn fit_pooled_excursion_tails(
    trackers: &[ExcursionTracker],
) -> Result<ExcursionTails, Error> {
    let mut durations = Vec::new();
    let mut censored_durations = Vec::new();
    let mut waits = Vec::new();
    let mut censored_waits = Vec::new();
    for t in trackers {
        durations.extend(t.complete_durations());
        censored_durations.extend(t.censored_durations());
        waits.extend(t.complete_waits().into_iter().filter(|&w| w > 0));
        censored_waits.extend(t.censored_waits());
    }
    let duration = fit_geometric_tail(&durations, &censored_durations)?;
    let wait = fit_geometric_tail(&waits, &censored_waits)?;
    Ok(ExcursionTails { duration, wait })
}
