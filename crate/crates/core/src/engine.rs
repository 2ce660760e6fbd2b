//! Trajectory runners and per-step observers.
//!
//! A run applies the step map up to `max_steps` times, pushing each
//! transition to every attached [`StepSink`] in order. Full trajectories are
//! materialized only by the opt-in [`TrajectoryRecorder`]; long runs stream
//! through constant-memory sinks instead. A state whose bit length passes
//! `bit_cap` ends the replica with a distinct overflow outcome rather than
//! an error, and the cap is recorded in the summary.

use std::collections::{HashMap, VecDeque};
use std::io;

use num_bigint::BigUint;

use crate::arith::{OddInt, StepOutcome};
use crate::error::Error;
use crate::rng::RngStream;
use crate::xi::XiDistribution;

pub const LN_3: f64 = 1.0986122886681098;

/// Upper end of the admissible epsilon range: (7/4) ln 2 - ln 3. The mean
/// log-step is the negative of this, so any epsilon below it leaves the
/// drift above the threshold strictly negative.
pub const EPSILON_MAX: f64 = 1.75 * std::f64::consts::LN_2 - LN_3;

pub const DEFAULT_EPSILON: f64 = 0.1;

/// ln 23, the smallest convenient threshold compatible with epsilon = 1/10.
pub const DEFAULT_THRESHOLD: f64 = 3.1354942159291497;

pub const DEFAULT_BIT_CAP: u64 = 4096;

/// Parameters of one randomized run.
#[derive(Clone, Debug)]
pub struct ChainConfig {
    pub x0: OddInt,
    pub dist: XiDistribution,
    pub max_steps: u64,
    /// Replica aborts with `Terminal::Overflowed` once the state exceeds
    /// this many bits.
    pub bit_cap: u64,
    /// Excursion threshold M on the ln scale.
    pub threshold_m: f64,
    pub epsilon: f64,
    /// Stop early once the state hits 1, provided the distribution actually
    /// makes 1 absorbing; otherwise ignored.
    pub stop_on_absorb: bool,
}

impl ChainConfig {
    pub fn new(x0: OddInt, dist: XiDistribution) -> Self {
        ChainConfig {
            x0,
            dist,
            max_steps: 1_000_000,
            bit_cap: DEFAULT_BIT_CAP,
            threshold_m: DEFAULT_THRESHOLD,
            epsilon: DEFAULT_EPSILON,
            stop_on_absorb: false,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.epsilon > 0.0 && self.epsilon < EPSILON_MAX) {
            return Err(Error::Config(format!(
                "epsilon {} outside (0, {EPSILON_MAX})",
                self.epsilon
            )));
        }
        if !(self.threshold_m > 1.0) {
            return Err(Error::Config(format!(
                "threshold M {} must exceed 1",
                self.threshold_m
            )));
        }
        if self.bit_cap == 0 {
            return Err(Error::Config("bit_cap must be positive".into()));
        }
        Ok(())
    }
}

/// How a replica ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terminal {
    /// Ran the full step budget.
    Completed,
    /// State bit length exceeded the cap.
    Overflowed,
    /// Stopped at the absorbing state 1.
    AbsorbedAtOne,
}

/// One transition, as delivered to sinks. Indices are 1-based: the event
/// with `index = n` carries X_n and Y_n.
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub index: u64,
    pub xi: i64,
    pub d: u64,
    pub m: u8,
    pub y_prev: f64,
    pub y_next: f64,
    pub x_next: &'a OddInt,
}

/// Streaming consumer of a single replica's transitions, invoked in step
/// order.
pub trait StepSink {
    fn on_start(&mut self, _x0: &OddInt, _y0: f64) {}
    fn on_step(&mut self, _ev: &StepEvent<'_>) {}
    fn on_finish(&mut self, _terminal: Terminal, _steps: u64) {}
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub terminal: Terminal,
    pub final_state: OddInt,
    pub final_y: f64,
    pub peak_bits: u64,
}

/// Runs one randomized replica, delivering every transition to every sink.
pub fn run_randomized(
    cfg: &ChainConfig,
    rng: &mut RngStream,
    sinks: &mut [&mut dyn StepSink],
) -> Result<RunSummary, Error> {
    cfg.validate()?;
    let absorbing = cfg.stop_on_absorb && cfg.dist.absorbs_at_one();
    let mut x = cfg.x0.clone();
    let mut y = x.ln();
    let mut peak_bits = x.bits();
    for s in sinks.iter_mut() {
        s.on_start(&cfg.x0, y);
    }
    let mut steps = 0u64;
    let mut terminal = Terminal::Completed;
    if x.bits() > cfg.bit_cap {
        terminal = Terminal::Overflowed;
    } else {
        while steps < cfg.max_steps {
            if absorbing && x.is_one() {
                terminal = Terminal::AbsorbedAtOne;
                break;
            }
            let xi = cfg.dist.sample(rng);
            let y_prev = y;
            let (d, m) = x.apply_step(xi)?;
            steps += 1;
            y = x.ln();
            let bits = x.bits();
            peak_bits = peak_bits.max(bits);
            let ev = StepEvent {
                index: steps,
                xi,
                d,
                m,
                y_prev,
                y_next: y,
                x_next: &x,
            };
            for s in sinks.iter_mut() {
                s.on_step(&ev);
            }
            if bits > cfg.bit_cap {
                terminal = Terminal::Overflowed;
                break;
            }
        }
        if terminal == Terminal::Completed && absorbing && x.is_one() {
            terminal = Terminal::AbsorbedAtOne;
        }
    }
    for s in sinks.iter_mut() {
        s.on_finish(terminal, steps);
    }
    Ok(RunSummary {
        steps,
        terminal,
        final_state: x,
        final_y: y,
        peak_bits,
    })
}

/// Runs `replicas` independent jobs in parallel, one RNG stream id each,
/// collecting results in replica order regardless of scheduling.
pub fn par_map_replicas<T, F>(replicas: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..replicas).into_par_iter().map(f).collect()
}

/// An eventually periodic tail: x_{n+b} = x_n for all n >= n_0, b minimal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CycleReport {
    pub preperiod: u64,
    pub period: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassicalOutcome {
    CycleFound,
    /// Budget exhausted with no repeat: undecided within budget.
    Undecided,
    Overflowed,
}

#[derive(Clone, Debug)]
pub struct ClassicalRun {
    pub x0: OddInt,
    pub outcome: ClassicalOutcome,
    pub steps_taken: u64,
    /// First index n with x_n = 1, if seen.
    pub steps_to_one: Option<u64>,
    pub cycle: Option<CycleReport>,
    pub peak_bits: u64,
}

/// Iterates the deterministic accelerated map x -> (3x+1)/2^v2(3x+1) and
/// detects eventual periodicity by exact first-visit bookkeeping, which
/// yields both the minimal period and the preperiod (a cycle-only detector
/// such as Floyd's would not).
pub fn run_classical(x0: &OddInt, max_steps: u64, bit_cap: u64) -> Result<ClassicalRun, Error> {
    let mut first_visit: HashMap<OddInt, u64> = HashMap::new();
    let mut x = x0.clone();
    let mut peak_bits = x.bits();
    let mut steps_to_one = None;
    let mut cycle = None;
    let mut outcome = ClassicalOutcome::Undecided;
    let mut n = 0u64;
    loop {
        if x.is_one() && steps_to_one.is_none() {
            steps_to_one = Some(n);
        }
        if let Some(&seen) = first_visit.get(&x) {
            cycle = Some(CycleReport {
                preperiod: seen,
                period: n - seen,
            });
            outcome = ClassicalOutcome::CycleFound;
            break;
        }
        if x.bits() > bit_cap {
            outcome = ClassicalOutcome::Overflowed;
            break;
        }
        if n >= max_steps {
            break;
        }
        first_visit.insert(x.clone(), n);
        x.apply_step(1)?;
        n += 1;
        peak_bits = peak_bits.max(x.bits());
    }
    Ok(ClassicalRun {
        x0: x0.clone(),
        outcome,
        steps_taken: n,
        steps_to_one,
        cycle,
        peak_bits,
    })
}

/// Maximal excursion of Y = ln X above the threshold M: entered at N_k,
/// left at D_k, still open at stream end when `end` is None.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExcursionRecord {
    pub k: u64,
    pub start: u64,
    pub end: Option<u64>,
}

impl ExcursionRecord {
    /// D_k - N_k for closed excursions.
    pub fn duration(&self) -> Option<u64> {
        self.end.map(|e| e - self.start)
    }
}

/// Tracks the alternating stopping times N_1 <= D_1 < N_2 < D_2 < ... of
/// the log-trajectory around M, including the convention N_1 = 0 when the
/// run already starts at or above the threshold.
#[derive(Clone, Debug)]
pub struct ExcursionTracker {
    threshold: f64,
    above: bool,
    last_descent: u64,
    total_steps: u64,
    records: Vec<ExcursionRecord>,
    waits: Vec<u64>,
    censored_wait: Option<u64>,
}

impl ExcursionTracker {
    pub fn new(threshold: f64) -> Self {
        ExcursionTracker {
            threshold,
            above: false,
            last_descent: 0,
            total_steps: 0,
            records: Vec::new(),
            waits: Vec::new(),
            censored_wait: None,
        }
    }

    pub fn records(&self) -> &[ExcursionRecord] {
        &self.records
    }

    /// Closed excursion lengths D_k - N_k.
    pub fn complete_durations(&self) -> Vec<u64> {
        self.records.iter().filter_map(|r| r.duration()).collect()
    }

    /// Elapsed length of an excursion still open at stream end; the true
    /// duration exceeds this.
    pub fn censored_durations(&self) -> Vec<u64> {
        self.records
            .iter()
            .filter(|r| r.end.is_none())
            .map(|r| self.total_steps - r.start)
            .collect()
    }

    /// Completed inter-ascent waits N_k - D_{k-1}, with D_0 = 0 so the first
    /// entry is N_1 itself.
    pub fn complete_waits(&self) -> Vec<u64> {
        self.waits.clone()
    }

    /// Time spent below M at stream end without a further ascent; the next
    /// wait exceeds this.
    pub fn censored_waits(&self) -> Vec<u64> {
        self.censored_wait.into_iter().collect()
    }
}

impl StepSink for ExcursionTracker {
    fn on_start(&mut self, _x0: &OddInt, y0: f64) {
        if y0 >= self.threshold {
            self.above = true;
            self.waits.push(0);
            self.records.push(ExcursionRecord {
                k: 1,
                start: 0,
                end: None,
            });
        }
    }

    fn on_step(&mut self, ev: &StepEvent<'_>) {
        if self.above {
            if ev.y_next < self.threshold {
                self.above = false;
                self.last_descent = ev.index;
                self.records.last_mut().expect("open record").end = Some(ev.index);
            }
        } else if ev.y_next >= self.threshold {
            self.above = true;
            self.waits.push(ev.index - self.last_descent);
            self.records.push(ExcursionRecord {
                k: self.records.len() as u64 + 1,
                start: ev.index,
                end: None,
            });
        }
    }

    fn on_finish(&mut self, _terminal: Terminal, steps: u64) {
        self.total_steps = steps;
        if !self.above && steps > self.last_descent {
            self.censored_wait = Some(steps - self.last_descent);
        }
    }
}

/// Per-step envelope checks along a replica.
///
/// Writing b for the largest noise value and c = b/3, every step satisfies
/// the exact sandwich 1 <= X_n <= (3/2^m)(1 + c/X_{n-1}) X_{n-1}, whose log
/// form is Y_n <= Y_{n-1} + ln(1 + c e^{-Y_{n-1}}) + ln 3 - m ln 2. Above
/// the threshold that relaxes to the epsilon form (when ln(1 + c e^{-M})
/// <= epsilon, which the defaults satisfy); below it the crude bound
/// Y_n <= Y_{n-1} + ln((3+b)/2) applies, ln 5 for b = 7.
#[derive(Clone, Debug)]
pub struct BoundChecker {
    b_max: i64,
    epsilon: f64,
    threshold: f64,
    /// Whether ln(1 + c e^{-M}) <= epsilon, the premise of the epsilon form.
    epsilon_form_applies: bool,
    tol: f64,
    prev_x: Option<OddInt>,
    pub steps_checked: u64,
    pub sandwich_violations: u64,
    pub log_form_violations: u64,
    pub above_threshold_violations: u64,
    pub below_threshold_violations: u64,
}

impl BoundChecker {
    pub fn new(b_max: i64, epsilon: f64, threshold: f64) -> Self {
        let c = b_max as f64 / 3.0;
        BoundChecker {
            b_max,
            epsilon,
            threshold,
            epsilon_form_applies: (1.0 + c * (-threshold).exp()).ln() <= epsilon + 1e-15,
            tol: 1e-9,
            prev_x: None,
            steps_checked: 0,
            sandwich_violations: 0,
            log_form_violations: 0,
            above_threshold_violations: 0,
            below_threshold_violations: 0,
        }
    }

    pub fn for_dist(dist: &XiDistribution, epsilon: f64, threshold: f64) -> Self {
        Self::new(dist.max_value(), epsilon, threshold)
    }

    pub fn total_violations(&self) -> u64 {
        self.sandwich_violations
            + self.log_form_violations
            + self.above_threshold_violations
            + self.below_threshold_violations
    }

    /// Whether the relaxed epsilon form is in force above the threshold.
    pub fn epsilon_form_applies(&self) -> bool {
        self.epsilon_form_applies
    }
}

impl StepSink for BoundChecker {
    fn on_start(&mut self, x0: &OddInt, _y0: f64) {
        self.prev_x = Some(x0.clone());
    }

    fn on_step(&mut self, ev: &StepEvent<'_>) {
        let prev = self.prev_x.as_ref().expect("on_start precedes on_step");
        self.steps_checked += 1;

        // exact integer form: 2^m X_n <= 3 X_{n-1} + b
        let lhs: BigUint = ev.x_next.value() << ev.m as u64;
        let triple = prev.value() * 3u32;
        let rhs = if self.b_max >= 0 {
            triple + self.b_max as u64
        } else {
            triple - self.b_max.unsigned_abs()
        };
        if lhs > rhs {
            self.sandwich_violations += 1;
        }

        let c = self.b_max as f64 / 3.0;
        let log_cap =
            ev.y_prev + (1.0 + c * (-ev.y_prev).exp()).ln() + LN_3 - ev.m as f64 * std::f64::consts::LN_2;
        if ev.y_next > log_cap + self.tol || ev.y_next < -self.tol {
            self.log_form_violations += 1;
        }

        if ev.y_prev >= self.threshold {
            if self.epsilon_form_applies {
                let cap = ev.y_prev + self.epsilon + LN_3 - ev.m as f64 * std::f64::consts::LN_2;
                if ev.y_next > cap + self.tol {
                    self.above_threshold_violations += 1;
                }
            }
        } else {
            let cap = ev.y_prev + ((3.0 + self.b_max as f64) / 2.0).ln();
            if ev.y_next > cap + self.tol {
                self.below_threshold_violations += 1;
            }
        }

        self.prev_x = Some(ev.x_next.clone());
    }
}

/// Checks the compounding of minimal-division steps: any window of k
/// consecutive steps that all have m = 1 and noise >= 1 must multiply the
/// state by strictly more than (3/2)^k. Compared exactly in integers as
/// 2^k X_{n+k} > 3^k X_n.
#[derive(Clone, Debug)]
pub struct GrowthChecker {
    k: usize,
    three_k: BigUint,
    states: VecDeque<OddInt>,
    flags: VecDeque<bool>,
    pub windows_checked: u64,
    pub violations: u64,
}

impl GrowthChecker {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1);
        GrowthChecker {
            k,
            three_k: BigUint::from(3u32).pow(k as u32),
            states: VecDeque::with_capacity(k + 1),
            flags: VecDeque::with_capacity(k),
            windows_checked: 0,
            violations: 0,
        }
    }
}

impl StepSink for GrowthChecker {
    fn on_start(&mut self, x0: &OddInt, _y0: f64) {
        self.states.push_back(x0.clone());
    }

    fn on_step(&mut self, ev: &StepEvent<'_>) {
        self.states.push_back(ev.x_next.clone());
        self.flags.push_back(ev.m == 1 && ev.xi >= 1);
        if self.states.len() > self.k + 1 {
            self.states.pop_front();
        }
        if self.flags.len() > self.k {
            self.flags.pop_front();
        }
        if self.flags.len() == self.k && self.flags.iter().all(|&f| f) {
            self.windows_checked += 1;
            let newest = self.states.back().expect("non-empty").value();
            let oldest = self.states.front().expect("non-empty").value();
            if (newest << self.k as u64) <= &self.three_k * oldest {
                self.violations += 1;
            }
        }
    }
}

/// Materializes the full path; opt-in because long runs are meant to stream.
#[derive(Clone, Debug, Default)]
pub struct TrajectoryRecorder {
    pub x0: Option<OddInt>,
    pub steps: Vec<StepOutcome>,
    pub terminal: Option<Terminal>,
}

impl TrajectoryRecorder {
    pub fn new() -> Self {
        Self::default()
    }
}

impl StepSink for TrajectoryRecorder {
    fn on_start(&mut self, x0: &OddInt, _y0: f64) {
        self.x0 = Some(x0.clone());
    }

    fn on_step(&mut self, ev: &StepEvent<'_>) {
        self.steps.push(StepOutcome {
            xi: ev.xi,
            d: ev.d,
            m: ev.m,
            x_next: ev.x_next.clone(),
        });
    }

    fn on_finish(&mut self, terminal: Terminal, _steps: u64) {
        self.terminal = Some(terminal);
    }
}

/// Streams steps as CSV rows `step,xi,d,m,x_next,y_next`. IO failures are
/// held until `finish()` so the sink interface stays infallible.
pub struct TrajectoryCsvSink<W: io::Write> {
    out: W,
    err: Option<io::Error>,
}

impl<W: io::Write> TrajectoryCsvSink<W> {
    pub fn new(mut out: W) -> Self {
        let err = writeln!(out, "step,xi,d,m,x_next,y_next").err();
        TrajectoryCsvSink { out, err }
    }

    pub fn finish(mut self) -> io::Result<()> {
        if let Some(e) = self.err.take() {
            return Err(e);
        }
        self.out.flush()
    }
}

impl<W: io::Write> StepSink for TrajectoryCsvSink<W> {
    fn on_step(&mut self, ev: &StepEvent<'_>) {
        if self.err.is_some() {
            return;
        }
        self.err = writeln!(
            self.out,
            "{},{},{},{},{},{}",
            ev.index, ev.xi, ev.d, ev.m, ev.x_next, ev.y_next
        )
        .err();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(x0: u64, dist: XiDistribution, max_steps: u64) -> ChainConfig {
        let mut c = ChainConfig::new(OddInt::from_u64(x0).unwrap(), dist);
        c.max_steps = max_steps;
        c
    }

    fn record_run(c: &ChainConfig, seed: u64, stream: u64) -> (TrajectoryRecorder, RunSummary) {
        let mut rec = TrajectoryRecorder::new();
        let mut rng = RngStream::new(seed, stream);
        let summary = run_randomized(c, &mut rng, &mut [&mut rec]).unwrap();
        (rec, summary)
    }

    #[test]
    fn config_validation() {
        let d = XiDistribution::uniform_1357();
        let c = cfg(1, d.clone(), 10);
        assert!(c.validate().is_ok());
        assert!(EPSILON_MAX > 0.1143 && EPSILON_MAX < 0.1145);

        let mut bad = c.clone();
        bad.epsilon = EPSILON_MAX;
        assert!(bad.validate().is_err());
        bad.epsilon = 0.0;
        assert!(bad.validate().is_err());

        let mut bad = c.clone();
        bad.threshold_m = 1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identical_seed_and_stream_replay_bit_exactly() {
        let c = cfg(1, XiDistribution::uniform_1357(), 10);
        let (a, sa) = record_run(&c, 12345, 2);
        let (b, sb) = record_run(&c, 12345, 2);
        assert_eq!(a.steps, b.steps);
        assert_eq!(sa, sb);
        assert_eq!(a.steps.len(), 10);
        assert_eq!(sa.terminal, Terminal::Completed);

        let (c2, _) = record_run(&c, 12345, 3);
        assert_ne!(a.steps, c2.steps);
    }

    #[test]
    fn degenerate_noise_pins_the_chain_at_one() {
        let d = XiDistribution::parse(r#"{"atoms":[{"value":1,"prob":"1"}]}"#).unwrap();
        let (rec, s) = record_run(&cfg(1, d, 100), 0, 0);
        assert_eq!(s.steps, 100);
        assert!(rec.steps.iter().all(|o| o.x_next.is_one()));
        assert!(rec.steps.iter().all(|o| o.d == 2 && o.m == 2));
    }

    #[test]
    fn absorbing_noise_keeps_state_one_forever() {
        let (rec, _) = record_run(&cfg(5, XiDistribution::pm1(), 10_000), 7, 0);
        let first = rec.steps.iter().position(|o| o.x_next.is_one());
        let first = first.expect("pm1 run from 5 should hit 1");
        assert!(rec.steps[first..].iter().all(|o| o.x_next.is_one()));
    }

    #[test]
    fn stop_on_absorb_cuts_the_run_short() {
        let mut c = cfg(5, XiDistribution::pm1(), 10_000);
        c.stop_on_absorb = true;
        let (_, s) = record_run(&c, 7, 0);
        assert_eq!(s.terminal, Terminal::AbsorbedAtOne);
        assert!(s.steps < 10_000);
        assert!(s.final_state.is_one());

        // not absorbing under the default law: flag is ignored
        let mut c = cfg(1, XiDistribution::uniform_1357(), 50);
        c.stop_on_absorb = true;
        let (_, s) = record_run(&c, 7, 0);
        assert_eq!(s.terminal, Terminal::Completed);
        assert_eq!(s.steps, 50);
    }

    #[test]
    fn overflow_is_a_terminal_not_an_error() {
        // degenerate xi=7 from 15 with a 4-bit cap: 15 -> 13 -> 23 (5 bits)
        let d = XiDistribution::parse(r#"{"atoms":[{"value":7,"prob":"1"}]}"#).unwrap();
        let mut c = cfg(15, d, 1000);
        c.bit_cap = 4;
        let (rec, s) = record_run(&c, 0, 0);
        assert_eq!(s.terminal, Terminal::Overflowed);
        assert_eq!(s.steps, 2);
        assert_eq!(rec.steps.last().unwrap().x_next, OddInt::from_u64(23).unwrap());
        assert_eq!(s.peak_bits, 5);
    }

    #[test]
    fn classical_orbit_of_seven() {
        let run = run_classical(&OddInt::from_u64(7).unwrap(), 100, 4096).unwrap();
        assert_eq!(run.outcome, ClassicalOutcome::CycleFound);
        assert_eq!(run.steps_to_one, Some(5));
        assert_eq!(
            run.cycle,
            Some(CycleReport {
                preperiod: 5,
                period: 1
            })
        );
        assert_eq!(run.peak_bits, 5); // peak state 17
    }

    #[test]
    fn classical_one_is_the_trivial_cycle() {
        let run = run_classical(&OddInt::one(), 10, 4096).unwrap();
        assert_eq!(run.steps_to_one, Some(0));
        assert_eq!(
            run.cycle,
            Some(CycleReport {
                preperiod: 0,
                period: 1
            })
        );
    }

    #[test]
    fn classical_27_reaches_one() {
        let run = run_classical(&OddInt::from_u64(27).unwrap(), 200, 4096).unwrap();
        assert_eq!(run.outcome, ClassicalOutcome::CycleFound);
        assert_eq!(run.steps_to_one, Some(41));
    }

    #[test]
    fn classical_budget_exhaustion_is_undecided() {
        let run = run_classical(&OddInt::from_u64(27).unwrap(), 5, 4096).unwrap();
        assert_eq!(run.outcome, ClassicalOutcome::Undecided);
        assert_eq!(run.steps_taken, 5);
        assert_eq!(run.steps_to_one, None);
        assert!(run.cycle.is_none());
    }

    fn feed_tracker(y0: f64, ys: &[f64], m: f64) -> ExcursionTracker {
        let mut t = ExcursionTracker::new(m);
        let one = OddInt::one();
        t.on_start(&one, y0);
        let mut y_prev = y0;
        for (i, &y) in ys.iter().enumerate() {
            t.on_step(&StepEvent {
                index: i as u64 + 1,
                xi: 1,
                d: 1,
                m: 1,
                y_prev,
                y_next: y,
                x_next: &one,
            });
            y_prev = y;
        }
        t.on_finish(Terminal::Completed, ys.len() as u64);
        t
    }

    #[test]
    fn excursions_on_a_synthetic_path() {
        let t = feed_tracker(0.5, &[1.2, 1.5, 0.8, 1.1, 0.2], 1.0);
        assert_eq!(
            t.records(),
            &[
                ExcursionRecord {
                    k: 1,
                    start: 1,
                    end: Some(3)
                },
                ExcursionRecord {
                    k: 2,
                    start: 4,
                    end: Some(5)
                },
            ]
        );
        assert_eq!(t.complete_durations(), vec![2, 1]);
        assert_eq!(t.complete_waits(), vec![1, 1]);
        assert!(t.censored_durations().is_empty());
        // stream ended right at a descent: no time below M has elapsed
        assert_eq!(t.censored_waits(), Vec::<u64>::new());
    }

    #[test]
    fn excursion_starting_above_threshold_has_n1_zero() {
        let t = feed_tracker(2.0, &[1.5, 0.5], 1.0);
        assert_eq!(
            t.records(),
            &[ExcursionRecord {
                k: 1,
                start: 0,
                end: Some(2)
            }]
        );
        assert_eq!(t.complete_waits(), vec![0]);
    }

    #[test]
    fn trajectory_below_threshold_yields_nothing() {
        let t = feed_tracker(0.1, &[0.3, 0.2, 0.4], 1.0);
        assert!(t.records().is_empty());
        assert!(t.complete_waits().is_empty());
        // no ascent in 3 steps: the first wait is right-censored at 3
        assert_eq!(t.censored_waits(), vec![3]);
    }

    #[test]
    fn open_excursion_is_reported_censored() {
        let t = feed_tracker(0.5, &[1.2, 1.5, 1.7], 1.0);
        assert_eq!(
            t.records(),
            &[ExcursionRecord {
                k: 1,
                start: 1,
                end: None
            }]
        );
        assert_eq!(t.complete_durations(), Vec::<u64>::new());
        assert_eq!(t.censored_durations(), vec![2]);
    }

    #[test]
    fn bounds_and_growth_hold_along_a_real_run() {
        let c = cfg(1, XiDistribution::uniform_1357(), 100_000);
        let mut bounds = BoundChecker::for_dist(&c.dist, c.epsilon, c.threshold_m);
        assert!(bounds.epsilon_form_applies);
        let mut growth = GrowthChecker::new(5);
        let mut rng = RngStream::new(99, 0);
        run_randomized(&c, &mut rng, &mut [&mut bounds, &mut growth]).unwrap();
        assert_eq!(bounds.steps_checked, 100_000);
        assert_eq!(bounds.total_violations(), 0);
        assert!(growth.windows_checked > 500, "got {}", growth.windows_checked);
        assert_eq!(growth.violations, 0);
    }

    #[test]
    fn growth_checker_skips_windows_with_larger_m() {
        let mut g = GrowthChecker::new(2);
        let x = |v| OddInt::from_u64(v).unwrap();
        g.on_start(&x(9), 0.0);
        // 9 -> (3*9+1)/4 = 7 has m=2: window containing it is not checked
        let s1 = x(7);
        g.on_step(&StepEvent {
            index: 1,
            xi: 1,
            d: 2,
            m: 2,
            y_prev: 0.0,
            y_next: 0.0,
            x_next: &s1,
        });
        let s2 = x(11);
        g.on_step(&StepEvent {
            index: 2,
            xi: 1,
            d: 1,
            m: 1,
            y_prev: 0.0,
            y_next: 0.0,
            x_next: &s2,
        });
        assert_eq!(g.windows_checked, 0);
        let s3 = x(17);
        g.on_step(&StepEvent {
            index: 3,
            xi: 1,
            d: 1,
            m: 1,
            y_prev: 0.0,
            y_next: 0.0,
            x_next: &s3,
        });
        let s4 = x(27);
        g.on_step(&StepEvent {
            index: 4,
            xi: 3,
            d: 1,
            m: 1,
            y_prev: 0.0,
            y_next: 0.0,
            x_next: &s4,
        });
        // windows (2,3) and (3,4) are all-m=1; both must pass exactly
        assert_eq!(g.windows_checked, 2);
        assert_eq!(g.violations, 0);
    }

    #[test]
    fn csv_sink_formats_rows() {
        let mut buf = Vec::new();
        {
            let mut sink = TrajectoryCsvSink::new(&mut buf);
            let c = cfg(7, XiDistribution::uniform_1357(), 3);
            let mut rng = RngStream::new(1, 0);
            run_randomized(&c, &mut rng, &mut [&mut sink]).unwrap();
            sink.finish().unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.trim_end().lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "step,xi,d,m,x_next,y_next");
        assert!(lines[1].starts_with("1,"));
    }
}
