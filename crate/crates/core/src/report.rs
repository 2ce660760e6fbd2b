//! Assembles analysis results into a single JSON report and exports the
//! bulk histograms as CSV.
//!
//! The report is one document with a fixed section layout: metadata first
//! (command, seeds, resolved configuration), then one section per family
//! of estimates. Sections that cannot be computed from the data at hand
//! are `null` and explain themselves through `notes`. Every estimate keeps
//! its sample size and either a standard error or a confidence interval;
//! the seeds that produced it are those in the metadata.

use std::io::{self, Write};

use serde::Serialize;

use crate::engine::{ExcursionTracker, RunSummary, Terminal};
use crate::error::Error;
use crate::stats::{
    DriftEstimate, ExcursionTails, IndependenceTest, MDistribution, OccupationSummary,
    ReturnTimeStats, StatsAccumulator,
};
use crate::xi::XiSpec;

/// Identifies the run that produced a report: the command, the seed and
/// the derived per-replica stream ids, and the fully resolved
/// configuration, so the numbers below are reproducible from this header
/// alone.
#[derive(Clone, Debug, Serialize)]
pub struct ReportMeta {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub stream_ids: Vec<u64>,
    pub replicas: u64,
    pub steps_per_replica: u64,
    pub x0: String,
    pub distribution: XiSpec,
    pub epsilon: f64,
    pub threshold_m: f64,
    pub bit_cap: u64,
    pub burn_in: u64,
    pub occupation_cutoff: u64,
    pub terminals: TerminalCounts,
}

/// How the replicas ended.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct TerminalCounts {
    pub completed: u64,
    pub overflowed: u64,
    pub absorbed_at_one: u64,
}

impl TerminalCounts {
    pub fn tally(summaries: &[RunSummary]) -> Self {
        let mut c = TerminalCounts::default();
        for s in summaries {
            match s.terminal {
                Terminal::Completed => c.completed += 1,
                Terminal::Overflowed => c.overflowed += 1,
                Terminal::AbsorbedAtOne => c.absorbed_at_one += 1,
            }
        }
        c
    }
}

/// Occupation section of the report. The full per-state histogram goes to
/// CSV; the report keeps the leading states (through 99) where both the
/// exact solver and the Monte Carlo estimate are sharp, plus the mass
/// beyond the cutoff.
#[derive(Clone, Debug, Serialize)]
pub struct OccupationReport {
    pub cutoff: u64,
    pub counted_steps: u64,
    pub above_cutoff: u64,
    pub overflow_mass: f64,
    pub head: Vec<StateFrequency>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StateFrequency {
    pub state: u64,
    pub count: u64,
    pub frequency: f64,
}

pub const OCCUPATION_HEAD_MAX: u64 = 99;

impl OccupationReport {
    pub fn from_summary(s: &OccupationSummary) -> Self {
        let head = (1..=s.cutoff.min(OCCUPATION_HEAD_MAX))
            .step_by(2)
            .map(|state| StateFrequency {
                state,
                count: s.count_of(state),
                frequency: s.frequency(state),
            })
            .collect();
        OccupationReport {
            cutoff: s.cutoff,
            counted_steps: s.counted_steps,
            above_cutoff: s.above_cutoff,
            overflow_mass: s.overflow_mass(),
            head,
        }
    }
}

/// Fraction of replicas that hit the absorbing state 1 before the step
/// horizon. Only an estimate of the absorption-by-horizon probability;
/// whether absorption is eventually certain is not decided here.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AbsorptionReport {
    pub replicas: u64,
    pub absorbed: u64,
    pub frequency: f64,
    pub stderr: f64,
    pub mean_steps_to_absorption: Option<f64>,
}

impl AbsorptionReport {
    pub fn from_summaries(summaries: &[RunSummary]) -> Self {
        let replicas = summaries.len() as u64;
        let absorbed_steps: Vec<u64> = summaries
            .iter()
            .filter(|s| s.terminal == Terminal::AbsorbedAtOne)
            .map(|s| s.steps)
            .collect();
        let absorbed = absorbed_steps.len() as u64;
        let p = absorbed as f64 / replicas as f64;
        AbsorptionReport {
            replicas,
            absorbed,
            frequency: p,
            stderr: (p * (1.0 - p) / replicas as f64).sqrt(),
            mean_steps_to_absorption: if absorbed > 0 {
                Some(absorbed_steps.iter().sum::<u64>() as f64 / absorbed as f64)
            } else {
                None
            },
        }
    }
}

/// The full analysis report. Section order is fixed so identical runs
/// serialize to identical bytes.
#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub meta: ReportMeta,
    pub m_distribution: Option<MDistribution>,
    pub drift: Option<DriftEstimate>,
    pub independence: Option<IndependenceTest>,
    pub returns: Option<ReturnTimeStats>,
    pub occupation: Option<OccupationReport>,
    pub tails: Option<ExcursionTails>,
    pub absorption: Option<AbsorptionReport>,
    pub notes: Vec<String>,
}

impl AnalysisReport {
    pub fn new(meta: ReportMeta) -> Self {
        AnalysisReport {
            meta,
            m_distribution: None,
            drift: None,
            independence: None,
            returns: None,
            occupation: None,
            tails: None,
            absorption: None,
            notes: Vec::new(),
        }
    }

    /// Fills every section the accumulator can support; a section whose
    /// preconditions fail stays `null` and the reason lands in `notes`.
    pub fn fill_from(&mut self, acc: &StatsAccumulator) {
        match acc.m_distribution() {
            Ok(v) => self.m_distribution = Some(v),
            Err(e) => self.note("m_distribution", &e),
        }
        match acc.drift_estimate() {
            Ok(v) => self.drift = Some(v),
            Err(e) => self.note("drift", &e),
        }
        match acc.m_independence() {
            Ok(v) => self.independence = Some(v),
            Err(e) => self.note("independence", &e),
        }
        match acc.return_time_stats() {
            Ok(v) => self.returns = Some(v),
            Err(e) => self.note("returns", &e),
        }
        match acc.occupation_frequencies() {
            Ok(v) => self.occupation = Some(OccupationReport::from_summary(&v)),
            Err(e) => self.note("occupation", &e),
        }
    }

    pub fn set_tails(&mut self, fit: Result<ExcursionTails, Error>) {
        match fit {
            Ok(v) => self.tails = Some(v),
            Err(e) => self.note("tails", &e),
        }
    }

    fn note(&mut self, section: &str, err: &Error) {
        self.notes.push(format!("{section}: {err}"));
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Return-gap histogram rows, ascending by gap.
pub fn write_return_histogram_csv<W: Write>(
    out: &mut W,
    stats: &ReturnTimeStats,
) -> io::Result<()> {
    writeln!(out, "gap,count")?;
    for (gap, count) in &stats.histogram {
        writeln!(out, "{gap},{count}")?;
    }
    Ok(())
}

/// Per-state occupation rows for every odd state up to the cutoff.
pub fn write_occupation_csv<W: Write>(
    out: &mut W,
    summary: &OccupationSummary,
) -> io::Result<()> {
    writeln!(out, "state,count,frequency")?;
    for state in (1..=summary.cutoff).step_by(2) {
        writeln!(
            out,
            "{state},{},{}",
            summary.count_of(state),
            summary.frequency(state)
        )?;
    }
    Ok(())
}

/// One row per excursion; an open excursion has an empty end and duration.
pub fn write_excursions_csv<W: Write>(
    out: &mut W,
    tracker: &ExcursionTracker,
) -> io::Result<()> {
    writeln!(out, "k,start,end,duration")?;
    for rec in tracker.records() {
        match rec.end {
            Some(end) => writeln!(out, "{},{},{},{}", rec.k, rec.start, end, end - rec.start)?,
            None => writeln!(out, "{},{},,", rec.k, rec.start)?,
        }
    }
    Ok(())
}
