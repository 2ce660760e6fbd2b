//! `collatz simulate`: R seeded replicas of the randomized chain, merged
//! into one analysis report.
//!
//! Outputs: `report.json` always; `occupation.csv` and
//! `returns_histogram.csv` when those sections have data; one
//! `trajectory_<stream>.csv` per replica on request.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use collatz_core::engine::{
    par_map_replicas, run_randomized, ChainConfig, ExcursionTracker, RunSummary, StepSink,
    Terminal, TrajectoryCsvSink,
};
use collatz_core::report::{
    write_occupation_csv, write_return_histogram_csv, AbsorptionReport, AnalysisReport,
    ReportMeta, TerminalCounts,
};
use collatz_core::stats::{
    fit_pooled_excursion_tails, AccumulatorConfig, StatsAccumulator,
};
use collatz_core::RngStream;

use crate::manifest::ManifestBuilder;
use crate::{parse_dist, parse_odd, CliError, SimulateArgs};

pub fn run(out: &Path, args: &SimulateArgs) -> Result<(), CliError> {
    let x0 = parse_odd(&args.x0)?;
    let dist = parse_dist(&args.xi)?;
    if args.replicas == 0 {
        return Err(CliError::Usage("--replicas must be at least 1".into()));
    }

    let acc_cfg = AccumulatorConfig {
        occupation_cutoff: args.cutoff,
        burn_in: args.burn_in,
    };
    acc_cfg.validate().map_err(CliError::from)?;

    let stop_on_absorb = dist.absorbs_at_one();
    let cfg = ChainConfig {
        max_steps: args.steps,
        bit_cap: args.bit_cap,
        threshold_m: args.threshold_m,
        epsilon: args.epsilon,
        stop_on_absorb,
        ..ChainConfig::new(x0, dist.clone())
    };
    cfg.validate().map_err(CliError::from)?;

    let mut manifest = ManifestBuilder::new("simulate", args);
    manifest.seed(args.seed, 0..args.replicas);
    manifest.resolve("distribution", dist.to_spec());
    manifest.resolve("stop_on_absorb", stop_on_absorb);

    type Replica = (StatsAccumulator, ExcursionTracker, RunSummary);
    let results: Vec<Result<Replica, CliError>> =
        par_map_replicas(args.replicas, |stream| {
            let mut rng = RngStream::new(args.seed, stream);
            let mut acc = StatsAccumulator::new(acc_cfg.clone())?;
            let mut tracker = ExcursionTracker::new(cfg.threshold_m);
            let mut trajectory = if args.trajectory {
                let file = File::create(out.join(format!("trajectory_{stream}.csv")))?;
                Some(TrajectoryCsvSink::new(BufWriter::new(file)))
            } else {
                None
            };
            let summary = {
                let mut sinks: Vec<&mut dyn StepSink> = vec![&mut acc, &mut tracker];
                if let Some(t) = trajectory.as_mut() {
                    sinks.push(t);
                }
                run_randomized(&cfg, &mut rng, &mut sinks)?
            };
            if let Some(t) = trajectory {
                t.finish()?;
            }
            Ok((acc, tracker, summary))
        });

    let mut merged: Option<StatsAccumulator> = None;
    let mut trackers = Vec::with_capacity(results.len());
    let mut summaries = Vec::with_capacity(results.len());
    for result in results {
        let (acc, tracker, summary) = result?;
        match merged.as_mut() {
            None => merged = Some(acc),
            Some(m) => m.merge(&acc)?,
        }
        trackers.push(tracker);
        summaries.push(summary);
    }
    let merged = merged.expect("at least one replica");

    let meta = ReportMeta {
        command: "simulate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: args.seed,
        stream_ids: (0..args.replicas).collect(),
        replicas: args.replicas,
        steps_per_replica: args.steps,
        x0: cfg.x0.to_string(),
        distribution: dist.to_spec(),
        epsilon: args.epsilon,
        threshold_m: args.threshold_m,
        bit_cap: args.bit_cap,
        burn_in: args.burn_in,
        occupation_cutoff: args.cutoff,
        terminals: TerminalCounts::tally(&summaries),
    };
    let mut report = AnalysisReport::new(meta);
    report.fill_from(&merged);
    report.set_tails(fit_pooled_excursion_tails(&trackers));
    if stop_on_absorb {
        report.absorption = Some(AbsorptionReport::from_summaries(&summaries));
    }

    fs::write(out.join("report.json"), report.to_json())?;
    manifest.record(out, "report.json")?;

    if let Ok(occ) = merged.occupation_frequencies() {
        let mut w = BufWriter::new(File::create(out.join("occupation.csv"))?);
        write_occupation_csv(&mut w, &occ)?;
        drop(w);
        manifest.record(out, "occupation.csv")?;
    }
    if let Ok(returns) = merged.return_time_stats() {
        let mut w = BufWriter::new(File::create(out.join("returns_histogram.csv"))?);
        write_return_histogram_csv(&mut w, &returns)?;
        drop(w);
        manifest.record(out, "returns_histogram.csv")?;
    }
    if args.trajectory {
        for stream in 0..args.replicas {
            manifest.record(out, &format!("trajectory_{stream}.csv"))?;
        }
    }

    let overflowed: Vec<u64> = summaries
        .iter()
        .enumerate()
        .filter(|(_, s)| s.terminal == Terminal::Overflowed)
        .map(|(i, _)| i as u64)
        .collect();
    manifest.diagnostic("overflowed_replicas", &overflowed);
    manifest.write(out)?;
    Ok(())
}
