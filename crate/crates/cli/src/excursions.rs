//! `collatz excursions`: threshold crossings of Y = ln X with geometric
//! tail fits, plus the inline per-step bound suite.
//!
//! Outputs: one `excursions_<stream>.csv` per replica (k, start, end,
//! duration) and `tails.json` with the pooled duration and wait fits, the
//! bound-check counters, and any notices. Zero completed excursions is
//! not an error: the tables stay empty and a notice explains why.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use collatz_core::engine::{
    par_map_replicas, run_randomized, BoundChecker, ChainConfig, ExcursionTracker,
    GrowthChecker, RunSummary, StepSink,
};
use collatz_core::report::write_excursions_csv;
use collatz_core::stats::{fit_pooled_excursion_tails, ExcursionTails};
use collatz_core::RngStream;

use crate::manifest::{write_json, ManifestBuilder};
use crate::{parse_dist, parse_odd, CliError, ExcursionsArgs};

/// Violation counters summed over the replicas. `total_violations` adds
/// every row, growth included; the acceptance gate is that it stays 0.
#[derive(Serialize)]
struct BoundsSummary {
    steps_checked: u64,
    epsilon_form_applies: bool,
    sandwich_violations: u64,
    log_form_violations: u64,
    above_threshold_violations: u64,
    below_threshold_violations: u64,
    growth_window: usize,
    growth_windows_checked: u64,
    growth_violations: u64,
    total_violations: u64,
}

#[derive(Serialize)]
struct TailsDocument {
    threshold_m: f64,
    epsilon: f64,
    replicas: u64,
    steps_per_replica: u64,
    complete_excursions: u64,
    censored_excursions: u64,
    tails: Option<ExcursionTails>,
    bounds: BoundsSummary,
    notes: Vec<String>,
}

pub fn run(out: &Path, args: &ExcursionsArgs) -> Result<(), CliError> {
    let x0 = parse_odd(&args.x0)?;
    let dist = parse_dist(&args.xi)?;
    if args.replicas == 0 {
        return Err(CliError::Usage("--replicas must be at least 1".into()));
    }
    if args.growth_window == 0 {
        return Err(CliError::Usage("--growth-window must be at least 1".into()));
    }

    let cfg = ChainConfig {
        max_steps: args.steps,
        bit_cap: args.bit_cap,
        threshold_m: args.threshold_m,
        epsilon: args.epsilon,
        ..ChainConfig::new(x0, dist.clone())
    };
    cfg.validate().map_err(CliError::from)?;

    let mut manifest = ManifestBuilder::new("excursions", args);
    manifest.seed(args.seed, 0..args.replicas);
    manifest.resolve("distribution", dist.to_spec());

    type Replica = (ExcursionTracker, BoundChecker, GrowthChecker, RunSummary);
    let results: Vec<Result<Replica, CliError>> =
        par_map_replicas(args.replicas, |stream| {
            let mut rng = RngStream::new(args.seed, stream);
            let mut tracker = ExcursionTracker::new(cfg.threshold_m);
            let mut bounds = BoundChecker::for_dist(&dist, cfg.epsilon, cfg.threshold_m);
            let mut growth = GrowthChecker::new(args.growth_window);
            let summary = {
                let mut sinks: Vec<&mut dyn StepSink> =
                    vec![&mut tracker, &mut bounds, &mut growth];
                run_randomized(&cfg, &mut rng, &mut sinks)?
            };
            Ok((tracker, bounds, growth, summary))
        });

    let mut trackers = Vec::with_capacity(results.len());
    let mut summary_bounds: Option<BoundsSummary> = None;
    for result in results {
        let (tracker, bounds, growth, _summary) = result?;
        let acc = summary_bounds.get_or_insert(BoundsSummary {
            steps_checked: 0,
            epsilon_form_applies: bounds.epsilon_form_applies(),
            sandwich_violations: 0,
            log_form_violations: 0,
            above_threshold_violations: 0,
            below_threshold_violations: 0,
            growth_window: args.growth_window,
            growth_windows_checked: 0,
            growth_violations: 0,
            total_violations: 0,
        });
        acc.steps_checked += bounds.steps_checked;
        acc.sandwich_violations += bounds.sandwich_violations;
        acc.log_form_violations += bounds.log_form_violations;
        acc.above_threshold_violations += bounds.above_threshold_violations;
        acc.below_threshold_violations += bounds.below_threshold_violations;
        acc.growth_windows_checked += growth.windows_checked;
        acc.growth_violations += growth.violations;
        acc.total_violations += bounds.total_violations() + growth.violations;
        trackers.push(tracker);
    }
    let bounds = summary_bounds.expect("at least one replica");

    for (stream, tracker) in trackers.iter().enumerate() {
        let name = format!("excursions_{stream}.csv");
        let mut w = BufWriter::new(File::create(out.join(&name))?);
        write_excursions_csv(&mut w, tracker)?;
        drop(w);
        manifest.record(out, &name)?;
    }

    let mut notes = Vec::new();
    let complete: u64 = trackers
        .iter()
        .map(|t| t.complete_durations().len() as u64)
        .sum();
    let censored: u64 = trackers
        .iter()
        .map(|t| t.censored_durations().len() as u64)
        .sum();
    let tails = match fit_pooled_excursion_tails(&trackers) {
        Ok(t) => Some(t),
        Err(e) => {
            eprintln!("notice: no tail fit: {e}");
            notes.push(format!("tails: {e}"));
            None
        }
    };

    let doc = TailsDocument {
        threshold_m: args.threshold_m,
        epsilon: args.epsilon,
        replicas: args.replicas,
        steps_per_replica: args.steps,
        complete_excursions: complete,
        censored_excursions: censored,
        tails,
        bounds,
        notes,
    };
    write_json(out, "tails.json", &doc)?;
    manifest.record(out, "tails.json")?;

    manifest.diagnostic("complete_excursions", complete);
    manifest.diagnostic("censored_excursions", censored);
    manifest.write(out)?;
    Ok(())
}
