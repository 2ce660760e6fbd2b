//! `collatz stationary`: exact stationary vector of the cutoff-truncated
//! chain, with optional table export and a Monte Carlo cross-check.
//!
//! Outputs: `pi.csv` (state, pi), `stationary_meta.json` (cutoff, tol,
//! iterations, overflow mass, residual, return-time bounds for state 1,
//! cross-check distance), `table.csv` on request.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use collatz_core::engine::{run_randomized, ChainConfig};
use collatz_core::exact::{
    expected_return_time, stationary, write_stationary_csv, write_table_csv, ReturnTimeBounds,
    StationaryResult, TransitionTable,
};
use collatz_core::stats::{AccumulatorConfig, StatsAccumulator, DEFAULT_BURN_IN};
use collatz_core::{Error, OddInt, RngStream};

use crate::manifest::{write_json, ManifestBuilder};
use crate::{parse_dist, CliError, StationaryArgs};

#[derive(Serialize)]
struct StationaryMeta {
    cutoff: u64,
    tol: f64,
    iterations: u64,
    overflow_mass: f64,
    residual: f64,
    return_time_state_1: Option<ReturnTimeBounds>,
    notes: Vec<String>,
    cross_check: Option<CrossCheck>,
}

/// Agreement between the exact vector and a fresh simulation: the
/// total-variation distance over odd states up to `compare_cutoff`.
#[derive(Serialize)]
struct CrossCheck {
    steps: u64,
    seed: u64,
    burn_in: u64,
    compare_cutoff: u64,
    tv_distance: f64,
}

pub fn run(out: &Path, args: &StationaryArgs) -> Result<(), CliError> {
    let dist = parse_dist(&args.xi)?;
    if args.cross_check && args.compare_cutoff > args.cutoff {
        return Err(CliError::Usage(format!(
            "--compare-cutoff {} exceeds --cutoff {}",
            args.compare_cutoff, args.cutoff
        )));
    }

    let mut manifest = ManifestBuilder::new("stationary", args);
    manifest.resolve("distribution", dist.to_spec());

    let table = TransitionTable::build(&dist, args.cutoff)?;
    if args.export_table {
        let mut w = BufWriter::new(File::create(out.join("table.csv"))?);
        write_table_csv(&table, &mut w)?;
        drop(w);
        manifest.record(out, "table.csv")?;
    }

    let result = match stationary(&table, args.tol, args.max_iters) {
        Ok(r) => r,
        Err(Error::BudgetExceeded { what, residual }) => {
            manifest.diagnostic("residual", residual);
            manifest.diagnostic("iterations", args.max_iters);
            manifest.write(out)?;
            return Err(CliError::NonConvergence(format!(
                "{what}: residual {residual:e} after {} iterations",
                args.max_iters
            )));
        }
        Err(e) => return Err(e.into()),
    };

    let mut w = BufWriter::new(File::create(out.join("pi.csv"))?);
    write_stationary_csv(&result, &mut w)?;
    drop(w);
    manifest.record(out, "pi.csv")?;

    let mut notes = Vec::new();
    let return_time_state_1 = match expected_return_time(&table, 1) {
        Ok(b) => Some(b),
        Err(e) => {
            notes.push(format!("return_time_state_1: {e}"));
            None
        }
    };

    let cross_check = if args.cross_check {
        manifest.seed(args.seed, [0]);
        Some(cross_check(&result, &dist, args)?)
    } else {
        None
    };

    let meta = StationaryMeta {
        cutoff: result.cutoff,
        tol: result.tol,
        iterations: result.iterations,
        overflow_mass: result.overflow_mass,
        residual: result.residual,
        return_time_state_1,
        notes,
        cross_check,
    };
    write_json(out, "stationary_meta.json", &meta)?;
    manifest.record(out, "stationary_meta.json")?;

    manifest.diagnostic("iterations", result.iterations);
    manifest.diagnostic("residual", result.residual);
    manifest.diagnostic("overflow_mass", result.overflow_mass);
    manifest.write(out)?;
    Ok(())
}

fn cross_check(
    exact: &StationaryResult,
    dist: &collatz_core::XiDistribution,
    args: &StationaryArgs,
) -> Result<CrossCheck, CliError> {
    let cfg = ChainConfig {
        max_steps: args.steps,
        ..ChainConfig::new(OddInt::one(), dist.clone())
    };
    cfg.validate().map_err(CliError::from)?;
    let mut acc = StatsAccumulator::new(AccumulatorConfig {
        occupation_cutoff: args.cutoff,
        burn_in: DEFAULT_BURN_IN,
    })?;
    let mut rng = RngStream::new(args.seed, 0);
    run_randomized(&cfg, &mut rng, &mut [&mut acc])?;
    let occ = acc.occupation_frequencies()?;

    let mut abs_sum = 0.0;
    for state in (1..=args.compare_cutoff).step_by(2) {
        abs_sum += (exact.pi_of(state) - occ.frequency(state)).abs();
    }
    Ok(CrossCheck {
        steps: args.steps,
        seed: args.seed,
        burn_in: DEFAULT_BURN_IN,
        compare_cutoff: args.compare_cutoff,
        tv_distance: 0.5 * abs_sum,
    })
}
