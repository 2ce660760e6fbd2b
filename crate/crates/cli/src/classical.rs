//! `collatz classical`: deterministic 3x+1 odd-step iteration over one
//! start or every odd start in a range, one CSV row per start.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use collatz_core::engine::{run_classical, ClassicalOutcome, ClassicalRun};
use collatz_core::OddInt;

use crate::manifest::ManifestBuilder;
use crate::{odd_values, parse_odd, parse_range, ClassicalArgs, CliError};

pub fn run(out: &Path, args: &ClassicalArgs) -> Result<(), CliError> {
    let targets: Vec<OddInt> = match (&args.x0, &args.range) {
        (Some(x0), None) => vec![parse_odd(x0)?],
        (None, Some(range)) => {
            let (lo, hi) = parse_range(range)?;
            odd_values(lo, hi)
                .map(|v| OddInt::from_u64(v).expect("odd by construction"))
                .collect()
        }
        _ => unreachable!("clap enforces exactly one of --x0/--range"),
    };

    let mut manifest = ManifestBuilder::new("classical", args);

    let runs = targets
        .par_iter()
        .map(|x0| run_classical(x0, args.max_steps, args.bit_cap))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::from)?;

    let mut w = BufWriter::new(File::create(out.join("classical.csv"))?);
    writeln!(w, "x0,steps_to_1_or_cycle,b,n_0,peak_bits")?;
    let mut reached_one = 0u64;
    let mut cycled_elsewhere = 0u64;
    let mut undecided = 0u64;
    let mut overflowed = 0u64;
    for run in &runs {
        writeln!(w, "{}", row(run))?;
        match run.outcome {
            ClassicalOutcome::CycleFound if run.steps_to_one.is_some() => reached_one += 1,
            ClassicalOutcome::CycleFound => cycled_elsewhere += 1,
            ClassicalOutcome::Undecided => undecided += 1,
            ClassicalOutcome::Overflowed => overflowed += 1,
        }
    }
    w.into_inner().map_err(|e| e.into_error())?.flush()?;

    manifest.record(out, "classical.csv")?;
    manifest.diagnostic("starts", runs.len() as u64);
    manifest.diagnostic("reached_one", reached_one);
    manifest.diagnostic("cycled_elsewhere", cycled_elsewhere);
    manifest.diagnostic("undecided", undecided);
    manifest.diagnostic("overflowed", overflowed);
    manifest.write(out)?;
    Ok(())
}

fn row(run: &ClassicalRun) -> String {
    match run.outcome {
        ClassicalOutcome::CycleFound => {
            let cycle = run.cycle.as_ref().expect("cycle present when found");
            let steps = run
                .steps_to_one
                .unwrap_or(cycle.preperiod + cycle.period);
            format!(
                "{},{},{},{},{}",
                run.x0, steps, cycle.period, cycle.preperiod, run.peak_bits
            )
        }
        ClassicalOutcome::Undecided => {
            format!("{},undecided,,,{}", run.x0, run.peak_bits)
        }
        ClassicalOutcome::Overflowed => {
            format!("{},overflow,,,{}", run.x0, run.peak_bits)
        }
    }
}
