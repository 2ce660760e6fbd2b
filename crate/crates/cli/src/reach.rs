//! `collatz reach`: constructive reachability certificates from state 1.
//!
//! Single target: `certificate.json` with the step list and exact path
//! probability. Range: `certificates.csv` with one verified row per odd
//! target. Any certificate failing its replay check exits with code 4.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use collatz_core::reach::{
    certificate_to_json, path_from_one, verify_certificate, write_batch_csv,
};
use collatz_core::OddInt;

use crate::manifest::{write_json, ManifestBuilder};
use crate::{odd_values, parse_odd, parse_range, CliError, ReachArgs};

pub fn run(out: &Path, args: &ReachArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("reach", args);
    match (&args.m, &args.range) {
        (Some(m), None) => {
            let target = parse_odd(m)?;
            let cert = path_from_one(&target);
            if let Err(failure) = verify_certificate(&cert) {
                manifest.diagnostic("verified", false);
                manifest.write(out)?;
                return Err(CliError::Verification(format!(
                    "certificate for {target}: {failure}"
                )));
            }
            write_json(out, "certificate.json", &certificate_to_json(&cert))?;
            manifest.record(out, "certificate.json")?;
            manifest.diagnostic("path_len", cert.steps.len() as u64);
            manifest.diagnostic("verified", true);
        }
        (None, Some(range)) => {
            let (lo, hi) = parse_range(range)?;
            let targets = odd_values(lo, hi)
                .map(|v| OddInt::from_u64(v).expect("odd by construction"));
            let mut w = BufWriter::new(File::create(out.join("certificates.csv"))?);
            let all_ok = write_batch_csv(targets, &mut w)?;
            w.into_inner().map_err(|e| e.into_error())?.flush()?;
            manifest.record(out, "certificates.csv")?;
            manifest.diagnostic("targets", odd_values(lo, hi).count() as u64);
            manifest.diagnostic("verified", all_ok);
            if !all_ok {
                manifest.write(out)?;
                return Err(CliError::Verification(format!(
                    "some certificate in {lo}..{hi} failed its replay check"
                )));
            }
        }
        _ => unreachable!("clap enforces exactly one of --m/--range"),
    }
    manifest.write(out)?;
    Ok(())
}
