//! Constructive reachability: an explicit positive-probability path from
//! state 1 to any odd target, built by walking predecessors downward.
//!
//! Every odd m >= 3 falls in exactly one residue class mod 6, and each
//! class names a smaller odd p with 3p + xi = 2m for a noise value in
//! {1, 3, 5}: m = 6k+3 comes from (4k+1, 3), m = 6k+5 from (4k+3, 1), and
//! m = 6k+7 from (4k+3, 5). The forward step then divides by exactly 2, so
//! the replayed path climbs strictly from 1 to m, one halving per step.

use std::io;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde_json::json;

use crate::arith::{step, OddInt};
use crate::error::Error;
use crate::xi::XiDistribution;

/// The unique predecessor used by the construction: `Some((p, xi))` with
/// 3p + xi = 2m, p odd, p < m; `None` for m = 1, which needs no step.
pub fn predecessor(m: &OddInt) -> Option<(OddInt, i64)> {
    if m.is_one() {
        return None;
    }
    let class = (m.value() % 6u32).to_u64().expect("residue fits");
    let xi: i64 = match class {
        3 => 3,
        5 => 1,
        1 => 5,
        _ => unreachable!("odd numbers are 1, 3, or 5 mod 6"),
    };
    let p = ((m.value() << 1u32) - xi as u32) / 3u32;
    Some((OddInt::new(p).expect("predecessor is odd"), xi))
}

/// A replayable path from 1 to `target`: each entry is the source state
/// and the noise value applied there; `probability` is the path weight
/// under the uniform {1,3,5,7} law, (1/4) per step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathCertificate {
    pub target: OddInt,
    pub steps: Vec<(OddInt, i64)>,
    pub probability: BigRational,
}

/// Builds the certificate tail-first (from the target down to 1), then
/// reverses. Terminates because every predecessor is strictly smaller.
pub fn path_from_one(target: &OddInt) -> PathCertificate {
    let mut steps: Vec<(OddInt, i64)> = Vec::new();
    let mut cur = target.clone();
    while let Some((p, xi)) = predecessor(&cur) {
        steps.push((p.clone(), xi));
        cur = p;
    }
    steps.reverse();
    let probability = BigRational::new(BigInt::one(), BigInt::from(4).pow(steps.len() as u32));
    PathCertificate {
        target: target.clone(),
        steps,
        probability,
    }
}

/// Why a certificate failed. `index` is the offending step for replay
/// failures, or `steps.len()` for whole-certificate failures (wrong final
/// state or probability).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificateFailure {
    pub index: usize,
    pub reason: String,
}

impl std::fmt::Display for CertificateFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step {}: {}", self.index, self.reason)
    }
}

/// Replays the whole certificate through the forward step map and checks
/// every structural invariant; the first violated one is returned.
pub fn verify_certificate(cert: &PathCertificate) -> Result<(), CertificateFailure> {
    let fail = |index: usize, reason: &str| {
        Err(CertificateFailure {
            index,
            reason: reason.to_string(),
        })
    };
    if cert.steps.is_empty() {
        if !cert.target.is_one() {
            return fail(0, "an empty path certifies only target 1");
        }
        if !cert.probability.is_one() {
            return fail(0, "an empty path has probability 1");
        }
        return Ok(());
    }
    if !cert.steps[0].0.is_one() {
        return fail(0, "path must start at state 1");
    }
    let mut expected: Option<OddInt> = None;
    for (i, (state, xi)) in cert.steps.iter().enumerate() {
        if let Some(prev_next) = &expected {
            if state != prev_next {
                return fail(i, "state does not continue the previous step");
            }
        }
        if ![1, 3, 5].contains(xi) {
            return fail(i, "noise value outside {1, 3, 5}");
        }
        let out = match step(state, *xi) {
            Ok(out) => out,
            Err(_) => return fail(i, "step does not apply"),
        };
        if out.d != 1 {
            return fail(i, "constructed step must divide by exactly 2");
        }
        if &out.x_next <= state {
            return fail(i, "states must strictly increase");
        }
        expected = Some(out.x_next);
    }
    let last = expected.expect("non-empty path");
    if last != cert.target {
        return fail(cert.steps.len(), "replay does not end at the target");
    }
    let quarter_weight =
        BigRational::new(BigInt::one(), BigInt::from(4).pow(cert.steps.len() as u32));
    if cert.probability != quarter_weight {
        return fail(cert.steps.len(), "probability is not (1/4) per step");
    }
    Ok(())
}

/// Path weight under an arbitrary noise law: the product of the atoms'
/// probabilities along the path. Errors when the law lacks a needed value
/// (the construction only exists for supports containing {1, 3, 5}).
pub fn certificate_probability(
    cert: &PathCertificate,
    dist: &XiDistribution,
) -> Result<BigRational, Error> {
    let mut prob = BigRational::one();
    for (i, (_, xi)) in cert.steps.iter().enumerate() {
        match dist.prob_of(*xi) {
            Some(p) => prob *= p.clone(),
            None => {
                return Err(Error::UnsupportedXi(format!(
                    "step {i} needs noise {xi}, which this distribution never emits"
                )))
            }
        }
    }
    Ok(prob)
}

pub fn certificate_to_json(cert: &PathCertificate) -> serde_json::Value {
    json!({
        "target": cert.target.to_string(),
        "steps": cert
            .steps
            .iter()
            .map(|(state, xi)| json!({ "state": state.to_string(), "xi": xi }))
            .collect::<Vec<_>>(),
        "prob": format!("{}/{}", cert.probability.numer(), cert.probability.denom()),
    })
}

pub fn certificate_from_json(value: &serde_json::Value) -> Result<PathCertificate, Error> {
    let bad = |what: &str| Error::Parse(format!("certificate JSON: {what}"));
    let target: OddInt = value
        .get("target")
        .and_then(|t| t.as_str())
        .ok_or_else(|| bad("missing target"))?
        .parse()
        .map_err(|e| Error::Parse(format!("certificate target: {e}")))?;
    let steps_json = value
        .get("steps")
        .and_then(|s| s.as_array())
        .ok_or_else(|| bad("missing steps array"))?;
    let mut steps = Vec::with_capacity(steps_json.len());
    for entry in steps_json {
        let state: OddInt = entry
            .get("state")
            .and_then(|s| s.as_str())
            .ok_or_else(|| bad("step missing state"))?
            .parse()
            .map_err(|e| Error::Parse(format!("certificate state: {e}")))?;
        let xi = entry
            .get("xi")
            .and_then(|x| x.as_i64())
            .ok_or_else(|| bad("step missing xi"))?;
        steps.push((state, xi));
    }
    let probability = crate::xi::parse_fraction(
        value
            .get("prob")
            .and_then(|p| p.as_str())
            .ok_or_else(|| bad("missing prob"))?,
    )
    .map_err(|v| Error::Parse(format!("certificate prob: {v}")))?;
    Ok(PathCertificate {
        target,
        steps,
        probability,
    })
}

/// Batch construction and self-check over many targets:
/// `m,path_len,prob_num,prob_den,ok` per row. Returns whether every
/// certificate verified.
pub fn write_batch_csv<W: io::Write>(
    targets: impl IntoIterator<Item = OddInt>,
    mut out: W,
) -> io::Result<bool> {
    writeln!(out, "m,path_len,prob_num,prob_den,ok")?;
    let mut all_ok = true;
    for m in targets {
        let cert = path_from_one(&m);
        let ok = verify_certificate(&cert).is_ok();
        all_ok &= ok;
        writeln!(
            out,
            "{},{},{},{},{}",
            m,
            cert.steps.len(),
            cert.probability.numer(),
            cert.probability.denom(),
            ok
        )?;
    }
    Ok(all_ok)
}
