//! The noise law of the randomized chain: a finite distribution over odd
//! integers `>= -1`, held as exact rationals.
//!
//! Probabilities given as `"p/q"` strings are kept exactly. Decimal input
//! is accepted when the probabilities sum to 1 within 1e-12 and is then
//! renormalized exactly (every f64 is itself a rational), so downstream
//! row sums in the exact solver stay exact either way.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::RngStream;

/// One support point with its exact probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub value: i64,
    pub prob: BigRational,
}

/// A validated finite noise law.
#[derive(Clone, Debug, PartialEq)]
pub struct XiDistribution {
    atoms: Vec<Atom>,
    sampler: Sampler,
}

/// Exact inverse-CDF tables: cumulative numerators over the atoms' common
/// denominator.
#[derive(Clone, Debug, PartialEq)]
enum Sampler {
    Small { cuts: Vec<u64>, denom: u64 },
    Big { cuts: Vec<BigUint>, denom: BigUint },
}

/// First invariant a candidate distribution violates.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Empty,
    EvenValue(i64),
    ValueBelowMinusOne(i64),
    DuplicateValue(i64),
    NonPositiveProb(i64),
    SumNotOne { sum: String },
    FloatSumOutOfTolerance { sum: f64 },
    BadProbString(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "distribution has no atoms"),
            Violation::EvenValue(v) => write!(f, "even value {v}"),
            Violation::ValueBelowMinusOne(v) => write!(f, "value {v} is < -1"),
            Violation::DuplicateValue(v) => write!(f, "duplicate value {v}"),
            Violation::NonPositiveProb(v) => write!(f, "non-positive probability at value {v}"),
            Violation::SumNotOne { sum } => write!(f, "probabilities sum to {sum}, not 1"),
            Violation::FloatSumOutOfTolerance { sum } => {
                write!(f, "probabilities sum to {sum}, more than 1e-12 from 1")
            }
            Violation::BadProbString(s) => write!(f, "cannot parse probability {s:?}"),
        }
    }
}

/// Raw, unvalidated distribution input (the JSON wire form).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct XiSpec {
    pub atoms: Vec<AtomSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomSpec {
    pub value: i64,
    pub prob: ProbSpec,
}

/// Probability as given: an exact fraction string or a decimal.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbSpec {
    Fraction(String),
    Decimal(f64),
}

pub(crate) fn parse_fraction(s: &str) -> Result<BigRational, Violation> {
    let bad = || Violation::BadProbString(s.to_string());
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(num, den))
}

/// Checks a raw spec against the distribution invariants and reports the
/// first one violated.
pub fn validate(spec: &XiSpec) -> Result<(), Violation> {
    resolve(spec).map(|_| ())
}

/// Validates and exactly normalizes a raw spec into atom list form.
fn resolve(spec: &XiSpec) -> Result<Vec<Atom>, Violation> {
    if spec.atoms.is_empty() {
        return Err(Violation::Empty);
    }
    let mut any_decimal = false;
    let mut atoms = Vec::with_capacity(spec.atoms.len());
    for a in &spec.atoms {
        if a.value < -1 {
            return Err(Violation::ValueBelowMinusOne(a.value));
        }
        if a.value.rem_euclid(2) == 0 {
            return Err(Violation::EvenValue(a.value));
        }
        let prob = match &a.prob {
            ProbSpec::Fraction(s) => parse_fraction(s)?,
            ProbSpec::Decimal(x) => {
                any_decimal = true;
                BigRational::from_f64(*x).ok_or(Violation::BadProbString(x.to_string()))?
            }
        };
        if !prob.is_positive() {
            return Err(Violation::NonPositiveProb(a.value));
        }
        atoms.push(Atom {
            value: a.value,
            prob,
        });
    }
    atoms.sort_by_key(|a| a.value);
    for w in atoms.windows(2) {
        if w[0].value == w[1].value {
            return Err(Violation::DuplicateValue(w[0].value));
        }
    }
    let sum: BigRational = atoms.iter().map(|a| a.prob.clone()).sum();
    if any_decimal {
        let s = sum.to_f64().unwrap_or(f64::NAN);
        if !((s - 1.0).abs() <= 1e-12) {
            return Err(Violation::FloatSumOutOfTolerance { sum: s });
        }
        // renormalize exactly by the rational sum
        for a in &mut atoms {
            a.prob = &a.prob / &sum;
        }
    } else if !sum.is_one() {
        return Err(Violation::SumNotOne {
            sum: sum.to_string(),
        });
    }
    Ok(atoms)
}

impl XiDistribution {
    pub fn from_spec(spec: &XiSpec) -> Result<Self, Error> {
        let atoms = resolve(spec).map_err(|v| Error::InvalidDistribution(v.to_string()))?;
        Ok(Self::from_atoms(atoms))
    }

    fn from_atoms(atoms: Vec<Atom>) -> Self {
        let sampler = Sampler::build(&atoms);
        XiDistribution { atoms, sampler }
    }

    fn uniform(values: &[i64]) -> Self {
        let n = BigInt::from(values.len());
        Self::from_atoms(
            values
                .iter()
                .map(|&value| Atom {
                    value,
                    prob: BigRational::new(BigInt::one(), n.clone()),
                })
                .collect(),
        )
    }

    /// The default law: uniform on {1, 3, 5, 7}.
    pub fn uniform_1357() -> Self {
        Self::uniform(&[1, 3, 5, 7])
    }

    /// Uniform on {-1, 1}; makes state 1 absorbing.
    pub fn pm1() -> Self {
        Self::uniform(&[-1, 1])
    }

    /// Uniform on {1, 3}.
    pub fn one_three() -> Self {
        Self::uniform(&[1, 3])
    }

    /// Uniform on {1, 3, 5}.
    pub fn one_three_five() -> Self {
        Self::uniform(&[1, 3, 5])
    }

    /// Resolves a preset name or inline JSON document.
    pub fn parse(input: &str) -> Result<Self, Error> {
        match input {
            "uniform1357" => return Ok(Self::uniform_1357()),
            "pm1" => return Ok(Self::pm1()),
            "oneThree" => return Ok(Self::one_three()),
            "oneThreeFive" => return Ok(Self::one_three_five()),
            _ => {}
        }
        if input.trim_start().starts_with('{') {
            let spec: XiSpec = serde_json::from_str(input)
                .map_err(|e| Error::Parse(format!("xi distribution JSON: {e}")))?;
            return Self::from_spec(&spec);
        }
        Err(Error::Parse(format!(
            "unknown xi distribution {input:?} (expected a preset name or inline JSON)"
        )))
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn support(&self) -> impl Iterator<Item = i64> + '_ {
        self.atoms.iter().map(|a| a.value)
    }

    pub fn prob_of(&self, value: i64) -> Option<&BigRational> {
        self.atoms
            .iter()
            .find(|a| a.value == value)
            .map(|a| &a.prob)
    }

    /// Largest support value; bounds the per-step growth factor.
    pub fn max_value(&self) -> i64 {
        self.atoms.last().map(|a| a.value).expect("non-empty")
    }

    pub fn mean(&self) -> BigRational {
        self.atoms
            .iter()
            .map(|a| &a.prob * BigRational::from(BigInt::from(a.value)))
            .sum()
    }

    /// Whether state 1 traps the chain: both 3+1 and 3-1 collapse back to 1,
    /// so any support inside {-1, 1} never leaves.
    pub fn absorbs_at_one(&self) -> bool {
        self.atoms.iter().all(|a| a.value == -1 || a.value == 1)
    }

    /// Draws one noise value; a pure function of the stream state.
    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> i64 {
        let idx = match &self.sampler {
            Sampler::Small { cuts, denom } => {
                let r = rng.next_below(*denom);
                cuts.iter().position(|c| r < *c).expect("cuts end at denom")
            }
            Sampler::Big { cuts, denom } => {
                let r = rng.next_biguint_below(denom);
                cuts.iter().position(|c| r < *c).expect("cuts end at denom")
            }
        };
        self.atoms[idx].value
    }

    /// The wire form with exact "p/q" probability strings.
    pub fn to_spec(&self) -> XiSpec {
        XiSpec {
            atoms: self
                .atoms
                .iter()
                .map(|a| AtomSpec {
                    value: a.value,
                    prob: ProbSpec::Fraction(format!("{}/{}", a.prob.numer(), a.prob.denom())),
                })
                .collect(),
        }
    }
}

impl Sampler {
    fn build(atoms: &[Atom]) -> Self {
        let mut denom = BigUint::one();
        for a in atoms {
            let d = a.prob.denom().magnitude();
            denom = denom.lcm(d);
        }
        let mut cuts = Vec::with_capacity(atoms.len());
        let mut acc = BigUint::zero();
        for a in atoms {
            let scaled = a.prob.numer().magnitude() * (&denom / a.prob.denom().magnitude());
            acc += scaled;
            cuts.push(acc.clone());
        }
        debug_assert_eq!(acc, denom, "normalized probabilities must sum to 1");
        match denom.to_u64() {
            Some(d) => Sampler::Small {
                cuts: cuts.iter().map(|c| c.to_u64().expect("<= denom")).collect(),
                denom: d,
            },
            None => Sampler::Big { cuts, denom },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frac(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn spec(entries: &[(i64, ProbSpec)]) -> XiSpec {
        XiSpec {
            atoms: entries
                .iter()
                .map(|(value, prob)| AtomSpec {
                    value: *value,
                    prob: prob.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn uniform_1357_is_the_quarter_law() {
        let d = XiDistribution::uniform_1357();
        assert_eq!(d.atoms().len(), 4);
        for (atom, want) in d.atoms().iter().zip([1i64, 3, 5, 7]) {
            assert_eq!(atom.value, want);
            assert_eq!(atom.prob, frac(1, 4));
        }
        assert_eq!(d.mean(), frac(4, 1));
        assert_eq!(d.max_value(), 7);
        assert!(!d.absorbs_at_one());
    }

    #[test]
    fn pm1_validates_and_absorbs() {
        let s = spec(&[
            (-1, ProbSpec::Fraction("1/2".into())),
            (1, ProbSpec::Fraction("1/2".into())),
        ]);
        assert_eq!(validate(&s), Ok(()));
        assert!(XiDistribution::pm1().absorbs_at_one());
        assert!(!XiDistribution::one_three().absorbs_at_one());
    }

    #[test]
    fn validate_reports_first_violation() {
        let s = spec(&[(2, ProbSpec::Fraction("1".into()))]);
        assert_eq!(validate(&s), Err(Violation::EvenValue(2)));

        let s = spec(&[
            (1, ProbSpec::Decimal(0.6)),
            (3, ProbSpec::Decimal(0.6)),
        ]);
        match validate(&s) {
            Err(Violation::FloatSumOutOfTolerance { sum }) => {
                assert!((sum - 1.2).abs() < 1e-9)
            }
            other => panic!("expected sum violation, got {other:?}"),
        }

        let s = spec(&[
            (1, ProbSpec::Fraction("1/2".into())),
            (3, ProbSpec::Fraction("1/3".into())),
        ]);
        assert!(matches!(validate(&s), Err(Violation::SumNotOne { .. })));

        let s = spec(&[(-3, ProbSpec::Fraction("1".into()))]);
        assert_eq!(validate(&s), Err(Violation::ValueBelowMinusOne(-3)));

        let s = spec(&[
            (1, ProbSpec::Fraction("1/2".into())),
            (1, ProbSpec::Fraction("1/2".into())),
        ]);
        assert_eq!(validate(&s), Err(Violation::DuplicateValue(1)));
    }

    #[test]
    fn decimal_input_renormalizes_exactly() {
        let s = spec(&[
            (1, ProbSpec::Decimal(0.25)),
            (3, ProbSpec::Decimal(0.25)),
            (5, ProbSpec::Decimal(0.25)),
            (7, ProbSpec::Decimal(0.25)),
        ]);
        let d = XiDistribution::from_spec(&s).unwrap();
        let total: BigRational = d.atoms().iter().map(|a| a.prob.clone()).sum();
        assert!(total.is_one());
        assert_eq!(d.atoms()[0].prob, frac(1, 4));
    }

    #[test]
    fn parse_presets_and_json() {
        assert_eq!(
            XiDistribution::parse("uniform1357").unwrap(),
            XiDistribution::uniform_1357()
        );
        assert_eq!(XiDistribution::parse("pm1").unwrap(), XiDistribution::pm1());
        assert_eq!(
            XiDistribution::parse("oneThree").unwrap().atoms().len(),
            2
        );
        assert_eq!(
            XiDistribution::parse("oneThreeFive").unwrap().atoms()[0].prob,
            frac(1, 3)
        );

        let d = XiDistribution::parse(
            r#"{"atoms":[{"value":1,"prob":"1/2"},{"value":-1,"prob":0.5}]}"#,
        )
        .unwrap();
        assert!(d.absorbs_at_one());

        assert!(XiDistribution::parse(r#"{"atoms":[{"value":2,"prob":1.0}]}"#).is_err());
        assert!(XiDistribution::parse("nonsense").is_err());
    }

    #[test]
    fn degenerate_sampling_is_constant() {
        let d = XiDistribution::parse(r#"{"atoms":[{"value":1,"prob":"1"}]}"#).unwrap();
        let mut rng = RngStream::new(0, 0);
        for _ in 0..100 {
            assert_eq!(d.sample(&mut rng), 1);
        }
    }

    #[test]
    fn sampling_replays_bit_identically() {
        let d = XiDistribution::uniform_1357();
        let mut a = RngStream::new(42, 3);
        let mut b = RngStream::new(42, 3);
        let xs: Vec<i64> = (0..2000).map(|_| d.sample(&mut a)).collect();
        let ys: Vec<i64> = (0..2000).map(|_| d.sample(&mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn sample_frequencies_converge() {
        // binomial 3 sigma at 10^6 draws is ~0.0013; 0.002 leaves headroom
        let d = XiDistribution::uniform_1357();
        let mut rng = RngStream::new(42, 0);
        let n = 1_000_000;
        let mut counts = [0u64; 4];
        for _ in 0..n {
            let v = d.sample(&mut rng);
            counts[(v as usize - 1) / 2] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.25).abs() < 0.002, "freq {f}");
        }
    }

    #[test]
    fn induced_mod8_law_is_uniform_on_even_classes() {
        // For the default law and any odd x, (3x + xi) mod 8 puts mass 1/4
        // on each of 0, 2, 4, 6, exactly, by enumerating the four atoms.
        let d = XiDistribution::uniform_1357();
        for x in [1u64, 3, 5, 7, 9, 1001, 99_999] {
            let mut mass = std::collections::BTreeMap::new();
            for atom in d.atoms() {
                let class = (3 * x as i64 + atom.value).rem_euclid(8);
                *mass.entry(class).or_insert_with(BigRational::zero) += atom.prob.clone();
            }
            assert_eq!(mass.len(), 4);
            for k in [0, 2, 4, 6] {
                assert_eq!(mass[&k], frac(1, 4), "x = {x}, class {k}");
            }
        }
    }

    #[test]
    fn big_denominator_sampler_path() {
        // denominators around 2^52 force the big-integer sampler
        let third = 1.0 / 3.0;
        let s = spec(&[
            (1, ProbSpec::Decimal(third)),
            (3, ProbSpec::Decimal(third)),
            (5, ProbSpec::Decimal(third)),
        ]);
        let d = XiDistribution::from_spec(&s).unwrap();
        let total: BigRational = d.atoms().iter().map(|a| a.prob.clone()).sum();
        assert!(total.is_one());
        let mut rng = RngStream::new(11, 0);
        let mut counts = [0u64; 3];
        for _ in 0..30_000 {
            counts[(d.sample(&mut rng) as usize - 1) / 2] += 1;
        }
        for c in counts {
            assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.02);
        }
    }
}
