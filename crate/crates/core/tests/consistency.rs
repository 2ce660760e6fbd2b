//! Cross-module agreement: the Monte Carlo estimators, the exact
//! truncated-chain solver, and the closed-form constants must describe
//! the same chain. Each check pits two independent routes against each
//! other; none of them shares code with the thing it checks.

use collatz_core::engine::{run_randomized, ChainConfig};
use collatz_core::exact::{expected_return_time, stationary, TransitionTable};
use collatz_core::stats::{AccumulatorConfig, StatsAccumulator};
use collatz_core::{OddInt, RngStream, XiDistribution};

const LN_3: f64 = 1.0986122886681098;

fn ten_million_step_accumulator() -> StatsAccumulator {
    let dist = XiDistribution::uniform_1357();
    let cfg = ChainConfig {
        max_steps: 10_000_000,
        ..ChainConfig::new(OddInt::one(), dist)
    };
    let mut acc = StatsAccumulator::new(AccumulatorConfig::default()).unwrap();
    let mut rng = RngStream::new(1234, 0);
    run_randomized(&cfg, &mut rng, &mut [&mut acc]).unwrap();
    acc
}

#[test]
fn exact_and_simulated_views_of_the_chain_agree() {
    let acc = ten_million_step_accumulator();
    let table = TransitionTable::build(&XiDistribution::uniform_1357(), 9999).unwrap();
    let pi = stationary(&table, 1e-12, 1_000_000).unwrap();

    // stationary mass at 1: power iteration vs occupation frequency
    let occ = acc.occupation_frequencies().unwrap();
    let diff = (pi.pi_of(1) - occ.frequency(1)).abs();
    assert!(
        diff < 0.01,
        "pi(1) exact {} vs simulated {}",
        pi.pi_of(1),
        occ.frequency(1)
    );

    // mean return time to 1: first-step equations vs observed gaps, and
    // both against Kac's identity 1/pi(1)
    let returns = acc.return_time_stats().unwrap();
    let bounds = expected_return_time(&table, 1).unwrap();
    assert!(
        bounds.lower <= returns.mean * 1.02,
        "exact lower bound {} above observed mean {}",
        bounds.lower,
        returns.mean
    );
    let kac_mean = 1.0 / pi.pi_of(1);
    assert!(
        (returns.mean - kac_mean).abs() / kac_mean < 0.1,
        "observed mean return {} vs 1/pi(1) = {kac_mean}",
        returns.mean
    );
    assert!(
        (bounds.lower - kac_mean).abs() / kac_mean < 0.1,
        "exact lower bound {} vs 1/pi(1) = {kac_mean}",
        bounds.lower
    );
}

#[test]
fn drift_decomposes_through_the_m_law() {
    // the drift estimator must equal ln 3 - ln 2 * E_hat[m] exactly, with
    // E_hat[m] recovered from the reported m frequencies
    let acc = ten_million_step_accumulator();
    let m = acc.m_distribution().unwrap();
    let drift = acc.drift_estimate().unwrap();

    let mean_m_from_law: f64 = m
        .probs
        .iter()
        .zip([1.0f64, 2.0, 3.0])
        .map(|(&p, v)| p * v)
        .sum();
    assert!((drift.mean_m - mean_m_from_law).abs() < 1e-12);
    let recomposed = LN_3 - std::f64::consts::LN_2 * mean_m_from_law;
    assert!(
        (drift.mean - recomposed).abs() < 1e-12,
        "drift {} vs recomposed {recomposed}",
        drift.mean
    );
}
