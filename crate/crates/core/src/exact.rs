//! Exact finite analysis of the chain truncated to odd states `<= cutoff`:
//! transition rows in rational arithmetic, quasi-stationary distribution of
//! the truncation, bounds on the expected return time to a target state,
//! and breadth-first reachability for arbitrary noise supports.
//!
//! Truncation policy, stated once: transitions leaving the range land in a
//! single OVERFLOW sink that exists only to be reported. `stationary`
//! conditions on staying in range and publishes the per-sweep escaping
//! mass; `expected_return_time` instead brackets the infinite-chain truth
//! from below by letting overflow return to the target in one step.

use std::collections::BTreeMap;
use std::io;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use crate::arith::{step, OddInt};
use crate::error::Error;
use serde::Serialize;
use crate::xi::XiDistribution;

/// A transition destination: an in-range odd state or the overflow sink.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    State(u64),
    Overflow,
}

/// One-step law of every odd state up to the cutoff, rows exactly
/// stochastic. Distinct noise values landing on the same target are merged
/// at build time, so rows are canonical: sorted, duplicate-free.
#[derive(Clone, Debug)]
pub struct TransitionTable {
    cutoff: u64,
    rows: Vec<Vec<(Target, BigRational)>>,
}

fn state_index(state: u64) -> usize {
    ((state - 1) / 2) as usize
}

impl TransitionTable {
    pub fn build(dist: &XiDistribution, cutoff: u64) -> Result<Self, Error> {
        if cutoff % 2 == 0 || cutoff == 0 {
            return Err(Error::Config(format!("cutoff {cutoff} must be odd and >= 1")));
        }
        let n = state_index(cutoff) + 1;
        let rows = (0..n)
            .into_par_iter()
            .map(|i| build_row(dist, 2 * i as u64 + 1, cutoff))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TransitionTable { cutoff, rows })
    }

    pub fn cutoff(&self) -> u64 {
        self.cutoff
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn states(&self) -> impl Iterator<Item = u64> {
        (0..self.rows.len() as u64).map(|i| 2 * i + 1)
    }

    pub fn row(&self, state: u64) -> &[(Target, BigRational)] {
        &self.rows[state_index(state)]
    }

    pub fn row_sum(&self, state: u64) -> BigRational {
        self.row(state).iter().map(|(_, p)| p.clone()).sum()
    }

    pub fn overflow_prob(&self, state: u64) -> BigRational {
        self.row(state)
            .iter()
            .find(|(t, _)| *t == Target::Overflow)
            .map(|(_, p)| p.clone())
            .unwrap_or_else(BigRational::zero)
    }
}

fn build_row(
    dist: &XiDistribution,
    state: u64,
    cutoff: u64,
) -> Result<Vec<(Target, BigRational)>, Error> {
    let x = OddInt::from_u64(state)?;
    let mut acc: BTreeMap<Target, BigRational> = BTreeMap::new();
    for atom in dist.atoms() {
        let out = step(&x, atom.value)?;
        let target = match out.x_next.to_u64() {
            Some(s) if s <= cutoff => Target::State(s),
            _ => Target::Overflow,
        };
        *acc.entry(target).or_insert_with(BigRational::zero) += atom.prob.clone();
    }
    Ok(acc.into_iter().collect())
}

/// Exact distribution of m = min(3, d) out of one state: (P(d=1), P(d=2),
/// P(d>=3)) as rationals summing to 1.
pub fn row_m_marginal(dist: &XiDistribution, state: u64) -> Result<[BigRational; 3], Error> {
    let x = OddInt::from_u64(state)?;
    let mut marginal = [
        BigRational::zero(),
        BigRational::zero(),
        BigRational::zero(),
    ];
    for atom in dist.atoms() {
        let out = step(&x, atom.value)?;
        marginal[(out.m - 1) as usize] += atom.prob.clone();
    }
    Ok(marginal)
}

/// Quasi-stationary distribution of the truncated chain.
///
/// `pi` is the sub-distribution actually held in range: the conditioned
/// fixed point scaled by the mass that survives one unconditioned sweep,
/// so that sum(pi) + overflow_mass = 1. `conditional_pi_of` recovers the
/// renormalized in-range view (for cutoff 1 it is the point mass 1 at
/// state 1 while half the mass escapes per sweep).
#[derive(Clone, Debug)]
pub struct StationaryResult {
    pub cutoff: u64,
    pub tol: f64,
    /// Sub-distribution per odd state, index (state - 1) / 2.
    pub pi: Vec<f64>,
    /// Escaping mass per sweep at the fixed point.
    pub overflow_mass: f64,
    pub iterations: u64,
    /// L1 distance between the last two conditioned iterates.
    pub residual: f64,
}

impl StationaryResult {
    pub fn pi_of(&self, state: u64) -> f64 {
        self.pi[state_index(state)]
    }

    /// In-range distribution conditioned on not overflowing; sums to 1.
    pub fn conditional_pi_of(&self, state: u64) -> f64 {
        self.pi_of(state) / (1.0 - self.overflow_mass)
    }
}

fn kahan_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

fn prob_f64(p: &BigRational) -> f64 {
    p.to_f64().expect("probability in [0,1] converts to f64")
}

/// Power iteration on the in-range part of the table, renormalizing each
/// sweep (conditioning on staying below the cutoff) and reporting the
/// escaping mass at the fixed point. Stops when the L1 difference of
/// successive conditioned iterates drops below `tol`.
pub fn stationary(
    table: &TransitionTable,
    tol: f64,
    max_iters: u64,
) -> Result<StationaryResult, Error> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance {tol} must be positive")));
    }
    if max_iters == 0 {
        return Err(Error::Config("iteration budget must be positive".into()));
    }
    let n = table.rows.len();
    // transpose once: the sweep gathers into each target independently
    let mut in_edges: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    let mut escape: Vec<f64> = vec![0.0; n];
    for (i, row) in table.rows.iter().enumerate() {
        for (t, p) in row {
            match t {
                Target::State(s) => in_edges[state_index(*s)].push((i as u32, prob_f64(p))),
                Target::Overflow => escape[i] = prob_f64(p),
            }
        }
    }

    let mut phi = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iters {
        let next: Vec<f64> = in_edges
            .par_iter()
            // fold from +0.0: the stdlib float sum starts at -0.0, which
            // would stamp unreachable states with a negative zero
            .map(|edges| {
                edges
                    .iter()
                    .fold(0.0, |acc, &(i, p)| acc + phi[i as usize] * p)
            })
            .collect();
        let esc = kahan_sum(phi.iter().zip(&escape).map(|(f, e)| f * e));
        let kept = kahan_sum(next.iter().copied());
        if kept <= 0.0 {
            return Err(Error::Unreachable(
                "no probability mass stays within the cutoff; the truncation is too small".into(),
            ));
        }
        residual = 0.0;
        for (new, old) in next.iter().zip(phi.iter_mut()) {
            let scaled = new / kept;
            residual += (scaled - *old).abs();
            *old = scaled;
        }
        if residual < tol {
            let pi = phi.iter().map(|f| f * (1.0 - esc)).collect();
            return Ok(StationaryResult {
                cutoff: table.cutoff,
                tol,
                pi,
                overflow_mass: esc,
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::BudgetExceeded {
        what: format!("stationary power iteration after {max_iters} sweeps"),
        residual,
    })
}

/// Bracket on the expected return time to `target` in the truncated system.
#[derive(Clone, Debug, Serialize)]
pub struct ReturnTimeBounds {
    pub target: u64,
    /// From the optimistic closure where the overflow sink steps straight
    /// back to the target; a lower bound on the infinite-chain value.
    pub lower: f64,
    /// Exact value when no row can overflow; otherwise None, unavailable
    /// by truncation (no finite upper closure exists).
    pub upper: Option<f64>,
    pub iterations: u64,
    /// Largest single-row overflow probability, the truncation diagnostic.
    pub max_row_escape: f64,
    pub escape_rows: u64,
}

/// Solves the first-step equations for the expected time to hit `target`
/// by monotone value iteration from below, with the overflow sink valued
/// optimistically at one step from the target. States that can neither
/// reach the target nor overflow make the expectation infinite, reported
/// as an unreachable error.
pub fn expected_return_time(table: &TransitionTable, target: u64) -> Result<ReturnTimeBounds, Error> {
    if target % 2 == 0 || target == 0 || target > table.cutoff {
        return Err(Error::Config(format!(
            "target {target} must be an odd state within the cutoff {}",
            table.cutoff
        )));
    }
    let n = table.rows.len();
    let tidx = state_index(target);

    let mut fwd: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut escape = vec![0.0f64; n];
    for (i, row) in table.rows.iter().enumerate() {
        for (t, p) in row {
            match t {
                Target::State(s) => {
                    let j = state_index(*s);
                    fwd[i].push((j as u32, prob_f64(p)));
                    rev[j].push(i as u32);
                }
                Target::Overflow => escape[i] = prob_f64(p),
            }
        }
    }

    // states that can hit the target or the overflow sink
    let mut can_hit = vec![false; n];
    let mut queue: Vec<usize> = Vec::new();
    for i in 0..n {
        if i == tidx || escape[i] > 0.0 {
            can_hit[i] = true;
            queue.push(i);
        }
    }
    while let Some(j) = queue.pop() {
        for &i in &rev[j] {
            let i = i as usize;
            if !can_hit[i] {
                can_hit[i] = true;
                queue.push(i);
            }
        }
    }
    // states with any path into the dead set have infinite expectation
    let mut doomed = vec![false; n];
    for i in 0..n {
        if !can_hit[i] {
            doomed[i] = true;
            queue.push(i);
        }
    }
    while let Some(j) = queue.pop() {
        for &i in &rev[j] {
            let i = i as usize;
            if !doomed[i] {
                doomed[i] = true;
                queue.push(i);
            }
        }
    }
    if doomed[tidx] {
        return Err(Error::Unreachable(format!(
            "return to {target} diverges: the truncation reaches states that can neither \
             come back nor overflow"
        )));
    }

    // h(i): expected steps to hit target from i, target itself valued 0 as
    // a destination; overflow contributes one further step
    let mut h = vec![0.0f64; n];
    let mut iterations = 0u64;
    let mut sup_diff = f64::INFINITY;
    let cap = 1_000_000u64;
    while sup_diff > 1e-12 && iterations < cap {
        sup_diff = 0.0;
        iterations += 1;
        for i in 0..n {
            if i == tidx || doomed[i] {
                continue;
            }
            let mut v = 1.0 + escape[i];
            for &(j, p) in &fwd[i] {
                let j = j as usize;
                if j != tidx {
                    v += p * h[j];
                }
            }
            let d = (v - h[i]).abs();
            if d > sup_diff {
                sup_diff = d;
            }
            h[i] = v;
        }
    }
    if sup_diff > 1e-12 {
        return Err(Error::BudgetExceeded {
            what: format!("return-time value iteration after {cap} sweeps"),
            residual: sup_diff,
        });
    }

    let mut lower = 1.0 + escape[tidx];
    for &(j, p) in &fwd[tidx] {
        let j = j as usize;
        if j != tidx {
            lower += p * h[j];
        }
    }
    let escape_rows = escape.iter().filter(|&&e| e > 0.0).count() as u64;
    let max_row_escape = escape.iter().cloned().fold(0.0, f64::max);
    Ok(ReturnTimeBounds {
        target,
        lower,
        upper: if escape_rows == 0 { Some(lower) } else { None },
        iterations,
        max_row_escape,
        escape_rows,
    })
}

/// Breadth-first closure of `from` under positive-probability transitions,
/// restricted to states `<= state_cap`.
#[derive(Clone, Debug)]
pub struct ReachReport {
    /// State mapped to the depth at which it was first reached.
    pub first_reach: BTreeMap<u64, u64>,
    /// Some generated state exceeded the cap and was dropped.
    pub cap_truncated: bool,
    /// The frontier was still growing when the depth cap hit.
    pub depth_truncated: bool,
    pub max_depth: u64,
}

impl ReachReport {
    pub fn contains(&self, state: u64) -> bool {
        self.first_reach.contains_key(&state)
    }
}

pub fn reachable_set(
    dist: &XiDistribution,
    from: u64,
    state_cap: u64,
    depth_cap: u64,
) -> Result<ReachReport, Error> {
    if state_cap == 0 || depth_cap == 0 {
        return Err(Error::Config("state and depth caps must be >= 1".into()));
    }
    if from % 2 == 0 || from == 0 || from > state_cap {
        return Err(Error::Config(format!(
            "start state {from} must be odd and within the state cap {state_cap}"
        )));
    }
    let mut first_reach = BTreeMap::new();
    first_reach.insert(from, 0u64);
    let mut frontier = vec![from];
    let mut cap_truncated = false;
    let mut max_depth = 0;
    let mut depth = 0;
    while !frontier.is_empty() && depth < depth_cap {
        depth += 1;
        let mut next = Vec::new();
        for &s in &frontier {
            let x = OddInt::from_u64(s)?;
            for atom in dist.atoms() {
                let out = step(&x, atom.value)?;
                match out.x_next.to_u64() {
                    Some(y) if y <= state_cap => {
                        if !first_reach.contains_key(&y) {
                            first_reach.insert(y, depth);
                            max_depth = depth;
                            next.push(y);
                        }
                    }
                    _ => cap_truncated = true,
                }
            }
        }
        frontier = next;
    }
    Ok(ReachReport {
        first_reach,
        cap_truncated,
        depth_truncated: !frontier.is_empty(),
        max_depth,
    })
}

/// Sparse triplet export: `row_state,target_state_or_OVERFLOW,prob_num,prob_den`.
pub fn write_table_csv<W: io::Write>(table: &TransitionTable, mut out: W) -> io::Result<()> {
    writeln!(out, "row_state,target_state_or_OVERFLOW,prob_num,prob_den")?;
    for state in table.states() {
        for (target, p) in table.row(state) {
            match target {
                Target::State(s) => {
                    writeln!(out, "{state},{s},{},{}", p.numer(), p.denom())?
                }
                Target::Overflow => {
                    writeln!(out, "{state},OVERFLOW,{},{}", p.numer(), p.denom())?
                }
            }
        }
    }
    Ok(())
}

/// Per-state column export: `state,pi` (the sub-distribution, so the column
/// plus the overflow mass totals 1).
pub fn write_stationary_csv<W: io::Write>(result: &StationaryResult, mut out: W) -> io::Result<()> {
    writeln!(out, "state,pi")?;
    for (i, p) in result.pi.iter().enumerate() {
        writeln!(out, "{},{}", 2 * i as u64 + 1, p)?;
    }
    Ok(())
}
