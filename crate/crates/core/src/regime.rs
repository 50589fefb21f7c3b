//! The continuous-time finite-state Markov chain driving both markets.
//!
//! States are indexed from 0 internally; CSV output and config files use the
//! 1-based labels `e_1, ..., e_K`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;

use crate::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// Generator of the regime chain together with its initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSpec {
    generator: Vec<f64>,
    states: usize,
    initial_state: usize,
}

impl RegimeSpec {
    /// Builds a spec from the rows of `Q` (per-year rates) and a 0-based
    /// initial state.
    pub fn new(rows: Vec<Vec<f64>>, initial_state: usize) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::domain("regime.Q", "generator must have at least one state"));
        }
        let mut generator = Vec::with_capacity(k * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::domain(
                    "regime.Q",
                    format!("row {} has {} entries, expected {k}", i + 1, row.len()),
                ));
            }
            let mut off = 0.0;
            for (j, &q) in row.iter().enumerate() {
                if !q.is_finite() {
                    return Err(Error::domain("regime.Q", format!("q[{},{}] is not finite", i + 1, j + 1)));
                }
                if i != j {
                    if q < 0.0 {
                        return Err(Error::domain(
                            "regime.Q",
                            format!("off-diagonal rate q[{},{}] = {q} is negative", i + 1, j + 1),
                        ));
                    }
                    off += q;
                }
            }
            if (row[i] + off).abs() > ROW_SUM_TOL * (1.0 + off) {
                return Err(Error::domain(
                    "regime.Q",
                    format!("row {} does not sum to zero (q_ii = {}, off-diagonal sum {off})", i + 1, row[i]),
                ));
            }
            generator.extend_from_slice(row);
        }
        if initial_state >= k {
            return Err(Error::domain(
                "regime.y0",
                format!("initial state {} outside 1..={k}", initial_state + 1),
            ));
        }
        Ok(Self { generator, states: k, initial_state })
    }

    /// Two-state chain with switching rates `q12` (good to bad) and `q21`.
    pub fn two_state(q12: f64, q21: f64, initial_state: usize) -> Result<Self> {
        Self::new(vec![vec![-q12, q12], vec![q21, -q21]], initial_state)
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.generator[from * self.states + to]
    }

    /// Total exit rate `-q_ii` of state `i`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.rate(i, i)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.generator.chunks(self.states).map(|r| r.to_vec()).collect()
    }
}

/// One realisation of the chain on `[start, end]`: piecewise constant and
/// right-continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePath {
    start: f64,
    end: f64,
    jump_times: Vec<f64>,
    states: Vec<usize>,
}

impl RegimePath {
    /// A path that stays in `state` for the whole horizon.
    pub fn constant(state: usize, start: f64, end: f64) -> Self {
        Self { start, end, jump_times: Vec::new(), states: vec![state] }
    }

    /// Builds a path from explicit switch times. `states` has one entry per
    /// inter-jump interval.
    pub fn from_jumps(start: f64, end: f64, jump_times: Vec<f64>, states: Vec<usize>) -> Result<Self> {
        if states.len() != jump_times.len() + 1 {
            return Err(Error::domain("regime path", "need one state per inter-jump interval"));
        }
        let increasing = jump_times.windows(2).all(|w| w[0] < w[1]);
        let inside = jump_times.iter().all(|&t| t > start && t <= end);
        let switching = states.windows(2).all(|w| w[0] != w[1]);
        if !(increasing && inside && switching) {
            return Err(Error::domain(
                "regime path",
                "jump times must be strictly increasing inside the horizon and change state",
            ));
        }
        Ok(Self { start, end, jump_times, states })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn final_state(&self) -> usize {
        *self.states.last().expect("a path always has one interval")
    }

    fn check(&self, t: f64) -> Result<()> {
        if t < self.start || t > self.end || t.is_nan() {
            return Err(Error::OutOfRange { t, start: self.start, end: self.end });
        }
        Ok(())
    }

    /// `Y_t`: the post-jump state at a switch time.
    pub fn state_at(&self, t: f64) -> Result<usize> {
        self.check(t)?;
        Ok(self.states[self.jump_times.partition_point(|&s| s <= t)])
    }

    /// `Y_{t-}`: the pre-jump state at a switch time, `Y_{t0}` at the start.
    pub fn state_before(&self, t: f64) -> Result<usize> {
        self.check(t)?;
        Ok(self.states[self.jump_times.partition_point(|&s| s < t)])
    }

    /// `(interval_start, interval_end, state)` triples covering the horizon.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        (0..self.states.len()).map(move |k| {
            let lo = if k == 0 { self.start } else { self.jump_times[k - 1] };
            let hi = self.jump_times.get(k).copied().unwrap_or(self.end);
            (lo, hi, self.states[k])
        })
    }

    /// Time spent in each state.
    pub fn occupation(&self, num_states: usize) -> Vec<f64> {
        let mut occ = vec![0.0; num_states];
        for (lo, hi, s) in self.intervals() {
            occ[s] += hi - lo;
        }
        occ
    }

    /// CSV with header `interval_start,interval_end,state` (states 1-based).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("interval_start,interval_end,state\n");
        for (lo, hi, s) in self.intervals() {
            let _ = writeln!(out, "{lo},{hi},{}", s + 1);
        }
        out
    }
}

/// Exact event-time simulation of the chain on `[t0, horizon]`.
pub fn simulate_chain<R: Rng + ?Sized>(spec: &RegimeSpec, t0: f64, horizon: f64, rng: &mut R) -> RegimePath {
    let mut state = spec.initial_state();
    let mut t = t0;
    let mut jump_times = Vec::new();
    let mut states = vec![state];
    loop {
        let rate = spec.exit_rate(state);
        if rate <= 0.0 {
            break;
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / rate;
        t += hold;
        if t >= horizon {
            break;
        }
        let target = rng.random::<f64>() * rate;
        let mut acc = 0.0;
        let mut next = state;
        for j in (0..spec.num_states()).filter(|&j| j != state) {
            let q = spec.rate(state, j);
            if q <= 0.0 {
                continue;
            }
            next = j;
            acc += q;
            if target < acc {
                break;
            }
        }
        state = next;
        jump_times.push(t);
        states.push(state);
    }
    RegimePath { start: t0, end: horizon, jump_times, states }
}

/// Boolean reachability closure of the jump graph (a state reaches itself).
fn reachability(spec: &RegimeSpec) -> Vec<Vec<bool>> {
    let k = spec.num_states();
    let mut reach = vec![vec![false; k]; k];
    for (i, row) in reach.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = i == j || spec.rate(i, j) > 0.0;
        }
    }
    for m in 0..k {
        for i in 0..k {
            if reach[i][m] {
                let via = reach[m].clone();
                for (r, v) in reach[i].iter_mut().zip(via) {
                    *r |= v;
                }
            }
        }
    }
    reach
}

/// Stationary law `p` with `pQ = 0`, `sum p = 1`.
///
/// Fails unless the chain has exactly one closed communicating class.
pub fn stationary_distribution(spec: &RegimeSpec) -> Result<Vec<f64>> {
    let k = spec.num_states();
    let reach = reachability(spec);
    let mut closed_classes = 0;
    let mut seen = vec![false; k];
    for i in 0..k {
        if seen[i] {
            continue;
        }
        let class: Vec<usize> = (0..k).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &class {
            seen[j] = true;
        }
        let closed = class.iter().all(|&a| (0..k).all(|b| !reach[a][b] || class.contains(&b)));
        if closed {
            closed_classes += 1;
        }
    }
    if closed_classes != 1 {
        return Err(Error::ReducibleChain(format!(
            "{closed_classes} closed communicating classes, no unique stationary law"
        )));
    }
    // Q^T p = 0 with the last balance equation replaced by normalisation
    let mut a = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = spec.rate(j, i);
        }
    }
    let mut rhs = DVector::<f64>::zeros(k);
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    rhs[k - 1] = 1.0;
    let p = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::ReducibleChain("singular balance system".into()))?;
    Ok(p.iter().map(|&x| x.max(0.0)).collect())
}
