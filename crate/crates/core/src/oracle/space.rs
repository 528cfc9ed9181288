use std::collections::{BTreeMap, HashMap};

use crate::ensemble::Bounds;
use crate::error::{config, Error, Result};
use crate::kernel::ExchangeKernel;
use crate::money::MoneyAmount;

/// Largest state space the oracle will enumerate.
pub const STATE_LIMIT: usize = 1_000_000;

/// All balance vectors `(m_1, ..., m_N)` with `Σ m_i = M` and every `m_i`
/// inside the bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub population: usize,
    pub total: i64,
    pub bounds: Bounds,
    states: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, usize>,
}

/// Number of ways to write `total` as `parts` integers in `0..=cap`,
/// saturating at `u128::MAX`.
pub fn count_compositions(total: i64, parts: usize, cap: Option<i64>) -> u128 {
    if total < 0 {
        return 0;
    }
    let Some(cap) = cap else {
        return binomial(total as u128 + parts as u128 - 1, parts as u128 - 1);
    };
    let t = total as usize;
    let cap = cap.max(0) as usize;
    let mut ways = vec![0u128; t + 1];
    ways[0] = 1;
    for _ in 0..parts {
        // Prefix sums turn the bounded convolution into O(t).
        let mut prefix = vec![0u128; t + 2];
        for s in 0..=t {
            prefix[s + 1] = prefix[s].saturating_add(ways[s]);
        }
        for (s, slot) in ways.iter_mut().enumerate() {
            *slot = prefix[s + 1].saturating_sub(prefix[s.saturating_sub(cap)]);
        }
    }
    ways[t]
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays an integer at every step.
        match acc.checked_mul(n - i) {
            Some(v) => acc = v / (i + 1),
            None => return u128::MAX,
        }
    }
    acc
}

impl StateSpace {
    pub fn new(population: usize, total: i64, bounds: Bounds) -> Result<Self> {
        if population < 2 {
            return config(format!("the oracle needs at least 2 agents, got {population}"));
        }
        let lower = bounds.min.0;
        let shifted_total = total - population as i64 * lower;
        let cap = bounds.max.map(|u| u.0 - lower);
        let count = count_compositions(shifted_total, population, cap);
        if count == 0 {
            return config(format!(
                "no allocation of {total} among {population} agents respects the bounds"
            ));
        }
        if count > STATE_LIMIT as u128 {
            return Err(Error::StateExplosion {
                count,
                limit: STATE_LIMIT,
            });
        }
        let mut states = Vec::with_capacity(count as usize);
        let mut cur = vec![0i64; population];
        fill(&mut states, &mut cur, 0, shifted_total, cap);
        for s in &mut states {
            for v in s.iter_mut() {
                *v += lower;
            }
        }
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(StateSpace {
            population,
            total,
            bounds,
            states,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[i64] {
        &self.states[i]
    }

    pub fn states(&self) -> &[Vec<i64>] {
        &self.states
    }

    pub fn index_of(&self, state: &[i64]) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Smallest and largest balance any agent can hold.
    pub fn money_range(&self) -> (i64, i64) {
        let lo = self.bounds.min.0;
        let others = (self.population as i64 - 1) * lo;
        let hi = self.total - others;
        (lo, self.bounds.max.map_or(hi, |u| u.0.min(hi)))
    }
}

fn fill(out: &mut Vec<Vec<i64>>, cur: &mut [i64], pos: usize, left: i64, cap: Option<i64>) {
    if pos == cur.len() - 1 {
        if cap.is_none_or(|c| left <= c) {
            cur[pos] = left;
            out.push(cur.to_vec());
        }
        return;
    }
    let top = cap.map_or(left, |c| c.min(left));
    for v in (0..=top).rev() {
        cur[pos] = v;
        fill(out, cur, pos + 1, left - v, cap);
    }
}

/// Sparse generator of the master equation: `rows[s]` lists `(s', rate)`
/// for `s' != s`; the diagonal is minus the row sum.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let exit = rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
        TransitionMatrix { rows, exit }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    /// Total rate out of `s`.
    pub fn exit_rate(&self, s: usize) -> f64 {
        self.exit[s]
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        if from == to {
            return -self.exit[from];
        }
        self.rows[from].iter().find(|e| e.0 == to).map_or(0.0, |e| e.1)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(s, r)| r.iter().map(move |&(t, q)| (s, t, q)))
    }

    /// `π Q`.
    pub fn left_multiply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = pi.iter().zip(&self.exit).map(|(p, e)| -p * e).collect();
        for (s, t, q) in self.edges() {
            out[t] += pi[s] * q;
        }
        out
    }

    /// Incoming edges per state.
    pub fn transpose_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut inc = vec![Vec::new(); self.len()];
        for (s, t, q) in self.edges() {
            inc[t].push((s, q));
        }
        inc
    }

    /// Largest `|Q_{s→s'} - Q_{s'→s}|`: zero when every transition is as
    /// likely as its reverse.
    pub fn reversal_asymmetry(&self) -> f64 {
        self.edges()
            .map(|(s, t, q)| (q - self.rate(t, s)).abs())
            .fold(0.0, f64::max)
    }
}

/// Builds the master equation for `N` agents sharing `M`: every ordered
/// pair is drawn at rate `1/(N(N-1))` and moves an amount with the kernel's
/// probability; moves that would breach the bounds are left out.
pub fn build_master(
    population: usize,
    total: i64,
    kernel: &ExchangeKernel,
    bounds: Bounds,
) -> Result<(StateSpace, TransitionMatrix)> {
    let space = StateSpace::new(population, total, bounds)?;
    let pair_rate = 1.0 / (population * (population - 1)) as f64;
    let mut rows = Vec::with_capacity(space.len());
    let mut next = vec![0i64; population];
    for s in 0..space.len() {
        let state = space.state(s);
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        for i in 0..population {
            for j in 0..population {
                if i == j {
                    continue;
                }
                for (delta, p) in kernel.proposal_distribution(MoneyAmount(state[i]), MoneyAmount(state[j])) {
                    let (payer, payee, d) = if delta.0 < 0 { (j, i, -delta.0) } else { (i, j, delta.0) };
                    if d == 0 || p == 0.0 {
                        continue;
                    }
                    let after_payer = MoneyAmount(state[payer] - d);
                    let after_payee = MoneyAmount(state[payee] + d);
                    if !bounds.contains(after_payer) || !bounds.contains(after_payee) {
                        continue;
                    }
                    next.copy_from_slice(state);
                    next[payer] -= d;
                    next[payee] += d;
                    let t = space.index_of(&next).expect("bounded move stays in the state space");
                    *row.entry(t).or_insert(0.0) += pair_rate * p;
                }
            }
        }
        rows.push(row.into_iter().collect());
    }
    Ok((space, TransitionMatrix::from_rows(rows)))
}
