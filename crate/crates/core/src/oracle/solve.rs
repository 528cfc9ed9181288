use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::space::TransitionMatrix;
use crate::error::{Error, Result};

/// Below this many states a class is solved by dense LU.
pub const DENSE_LIMIT: usize = 2_000;
const ITER_TOLERANCE: f64 = 1e-14;
const MAX_SWEEPS: usize = 200_000;

/// Strongly connected components, in reverse topological order.
pub fn strongly_connected(q: &TransitionMatrix) -> Vec<Vec<usize>> {
    // Iterative Tarjan.
    let n = q.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(top) = call.last_mut() {
            let v = top.0;
            let row = q.row(v);
            if top.1 < row.len() {
                let w = row[top.1].0;
                top.1 += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// Components with no transitions leaving them.
pub fn closed_classes(q: &TransitionMatrix) -> Vec<Vec<usize>> {
    let comps = strongly_connected(q);
    let mut comp_of = vec![0; q.len()];
    for (c, members) in comps.iter().enumerate() {
        for &s in members {
            comp_of[s] = c;
        }
    }
    comps
        .iter()
        .enumerate()
        .filter(|(c, members)| {
            members
                .iter()
                .all(|&s| q.row(s).iter().all(|&(t, _)| comp_of[t] == *c))
        })
        .map(|(_, m)| m.clone())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedClass {
    pub states: Vec<usize>,
    /// Probability of ending up in this class from the initial condition.
    pub weight: f64,
    /// Stationary law within the class, indexed like `states`.
    pub pi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    /// Stationary probability of every state.
    pub pi: Vec<f64>,
    pub irreducible: bool,
    pub classes: Vec<ClosedClass>,
    /// `max |(π Q)_s|`.
    pub residual: f64,
}

/// Stationary law inside one closed class.
fn solve_class(q: &TransitionMatrix, states: &[usize]) -> Result<Vec<f64>> {
    let k = states.len();
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let mut local = vec![usize::MAX; q.len()];
    for (i, &s) in states.iter().enumerate() {
        local[s] = i;
    }
    if k <= DENSE_LIMIT {
        // Qᵀ πᵀ = 0 with the last equation replaced by Σπ = 1.
        let mut a = DMatrix::<f64>::zeros(k, k);
        for (i, &s) in states.iter().enumerate() {
            a[(i, i)] -= q.exit_rate(s);
            for &(t, r) in q.row(s) {
                a[(local[t], i)] += r;
            }
        }
        for j in 0..k {
            a[(k - 1, j)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(k);
        b[k - 1] = 1.0;
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Invariant("singular balance equations in a closed class".into()))?;
        // A few Gauss-Seidel sweeps polish the LU solution.
        let mut pi: Vec<f64> = x.iter().cloned().collect();
        refine(q, states, &local, &mut pi, 4);
        return Ok(pi);
    }
    let mut pi = vec![1.0 / k as f64; k];
    refine(q, states, &local, &mut pi, MAX_SWEEPS);
    Ok(pi)
}

/// Gauss-Seidel sweeps on the balance equations
/// `π_t · exit(t) = Σ_s π_s Q_{s→t}`, renormalized after each sweep.
fn refine(q: &TransitionMatrix, states: &[usize], local: &[usize], pi: &mut [f64], sweeps: usize) {
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); states.len()];
    for (i, &s) in states.iter().enumerate() {
        for &(t, r) in q.row(s) {
            incoming[local[t]].push((i, r));
        }
    }
    for _ in 0..sweeps {
        let mut change: f64 = 0.0;
        for (t, &st) in states.iter().enumerate() {
            let inflow: f64 = incoming[t].iter().map(|&(s, r)| pi[s] * r).sum();
            let new = inflow / q.exit_rate(st);
            change = change.max((new - pi[t]).abs());
            pi[t] = new;
        }
        let total: f64 = pi.iter().sum();
        for v in pi.iter_mut() {
            *v /= total;
        }
        if change < ITER_TOLERANCE {
            break;
        }
    }
}

/// Probability, from each state, of being absorbed into `target` rather
/// than another closed class.
fn absorption(q: &TransitionMatrix, class_of: &[Option<usize>], target: usize) -> Vec<f64> {
    let n = q.len();
    let mut h: Vec<f64> = (0..n)
        .map(|s| if class_of[s] == Some(target) { 1.0 } else { 0.0 })
        .collect();
    for _ in 0..MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for s in 0..n {
            if class_of[s].is_some() {
                continue;
            }
            let v = q.row(s).iter().map(|&(t, r)| r * h[t]).sum::<f64>() / q.exit_rate(s);
            change = change.max((v - h[s]).abs());
            h[s] = v;
        }
        if change < ITER_TOLERANCE {
            break;
        }
    }
    h
}

/// Solves `π Q = 0, Σπ = 1`. For a reducible chain each closed class is
/// solved separately and weighted by its absorption probability from
/// `initial` (uniform over all states when not given).
pub fn stationary(q: &TransitionMatrix, initial: Option<&[f64]>) -> Result<Stationary> {
    let n = q.len();
    if n == 0 {
        return Err(Error::Usage("empty transition matrix".into()));
    }
    if let Some(p0) = initial {
        if p0.len() != n {
            return Err(Error::Usage(format!("initial law has {} entries for {n} states", p0.len())));
        }
    }
    let classes = closed_classes(q);
    let irreducible = classes.len() == 1 && classes[0].len() == n;
    let mut class_of = vec![None; n];
    for (c, members) in classes.iter().enumerate() {
        for &s in members {
            class_of[s] = Some(c);
        }
    }
    let uniform = vec![1.0 / n as f64; n];
    let p0 = initial.unwrap_or(&uniform);
    let mut pi = vec![0.0; n];
    let mut out = Vec::with_capacity(classes.len());
    for (c, members) in classes.iter().enumerate() {
        let local = solve_class(q, members)?;
        let weight = if classes.len() == 1 {
            1.0
        } else {
            let h = absorption(q, &class_of, c);
            p0.iter().zip(&h).map(|(p, h)| p * h).sum()
        };
        for (&s, &v) in members.iter().zip(&local) {
            pi[s] = weight * v;
        }
        out.push(ClosedClass {
            states: members.clone(),
            weight,
            pi: local,
        });
    }
    let residual = q.left_multiply(&pi).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(Stationary {
        pi,
        irreducible,
        classes: out,
        residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetailedBalance {
    /// `max |π_s Q_{s→s'} - π_{s'} Q_{s'→s}|` over all edges.
    pub max_residual: f64,
    pub edges: usize,
    pub worst_edge: Option<(usize, usize)>,
}

impl DetailedBalance {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.max_residual <= tolerance
    }
}

pub fn detailed_balance(q: &TransitionMatrix, pi: &[f64]) -> DetailedBalance {
    let mut out = DetailedBalance {
        max_residual: 0.0,
        edges: 0,
        worst_edge: None,
    };
    for (s, t, r) in q.edges() {
        out.edges += 1;
        let res = (pi[s] * r - pi[t] * q.rate(t, s)).abs();
        if res > out.max_residual || out.worst_edge.is_none() {
            out.max_residual = out.max_residual.max(res);
            out.worst_edge = Some((s, t));
        }
    }
    out
}

/// Advances a state distribution by `steps` uniformized steps of length
/// `dt` (`p ← p + dt p Q`); `dt` is clipped to keep the step stochastic.
pub fn evolve_distribution(q: &TransitionMatrix, p: &[f64], dt: f64, steps: usize) -> Vec<f64> {
    let max_exit = (0..q.len()).map(|s| q.exit_rate(s)).fold(0.0, f64::max);
    let dt = if max_exit > 0.0 { dt.min(1.0 / max_exit) } else { dt };
    let mut cur = p.to_vec();
    for _ in 0..steps {
        let d = q.left_multiply(&cur);
        for (c, v) in cur.iter_mut().zip(d) {
            *c += dt * v;
        }
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::super::space::build_master;
    use super::*;
    use crate::ensemble::Bounds;
    use crate::kernel::ExchangeKernel;

    #[test]
    fn three_agents_three_units_is_uniform() {
        let (_, q) = build_master(3, 3, &ExchangeKernel::additive(1), Bounds::default()).unwrap();
        let st = stationary(&q, None).unwrap();
        assert!(st.irreducible);
        for p in &st.pi {
            assert!((p - 0.1).abs() < 1e-14);
        }
        assert!(st.residual < 1e-12);
        let db = detailed_balance(&q, &st.pi);
        assert!(db.holds(1e-12), "{db:?}");
    }

    #[test]
    fn two_state_chain() {
        let (_, q) = build_master(2, 1, &ExchangeKernel::additive(1), Bounds::default()).unwrap();
        let st = stationary(&q, None).unwrap();
        assert!((st.pi[0] - 0.5).abs() < 1e-15 && (st.pi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reducible_chain_uses_initial_weights() {
        // Δ = 2 with M = 3 on two agents: {(3,0),(1,2)} and {(2,1),(0,3)}.
        let (space, q) = build_master(2, 3, &ExchangeKernel::additive(2), Bounds::default()).unwrap();
        let st = stationary(&q, None).unwrap();
        assert!(!st.irreducible);
        assert_eq!(st.classes.len(), 2);
        let mut p0 = vec![0.0; space.len()];
        p0[space.index_of(&[3, 0]).unwrap()] = 1.0;
        let st = stationary(&q, Some(&p0)).unwrap();
        let w: Vec<f64> = st.classes.iter().map(|c| c.weight).collect();
        assert!(w.contains(&1.0) && w.contains(&0.0), "{w:?}");
        assert!((st.pi[space.index_of(&[1, 2]).unwrap()] - 0.5).abs() < 1e-12);
        assert_eq!(st.pi[space.index_of(&[2, 1]).unwrap()], 0.0);
    }

    #[test]
    fn iterative_solver_agrees_with_dense() {
        // 2300 states: above the dense limit.
        let (_, q) = build_master(4, 21, &ExchangeKernel::multiplicative(0.5), Bounds::default()).unwrap();
        assert!(q.len() > DENSE_LIMIT);
        let st = stationary(&q, None).unwrap();
        assert!(st.residual < 1e-12, "{}", st.residual);
        let (_, small) = build_master(3, 9, &ExchangeKernel::multiplicative(0.5), Bounds::default()).unwrap();
        let dense = stationary(&small, None).unwrap();
        let states: Vec<usize> = (0..small.len()).collect();
        let local = states.clone();
        let mut it = vec![1.0 / small.len() as f64; small.len()];
        refine(&small, &states, &local, &mut it, MAX_SWEEPS);
        for (a, b) in dense.pi.iter().zip(&it) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn entropy_of_state_law_grows_toward_uniform() {
        let (space, q) = build_master(3, 5, &ExchangeKernel::additive(1), Bounds::default()).unwrap();
        let mut p = vec![0.0; space.len()];
        p[space.index_of(&[5, 0, 0]).unwrap()] = 1.0;
        let h = |p: &[f64]| -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
        let mut last = h(&p);
        for _ in 0..200 {
            p = evolve_distribution(&q, &p, 0.5, 1);
            let now = h(&p);
            assert!(now >= last - 1e-12);
            last = now;
        }
        assert!(last <= (space.len() as f64).ln() + 1e-12);
        assert!((last - (space.len() as f64).ln()).abs() < 1e-3);
    }
}
