//! Derived chains: trace, reflection, collapse, enlargement, resolvent and cycle
//! decomposition.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{
    apply_generator, is_reversible, pi_inner, stationarity_residual, Chain, ProbVector,
};
use crate::error::{Error, Result};
use crate::linalg::{lu_solve, InteriorSystem};
use crate::partition::Partition;
use crate::potential::equilibrium_potential;
use crate::random::{random_vector, rng};
use crate::tolerance::config;

/// Label of the state a set is collapsed into.
pub const COLLAPSED_LABEL: &str = "@collapsed";

fn subset_mask(chain: &Chain, set: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; chain.len()];
    for &i in set {
        if i >= chain.len() {
            return Err(Error::BadSubset(format!("state index {i} out of range")));
        }
        mask[i] = true;
    }
    if !mask.iter().any(|m| *m) {
        return Err(Error::BadSubset("subset is empty".into()));
    }
    Ok(mask)
}

fn check_stationary(chain: &Chain, pi: &[f64]) -> Result<()> {
    if pi.len() != chain.len() {
        return Err(Error::Input(
            "measure length does not match the state count".into(),
        ));
    }
    let residual = stationarity_residual(chain, pi);
    if residual > config().relative * chain.max_rate() {
        return Err(Error::NotStationary { residual });
    }
    Ok(())
}

fn conditioned(pi: &[f64], states: &[usize]) -> Result<ProbVector> {
    ProbVector::from_weights(states.iter().map(|&i| pi[i]).collect())
}

/// The chain watched only while it is in `F`: for `η ≠ ξ` in `F`,
/// `R_F(η,ξ) = R(η,ξ) + Σ_{ζ∉F} R(η,ζ) P_ζ[H_F = H_ξ]`.
/// States keep their relative order; the second component is `π` conditioned on `F`.
pub fn trace_chain(chain: &Chain, pi: &[f64], f: &[usize]) -> Result<(Chain, ProbVector)> {
    let in_f = subset_mask(chain, f)?;
    let states: Vec<usize> = (0..chain.len()).filter(|&i| in_f[i]).collect();
    if states.len() < 2 {
        return Err(Error::BadSubset("a trace needs at least two states".into()));
    }
    check_stationary(chain, pi)?;
    if states.len() == chain.len() {
        return Ok((chain.clone(), conditioned(pi, &states)?));
    }
    let mut pos = vec![usize::MAX; chain.len()];
    for (p, &i) in states.iter().enumerate() {
        pos[i] = p;
    }
    let sys = InteriorSystem::new(chain, &in_f);
    let outside = sys.interior().to_vec();

    // Targets in F entered directly from outside, and for each the outside states that
    // can reach it without touching F, so that structural zeros stay exact.
    let mut targets = Vec::new();
    let mut rhs = Vec::new();
    let mut reach = Vec::new();
    for &xi in &states {
        let entries: Vec<(usize, f64)> = chain
            .in_edges(xi)
            .iter()
            .copied()
            .filter(|&(z, _)| !in_f[z])
            .collect();
        if entries.is_empty() {
            continue;
        }
        let mut b = vec![0.0; outside.len()];
        let mut seen = vec![false; outside.len()];
        let mut queue = VecDeque::new();
        for (z, r) in entries {
            let p = sys.position(z).unwrap();
            b[p] = r;
            if !seen[p] {
                seen[p] = true;
                queue.push_back(z);
            }
        }
        while let Some(z) = queue.pop_front() {
            for &(y, _) in chain.in_edges(z) {
                if let Some(p) = sys.position(y) {
                    if !seen[p] {
                        seen[p] = true;
                        queue.push_back(y);
                    }
                }
            }
        }
        targets.push(xi);
        rhs.push(b);
        reach.push(seen);
    }
    let absorb = sys.solve(&rhs)?;

    let mut rates: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); states.len()];
    for (p, &eta) in states.iter().enumerate() {
        for &(j, r) in chain.out_edges(eta) {
            if in_f[j] {
                *rates[p].entry(pos[j]).or_default() += r;
            }
        }
    }
    for (t, &xi) in targets.iter().enumerate() {
        for (p, &eta) in states.iter().enumerate() {
            if eta == xi {
                continue;
            }
            let mut v = 0.0;
            let mut structural = false;
            for &(z, r) in chain.out_edges(eta) {
                if let Some(q) = sys.position(z) {
                    if reach[t][q] {
                        structural = true;
                        v += r * absorb[t][q].max(0.0);
                    }
                }
            }
            if structural && v > 0.0 {
                *rates[p].entry(pos[xi]).or_default() += v;
            }
        }
    }
    let labels = states.iter().map(|&i| chain.label(i).to_string()).collect();
    let edges = rates
        .iter()
        .enumerate()
        .flat_map(|(p, row)| row.iter().map(move |(&q, &r)| (p, q, r)))
        .collect();
    let traced = Chain::from_indexed(labels, edges)?;
    let pi_f = conditioned(pi, &states)?;
    let residual = stationarity_residual(&traced, &pi_f);
    if residual > config().relative * traced.max_rate() {
        return Err(Error::SolverFailure(format!(
            "conditioned measure not stationary for the trace (residual {residual:e})"
        )));
    }
    if is_reversible(chain, pi, 1e-9) && !is_reversible(&traced, &pi_f, 1e-8) {
        return Err(Error::SolverFailure(
            "trace of a reversible chain lost reversibility".into(),
        ));
    }
    Ok((traced, pi_f))
}

/// The chain with all jumps between `F` and its complement removed, on `F`.
pub fn reflected_chain(chain: &Chain, f: &[usize]) -> Result<Chain> {
    let in_f = subset_mask(chain, f)?;
    let states: Vec<usize> = (0..chain.len()).filter(|&i| in_f[i]).collect();
    if states.len() < 2 {
        return Err(Error::BadSubset(
            "a reflected chain needs at least two states".into(),
        ));
    }
    if let Some((a, b)) = chain.unreachable_pair(&in_f) {
        return Err(Error::NotIrreducibleAfterReflection {
            from: chain.label(a).to_string(),
            to: chain.label(b).to_string(),
        });
    }
    let mut pos = vec![usize::MAX; chain.len()];
    for (p, &i) in states.iter().enumerate() {
        pos[i] = p;
    }
    let labels = states.iter().map(|&i| chain.label(i).to_string()).collect();
    let edges = chain
        .edges()
        .filter(|&(i, j, _)| in_f[i] && in_f[j])
        .map(|(i, j, r)| (pos[i], pos[j], r))
        .collect();
    Chain::from_indexed(labels, edges)
}

/// A chain with a set `A` collapsed to one state, placed last.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedChain {
    pub chain: Chain,
    pub pi: ProbVector,
    /// Original index of each non-collapsed state, in order.
    pub kept: Vec<usize>,
}

impl CollapsedChain {
    /// Index of the collapsed state.
    pub fn collapsed(&self) -> usize {
        self.kept.len()
    }

    /// Lifts a function on the collapsed space to one constant on `A`.
    pub fn lift(&self, f: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![f[self.collapsed()]; n];
        for (p, &i) in self.kept.iter().enumerate() {
            out[i] = f[p];
        }
        out
    }
}

/// Collapses `A` into a single state: rates into it are summed, rates out of it
/// are the `π`-average over `A`.
pub fn collapse_chain(chain: &Chain, pi: &[f64], a: &[usize]) -> Result<CollapsedChain> {
    let in_a = subset_mask(chain, a)?;
    if in_a.iter().all(|x| *x) {
        return Err(Error::BadSubset(
            "cannot collapse the whole state space".into(),
        ));
    }
    if chain.index_of(COLLAPSED_LABEL).is_some() {
        return Err(Error::BadSubset(format!(
            "label '{COLLAPSED_LABEL}' is reserved"
        )));
    }
    check_stationary(chain, pi)?;
    let kept: Vec<usize> = (0..chain.len()).filter(|&i| !in_a[i]).collect();
    let d = kept.len();
    let mut pos = vec![d; chain.len()];
    for (p, &i) in kept.iter().enumerate() {
        pos[i] = p;
    }
    let mass: f64 = (0..chain.len()).filter(|&i| in_a[i]).map(|i| pi[i]).sum();
    let mut rates: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); d + 1];
    for (i, j, r) in chain.edges() {
        let (p, q) = (pos[i], pos[j]);
        if p == q {
            continue;
        }
        let w = if p == d { pi[i] * r / mass } else { r };
        *rates[p].entry(q).or_default() += w;
    }
    let mut labels: Vec<String> = kept.iter().map(|&i| chain.label(i).to_string()).collect();
    labels.push(COLLAPSED_LABEL.to_string());
    let edges = rates
        .iter()
        .enumerate()
        .flat_map(|(p, row)| row.iter().map(move |(&q, &r)| (p, q, r)))
        .collect();
    let collapsed = Chain::from_indexed(labels, edges)?;
    let mut weights: Vec<f64> = kept.iter().map(|&i| pi[i]).collect();
    weights.push(mass);
    let pi_c = ProbVector::from_weights(weights)?;
    let residual = stationarity_residual(&collapsed, &pi_c);
    if residual > config().relative * collapsed.max_rate() {
        return Err(Error::SolverFailure(format!(
            "collapsed measure not stationary (residual {residual:e})"
        )));
    }
    Ok(CollapsedChain {
        chain: collapsed,
        pi: pi_c,
        kept,
    })
}

/// Largest `|⟨L_C f, g⟩_{π_C} - ⟨L F, G⟩_π|` over seeded random `f, g` on the collapsed
/// space, with `F, G` their lifts constant on `A`.
pub fn collapsed_quadratic_identity_check(
    chain: &Chain,
    pi: &[f64],
    a: &[usize],
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let c = collapse_chain(chain, pi, a)?;
    let m = c.chain.len();
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut r = rng(seed, t as u64);
        let f = random_vector(&mut r, m);
        let g = random_vector(&mut r, m);
        worst = worst.max(quadratic_gap(chain, pi, &c, &f, &g));
    }
    Ok(worst)
}

/// `|⟨L_C f, g⟩_{π_C} - ⟨L F, G⟩_π|` for one pair.
pub fn quadratic_gap(chain: &Chain, pi: &[f64], c: &CollapsedChain, f: &[f64], g: &[f64]) -> f64 {
    let lhs = pi_inner(&c.pi, &apply_generator(&c.chain, f), g);
    let (big_f, big_g) = (c.lift(f, chain.len()), c.lift(g, chain.len()));
    let rhs = pi_inner(pi, &apply_generator(chain, &big_f), &big_g);
    (lhs - rhs).abs()
}

/// A chain on `E ∪ E*` where every state is linked to its star copy at rate `1/γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnlargedChain {
    pub base: Chain,
    pub gamma: f64,
    /// States `0..n` are the base states, `n..2n` their star copies.
    pub chain: Chain,
    pub pi: ProbVector,
}

impl EnlargedChain {
    pub fn star(&self, i: usize) -> usize {
        i + self.base.len()
    }
}

pub fn enlarge_chain(chain: &Chain, pi: &[f64], gamma: f64) -> Result<EnlargedChain> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::NonPositiveGamma(gamma));
    }
    check_stationary(chain, pi)?;
    let n = chain.len();
    let mut labels: Vec<String> = chain.labels().to_vec();
    labels.extend(chain.labels().iter().map(|l| format!("{l}*")));
    let mut edges: Vec<(usize, usize, f64)> = chain.edges().collect();
    for i in 0..n {
        edges.push((i, i + n, 1.0 / gamma));
        edges.push((i + n, i, 1.0 / gamma));
    }
    let big = Chain::from_indexed(labels, edges)?;
    let weights: Vec<f64> = pi.iter().chain(pi.iter()).map(|p| 0.5 * p).collect();
    let pi_star = ProbVector::from_weights(weights)?;
    let residual = stationarity_residual(&big, &pi_star);
    if residual > config().relative * big.max_rate() {
        return Err(Error::SolverFailure(format!(
            "enlarged measure not stationary (residual {residual:e})"
        )));
    }
    Ok(EnlargedChain {
        base: chain.clone(),
        gamma,
        chain: big,
        pi: pi_star,
    })
}

/// Solves `(I - γL) u = χ_{ℰ^k}` on a chain whose valleys cover every state.
pub fn resolvent_solve(
    chain: &Chain,
    gamma: f64,
    k: usize,
    partition: &Partition,
) -> Result<Vec<f64>> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::NonPositiveGamma(gamma));
    }
    check_cover(chain, partition, k)?;
    let n = chain.len();
    let indicator: Vec<f64> = (0..n)
        .map(|i| {
            if partition.valley_of(i) == Some(k) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let u = if n <= config().dense_limit {
        let mut a = DMatrix::identity(n, n);
        for i in 0..n {
            a[(i, i)] += gamma * chain.holding_rate(i);
        }
        for (i, j, r) in chain.edges() {
            a[(i, j)] -= gamma * r;
        }
        let b = DMatrix::from_column_slice(n, 1, &indicator);
        lu_solve(&a, &b)?.column(0).iter().copied().collect()
    } else {
        resolvent_iterative(chain, gamma, &indicator)?
    };
    Ok(u.into_iter().map(|v: f64| v.clamp(0.0, 1.0)).collect())
}

fn resolvent_iterative(chain: &Chain, gamma: f64, b: &[f64]) -> Result<Vec<f64>> {
    let mut u = b.to_vec();
    for _ in 0..1_000_000 {
        let mut change = 0.0f64;
        for i in 0..chain.len() {
            let s: f64 = chain.out_edges(i).iter().map(|&(j, r)| r * u[j]).sum();
            let v = (b[i] + gamma * s) / (1.0 + gamma * chain.holding_rate(i));
            change = change.max((v - u[i]).abs());
            u[i] = v;
        }
        if change <= 1e-16 {
            return Ok(u);
        }
    }
    Err(Error::SolverFailure(
        "resolvent iteration did not converge".into(),
    ))
}

fn check_cover(chain: &Chain, partition: &Partition, k: usize) -> Result<()> {
    if partition.state_count() != chain.len() || !partition.delta().is_empty() {
        return Err(Error::BadPartition(
            "valleys must cover the state space".into(),
        ));
    }
    if k >= partition.valley_count() {
        return Err(Error::BadPartition(format!(
            "no valley with index {}",
            k + 1
        )));
    }
    Ok(())
}

/// The equilibrium potential of the `γ`-enlarged chain between the star copies of
/// valley `k` and those of the other valleys, restricted to the base states.
/// Equals the resolvent solution.
pub fn enlarged_potential(
    chain: &Chain,
    pi: &[f64],
    gamma: f64,
    k: usize,
    partition: &Partition,
) -> Result<Vec<f64>> {
    check_cover(chain, partition, k)?;
    let e = enlarge_chain(chain, pi, gamma)?;
    let n = chain.len();
    let a: Vec<usize> = partition.valley(k).iter().map(|&i| e.star(i)).collect();
    let b: Vec<usize> = partition.others(k).iter().map(|&i| e.star(i)).collect();
    let h = equilibrium_potential(&e.chain, &e.pi, &a, &b)?.h;
    Ok(h[..n].to_vec())
}

/// One cycle generator: jumps `η_i → η_{i+1}` (indices mod the length) at rates
/// `conductance / π(η_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cycle {
    pub vertices: Vec<usize>,
    pub conductance: f64,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleDecomposition {
    pub cycles: Vec<Cycle>,
    /// Largest edgewise deviation between the summed cycle rates and the chain, absolute
    /// for rates up to 1 and relative above.
    pub residual: f64,
}

impl CycleDecomposition {
    /// Number of cycles of each length, keyed by length.
    pub fn length_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for c in &self.cycles {
            *h.entry(c.vertices.len()).or_default() += 1;
        }
        h
    }

    /// Summed cycle rates on each edge.
    pub fn reconstruct(&self) -> BTreeMap<(usize, usize), f64> {
        let mut m = BTreeMap::new();
        for c in &self.cycles {
            let k = c.vertices.len();
            for (i, &v) in c.vertices.iter().enumerate() {
                *m.entry((v, c.vertices[(i + 1) % k])).or_default() += c.rates[i];
            }
        }
        m
    }

    pub fn to_json(&self, chain: &Chain) -> serde_json::Value {
        let cycles: Vec<serde_json::Value> = self
            .cycles
            .iter()
            .map(|c| {
                serde_json::json!({
                    "states": c.vertices.iter().map(|&v| chain.label(v)).collect::<Vec<_>>(),
                    "conductance": c.conductance,
                    "rates": c.rates,
                })
            })
            .collect();
        serde_json::json!({
            "cycle_count": self.cycles.len(),
            "length_histogram": self.length_histogram(),
            "residual": self.residual,
            "cycles": cycles,
        })
    }
}

/// Writes the generator as a sum of cycle generators, removing shortest cycles first.
/// Among cycles of the current length the lexicographically smallest vertex sequence,
/// started at its smallest vertex, is removed at its smallest conductance. Leftovers
/// within `1e-13` of the original edge, or at rounding level of the vertex outflow,
/// are snapped to zero.
pub fn cycle_decompose(chain: &Chain, pi: &[f64]) -> Result<CycleDecomposition> {
    check_stationary(chain, pi)?;
    let n = chain.len();
    // Conductances are kept as unevaluated sums `hi + lo` so subtracting cycles adds no
    // rounding of its own.
    let mut cond: Vec<BTreeMap<usize, (f64, f64)>> = vec![BTreeMap::new(); n];
    for (i, j, r) in chain.edges() {
        cond[i].insert(j, (pi[i] * r, 0.0));
    }
    let mut cycles = Vec::new();
    let mut remaining: usize = cond.iter().map(BTreeMap::len).sum();
    // Rounding leftovers can close shorter cycles than the current length, so sweep again.
    loop {
        let before = remaining;
        let mut k = 2;
        while remaining > 0 && k <= n {
            let mut v = 0;
            while v < n {
                match shortest_cycle_from(&cond, v, k) {
                    Some(path) => {
                        let len = path.len();
                        let mut least = (f64::INFINITY, 0.0);
                        let mut arg = 0;
                        for i in 0..len {
                            let c = cond[path[i]][&path[(i + 1) % len]];
                            if c.0 + c.1 < least.0 + least.1
                                || (c.0 + c.1 == least.0 + least.1 && c.1 < least.1)
                            {
                                least = c;
                                arg = i;
                            }
                        }
                        for i in 0..len {
                            let (a, b) = (path[i], path[(i + 1) % len]);
                            let left = dd_sub(cond[a][&b], least);
                            if i == arg
                                || left.0 + left.1 <= 4.0 * f64::EPSILON * pi[a] * chain.rate(a, b)
                            {
                                cond[a].remove(&b);
                                remaining -= 1;
                            } else {
                                cond[a].insert(b, left);
                            }
                        }
                        let conductance = least.0 + least.1;
                        let rates = path.iter().map(|&x| conductance / pi[x]).collect();
                        cycles.push(Cycle {
                            vertices: path,
                            conductance,
                            rates,
                        });
                    }
                    None => v += 1,
                }
            }
            k += 1;
        }
        if remaining == 0 || remaining == before {
            break;
        }
    }
    // Acyclic leftovers at rounding level of the largest vertex flow are dropped; they
    // show up in `residual`.
    let floor = 64.0
        * f64::EPSILON
        * (0..n)
            .map(|i| pi[i] * chain.holding_rate(i))
            .fold(0.0, f64::max);
    let left = cond
        .iter()
        .flat_map(|r| r.values())
        .fold(0.0, |m: f64, c| m.max(c.0 + c.1));
    if remaining > 0 && left > floor {
        return Err(Error::NotStationary { residual: left });
    }
    let mut d = CycleDecomposition {
        cycles,
        residual: 0.0,
    };
    // Rescale each edge's cycle rates to sum to the generator rate. The shift is the
    // leftover over the flow, so per-cycle constancy of `π(x)·rate` holds to that order.
    let sums = d.reconstruct();
    for c in &mut d.cycles {
        let k = c.vertices.len();
        for i in 0..k {
            let (a, b) = (c.vertices[i], c.vertices[(i + 1) % k]);
            c.rates[i] *= chain.rate(a, b) / sums[&(a, b)];
        }
    }
    let sums = d.reconstruct();
    let mut residual = 0.0f64;
    for (i, j, r) in chain.edges() {
        let s = sums.get(&(i, j)).copied().unwrap_or(0.0);
        residual = residual.max((s - r).abs() / r.max(1.0));
    }
    d.residual = residual;
    Ok(d)
}

/// `x - y` for double-double values, renormalized.
fn dd_sub(x: (f64, f64), y: (f64, f64)) -> (f64, f64) {
    let (s, e) = two_sum(x.0, -y.0);
    let e = e + (x.1 - y.1);
    let hi = s + e;
    (hi, e - (hi - s))
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Lexicographically smallest `k`-cycle through `v`, or `None`. Assumes no shorter
/// cycle exists and no `k`-cycle passes through a vertex below `v`.
fn shortest_cycle_from(
    cond: &[BTreeMap<usize, (f64, f64)>],
    v: usize,
    k: usize,
) -> Option<Vec<usize>> {
    if cond[v].is_empty() {
        return None;
    }
    // distances to v along the remaining edges, explored backwards up to depth k-1
    let n = cond.len();
    let mut incoming: Vec<Vec<usize>> = Vec::new();
    let mut dist = vec![usize::MAX; n];
    dist[v] = 0;
    let mut frontier = vec![v];
    let mut depth = 0;
    while depth + 1 < k && !frontier.is_empty() {
        if incoming.is_empty() {
            incoming = vec![Vec::new(); n];
            for (a, row) in cond.iter().enumerate() {
                for &b in row.keys() {
                    incoming[b].push(a);
                }
            }
        }
        let mut next = Vec::new();
        for &x in &frontier {
            for &y in &incoming[x] {
                if dist[y] == usize::MAX {
                    dist[y] = depth + 1;
                    next.push(y);
                }
            }
        }
        frontier = next;
        depth += 1;
    }
    let mut path = vec![v];
    let mut at = v;
    for step in 1..k {
        let need = k - step;
        let x = cond[at]
            .keys()
            .copied()
            .find(|&x| x != v && dist[x] == need)?;
        path.push(x);
        at = x;
    }
    cond[at].contains_key(&v).then_some(path)
}
