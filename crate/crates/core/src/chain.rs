//! Finite-state continuous-time Markov chains and their basic calculus.

use std::collections::HashMap;
use std::ops::Deref;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::lu_solve;
use crate::tolerance::config;

/// A validated, irreducible chain given by its off-diagonal jump rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    out: Vec<Vec<(usize, f64)>>,
    incoming: Vec<Vec<(usize, f64)>>,
    holding: Vec<f64>,
}

/// Builds a chain from state labels and `(from, to, rate)` triples.
pub fn build_chain<S: AsRef<str>>(labels: &[S], rates: &[(S, S, f64)]) -> Result<Chain> {
    let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
    let mut index = HashMap::with_capacity(labels.len());
    for (i, l) in labels.iter().enumerate() {
        if index.insert(l.clone(), i).is_some() {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    let mut edges = Vec::with_capacity(rates.len());
    for (a, b, r) in rates {
        let i = *index
            .get(a.as_ref())
            .ok_or_else(|| Error::UnknownState(a.as_ref().to_string()))?;
        let j = *index
            .get(b.as_ref())
            .ok_or_else(|| Error::UnknownState(b.as_ref().to_string()))?;
        edges.push((i, j, *r));
    }
    Chain::from_indexed(labels, edges)
}

impl Chain {
    /// Builds a chain from labels and rate triples on dense indices.
    pub fn from_indexed(labels: Vec<String>, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let n = labels.len();
        let mut index = HashMap::with_capacity(n);
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        if n < 2 {
            return Err(Error::TooFewStates(n));
        }
        let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, r) in &edges {
            if i >= n || j >= n {
                return Err(Error::Input(format!("edge index ({i},{j}) out of range")));
            }
            if i == j {
                return Err(Error::SelfLoop(labels[i].clone()));
            }
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::NonPositiveRate {
                    from: labels[i].clone(),
                    to: labels[j].clone(),
                    rate: r,
                });
            }
            out[i].push((j, r));
        }
        for (i, row) in out.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::DuplicateEdge {
                    from: labels[i].clone(),
                    to: labels[w[0].0].clone(),
                });
            }
        }
        let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in out.iter().enumerate() {
            for &(j, r) in row {
                incoming[j].push((i, r));
            }
        }
        let holding = out
            .iter()
            .map(|row| row.iter().map(|e| e.1).sum())
            .collect();
        let chain = Self {
            labels,
            index,
            out,
            incoming,
            holding,
        };
        if let Some((a, b)) = chain.unreachable_pair(&vec![true; n]) {
            return Err(Error::NotIrreducible {
                from: chain.labels[a].clone(),
                to: chain.labels[b].clone(),
            });
        }
        Ok(chain)
    }

    /// First `(from, to)` pair with `to` unreachable from `from` inside `mask`,
    /// or `None` if the induced rate digraph is strongly connected.
    pub(crate) fn unreachable_pair(&self, mask: &[bool]) -> Option<(usize, usize)> {
        let root = (0..self.len()).find(|&i| mask[i])?;
        let backward = self.reach(root, mask, true);
        if let Some(i) = (0..self.len()).find(|&i| mask[i] && !backward[i]) {
            return Some((i, root));
        }
        let forward = self.reach(root, mask, false);
        (0..self.len())
            .find(|&j| mask[j] && !forward[j])
            .map(|j| (root, j))
    }

    fn reach(&self, root: usize, mask: &[bool], reverse: bool) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(i) = stack.pop() {
            let adj = if reverse {
                &self.incoming[i]
            } else {
                &self.out[i]
            };
            for &(j, _) in adj {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Resolves labels to indices.
    pub fn indices_of<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l.as_ref())
                    .ok_or_else(|| Error::UnknownState(l.as_ref().into()))
            })
            .collect()
    }

    /// Outgoing `(target, rate)` pairs, sorted by target.
    pub fn out_edges(&self, i: usize) -> &[(usize, f64)] {
        &self.out[i]
    }

    /// Incoming `(source, rate)` pairs.
    pub fn in_edges(&self, j: usize) -> &[(usize, f64)] {
        &self.incoming[j]
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        match self.out[i].binary_search_by_key(&j, |e| e.0) {
            Ok(p) => self.out[i][p].1,
            Err(_) => 0.0,
        }
    }

    pub fn holding_rate(&self, i: usize) -> f64 {
        self.holding[i]
    }

    /// Largest single jump rate.
    pub fn max_rate(&self) -> f64 {
        self.out.iter().flatten().map(|e| e.1).fold(0.0, f64::max)
    }

    /// Largest total jump rate `max λ(η)`.
    pub fn max_holding_rate(&self) -> f64 {
        self.holding.iter().copied().fold(0.0, f64::max)
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// All `(from, to, rate)` triples in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, r)| (i, j, r)))
    }

    /// Dense generator matrix with diagonal `-λ`.
    pub fn generator_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut q = DMatrix::zeros(n, n);
        for (i, j, r) in self.edges() {
            q[(i, j)] = r;
        }
        for i in 0..n {
            q[(i, i)] = -self.holding[i];
        }
        q
    }

    /// Maps a label transformation over the states, keeping the rates.
    pub fn relabel(&self, f: impl Fn(&str) -> String) -> Result<Chain> {
        let labels = self.labels.iter().map(|l| f(l)).collect();
        Chain::from_indexed(labels, self.edges().collect())
    }
}

/// A probability vector over the states of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Input(
                "probability weights must be finite and nonnegative".into(),
            ));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!(
                "probability weights sum to {s}, not 1"
            )));
        }
        Ok(Self(weights))
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Input(
                "weights must have positive finite total".into(),
            ));
        }
        Self::new(weights.into_iter().map(|w| w / s).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ProbVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `(L f)(η) = Σ R(η,ξ) [f(ξ) - f(η)]`.
pub fn apply_generator(chain: &Chain, f: &[f64]) -> Vec<f64> {
    (0..chain.len())
        .map(|i| {
            chain
                .out_edges(i)
                .iter()
                .map(|&(j, r)| r * (f[j] - f[i]))
                .sum()
        })
        .collect()
}

/// `‖πᵀL‖∞`.
pub fn stationarity_residual(chain: &Chain, pi: &[f64]) -> f64 {
    (0..chain.len())
        .map(|j| {
            let inflow: f64 = chain.in_edges(j).iter().map(|&(i, r)| pi[i] * r).sum();
            (inflow - pi[j] * chain.holding_rate(j)).abs()
        })
        .fold(0.0, f64::max)
}

/// The unique stationary distribution.
pub fn stationary(chain: &Chain) -> Result<ProbVector> {
    let n = chain.len();
    let mut pi = if n <= config().dense_limit {
        let mut a = chain.generator_matrix().transpose();
        for c in 0..n {
            a[(n - 1, c)] = 1.0;
        }
        let mut b = DMatrix::zeros(n, 1);
        b[(n - 1, 0)] = 1.0;
        let x = lu_solve(&a, &b)?;
        let mut pi = x.column(0).iter().map(|p| p.max(0.0)).collect::<Vec<_>>();
        polish(chain, &mut pi);
        pi
    } else {
        stationary_iterative(chain)?
    };
    for p in pi.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    let residual = stationarity_residual(chain, &pi);
    if residual > config().stationary_residual * chain.max_rate() {
        return Err(Error::SolverFailure(format!(
            "stationary residual {residual:e} above tolerance"
        )));
    }
    ProbVector::new(pi)
}

/// Gauss-Seidel sweeps that bring each state's in- and outflow into balance at the
/// rounding level of its own flow, which a direct solve only reaches relative to the
/// largest flow.
fn polish(chain: &Chain, pi: &mut [f64]) {
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    let flow = (0..pi.len())
        .map(|i| pi[i] * chain.holding_rate(i))
        .fold(0.0, f64::max);
    let accept = stationarity_residual(chain, pi).max(4.0 * f64::EPSILON * flow);
    let start = pi.to_vec();
    for _sweep in 0..200 {
        let mut change = 0.0f64;
        for j in 0..pi.len() {
            let inflow: f64 = chain.in_edges(j).iter().map(|&(i, r)| pi[i] * r).sum();
            let v = inflow / chain.holding_rate(j);
            if v > 0.0 {
                change = change.max((v - pi[j]).abs() / v);
            }
            pi[j] = v;
        }
        if change <= 4.0 * f64::EPSILON {
            break;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    if !(stationarity_residual(chain, pi) <= accept) {
        pi.copy_from_slice(&start);
    }
}

fn stationary_iterative(chain: &Chain) -> Result<Vec<f64>> {
    let n = chain.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _sweep in 0..1_000_000 {
        let mut change = 0.0f64;
        for j in 0..n {
            let inflow: f64 = chain.in_edges(j).iter().map(|&(i, r)| pi[i] * r).sum();
            let v = inflow / chain.holding_rate(j);
            change = change.max((v - pi[j]).abs());
            pi[j] = v;
        }
        let s: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= s);
        if change <= 1e-16 * s {
            return Ok(pi);
        }
    }
    Err(Error::SolverFailure(
        "stationary iteration did not converge".into(),
    ))
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

/// Time-reversed chain: `R*(η,ξ) = π(ξ) R(ξ,η) / π(η)`.
pub fn adjoint(chain: &Chain, pi: &[f64]) -> Result<Chain> {
    check_stationary(chain, pi)?;
    let edges = chain
        .edges()
        .map(|(i, j, r)| (j, i, pi[i] * r / pi[j]))
        .collect();
    Chain::from_indexed(chain.labels().to_vec(), edges)
}

/// Symmetric part `(R + R*) / 2`, reversible with respect to `π`.
pub fn symmetric_part(chain: &Chain, pi: &[f64]) -> Result<Chain> {
    check_stationary(chain, pi)?;
    let mut edges = Vec::new();
    for i in 0..chain.len() {
        let mut targets: Vec<usize> = chain.out_edges(i).iter().map(|e| e.0).collect();
        targets.extend(chain.in_edges(i).iter().map(|e| e.0));
        targets.sort_unstable();
        targets.dedup();
        for j in targets {
            let r = chain.rate(i, j);
            let r_star = pi[j] * chain.rate(j, i) / pi[i];
            edges.push((i, j, 0.5 * (r + r_star)));
        }
    }
    Chain::from_indexed(chain.labels().to_vec(), edges)
}

/// Detailed balance `π(η)R(η,ξ) = π(ξ)R(ξ,η)` on every edge, up to `tol` relative.
pub fn is_reversible(chain: &Chain, pi: &[f64], tol: f64) -> bool {
    chain.edges().all(|(i, j, r)| {
        let a = pi[i] * r;
        let b = pi[j] * chain.rate(j, i);
        (a - b).abs() <= tol * a.max(b)
    })
}

/// `⟨f, g⟩_π`.
pub fn pi_inner(pi: &[f64], f: &[f64], g: &[f64]) -> f64 {
    pi.iter().zip(f).zip(g).map(|((p, a), b)| p * a * b).sum()
}

/// `D(f) = ½ Σ π(η) R(η,ξ) (f(ξ) - f(η))²`.
pub fn dirichlet_form(chain: &Chain, pi: &[f64], f: &[f64]) -> f64 {
    0.5 * chain
        .edges()
        .map(|(i, j, r)| pi[i] * r * (f[j] - f[i]).powi(2))
        .sum::<f64>()
}

/// `⟨(-L) f, f⟩_π`, the same quantity computed through the generator.
pub fn dirichlet_form_quadratic(chain: &Chain, pi: &[f64], f: &[f64]) -> f64 {
    let lf = apply_generator(chain, f);
    -pi_inner(pi, &lf, f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralGap {
    pub gap: f64,
    pub relaxation_time: f64,
}

/// Smallest positive eigenvalue of `-Lˢ` in `L²(π)`.
pub fn spectral_gap(chain: &Chain, pi: &[f64]) -> Result<SpectralGap> {
    spectral_gap_with_limit(chain, pi, config().dense_limit)
}

pub fn spectral_gap_with_limit(chain: &Chain, pi: &[f64], limit: usize) -> Result<SpectralGap> {
    let n = chain.len();
    if n > limit {
        return Err(Error::TooLarge {
            what: "spectral gap".into(),
            states: n,
            limit,
        });
    }
    let sym = symmetric_part(chain, pi)?;
    let root: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = sym.holding_rate(i);
    }
    for (i, j, r) in sym.edges() {
        m[(i, j)] = -root[i] * r / root[j];
    }
    let m = (&m + m.transpose()) * 0.5;
    let mut eig: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let gap = eig[1];
    if !(gap > 0.0) {
        return Err(Error::SolverFailure(format!(
            "non-positive spectral gap {gap:e}"
        )));
    }
    Ok(SpectralGap {
        gap,
        relaxation_time: 1.0 / gap,
    })
}
