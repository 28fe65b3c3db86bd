//! Equilibrium potentials, capacities, flows and the variational principles.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{
    adjoint, apply_generator, dirichlet_form, is_reversible, pi_inner, symmetric_part, Chain,
};
use crate::error::{Error, Result};
use crate::linalg::{lu_solve, InteriorSystem};
use crate::random::{random_vector, rng};
use crate::tolerance::{config, rel_dev};

/// `h_{A,B}` with the capacity computed two ways.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSolution {
    pub h: Vec<f64>,
    pub source: Vec<usize>,
    pub sink: Vec<usize>,
    /// `Σ_{η∈A} π(η) λ(η) P_η[H_B < H_A⁺]`.
    pub capacity: f64,
    /// `D(h)`.
    pub dirichlet_value: f64,
}

impl PotentialSolution {
    /// Report form: capacity, Dirichlet value and the potential keyed by state label.
    pub fn to_json(&self, chain: &Chain) -> serde_json::Value {
        let potential: serde_json::Map<String, serde_json::Value> = self
            .h
            .iter()
            .enumerate()
            .map(|(i, v)| (chain.label(i).to_string(), serde_json::json!(v)))
            .collect();
        serde_json::json!({
            "capacity": self.capacity,
            "dirichlet_value": self.dirichlet_value,
            "potential": potential,
        })
    }
}

fn set_masks(chain: &Chain, a: &[usize], b: &[usize]) -> Result<(Vec<bool>, Vec<bool>)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::BadSets("source and sink must be nonempty".into()));
    }
    let n = chain.len();
    let mut in_a = vec![false; n];
    let mut in_b = vec![false; n];
    for &i in a {
        if i >= n {
            return Err(Error::BadSets(format!("state index {i} out of range")));
        }
        in_a[i] = true;
    }
    for &i in b {
        if i >= n {
            return Err(Error::BadSets(format!("state index {i} out of range")));
        }
        if in_a[i] {
            return Err(Error::BadSets(format!(
                "state '{}' lies in both source and sink",
                chain.label(i)
            )));
        }
        in_b[i] = true;
    }
    Ok((in_a, in_b))
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Solves `L h = 0` off `A ∪ B` with `h = 1` on `A`, `h = 0` on `B`.
pub fn equilibrium_potential(
    chain: &Chain,
    pi: &[f64],
    a: &[usize],
    b: &[usize],
) -> Result<PotentialSolution> {
    let (in_a, in_b) = set_masks(chain, a, b)?;
    let boundary: Vec<bool> = in_a.iter().zip(&in_b).map(|(x, y)| *x || *y).collect();
    let sys = InteriorSystem::new(chain, &boundary);
    let m = sys.interior().len();
    let mut to_a = vec![0.0; m];
    let mut to_b = vec![0.0; m];
    for (p, &i) in sys.interior().iter().enumerate() {
        for &(j, r) in chain.out_edges(i) {
            if in_a[j] {
                to_a[p] += r;
            } else if in_b[j] {
                to_b[p] += r;
            }
        }
    }
    let sol = sys.solve(&[to_a, to_b])?;
    let n = chain.len();
    let mut h = vec![0.0; n];
    let mut escape = vec![0.0; n];
    for i in 0..n {
        if in_a[i] {
            h[i] = 1.0;
        } else if in_b[i] {
            escape[i] = 1.0;
        } else {
            let p = sys.position(i).unwrap();
            h[i] = sol[0][p].clamp(0.0, 1.0);
            escape[i] = sol[1][p].clamp(0.0, 1.0);
        }
    }
    let capacity: f64 = sorted(a)
        .iter()
        .map(|&i| {
            pi[i]
                * chain
                    .out_edges(i)
                    .iter()
                    .map(|&(j, r)| r * escape[j])
                    .sum::<f64>()
        })
        .sum();
    let dirichlet_value = dirichlet_form(chain, pi, &h);
    if rel_dev(capacity, dirichlet_value) > config().identity {
        return Err(Error::SolverFailure(format!(
            "capacity {capacity:e} and Dirichlet value {dirichlet_value:e} disagree"
        )));
    }
    Ok(PotentialSolution {
        h,
        source: sorted(a),
        sink: sorted(b),
        capacity,
        dirichlet_value,
    })
}

/// `Cap(A, B)`.
pub fn capacity(chain: &Chain, pi: &[f64], a: &[usize], b: &[usize]) -> Result<f64> {
    Ok(equilibrium_potential(chain, pi, a, b)?.capacity)
}

/// `Cap*(A, B)`, the capacity for the time-reversed chain.
pub fn adjoint_capacity(chain: &Chain, pi: &[f64], a: &[usize], b: &[usize]) -> Result<f64> {
    capacity(&adjoint(chain, pi)?, pi, a, b)
}

/// `Capˢ(A, B)`, the capacity for the symmetric part.
pub fn symmetric_capacity(chain: &Chain, pi: &[f64], a: &[usize], b: &[usize]) -> Result<f64> {
    capacity(&symmetric_part(chain, pi)?, pi, a, b)
}

/// `Cap({η}, {ξ})` for every `η` in `sources`, from one factorization:
/// `Cap({η},{ξ}) = π(η) / G(η,η)` with `G` the Green function killed at `ξ`.
pub fn point_capacities(
    chain: &Chain,
    pi: &[f64],
    sources: &[usize],
    sink: usize,
) -> Result<Vec<f64>> {
    let mut boundary = vec![false; chain.len()];
    boundary[sink] = true;
    let sys = InteriorSystem::new(chain, &boundary);
    let m = sys.interior().len();
    let mut rhs = Vec::with_capacity(sources.len());
    for &s in sources {
        let p = sys.position(s).ok_or_else(|| {
            Error::BadSets(format!(
                "state '{}' is both source and sink",
                chain.label(s)
            ))
        })?;
        let mut e = vec![0.0; m];
        e[p] = 1.0;
        rhs.push(e);
    }
    let cols = sys.solve(&rhs)?;
    Ok(sources
        .iter()
        .zip(cols)
        .map(|(&s, col)| pi[s] / col[sys.position(s).unwrap()])
        .collect())
}

/// The symmetrized edge set with its conductances.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpace {
    n: usize,
    edges: Vec<(usize, usize)>,
    forward: Vec<f64>,
    backward: Vec<f64>,
    lookup: HashMap<(usize, usize), usize>,
}

impl FlowSpace {
    /// Edges `{η, ξ}` with `R(η,ξ) + R(ξ,η) > 0`, stored with `η < ξ`.
    pub fn new(chain: &Chain, pi: &[f64]) -> Arc<Self> {
        let mut cond: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
        for (i, j, r) in chain.edges() {
            let c = pi[i] * r;
            if i < j {
                cond.entry((i, j)).or_default().0 = c;
            } else {
                cond.entry((j, i)).or_default().1 = c;
            }
        }
        let mut edges: Vec<(usize, usize)> = cond.keys().copied().collect();
        edges.sort_unstable();
        let forward = edges.iter().map(|e| cond[e].0).collect();
        let backward = edges.iter().map(|e| cond[e].1).collect();
        let lookup = edges.iter().enumerate().map(|(k, e)| (*e, k)).collect();
        Arc::new(Self {
            n: chain.len(),
            edges,
            forward,
            backward,
            lookup,
        })
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn state_count(&self) -> usize {
        self.n
    }

    /// `c(η,ξ) = π(η) R(η,ξ)` for the stored orientation of edge `k`.
    pub fn conductance(&self, k: usize) -> (f64, f64) {
        (self.forward[k], self.backward[k])
    }

    /// `c_s = (c(η,ξ) + c(ξ,η)) / 2`.
    pub fn symmetric_conductance(&self, k: usize) -> f64 {
        0.5 * (self.forward[k] + self.backward[k])
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.lookup.get(&(i.min(j), i.max(j))).copied()
    }
}

/// An antisymmetric function on the symmetrized edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    space: Arc<FlowSpace>,
    /// Value on each stored edge `(η, ξ)` with `η < ξ`.
    values: Vec<f64>,
}

impl Flow {
    pub fn zero(space: &Arc<FlowSpace>) -> Self {
        Self {
            space: space.clone(),
            values: vec![0.0; space.edges.len()],
        }
    }

    /// Flow with value `f(η, ξ)` on each stored edge, `η < ξ`.
    pub fn from_fn(space: &Arc<FlowSpace>, f: impl Fn(usize, usize) -> f64) -> Self {
        let values = space.edges.iter().map(|&(i, j)| f(i, j)).collect();
        Self {
            space: space.clone(),
            values,
        }
    }

    /// `Φ_f(η,ξ) = f(η) c(η,ξ) - f(ξ) c(ξ,η)`.
    pub fn phi(space: &Arc<FlowSpace>, f: &[f64]) -> Self {
        Self::from_edges(space, |k, i, j| {
            let (c, cr) = space.conductance(k);
            f[i] * c - f[j] * cr
        })
    }

    /// `Φ*_f(η,ξ) = f(η) c(ξ,η) - f(ξ) c(η,ξ)`.
    pub fn phi_star(space: &Arc<FlowSpace>, f: &[f64]) -> Self {
        Self::from_edges(space, |k, i, j| {
            let (c, cr) = space.conductance(k);
            f[i] * cr - f[j] * c
        })
    }

    /// `Ψ_f(η,ξ) = c_s(η,ξ) (f(η) - f(ξ))`.
    pub fn psi(space: &Arc<FlowSpace>, f: &[f64]) -> Self {
        Self::from_edges(space, |k, i, j| {
            space.symmetric_conductance(k) * (f[i] - f[j])
        })
    }

    fn from_edges(space: &Arc<FlowSpace>, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let values = space
            .edges
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| f(k, i, j))
            .collect();
        Self {
            space: space.clone(),
            values,
        }
    }

    pub fn space(&self) -> &Arc<FlowSpace> {
        &self.space
    }

    /// `φ(η, ξ)`; zero off the edge set.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.space.edge_index(i, j) {
            Some(k) if i < j => self.values[k],
            Some(k) => -self.values[k],
            None => 0.0,
        }
    }

    /// `(div φ)(η) = Σ_ξ φ(η, ξ)`.
    pub fn divergence(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.space.n];
        for (k, &(i, j)) in self.space.edges.iter().enumerate() {
            d[i] += self.values[k];
            d[j] -= self.values[k];
        }
        d
    }

    /// `⟨φ, ψ⟩ = ½ Σ_{(η,ξ)} φ ψ / c_s`.
    pub fn inner(&self, other: &Flow) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(k, (a, b))| a * b / self.space.symmetric_conductance(k))
            .sum()
    }

    pub fn norm2(&self) -> f64 {
        self.inner(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Flow {
        Flow {
            space: self.space.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn plus(&self, other: &Flow) -> Flow {
        self.combine(other, |a, b| a + b)
    }

    pub fn minus(&self, other: &Flow) -> Flow {
        self.combine(other, |a, b| a - b)
    }

    fn combine(&self, other: &Flow, op: impl Fn(f64, f64) -> f64) -> Flow {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| op(*a, *b))
            .collect();
        Flow {
            space: self.space.clone(),
            values,
        }
    }
}

fn check_function(chain: &Chain, f: &[f64], set: &[bool], value: f64, what: &str) -> Result<()> {
    let tol = config().relative * f.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for (i, &inside) in set.iter().enumerate() {
        if inside && (f[i] - value).abs() > tol {
            return Err(Error::NotAdmissible {
                vertex: chain.label(i).to_string(),
                reason: format!("{what} must equal {value}, found {}", f[i]),
            });
        }
    }
    Ok(())
}

fn check_flow(
    chain: &Chain,
    phi: &Flow,
    in_a: &[bool],
    in_b: &[bool],
    strength: f64,
) -> Result<()> {
    if phi.space.n != chain.len() {
        return Err(Error::Input(
            "flow and chain have different state counts".into(),
        ));
    }
    let scale = phi
        .space
        .edges
        .iter()
        .enumerate()
        .map(|(k, _)| phi.space.symmetric_conductance(k))
        .fold(phi.max_abs(), f64::max);
    let tol = 1e-9 * scale.max(strength.abs());
    let div = phi.divergence();
    let mut on_a = 0.0;
    let mut on_b = 0.0;
    for i in 0..chain.len() {
        if in_a[i] {
            on_a += div[i];
        } else if in_b[i] {
            on_b += div[i];
        } else if div[i].abs() > tol {
            return Err(Error::NotAdmissible {
                vertex: chain.label(i).to_string(),
                reason: format!("flow divergence {} off the source and sink", div[i]),
            });
        }
    }
    let first = |set: &[bool]| set.iter().position(|x| *x).unwrap_or(0);
    if (on_a - strength).abs() > tol {
        return Err(Error::NotAdmissible {
            vertex: chain.label(first(in_a)).to_string(),
            reason: format!("net divergence on the source is {on_a}, expected {strength}"),
        });
    }
    if (on_b + strength).abs() > tol {
        return Err(Error::NotAdmissible {
            vertex: chain.label(first(in_b)).to_string(),
            reason: format!(
                "net divergence on the sink is {on_b}, expected {}",
                -strength
            ),
        });
    }
    Ok(())
}

/// `‖Φ_f - φ‖²` for `f` equal to 1 on `A` and 0 on `B` and `φ` divergence-free off
/// `A ∪ B` with zero net divergence on `A` and on `B`. Always at least `Cap(A,B)`.
pub fn dirichlet_upper_bound(
    chain: &Chain,
    pi: &[f64],
    a: &[usize],
    b: &[usize],
    f: &[f64],
    phi: &Flow,
) -> Result<f64> {
    let (in_a, in_b) = set_masks(chain, a, b)?;
    check_function(chain, f, &in_a, 1.0, "test function")?;
    check_function(chain, f, &in_b, 0.0, "test function")?;
    check_flow(chain, phi, &in_a, &in_b, 0.0)?;
    let _ = pi;
    Ok(Flow::phi(&phi.space, f).minus(phi).norm2())
}

/// `1 / ‖Φ_g - ψ‖²` for `g` vanishing on `A ∪ B` and `ψ` a unit flow from `A` to `B`.
/// Always at most `Cap(A,B)`.
pub fn thomson_lower_bound(
    chain: &Chain,
    pi: &[f64],
    a: &[usize],
    b: &[usize],
    psi: &Flow,
    g: &[f64],
) -> Result<f64> {
    let (in_a, in_b) = set_masks(chain, a, b)?;
    check_function(chain, g, &in_a, 0.0, "test function")?;
    check_function(chain, g, &in_b, 0.0, "test function")?;
    check_flow(chain, psi, &in_a, &in_b, 1.0)?;
    let _ = pi;
    Ok(1.0 / Flow::phi(&psi.space, g).minus(psi).norm2())
}

/// The minimizing pair of the Dirichlet principle: `f = ½(h + h*)`, `φ = ½(Φ_{h*} - Φ*_h)`.
pub fn dirichlet_optimizer(
    chain: &Chain,
    pi: &[f64],
    a: &[usize],
    b: &[usize],
) -> Result<(Vec<f64>, Flow)> {
    let h = equilibrium_potential(chain, pi, a, b)?.h;
    let hs = equilibrium_potential(&adjoint(chain, pi)?, pi, a, b)?.h;
    let space = FlowSpace::new(chain, pi);
    let f = h.iter().zip(&hs).map(|(x, y)| 0.5 * (x + y)).collect();
    let phi = Flow::phi(&space, &hs)
        .minus(&Flow::phi_star(&space, &h))
        .scaled(0.5);
    Ok((f, phi))
}

/// The optimizing pair of the Thomson principle:
/// `ψ = ½(Φ_{h*} + Φ*_h) / Cap`, `g = ½(h* - h) / Cap`.
pub fn thomson_optimizer(
    chain: &Chain,
    pi: &[f64],
    a: &[usize],
    b: &[usize],
) -> Result<(Flow, Vec<f64>)> {
    let sol = equilibrium_potential(chain, pi, a, b)?;
    let hs = equilibrium_potential(&adjoint(chain, pi)?, pi, a, b)?.h;
    let cap = sol.capacity;
    let space = FlowSpace::new(chain, pi);
    let psi = Flow::phi(&space, &hs)
        .plus(&Flow::phi_star(&space, &sol.h))
        .scaled(0.5 / cap);
    let g = hs
        .iter()
        .zip(&sol.h)
        .map(|(x, y)| 0.5 * (x - y) / cap)
        .collect();
    Ok((psi, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionBound {
    /// `(Σ_A π L f)² / D(f)` when `L f = 0` off `A ∪ B`.
    pub strict: Option<f64>,
    /// `[(1-ε)(Σ_A π L f)² - ε⁻¹(Σ_{(A∪B)ᶜ} π |L f|)²] / D(f)`, floored at zero.
    pub relaxed: Option<f64>,
}

/// Lower bounds on `Cap(A,B)` from a test function, for reversible chains.
pub fn thomson_function_bound(
    chain: &Chain,
    pi: &[f64],
    a: &[usize],
    b: &[usize],
    f: &[f64],
    epsilon: Option<f64>,
) -> Result<FunctionBound> {
    let (in_a, in_b) = set_masks(chain, a, b)?;
    if !is_reversible(chain, pi, 1e-10) {
        return Err(Error::NotReversible);
    }
    let lf = apply_generator(chain, f);
    let d = dirichlet_form(chain, pi, f);
    let flux: f64 = (0..chain.len())
        .filter(|&i| in_a[i])
        .map(|i| pi[i] * lf[i])
        .sum();
    let defect: f64 = (0..chain.len())
        .filter(|&i| !in_a[i] && !in_b[i])
        .map(|i| pi[i] * lf[i].abs())
        .sum();
    let fscale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let harmonic = (0..chain.len())
        .filter(|&i| !in_a[i] && !in_b[i])
        .all(|i| lf[i].abs() <= config().relative * chain.max_rate() * fscale.max(1.0));
    let strict = (harmonic && d > 0.0).then(|| flux * flux / d);
    let relaxed = match epsilon {
        Some(e) if e > 0.0 && e < 1.0 && d > 0.0 => {
            Some((((1.0 - e) * flux * flux - defect * defect / e) / d).max(0.0))
        }
        Some(e) => return Err(Error::Input(format!("epsilon must lie in (0, 1), got {e}"))),
        None => None,
    };
    if strict.is_none() && relaxed.is_none() {
        let i = (0..chain.len())
            .find(|&i| !in_a[i] && !in_b[i] && lf[i].abs() > 0.0)
            .unwrap_or(0);
        return Err(Error::NotAdmissible {
            vertex: chain.label(i).to_string(),
            reason: "test function is not harmonic and no epsilon was given".into(),
        });
    }
    Ok(FunctionBound { strict, relaxed })
}

/// `sup_g {2⟨f, L g⟩_π - ⟨(-L) g, g⟩_π}` over `g` constant on `A` and constant on `B`,
/// solved exactly on the quotient where `A` is one variable and `g = 0` on `B`.
pub fn dirichlet_ii(chain: &Chain, pi: &[f64], a: &[usize], b: &[usize], f: &[f64]) -> Result<f64> {
    let (in_a, in_b) = set_masks(chain, a, b)?;
    check_function(chain, f, &in_a, 1.0, "test function")?;
    check_function(chain, f, &in_b, 0.0, "test function")?;
    let n = chain.len();
    let limit = config().dense_limit;
    if n > limit {
        return Err(Error::TooLarge {
            what: "Dirichlet principle II".into(),
            states: n,
            limit,
        });
    }
    // variable 0 is the common value on A; interior states follow in index order
    let mut var = vec![None; n];
    let mut m = 1;
    for i in 0..n {
        if in_a[i] {
            var[i] = Some(0);
        } else if !in_b[i] {
            var[i] = Some(m);
            m += 1;
        }
    }
    // K = sym(Π(-L)) projected onto the variables
    let mut k = DMatrix::zeros(m, m);
    let mut add = |i: usize, j: usize, v: f64| {
        if let (Some(p), Some(q)) = (var[i], var[j]) {
            k[(p, q)] += 0.5 * v;
            k[(q, p)] += 0.5 * v;
        }
    };
    for i in 0..n {
        add(i, i, pi[i] * chain.holding_rate(i));
    }
    for (i, j, r) in chain.edges() {
        add(i, j, -pi[i] * r);
    }
    // linear term: b = Pᵀ Lᵀ Π f
    let mut rhs = DMatrix::zeros(m, 1);
    for i in 0..n {
        let w = pi[i] * f[i];
        if let Some(p) = var[i] {
            rhs[(p, 0)] -= w * chain.holding_rate(i);
        }
        for &(j, r) in chain.out_edges(i) {
            if let Some(q) = var[j] {
                rhs[(q, 0)] += w * r;
            }
        }
    }
    let y = lu_solve(&k, &rhs)?;
    Ok(rhs.dot(&y))
}

/// Solves `θ L f = g` with `E_π[f] = 0`.
pub fn poisson_solve(chain: &Chain, pi: &[f64], g: &[f64], theta: f64) -> Result<Vec<f64>> {
    if !(theta > 0.0) {
        return Err(Error::Input(format!("theta must be positive, got {theta}")));
    }
    let n = chain.len();
    let gscale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean = pi_inner(pi, g, &vec![1.0; n]);
    if mean.abs() > config().relative * gscale.max(f64::MIN_POSITIVE) && mean != 0.0 {
        return Err(Error::NotZeroMean { mean });
    }
    let limit = config().dense_limit;
    if n + 1 > limit {
        return Err(Error::TooLarge {
            what: "Poisson solve".into(),
            states: n,
            limit,
        });
    }
    let q = chain.generator_matrix() * theta;
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n)).copy_from(&q);
    for i in 0..n {
        a[(i, n)] = 1.0;
        a[(n, i)] = pi[i];
    }
    let mut rhs = DMatrix::zeros(n + 1, 1);
    for i in 0..n {
        rhs[(i, 0)] = g[i];
    }
    let x = lu_solve(&a, &rhs)?;
    Ok((0..n).map(|i| x[(i, 0)]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectorEstimate {
    /// Largest sampled `⟨L f, g⟩²_π / (D(f) D(g))`; a lower estimate of the sector constant.
    pub ratio: f64,
    /// `2|E|` with `|E|` the number of states.
    pub bound: f64,
    pub samples: usize,
}

/// `⟨L f, g⟩²_π / (D(f) D(g))`.
pub fn sector_value(chain: &Chain, pi: &[f64], f: &[f64], g: &[f64]) -> f64 {
    let lf = apply_generator(chain, f);
    let num = pi_inner(pi, &lf, g).powi(2);
    num / (dirichlet_form(chain, pi, f) * dirichlet_form(chain, pi, g))
}

/// Randomized lower estimate of the sector constant from `samples` pairs of seeded
/// uniform test functions.
pub fn sector_ratio(chain: &Chain, pi: &[f64], samples: usize, seed: u64) -> SectorEstimate {
    let n = chain.len();
    let mut ratio = 0.0f64;
    for s in 0..samples {
        let mut r = rng(seed, s as u64);
        let f = random_vector(&mut r, n);
        let g = random_vector(&mut r, n);
        let v = sector_value(chain, pi, &f, &g);
        if v.is_finite() {
            ratio = ratio.max(v);
        }
    }
    SectorEstimate {
        ratio,
        bound: 2.0 * n as f64,
        samples,
    }
}
