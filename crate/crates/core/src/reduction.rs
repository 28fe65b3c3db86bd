//! Coarse-grained rates, time scales, the reduced model and the condition ratios.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{spectral_gap, Chain};
use crate::error::{Error, Result};
use crate::linalg::InteriorSystem;
use crate::partition::Partition;
use crate::potential::{capacity, equilibrium_potential, point_capacities};
use crate::tolerance::{config, rel_dev};
use crate::transforms::{collapse_chain, reflected_chain};
use crate::uniformization::expm_generator;

/// The valley-indexed Markov chain approximating the coarse-grained dynamics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedModel {
    pub valley_count: usize,
    pub theta: f64,
    /// `rates[j][k]` for `j ≠ k`; the diagonal is zero and never used.
    pub rates: Vec<Vec<f64>>,
    pub holding_rates: Vec<f64>,
    /// `π(ℰʲ)`; empty for models given directly by rates.
    pub valley_mass: Vec<f64>,
    /// `Cap(ℰʲ, ℰ̆ʲ)`; empty for models given directly by rates.
    pub capacities: Vec<f64>,
    /// Largest relative gap in `π(ℰʲ) λ̄(j) = θ Cap(ℰʲ, ℰ̆ʲ)`.
    pub identity_deviation: f64,
}

impl ReducedModel {
    /// A model given directly by its off-diagonal rates.
    pub fn from_rates(rates: Vec<Vec<f64>>, theta: f64) -> Result<Self> {
        let n = rates.len();
        if n < 2 || rates.iter().any(|r| r.len() != n) {
            return Err(Error::Input(
                "reduced rates must form a square matrix of size ≥ 2".into(),
            ));
        }
        let mut rates = rates;
        for (j, row) in rates.iter_mut().enumerate() {
            row[j] = 0.0;
            if row.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
                return Err(Error::Input(format!(
                    "negative or non-finite rate in row {}",
                    j + 1
                )));
            }
        }
        let holding_rates = rates.iter().map(|r| r.iter().sum()).collect();
        Ok(Self {
            valley_count: n,
            theta,
            rates,
            holding_rates,
            valley_mass: Vec::new(),
            capacities: Vec::new(),
            identity_deviation: 0.0,
        })
    }

    /// Generator on `{0, …, n-1}` with diagonal `-λ̄`.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.valley_count;
        DMatrix::from_fn(n, n, |j, k| {
            if j == k {
                -self.holding_rates[j]
            } else {
                self.rates[j][k]
            }
        })
    }

    /// `e^{tL}` of the reduced chain.
    pub fn transition_matrix(&self, t: f64) -> DMatrix<f64> {
        expm_generator(&self.generator(), t)
    }

    pub fn identity_holds(&self) -> bool {
        self.identity_deviation <= config().identity
    }
}

/// Dense generator of the reduced chain.
pub fn reduced_generator(model: &ReducedModel) -> DMatrix<f64> {
    model.generator()
}

fn check_partition(chain: &Chain, partition: &Partition) -> Result<()> {
    if partition.state_count() != chain.len() {
        return Err(Error::BadPartition(format!(
            "partition covers {} states, chain has {}",
            partition.state_count(),
            chain.len()
        )));
    }
    partition.require_reducible()
}

fn mass(pi: &[f64], set: &[usize]) -> f64 {
    set.iter().map(|&i| pi[i]).sum()
}

/// Per-valley `(π(ℰʲ), h(ℰʲ, ℰ̆ʲ), Cap(ℰʲ, ℰ̆ʲ))`.
fn valley_potentials(
    chain: &Chain,
    pi: &[f64],
    partition: &Partition,
) -> Result<Vec<(f64, Vec<f64>, f64)>> {
    (0..partition.valley_count())
        .map(|j| {
            let s = equilibrium_potential(chain, pi, partition.valley(j), &partition.others(j))?;
            Ok((mass(pi, partition.valley(j)), s.h, s.capacity))
        })
        .collect()
}

/// `r(k,j) = (θ / π(ℰᵏ)) Σ_{ζ∈ℰᵏ} π(ζ) Σ_ξ R(ζ,ξ) h_j(ξ)` with `h_j = h(ℰʲ, ℰ̆ʲ)`, i.e. the
/// `π`-averaged rate at which the trace on the valleys jumps from `ℰᵏ` to `ℰʲ`.
/// Without `theta` the smallest valley time scale is used.
pub fn coarse_rates(
    chain: &Chain,
    pi: &[f64],
    partition: &Partition,
    theta: Option<f64>,
) -> Result<ReducedModel> {
    check_partition(chain, partition)?;
    let n = partition.valley_count();
    let sols = valley_potentials(chain, pi, partition)?;
    let theta = match theta {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(Error::Input(format!("theta must be positive, got {t}"))),
        None => sols
            .iter()
            .map(|(m, _, c)| m / c)
            .fold(f64::INFINITY, f64::min),
    };
    let mut rates = vec![vec![0.0; n]; n];
    for (j, (_, h, _)) in sols.iter().enumerate() {
        for k in 0..n {
            if k == j {
                continue;
            }
            let flux: f64 = partition
                .valley(k)
                .iter()
                .map(|&z| {
                    pi[z]
                        * chain
                            .out_edges(z)
                            .iter()
                            .map(|&(x, r)| r * h[x])
                            .sum::<f64>()
                })
                .sum();
            rates[k][j] = theta * flux / sols[k].0;
        }
    }
    let holding_rates: Vec<f64> = rates.iter().map(|r| r.iter().sum()).collect();
    let identity_deviation = sols
        .iter()
        .zip(&holding_rates)
        .map(|((m, _, c), l)| rel_dev(m * l, theta * c))
        .fold(0.0, f64::max);
    Ok(ReducedModel {
        valley_count: n,
        theta,
        rates,
        holding_rates,
        valley_mass: sols.iter().map(|s| s.0).collect(),
        capacities: sols.iter().map(|s| s.2).collect(),
        identity_deviation,
    })
}

/// `π(ℰʲ) / Cap(ℰʲ, ℰ̆ʲ)`.
pub fn timescale(chain: &Chain, pi: &[f64], partition: &Partition, j: usize) -> Result<f64> {
    check_partition(chain, partition)?;
    if j >= partition.valley_count() {
        return Err(Error::BadPartition(format!(
            "no valley with index {}",
            j + 1
        )));
    }
    let cap = capacity(chain, pi, partition.valley(j), &partition.others(j))?;
    Ok(mass(pi, partition.valley(j)) / cap)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timescales {
    pub values: Vec<f64>,
    /// Largest over smallest; far from 1 signals several time scales.
    pub spread: f64,
}

pub fn timescales(chain: &Chain, pi: &[f64], partition: &Partition) -> Result<Timescales> {
    let values = (0..partition.valley_count())
        .map(|j| timescale(chain, pi, partition, j))
        .collect::<Result<Vec<_>>>()?;
    let max = values.iter().copied().fold(0.0, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Timescales {
        values,
        spread: max / min,
    })
}

/// `p(j,k) = P_𝔡[H_{ℰᵏ} < H_{ℰ̆^{j,k}}]` on the chain with `ℰʲ` collapsed to `𝔡`,
/// for every `k`, with `p(j,j) = 0`.
pub fn jump_probabilities(
    chain: &Chain,
    pi: &[f64],
    partition: &Partition,
    j: usize,
) -> Result<Vec<f64>> {
    check_partition(chain, partition)?;
    let n = partition.valley_count();
    if j >= n {
        return Err(Error::BadPartition(format!(
            "no valley with index {}",
            j + 1
        )));
    }
    let mut p = vec![0.0; n];
    if n == 2 {
        p[1 - j] = 1.0;
        return Ok(p);
    }
    let col = collapse_chain(chain, pi, partition.valley(j))?;
    let m = col.chain.len();
    // valley of each collapsed-chain state other than 𝔡
    let mut target = vec![None; m];
    for (q, &i) in col.kept.iter().enumerate() {
        target[q] = partition.valley_of(i);
    }
    let boundary: Vec<bool> = target.iter().map(Option::is_some).collect();
    let sys = InteriorSystem::new(&col.chain, &boundary);
    let rhs: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            sys.interior()
                .iter()
                .map(|&q| {
                    col.chain
                        .out_edges(q)
                        .iter()
                        .filter(|&&(x, _)| target[x] == Some(k))
                        .map(|&(_, r)| r)
                        .sum()
                })
                .collect()
        })
        .collect();
    let sols = sys.solve(&rhs)?;
    let d = sys
        .position(col.collapsed())
        .expect("collapsed state is interior");
    for k in 0..n {
        if k != j {
            p[k] = sols[k][d].clamp(0.0, 1.0);
        }
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > config().relative * 10.0 {
        return Err(Error::SolverFailure(format!(
            "jump probabilities sum to {total}"
        )));
    }
    Ok(p)
}

/// `π(ℰʲ) r(j,k)` for reversible chains through
/// `θ/2 [Cap(ℰʲ,ℰ̆ʲ) + Cap(ℰᵏ,ℰ̆ᵏ) - Cap(ℰʲ∪ℰᵏ, ℰ̆^{j,k})]`, the last term zero
/// when there is no third valley.
pub fn three_capacity_flux(
    chain: &Chain,
    pi: &[f64],
    partition: &Partition,
    theta: f64,
    j: usize,
    k: usize,
) -> Result<f64> {
    let cj = capacity(chain, pi, partition.valley(j), &partition.others(j))?;
    let ck = capacity(chain, pi, partition.valley(k), &partition.others(k))?;
    let rest = partition.others2(j, k);
    let cjk = if rest.is_empty() {
        0.0
    } else {
        let mut both = partition.valley(j).to_vec();
        both.extend_from_slice(partition.valley(k));
        capacity(chain, pi, &both, &rest)?
    };
    Ok(0.5 * theta * (cj + ck - cjk))
}

/// The condition ratios for one valley.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValleyConditions {
    pub valley: usize,
    /// Label of the `π`-maximal state used as reference point.
    pub reference: String,
    /// `max_{η≠ξ} Cap(ℰʲ, ℰ̆ʲ) / Cap({η}, {ξ})`, zero for a singleton valley.
    pub capacity_ratio: f64,
    /// `π(Δ) / π(ℰʲ)`.
    pub delta_ratio: f64,
    /// `max_{η∈ℰʲ} π(Δ) / π(η)`.
    pub delta_point_ratio: f64,
    /// `π(Δ) / (π(ℰʲ) λ̄(j))`.
    pub delta_holding_ratio: f64,
    /// Relaxation time of the chain reflected at `ℰʲ`; `None` when the reflection is
    /// reducible or too large.
    pub relaxation_time: Option<f64>,
    pub relaxation_ratio: Option<f64>,
    /// `max_k π(ℰᵏ) / min_l π(ℰˡ) · t_rel / θ`.
    pub relaxation_composite: Option<f64>,
    /// Why the relaxation entries are missing.
    pub relaxation_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub theta: f64,
    pub delta_mass: f64,
    pub valleys: Vec<ValleyConditions>,
}

/// `π`-maximal state of a valley; ties go to the smallest label.
pub fn reference_state(chain: &Chain, pi: &[f64], valley: &[usize]) -> usize {
    let top = valley.iter().map(|&i| pi[i]).fold(0.0, f64::max);
    valley
        .iter()
        .copied()
        .filter(|&i| pi[i] >= top * (1.0 - 1e-12))
        .min_by(|&a, &b| chain.label(a).cmp(chain.label(b)))
        .expect("valleys are nonempty")
}

/// Computes every condition ratio exactly. No verdicts: the ratios are meant to be
/// compared across a model family.
pub fn check_conditions(
    chain: &Chain,
    pi: &[f64],
    partition: &Partition,
    theta: f64,
) -> Result<ConditionReport> {
    let model = coarse_rates(chain, pi, partition, Some(theta))?;
    let delta_mass = mass(pi, partition.delta());
    let spread = model.valley_mass.iter().copied().fold(0.0, f64::max)
        / model
            .valley_mass
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
    let mut valleys = Vec::with_capacity(partition.valley_count());
    for j in 0..partition.valley_count() {
        let v = partition.valley(j);
        let xi = reference_state(chain, pi, v);
        let others: Vec<usize> = v.iter().copied().filter(|&i| i != xi).collect();
        let capacity_ratio = if others.is_empty() {
            0.0
        } else {
            let points = point_capacities(chain, pi, &others, xi)?;
            let least = points.iter().copied().fold(f64::INFINITY, f64::min);
            model.capacities[j] / least
        };
        let valley_mass = model.valley_mass[j];
        let least_point = v.iter().map(|&i| pi[i]).fold(f64::INFINITY, f64::min);
        let (relaxation_time, relaxation_note) = if v.len() == 1 {
            (Some(0.0), None)
        } else {
            match reflected_chain(chain, v) {
                Ok(r) => {
                    let local: Vec<f64> = v.iter().map(|&i| pi[i] / valley_mass).collect();
                    match spectral_gap(&r, &local) {
                        Ok(g) => (Some(g.relaxation_time), None),
                        Err(e) => (None, Some(e.to_string())),
                    }
                }
                Err(e) => (None, Some(e.to_string())),
            }
        };
        valleys.push(ValleyConditions {
            valley: j + 1,
            reference: chain.label(xi).to_string(),
            capacity_ratio,
            delta_ratio: delta_mass / valley_mass,
            delta_point_ratio: delta_mass / least_point,
            delta_holding_ratio: delta_mass / valley_mass / model.holding_rates[j],
            relaxation_time,
            relaxation_ratio: relaxation_time.map(|t| t / theta),
            relaxation_composite: relaxation_time.map(|t| spread * t / theta),
            relaxation_note,
        });
    }
    Ok(ConditionReport {
        theta,
        delta_mass,
        valleys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, stationary};
    use crate::random::{random_chain, random_partition, rng};

    fn path(n: usize) -> Chain {
        let labels: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
        let mut edges = Vec::new();
        for i in 0..n - 1 {
            edges.push((i, i + 1, 1.0));
            edges.push((i + 1, i, 1.0));
        }
        Chain::from_indexed(labels, edges).unwrap()
    }

    #[test]
    fn birth_death_rates() {
        let c = path(3);
        let pi = stationary(&c).unwrap();
        let p = Partition::new(3, vec![vec![0], vec![2]]).unwrap();
        let m = coarse_rates(&c, &pi, &p, Some(1.0)).unwrap();
        assert!((m.rates[0][1] - 0.5).abs() < 1e-14 && (m.rates[1][0] - 0.5).abs() < 1e-14);
        assert!((m.valley_mass[0] * m.holding_rates[0] - 1.0 / 6.0).abs() < 1e-14);
        assert!(m.identity_holds());
        assert!((timescale(&c, &pi, &p, 0).unwrap() - 2.0).abs() < 1e-13);
        let d = coarse_rates(&c, &pi, &p, None).unwrap();
        assert!((d.theta - 2.0).abs() < 1e-13 && (d.rates[0][1] - 1.0).abs() < 1e-13);
        let scaled = coarse_rates(&c, &pi, &p, Some(3.0)).unwrap();
        assert!((scaled.rates[1][0] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn jump_probability_examples() {
        let c = path(5);
        let pi = stationary(&c).unwrap();
        let p = Partition::new(5, vec![vec![0], vec![2], vec![4]]).unwrap();
        let q = jump_probabilities(&c, &pi, &p, 1).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-14 && (q[2] - 0.5).abs() < 1e-14 && q[1] == 0.0);
        let two = Partition::new(5, vec![vec![0, 1], vec![4]]).unwrap();
        assert_eq!(
            jump_probabilities(&c, &pi, &two, 0).unwrap(),
            vec![0.0, 1.0]
        );
    }

    #[test]
    fn rates_match_jump_probabilities_and_three_capacities() {
        for s in 0..20 {
            let mut r = rng(21, s);
            let c = random_chain(&mut r, 14, 0.3, s % 2 == 0);
            let pi = stationary(&c).unwrap();
            let p = random_partition(&mut r, 14, 3);
            let m = coarse_rates(&c, &pi, &p, Some(1.7)).unwrap();
            assert!(m.identity_deviation <= 1e-9);
            for j in 0..3 {
                let q = jump_probabilities(&c, &pi, &p, j).unwrap();
                for k in 0..3 {
                    if k != j {
                        let want = m.holding_rates[j] * q[k];
                        assert!(
                            rel_dev(m.rates[j][k], want) <= 1e-9,
                            "{} {want}",
                            m.rates[j][k]
                        );
                        if s % 2 == 0 {
                            let flux = three_capacity_flux(&c, &pi, &p, 1.7, j, k).unwrap();
                            assert!(rel_dev(flux, m.valley_mass[j] * m.rates[j][k]) <= 1e-8);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn condition_examples() {
        let c = path(3);
        let pi = stationary(&c).unwrap();
        let p = Partition::new(3, vec![vec![0], vec![2]]).unwrap();
        let r = check_conditions(&c, &pi, &p, 2.0).unwrap();
        assert_eq!(r.valleys[0].capacity_ratio, 0.0);
        assert!((r.valleys[0].delta_point_ratio - 1.0).abs() < 1e-14);
        assert_eq!(r.valleys[0].relaxation_time, Some(0.0));

        let c3 = build_chain(
            &["1", "2", "3"],
            &[("1", "2", 1.0), ("2", "3", 1.0), ("3", "1", 1.0)],
        )
        .unwrap();
        let pi = stationary(&c3).unwrap();
        let p = Partition::new(3, vec![vec![0, 1], vec![2]]).unwrap();
        let r = check_conditions(&c3, &pi, &p, 1.0).unwrap();
        assert!(r.valleys[0].relaxation_time.is_none());
        assert!(r.valleys[0].relaxation_note.is_some());
        assert_eq!(r.valleys[0].reference, "1");
    }

    #[test]
    fn reduced_semigroup() {
        let m = ReducedModel::from_rates(vec![vec![0.0, 0.5], vec![0.5, 0.0]], 2.0).unwrap();
        assert_eq!(m.transition_matrix(0.0), DMatrix::identity(2, 2));
        let m = ReducedModel::from_rates(vec![vec![0.0, 1.0], vec![1.0, 0.0]], 1.0).unwrap();
        let p = m.transition_matrix(1.0);
        assert!((p[(0, 0)] - (1.0 + (-2.0f64).exp()) / 2.0).abs() < 1e-12);
        let g = reduced_generator(&m);
        assert!(g.row(0).sum().abs() < 1e-15);
    }
}
