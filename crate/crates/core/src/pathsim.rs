//! Trajectory simulation, path surgeries and Monte-Carlo validators.
//!
//! Jump times are rounded to the grid of multiples of `ulp(horizon)`. Every duration
//! and every partial sum of durations is then exactly representable, so occupation
//! times, trace lengths and nested traces agree bit for bit.

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::chain::Chain;
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::random::rng;
use crate::reduction::ReducedModel;
use crate::uniformization::transient;

/// Coarse symbol of the separating set; valley `j` is symbol `j + 1`.
pub const DELTA_SYMBOL: usize = 0;

/// A right-continuous piecewise-constant trajectory on `[0, horizon]`, extended
/// constantly beyond the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub start: usize,
    /// `(time, new state)`, times strictly increasing in `(0, horizon]`.
    pub jumps: Vec<(f64, usize)>,
    pub horizon: f64,
}

/// A path over valley symbols, `0` standing for the separating set.
pub type CoarsePath = Path;

impl Path {
    pub fn new(start: usize, jumps: Vec<(f64, usize)>, horizon: f64) -> Result<Self> {
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::BadPath(format!(
                "horizon {horizon} is not a nonnegative number"
            )));
        }
        let mut prev_t = 0.0;
        let mut prev_s = start;
        for &(t, s) in &jumps {
            if !(t > prev_t) || t > horizon {
                return Err(Error::BadPath(format!(
                    "jump time {t} out of order or range"
                )));
            }
            if s == prev_s {
                return Err(Error::BadPath(format!("jump at {t} does not change state")));
            }
            prev_t = t;
            prev_s = s;
        }
        Ok(Self {
            start,
            jumps,
            horizon,
        })
    }

    /// State at time `t`.
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jumps.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            self.start
        } else {
            self.jumps[k - 1].1
        }
    }

    /// `(state, from, to)` sojourns covering `[0, horizon]`.
    pub fn sojourns(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::with_capacity(self.jumps.len() + 1);
        let (mut s, mut t) = (self.start, 0.0);
        for &(u, x) in &self.jumps {
            out.push((s, t, u));
            s = x;
            t = u;
        }
        out.push((s, t, self.horizon));
        out
    }

    pub fn final_state(&self) -> usize {
        self.jumps.last().map_or(self.start, |j| j.1)
    }

    /// Builds a path from sojourns, merging equal neighbours and dropping empty ones.
    fn from_sojourns(sojourns: impl IntoIterator<Item = (usize, f64)>) -> Option<Self> {
        let mut start = None;
        let mut jumps: Vec<(f64, usize)> = Vec::new();
        let mut clock = 0.0;
        for (s, len) in sojourns {
            if len <= 0.0 {
                continue;
            }
            match start {
                None => start = Some(s),
                Some(first) => {
                    let last = jumps.last().map_or(first, |j| j.1);
                    if last != s {
                        jumps.push((clock, s));
                    }
                }
            }
            clock += len;
        }
        start.map(|start| Self {
            start,
            jumps,
            horizon: clock,
        })
    }

    /// `time,state` lines, one per event, starting with the initial state.
    pub fn to_csv(&self, label: impl Fn(usize) -> String) -> String {
        let mut out = String::from("time,state\n");
        let _ = writeln!(out, "0,{}", label(self.start));
        for &(t, s) in &self.jumps {
            let _ = writeln!(out, "{t:?},{}", label(s));
        }
        out
    }
}

/// Jump structure of a chain, explicit or enumerated on the fly.
pub trait JumpKernel: Sync {
    fn holding_rate(&self, state: usize) -> f64;
    /// Calls `f(target, rate)` for every positive-rate jump out of `state`.
    fn for_each_jump(&self, state: usize, f: &mut dyn FnMut(usize, f64));
}

impl JumpKernel for Chain {
    fn holding_rate(&self, state: usize) -> f64 {
        Chain::holding_rate(self, state)
    }

    fn for_each_jump(&self, state: usize, f: &mut dyn FnMut(usize, f64)) {
        for &(j, r) in self.out_edges(state) {
            f(j, r);
        }
    }
}

/// Initial condition of a simulation.
#[derive(Debug, Clone, Copy)]
pub enum Start<'a> {
    State(usize),
    Law(&'a [f64]),
}

fn grid_step(horizon: f64) -> f64 {
    f64::from_bits(horizon.to_bits() + 1) - horizon
}

/// One trajectory on `[0, horizon]` drawn from `r`.
pub fn simulate_with<K: JumpKernel + ?Sized, R: Rng>(
    kernel: &K,
    start: Start<'_>,
    horizon: f64,
    r: &mut R,
) -> Result<Path> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Input(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let mut state = match start {
        Start::State(s) => s,
        Start::Law(w) => {
            let u: f64 = r.gen();
            let mut acc = 0.0;
            let mut pick = w.len() - 1;
            for (i, p) in w.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        }
    };
    let first = state;
    let q = grid_step(horizon);
    let mut t = 0.0;
    let mut jumps = Vec::new();
    loop {
        let lambda = kernel.holding_rate(state);
        if lambda <= 0.0 {
            break;
        }
        let u: f64 = r.gen();
        let next_t = ((t - (1.0 - u).ln() / lambda) / q).round() * q;
        let next_t = next_t.max(t + q);
        if next_t > horizon {
            break;
        }
        let target = lambda * r.gen::<f64>();
        let mut acc = 0.0;
        let mut chosen = None;
        let mut last = state;
        kernel.for_each_jump(state, &mut |j, rate| {
            acc += rate;
            last = j;
            if chosen.is_none() && target < acc {
                chosen = Some(j);
            }
        });
        // rounding can leave `target` just above the accumulated total
        let next = chosen.unwrap_or(last);
        t = next_t;
        state = next;
        jumps.push((t, state));
    }
    Ok(Path {
        start: first,
        jumps,
        horizon,
    })
}

/// One trajectory with the stream `(seed, 0)`.
pub fn simulate(chain: &Chain, start: Start<'_>, horizon: f64, seed: u64) -> Result<Path> {
    simulate_with(chain, start, horizon, &mut rng(seed, 0))
}

/// Total time spent in `F` on `[0, horizon]`.
pub fn occupation_time(path: &Path, in_f: impl Fn(usize) -> bool) -> f64 {
    path.sojourns()
        .iter()
        .filter(|s| in_f(s.0))
        .map(|s| s.2 - s.1)
        .sum()
}

/// Time spent in `F` on `[0, t]`.
pub fn occupation_until(path: &Path, in_f: impl Fn(usize) -> bool, t: f64) -> f64 {
    path.sojourns()
        .iter()
        .filter(|s| in_f(s.0) && s.1 < t)
        .map(|s| s.2.min(t) - s.1)
        .sum()
}

/// The right-continuous generalized inverse `S_F` of `t ↦ T_F(t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeChange {
    /// `(trace time, real time)` at the start of each `F`-sojourn.
    pub knots: Vec<(f64, f64)>,
    /// `T_F(horizon)`.
    pub total: f64,
}

impl TimeChange {
    /// `S_F(u) = sup{t : T_F(t) ≤ u}`, evaluated on `[0, total)`.
    pub fn eval(&self, u: f64) -> f64 {
        let k = self.knots.partition_point(|&(v, _)| v <= u);
        if k == 0 {
            return f64::NAN;
        }
        let (v, t) = self.knots[k - 1];
        t + (u - v)
    }
}

pub fn time_change(path: &Path, in_f: impl Fn(usize) -> bool) -> TimeChange {
    let mut knots = Vec::new();
    let mut clock = 0.0;
    for (s, a, b) in path.sojourns() {
        if in_f(s) && b > a {
            knots.push((clock, a));
            clock += b - a;
        }
    }
    TimeChange {
        knots,
        total: clock,
    }
}

/// `η_F(u) = η(S_F(u))`: the path with its excursions outside `F` cut out.
pub fn trace_path(path: &Path, in_f: impl Fn(usize) -> bool) -> Result<Path> {
    let sojourns = path.sojourns();
    Path::from_sojourns(
        sojourns
            .iter()
            .filter(|s| in_f(s.0))
            .map(|s| (s.0, s.2 - s.1)),
    )
    .ok_or_else(|| Error::BadPath("path never visits the set".into()))
}

/// Overwrites every separating-set interval by the last valley visited before it.
pub fn last_passage_path(coarse: &CoarsePath) -> Result<Path> {
    if coarse.start == DELTA_SYMBOL {
        return Err(Error::StartsInDelta);
    }
    let mut jumps: Vec<(f64, usize)> = Vec::new();
    let mut last = coarse.start;
    for &(t, s) in &coarse.jumps {
        if s != DELTA_SYMBOL && s != last {
            jumps.push((t, s));
            last = s;
        }
    }
    Ok(Path {
        start: coarse.start,
        jumps,
        horizon: coarse.horizon,
    })
}

/// Which coarse projection to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// Valleys to their symbols, the separating set to `0`.
    Phi,
    /// Valleys to their symbols; the path must stay in the valleys.
    Psi,
}

/// Projects a path through a valley map (`None` for the separating set).
pub fn project_by(
    path: &Path,
    valley_of: impl Fn(usize) -> Option<usize>,
    mode: Projection,
) -> Result<CoarsePath> {
    let symbol = |s: usize| valley_of(s).map_or(DELTA_SYMBOL, |j| j + 1);
    if mode == Projection::Psi {
        for (s, a, _) in path.sojourns() {
            if valley_of(s).is_none() {
                return Err(Error::OutsideValleys { time: a });
            }
        }
    }
    let start = symbol(path.start);
    let mut last = start;
    let mut jumps = Vec::new();
    for &(t, s) in &path.jumps {
        let c = symbol(s);
        if c != last {
            jumps.push((t, c));
            last = c;
        }
    }
    Ok(Path {
        start,
        jumps,
        horizon: path.horizon,
    })
}

pub fn project(path: &Path, partition: &Partition, mode: Projection) -> Result<CoarsePath> {
    project_by(path, |s| partition.valley_of(s), mode)
}

fn ramp(m: f64, t: f64) -> f64 {
    if t <= m - 1.0 {
        1.0
    } else if t >= m {
        0.0
    } else {
        m - t
    }
}

/// Piecewise-linear increasing map through `nodes` (sorted in both coordinates).
struct Reparam<'a> {
    nodes: &'a [(f64, f64)],
}

impl Reparam<'_> {
    fn eval(&self, t: f64) -> f64 {
        interpolate(self.nodes.iter().map(|&(a, b)| (a, b)), t)
    }

    fn inverse(&self, y: f64) -> f64 {
        interpolate(self.nodes.iter().map(|&(a, b)| (b, a)), y)
    }
}

fn interpolate(nodes: impl Iterator<Item = (f64, f64)>, x: f64) -> f64 {
    let nodes: Vec<(f64, f64)> = nodes.collect();
    let k = nodes
        .partition_point(|&(a, _)| a <= x)
        .clamp(1, nodes.len() - 1);
    let (x0, y0) = nodes[k - 1];
    let (x1, y1) = nodes[k];
    if x1 == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// `max(sup|λ_t - t|, sup|g_m(λ_t) ω(λ_t) - g_m(t) ω'(t)|)` over `[0, m]` for one
/// piecewise-linear `λ`, evaluated exactly: both terms are piecewise linear between
/// the collected breakpoints.
fn candidate_cost(omega: &Path, omega_p: &Path, nodes: &[(f64, f64)], m: f64) -> f64 {
    let lam = Reparam { nodes };
    let mut cost = nodes
        .iter()
        .map(|&(t, l)| (l - t).abs())
        .fold(0.0, f64::max);
    let mut cuts: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    cuts.extend(
        omega_p
            .jumps
            .iter()
            .map(|j| j.0)
            .filter(|&t| t > 0.0 && t < m),
    );
    cuts.extend(
        omega
            .jumps
            .iter()
            .map(|j| j.0)
            .filter(|&t| t > 0.0 && t < m)
            .map(|t| lam.inverse(t)),
    );
    if m > 1.0 {
        cuts.push(m - 1.0);
        cuts.push(lam.inverse(m - 1.0));
    }
    cuts.retain(|&t| (0.0..=m).contains(&t));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        let v = omega.state_at(lam.eval(mid)) as f64;
        let vp = omega_p.state_at(mid) as f64;
        for t in [a, b] {
            let diff = ramp(m, lam.eval(t)) * v - ramp(m, t) * vp;
            cost = cost.max(diff.abs());
        }
    }
    cost
}

/// Upper bound on `d_m(ω, ω')` from reparameterizations matching the first `i` jumps
/// of both paths in order, optionally pinned at `m - 1`.
fn dm_upper(omega: &Path, omega_p: &Path, m: f64) -> f64 {
    let inside = |p: &Path| -> Vec<f64> {
        p.jumps
            .iter()
            .map(|j| j.0)
            .filter(|&t| t > 0.0 && t < m)
            .collect()
    };
    let (jw, jp) = (inside(omega), inside(omega_p));
    let mut best = f64::INFINITY;
    for i in 0..=jw.len().min(jp.len()) {
        let mut nodes = vec![(0.0, 0.0)];
        nodes.extend(jp[..i].iter().zip(&jw[..i]).map(|(&a, &b)| (a, b)));
        let mut full = nodes.clone();
        full.push((m, m));
        best = best.min(candidate_cost(omega, omega_p, &full, m));
        if m > 1.0 && nodes.iter().all(|&(a, b)| a < m - 1.0 && b < m - 1.0) && i > 0 {
            nodes.push((m - 1.0, m - 1.0));
            nodes.push((m, m));
            best = best.min(candidate_cost(omega, omega_p, &nodes, m));
        }
    }
    best
}

/// Upper bound on the Skorohod-type distance `Σ_{m ≤ m_max} 2^{-m} min(1, d_m)`, each
/// `d_m` bounded by the best of a family of jump-matching reparameterizations. Paths
/// are compared as integer-valued, with `0` for the separating set.
pub fn skorohod_distance(p1: &CoarsePath, p2: &CoarsePath, m_max: u32) -> f64 {
    if p1.start == p2.start && p1.jumps == p2.jumps {
        return 0.0;
    }
    let one_way = |a: &Path, b: &Path| -> f64 {
        (1..=m_max)
            .map(|m| 0.5f64.powi(m as i32) * dm_upper(a, b, m as f64).min(1.0))
            .sum()
    };
    one_way(p1, p2).min(one_way(p2, p1))
}

/// Runs `trials` independent jobs on up to `jobs` threads; results come back in
/// trial order.
pub fn run_trials<T: Send>(trials: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let jobs = jobs.max(1).min(trials.max(1));
    if jobs == 1 {
        return (0..trials).map(f).collect();
    }
    let chunk = trials.div_ceil(jobs);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                scope.spawn(move || {
                    (w * chunk..((w + 1) * chunk).min(trials))
                        .map(f)
                        .collect::<Vec<T>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Stream index of trial `trial` for start `slot`.
pub fn stream_index(slot: usize, trial: usize) -> u64 {
    ((slot as u64) << 32) | trial as u64
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Shared Monte-Carlo setup: the kernel, the valley map and the start states.
pub struct Sampler<'a, K: JumpKernel + ?Sized> {
    pub kernel: &'a K,
    pub valley_of: &'a (dyn Fn(usize) -> Option<usize> + Sync),
    /// `(valley, start state)` pairs.
    pub starts: Vec<(usize, usize)>,
    pub theta: f64,
    pub trials: usize,
    pub seed: u64,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct T2Row {
    pub valley: usize,
    pub start: usize,
    /// Mean of `∫₀ᵗ χ_Δ(η(sθ)) ds`.
    pub mean: f64,
    pub stderr: f64,
    /// Fraction of trials reaching another valley by rescaled time `δ`, when asked.
    pub escape: Option<f64>,
    pub escape_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct T2Estimate {
    pub horizon: f64,
    pub rows: Vec<T2Row>,
    pub worst: f64,
}

/// Time spent in the separating set up to rescaled time `t`, per start valley.
pub fn estimate_t2<K: JumpKernel + ?Sized>(
    s: &Sampler<'_, K>,
    t: f64,
    escape_delta: Option<f64>,
) -> Result<T2Estimate> {
    let horizon = t * s.theta;
    let mut rows = Vec::new();
    for (slot, &(valley, start)) in s.starts.iter().enumerate() {
        let results = run_trials(s.trials, s.jobs, |trial| -> Result<(f64, Option<bool>)> {
            let mut r = rng(s.seed, stream_index(slot, trial));
            let path = simulate_with(s.kernel, Start::State(start), horizon, &mut r)?;
            let occ = occupation_time(&path, |x| (s.valley_of)(x).is_none()) / s.theta;
            let escaped = escape_delta.map(|d| {
                let limit = d * s.theta;
                std::iter::once((0.0, path.start))
                    .chain(path.jumps.iter().copied())
                    .take_while(|&(u, _)| u <= limit)
                    .any(|(_, x)| matches!((s.valley_of)(x), Some(k) if k != valley))
            });
            Ok((occ, escaped))
        });
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let occ: Vec<f64> = results.iter().map(|r| r.0).collect();
        let (mean, stderr) = mean_and_stderr(&occ);
        let (escape, escape_stderr) = if escape_delta.is_some() {
            let hits: Vec<f64> = results
                .iter()
                .map(|r| if r.1 == Some(true) { 1.0 } else { 0.0 })
                .collect();
            let (p, se) = mean_and_stderr(&hits);
            (Some(p), Some(se))
        } else {
            (None, None)
        };
        rows.push(T2Row {
            valley: valley + 1,
            start,
            mean,
            stderr,
            escape,
            escape_stderr,
        });
    }
    let worst = rows.iter().map(|r| r.mean).fold(0.0, f64::max);
    Ok(T2Estimate {
        horizon: t,
        rows,
        worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub s: f64,
    pub probability: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sup91Row {
    pub valley: usize,
    pub start: usize,
    pub grid: Vec<GridPoint>,
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sup91Estimate {
    pub delta: f64,
    pub rows: Vec<Sup91Row>,
    pub worst: f64,
}

/// Number of grid points in `[δ, 2δ]`.
pub const GRID_POINTS: usize = 16;

/// `max_{s ∈ grid} P[η(sθ) ∈ Δ]` over a uniform 16-point grid of `[δ, 2δ]`, per start.
pub fn estimate_91<K: JumpKernel + ?Sized>(
    s: &Sampler<'_, K>,
    delta: f64,
) -> Result<Sup91Estimate> {
    if !(delta > 0.0) {
        return Err(Error::Input(format!("delta must be positive, got {delta}")));
    }
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| delta + delta * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let mut rows = Vec::new();
    for (slot, &(valley, start)) in s.starts.iter().enumerate() {
        let hits = run_trials(s.trials, s.jobs, |trial| -> Result<Vec<bool>> {
            let mut r = rng(s.seed, stream_index(slot, trial));
            let path = simulate_with(s.kernel, Start::State(start), 2.0 * delta * s.theta, &mut r)?;
            Ok(grid
                .iter()
                .map(|&u| (s.valley_of)(path.state_at(u * s.theta)).is_none())
                .collect())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let points: Vec<GridPoint> = grid
            .iter()
            .enumerate()
            .map(|(g, &u)| {
                let xs: Vec<f64> = hits.iter().map(|h| if h[g] { 1.0 } else { 0.0 }).collect();
                let (p, se) = mean_and_stderr(&xs);
                GridPoint {
                    s: u,
                    probability: p,
                    stderr: se,
                }
            })
            .collect();
        let sup = points.iter().map(|p| p.probability).fold(0.0, f64::max);
        rows.push(Sup91Row {
            valley: valley + 1,
            start,
            grid: points,
            sup,
        });
    }
    let worst = rows.iter().map(|r| r.sup).fold(0.0, f64::max);
    Ok(Sup91Estimate { delta, rows, worst })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FddPoint {
    pub t: f64,
    /// Empirical law of the valley symbol, indexed by valley.
    pub empirical: Vec<f64>,
    /// Empirical mass of the separating set.
    pub empirical_delta: f64,
    /// Row of the reduced semigroup.
    pub reduced: Vec<f64>,
    /// `½ (Σ_S |empirical - reduced| + empirical_delta)`.
    pub tv: f64,
    /// `½ Σ` of the per-symbol standard errors, a scale for the Monte-Carlo noise in `tv`.
    pub tv_stderr: f64,
    /// Exact law of the projected full chain (valleys, then the separating set), when
    /// the chain is small enough.
    pub exact: Option<Vec<f64>>,
    /// Total variation between the empirical and the exact law.
    pub tv_exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FddRow {
    pub valley: usize,
    pub start: usize,
    pub points: Vec<FddPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FddTable {
    pub rows: Vec<FddRow>,
    pub worst_tv: f64,
    pub worst_tv_exact: Option<f64>,
}

/// Empirical one-time marginals of the coarse process at rescaled times `grid`,
/// against the reduced model and, when `oracle` is given, the exact projected law.
pub fn fdd_compare<K: JumpKernel + ?Sized>(
    s: &Sampler<'_, K>,
    reduced: &ReducedModel,
    grid: &[f64],
    oracle: Option<&Chain>,
) -> Result<FddTable> {
    let n = reduced.valley_count;
    let t_max = grid.iter().copied().fold(0.0, f64::max);
    let mut rows = Vec::new();
    for (slot, &(valley, start)) in s.starts.iter().enumerate() {
        let symbols = run_trials(s.trials, s.jobs, |trial| -> Result<Vec<Option<usize>>> {
            let mut r = rng(s.seed, stream_index(slot, trial));
            let horizon = (t_max * s.theta).max(f64::MIN_POSITIVE);
            let path = simulate_with(s.kernel, Start::State(start), horizon, &mut r)?;
            Ok(grid
                .iter()
                .map(|&u| (s.valley_of)(path.state_at(u * s.theta)))
                .collect())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let trials = symbols.len().max(1) as f64;
        let mut points = Vec::new();
        for (g, &t) in grid.iter().enumerate() {
            let mut counts = vec![0.0; n + 1];
            for sym in &symbols {
                match sym[g] {
                    Some(k) => counts[k] += 1.0,
                    None => counts[n] += 1.0,
                }
            }
            let law: Vec<f64> = counts.iter().map(|c| c / trials).collect();
            let p = reduced.transition_matrix(t);
            let row: Vec<f64> = (0..n).map(|k| p[(valley, k)]).collect();
            let tv = 0.5 * ((0..n).map(|k| (law[k] - row[k]).abs()).sum::<f64>() + law[n]);
            let tv_stderr = 0.5
                * law
                    .iter()
                    .map(|p| (p * (1.0 - p) / trials).sqrt())
                    .sum::<f64>();
            let exact = match oracle {
                Some(chain) => {
                    let mut mu = vec![0.0; chain.len()];
                    mu[start] = 1.0;
                    let dist = transient(chain, &mu, t * s.theta)?;
                    let mut proj = vec![0.0; n + 1];
                    for (i, p) in dist.iter().enumerate() {
                        proj[(s.valley_of)(i).unwrap_or(n)] += p;
                    }
                    Some(proj)
                }
                None => None,
            };
            let tv_exact = exact
                .as_ref()
                .map(|x| 0.5 * x.iter().zip(&law).map(|(a, b)| (a - b).abs()).sum::<f64>());
            points.push(FddPoint {
                t,
                empirical: law[..n].to_vec(),
                empirical_delta: law[n],
                reduced: row,
                tv,
                tv_stderr,
                exact,
                tv_exact,
            });
        }
        rows.push(FddRow {
            valley: valley + 1,
            start,
            points,
        });
    }
    let all = || rows.iter().flat_map(|r| r.points.iter());
    let worst_tv = all().map(|p| p.tv).fold(0.0, f64::max);
    let worst_tv_exact = if oracle.is_some() {
        Some(all().filter_map(|p| p.tv_exact).fold(0.0, f64::max))
    } else {
        None
    };
    Ok(FddTable {
        rows,
        worst_tv,
        worst_tv_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::build_chain;

    fn b2() -> Chain {
        build_chain(&["1", "2"], &[("1", "2", 2.0), ("2", "1", 3.0)]).unwrap()
    }

    fn sample() -> Path {
        // a: [0,1), x: [1,1.5), a: [1.5,3), y: [3,4), b: [4,6)
        Path::new(0, vec![(1.0, 2), (1.5, 0), (3.0, 3), (4.0, 1)], 6.0).unwrap()
    }

    #[test]
    fn simulation_is_reproducible() {
        let c = b2();
        let a = simulate(&c, Start::State(0), 50.0, 7).unwrap();
        let b = simulate(&c, Start::State(0), 50.0, 7).unwrap();
        assert_eq!(a, b);
        assert!(Path::new(a.start, a.jumps.clone(), a.horizon).is_ok());
        let q = grid_step(50.0);
        assert!(a.jumps.iter().all(|&(t, _)| (t / q).fract() == 0.0));
    }

    #[test]
    fn path_validation() {
        assert!(Path::new(0, vec![(1.0, 0)], 2.0).is_err());
        assert!(Path::new(0, vec![(3.0, 1)], 2.0).is_err());
        assert!(Path::new(0, vec![(1.0, 1), (1.0, 0)], 2.0).is_err());
    }

    #[test]
    fn occupation_examples() {
        let p = sample();
        assert_eq!(occupation_time(&p, |_| true), 6.0);
        assert_eq!(occupation_time(&p, |_| false), 0.0);
        let p2 = Path::new(1, vec![(0.5, 2), (1.0, 1), (2.0, 2), (2.25, 1)], 3.0).unwrap();
        assert_eq!(occupation_time(&p2, |s| s == 2), 0.75);
    }

    #[test]
    fn trace_and_time_change() {
        let p = sample();
        let in_f = |s: usize| s <= 1;
        let tr = trace_path(&p, in_f).unwrap();
        // sojourns a (1) + a (1.5) merge, then b (2)
        assert_eq!(
            tr,
            Path {
                start: 0,
                jumps: vec![(2.5, 1)],
                horizon: 4.5
            }
        );
        let tc = time_change(&p, in_f);
        assert_eq!(tc.total, 4.5);
        assert_eq!(tc.eval(0.5), 0.5);
        assert_eq!(tc.eval(1.0), 1.5);
        assert_eq!(tc.eval(2.5), 4.0);
        for u in [0.0, 0.75, 1.25, 2.375, 3.875] {
            assert_eq!(occupation_until(&p, in_f, tc.eval(u)), u);
        }
        assert_eq!(trace_path(&p, |_| true).unwrap(), p);
    }

    #[test]
    fn last_passage_examples() {
        let c = Path::new(1, vec![(1.0, 0), (2.0, 2), (3.0, 0), (3.5, 2)], 5.0).unwrap();
        let v = last_passage_path(&c).unwrap();
        assert_eq!(v.jumps, vec![(2.0, 2)]);
        let d = Path::new(0, vec![(1.0, 1)], 2.0).unwrap();
        assert_eq!(last_passage_path(&d), Err(Error::StartsInDelta));
        let clean = Path::new(1, vec![(1.0, 2)], 2.0).unwrap();
        assert_eq!(last_passage_path(&clean).unwrap(), clean);
    }

    #[test]
    fn projections() {
        let part = Partition::new(4, vec![vec![0, 1], vec![3]]).unwrap();
        let p = Path::new(0, vec![(1.0, 1), (2.0, 2), (3.0, 3)], 4.0).unwrap();
        let phi = project(&p, &part, Projection::Phi).unwrap();
        assert_eq!(
            phi,
            Path {
                start: 1,
                jumps: vec![(2.0, 0), (3.0, 2)],
                horizon: 4.0
            }
        );
        assert_eq!(
            project(&p, &part, Projection::Psi),
            Err(Error::OutsideValleys { time: 2.0 })
        );
        let inside = Path::new(0, vec![(1.0, 1)], 2.0).unwrap();
        assert!(project(&inside, &part, Projection::Psi)
            .unwrap()
            .jumps
            .is_empty());
    }

    #[test]
    fn skorohod_examples() {
        let a = Path::new(1, vec![], 10.0).unwrap();
        let b = Path::new(2, vec![], 10.0).unwrap();
        assert_eq!(skorohod_distance(&a, &a, 8), 0.0);
        assert_eq!(skorohod_distance(&a, &b, 8), 255.0 / 256.0);
        let eps = 0.01;
        let total: f64 = (1..=8).map(|m| 0.5f64.powi(m)).sum();
        let x = Path::new(1, vec![(2.5, 0)], 10.0).unwrap();
        let y = Path::new(1, vec![(2.5 + eps, 0)], 10.0).unwrap();
        let d = skorohod_distance(&x, &y, 8);
        assert!(d > 0.0 && d <= eps * total + 1e-15, "{d}");
        assert_eq!(d, skorohod_distance(&y, &x, 8));
        let x = Path::new(2, vec![(2.5, 1)], 10.0).unwrap();
        let y = Path::new(2, vec![(2.5 + eps, 1)], 10.0).unwrap();
        assert!(skorohod_distance(&x, &y, 8) <= 2.0 * eps * total + 1e-15);
    }

    #[test]
    fn trials_are_schedule_independent() {
        let f = |i: usize| (i * i) as u64;
        assert_eq!(run_trials(37, 1, f), run_trials(37, 4, f));
        assert_eq!(run_trials(0, 4, f), Vec::<u64>::new());
    }

    #[test]
    fn estimators_with_empty_delta() {
        let c = b2();
        let part = Partition::new(2, vec![vec![0], vec![1]]).unwrap();
        let valley_of = |s: usize| part.valley_of(s);
        let s = Sampler {
            kernel: &c,
            valley_of: &valley_of,
            starts: vec![(0, 0), (1, 1)],
            theta: 1.0,
            trials: 50,
            seed: 1,
            jobs: 2,
        };
        assert_eq!(estimate_t2(&s, 3.0, Some(0.1)).unwrap().worst, 0.0);
        assert_eq!(estimate_91(&s, 0.5).unwrap().worst, 0.0);
        let m = ReducedModel::from_rates(vec![vec![0.0, 2.0], vec![3.0, 0.0]], 1.0).unwrap();
        let f = fdd_compare(&s, &m, &[0.0, 0.4], Some(&c)).unwrap();
        assert_eq!(f.rows[0].points[0].tv, 0.0);
        assert_eq!(f.rows[0].points[0].empirical, vec![1.0, 0.0]);
    }
}
