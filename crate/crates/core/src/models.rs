//! Builders for the example families: glued cubes, zero-range, potential-field walks.

use std::collections::{BTreeMap, HashMap};

use crate::chain::{stationarity_residual, Chain, ProbVector};
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::pathsim::JumpKernel;
use crate::tolerance::config;

/// Largest state count a builder will materialize.
pub const STATE_GUARD: usize = 200_000;

/// A built model: chain, default valleys and a suggested time scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: String,
    pub params: BTreeMap<String, String>,
    pub chain: Chain,
    /// Stationary law from the closed form, verified against the chain.
    pub pi: ProbVector,
    pub partition: Partition,
    /// `None` when the family has no closed-form scale; the reduction default applies.
    pub suggested_theta: Option<f64>,
}

fn verified(chain: &Chain, weights: Vec<f64>) -> Result<ProbVector> {
    let pi = ProbVector::from_weights(weights)?;
    let residual = stationarity_residual(chain, &pi);
    if residual > config().relative * chain.max_rate() {
        return Err(Error::SolverFailure(format!(
            "closed-form stationary law fails stationarity (residual {residual:e})"
        )));
    }
    Ok(pi)
}

fn guard(what: &str, states: usize) -> Result<()> {
    if states > STATE_GUARD {
        return Err(Error::TooLarge {
            what: what.into(),
            states,
            limit: STATE_GUARD,
        });
    }
    Ok(())
}

/// Default valley margin for glued cubes: `⌊√N⌋` clamped to `[1, ⌊(N-1)/2⌋]`.
pub fn glued_cubes_default_ell(n: usize) -> usize {
    (n as f64).sqrt().floor().max(1.0).min(((n - 1) / 2) as f64) as usize
}

/// Geometry of four `d`-cubes of side `N` glued in a ring: the corner `(N,…,N)` of cube
/// `k` is the corner `(1,…,1)` of cube `k+1 mod 4`.
pub struct GluedCubes {
    pub d: usize,
    pub n: usize,
    /// `(cube, coordinates)` of each state, shared corners keyed by the later cube.
    pub points: Vec<(usize, Vec<usize>)>,
    index: HashMap<(usize, Vec<usize>), usize>,
}

impl GluedCubes {
    fn key(&self, k: usize, x: &[usize]) -> (usize, Vec<usize>) {
        if x.iter().all(|&c| c == self.n) {
            ((k + 1) % 4, vec![1; self.d])
        } else {
            (k, x.to_vec())
        }
    }

    pub fn new(d: usize, n: usize) -> Result<Self> {
        let per_cube = n.checked_pow(d as u32).unwrap_or(usize::MAX);
        guard("glued cubes", per_cube.saturating_mul(4))?;
        let mut g = Self {
            d,
            n,
            points: Vec::new(),
            index: HashMap::new(),
        };
        for k in 0..4 {
            for x in cube_points(d, n) {
                let key = g.key(k, &x);
                if !g.index.contains_key(&key) {
                    g.index.insert(key.clone(), g.points.len());
                    g.points.push(key);
                }
            }
        }
        Ok(g)
    }

    pub fn index(&self, k: usize, x: &[usize]) -> usize {
        self.index[&self.key(k, x)]
    }

    /// Neighbours of every state, sorted.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut nb: Vec<Vec<usize>> = vec![Vec::new(); self.points.len()];
        for k in 0..4 {
            for x in cube_points(self.d, self.n) {
                let i = self.index(k, &x);
                for a in 0..self.d {
                    for step in [-1i64, 1] {
                        let c = x[a] as i64 + step;
                        if c >= 1 && c <= self.n as i64 {
                            let mut y = x.clone();
                            y[a] = c as usize;
                            nb[i].push(self.index(k, &y));
                        }
                    }
                }
            }
        }
        for row in nb.iter_mut() {
            row.sort_unstable();
            row.dedup();
        }
        nb
    }

    /// Cube containing a state, shared corners going to the lower-indexed cube.
    pub fn cube_of(&self, state: usize) -> usize {
        let (k, x) = &self.points[state];
        if x.iter().all(|&c| c == 1) {
            let other = (k + 3) % 4;
            (*k).min(other)
        } else {
            *k
        }
    }

    pub fn label(&self, state: usize) -> String {
        let (k, x) = &self.points[state];
        let coords: Vec<String> = x.iter().map(|c| c.to_string()).collect();
        format!("{k}:{}", coords.join(","))
    }

    /// The ring rotation `k → k+1`.
    pub fn rotation(&self) -> Vec<usize> {
        (0..self.points.len())
            .map(|i| {
                let (k, x) = &self.points[i];
                self.index((k + 1) % 4, x)
            })
            .collect()
    }

    /// The reflection `k → -k`, `x → N+1-x`.
    pub fn reflection(&self) -> Vec<usize> {
        (0..self.points.len())
            .map(|i| {
                let (k, x) = &self.points[i];
                let y: Vec<usize> = x.iter().map(|&c| self.n + 1 - c).collect();
                self.index((4 - k) % 4, &y)
            })
            .collect()
    }
}

fn cube_points(d: usize, n: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = n.pow(d as u32);
    (0..total).map(move |mut code| {
        let mut x = vec![0; d];
        for c in x.iter_mut().rev() {
            *c = code % n + 1;
            code /= n;
        }
        x
    })
}

/// Whether `map` is a rate-preserving bijection of the chain's states.
pub fn is_automorphism(chain: &Chain, map: &[usize]) -> bool {
    let mut seen = vec![false; chain.len()];
    for &m in map {
        if m >= chain.len() || seen[m] {
            return false;
        }
        seen[m] = true;
    }
    chain
        .edges()
        .all(|(i, j, r)| chain.rate(map[i], map[j]) == r)
        && (0..chain.len()).all(|i| chain.holding_rate(map[i]) == chain.holding_rate(i))
}

/// Four glued `d`-cubes of side `N` with the uniform-neighbour walk at unit total rate.
/// Valley `k` is the core of cube `k`: coordinates in `[ell+1, N-ell]`.
pub fn glued_cubes(d: usize, n: usize, ell: Option<usize>) -> Result<ModelSpec> {
    if d < 2 || n < 3 {
        return Err(Error::BadParams(format!(
            "glued cubes need d ≥ 2 and N ≥ 3, got d={d}, N={n}"
        )));
    }
    let ell = ell.unwrap_or_else(|| glued_cubes_default_ell(n));
    if ell < 1 || 2 * ell >= n {
        return Err(Error::BadParams(format!(
            "ell must satisfy 1 ≤ ell < N/2, got {ell}"
        )));
    }
    let g = GluedCubes::new(d, n)?;
    let nb = g.neighbours();
    let labels: Vec<String> = (0..g.points.len()).map(|i| g.label(i)).collect();
    let mut edges = Vec::new();
    for (i, row) in nb.iter().enumerate() {
        let r = 1.0 / row.len() as f64;
        edges.extend(row.iter().map(|&j| (i, j, r)));
    }
    let chain = Chain::from_indexed(labels, edges)?;
    let pi = verified(&chain, nb.iter().map(|row| row.len() as f64).collect())?;
    let valleys = (0..4)
        .map(|k| {
            cube_points(d, n)
                .filter(|x| x.iter().all(|&c| c > ell && c <= n - ell))
                .map(|x| g.index(k, &x))
                .collect()
        })
        .collect();
    let partition = Partition::new(chain.len(), valleys)?;
    let nf = n as f64;
    let theta = if d == 2 {
        nf * nf * nf.ln()
    } else {
        nf.powi(d as i32)
    };
    let params = BTreeMap::from([
        ("d".to_string(), d.to_string()),
        ("N".to_string(), n.to_string()),
        ("ell".to_string(), ell.to_string()),
    ]);
    Ok(ModelSpec {
        family: "glued_cubes".into(),
        params,
        chain,
        pi,
        partition,
        suggested_theta: Some(theta),
    })
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Default zero-range valley margin: `⌊√N⌋`, reduced until the valleys are disjoint.
pub fn zero_range_default_ell(n: usize) -> usize {
    let mut ell = (n as f64).sqrt().floor() as usize;
    while ell > 0 && 2 * ell >= n {
        ell -= 1;
    }
    ell
}

/// Nearest-neighbour zero-range process on the discrete torus of `L` sites with `N`
/// particles, `g(k) = a(k)/a(k-1)`, `a(k) = k^α`, jumps right with probability `p`.
/// Configurations are ranked in lexicographic order.
#[derive(Debug, Clone)]
pub struct ZeroRange {
    pub sites: usize,
    pub particles: usize,
    pub alpha: f64,
    pub p: f64,
    pub ell: usize,
    count: usize,
    /// `table[m][r]`: number of ways to place `m` particles on `r` sites.
    table: Vec<Vec<u64>>,
}

impl ZeroRange {
    pub fn new(
        sites: usize,
        particles: usize,
        alpha: f64,
        p: f64,
        ell: Option<usize>,
    ) -> Result<Self> {
        if sites < 3 || particles < 2 {
            return Err(Error::BadParams(format!(
                "zero-range needs L ≥ 3 and N ≥ 2, got L={sites}, N={particles}"
            )));
        }
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::BadParams(format!(
                "alpha must exceed 1, got {alpha}"
            )));
        }
        if !(0.5..=1.0).contains(&p) {
            return Err(Error::BadParams(format!("p must lie in [1/2, 1], got {p}")));
        }
        let ell = ell.unwrap_or_else(|| zero_range_default_ell(particles));
        if 2 * ell >= particles {
            return Err(Error::BadParams(format!(
                "ell must satisfy ell < N/2, got {ell}"
            )));
        }
        let count = binomial((particles + sites - 1) as u64, (sites - 1) as u64)
            .and_then(|c| usize::try_from(c).ok())
            .ok_or_else(|| Error::TooLarge {
                what: "zero-range state space".into(),
                states: usize::MAX,
                limit: STATE_GUARD,
            })?;
        let mut table = vec![vec![0u64; sites + 1]; particles + 1];
        for (m, row) in table.iter_mut().enumerate() {
            for (r, v) in row.iter_mut().enumerate() {
                *v = if r == 0 {
                    u64::from(m == 0)
                } else {
                    binomial((m + r - 1) as u64, (r - 1) as u64).unwrap_or(u64::MAX)
                };
            }
        }
        Ok(Self {
            sites,
            particles,
            alpha,
            p,
            ell,
            count,
            table,
        })
    }

    pub fn state_count(&self) -> usize {
        self.count
    }

    fn a(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            (k as f64).powf(self.alpha)
        }
    }

    /// `g(k) = a(k)/a(k-1)`, `g(0) = 0`.
    pub fn g(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.a(k) / self.a(k - 1)
        }
    }

    pub fn rank(&self, config: &[usize]) -> usize {
        let mut left = self.particles;
        let mut rank = 0u64;
        for (x, &c) in config.iter().enumerate().take(self.sites - 1) {
            let rest = self.sites - x - 1;
            for v in 0..c {
                rank += self.table[left - v][rest];
            }
            left -= c;
        }
        rank as usize
    }

    pub fn unrank(&self, rank: usize) -> Vec<usize> {
        let mut rank = rank as u64;
        let mut left = self.particles;
        let mut config = vec![0; self.sites];
        for x in 0..self.sites - 1 {
            let rest = self.sites - x - 1;
            let mut v = 0;
            while rank >= self.table[left - v][rest] {
                rank -= self.table[left - v][rest];
                v += 1;
            }
            config[x] = v;
            left -= v;
        }
        config[self.sites - 1] = left;
        config
    }

    pub fn label(&self, rank: usize) -> String {
        let c: Vec<String> = self.unrank(rank).iter().map(|v| v.to_string()).collect();
        c.join(",")
    }

    /// Site holding the condensate, if the configuration is in a valley.
    pub fn valley_of(&self, rank: usize) -> Option<usize> {
        self.unrank(rank)
            .iter()
            .position(|&c| c >= self.particles - self.ell)
    }

    /// Unnormalized stationary weight `Π_x 1/a(η_x)`.
    pub fn weight(&self, config: &[usize]) -> f64 {
        config.iter().map(|&c| 1.0 / self.a(c)).product()
    }

    fn jumps_of(&self, config: &[usize], f: &mut dyn FnMut(usize, f64)) {
        let l = self.sites;
        let mut moved = config.to_vec();
        for x in 0..l {
            if config[x] == 0 {
                continue;
            }
            let g = self.g(config[x]);
            for (y, prob) in [((x + 1) % l, self.p), ((x + l - 1) % l, 1.0 - self.p)] {
                if prob > 0.0 {
                    moved[x] -= 1;
                    moved[y] += 1;
                    f(self.rank(&moved), g * prob);
                    moved[x] += 1;
                    moved[y] -= 1;
                }
            }
        }
    }

    /// Materializes the chain, default valleys and the product-form law.
    pub fn build(&self) -> Result<ModelSpec> {
        guard("zero-range state space", self.count)?;
        let mut labels = Vec::with_capacity(self.count);
        let mut edges = Vec::new();
        let mut weights = Vec::with_capacity(self.count);
        let mut valleys = vec![Vec::new(); self.sites];
        for i in 0..self.count {
            let c = self.unrank(i);
            labels.push(self.label(i));
            weights.push(self.weight(&c));
            if let Some(x) = c.iter().position(|&v| v >= self.particles - self.ell) {
                valleys[x].push(i);
            }
            let mut out: BTreeMap<usize, f64> = BTreeMap::new();
            self.jumps_of(&c, &mut |j, r| *out.entry(j).or_default() += r);
            edges.extend(out.into_iter().map(|(j, r)| (i, j, r)));
        }
        let chain = Chain::from_indexed(labels, edges)?;
        let pi = verified(&chain, weights)?;
        let partition = Partition::new(chain.len(), valleys)?;
        let params = BTreeMap::from([
            ("L".to_string(), self.sites.to_string()),
            ("N".to_string(), self.particles.to_string()),
            ("alpha".to_string(), self.alpha.to_string()),
            ("p".to_string(), self.p.to_string()),
            ("ell".to_string(), self.ell.to_string()),
        ]);
        Ok(ModelSpec {
            family: "zero_range".into(),
            params,
            chain,
            pi,
            partition,
            suggested_theta: Some((self.particles as f64).powf(1.0 + self.alpha)),
        })
    }
}

impl JumpKernel for ZeroRange {
    fn holding_rate(&self, state: usize) -> f64 {
        let c = self.unrank(state);
        let mut total = 0.0;
        self.jumps_of(&c, &mut |_, r| total += r);
        total
    }

    fn for_each_jump(&self, state: usize, f: &mut dyn FnMut(usize, f64)) {
        let c = self.unrank(state);
        self.jumps_of(&c, f);
    }
}

pub fn zero_range(
    sites: usize,
    particles: usize,
    alpha: f64,
    p: f64,
    ell: Option<usize>,
) -> Result<ModelSpec> {
    ZeroRange::new(sites, particles, alpha, p, ell)?.build()
}

/// A regular grid `[lo, hi]^dim` with `points` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    fn coords(&self, i: usize) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        let mut out = vec![0.0; self.dim];
        let mut code = i;
        for c in out.iter_mut().rev() {
            *c = self.lo + step * (code % self.points) as f64;
            code /= self.points;
        }
        out
    }

    fn neighbours(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stride = 1;
        for _ in 0..self.dim {
            let c = (i / stride) % self.points;
            if c > 0 {
                out.push(i - stride);
            }
            if c + 1 < self.points {
                out.push(i + stride);
            }
            stride *= self.points;
        }
        out.sort_unstable();
        out
    }

    fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }
}

/// Named potentials available from model strings.
pub fn named_potential(name: &str) -> Result<fn(&[f64]) -> f64> {
    fn double_well(x: &[f64]) -> f64 {
        (x[0] * x[0] - 1.0).powi(2) + x[1..].iter().map(|y| y * y).sum::<f64>()
    }
    fn flat(_: &[f64]) -> f64 {
        0.0
    }
    match name {
        "double_well" => Ok(double_well),
        "flat" => Ok(flat),
        other => Err(Error::BadParams(format!("unknown potential '{other}'"))),
    }
}

/// Lowest height at which two sublevel components merge, by union–find over the
/// points in increasing potential; `None` when no merge happens.
fn lowest_saddle(values: &[f64], nb: &[Vec<usize>]) -> Option<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut parent: Vec<usize> = (0..values.len()).collect();
    let mut active = vec![false; values.len()];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &i in &order {
        active[i] = true;
        let mut roots: Vec<usize> = nb[i]
            .iter()
            .filter(|&&j| active[j])
            .map(|&j| find(&mut parent, j))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        if roots.len() >= 2 {
            return Some(values[i]);
        }
        if let Some(&r) = roots.first() {
            parent[i] = r;
        }
    }
    None
}

/// Walk on a grid with rates `exp(-½ N [F(y) - F(x)])` between neighbours, reversible
/// for `μ ∝ exp(-N F)`. Valleys are the components of `{F < H - eps}` with `H` the
/// lowest saddle height; `eps` defaults to 5% of `H - min F`.
pub fn potential_rw(
    grid: Grid,
    potential: &dyn Fn(&[f64]) -> f64,
    beta: f64,
    eps: Option<f64>,
) -> Result<ModelSpec> {
    if grid.dim < 1 || grid.dim > 2 || grid.points < 2 || !(grid.hi > grid.lo) {
        return Err(Error::BadParams(
            "grid must be 1D or 2D with at least 2 points per axis".into(),
        ));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::BadParams(format!(
            "N must be finite and nonnegative, got {beta}"
        )));
    }
    let n = grid.len();
    guard("potential grid", n)?;
    let values: Vec<f64> = (0..n).map(|i| potential(&grid.coords(i))).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::BadParams(
            "potential must be finite on the grid".into(),
        ));
    }
    let nb: Vec<Vec<usize>> = (0..n).map(|i| grid.neighbours(i)).collect();
    let labels: Vec<String> = (0..n)
        .map(|i| {
            let c: Vec<String> = grid.coords(i).iter().map(|v| format!("{v:.6}")).collect();
            c.join(",")
        })
        .collect();
    let mut edges = Vec::new();
    for (i, row) in nb.iter().enumerate() {
        for &j in row {
            edges.push((i, j, (-0.5 * beta * (values[j] - values[i])).exp()));
        }
    }
    let chain = Chain::from_indexed(labels, edges)?;
    let floor = values.iter().copied().fold(f64::INFINITY, f64::min);
    let pi = verified(
        &chain,
        values.iter().map(|v| (-beta * (v - floor)).exp()).collect(),
    )?;
    let valleys = match lowest_saddle(&values, &nb) {
        Some(h) => {
            let eps = eps.unwrap_or(0.05 * (h - floor));
            let inside: Vec<bool> = values.iter().map(|&v| v < h - eps).collect();
            components(&inside, &nb)
        }
        None => vec![(0..n).collect()],
    };
    let partition = Partition::new(n, valleys)?;
    let params = BTreeMap::from([
        ("dim".to_string(), grid.dim.to_string()),
        ("lo".to_string(), grid.lo.to_string()),
        ("hi".to_string(), grid.hi.to_string()),
        ("points".to_string(), grid.points.to_string()),
        ("N".to_string(), beta.to_string()),
    ]);
    Ok(ModelSpec {
        family: "potential_rw".into(),
        params,
        chain,
        pi,
        partition,
        suggested_theta: None,
    })
}

fn components(inside: &[bool], nb: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; inside.len()];
    let mut out = Vec::new();
    for s in 0..inside.len() {
        if !inside[s] || seen[s] {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = true;
        let mut k = 0;
        while k < comp.len() {
            for &j in &nb[comp[k]] {
                if inside[j] && !seen[j] {
                    seen[j] = true;
                    comp.push(j);
                }
            }
            k += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn parse_params(body: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for item in body.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::BadParams(format!("expected key=value, got '{item}'")))?;
        if out
            .insert(k.trim().to_string(), v.trim().to_string())
            .is_some()
        {
            return Err(Error::BadParams(format!(
                "parameter '{}' given twice",
                k.trim()
            )));
        }
    }
    Ok(out)
}

struct Params(BTreeMap<String, String>);

impl Params {
    fn take<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::BadParams(format!("cannot parse {key}={v}"))),
        }
    }

    fn need<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        self.take(key)?
            .ok_or_else(|| Error::BadParams(format!("missing parameter '{key}'")))
    }

    fn finish(self) -> Result<()> {
        match self.0.keys().next() {
            Some(k) => Err(Error::BadParams(format!("unknown parameter '{k}'"))),
            None => Ok(()),
        }
    }
}

/// Parses `family:key=value,…`, e.g. `glued_cubes:d=2,N=8,ell=2`.
pub fn parse_model(spec: &str) -> Result<ModelSpec> {
    let (family, body) = spec.split_once(':').unwrap_or((spec, ""));
    let mut p = Params(parse_params(body)?);
    let model = match family.trim() {
        "glued_cubes" => {
            let (d, n, ell) = (p.need("d")?, p.need("N")?, p.take("ell")?);
            p.finish()?;
            glued_cubes(d, n, ell)?
        }
        "zero_range" => {
            let (l, n) = (p.need("L")?, p.need("N")?);
            let alpha = p.need("alpha")?;
            let prob = p.take("p")?.unwrap_or(0.5);
            let ell = p.take("ell")?;
            p.finish()?;
            zero_range(l, n, alpha, prob, ell)?
        }
        "potential_rw" => {
            let name: String = p.take("F")?.unwrap_or_else(|| "double_well".to_string());
            let grid = Grid {
                dim: p.take("dim")?.unwrap_or(1),
                lo: p.take("lo")?.unwrap_or(-1.5),
                hi: p.take("hi")?.unwrap_or(1.5),
                points: p.take("points")?.unwrap_or(21),
            };
            let beta = p.need("N")?;
            let eps = p.take("eps")?;
            p.finish()?;
            let f = named_potential(&name)?;
            potential_rw(grid, &f, beta, eps)?
        }
        other => return Err(Error::BadParams(format!("unknown model family '{other}'"))),
    };
    Ok(model)
}
