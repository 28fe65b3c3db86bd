//! Transient laws `μ e^{tL}` and their time integrals by uniformization.

use nalgebra::DMatrix;

use crate::chain::Chain;
use crate::error::{Error, Result};
use crate::tolerance::config;

/// Poisson(`mean`) weights `w_k` for `k = 0..len`, built outward from the mode by
/// ratio recurrences and normalized; terms below `1e-20` of the mode are dropped, which
/// leaves a truncated mass far below the configured truncation.
pub fn poisson_weights(mean: f64) -> Vec<f64> {
    if mean <= 0.0 {
        return vec![1.0];
    }
    let cut = 1e-20f64.min(config().truncation);
    let mode = mean.floor() as usize;
    let mut left = vec![1.0];
    let mut w = 1.0;
    let mut k = mode;
    while k > 0 {
        w *= k as f64 / mean;
        if w < cut {
            break;
        }
        left.push(w);
        k -= 1;
    }
    let low = mode + 1 - left.len();
    let mut weights = vec![0.0; low];
    weights.extend(left.into_iter().rev());
    let mut w = 1.0;
    let mut k = mode;
    loop {
        w *= mean / (k + 1) as f64;
        if w < cut {
            break;
        }
        weights.push(w);
        k += 1;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    weights
}

/// `P[Poisson(mean) > k]` for each retained `k`, summed from the right.
fn poisson_tails(weights: &[f64]) -> Vec<f64> {
    let mut tails = vec![0.0; weights.len()];
    let mut acc = 0.0;
    for k in (0..weights.len()).rev() {
        tails[k] = acc;
        acc += weights[k];
    }
    tails
}

/// `μ P` with `P = I + L / Λ`, `Λ ≥ max λ`.
fn step(chain: &Chain, rate: f64, mu: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = mu
        .iter()
        .enumerate()
        .map(|(i, m)| m * (1.0 - chain.holding_rate(i) / rate))
        .collect();
    for (i, j, r) in chain.edges() {
        out[j] += mu[i] * r / rate;
    }
    out
}

fn guard(chain: &Chain) -> Result<()> {
    let limit = config().oracle_limit;
    if chain.len() > limit {
        return Err(Error::TooLarge {
            what: "semigroup oracle".into(),
            states: chain.len(),
            limit,
        });
    }
    Ok(())
}

/// `μ e^{tL}`.
pub fn transient(chain: &Chain, mu: &[f64], t: f64) -> Result<Vec<f64>> {
    guard(chain)?;
    let rate = chain.max_holding_rate().max(f64::MIN_POSITIVE);
    let weights = poisson_weights(rate * t);
    let mut v = mu.to_vec();
    let mut out = vec![0.0; mu.len()];
    for (k, w) in weights.iter().enumerate() {
        if k > 0 {
            v = step(chain, rate, &v);
        }
        for (o, x) in out.iter_mut().zip(&v) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// `∫₀ᵗ μ e^{sL} ds = Σ_k μ Pᵏ P[Poisson(Λt) > k] / Λ`.
pub fn integrated_transient(chain: &Chain, mu: &[f64], t: f64) -> Result<Vec<f64>> {
    guard(chain)?;
    let rate = chain.max_holding_rate().max(f64::MIN_POSITIVE);
    let weights = poisson_weights(rate * t);
    let tails = poisson_tails(&weights);
    let mut v = mu.to_vec();
    let mut out = vec![0.0; mu.len()];
    for (k, tail) in tails.iter().enumerate() {
        if k > 0 {
            v = step(chain, rate, &v);
        }
        for (o, x) in out.iter_mut().zip(&v) {
            *o += tail * x / rate;
        }
    }
    Ok(out)
}

/// `e^{tQ}` for a dense generator `Q`.
pub fn expm_generator(q: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = q.nrows();
    let rate = (0..n).map(|i| -q[(i, i)]).fold(0.0f64, f64::max);
    if rate == 0.0 || t == 0.0 {
        return DMatrix::identity(n, n);
    }
    let p = DMatrix::identity(n, n) + q / rate;
    let weights = poisson_weights(rate * t);
    let mut power = DMatrix::identity(n, n);
    let mut out = DMatrix::zeros(n, n);
    for (k, w) in weights.iter().enumerate() {
        if k > 0 {
            power = &power * &p;
        }
        out += &power * *w;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::build_chain;

    #[test]
    fn weights_sum_to_one() {
        for mean in [0.0, 0.3, 5.0, 250.0, 4000.0] {
            let s: f64 = poisson_weights(mean).iter().sum();
            assert!((s - 1.0).abs() < 2e-12, "{mean}: {s}");
        }
    }

    #[test]
    fn two_state_closed_form() {
        let c = build_chain(&["1", "2"], &[("1", "2", 2.0), ("2", "1", 3.0)]).unwrap();
        let t = 0.7;
        let p = transient(&c, &[1.0, 0.0], t).unwrap();
        let exact = 0.6 + 0.4 * (-5.0 * t).exp();
        assert!((p[0] - exact).abs() < 1e-12);
        let int = integrated_transient(&c, &[1.0, 0.0], t).unwrap();
        let exact_int = 0.6 * t + 0.4 * (1.0 - (-5.0 * t).exp()) / 5.0;
        assert!((int[0] - exact_int).abs() < 1e-12);
        assert!((int[0] + int[1] - t).abs() < 1e-12);
    }

    #[test]
    fn uniformizes_at_the_largest_holding_rate() {
        // The middle state leaves at total rate 2 while no single rate exceeds 1.
        let c = build_chain(
            &["1", "2", "3"],
            &[
                ("1", "2", 1.0),
                ("2", "1", 1.0),
                ("2", "3", 1.0),
                ("3", "2", 1.0),
            ],
        )
        .unwrap();
        let p = transient(&c, &[1.0, 0.0, 0.0], 3.0).unwrap();
        let exact_middle = (1.0 - (-3.0f64 * 3.0).exp()) / 3.0;
        assert!(p.iter().all(|x| *x >= 0.0));
        assert!((p[1] - exact_middle).abs() < 1e-12);
    }

    #[test]
    fn dense_exponential() {
        let q = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let e = expm_generator(&q, 1.0);
        assert!((e[(0, 0)] - (1.0 + (-2.0f64).exp()) / 2.0).abs() < 1e-12);
        assert_eq!(expm_generator(&q, 0.0), DMatrix::identity(2, 2));
    }
}
