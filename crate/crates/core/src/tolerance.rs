//! Numerical tolerances and size guards.
//!
//! One process-wide configuration, read once. `METASTAB_TOL` overrides the
//! default relative tolerance.

use std::sync::OnceLock;

pub const ENV_VAR: &str = "METASTAB_TOL";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceConfig {
    /// Default relative tolerance for identities between linear-algebra outputs.
    pub relative: f64,
    /// Stationarity residual, relative to the largest rate.
    pub stationary_residual: f64,
    /// Relative tolerance for identities between two independently solved quantities.
    pub identity: f64,
    /// Largest state count for dense factorizations and eigensolves.
    pub dense_limit: usize,
    /// Largest state count for exact semigroup oracles.
    pub oracle_limit: usize,
    /// Poisson tail mass dropped by uniformization.
    pub truncation: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            relative: 1e-10,
            stationary_residual: 1e-12,
            identity: 1e-9,
            dense_limit: 5000,
            oracle_limit: 2000,
            truncation: 1e-12,
        }
    }
}

impl ToleranceConfig {
    /// Default configuration with `relative` taken from `METASTAB_TOL` when it parses
    /// as a positive finite number.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Some(v) = std::env::var(ENV_VAR)
            .ok()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v > 0.0)
        {
            cfg.relative = v;
        }
        cfg
    }
}

static CONFIG: OnceLock<ToleranceConfig> = OnceLock::new();

/// The active configuration. Initialized from the environment on first use.
pub fn config() -> &'static ToleranceConfig {
    CONFIG.get_or_init(ToleranceConfig::from_env)
}

/// `|a - b| <= tol * max(|a|, |b|, floor)`.
pub fn close(a: f64, b: f64, tol: f64, floor: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(floor)
}

/// Relative deviation `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_dev(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ToleranceConfig::default();
        assert_eq!(c.relative, 1e-10);
        assert_eq!(c.dense_limit, 5000);
    }

    #[test]
    fn rel_dev_handles_zero() {
        assert_eq!(rel_dev(0.0, 0.0), 0.0);
        assert!((rel_dev(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert!(close(1.0, 1.0 + 1e-12, 1e-10, 0.0));
        assert!(!close(1.0, 1.1, 1e-10, 0.0));
    }
}
