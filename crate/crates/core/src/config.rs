//! Model parameters and derived scales.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Exploration caps. Truncation is reported, never silent.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Caps {
    /// Maximum number of cluster sites before exploration stops.
    pub max_sites: u64,
    /// Maximum BFS generation expanded.
    pub max_generation: u64,
    /// Maximum particle count of an envelope field.
    pub max_total_mass: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            max_sites: 10_000_000,
            max_generation: 1_000_000,
            max_total_mass: 100_000_000,
        }
    }
}

/// Edge-opening probabilities, normally derived from a [`LatticeConfig`].
///
/// Kept separate so experiments can override them while reusing the same
/// quenched uniforms (monotone coupling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeProbs {
    pub p_h: f64,
    pub p_v: f64,
}

/// All model parameters: horizontal range `N`, scaling exponent `alpha`,
/// vertical exponent `b`, interaction strength `kappa` and the master seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// Horizontal interaction range.
    pub n: u32,
    /// Space/time rescaling exponent, `N^alpha` and `N^{2 alpha}`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Vertical probability exponent: `p_v = min(1, kappa N^{-b})`.
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub caps: Caps,
}

fn default_alpha() -> f64 {
    0.2
}

fn default_b() -> f64 {
    0.4
}

impl LatticeConfig {
    pub fn new(n: u32, kappa: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            n,
            alpha: default_alpha(),
            b: default_b(),
            kappa,
            seed,
            caps: Caps::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_exponents(mut self, alpha: f64, b: f64) -> Result<Self> {
        self.alpha = alpha;
        self.b = b;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.b > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "b must be > 0, got {}",
                self.b
            )));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "kappa must be >= 0, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Horizontal edge probability `1/(2N)`.
    pub fn p_h(&self) -> f64 {
        1.0 / (2.0 * self.n as f64)
    }

    /// Vertical edge probability `min(1, kappa N^{-b})`.
    pub fn p_v(&self) -> f64 {
        (self.kappa * (self.n as f64).powf(-self.b)).min(1.0)
    }

    pub fn probs(&self) -> EdgeProbs {
        EdgeProbs {
            p_h: self.p_h(),
            p_v: self.p_v(),
        }
    }

    /// `N^e` as a float, for the various derived scales.
    pub fn n_pow(&self, e: f64) -> f64 {
        (self.n as f64).powf(e)
    }

    /// Spatial rescaling factor `N^{1+alpha}` (sites per scaled unit).
    pub fn space_scale(&self) -> f64 {
        self.n_pow(1.0 + self.alpha)
    }

    /// Temporal rescaling factor `N^{2 alpha}` (steps per scaled time unit).
    pub fn time_scale(&self) -> f64 {
        self.n_pow(2.0 * self.alpha)
    }

    /// Parse from a TOML key-value file (schema: n, alpha, b, kappa, seed, caps).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: LatticeConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_are_pure_functions_of_parameters() {
        let a = LatticeConfig::new(16, 2.0, 1).unwrap();
        let b = LatticeConfig::new(16, 2.0, 999).unwrap();
        assert_eq!(a.p_h(), b.p_h());
        assert_eq!(a.p_v(), b.p_v());
        assert!(a.p_h() > 0.0 && a.p_h() <= 0.5);
        assert!((0.0..=1.0).contains(&a.p_v()));
    }

    #[test]
    fn kappa_zero_closes_vertical_edges() {
        let cfg = LatticeConfig::new(8, 0.0, 0).unwrap();
        assert_eq!(cfg.p_v(), 0.0);
    }

    #[test]
    fn p_v_caps_at_one() {
        let cfg = LatticeConfig::new(4, 1e9, 0).unwrap();
        assert_eq!(cfg.p_v(), 1.0);
    }

    #[test]
    fn toml_roundtrip_with_defaults() {
        let cfg = LatticeConfig::from_toml_str("n = 32\nkappa = 1.5\nseed = 7").unwrap();
        assert_eq!(cfg.n, 32);
        assert_eq!(cfg.alpha, 0.2);
        assert_eq!(cfg.b, 0.4);
        assert_eq!(cfg.caps, Caps::default());

        let with_caps = LatticeConfig::from_toml_str(
            "n = 32\nkappa = 1.5\nseed = 7\n[caps]\nmax_sites = 100\n",
        )
        .unwrap();
        assert_eq!(with_caps.caps.max_sites, 100);
        assert_eq!(
            with_caps.caps.max_generation,
            Caps::default().max_generation
        );
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(LatticeConfig::new(0, 1.0, 0).is_err());
        assert!(LatticeConfig::new(4, -1.0, 0).is_err());
        assert!(LatticeConfig::new(4, 1.0, 0)
            .unwrap()
            .with_exponents(1.5, 0.4)
            .is_err());
    }
}
