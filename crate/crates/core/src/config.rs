//! Physical constants and experiment settings.
//!
//! Units throughout the crate: frequencies and energies in MHz (cyclic, i.e.
//! `E / h`), magnetic fields in gauss, times in microseconds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All constants and drive settings of the reduced NV / 14N model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinSystemConfig {
    /// Zero-field splitting (MHz).
    pub delta: f64,
    /// Nuclear quadrupolar term (MHz).
    pub q_quad: f64,
    /// Longitudinal hyperfine coupling (MHz).
    pub a_par: f64,
    /// Transverse hyperfine coupling (MHz).
    pub a_perp: f64,
    /// Electron gyromagnetic ratio (MHz/G).
    pub gamma_e: f64,
    /// 14N gyromagnetic ratio (MHz/G).
    pub gamma_n: f64,
    /// Axial static field (G).
    pub b_z: f64,
    /// RF drive amplitude (G).
    pub b1: f64,
    /// RF drive frequency (MHz).
    pub omega_rf: f64,
}

impl Default for SpinSystemConfig {
    fn default() -> Self {
        Self {
            delta: 2870.0,
            q_quad: -4.945,
            a_par: -2.162,
            a_perp: -2.62,
            gamma_e: 2.8,
            gamma_n: -3.08e-4,
            b_z: 0.0,
            b1: 6.0,
            omega_rf: 0.0,
        }
    }
}

impl SpinSystemConfig {
    pub fn with_field(mut self, b_z: f64) -> Self {
        self.b_z = b_z;
        self
    }

    pub fn with_a_perp(mut self, a_perp: f64) -> Self {
        self.a_perp = a_perp;
        self
    }

    pub fn with_b1(mut self, b1: f64) -> Self {
        self.b1 = b1;
        self
    }

    pub fn with_omega_rf(mut self, omega_rf: f64) -> Self {
        self.omega_rf = omega_rf;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("delta", self.delta),
            ("q_quad", self.q_quad),
            ("a_par", self.a_par),
            ("a_perp", self.a_perp),
            ("gamma_e", self.gamma_e),
            ("gamma_n", self.gamma_n),
            ("b_z", self.b_z),
            ("b1", self.b1),
            ("omega_rf", self.omega_rf),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("{name} is not finite")));
        }
        if self.delta <= 0.0 {
            return Err(Error::InvalidConfig("delta must be positive".into()));
        }
        if self.gamma_e <= 0.0 {
            return Err(Error::InvalidConfig("gamma_e must be positive".into()));
        }
        if self.b1 < 0.0 {
            return Err(Error::InvalidConfig("b1 must be nonnegative".into()));
        }
        if self.omega_rf < 0.0 {
            return Err(Error::InvalidConfig("omega_rf must be nonnegative".into()));
        }
        Ok(())
    }

    /// Parses a flat `key = value` document. Missing keys take their default,
    /// unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat struct of floats always serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_constants() {
        let c = SpinSystemConfig::default();
        assert_eq!(c.delta, 2870.0);
        assert_eq!(c.q_quad, -4.945);
        assert_eq!(c.a_par, -2.162);
        assert_eq!(c.gamma_e, 2.8);
        assert_eq!(c.gamma_n, -0.308e-3);
        c.validate().unwrap();
    }

    #[test]
    fn parses_partial_document() {
        let c = SpinSystemConfig::from_toml_str("b_z = 509.0\na_perp = -2.7\n").unwrap();
        assert_eq!(c.b_z, 509.0);
        assert_eq!(c.a_perp, -2.7);
        assert_eq!(c.delta, 2870.0);
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = SpinSystemConfig::from_toml_str("b_z = 1.0\nbogus = 2.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
    }

    #[test]
    fn rejects_nonpositive_splitting() {
        let err = SpinSystemConfig::from_toml_str("delta = 0.0").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        let err = SpinSystemConfig::from_toml_str("gamma_e = -1.0").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn round_trips_through_text() {
        let c = SpinSystemConfig::default().with_field(450.0).with_b1(3.5);
        let back = SpinSystemConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }
}
