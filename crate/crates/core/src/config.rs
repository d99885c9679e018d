//! TOML run configuration: family definition plus training, validation
//! and tolerance settings consumed by the CLI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::elliptic::{CoefficientField, EllipticFamily, ForcingSpec};
use crate::error::{Error, Result};
use crate::family::NuBox;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilySection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub validation: ValidationSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    pub n: usize,
    pub eps: f64,
    /// Parameter box as `[[lo, hi], ...]`.
    pub nu_box: Vec<[f64; 2]>,
    #[serde(default)]
    pub coefficient: CoefficientSection,
    #[serde(default)]
    pub forcing: ForcingSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum CoefficientSection {
    /// `a = base + nu_1 + nu_2 sin(frequency pi x)`.
    AffineSine {
        #[serde(default = "default_coeff_base")]
        base: f64,
        #[serde(default = "default_frequency")]
        frequency: u32,
    },
    Constant { value: f64 },
}

impl Default for CoefficientSection {
    fn default() -> Self {
        Self::AffineSine { base: default_coeff_base(), frequency: default_frequency() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum ForcingSection {
    RoughSmooth {
        #[serde(default = "default_rough_weight")]
        rough_weight_base: f64,
        #[serde(default = "default_smooth_decay")]
        smooth_decay: f64,
    },
}

impl Default for ForcingSection {
    fn default() -> Self {
        Self::RoughSmooth {
            rough_weight_base: default_rough_weight(),
            smooth_decay: default_smooth_decay(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    /// Training-grid points per parameter dimension; empty means 4 each.
    #[serde(default)]
    pub nu_points_per_dim: Vec<usize>,
    #[serde(default = "default_eta_points")]
    pub eta_points: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_safety_factor")]
    pub safety_factor: f64,
    #[serde(default)]
    pub eta_spacing: EtaSpacing,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            nu_points_per_dim: Vec::new(),
            eta_points: default_eta_points(),
            delta: default_delta(),
            safety_factor: default_safety_factor(),
            eta_spacing: EtaSpacing::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaSpacing {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    /// Audit-sample grid per parameter dimension; empty means 5 each.
    #[serde(default)]
    pub samples_per_dim: Vec<usize>,
    /// Shift for the norm-bound diagnostic.
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl Default for ValidationSection {
    fn default() -> Self {
        Self { samples_per_dim: Vec::new(), beta: default_beta() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    /// Online misfit acceptance: `misfit <= eps * (1 + online)`.
    #[serde(default = "default_online_tol")]
    pub online: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self { online: default_online_tol() }
    }
}

fn default_coeff_base() -> f64 {
    1.0
}
fn default_frequency() -> u32 {
    2
}
fn default_rough_weight() -> f64 {
    1.5
}
fn default_smooth_decay() -> f64 {
    0.6
}
fn default_eta_points() -> usize {
    16
}
fn default_delta() -> f64 {
    1e-6
}
fn default_safety_factor() -> f64 {
    2.0
}
fn default_beta() -> f64 {
    -1.0
}
fn default_online_tol() -> f64 {
    1e-3
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
        config.normalize()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn normalize(&mut self) -> Result<()> {
        let dim = self.family.nu_box.len();
        if self.family.n == 0 {
            return Err(Error::Config("family.n must be >= 1".into()));
        }
        if !(self.family.eps > 0.0) || !self.family.eps.is_finite() {
            return Err(Error::Config(format!("family.eps must be positive, got {}", self.family.eps)));
        }
        if dim == 0 {
            return Err(Error::Config("family.nu_box must have at least one dimension".into()));
        }
        for range in &self.family.nu_box {
            if !range[0].is_finite() || !range[1].is_finite() || range[0] > range[1] {
                return Err(Error::Config(format!("invalid nu_box range {range:?}")));
            }
        }
        if self.training.nu_points_per_dim.is_empty() {
            self.training.nu_points_per_dim = vec![4; dim];
        }
        if self.training.nu_points_per_dim.len() != dim {
            return Err(Error::Config(format!(
                "training.nu_points_per_dim has {} entries for a {dim}-dimensional box",
                self.training.nu_points_per_dim.len()
            )));
        }
        if self.training.nu_points_per_dim.iter().any(|&c| c == 0) {
            return Err(Error::Config("training grid counts must be positive".into()));
        }
        if self.training.eta_points == 0 {
            return Err(Error::Config("training.eta_points must be positive".into()));
        }
        if !(self.training.delta >= 0.0) || !self.training.delta.is_finite() {
            return Err(Error::Config(format!("training.delta must be >= 0, got {}", self.training.delta)));
        }
        if !(self.training.safety_factor >= 1.0) {
            return Err(Error::Config(format!(
                "training.safety_factor must be >= 1, got {}",
                self.training.safety_factor
            )));
        }
        if self.validation.samples_per_dim.is_empty() {
            self.validation.samples_per_dim = vec![5; dim];
        }
        if self.validation.samples_per_dim.len() != dim {
            return Err(Error::Config(format!(
                "validation.samples_per_dim has {} entries for a {dim}-dimensional box",
                self.validation.samples_per_dim.len()
            )));
        }
        if self.validation.samples_per_dim.iter().any(|&c| c == 0) {
            return Err(Error::Config("validation sample counts must be positive".into()));
        }
        if !(self.tolerances.online > 0.0) {
            return Err(Error::Config(format!(
                "tolerances.online must be positive, got {}",
                self.tolerances.online
            )));
        }
        Ok(())
    }

    pub fn nu_box(&self) -> Result<NuBox> {
        NuBox::new(self.family.nu_box.iter().map(|r| (r[0], r[1])).collect())
    }

    pub fn build_family(&self) -> Result<EllipticFamily> {
        let nu_box = self.nu_box()?;
        let coeff = match &self.family.coefficient {
            CoefficientSection::AffineSine { base, frequency } => {
                CoefficientField::affine_sine(*base, *frequency, &nu_box)?
            }
            CoefficientSection::Constant { value } => CoefficientField::constant(*value)?,
        };
        let forcing = match &self.family.forcing {
            ForcingSection::RoughSmooth { rough_weight_base, smooth_decay } => {
                ForcingSpec::RoughSmooth {
                    rough_weight_base: *rough_weight_base,
                    smooth_decay: *smooth_decay,
                }
            }
        };
        EllipticFamily::new(self.family.n, coeff, forcing, nu_box, self.family.eps)
    }

    /// Canonical text of the family section (defaults expanded); hashed
    /// into basis archives so stale bases are detected.
    pub fn canonical_family_string(&self) -> Result<String> {
        toml::to_string(&self.family)
            .map_err(|e| Error::Config(format!("family encoding failed: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[family]
n = 16
eps = 0.1
nu_box = [[0.0, 1.0], [0.0, 0.4]]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let config = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(config.training.nu_points_per_dim, vec![4, 4]);
        assert_eq!(config.training.eta_points, 16);
        assert_eq!(config.training.delta, 1e-6);
        assert_eq!(config.validation.samples_per_dim, vec![5, 5]);
        assert_eq!(config.tolerances.online, 1e-3);
        let family = config.build_family().unwrap();
        assert!((family.coeff().alpha() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn malformed_toml_is_a_config_error() {
        match RunConfig::from_toml_str("this is not toml [") {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        let bad = MINIMAL.replace("[[0.0, 1.0], [0.0, 0.4]]", "[[1.0, 0.0]]");
        match RunConfig::from_toml_str(&bad) {
            Err(Error::Config(msg)) => assert!(msg.contains("range")),
            other => panic!("expected config error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn canonical_string_is_stable() {
        let a = RunConfig::from_toml_str(MINIMAL).unwrap();
        let b = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(a.canonical_family_string().unwrap(), b.canonical_family_string().unwrap());
        let other = MINIMAL.replace("eps = 0.1", "eps = 0.2");
        let c = RunConfig::from_toml_str(&other).unwrap();
        assert_ne!(a.canonical_family_string().unwrap(), c.canonical_family_string().unwrap());
    }

    #[test]
    fn explicit_sections_parse() {
        let text = r#"
[family]
n = 24
eps = 0.05
nu_box = [[0.0, 1.0], [0.0, 0.4]]

[family.coefficient]
preset = "affine-sine"
base = 1.0
frequency = 2

[family.forcing]
preset = "rough-smooth"
rough_weight_base = 1.5
smooth_decay = 0.5

[training]
nu_points_per_dim = [3, 3]
eta_points = 8
delta = 1e-5
safety_factor = 2.0
eta_spacing = "log"

[validation]
samples_per_dim = [4, 4]
beta = -0.5

[tolerances]
online = 1e-3
"#;
        let config = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(config.training.eta_points, 8);
        assert_eq!(config.validation.beta, -0.5);
        config.build_family().unwrap();
    }
}
