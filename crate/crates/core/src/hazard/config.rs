//! Hazard configuration: a human-editable TOML file naming the feeder,
//! storm/flood parameter ranges, the fragility table, discovery rate
//! breakpoints, repair priors, and congestion bounds.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{holland_b_estimate, FloodFieldParams, FragilityCurve, HurricaneParams, RepairPrior};
use crate::error::{Error, Result};

/// A scalar drawn fresh per scenario seed: either fixed or uniform on
/// [min, max].
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ValueOrRange {
    Fixed(f64),
    Range([f64; 2]),
}

impl ValueOrRange {
    pub fn sample(&self, rng: &mut ChaCha20Rng) -> f64 {
        match self {
            ValueOrRange::Fixed(v) => *v,
            ValueOrRange::Range([lo, hi]) => rng.gen_range(*lo..=*hi),
        }
    }

    pub fn scaled(&self, factor: f64) -> ValueOrRange {
        match self {
            ValueOrRange::Fixed(v) => ValueOrRange::Fixed(v * factor),
            ValueOrRange::Range([lo, hi]) => ValueOrRange::Range([lo * factor, hi * factor]),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct StormConfig {
    pub center_x: ValueOrRange,
    pub center_y: ValueOrRange,
    pub delta_p_hpa: ValueOrRange,
    pub r_m_km: ValueOrRange,
    /// Either a fixed/ranged shape parameter, or env/central pressures it
    /// is estimated from.
    pub b_shape: Option<ValueOrRange>,
    pub p_env_hpa: Option<f64>,
    pub p_c_hpa: Option<ValueOrRange>,
    #[serde(default = "default_rho_air")]
    pub rho_air: f64,
    pub v_bg: ValueOrRange,
}

fn default_rho_air() -> f64 {
    1.15
}

impl StormConfig {
    /// One storm realization: every ranged parameter drawn once.
    pub fn sample(&self, rng: &mut ChaCha20Rng) -> Result<HurricaneParams> {
        let b_shape = match (&self.b_shape, self.p_env_hpa, &self.p_c_hpa) {
            (Some(b), _, _) => b.sample(rng).clamp(1.0, 3.0),
            (None, Some(p_env), Some(p_c)) => holland_b_estimate(p_env, p_c.sample(rng))?,
            _ => {
                return Err(Error::Config(
                    "storm needs b_shape or p_env_hpa + p_c_hpa".into(),
                ))
            }
        };
        let params = HurricaneParams {
            delta_p_hpa: self.delta_p_hpa.sample(rng),
            r_m_km: self.r_m_km.sample(rng),
            b_shape,
            rho_air: self.rho_air,
            v_bg: self.v_bg.sample(rng),
            p_env_hpa: self.p_env_hpa,
            p_c_hpa: None,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct FragilityEntry {
    pub wind_median: Option<f64>,
    pub wind_beta: Option<f64>,
    pub flood_median: Option<f64>,
    pub flood_beta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DiscoveryConfig {
    /// (start time h, tickets/hour) pairs.
    pub breakpoints: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RepairEntry {
    pub mu: f64,
    pub sigma: f64,
    /// Omitted = untruncated.
    pub truncation_h: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CongestionConfig {
    #[serde(default = "default_cong_lo")]
    pub lo: f64,
    #[serde(default = "default_cong_hi")]
    pub hi: f64,
    #[serde(default = "default_block_h")]
    pub block_h: f64,
}

fn default_cong_lo() -> f64 {
    1.2
}
fn default_cong_hi() -> f64 {
    2.0
}
fn default_block_h() -> f64 {
    6.0
}

impl Default for CongestionConfig {
    fn default() -> Self {
        CongestionConfig {
            lo: default_cong_lo(),
            hi: default_cong_hi(),
            block_h: default_block_h(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct HazardConfig {
    pub feeder: String,
    pub horizon_h: f64,
    /// Probability that a damaged site is confirmed at t=0.
    #[serde(default = "default_confirm_p")]
    pub confirm_p: f64,
    /// Correlation length (km) of the failure copula.
    pub correlation_km: f64,
    pub storm: StormConfig,
    pub flood: Option<FloodFieldParams>,
    pub fragility: BTreeMap<String, FragilityEntry>,
    pub discovery: DiscoveryConfig,
    pub repair: BTreeMap<String, RepairEntry>,
    #[serde(default)]
    pub congestion: CongestionConfig,
    /// SHA-256 of the source text, stamped into scenarios and manifests.
    #[serde(skip)]
    pub hash: String,
    #[serde(skip)]
    wind_curves: BTreeMap<String, FragilityCurve>,
    #[serde(skip)]
    flood_curves: BTreeMap<String, FragilityCurve>,
}

fn default_confirm_p() -> f64 {
    0.4
}

const HAZARD_13: &str = include_str!("../../data/hazard13.toml");
const HAZARD_123: &str = include_str!("../../data/hazard123.toml");

impl HazardConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: HazardConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("hazard config: {e}")))?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        cfg.hash = format!("{:x}", hasher.finalize());
        cfg.build_curves()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a file path or a bundled preset ("13bus"/"123bus").
    pub fn load(spec: &str) -> Result<Self> {
        match spec {
            "13bus" => Self::from_toml(HAZARD_13),
            "123bus" => Self::from_toml(HAZARD_123),
            path => Self::from_toml(&std::fs::read_to_string(Path::new(path))?),
        }
    }

    fn build_curves(&mut self) -> Result<()> {
        self.wind_curves.clear();
        self.flood_curves.clear();
        for (class, entry) in &self.fragility {
            match (entry.wind_median, entry.wind_beta) {
                (Some(m), Some(b)) => {
                    self.wind_curves
                        .insert(class.clone(), FragilityCurve::new(class, m, b)?);
                }
                (None, None) => {}
                _ => {
                    return Err(Error::Config(format!(
                        "fragility class {class}: wind_median and wind_beta go together"
                    )))
                }
            }
            match (entry.flood_median, entry.flood_beta) {
                (Some(m), Some(b)) => {
                    self.flood_curves
                        .insert(class.clone(), FragilityCurve::new(class, m, b)?);
                }
                (None, None) => {}
                _ => {
                    return Err(Error::Config(format!(
                        "fragility class {class}: flood_median and flood_beta go together"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_h <= 0.0 {
            return Err(Error::Config("horizon_h must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.confirm_p) {
            return Err(Error::Config("confirm_p must lie in [0,1]".into()));
        }
        if self.correlation_km <= 0.0 {
            return Err(Error::Config("correlation_km must be > 0".into()));
        }
        if let Some(flood) = &self.flood {
            flood.validate()?;
        }
        if self.congestion.lo < 1.0 || self.congestion.hi < self.congestion.lo {
            return Err(Error::Config(
                "congestion bounds need 1 <= lo <= hi".into(),
            ));
        }
        if self.congestion.block_h <= 0.0 {
            return Err(Error::Config("congestion block_h must be > 0".into()));
        }
        let discovery = super::DiscoveryProcess {
            breakpoints: self.discovery.breakpoints.clone(),
            horizon_h: self.horizon_h,
        };
        discovery.validate()?;
        for (class, _) in self.repair.iter() {
            self.repair_prior(class)?.validate()?;
        }
        Ok(())
    }

    pub fn fragility_wind(&self, class: &str) -> Option<&FragilityCurve> {
        self.wind_curves.get(class)
    }

    pub fn fragility_flood(&self, class: &str) -> Option<&FragilityCurve> {
        self.flood_curves.get(class)
    }

    pub fn repair_prior(&self, class: &str) -> Result<RepairPrior> {
        let entry = self.repair.get(class).ok_or_else(|| {
            Error::Config(format!("no repair prior configured for class {class}"))
        })?;
        Ok(RepairPrior {
            component_class: class.to_string(),
            mu: entry.mu,
            sigma: entry.sigma,
            truncation_h: entry.truncation_h.unwrap_or(f64::INFINITY),
        })
    }

    /// "Shifted" evaluation preset: pressure deficit and discovery rates
    /// scaled by `factor` (our construction of an out-of-training-range
    /// set).
    pub fn apply_shift(&mut self, factor: f64) {
        self.storm.delta_p_hpa = self.storm.delta_p_hpa.scaled(factor);
        for bp in &mut self.discovery.breakpoints {
            bp.1 *= factor;
        }
        self.hash = format!("{}:shifted{factor}", self.hash);
    }
}
