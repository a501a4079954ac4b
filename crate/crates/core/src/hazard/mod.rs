//! Hazard surrogates: Holland wind field, flood depth Gaussian process,
//! lognormal fragility, copula-correlated failure draws, progressive
//! ticket discovery, and repair-time priors. `generate_scenario` runs the
//! full pipeline and produces a replayable [`HazardScenario`].

pub mod config;

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::FeederModel;
use crate::rng::{stream, substream};
use crate::stats::{cholesky_in_place, lower_tri_mul, normal_cdf, normal_inv_cdf};

pub use config::{HazardConfig, ValueOrRange};

/// Pressure-deficit based gradient wind profile parameters. `delta_p` is
/// stored in hPa and converted to Pa inside [`wind_speed_at`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HurricaneParams {
    pub delta_p_hpa: f64,
    pub r_m_km: f64,
    pub b_shape: f64,
    pub rho_air: f64,
    pub v_bg: f64,
    pub p_env_hpa: Option<f64>,
    pub p_c_hpa: Option<f64>,
}

impl HurricaneParams {
    pub fn validate(&self) -> Result<()> {
        if self.delta_p_hpa <= 0.0 {
            return Err(Error::ParamDomain("delta_p must be > 0".into()));
        }
        if self.r_m_km <= 0.0 {
            return Err(Error::ParamDomain("r_m must be > 0".into()));
        }
        if !(1.0..=3.0).contains(&self.b_shape) {
            return Err(Error::ParamDomain(format!(
                "b_shape must lie in [1,3], got {}",
                self.b_shape
            )));
        }
        if self.rho_air <= 0.0 {
            return Err(Error::ParamDomain("rho_air must be > 0".into()));
        }
        if self.v_bg < 0.0 {
            return Err(Error::ParamDomain("v_bg must be >= 0".into()));
        }
        Ok(())
    }
}

/// Flood field: baseline depth plus a zero-mean spatially correlated
/// perturbation with exponential covariance sigma^2 exp(-h/ell).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FloodFieldParams {
    pub baseline_m: f64,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    pub variance: f64,
    pub range_km: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    1e-10
}

impl FloodFieldParams {
    pub fn validate(&self) -> Result<()> {
        if self.variance < 0.0 {
            return Err(Error::ParamDomain("flood variance must be >= 0".into()));
        }
        if self.range_km <= 0.0 {
            return Err(Error::ParamDomain("flood range_km must be > 0".into()));
        }
        if self.baseline_m < 0.0 || self.overrides.values().any(|d| *d < 0.0) {
            return Err(Error::ParamDomain("baseline depths must be >= 0".into()));
        }
        Ok(())
    }

    pub fn baseline_for(&self, site_id: &str) -> f64 {
        *self.overrides.get(site_id).unwrap_or(&self.baseline_m)
    }
}

/// Lognormal fragility: exceedance probability of one damage state given a
/// hazard intensity (wind speed m/s or flood depth m).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FragilityCurve {
    pub component_class: String,
    #[serde(default = "default_damage_state")]
    pub damage_state: String,
    pub median: f64,
    pub dispersion: f64,
}

fn default_damage_state() -> String {
    "failed".into()
}

impl FragilityCurve {
    pub fn new(component_class: &str, median: f64, dispersion: f64) -> Result<Self> {
        let c = FragilityCurve {
            component_class: component_class.into(),
            damage_state: default_damage_state(),
            median,
            dispersion,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.median <= 0.0 {
            return Err(Error::ParamDomain(format!(
                "fragility median must be > 0 ({})",
                self.component_class
            )));
        }
        if self.dispersion <= 0.0 {
            return Err(Error::ParamDomain(format!(
                "fragility dispersion must be > 0 ({})",
                self.component_class
            )));
        }
        Ok(())
    }
}

/// Planar asset location tied to a feeder branch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssetSite {
    pub id: String,
    pub x_km: f64,
    pub y_km: f64,
    pub component_class: String,
    pub branch_id: String,
}

/// Per-site outcome of the correlated multi-hazard draw.
#[derive(Debug, Clone)]
pub struct DamageDraw {
    pub p_wind: f64,
    pub p_flood: f64,
    pub p_combined: f64,
    pub z_latent: f64,
    pub u_uniform: f64,
    pub failed: bool,
}

/// Piecewise-constant discovery rate lambda(t) in tickets/hour.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscoveryProcess {
    /// (start time h, rate) pairs; first must start at 0, strictly increasing.
    pub breakpoints: Vec<(f64, f64)>,
    pub horizon_h: f64,
}

impl DiscoveryProcess {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_h <= 0.0 {
            return Err(Error::ParamDomain("horizon must be > 0".into()));
        }
        if self.breakpoints.is_empty() || self.breakpoints[0].0 != 0.0 {
            return Err(Error::ParamDomain(
                "discovery breakpoints must start at t=0".into(),
            ));
        }
        for w in self.breakpoints.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::ParamDomain(
                    "discovery breakpoints must be strictly increasing".into(),
                ));
            }
        }
        if self.breakpoints.iter().any(|(_, r)| *r < 0.0) {
            return Err(Error::ParamDomain("discovery rates must be >= 0".into()));
        }
        Ok(())
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        let mut rate = self.breakpoints[0].1;
        for (start, r) in &self.breakpoints {
            if t >= *start {
                rate = *r;
            } else {
                break;
            }
        }
        rate
    }

    pub fn max_rate(&self) -> f64 {
        self.breakpoints.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }

    /// NHPP event times on [0, horizon) by thinning a homogeneous process
    /// at the max rate.
    pub fn sample_event_times(&self, rng: &mut ChaCha20Rng) -> Vec<f64> {
        let lam_max = self.max_rate();
        let mut out = Vec::new();
        if lam_max <= 0.0 {
            return out;
        }
        let mut t = 0.0;
        loop {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            t += -u.ln() / lam_max;
            if t >= self.horizon_h {
                break;
            }
            let accept: f64 = rng.gen();
            if accept < self.rate_at(t) / lam_max {
                out.push(t);
            }
        }
        out
    }
}

/// Lognormal repair-duration prior for one component class with an upper
/// truncation bound (infinite = untruncated).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairPrior {
    pub component_class: String,
    pub mu: f64,
    pub sigma: f64,
    pub truncation_h: f64,
}

impl RepairPrior {
    pub fn validate(&self) -> Result<()> {
        if self.sigma <= 0.0 {
            return Err(Error::ParamDomain(format!(
                "repair sigma must be > 0 ({})",
                self.component_class
            )));
        }
        if self.truncation_h <= 0.0 {
            return Err(Error::ParamDomain(format!(
                "repair truncation must be > 0 ({})",
                self.component_class
            )));
        }
        if self.truncation_h.is_finite() {
            // Reject truncations below the 0.1% quantile: the prior would be
            // effectively unsatisfiable by resampling.
            let q = (self.mu + self.sigma * normal_inv_cdf(0.001)?).exp();
            if self.truncation_h < q {
                return Err(Error::Config(format!(
                    "repair truncation {} h below the 0.1% quantile {:.3} h for class {}",
                    self.truncation_h, q, self.component_class
                )));
            }
        }
        Ok(())
    }
}

/// Per-block congestion multiplier profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CongestionProfile {
    pub block_h: f64,
    pub lo: f64,
    pub hi: f64,
    pub factors: Vec<f64>,
}

impl CongestionProfile {
    pub fn rho_at(&self, t: f64) -> f64 {
        if self.factors.is_empty() {
            return 1.0;
        }
        let idx = ((t / self.block_h) as usize).min(self.factors.len() - 1);
        self.factors[idx]
    }
}

/// Fully materialized stochastic event, replayable without the hazard
/// module.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HazardScenario {
    pub version: u32,
    pub seed: u64,
    pub feeder: String,
    pub config_hash: String,
    pub horizon_h: f64,
    /// Damaged sites confirmed at t=0, sorted by id.
    pub initial_damage: Vec<String>,
    /// Time-ordered (time h, site id) confirmations after t=0.
    pub arrivals: Vec<(f64, String)>,
    pub repair_times: BTreeMap<String, f64>,
    /// Closed road segment ids, sorted.
    pub road_closures: Vec<String>,
    pub congestion: CongestionProfile,
}

pub const SCENARIO_VERSION: u32 = 1;

impl HazardScenario {
    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::Config(format!(
                "scenario version {} unsupported (expect {SCENARIO_VERSION})",
                self.version
            )));
        }
        let mut last = 0.0;
        for (t, site) in &self.arrivals {
            if *t < last {
                return Err(Error::Validation("arrival times must be non-decreasing".into()));
            }
            if *t > self.horizon_h {
                return Err(Error::Validation("arrival beyond horizon".into()));
            }
            if self.initial_damage.contains(site) {
                return Err(Error::Validation(format!(
                    "site {site} both initially damaged and arriving later"
                )));
            }
            if !self.repair_times.contains_key(site) {
                return Err(Error::Validation(format!(
                    "arrival site {site} missing a repair time"
                )));
            }
            last = *t;
        }
        for site in &self.initial_damage {
            if !self.repair_times.contains_key(site) {
                return Err(Error::Validation(format!(
                    "initially damaged site {site} missing a repair time"
                )));
            }
        }
        for rho in &self.congestion.factors {
            if *rho < self.congestion.lo || *rho > self.congestion.hi {
                return Err(Error::Validation("congestion factor out of bounds".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: HazardScenario = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("scenario parse: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn write_to(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read_from(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// All damaged sites: initial plus arriving.
    pub fn damaged_sites(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .initial_damage
            .iter()
            .map(|s| s.as_str())
            .chain(self.arrivals.iter().map(|(_, s)| s.as_str()))
            .collect();
        v.sort_unstable();
        v
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Gradient-wind speed (m/s) at range `r_km` from the storm center:
/// sqrt((B dp / rho) (Rm/r)^B exp(-(Rm/r)^B)) + v_bg, with dp in Pa.
pub fn wind_speed_at(params: &HurricaneParams, r_km: f64) -> Result<f64> {
    params.validate()?;
    if r_km <= 0.0 {
        return Err(Error::ParamDomain(format!(
            "radius must be > 0, got {r_km}"
        )));
    }
    let dp_pa = params.delta_p_hpa * 100.0;
    let ratio = (params.r_m_km / r_km).powf(params.b_shape);
    let v2 = (params.b_shape * dp_pa / params.rho_air) * ratio * (-ratio).exp();
    Ok(v2.sqrt() + params.v_bg)
}

/// Holland shape parameter from environmental/central pressure:
/// B = 2 - (p_env - p_c)/160, clamped to [1, 3].
pub fn holland_b_estimate(p_env_hpa: f64, p_c_hpa: f64) -> Result<f64> {
    if p_env_hpa <= p_c_hpa {
        return Err(Error::ParamDomain(format!(
            "p_env ({p_env_hpa}) must exceed p_c ({p_c_hpa})"
        )));
    }
    Ok((2.0 - (p_env_hpa - p_c_hpa) / 160.0).clamp(1.0, 3.0))
}

/// Lognormal damage exceedance Phi(ln(intensity/median)/dispersion);
/// zero (or negative) intensity maps to probability 0.
pub fn fragility_exceedance(intensity: f64, curve: &FragilityCurve) -> f64 {
    if intensity <= 0.0 {
        return 0.0;
    }
    normal_cdf((intensity / curve.median).ln() / curve.dispersion)
}

/// Union of independent per-hazard failure probabilities.
pub fn combine_hazards(p_wind: f64, p_flood: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p_wind) && (0.0..=1.0).contains(&p_flood));
    1.0 - (1.0 - p_wind) * (1.0 - p_flood)
}

/// Distinct-location factorization helper shared by the flood GP and the
/// copula: exactly co-located points map to the same latent coordinate, so
/// their draws are identical (perfect correlation) instead of
/// jitter-perturbed.
fn dedup_locations(locations: &[(f64, f64)]) -> (Vec<(f64, f64)>, Vec<usize>) {
    let mut unique: Vec<(f64, f64)> = Vec::new();
    let mut keymap: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut assign = Vec::with_capacity(locations.len());
    for &(x, y) in locations {
        let key = (x.to_bits(), y.to_bits());
        let idx = *keymap.entry(key).or_insert_with(|| {
            unique.push((x, y));
            unique.len() - 1
        });
        assign.push(idx);
    }
    (unique, assign)
}

/// Joint zero-mean Gaussian draw with covariance sigma2 * exp(-d/ell) over
/// the given locations. Dense Cholesky with diagonal jitter escalating
/// tenfold from `jitter` up to 1e-6 before giving up.
fn sample_exponential_gp(
    locations: &[(f64, f64)],
    sigma2: f64,
    range_km: f64,
    jitter: f64,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<f64>> {
    let (unique, assign) = dedup_locations(locations);
    let n = unique.len();
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = ((unique[i].0 - unique[j].0).powi(2) + (unique[i].1 - unique[j].1).powi(2))
                .sqrt();
            cov[i * n + j] = sigma2 * (-d / range_km).exp();
        }
    }
    let mut jit = jitter.max(1e-300);
    let l = loop {
        let mut a = cov.clone();
        for i in 0..n {
            a[i * n + i] += jit;
        }
        match cholesky_in_place(&mut a, n) {
            Ok(()) => break a,
            Err(_) if jit < 1e-6 => jit *= 10.0,
            Err(e) => {
                return Err(Error::Numerical(format!(
                    "covariance factorization failed at jitter {jit:.1e}: {e}"
                )))
            }
        }
    };
    let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut z = vec![0.0; n];
    lower_tri_mul(&l, n, &eps, &mut z);
    Ok(assign.into_iter().map(|i| z[i]).collect())
}

/// One joint draw of flood depths: baseline plus the GP perturbation,
/// floored at zero.
pub fn sample_flood_depths(
    params: &FloodFieldParams,
    sites: &[AssetSite],
    rng: &mut ChaCha20Rng,
) -> Result<Vec<f64>> {
    params.validate()?;
    if sites.is_empty() {
        return Err(Error::ParamDomain("sample_flood_depths needs sites".into()));
    }
    if params.variance == 0.0 {
        return Ok(sites.iter().map(|s| params.baseline_for(&s.id)).collect());
    }
    let locations: Vec<(f64, f64)> = sites.iter().map(|s| (s.x_km, s.y_km)).collect();
    let eps = sample_exponential_gp(
        &locations,
        params.variance,
        params.range_km,
        params.jitter,
        rng,
    )?;
    Ok(sites
        .iter()
        .zip(eps)
        .map(|(s, e)| (params.baseline_for(&s.id) + e).max(0.0))
        .collect())
}

/// Correlated Bernoulli failures through a Gaussian copula with the
/// unit-variance exponential kernel exp(-d/ell). Marginals are preserved:
/// site i fails iff Phi(Z_i) < p_i.
pub fn sample_correlated_failures(
    probabilities: &[(f64, f64)],
    locations: &[(f64, f64)],
    range_km: f64,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<DamageDraw>> {
    if probabilities.len() != locations.len() {
        return Err(Error::ParamDomain(
            "probabilities/locations length mismatch".into(),
        ));
    }
    if range_km <= 0.0 {
        return Err(Error::ParamDomain("correlation range must be > 0".into()));
    }
    for &(pw, pf) in probabilities {
        if !(0.0..=1.0).contains(&pw) || !(0.0..=1.0).contains(&pf) {
            return Err(Error::ParamDomain("probabilities must lie in [0,1]".into()));
        }
    }
    if probabilities.is_empty() {
        return Ok(Vec::new());
    }
    let z = sample_exponential_gp(locations, 1.0, range_km, 1e-10, rng)?;
    Ok(probabilities
        .iter()
        .zip(z)
        .map(|(&(pw, pf), zi)| {
            let p = combine_hazards(pw, pf);
            let u = normal_cdf(zi);
            DamageDraw {
                p_wind: pw,
                p_flood: pf,
                p_combined: p,
                z_latent: zi,
                u_uniform: u,
                failed: u < p,
            }
        })
        .collect())
}

/// Poisson ticket count on [t, t+dt). The rate must be constant over the
/// interval; split at breakpoints before calling.
pub fn sample_arrival_counts(
    process: &DiscoveryProcess,
    t: f64,
    dt: f64,
    rng: &mut ChaCha20Rng,
) -> Result<u64> {
    if dt <= 0.0 {
        return Err(Error::ParamDomain(format!("dt must be > 0, got {dt}")));
    }
    let rate = process.rate_at(t);
    for (start, _) in &process.breakpoints {
        if *start > t && *start < t + dt {
            return Err(Error::ParamDomain(format!(
                "interval [{t}, {}) spans a rate breakpoint at {start}",
                t + dt
            )));
        }
    }
    let mean = rate * dt;
    if mean == 0.0 {
        return Ok(0);
    }
    let pois = Poisson::new(mean)
        .map_err(|e| Error::ParamDomain(format!("invalid Poisson mean {mean}: {e:?}")))?;
    Ok(pois.sample(rng) as u64)
}

const REPAIR_RESAMPLE_CAP: usize = 10_000;

/// Lognormal repair duration, resampled until it clears the truncation
/// bound. `validate` rejects priors whose bound sits below the 0.1%
/// quantile, so the retry loop terminates in practice.
pub fn sample_repair_time(prior: &RepairPrior, rng: &mut ChaCha20Rng) -> Result<f64> {
    prior.validate()?;
    for _ in 0..REPAIR_RESAMPLE_CAP {
        let z: f64 = rng.sample(StandardNormal);
        let tau = (prior.mu + prior.sigma * z).exp();
        if tau <= prior.truncation_h {
            return Ok(tau);
        }
    }
    Err(Error::Numerical(format!(
        "repair resampling exhausted {REPAIR_RESAMPLE_CAP} retries (class {})",
        prior.component_class
    )))
}

// ---------------------------------------------------------------------------
// Scenario pipeline
// ---------------------------------------------------------------------------

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha20Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Runs the five-step surrogate pipeline against a feeder's asset sites:
/// site intensities, fragility probabilities, hazard union, correlated
/// initial-outage draw, discovery-schedule assignment, repair times, road
/// closures, and a congestion profile. Deterministic given `seed`.
pub fn generate_scenario(
    config: &HazardConfig,
    feeder: &FeederModel,
    roads: &crate::feeder::RoadGraph,
    seed: u64,
) -> Result<HazardScenario> {
    config.validate()?;
    let sites = feeder.asset_sites();

    // Storm realization for this seed.
    let mut storm_rng = substream(seed, stream::STORM_PARAMS);
    let storm = config.storm.sample(&mut storm_rng)?;
    let center = (
        config.storm.center_x.sample(&mut storm_rng),
        config.storm.center_y.sample(&mut storm_rng),
    );

    // Site intensities and per-hazard probabilities.
    let flood_depths = if let Some(flood) = &config.flood {
        let mut flood_rng = substream(seed, stream::FLOOD_FIELD);
        Some(sample_flood_depths(flood, &sites, &mut flood_rng)?)
    } else {
        None
    };
    let mut probs = Vec::with_capacity(sites.len());
    for (i, site) in sites.iter().enumerate() {
        let r = ((site.x_km - center.0).powi(2) + (site.y_km - center.1).powi(2))
            .sqrt()
            .max(1e-6);
        let v = wind_speed_at(&storm, r)?;
        let p_wind = match config.fragility_wind(&site.component_class) {
            Some(curve) => fragility_exceedance(v, curve),
            None => 0.0,
        };
        let p_flood = match (&flood_depths, config.fragility_flood(&site.component_class)) {
            (Some(depths), Some(curve)) => fragility_exceedance(depths[i], curve),
            _ => 0.0,
        };
        probs.push((p_wind, p_flood));
    }

    // Correlated initial outages.
    let locations: Vec<(f64, f64)> = sites.iter().map(|s| (s.x_km, s.y_km)).collect();
    let mut copula_rng = substream(seed, stream::COPULA);
    let draws = sample_correlated_failures(&probs, &locations, config.correlation_km, &mut copula_rng)?;
    let damaged: Vec<&AssetSite> = sites
        .iter()
        .zip(&draws)
        .filter(|(_, d)| d.failed)
        .map(|(s, _)| s)
        .collect();

    // Split damage into initially confirmed and later arrivals: each
    // damaged site confirms at t=0 with probability confirm_p; the rest
    // take NHPP event times in a random order. Sites beyond the number of
    // sampled tickets stay unconfirmed for the whole horizon.
    let discovery = DiscoveryProcess {
        breakpoints: config.discovery.breakpoints.clone(),
        horizon_h: config.horizon_h,
    };
    discovery.validate()?;
    let mut disc_rng = substream(seed, stream::DISCOVERY);
    let mut initial: Vec<String> = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    for site in &damaged {
        if disc_rng.gen::<f64>() < config.confirm_p {
            initial.push(site.id.clone());
        } else {
            pending.push(site.id.clone());
        }
    }
    let times = discovery.sample_event_times(&mut disc_rng);
    shuffle(&mut pending, &mut disc_rng);
    let mut arrivals: Vec<(f64, String)> = times
        .iter()
        .zip(pending)
        .map(|(t, site)| (*t, site))
        .collect();
    arrivals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    initial.sort();

    // Repair durations for every damaged site (confirmed or not).
    let mut repair_rng = substream(seed, stream::REPAIR);
    let mut repair_times = BTreeMap::new();
    for site in &damaged {
        let prior = config.repair_prior(&site.component_class)?;
        repair_times.insert(site.id.clone(), sample_repair_time(&prior, &mut repair_rng)?);
    }

    // Road impairment from wind/flood at segment midpoints through the
    // "road" fragility class. Flood uses the baseline field (no GP draw at
    // road midpoints).
    let mut road_rng = substream(seed, stream::ROADS);
    let mut closures = Vec::new();
    if let Some(road_wind) = config.fragility_wind("road") {
        let road_flood = config.fragility_flood("road");
        for seg in &roads.segments {
            let a = &roads.nodes[seg.a];
            let b = &roads.nodes[seg.b];
            let mx = (a.x_km + b.x_km) / 2.0;
            let my = (a.y_km + b.y_km) / 2.0;
            let r = ((mx - center.0).powi(2) + (my - center.1).powi(2)).sqrt().max(1e-6);
            let p_wind = fragility_exceedance(wind_speed_at(&storm, r)?, road_wind);
            let p_flood = match (&config.flood, road_flood) {
                (Some(f), Some(curve)) => fragility_exceedance(f.baseline_m, curve),
                _ => 0.0,
            };
            let q_e = combine_hazards(p_wind, p_flood);
            if road_rng.gen::<f64>() < q_e {
                closures.push(seg.id.clone());
            }
        }
    }
    closures.sort();

    // Congestion profile in fixed blocks.
    let mut cong_rng = substream(seed, stream::CONGESTION);
    let blocks = (config.horizon_h / config.congestion.block_h).ceil() as usize;
    let factors: Vec<f64> = (0..blocks.max(1))
        .map(|_| cong_rng.gen_range(config.congestion.lo..=config.congestion.hi))
        .collect();

    let scenario = HazardScenario {
        version: SCENARIO_VERSION,
        seed,
        feeder: feeder.fingerprint(),
        config_hash: config.hash.clone(),
        horizon_h: config.horizon_h,
        initial_damage: initial,
        arrivals,
        repair_times,
        road_closures: closures,
        congestion: CongestionProfile {
            block_h: config.congestion.block_h,
            lo: config.congestion.lo,
            hi: config.congestion.hi,
            factors,
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests;
