//! Run configuration: TOML schema, strict validation, dotted-path overrides,
//! and conversion into the scenario template and training hyperparameters.

use crate::env::{Perturbation, ScenarioTemplate};
use crate::error::{Error, Result};
use crate::federated::{Algorithm, HyperParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub hotspot_count: usize,
    pub users_per_hotspot: usize,
    pub region_half_width_x: f64,
    pub region_half_width_y: f64,
    pub uav_altitude: f64,
    pub uav_max_step: f64,
    pub fas_ratio: f64,
    pub activation_prob: f64,
    pub user_spread: f64,
    pub center_jitter: f64,
    pub spread_jitter: f64,
    pub ratio_jitter: f64,
    pub activation_jitter: f64,
    pub earth_radius: f64,
    pub orbit_altitude: f64,
    pub angular_velocity: f64,
    pub eirp_psd: f64,
    pub noise_psd: f64,
    pub bandwidth: f64,
    pub carrier_freq: f64,
    pub rician_k_lr_db: f64,
    pub rician_k_ru_db: f64,
    pub port_rows: usize,
    pub port_cols: usize,
    pub port_size_w1: f64,
    pub port_size_w2: f64,
    pub ris_elements: usize,
    pub phase_levels: usize,
    pub horizon: usize,
    pub discount: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub algorithm: String,
    pub e0: usize,
    pub sigma_close: f64,
    pub sigma_far: f64,
    pub step_size: f64,
    pub batch_min: usize,
    pub batch_max: usize,
    pub batch_inner: usize,
    pub inner_cap: usize,
    pub trace_budget: u64,
    pub weight_clip_low: f64,
    pub weight_clip_high: f64,
    pub hidden: Vec<usize>,
    pub a_scale: f64,
    /// Periodic checkpoint interval in epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub runs: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub scenario: ScenarioSection,
    pub training: TrainingSection,
    pub evaluation: EvaluationSection,
}

impl RunConfig {
    pub fn template(&self) -> ScenarioTemplate {
        let s = &self.scenario;
        ScenarioTemplate {
            hotspot_count: s.hotspot_count,
            users_per_hotspot: s.users_per_hotspot,
            region_half_width_x: s.region_half_width_x,
            region_half_width_y: s.region_half_width_y,
            uav_altitude: s.uav_altitude,
            uav_max_step: s.uav_max_step,
            fas_ratio: s.fas_ratio,
            activation_prob: s.activation_prob,
            user_spread: s.user_spread,
            perturbation: Perturbation {
                center_jitter: s.center_jitter,
                spread_jitter: s.spread_jitter,
                ratio_jitter: s.ratio_jitter,
                activation_jitter: s.activation_jitter,
            },
            earth_radius: s.earth_radius,
            orbit_altitude: s.orbit_altitude,
            angular_velocity: s.angular_velocity,
            eirp_psd: s.eirp_psd,
            noise_psd: s.noise_psd,
            bandwidth: s.bandwidth,
            carrier_freq: s.carrier_freq,
            rician_k_lr_db: s.rician_k_lr_db,
            rician_k_ru_db: s.rician_k_ru_db,
            port_rows: s.port_rows,
            port_cols: s.port_cols,
            port_size_w1: s.port_size_w1,
            port_size_w2: s.port_size_w2,
            ris_elements: s.ris_elements,
            phase_levels: s.phase_levels,
            horizon: s.horizon,
            discount: s.discount,
        }
    }

    pub fn hyper(&self) -> HyperParams {
        let t = &self.training;
        HyperParams {
            e0: t.e0,
            sigma_close: t.sigma_close,
            sigma_far: t.sigma_far,
            step_size: t.step_size,
            batch_min: t.batch_min,
            batch_max: t.batch_max,
            batch_inner: t.batch_inner,
            inner_cap: t.inner_cap,
            trace_budget: t.trace_budget,
            weight_clip: (t.weight_clip_low, t.weight_clip_high),
            hidden: t.hidden.clone(),
            a_scale: t.a_scale,
        }
    }

    pub fn algorithm(&self) -> Result<Algorithm> {
        Algorithm::parse(&self.training.algorithm)
    }

    pub fn validate(&self) -> Result<()> {
        self.algorithm()?;
        self.hyper().validate()?;
        let s = &self.scenario;
        if s.hotspot_count == 0 || s.users_per_hotspot == 0 {
            return Err(Error::Config(
                "scenario needs at least one hotspot and one user".into(),
            ));
        }
        if s.horizon == 0 {
            return Err(Error::Config("scenario horizon must be >= 1".into()));
        }
        if s.discount <= 0.0 || s.discount >= 1.0 {
            return Err(Error::Config(format!(
                "discount {} outside (0, 1)",
                s.discount
            )));
        }
        if !(0.0..=1.0).contains(&s.fas_ratio) || !(0.0..=1.0).contains(&s.activation_prob) {
            return Err(Error::Config(
                "fas_ratio and activation_prob must lie in [0, 1]".into(),
            ));
        }
        if s.port_rows == 0 || s.port_cols == 0 {
            return Err(Error::Config("port grid must be nonempty".into()));
        }
        if s.ris_elements == 0 || s.phase_levels == 0 {
            return Err(Error::Config(
                "ris_elements and phase_levels must be >= 1".into(),
            ));
        }
        if self.evaluation.runs == 0 || self.evaluation.horizon == 0 {
            return Err(Error::Config(
                "evaluation runs and horizon must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }
}

/// Apply one `path.to.key=value` override onto a parsed TOML tree. The path
/// must address an existing key; the value is parsed as TOML (bare strings
/// fall back to string values).
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "override {assignment:?} must look like section.key=value"
        ))
    })?;
    let path = path.trim();
    let raw = raw.trim();
    if path.is_empty() {
        return Err(Error::Config("override path is empty".into()));
    }
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key v just inserted"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let table = cursor.as_table_mut().ok_or_else(|| {
            Error::Config(format!("override path {path:?}: {seg:?} is not a table"))
        })?;
        if i + 1 == segments.len() {
            if !table.contains_key(*seg) {
                return Err(Error::Config(format!(
                    "override path {path:?} does not name an existing key"
                )));
            }
            table.insert((*seg).to_string(), value);
            return Ok(());
        }
        cursor = table.get_mut(*seg).ok_or_else(|| {
            Error::Config(format!("override path {path:?}: missing section {seg:?}"))
        })?;
    }
    unreachable!("loop returns on the last segment");
}

/// Parse a config from TOML text with overrides applied, then validate.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut tree: toml::Value = text
        .parse()
        .map_err(|e| Error::Config(format!("config parse: {e}")))?;
    for assignment in overrides {
        apply_override(&mut tree, assignment)?;
    }
    let config: RunConfig = tree
        .try_into()
        .map_err(|e| Error::Config(format!("config schema: {e}")))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &std::path::Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, overrides)
}

/// Desk-scale default configuration (also the template for `--help` users).
pub const EXAMPLE_CONFIG: &str = r#"seed = 42

[scenario]
hotspot_count = 2
users_per_hotspot = 4
region_half_width_x = 500.0
region_half_width_y = 500.0
uav_altitude = 60.0
uav_max_step = 30.0
fas_ratio = 0.5
activation_prob = 0.9
user_spread = 60.0
center_jitter = 250.0
spread_jitter = 20.0
ratio_jitter = 0.25
activation_jitter = 0.05
earth_radius = 6378137.0
orbit_altitude = 550000.0
angular_velocity = 0.001076
eirp_psd = -16.82
noise_psd = -174.0
bandwidth = 20000000.0
carrier_freq = 11700000000.0
rician_k_lr_db = 15.0
rician_k_ru_db = 10.0
port_rows = 2
port_cols = 2
port_size_w1 = 3.0
port_size_w2 = 3.0
ris_elements = 8
phase_levels = 8
horizon = 10
discount = 0.99

[training]
algorithm = "fedpg_ap"
e0 = 1
sigma_close = 2.5
sigma_far = 3.0
step_size = 0.3
batch_min = 60
batch_max = 70
batch_inner = 32
inner_cap = 50
trace_budget = 89000
weight_clip_low = 0.0001
weight_clip_high = 10000.0
hidden = [64, 32, 16]
a_scale = 5.0
checkpoint_every = 0

[evaluation]
runs = 20
horizon = 10
"#;
