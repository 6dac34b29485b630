//! Per-hotspot Markov-game environment: state encoding, action application,
//! reward, episode rollout, and heterogeneous scenario generation (including
//! the master's virtual environment built from hotspot statistics).

use crate::channel::{
    equivalent_channel, lr_channel, phase_vector, rate, ru_channel_fas, ru_channel_plain,
    select_port, LinkBudget, PhaseControl, RicianParams,
};
use crate::error::{Error, Result};
use crate::fas::{build_correlation, factorize, CorrelatedSampler, PortGrid};
use crate::geometry::{
    distance, satellite_position, uav_step, HotspotRegion, OrbitModel, UavState, Vec3,
};
use crate::policy::{
    forward, sample_action, ActionScale, ActionValue, PolicyParams, PolicySpec,
};
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// One hotspot: fixed users, their FAS capability and activation probability,
/// and the UAV operating limits.
#[derive(Debug, Clone)]
pub struct HotspotSpec {
    pub region: HotspotRegion,
    pub user_positions: Vec<(f64, f64)>,
    pub fas_flags: Vec<bool>,
    pub activation_probs: Vec<f64>,
    pub uav_altitude: f64,
    pub uav_max_step: f64,
}

/// Full experiment description for one scenario realization.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub hotspots: Vec<HotspotSpec>,
    pub orbit: OrbitModel,
    pub budget: LinkBudget,
    pub rician: RicianParams,
    pub port_grid: PortGrid,
    pub ris_elements: usize,
    pub phase_levels: usize,
    pub horizon: usize,
    pub discount: f64,
}

impl ScenarioSpec {
    pub fn users_per_hotspot(&self) -> usize {
        self.hotspots.first().map_or(0, |h| h.user_positions.len())
    }

    /// Fixed policy input width: 3 + 4K.
    pub fn state_dim(&self) -> usize {
        3 + 4 * self.users_per_hotspot()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hotspots.is_empty() {
            return Err(Error::InvalidArgument("scenario needs >= 1 hotspot".into()));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.discount) || self.discount <= 0.0 {
            return Err(Error::InvalidArgument("discount must be in (0, 1)".into()));
        }
        let k = self.users_per_hotspot();
        for (n, h) in self.hotspots.iter().enumerate() {
            if h.user_positions.len() != k
                || h.fas_flags.len() != k
                || h.activation_probs.len() != k
            {
                return Err(Error::InvalidArgument(format!(
                    "hotspot {n} has inconsistent user counts (K must match across hotspots)"
                )));
            }
            for &(x, y) in &h.user_positions {
                if !h.region.contains_xy(x, y) {
                    return Err(Error::InvalidArgument(format!(
                        "hotspot {n} has a user outside its region"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Port-correlation factor shared by every FAS draw in a scenario.
pub fn make_sampler(scenario: &ScenarioSpec) -> Result<CorrelatedSampler> {
    factorize(&build_correlation(&scenario.port_grid))
}

/// Environment state: decision-step clock, satellite and previous UAV
/// positions, and per-user activation flags.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub t: usize,
    pub satellite: Vec3,
    pub uav: Vec3,
    pub active: Vec<bool>,
}

/// One hotspot's view of a scenario.
pub struct HotspotEnv<'a> {
    pub scenario: &'a ScenarioSpec,
    pub hotspot: usize,
    pub sampler: &'a CorrelatedSampler,
}

impl<'a> HotspotEnv<'a> {
    pub fn new(
        scenario: &'a ScenarioSpec,
        hotspot: usize,
        sampler: &'a CorrelatedSampler,
    ) -> Result<Self> {
        if hotspot >= scenario.hotspots.len() {
            return Err(Error::InvalidArgument(format!(
                "hotspot index {hotspot} out of range"
            )));
        }
        Ok(Self {
            scenario,
            hotspot,
            sampler,
        })
    }

    fn spec(&self) -> &HotspotSpec {
        &self.scenario.hotspots[self.hotspot]
    }

    pub fn action_scale(&self) -> ActionScale {
        ActionScale {
            max_speed: self.spec().uav_max_step,
        }
    }

    fn sample_activation(&self, rng: &mut impl Rng) -> Vec<bool> {
        self.spec()
            .activation_probs
            .iter()
            .map(|&p| rng.gen::<f64>() < p)
            .collect()
    }

    /// Episode start: UAV at the hotspot center at cruise altitude, satellite
    /// entering its window, activation freshly sampled.
    pub fn reset(&self, rng: &mut impl Rng) -> EnvState {
        EnvState {
            t: 0,
            satellite: satellite_position(&self.scenario.orbit, 0.0),
            uav: Vec3::new(0.0, 0.0, self.spec().uav_altitude),
            active: self.sample_activation(rng),
        }
    }
}

/// Fixed state layout: satellite x, UAV x/y (all normalized to the hotspot
/// half-widths), then per user ascending: x, y, activation, FAS flag.
pub fn encode_state(state: &EnvState, env: &HotspotEnv) -> Vec<f64> {
    let spec = env.spec();
    let xw = spec.region.half_width_x;
    let yw = spec.region.half_width_y;
    let mut out = Vec::with_capacity(env.scenario.state_dim());
    out.push(state.satellite.x / xw);
    out.push(state.uav.x / xw);
    out.push(state.uav.y / yw);
    for (k, &(x, y)) in spec.user_positions.iter().enumerate() {
        out.push(x / xw);
        out.push(y / yw);
        out.push(if state.active[k] { 1.0 } else { 0.0 });
        out.push(if spec.fas_flags[k] { 1.0 } else { 0.0 });
    }
    out
}

/// Average rate over active users; zero when nobody is active.
pub fn reward_from_rates(rates: &[f64], active: &[bool]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (r, &a) in rates.iter().zip(active) {
        if a {
            sum += r;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Apply one action: move the UAV, draw fresh channels for every active
/// user at the new geometry, and resample activation for the next step.
/// Returns (next state, reward, per-user rates).
pub fn step(
    env: &HotspotEnv,
    state: &EnvState,
    action: &ActionValue,
    rng: &mut impl Rng,
) -> Result<(EnvState, f64, Vec<f64>)> {
    let spec = env.spec();
    let scenario = env.scenario;
    let uav = uav_step(
        &UavState {
            position: state.uav,
            max_step: spec.uav_max_step,
        },
        action.yaw,
        action.speed,
        &spec.region,
    )?;
    let control = PhaseControl::new(scenario.phase_levels, action.levels.clone())?;
    if control.indices.len() != scenario.ris_elements {
        return Err(Error::DimensionMismatch(format!(
            "action carries {} phase levels, scenario has {} RIS elements",
            control.indices.len(),
            scenario.ris_elements
        )));
    }
    let phase = phase_vector(&control);
    let m = scenario.ris_elements;
    let d_lr = distance(state.satellite, uav.position);
    let lr = lr_channel(&scenario.rician, d_lr, m, rng)?;

    let mut rates = vec![0.0; spec.user_positions.len()];
    for (k, &(ux, uy)) in spec.user_positions.iter().enumerate() {
        if !state.active[k] {
            continue;
        }
        let d_ru = distance(uav.position, Vec3::new(ux, uy, 0.0));
        let equiv = if spec.fas_flags[k] {
            let ru = ru_channel_fas(&scenario.rician, d_ru, env.sampler, m, rng)?;
            let (_, value) = select_port(&lr, &phase, &ru)?;
            value
        } else {
            let ru = ru_channel_plain(&scenario.rician, d_ru, m, rng)?;
            equivalent_channel(&lr, &phase, &ru)?
        };
        rates[k] = rate(equiv, &scenario.budget);
    }
    let reward = reward_from_rates(&rates, &state.active);

    let t_next = state.t + 1;
    let next = EnvState {
        t: t_next,
        satellite: satellite_position(&scenario.orbit, t_next as f64),
        uav: uav.position,
        active: env.sample_activation(rng),
    };
    Ok((next, reward, rates))
}

#[derive(Debug, Clone)]
pub struct TraceStep {
    pub state: Vec<f64>,
    pub action: ActionValue,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub log_prob: f64,
    pub rates: Vec<f64>,
}

/// One episode of horizon T.
#[derive(Debug, Clone)]
pub struct ExperienceTrace {
    pub steps: Vec<TraceStep>,
}

impl ExperienceTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Roll one episode under the given policy parameters.
pub fn rollout(
    env: &HotspotEnv,
    params: &PolicyParams,
    policy_spec: &PolicySpec,
    rng: &mut impl Rng,
) -> Result<ExperienceTrace> {
    if policy_spec.state_dim != env.scenario.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "policy state dim {} vs scenario {}",
            policy_spec.state_dim,
            env.scenario.state_dim()
        )));
    }
    if policy_spec.ris_elements != env.scenario.ris_elements
        || policy_spec.phase_levels != env.scenario.phase_levels
    {
        return Err(Error::DimensionMismatch(
            "policy output head does not match scenario RIS geometry".into(),
        ));
    }
    let scale = env.action_scale();
    let mut state = env.reset(rng);
    let mut steps = Vec::with_capacity(env.scenario.horizon);
    for _ in 0..env.scenario.horizon {
        let encoded = encode_state(&state, env);
        let dist = forward(params, &encoded, policy_spec)?;
        let (action, log_prob) = sample_action(&dist, &scale, rng);
        let (next, reward, rates) = step(env, &state, &action, rng)?;
        let next_encoded = encode_state(&next, env);
        steps.push(TraceStep {
            state: encoded,
            action,
            reward,
            next_state: next_encoded,
            log_prob,
            rates,
        });
        state = next;
    }
    Ok(ExperienceTrace { steps })
}

/// Per-hotspot random perturbations applied around the template baselines.
#[derive(Debug, Clone, Copy, Default)]
pub struct Perturbation {
    pub center_jitter: f64,
    pub spread_jitter: f64,
    pub ratio_jitter: f64,
    pub activation_jitter: f64,
}

/// Baseline scenario description; heterogeneity comes from the perturbation.
#[derive(Debug, Clone)]
pub struct ScenarioTemplate {
    pub hotspot_count: usize,
    pub users_per_hotspot: usize,
    pub region_half_width_x: f64,
    pub region_half_width_y: f64,
    pub uav_altitude: f64,
    pub uav_max_step: f64,
    pub fas_ratio: f64,
    pub activation_prob: f64,
    pub user_spread: f64,
    pub perturbation: Perturbation,
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

impl ScenarioTemplate {
    fn shared_parts(&self) -> Result<(OrbitModel, LinkBudget, RicianParams, PortGrid)> {
        let orbit = OrbitModel::for_region(
            self.earth_radius,
            self.orbit_altitude,
            self.angular_velocity,
            self.region_half_width_x,
        )?;
        let budget = LinkBudget::new(self.eirp_psd, self.noise_psd, self.bandwidth, self.carrier_freq)?;
        let rician = RicianParams::from_db(self.rician_k_lr_db, self.rician_k_ru_db, self.carrier_freq)?;
        let grid = PortGrid::new(
            self.port_rows,
            self.port_cols,
            self.port_size_w1,
            self.port_size_w2,
        )?;
        Ok((orbit, budget, rician, grid))
    }

    fn region(&self) -> Result<HotspotRegion> {
        HotspotRegion::new(self.region_half_width_x, self.region_half_width_y)
    }
}

/// Cluster centers are drawn on an annulus between half and full jitter
/// radius so every hotspot demands a non-trivial flight from the spawn point.
fn sample_cluster_center(radius: f64, rng: &mut impl Rng) -> (f64, f64) {
    if radius == 0.0 {
        return (0.0, 0.0);
    }
    let r = radius * rng.gen_range(0.5..1.0);
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    (r * theta.cos(), r * theta.sin())
}

fn jitter(rng: &mut impl Rng, half_range: f64) -> f64 {
    if half_range == 0.0 {
        0.0
    } else {
        rng.gen_range(-half_range..half_range)
    }
}

fn sample_hotspot_users(
    region: &HotspotRegion,
    count: usize,
    center: (f64, f64),
    spread: (f64, f64),
    rng: &mut impl Rng,
) -> Vec<(f64, f64)> {
    let nx = Normal::new(center.0, spread.0.max(1e-9)).expect("finite spread");
    let ny = Normal::new(center.1, spread.1.max(1e-9)).expect("finite spread");
    (0..count)
        .map(|_| region.clamp_xy(nx.sample(rng), ny.sample(rng)))
        .collect()
}

/// Assign exactly round(ratio * K) FAS flags across a random user subset.
fn draw_fas_flags(count: usize, ratio: f64, rng: &mut impl Rng) -> Vec<bool> {
    let fas_count = ((ratio * count as f64).round() as usize).min(count);
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    let mut flags = vec![false; count];
    for &idx in order.iter().take(fas_count) {
        flags[idx] = true;
    }
    flags
}

/// Build a heterogeneous scenario: every hotspot gets its own user-cluster
/// center and spread, FAS ratio, and activation probability, each perturbed
/// around the template baseline.
pub fn generate_heterogeneous_scenario(
    template: &ScenarioTemplate,
    rng: &mut impl Rng,
) -> Result<ScenarioSpec> {
    let (orbit, budget, rician, grid) = template.shared_parts()?;
    let region = template.region()?;
    let p = template.perturbation;
    let mut hotspots = Vec::with_capacity(template.hotspot_count);
    for _ in 0..template.hotspot_count {
        let center = sample_cluster_center(p.center_jitter, rng);
        let spread = (template.user_spread + jitter(rng, p.spread_jitter)).max(1.0);
        let ratio = (template.fas_ratio + jitter(rng, p.ratio_jitter)).clamp(0.0, 1.0);
        let activation = (template.activation_prob + jitter(rng, p.activation_jitter)).clamp(0.0, 1.0);
        let user_positions = sample_hotspot_users(
            &region,
            template.users_per_hotspot,
            center,
            (spread, spread),
            rng,
        );
        let fas_flags = draw_fas_flags(template.users_per_hotspot, ratio, rng);
        hotspots.push(HotspotSpec {
            region,
            user_positions,
            fas_flags,
            activation_probs: vec![activation; template.users_per_hotspot],
            uav_altitude: template.uav_altitude,
            uav_max_step: template.uav_max_step,
        });
    }
    let scenario = ScenarioSpec {
        hotspots,
        orbit,
        budget,
        rician,
        port_grid: grid,
        ris_elements: template.ris_elements,
        phase_levels: template.phase_levels,
        horizon: template.horizon,
        discount: template.discount,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Per-hotspot summary: coordinate mean and (diagonal) covariance, FAS ratio,
/// activation probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotspotStats {
    pub mean: (f64, f64),
    pub var: (f64, f64),
    pub fas_ratio: f64,
    pub activation_prob: f64,
}

/// Exact sample statistics of the hotspot spec fields.
pub fn extract_stats(scenario: &ScenarioSpec) -> Vec<HotspotStats> {
    scenario
        .hotspots
        .iter()
        .map(|h| {
            let k = h.user_positions.len() as f64;
            let mean_x = h.user_positions.iter().map(|p| p.0).sum::<f64>() / k;
            let mean_y = h.user_positions.iter().map(|p| p.1).sum::<f64>() / k;
            let var_x = h
                .user_positions
                .iter()
                .map(|p| (p.0 - mean_x).powi(2))
                .sum::<f64>()
                / k;
            let var_y = h
                .user_positions
                .iter()
                .map(|p| (p.1 - mean_y).powi(2))
                .sum::<f64>()
                / k;
            let fas_ratio = h.fas_flags.iter().filter(|&&f| f).count() as f64 / k;
            let activation_prob = h.activation_probs.iter().sum::<f64>() / k;
            HotspotStats {
                mean: (mean_x, mean_y),
                var: (var_x, var_y),
                fas_ratio,
                activation_prob,
            }
        })
        .collect()
}

/// Construct the master's virtual scenario: each virtual hotspot picks a
/// source hotspot's statistics uniformly, perturbs them, and samples users
/// from the fitted coordinate distribution.
pub fn build_virtual_env(
    stats: &[HotspotStats],
    template: &ScenarioTemplate,
    perturbation: &Perturbation,
    rng: &mut impl Rng,
) -> Result<ScenarioSpec> {
    if stats.is_empty() {
        return Err(Error::InvalidArgument("virtual env needs source stats".into()));
    }
    let (orbit, budget, rician, grid) = template.shared_parts()?;
    let region = template.region()?;
    let mut hotspots = Vec::with_capacity(template.hotspot_count);
    for _ in 0..template.hotspot_count {
        let src = stats[rng.gen_range(0..stats.len())];
        let center = (
            src.mean.0 + jitter(rng, perturbation.center_jitter),
            src.mean.1 + jitter(rng, perturbation.center_jitter),
        );
        let spread = (
            (src.var.0.sqrt() + jitter(rng, perturbation.spread_jitter)).max(0.0),
            (src.var.1.sqrt() + jitter(rng, perturbation.spread_jitter)).max(0.0),
        );
        let ratio = (src.fas_ratio + jitter(rng, perturbation.ratio_jitter)).clamp(0.0, 1.0);
        let activation =
            (src.activation_prob + jitter(rng, perturbation.activation_jitter)).clamp(0.0, 1.0);
        let user_positions = sample_hotspot_users(
            &region,
            template.users_per_hotspot,
            center,
            spread,
            rng,
        );
        let fas_flags = draw_fas_flags(template.users_per_hotspot, ratio, rng);
        hotspots.push(HotspotSpec {
            region,
            user_positions,
            fas_flags,
            activation_probs: vec![activation; template.users_per_hotspot],
            uav_altitude: template.uav_altitude,
            uav_max_step: template.uav_max_step,
        });
    }
    let scenario = ScenarioSpec {
        hotspots,
        orbit,
        budget,
        rician,
        port_grid: grid,
        ris_elements: template.ris_elements,
        phase_levels: template.phase_levels,
        horizon: template.horizon,
        discount: template.discount,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Policy spec matching a scenario plus training-side knobs.
pub fn policy_spec_for(scenario: &ScenarioSpec, hidden: &[usize], a_scale: f64) -> PolicySpec {
    PolicySpec {
        state_dim: scenario.state_dim(),
        hidden: hidden.to_vec(),
        ris_elements: scenario.ris_elements,
        phase_levels: scenario.phase_levels,
        a_scale,
    }
}

/// Used by tests that need a deterministic all-ones channel path.
#[allow(dead_code)]
pub(crate) fn dvector_len(v: &DVector<f64>) -> usize {
    v.len()
}
