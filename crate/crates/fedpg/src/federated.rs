//! Federated orchestration: the epoch loop, adaptive personalization of the
//! layer partition, gradient aggregation, the master's variance-reduced inner
//! loop on a virtual environment, and the baseline variants.

use crate::env::{
    build_virtual_env, extract_stats, generate_heterogeneous_scenario, make_sampler, rollout,
    ExperienceTrace, HotspotEnv, HotspotStats, ScenarioSpec, ScenarioTemplate,
};
use crate::error::{Error, Result};
use crate::estimator::{
    gpomdp_gradient, grad_norm, sample_inner_length, surrogate_loss, svrpg_direction, SourceTag,
};
use crate::fas::CorrelatedSampler;
use crate::policy::{
    axpy_update, init_params, unflatten, ActionScale, Layer, PolicyParams, PolicySpec,
};
use crate::rng::substream;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

/// Training variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Adaptive personalization: the partition moves each epoch.
    FedPgAp,
    /// No personalization: every layer comes from the global model.
    FedPgNp,
    /// Fixed personalization: the partition stays at its initial value.
    FedPgFp,
    /// Independent per-node learning, no federation at all.
    Svrpg,
}

impl Algorithm {
    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "fedpg_ap" => Ok(Self::FedPgAp),
            "fedpg_np" => Ok(Self::FedPgNp),
            "fedpg_fp" => Ok(Self::FedPgFp),
            "svrpg" => Ok(Self::Svrpg),
            other => Err(Error::InvalidArgument(format!(
                "unknown algorithm tag {other:?} (expected fedpg_ap, fedpg_np, fedpg_fp, svrpg)"
            ))),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::FedPgAp => "fedpg_ap",
            Self::FedPgNp => "fedpg_np",
            Self::FedPgFp => "fedpg_fp",
            Self::Svrpg => "svrpg",
        }
    }
}

/// Personalization partition for one node. The effective boundary is
/// clamp(e0 + delta_e, 0, Z); delta_e is recomputed from scratch every epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionState {
    pub e0: usize,
    pub delta_e: i32,
}

impl PartitionState {
    pub fn effective(&self, layer_count: usize) -> usize {
        (self.e0 as i64 + self.delta_e as i64).clamp(0, layer_count as i64) as usize
    }
}

/// One federation node: its retained local parameters and partition.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: usize,
    pub local_params: PolicyParams,
    pub partition: PartitionState,
}

/// Master-side training state.
#[derive(Debug, Clone)]
pub struct MasterState {
    pub global: PolicyParams,
    pub epoch: usize,
    pub traces_consumed: u64,
}

/// Training hyperparameters (scenario-independent).
#[derive(Debug, Clone)]
pub struct HyperParams {
    pub e0: usize,
    pub sigma_close: f64,
    pub sigma_far: f64,
    pub step_size: f64,
    pub batch_min: usize,
    pub batch_max: usize,
    pub batch_inner: usize,
    pub inner_cap: usize,
    pub trace_budget: u64,
    pub weight_clip: (f64, f64),
    pub hidden: Vec<usize>,
    pub a_scale: f64,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_close >= self.sigma_far {
            return Err(Error::InvalidArgument(format!(
                "sigma_close {} must be below sigma_far {}",
                self.sigma_close, self.sigma_far
            )));
        }
        if self.batch_min == 0 || self.batch_min > self.batch_max {
            return Err(Error::InvalidArgument(format!(
                "batch range [{}, {}] invalid",
                self.batch_min, self.batch_max
            )));
        }
        if self.batch_inner == 0 || self.inner_cap == 0 {
            return Err(Error::InvalidArgument(
                "inner batch size and cap must be positive".into(),
            ));
        }
        if self.step_size <= 0.0 || !self.step_size.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step size {} must be positive", self.step_size
            )));
        }
        if self.e0 > self.hidden.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "e0 {} exceeds layer count {}",
                self.e0,
                self.hidden.len() + 1
            )));
        }
        if self.weight_clip.0 <= 0.0 || self.weight_clip.0 >= self.weight_clip.1 {
            return Err(Error::InvalidArgument("weight clip bounds invalid".into()));
        }
        Ok(())
    }
}

/// Per-epoch record mirroring the report file columns.
#[derive(Debug, Clone)]
pub struct EpochReport {
    pub epoch: usize,
    pub traces_consumed: u64,
    pub mean_total_reward: Vec<f64>,
    pub surrogate_loss: f64,
    pub grad_norm: Vec<f64>,
    pub distances: DMatrix<f64>,
    pub mean_pairwise_grad_distance: f64,
    pub median_node: usize,
    pub delta_e: Vec<i32>,
    pub inner_loop_len: usize,
}

/// Layer inheritance: layers below the partition come from the node, layers
/// at or above it come from the global model.
pub fn inherit_params(
    local: &PolicyParams,
    global: &PolicyParams,
    effective_e: usize,
) -> Result<PolicyParams> {
    if !local.shapes_match(global) {
        return Err(Error::DimensionMismatch(
            "local and global parameter shapes differ".into(),
        ));
    }
    let layers = local
        .layers
        .iter()
        .zip(&global.layers)
        .enumerate()
        .map(|(z, (l, g))| {
            let src = if z < effective_e { l } else { g };
            Layer {
                weights: src.weights.clone(),
                bias: src.bias.clone(),
            }
        })
        .collect();
    Ok(PolicyParams { layers })
}

/// Euclidean distances between flattened gradients; symmetric, zero diagonal.
pub fn pairwise_distances(grads: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = grads.len();
    for g in grads.iter().skip(1) {
        if g.len() != grads[0].len() {
            return Err(Error::DimensionMismatch(
                "gradient vectors have different lengths".into(),
            ));
        }
    }
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = grads[i]
                .iter()
                .zip(&grads[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    Ok(d)
}

fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Node whose median distance to the others is smallest; ties go to the
/// lowest index.
pub fn median_node(distances: &DMatrix<f64>) -> Result<usize> {
    let n = distances.nrows();
    if n < 2 || distances.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "median node needs a square matrix with n >= 2, got {}x{}",
            distances.nrows(),
            distances.ncols()
        )));
    }
    let mut best = 0usize;
    let mut best_median = f64::INFINITY;
    for i in 0..n {
        let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| distances[(i, j)]).collect();
        let m = median_of(others);
        if m < best_median {
            best_median = m;
            best = i;
        }
    }
    Ok(best)
}

/// Per-node partition adjustment from the distance to the median node:
/// below sigma_close the node keeps one more local layer, above sigma_far it
/// hands one more layer to the global model.
pub fn adapt_partition(
    distances: &DMatrix<f64>,
    median: usize,
    sigma_close: f64,
    sigma_far: f64,
) -> Result<Vec<i32>> {
    if sigma_close >= sigma_far {
        return Err(Error::InvalidArgument(format!(
            "sigma_close {sigma_close} must be below sigma_far {sigma_far}"
        )));
    }
    if median >= distances.nrows() {
        return Err(Error::InvalidArgument(format!(
            "median index {median} out of range"
        )));
    }
    Ok((0..distances.nrows())
        .map(|n| {
            let d = distances[(n, median)];
            if d < sigma_close {
                1
            } else if d > sigma_far {
                -1
            } else {
                0
            }
        })
        .collect())
}

/// Arithmetic mean of the node gradients, reduced in node-index order.
pub fn aggregate(grads: &[Vec<f64>]) -> Result<Vec<f64>> {
    if grads.is_empty() {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    }
    let len = grads[0].len();
    let mut acc = vec![0.0; len];
    for g in grads {
        if g.len() != len {
            return Err(Error::DimensionMismatch(
                "gradient vectors have different lengths".into(),
            ));
        }
        for (a, v) in acc.iter_mut().zip(g) {
            *a += v;
        }
    }
    let inv = 1.0 / grads.len() as f64;
    for a in acc.iter_mut() {
        *a *= inv;
    }
    Ok(acc)
}

struct NodePhase {
    inherited: PolicyParams,
    mu: Vec<f64>,
    mean_total_reward: f64,
    loss: f64,
    norm: f64,
    /// Post-inner-loop parameters (independent-learning variant only).
    updated: Option<PolicyParams>,
}

/// Full training state plus the fixed experiment description.
pub struct Trainer {
    pub algorithm: Algorithm,
    pub template: ScenarioTemplate,
    pub scenario: ScenarioSpec,
    pub stats: Vec<HotspotStats>,
    pub sampler: CorrelatedSampler,
    pub policy: PolicySpec,
    pub hyper: HyperParams,
    pub seed: u64,
    pub master: MasterState,
    pub nodes: Vec<NodeState>,
    pool: rayon::ThreadPool,
}

impl Trainer {
    /// Build the initial state: generate the heterogeneous scenario, extract
    /// its statistics for the virtual environment, and initialize one shared
    /// starting model.
    pub fn new(
        algorithm: Algorithm,
        template: ScenarioTemplate,
        hyper: HyperParams,
        seed: u64,
        workers: usize,
    ) -> Result<Self> {
        hyper.validate()?;
        let mut scenario_rng = substream(seed, "scenario", &[]);
        let scenario = generate_heterogeneous_scenario(&template, &mut scenario_rng)?;
        let stats = extract_stats(&scenario);
        let sampler = make_sampler(&scenario)?;
        let policy = crate::env::policy_spec_for(&scenario, &hyper.hidden, hyper.a_scale);
        if hyper.e0 > policy.layer_count() {
            return Err(Error::InvalidArgument(format!(
                "e0 {} exceeds layer count {}",
                hyper.e0,
                policy.layer_count()
            )));
        }
        let global = init_params(&policy, &mut substream(seed, "init", &[]));
        let e0 = match algorithm {
            Algorithm::FedPgNp => 0,
            _ => hyper.e0,
        };
        let nodes = (0..scenario.hotspots.len())
            .map(|id| NodeState {
                id,
                local_params: global.clone(),
                partition: PartitionState { e0, delta_e: 0 },
            })
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(Self {
            algorithm,
            template,
            scenario,
            stats,
            sampler,
            policy,
            hyper,
            seed,
            master: MasterState {
                global,
                epoch: 0,
                traces_consumed: 0,
            },
            nodes,
        pool,
        })
    }

    fn action_scale(&self) -> ActionScale {
        ActionScale {
            max_speed: self.template.uav_max_step,
        }
    }

    fn collect_batch(
        &self,
        scenario: &ScenarioSpec,
        hotspot: usize,
        params: &PolicyParams,
        count: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<ExperienceTrace>> {
        let env = HotspotEnv::new(scenario, hotspot, &self.sampler)?;
        (0..count)
            .map(|_| rollout(&env, params, &self.policy, rng))
            .collect()
    }

    /// Batch of inner-loop traces on a (virtual) scenario; trace j comes from
    /// hotspot j mod N so every virtual hotspot contributes.
    fn collect_inner_batch(
        &self,
        scenario: &ScenarioSpec,
        params: &PolicyParams,
        count: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<ExperienceTrace>> {
        let n = scenario.hotspots.len();
        (0..count)
            .map(|j| {
                let env = HotspotEnv::new(scenario, j % n, &self.sampler)?;
                rollout(&env, params, &self.policy, rng)
            })
            .collect()
    }

    fn inner_loop(
        &self,
        start: &PolicyParams,
        snapshot: &PolicyParams,
        mu: &[f64],
        scenario: &ScenarioSpec,
        length: usize,
        stream_ids: &[u64],
    ) -> Result<PolicyParams> {
        let discount = self.scenario.discount;
        let scale = self.action_scale();
        let mut theta = start.clone();
        for m in 1..=length {
            let mut ids = stream_ids.to_vec();
            ids.push(m as u64);
            let mut rng = substream(self.seed, "inner", &ids);
            let traces =
                self.collect_inner_batch(scenario, &theta, self.hyper.batch_inner, &mut rng)?;
            let v = svrpg_direction(
                mu,
                &traces,
                &theta,
                snapshot,
                &self.policy,
                &scale,
                discount,
                self.hyper.weight_clip,
            )?;
            let direction = unflatten(&v, &self.policy)?;
            theta = axpy_update(&theta, &direction, self.hyper.step_size)?;
            if !theta.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite parameters after inner step {m} of epoch {}",
                    self.master.epoch
                )));
            }
        }
        Ok(theta)
    }

    /// One full epoch: snapshot, per-node collection, partition adaptation,
    /// aggregation, and the master (or per-node) inner loop.
    pub fn run_epoch(&mut self) -> Result<EpochReport> {
        let c = self.master.epoch as u64;
        let n_nodes = self.nodes.len();
        let layer_count = self.policy.layer_count();
        let discount = self.scenario.discount;
        let scale = self.action_scale();

        let batch_outer = {
            let mut rng = substream(self.seed, "batch", &[c]);
            rng.gen_range(self.hyper.batch_min..=self.hyper.batch_max)
        };
        let snapshot = self.master.global.clone();
        let independent = self.algorithm == Algorithm::Svrpg;

        let inner_len = {
            let mut rng = substream(self.seed, "inner-len", &[c]);
            sample_inner_length(
                batch_outer,
                self.hyper.batch_inner,
                self.hyper.inner_cap,
                &mut rng,
            )?
        };

        // Node phase: inheritance, rollouts, local gradient; for the
        // independent variant also the node's own inner loop. Per-node
        // substreams keep the result identical for any worker count.
        let phases: Vec<NodePhase> = self.pool.install(|| {
            self.nodes
                .par_iter()
                .map(|node| -> Result<NodePhase> {
                    let inherited = if independent {
                        node.local_params.clone()
                    } else {
                        inherit_params(
                            &node.local_params,
                            &snapshot,
                            node.partition.effective(layer_count),
                        )?
                    };
                    let mut rng = substream(self.seed, "rollout", &[node.id as u64, c]);
                    let traces = self.collect_batch(
                        &self.scenario,
                        node.id,
                        &inherited,
                        batch_outer,
                        &mut rng,
                    )?;
                    let est = gpomdp_gradient(
                        &inherited,
                        &traces,
                        &self.policy,
                        &scale,
                        discount,
                        SourceTag::Local(node.id),
                    )?;
                    if !est.grad.iter().all(|g| g.is_finite()) {
                        return Err(Error::Numeric(format!(
                            "non-finite local gradient at node {} epoch {c}",
                            node.id
                        )));
                    }
                    let mean_total_reward = traces
                        .iter()
                        .map(ExperienceTrace::total_reward)
                        .sum::<f64>()
                        / traces.len() as f64;
                    let loss = surrogate_loss(&traces, discount)?;
                    let norm = grad_norm(&est.grad);
                    let updated = if independent {
                        Some(self.inner_loop(
                            &inherited,
                            &inherited,
                            &est.grad,
                            &self.scenario,
                            inner_len,
                            &[c, node.id as u64],
                        )?)
                    } else {
                        None
                    };
                    Ok(NodePhase {
                        inherited,
                        mu: est.grad,
                        mean_total_reward,
                        loss,
                        norm,
                        updated,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;

        // The inherited parameters become each node's local source next epoch.
        for (node, phase) in self.nodes.iter_mut().zip(&phases) {
            node.local_params = match &phase.updated {
                Some(p) => p.clone(),
                None => phase.inherited.clone(),
            };
        }

        let mus: Vec<Vec<f64>> = phases.iter().map(|p| p.mu.clone()).collect();
        let distances = pairwise_distances(&mus)?;
        let (median, raw_delta) = if n_nodes >= 2 {
            let median = median_node(&distances)?;
            let delta =
                adapt_partition(&distances, median, self.hyper.sigma_close, self.hyper.sigma_far)?;
            (median, delta)
        } else {
            (0, vec![0; n_nodes])
        };
        // Only the adaptive variant applies the adjustment; every variant
        // logs what it applied.
        let applied: Vec<i32> = match self.algorithm {
            Algorithm::FedPgAp => raw_delta,
            _ => vec![0; n_nodes],
        };
        for (node, &d) in self.nodes.iter_mut().zip(&applied) {
            node.partition.delta_e = d;
        }

        let consumed = if independent {
            // Each node ran its own inner loop of the shared sampled length.
            (n_nodes * batch_outer + n_nodes * inner_len * self.hyper.batch_inner) as u64
        } else {
            let mu = aggregate(&mus)?;
            let virtual_scenario = build_virtual_env(
                &self.stats,
                &self.template,
                &self.template.perturbation,
                &mut substream(self.seed, "virtual", &[c]),
            )?;
            let theta = self.inner_loop(
                &snapshot,
                &snapshot,
                &mu,
                &virtual_scenario,
                inner_len,
                &[c],
            )?;
            self.master.global = theta;
            (n_nodes * batch_outer + inner_len * self.hyper.batch_inner) as u64
        };

        self.master.traces_consumed += consumed;
        self.master.epoch += 1;

        let off_diag: f64 = if n_nodes >= 2 {
            let mut sum = 0.0;
            for i in 0..n_nodes {
                for j in (i + 1)..n_nodes {
                    sum += distances[(i, j)];
                }
            }
            sum / (n_nodes * (n_nodes - 1) / 2) as f64
        } else {
            0.0
        };

        Ok(EpochReport {
            epoch: self.master.epoch - 1,
            traces_consumed: self.master.traces_consumed,
            mean_total_reward: phases.iter().map(|p| p.mean_total_reward).collect(),
            surrogate_loss: phases.iter().map(|p| p.loss).sum::<f64>() / n_nodes as f64,
            grad_norm: phases.iter().map(|p| p.norm).collect(),
            distances,
            mean_pairwise_grad_distance: off_diag,
            median_node: median,
            delta_e: applied,
            inner_loop_len: inner_len,
        })
    }

    /// Run epochs until the trace budget is spent, invoking the callback
    /// after each epoch.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&EpochReport) -> Result<()>) -> Result<Vec<EpochReport>> {
        let mut reports = Vec::new();
        while self.master.traces_consumed < self.hyper.trace_budget {
            let report = self.run_epoch()?;
            on_epoch(&report)?;
            reports.push(report);
        }
        Ok(reports)
    }
}

/// Aggregated evaluation result.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    /// runs x T per-step mean active-user rates.
    pub per_run: Vec<Vec<f64>>,
    pub mean_curve: Vec<f64>,
    /// Per-step coefficient of variation across runs.
    pub cv: Vec<f64>,
    /// Absolute slope of the least-squares fit to the mean curve.
    pub sd: f64,
}

/// Least-squares slope of a curve against step index 0..T-1.
pub fn fit_slope(curve: &[f64]) -> f64 {
    let n = curve.len();
    if n < 2 {
        return 0.0;
    }
    let t_mean = (n - 1) as f64 / 2.0;
    let y_mean = curve.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, &y) in curve.iter().enumerate() {
        let dt = t as f64 - t_mean;
        num += dt * (y - y_mean);
        den += dt * dt;
    }
    num / den
}

/// Mean curve, per-step CV, and SD from per-run rate curves.
pub fn aggregate_eval(per_run: &[Vec<f64>]) -> Result<EvalOutcome> {
    if per_run.is_empty() {
        return Err(Error::InvalidArgument("no evaluation runs".into()));
    }
    let t_len = per_run[0].len();
    for r in per_run {
        if r.len() != t_len {
            return Err(Error::DimensionMismatch(
                "evaluation curves have different lengths".into(),
            ));
        }
    }
    let runs = per_run.len() as f64;
    let mut mean_curve = vec![0.0; t_len];
    let mut cv = vec![0.0; t_len];
    for t in 0..t_len {
        let mean = per_run.iter().map(|r| r[t]).sum::<f64>() / runs;
        let var = per_run.iter().map(|r| (r[t] - mean).powi(2)).sum::<f64>() / runs;
        let sd = var.sqrt();
        mean_curve[t] = mean;
        cv[t] = if sd == 0.0 { 0.0 } else { sd / mean };
    }
    let sd = fit_slope(&mean_curve).abs();
    Ok(EvalOutcome {
        per_run: per_run.to_vec(),
        mean_curve,
        cv,
        sd,
    })
}

/// Evaluate a policy over freshly generated environments: each run generates
/// a new scenario and rolls one episode per hotspot; the run's curve is the
/// across-hotspot mean of the per-step active-user rate.
pub fn evaluate(
    params: &PolicyParams,
    template: &ScenarioTemplate,
    policy: &PolicySpec,
    runs: usize,
    horizon: usize,
    seed: u64,
) -> Result<EvalOutcome> {
    if runs == 0 || horizon == 0 {
        return Err(Error::InvalidArgument(
            "evaluation needs runs >= 1 and horizon >= 1".into(),
        ));
    }
    let mut eval_template = template.clone();
    eval_template.horizon = horizon;
    let mut per_run = Vec::with_capacity(runs);
    for r in 0..runs {
        let mut rng = substream(seed, "eval", &[r as u64]);
        let scenario = generate_heterogeneous_scenario(&eval_template, &mut rng)?;
        let sampler = make_sampler(&scenario)?;
        let n = scenario.hotspots.len();
        let mut curve = vec![0.0; horizon];
        for h in 0..n {
            let env = HotspotEnv::new(&scenario, h, &sampler)?;
            let trace = rollout(&env, params, policy, &mut rng)?;
            for (t, step) in trace.steps.iter().enumerate() {
                curve[t] += step.reward / n as f64;
            }
        }
        if !curve.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite rate in run {r}")));
        }
        per_run.push(curve);
    }
    aggregate_eval(&per_run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Perturbation;
    use crate::policy::flatten;
    use approx::assert_relative_eq;

    fn tiny_template() -> ScenarioTemplate {
        ScenarioTemplate {
            hotspot_count: 3,
            users_per_hotspot: 2,
            region_half_width_x: 500.0,
            region_half_width_y: 500.0,
            uav_altitude: 100.0,
            uav_max_step: 12.0,
            fas_ratio: 0.5,
            activation_prob: 0.8,
            user_spread: 150.0,
            perturbation: Perturbation {
                center_jitter: 200.0,
                spread_jitter: 50.0,
                ratio_jitter: 0.25,
                activation_jitter: 0.1,
            },
            earth_radius: 6_378_137.0,
            orbit_altitude: 550_000.0,
            angular_velocity: 0.001076,
            eirp_psd: -16.82,
            noise_psd: -174.0,
            bandwidth: 2e7,
            carrier_freq: 11.7e9,
            rician_k_lr_db: 15.0,
            rician_k_ru_db: 10.0,
            port_rows: 2,
            port_cols: 2,
            port_size_w1: 1.0,
            port_size_w2: 1.0,
            ris_elements: 2,
            phase_levels: 3,
            horizon: 3,
            discount: 0.9,
        }
    }

    fn tiny_hyper() -> HyperParams {
        HyperParams {
            e0: 1,
            sigma_close: 2.5,
            sigma_far: 3.0,
            step_size: 1e-3,
            batch_min: 2,
            batch_max: 3,
            batch_inner: 2,
            inner_cap: 3,
            trace_budget: 40,
            weight_clip: (1e-4, 1e4),
            hidden: vec![6, 5],
            a_scale: 5.0,
        }
    }

    fn tiny_policy() -> PolicySpec {
        PolicySpec {
            state_dim: 4,
            hidden: vec![3],
            ris_elements: 1,
            phase_levels: 2,
            a_scale: 5.0,
        }
    }

    #[test]
    fn inherit_boundaries() {
        let spec = tiny_policy();
        let mut rng = substream(5, "fed", &[0]);
        let local = init_params(&spec, &mut rng);
        let global = init_params(&spec, &mut rng);
        let z = spec.layer_count();
        let all_global = inherit_params(&local, &global, 0).unwrap();
        assert_eq!(flatten(&all_global), flatten(&global));
        let all_local = inherit_params(&local, &global, z).unwrap();
        assert_eq!(flatten(&all_local), flatten(&local));
    }

    #[test]
    fn inherit_mixes_layers() {
        // Four layers, e = 1: layer 0 local, layers 1..3 global.
        let spec = PolicySpec {
            state_dim: 3,
            hidden: vec![3, 3, 3],
            ris_elements: 1,
            phase_levels: 2,
            a_scale: 5.0,
        };
        let mut rng = substream(5, "fed", &[1]);
        let local = init_params(&spec, &mut rng);
        let global = init_params(&spec, &mut rng);
        let mixed = inherit_params(&local, &global, 1).unwrap();
        assert_eq!(mixed.layers[0].weights, local.layers[0].weights);
        for z in 1..4 {
            assert_eq!(mixed.layers[z].weights, global.layers[z].weights);
            assert_eq!(mixed.layers[z].bias, global.layers[z].bias);
        }
    }

    #[test]
    fn inherit_rejects_shape_mismatch() {
        let mut rng = substream(5, "fed", &[2]);
        let a = init_params(&tiny_policy(), &mut rng);
        let other = PolicySpec {
            state_dim: 5,
            ..tiny_policy()
        };
        let b = init_params(&other, &mut rng);
        assert!(inherit_params(&a, &b, 0).is_err());
    }

    #[test]
    fn partition_effective_clamps() {
        let p = PartitionState { e0: 0, delta_e: -1 };
        assert_eq!(p.effective(3), 0);
        let p = PartitionState { e0: 3, delta_e: 1 };
        assert_eq!(p.effective(3), 3);
        let p = PartitionState { e0: 1, delta_e: 1 };
        assert_eq!(p.effective(3), 2);
    }

    #[test]
    fn distances_examples() {
        let identical = vec![vec![1.0, 2.0]; 3];
        let d = pairwise_distances(&identical).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));

        let grads = vec![vec![0.0], vec![1.0], vec![10.0]];
        let d = pairwise_distances(&grads).unwrap();
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(0, 2)], 10.0);
        assert_eq!(d[(1, 2)], 9.0);
        // Symmetric, zero diagonal.
        for i in 0..3 {
            assert_eq!(d[(i, i)], 0.0);
            for j in 0..3 {
                assert_eq!(d[(i, j)], d[(j, i)]);
            }
        }
        // Scaling all gradients doubles every distance.
        let scaled: Vec<Vec<f64>> = grads.iter().map(|g| g.iter().map(|v| 2.0 * v).collect()).collect();
        let d2 = pairwise_distances(&scaled).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(d2[(i, j)], 2.0 * d[(i, j)], epsilon = 1e-12);
            }
        }

        assert!(pairwise_distances(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn median_node_examples() {
        // 1-D gradients 0, 1, 10: medians 5.5, 5.0, 9.5; node 1 wins.
        let d = pairwise_distances(&[vec![0.0], vec![1.0], vec![10.0]]).unwrap();
        assert_eq!(median_node(&d).unwrap(), 1);
        // Two nodes: tie on the shared distance, lowest index wins.
        let d = pairwise_distances(&[vec![0.0], vec![4.0]]).unwrap();
        assert_eq!(median_node(&d).unwrap(), 0);
        // All identical: all medians zero, node 0.
        let d = pairwise_distances(&vec![vec![3.0]; 4]).unwrap();
        assert_eq!(median_node(&d).unwrap(), 0);
        // Too small.
        let d = DMatrix::zeros(1, 1);
        assert!(median_node(&d).is_err());
    }

    #[test]
    fn adapt_partition_branches() {
        // Distances to the median node: 0 (the median itself), 2.7, 5.0.
        let mut d = DMatrix::zeros(3, 3);
        d[(1, 0)] = 2.7;
        d[(0, 1)] = 2.7;
        d[(2, 0)] = 5.0;
        d[(0, 2)] = 5.0;
        let delta = adapt_partition(&d, 0, 2.5, 3.0).unwrap();
        assert_eq!(delta, vec![1, 0, -1]);
        assert!(adapt_partition(&d, 0, 3.0, 2.5).is_err());
        assert!(adapt_partition(&d, 7, 2.5, 3.0).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[vec![1.0, 2.0]]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(
            aggregate(&[vec![1.0, -2.0], vec![-1.0, 2.0]]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            aggregate(&[vec![1.0, 1.0], vec![3.0, 3.0]]).unwrap(),
            vec![2.0, 2.0]
        );
        assert!(aggregate(&[]).is_err());
        assert!(aggregate(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn run_epoch_report_invariants() {
        let mut trainer =
            Trainer::new(Algorithm::FedPgAp, tiny_template(), tiny_hyper(), 42, 1).unwrap();
        let report = trainer.run_epoch().unwrap();
        assert_eq!(report.epoch, 0);
        assert_eq!(report.mean_total_reward.len(), 3);
        assert_eq!(report.grad_norm.len(), 3);
        assert_eq!(report.delta_e.len(), 3);
        let d = &report.distances;
        for i in 0..3 {
            assert_eq!(d[(i, i)], 0.0);
            for j in 0..3 {
                assert_eq!(d[(i, j)], d[(j, i)]);
            }
        }
        assert!(report.inner_loop_len >= 1 && report.inner_loop_len <= trainer.hyper.inner_cap);
        // Trace accounting: N * B + M * b.
        let b_outer = {
            let mut rng = substream(42, "batch", &[0]);
            rng.gen_range(2usize..=3)
        };
        assert_eq!(
            report.traces_consumed,
            (3 * b_outer + report.inner_loop_len * 2) as u64
        );
        assert!(report.mean_total_reward.iter().all(|r| r.is_finite()));
        assert!(report.surrogate_loss.is_finite());
    }

    #[test]
    fn svrpg_trace_accounting_and_isolation() {
        let mut trainer =
            Trainer::new(Algorithm::Svrpg, tiny_template(), tiny_hyper(), 42, 1).unwrap();
        let before = trainer.master.global.clone();
        let report = trainer.run_epoch().unwrap();
        let b_outer = {
            let mut rng = substream(42, "batch", &[0]);
            rng.gen_range(2usize..=3)
        };
        assert_eq!(
            report.traces_consumed,
            (3 * b_outer + 3 * report.inner_loop_len * 2) as u64
        );
        // No aggregation: the global model never moves.
        assert_eq!(flatten(&trainer.master.global), flatten(&before));
        // Nodes moved independently.
        for node in &trainer.nodes {
            assert_ne!(flatten(&node.local_params), flatten(&before));
        }
        assert_eq!(report.delta_e, vec![0, 0, 0]);
    }

    #[test]
    fn np_logs_no_partition_movement() {
        let mut hyper = tiny_hyper();
        hyper.trace_budget = 60;
        let mut trainer =
            Trainer::new(Algorithm::FedPgNp, tiny_template(), hyper, 42, 1).unwrap();
        let reports = trainer.run(|_| Ok(())).unwrap();
        assert!(!reports.is_empty());
        for r in &reports {
            assert!(r.delta_e.iter().all(|&d| d == 0));
        }
        for node in &trainer.nodes {
            assert_eq!(node.partition.e0, 0);
        }
    }

    #[test]
    fn determinism_same_seed_same_artifacts() {
        let run = || {
            let mut trainer =
                Trainer::new(Algorithm::FedPgAp, tiny_template(), tiny_hyper(), 9, 1).unwrap();
            let r1 = trainer.run_epoch().unwrap();
            let r2 = trainer.run_epoch().unwrap();
            (flatten(&trainer.master.global), r1.mean_total_reward, r2.mean_total_reward)
        };
        let a = run();
        let b = run();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn determinism_across_worker_counts() {
        let run = |workers: usize| {
            let mut trainer =
                Trainer::new(Algorithm::FedPgAp, tiny_template(), tiny_hyper(), 9, workers)
                    .unwrap();
            let r = trainer.run_epoch().unwrap();
            (flatten(&trainer.master.global), r.mean_total_reward, r.grad_norm)
        };
        let single = run(1);
        let multi = run(4);
        assert_eq!(single.0, multi.0);
        assert_eq!(single.1, multi.1);
        assert_eq!(single.2, multi.2);
    }

    #[test]
    fn ap_inert_equals_fp_and_fp0_equals_np() {
        let epochs = 3;
        let run = |algorithm: Algorithm, sigma_close: f64, sigma_far: f64, e0: usize| {
            let mut hyper = tiny_hyper();
            hyper.sigma_close = sigma_close;
            hyper.sigma_far = sigma_far;
            hyper.e0 = e0;
            let mut trainer =
                Trainer::new(algorithm, tiny_template(), hyper, 31, 1).unwrap();
            let mut rows = Vec::new();
            for _ in 0..epochs {
                let r = trainer.run_epoch().unwrap();
                rows.push((r.mean_total_reward, r.surrogate_loss, r.grad_norm, r.inner_loop_len));
            }
            (rows, flatten(&trainer.master.global))
        };
        // AP with inert thresholds is bit-identical to FP at the same e0.
        let ap = run(Algorithm::FedPgAp, 0.0, 1e9, 1);
        let fp = run(Algorithm::FedPgFp, 2.5, 3.0, 1);
        assert_eq!(ap, fp);
        // FP at e0 = 0 is bit-identical to NP.
        let fp0 = run(Algorithm::FedPgFp, 2.5, 3.0, 0);
        let np = run(Algorithm::FedPgNp, 2.5, 3.0, 1);
        assert_eq!(fp0, np);
    }

    #[test]
    fn budget_zero_runs_no_epochs() {
        let mut hyper = tiny_hyper();
        hyper.trace_budget = 0;
        let mut trainer =
            Trainer::new(Algorithm::FedPgAp, tiny_template(), hyper, 42, 1).unwrap();
        let reports = trainer.run(|_| Ok(())).unwrap();
        assert!(reports.is_empty());
        assert_eq!(trainer.master.epoch, 0);
    }

    #[test]
    fn fit_slope_and_aggregate_closed_forms() {
        // Constant curve: CV all zero, SD zero.
        let constant = vec![vec![7.0; 5]; 3];
        let out = aggregate_eval(&constant).unwrap();
        assert!(out.cv.iter().all(|&c| c == 0.0));
        assert!(out.sd.abs() < 1e-10);
        // Linear curve a + b t: SD = |b| exactly.
        let linear: Vec<f64> = (0..6).map(|t| 2.5 - 0.75 * t as f64).collect();
        let out = aggregate_eval(&[linear]).unwrap();
        assert!((out.sd - 0.75).abs() < 1e-10);
        assert!(out.cv.iter().all(|&c| c == 0.0));
        // Two identical runs: per-t std zero.
        let curve: Vec<f64> = (0..4).map(|t| 1.0 + t as f64).collect();
        let out = aggregate_eval(&[curve.clone(), curve]).unwrap();
        assert!(out.cv.iter().all(|&c| c == 0.0));
        // Mismatched lengths rejected.
        assert!(aggregate_eval(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn evaluate_end_to_end_reproducible() {
        let template = tiny_template();
        let hyper = tiny_hyper();
        let trainer = Trainer::new(Algorithm::FedPgAp, template.clone(), hyper, 42, 1).unwrap();
        let a = evaluate(&trainer.master.global, &template, &trainer.policy, 2, 4, 77).unwrap();
        let b = evaluate(&trainer.master.global, &template, &trainer.policy, 2, 4, 77).unwrap();
        assert_eq!(a.per_run, b.per_run);
        assert_eq!(a.mean_curve.len(), 4);
        assert_eq!(a.cv.len(), 4);
        assert!(a.sd.is_finite());
        // One run: mean curve equals that run.
        let single = evaluate(&trainer.master.global, &template, &trainer.policy, 1, 4, 77).unwrap();
        assert_eq!(single.mean_curve, single.per_run[0]);
        assert!(single.cv.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn algorithm_tags_round_trip() {
        for tag in ["fedpg_ap", "fedpg_np", "fedpg_fp", "svrpg"] {
            assert_eq!(Algorithm::parse(tag).unwrap().tag(), tag);
        }
        assert!(Algorithm::parse("sgd").is_err());
    }
}
