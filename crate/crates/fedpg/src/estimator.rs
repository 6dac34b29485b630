//! Policy-gradient machinery: discounted returns, advantage normalization,
//! batch gradient estimation, importance weighting, and the variance-reduced
//! update direction.

use crate::env::ExperienceTrace;
use crate::error::{Error, Result};
use crate::policy::{
    backward_logprob, flatten, log_prob, ActionScale, PolicyParams, PolicySpec,
};
use rand::Rng;

/// Guard added to the advantage standard deviation.
pub const ADVANTAGE_EPS: f64 = 1e-8;

/// Default clip range for importance weights.
pub const WEIGHT_CLIP: (f64, f64) = (1e-4, 1e4);

/// Where a gradient estimate came from, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceTag {
    /// Local batch at node n.
    Local(usize),
    /// Master inner iteration m.
    MasterInner(usize),
}

/// Flattened batch gradient with its provenance.
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    pub batch_size: usize,
    pub source: SourceTag,
}

/// Reward-to-go with discount, computed by backward recursion.
pub fn discounted_returns(rewards: &[f64], discount: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::InvalidArgument("empty reward sequence".into()));
    }
    if discount <= 0.0 || discount >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "discount {discount} outside (0, 1)"
        )));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + discount * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// Center and scale by the population standard deviation (guarded).
pub fn normalize_advantage(returns: &[f64]) -> Vec<f64> {
    if returns.is_empty() {
        return Vec::new();
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt() + ADVANTAGE_EPS;
    returns.iter().map(|r| (r - mean) / sd).collect()
}

/// Per-trace score-function gradient: sum over steps of advantage times the
/// log-probability gradient, flattened.
pub fn trace_gradient(
    params: &PolicyParams,
    trace: &ExperienceTrace,
    spec: &PolicySpec,
    scale: &ActionScale,
    discount: f64,
) -> Result<Vec<f64>> {
    let returns = discounted_returns(&trace.rewards(), discount)?;
    let advantages = normalize_advantage(&returns);
    trace_gradient_with_advantages(params, trace, spec, scale, &advantages)
}

fn trace_gradient_with_advantages(
    params: &PolicyParams,
    trace: &ExperienceTrace,
    spec: &PolicySpec,
    scale: &ActionScale,
    advantages: &[f64],
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; spec.param_count()];
    for (step, &adv) in trace.steps.iter().zip(advantages) {
        let grad = backward_logprob(params, &step.state, &step.action, spec, scale)?;
        let flat = flatten(&grad);
        for (a, g) in acc.iter_mut().zip(&flat) {
            *a += adv * g;
        }
    }
    Ok(acc)
}

/// Batch-mean gradient over a set of traces.
pub fn gpomdp_gradient(
    params: &PolicyParams,
    traces: &[ExperienceTrace],
    spec: &PolicySpec,
    scale: &ActionScale,
    discount: f64,
    source: SourceTag,
) -> Result<GradientEstimate> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("empty trace batch".into()));
    }
    let mut acc = vec![0.0; spec.param_count()];
    for trace in traces {
        let g = trace_gradient(params, trace, spec, scale, discount)?;
        for (a, v) in acc.iter_mut().zip(&g) {
            *a += v;
        }
    }
    let inv = 1.0 / traces.len() as f64;
    for a in acc.iter_mut() {
        *a *= inv;
    }
    Ok(GradientEstimate {
        grad: acc,
        batch_size: traces.len(),
        source,
    })
}

/// Negated mean advantage-weighted log-probability over a batch, using the
/// log-probabilities recorded at collection time.
pub fn surrogate_loss(traces: &[ExperienceTrace], discount: f64) -> Result<f64> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("empty trace batch".into()));
    }
    let mut total = 0.0;
    for trace in traces {
        let returns = discounted_returns(&trace.rewards(), discount)?;
        let advantages = normalize_advantage(&returns);
        for (step, adv) in trace.steps.iter().zip(&advantages) {
            total += adv * step.log_prob;
        }
    }
    Ok(-total / traces.len() as f64)
}

/// Log-probability of the whole trace under arbitrary parameters.
pub fn trace_log_prob(
    params: &PolicyParams,
    trace: &ExperienceTrace,
    spec: &PolicySpec,
    scale: &ActionScale,
) -> Result<f64> {
    let mut lp = 0.0;
    for step in &trace.steps {
        lp += log_prob(params, &step.state, &step.action, spec, scale)?;
    }
    Ok(lp)
}

/// Importance weight p(trace | old) / p(trace | new), clipped.
pub fn importance_weight(
    trace: &ExperienceTrace,
    params_old: &PolicyParams,
    params_new: &PolicyParams,
    spec: &PolicySpec,
    scale: &ActionScale,
    clip: (f64, f64),
) -> Result<f64> {
    let lp_old = trace_log_prob(params_old, trace, spec, scale)?;
    let lp_new = trace_log_prob(params_new, trace, spec, scale)?;
    let w = (lp_old - lp_new).exp();
    if !w.is_finite() && w.is_nan() {
        return Err(Error::Numeric("importance weight is NaN".into()));
    }
    Ok(w.clamp(clip.0, clip.1))
}

/// Variance-reduced direction: aggregated gradient plus the mean correction
/// g(trace | current) - w * g(trace | snapshot) over the mini-batch. The same
/// advantage sequence (a function of the trace alone) feeds both terms.
pub fn svrpg_direction(
    mu_bar: &[f64],
    traces: &[ExperienceTrace],
    params_current: &PolicyParams,
    params_snapshot: &PolicyParams,
    spec: &PolicySpec,
    scale: &ActionScale,
    discount: f64,
    clip: (f64, f64),
) -> Result<Vec<f64>> {
    if mu_bar.len() != spec.param_count() {
        return Err(Error::DimensionMismatch(format!(
            "mu length {} vs param count {}",
            mu_bar.len(),
            spec.param_count()
        )));
    }
    if traces.is_empty() {
        return Err(Error::InvalidArgument("empty mini-batch".into()));
    }
    let mut kappa = vec![0.0; spec.param_count()];
    for trace in traces {
        let returns = discounted_returns(&trace.rewards(), discount)?;
        let advantages = normalize_advantage(&returns);
        let g_cur =
            trace_gradient_with_advantages(params_current, trace, spec, scale, &advantages)?;
        let g_snap =
            trace_gradient_with_advantages(params_snapshot, trace, spec, scale, &advantages)?;
        let w = importance_weight(trace, params_snapshot, params_current, spec, scale, clip)?;
        for i in 0..kappa.len() {
            kappa[i] += g_cur[i] - w * g_snap[i];
        }
    }
    let inv = 1.0 / traces.len() as f64;
    let mut v = vec![0.0; spec.param_count()];
    for i in 0..v.len() {
        v[i] = mu_bar[i] + inv * kappa[i];
    }
    Ok(v)
}

/// Inner-loop length: geometric with success probability B / (B + b),
/// counted from 1, truncated at `cap`. b = 0 forces length 1.
pub fn sample_inner_length(
    batch_large: usize,
    batch_small: usize,
    cap: usize,
    rng: &mut impl Rng,
) -> Result<usize> {
    if batch_large == 0 || cap == 0 {
        return Err(Error::InvalidArgument(
            "outer batch size and cap must be positive".into(),
        ));
    }
    let p = batch_large as f64 / (batch_large + batch_small) as f64;
    let mut length = 1usize;
    while length < cap && rng.gen::<f64>() >= p {
        length += 1;
    }
    Ok(length)
}

/// Euclidean norm of a flat gradient.
pub fn grad_norm(grad: &[f64]) -> f64 {
    grad.iter().map(|g| g * g).sum::<f64>().sqrt()
}
