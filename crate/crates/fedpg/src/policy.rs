//! Stochastic policy network shared by local and global nodes.
//!
//! Architecture: Tanh hidden layers, a Sigmoid output layer whose entries
//! feed two Beta heads (yaw, speed) and M categorical heads (one per RIS
//! element, C levels each). The log-probability gradient is derived by hand;
//! finite differences gate it in the test suite.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Distribution;
use statrs::function::gamma::{digamma, ln_gamma};

/// Inward clamp applied to rescaled Beta variates so densities stay finite
/// at the support edges.
const SUPPORT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub state_dim: usize,
    pub hidden: Vec<usize>,
    pub ris_elements: usize,
    pub phase_levels: usize,
    /// Beta parameters are 1 + a_scale * sigmoid-output.
    pub a_scale: f64,
}

impl PolicySpec {
    pub fn output_dim(&self) -> usize {
        4 + self.ris_elements * self.phase_levels
    }

    /// Number of parameter layers Z (hidden layers plus the output layer
    /// holding both heads).
    pub fn layer_count(&self) -> usize {
        self.hidden.len() + 1
    }

    /// (input, output) width of each parameter layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.layer_count());
        let mut prev = self.state_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim()));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(i, o)| o * i + o)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Weights, output x input.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Layered parameter container; doubles as the gradient container since both
/// share the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub layers: Vec<Layer>,
}

impl PolicyParams {
    pub fn zeros(spec: &PolicySpec) -> Self {
        let layers = spec
            .layer_dims()
            .iter()
            .map(|&(inp, out)| Layer {
                weights: DMatrix::zeros(out, inp),
                bias: DVector::zeros(out),
            })
            .collect();
        Self { layers }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn shapes_match(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.shape() == b.weights.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(spec: &PolicySpec, rng: &mut impl Rng) -> PolicyParams {
    let layers = spec
        .layer_dims()
        .iter()
        .map(|&(inp, out)| {
            let limit = (6.0 / (inp + out) as f64).sqrt();
            Layer {
                weights: DMatrix::from_fn(out, inp, |_, _| rng.gen_range(-limit..limit)),
                bias: DVector::zeros(out),
            }
        })
        .collect();
    PolicyParams { layers }
}

/// Action distribution for one state: two Beta pairs plus M categoricals.
#[derive(Debug, Clone)]
pub struct ActionDistribution {
    pub beta_yaw: (f64, f64),
    pub beta_speed: (f64, f64),
    pub categoricals: Vec<Vec<f64>>,
}

/// One environment action: yaw in [0, 2pi), speed in [0, max], 1-based phase
/// level per RIS element.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionValue {
    pub yaw: f64,
    pub speed: f64,
    pub levels: Vec<usize>,
}

/// Physical ranges the unit-interval samples are stretched over.
#[derive(Debug, Clone, Copy)]
pub struct ActionScale {
    pub max_speed: f64,
}

struct ForwardCache {
    /// Activations per layer, starting with the input state.
    activations: Vec<DVector<f64>>,
    /// Sigmoid outputs of the final layer.
    outputs: DVector<f64>,
}

fn forward_cached(params: &PolicyParams, state: &[f64], spec: &PolicySpec) -> Result<ForwardCache> {
    if state.len() != spec.state_dim {
        return Err(Error::DimensionMismatch(format!(
            "state dim {} vs spec {}",
            state.len(),
            spec.state_dim
        )));
    }
    if params.layer_count() != spec.layer_count() {
        return Err(Error::DimensionMismatch(format!(
            "params have {} layers, spec wants {}",
            params.layer_count(),
            spec.layer_count()
        )));
    }
    let mut activations = Vec::with_capacity(params.layer_count());
    let mut a = DVector::from_column_slice(state);
    for (idx, layer) in params.layers.iter().enumerate() {
        if layer.weights.ncols() != a.len() {
            return Err(Error::DimensionMismatch(format!(
                "layer {idx} expects input {} got {}",
                layer.weights.ncols(),
                a.len()
            )));
        }
        activations.push(a.clone());
        let z = &layer.weights * &a + &layer.bias;
        if idx + 1 < params.layer_count() {
            a = z.map(|v| v.tanh());
        } else {
            let outputs = z.map(|v| 1.0 / (1.0 + (-v).exp()));
            return Ok(ForwardCache {
                activations,
                outputs,
            });
        }
    }
    unreachable!("output layer returns above");
}

fn distribution_from_outputs(outputs: &DVector<f64>, spec: &PolicySpec) -> ActionDistribution {
    let a = spec.a_scale;
    let beta_yaw = (1.0 + a * outputs[0], 1.0 + a * outputs[1]);
    let beta_speed = (1.0 + a * outputs[2], 1.0 + a * outputs[3]);
    let c = spec.phase_levels;
    let mut categoricals = Vec::with_capacity(spec.ris_elements);
    for m in 0..spec.ris_elements {
        let block = outputs.rows(4 + m * c, c);
        let max = block.max();
        let exps: Vec<f64> = block.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        categoricals.push(exps.into_iter().map(|e| e / sum).collect());
    }
    ActionDistribution {
        beta_yaw,
        beta_speed,
        categoricals,
    }
}

/// Deterministic forward pass from state to action distribution.
pub fn forward(params: &PolicyParams, state: &[f64], spec: &PolicySpec) -> Result<ActionDistribution> {
    let cache = forward_cached(params, state, spec)?;
    Ok(distribution_from_outputs(&cache.outputs, spec))
}

fn ln_beta_pdf(x: f64, alpha: f64, beta: f64) -> f64 {
    (alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln()
        - (ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta))
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(SUPPORT_EPS, 1.0 - SUPPORT_EPS)
}

/// Sample an action and report its log-probability. Scaling Jacobians
/// (2pi, max_speed) are parameter-independent constants and are omitted from
/// the reported value.
pub fn sample_action(
    dist: &ActionDistribution,
    scale: &ActionScale,
    rng: &mut impl Rng,
) -> (ActionValue, f64) {
    let draw_beta = |(alpha, beta): (f64, f64), rng: &mut dyn rand::RngCore| -> f64 {
        let d = rand_distr::Beta::new(alpha, beta).expect("alpha, beta > 0");
        clamp_unit(d.sample(rng))
    };
    let x_yaw = draw_beta(dist.beta_yaw, rng);
    let x_speed = draw_beta(dist.beta_speed, rng);
    let mut log_prob = ln_beta_pdf(x_yaw, dist.beta_yaw.0, dist.beta_yaw.1)
        + ln_beta_pdf(x_speed, dist.beta_speed.0, dist.beta_speed.1);
    let mut levels = Vec::with_capacity(dist.categoricals.len());
    for probs in &dist.categoricals {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = probs.len() - 1;
        for (j, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = j;
                break;
            }
        }
        log_prob += probs[chosen].ln();
        levels.push(chosen + 1);
    }
    (
        ActionValue {
            yaw: std::f64::consts::TAU * x_yaw,
            speed: scale.max_speed * x_speed,
            levels,
        },
        log_prob,
    )
}

fn unit_samples(action: &ActionValue, scale: &ActionScale) -> Result<(f64, f64)> {
    if !(0.0..std::f64::consts::TAU).contains(&action.yaw) {
        return Err(Error::OutOfSupport(format!("yaw {}", action.yaw)));
    }
    if !(0.0..=scale.max_speed).contains(&action.speed) {
        return Err(Error::OutOfSupport(format!("speed {}", action.speed)));
    }
    Ok((
        clamp_unit(action.yaw / std::f64::consts::TAU),
        clamp_unit(action.speed / scale.max_speed),
    ))
}

/// Exact log-probability of `action` under the policy at `state`.
pub fn log_prob(
    params: &PolicyParams,
    state: &[f64],
    action: &ActionValue,
    spec: &PolicySpec,
    scale: &ActionScale,
) -> Result<f64> {
    let dist = forward(params, state, spec)?;
    log_prob_under(&dist, action, spec, scale)
}

/// Log-probability under an already-computed distribution.
pub fn log_prob_under(
    dist: &ActionDistribution,
    action: &ActionValue,
    spec: &PolicySpec,
    scale: &ActionScale,
) -> Result<f64> {
    if action.levels.len() != spec.ris_elements {
        return Err(Error::DimensionMismatch(format!(
            "action has {} phase levels, spec wants {}",
            action.levels.len(),
            spec.ris_elements
        )));
    }
    let (x_yaw, x_speed) = unit_samples(action, scale)?;
    let mut lp = ln_beta_pdf(x_yaw, dist.beta_yaw.0, dist.beta_yaw.1)
        + ln_beta_pdf(x_speed, dist.beta_speed.0, dist.beta_speed.1);
    for (m, &level) in action.levels.iter().enumerate() {
        if level < 1 || level > spec.phase_levels {
            return Err(Error::OutOfSupport(format!("phase level {level}")));
        }
        lp += dist.categoricals[m][level - 1].ln();
    }
    Ok(lp)
}

/// Exact gradient of `log_prob` with respect to every parameter, same layered
/// shape as the parameters.
pub fn backward_logprob(
    params: &PolicyParams,
    state: &[f64],
    action: &ActionValue,
    spec: &PolicySpec,
    scale: &ActionScale,
) -> Result<PolicyParams> {
    if action.levels.len() != spec.ris_elements {
        return Err(Error::DimensionMismatch(format!(
            "action has {} phase levels, spec wants {}",
            action.levels.len(),
            spec.ris_elements
        )));
    }
    let cache = forward_cached(params, state, spec)?;
    let dist = distribution_from_outputs(&cache.outputs, spec);
    let (x_yaw, x_speed) = unit_samples(action, scale)?;

    // d log_prob / d y for the sigmoid outputs y.
    let mut dy = DVector::zeros(spec.output_dim());
    let a = spec.a_scale;
    let (ay, by) = dist.beta_yaw;
    let (av, bv) = dist.beta_speed;
    dy[0] = a * (x_yaw.ln() - digamma(ay) + digamma(ay + by));
    dy[1] = a * ((1.0 - x_yaw).ln() - digamma(by) + digamma(ay + by));
    dy[2] = a * (x_speed.ln() - digamma(av) + digamma(av + bv));
    dy[3] = a * ((1.0 - x_speed).ln() - digamma(bv) + digamma(av + bv));
    let c = spec.phase_levels;
    for (m, &level) in action.levels.iter().enumerate() {
        if level < 1 || level > c {
            return Err(Error::OutOfSupport(format!("phase level {level}")));
        }
        let probs = &dist.categoricals[m];
        for j in 0..c {
            let indicator = if j == level - 1 { 1.0 } else { 0.0 };
            dy[4 + m * c + j] = indicator - probs[j];
        }
    }

    // Through the output sigmoid.
    let mut delta = DVector::from_fn(spec.output_dim(), |i, _| {
        dy[i] * cache.outputs[i] * (1.0 - cache.outputs[i])
    });

    let mut grad = PolicyParams::zeros(spec);
    for l in (0..params.layer_count()).rev() {
        let input = &cache.activations[l];
        grad.layers[l].weights = &delta * input.transpose();
        grad.layers[l].bias = delta.clone();
        if l > 0 {
            let back = params.layers[l].weights.transpose() * &delta;
            // Tanh derivative in terms of the cached activation.
            delta = DVector::from_fn(back.len(), |i, _| back[i] * (1.0 - input[i] * input[i]));
        }
    }
    Ok(grad)
}

/// Layer-then-row-major flattening: per layer, weight rows then bias.
pub fn flatten(params: &PolicyParams) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in &params.layers {
        for r in 0..layer.weights.nrows() {
            for c in 0..layer.weights.ncols() {
                out.push(layer.weights[(r, c)]);
            }
        }
        out.extend(layer.bias.iter());
    }
    out
}

/// Inverse of [`flatten`].
pub fn unflatten(values: &[f64], spec: &PolicySpec) -> Result<PolicyParams> {
    if values.len() != spec.param_count() {
        return Err(Error::DimensionMismatch(format!(
            "flat vector length {} vs param count {}",
            values.len(),
            spec.param_count()
        )));
    }
    let mut params = PolicyParams::zeros(spec);
    let mut idx = 0;
    for layer in &mut params.layers {
        for r in 0..layer.weights.nrows() {
            for c in 0..layer.weights.ncols() {
                layer.weights[(r, c)] = values[idx];
                idx += 1;
            }
        }
        for r in 0..layer.bias.len() {
            layer.bias[r] = values[idx];
            idx += 1;
        }
    }
    Ok(params)
}

/// params + step * direction, layerwise.
pub fn axpy_update(params: &PolicyParams, direction: &PolicyParams, step: f64) -> Result<PolicyParams> {
    if !params.shapes_match(direction) {
        return Err(Error::DimensionMismatch(
            "params and direction have different shapes".into(),
        ));
    }
    let layers = params
        .layers
        .iter()
        .zip(&direction.layers)
        .map(|(p, d)| Layer {
            weights: &p.weights + step * &d.weights,
            bias: &p.bias + step * &d.bias,
        })
        .collect();
    Ok(PolicyParams { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    fn tiny_spec() -> PolicySpec {
        PolicySpec {
            state_dim: 8,
            hidden: vec![8, 8],
            ris_elements: 2,
            phase_levels: 3,
            a_scale: 5.0,
        }
    }

    fn scale() -> ActionScale {
        ActionScale { max_speed: 12.0 }
    }

    fn random_state(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn init_bounds_and_determinism() {
        let spec = tiny_spec();
        let a = init_params(&spec, &mut substream(9, "init", &[0]));
        let b = init_params(&spec, &mut substream(9, "init", &[0]));
        assert_eq!(a, b);
        for (layer, &(inp, out)) in a.layers.iter().zip(spec.layer_dims().iter()) {
            let limit = (6.0 / (inp + out) as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= limit));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_params_give_symmetric_distribution() {
        let spec = tiny_spec();
        let params = PolicyParams::zeros(&spec);
        let state = vec![0.3; 8];
        let dist = forward(&params, &state, &spec).unwrap();
        assert_relative_eq!(dist.beta_yaw.0, 3.5, epsilon = 1e-12);
        assert_relative_eq!(dist.beta_yaw.1, 3.5, epsilon = 1e-12);
        assert_relative_eq!(dist.beta_speed.0, 3.5, epsilon = 1e-12);
        for probs in &dist.categoricals {
            for &p in probs {
                assert_relative_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn categorical_blocks_sum_to_one() {
        let spec = tiny_spec();
        let mut rng = substream(9, "fw", &[0]);
        let params = init_params(&spec, &mut rng);
        let state = random_state(&mut rng, 8);
        let dist = forward(&params, &state, &spec).unwrap();
        for probs in &dist.categoricals {
            let sum: f64 = probs.iter().sum();
            assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let spec = tiny_spec();
        let params = PolicyParams::zeros(&spec);
        assert!(forward(&params, &[0.0; 7], &spec).is_err());
    }

    #[test]
    fn uniform_beta_and_categorical_log_probs() {
        // Beta(1,1) density is 1; uniform categorical over C=4 is -ln 4.
        assert_relative_eq!(ln_beta_pdf(0.37, 1.0, 1.0), 0.0, epsilon = 1e-12);
        let dist = ActionDistribution {
            beta_yaw: (1.0, 1.0),
            beta_speed: (1.0, 1.0),
            categoricals: vec![vec![0.25; 4]],
        };
        let spec = PolicySpec {
            state_dim: 1,
            hidden: vec![],
            ris_elements: 1,
            phase_levels: 4,
            a_scale: 5.0,
        };
        let action = ActionValue {
            yaw: 1.0,
            speed: 2.0,
            levels: vec![3],
        };
        let lp = log_prob_under(&dist, &action, &spec, &scale()).unwrap();
        assert_relative_eq!(lp, -(4f64.ln()), epsilon = 1e-10);
    }

    #[test]
    fn sample_log_prob_self_consistency() {
        let spec = tiny_spec();
        let mut rng = substream(9, "sample", &[0]);
        let params = init_params(&spec, &mut rng);
        for i in 0..1000 {
            let state = random_state(&mut rng, 8);
            let dist = forward(&params, &state, &spec).unwrap();
            let (action, lp) = sample_action(&dist, &scale(), &mut rng);
            let recomputed = log_prob(&params, &state, &action, &spec, &scale()).unwrap();
            assert!(
                (lp - recomputed).abs() < 1e-10,
                "draw {i}: {lp} vs {recomputed}"
            );
            assert!(lp.is_finite());
        }
    }

    #[test]
    fn exp_log_prob_matches_density_product() {
        let spec = tiny_spec();
        let mut rng = substream(9, "density", &[0]);
        let params = init_params(&spec, &mut rng);
        let state = random_state(&mut rng, 8);
        let dist = forward(&params, &state, &spec).unwrap();
        let (action, lp) = sample_action(&dist, &scale(), &mut rng);
        // Independent density evaluation in plain f64 arithmetic.
        let x1 = action.yaw / std::f64::consts::TAU;
        let x2 = action.speed / 12.0;
        let beta_pdf = |x: f64, a: f64, b: f64| {
            x.powf(a - 1.0) * (1.0 - x).powf(b - 1.0)
                / (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
        };
        let mut product = beta_pdf(x1, dist.beta_yaw.0, dist.beta_yaw.1)
            * beta_pdf(x2, dist.beta_speed.0, dist.beta_speed.1);
        for (m, &l) in action.levels.iter().enumerate() {
            product *= dist.categoricals[m][l - 1];
        }
        assert_relative_eq!(lp.exp(), product, max_relative = 1e-10);
    }

    #[test]
    fn log_prob_monotone_in_selected_level_probability() {
        let spec = PolicySpec {
            state_dim: 1,
            hidden: vec![],
            ris_elements: 1,
            phase_levels: 3,
            a_scale: 5.0,
        };
        let action = ActionValue {
            yaw: 1.0,
            speed: 1.0,
            levels: vec![1],
        };
        let mk = |p0: f64| ActionDistribution {
            beta_yaw: (2.0, 2.0),
            beta_speed: (2.0, 2.0),
            categoricals: vec![vec![p0, (1.0 - p0) / 2.0, (1.0 - p0) / 2.0]],
        };
        let lo = log_prob_under(&mk(0.2), &action, &spec, &scale()).unwrap();
        let hi = log_prob_under(&mk(0.6), &action, &spec, &scale()).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn log_prob_rejects_out_of_support() {
        let spec = tiny_spec();
        let params = PolicyParams::zeros(&spec);
        let state = vec![0.0; 8];
        let bad_yaw = ActionValue {
            yaw: 7.0,
            speed: 1.0,
            levels: vec![1, 1],
        };
        assert!(log_prob(&params, &state, &bad_yaw, &spec, &scale()).is_err());
        let bad_level = ActionValue {
            yaw: 1.0,
            speed: 1.0,
            levels: vec![1, 4],
        };
        assert!(log_prob(&params, &state, &bad_level, &spec, &scale()).is_err());
    }

    #[test]
    fn finite_difference_gradient_check() {
        let spec = tiny_spec();
        let mut rng = substream(9, "fd", &[0]);
        let params = init_params(&spec, &mut rng);
        let flat = flatten(&params);
        let step = 1e-5;
        for pair in 0..10 {
            let state = random_state(&mut rng, 8);
            let dist = forward(&params, &state, &spec).unwrap();
            let (action, _) = sample_action(&dist, &scale(), &mut rng);
            let grad = flatten(&backward_logprob(&params, &state, &action, &spec, &scale()).unwrap());
            let mut max_rel = 0.0f64;
            for i in 0..flat.len() {
                let mut plus = flat.clone();
                let mut minus = flat.clone();
                plus[i] += step;
                minus[i] -= step;
                let lp_plus = log_prob(
                    &unflatten(&plus, &spec).unwrap(),
                    &state,
                    &action,
                    &spec,
                    &scale(),
                )
                .unwrap();
                let lp_minus = log_prob(
                    &unflatten(&minus, &spec).unwrap(),
                    &state,
                    &action,
                    &spec,
                    &scale(),
                )
                .unwrap();
                let fd = (lp_plus - lp_minus) / (2.0 * step);
                // The floor keeps f64 roundoff in the central difference
                // (about 1e-9 absolute at this step size) from dominating
                // near-zero gradient entries.
                let denom = grad[i].abs().max(fd.abs()).max(1e-3);
                max_rel = max_rel.max((grad[i] - fd).abs() / denom);
            }
            assert!(max_rel < 1e-4, "pair {pair}: max relative error {max_rel}");
        }
    }

    #[test]
    fn symmetric_categorical_gradients_sum_to_zero_per_block() {
        let spec = tiny_spec();
        let params = PolicyParams::zeros(&spec);
        let state = vec![0.0; 8];
        let action = ActionValue {
            yaw: std::f64::consts::PI,
            speed: 6.0,
            levels: vec![2, 1],
        };
        let grad = backward_logprob(&params, &state, &action, &spec, &scale()).unwrap();
        // With zero weights the output-layer bias gradient is dy * 0.25; each
        // categorical block of dy is (indicator - 1/C) and sums to zero.
        let bias = &grad.layers.last().unwrap().bias;
        for m in 0..2 {
            let block: f64 = (0..3).map(|j| bias[4 + m * 3 + j]).sum();
            assert!(block.abs() < 1e-12);
        }
    }

    #[test]
    fn flatten_unflatten_bijection() {
        let spec = tiny_spec();
        let mut rng = substream(9, "flat", &[0]);
        let params = init_params(&spec, &mut rng);
        let flat = flatten(&params);
        assert_eq!(flat.len(), spec.param_count());
        let back = unflatten(&flat, &spec).unwrap();
        assert_eq!(params, back);
        // Distance on flattened vectors equals sqrt of summed layer norms.
        let other = init_params(&spec, &mut rng);
        let flat_other = flatten(&other);
        let flat_dist: f64 = flat
            .iter()
            .zip(&flat_other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let layer_dist: f64 = params
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                (&a.weights - &b.weights).norm_squared() + (&a.bias - &b.bias).norm_squared()
            })
            .sum::<f64>()
            .sqrt();
        assert_relative_eq!(flat_dist, layer_dist, epsilon = 1e-12);
    }

    #[test]
    fn axpy_linearity() {
        let spec = tiny_spec();
        let mut rng = substream(9, "axpy", &[0]);
        let params = init_params(&spec, &mut rng);
        let dir = init_params(&spec, &mut rng);
        let unchanged = axpy_update(&params, &dir, 0.0).unwrap();
        assert_eq!(unchanged, params);
        let zero_dir = PolicyParams::zeros(&spec);
        assert_eq!(axpy_update(&params, &zero_dir, 0.5).unwrap(), params);
        let full = axpy_update(&params, &dir, 1.0).unwrap();
        let half = axpy_update(&params, &dir, 0.5).unwrap();
        let two_half = axpy_update(&half, &dir, 0.5).unwrap();
        for (a, b) in full.layers.iter().zip(&two_half.layers) {
            assert!((&a.weights - &b.weights).amax() < 1e-12);
        }
    }
}
