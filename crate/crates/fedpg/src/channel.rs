//! Rician channel realizations for both hops, the RIS phase action, FAS port
//! selection, the equivalent end-to-end scalar channel, and the link budget
//! that turns spectral densities into an average SNR.

use crate::error::{Error, Result};
use crate::fas::CorrelatedSampler;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Rician factors in linear scale plus the carrier wavelength.
#[derive(Debug, Clone, Copy)]
pub struct RicianParams {
    pub rician_k_lr: f64,
    pub rician_k_ru: f64,
    pub wavelength: f64,
}

impl RicianParams {
    /// Build from the dB-scale factors and a carrier frequency in Hz.
    pub fn from_db(k_lr_db: f64, k_ru_db: f64, carrier_freq: f64) -> Result<Self> {
        if carrier_freq <= 0.0 {
            return Err(Error::InvalidArgument("carrier frequency must be positive".into()));
        }
        Ok(Self {
            rician_k_lr: 10f64.powf(k_lr_db / 10.0),
            rician_k_ru: 10f64.powf(k_ru_db / 10.0),
            wavelength: SPEED_OF_LIGHT / carrier_freq,
        })
    }
}

/// Downlink link budget. EIRP density is dBW per 4 kHz reference bandwidth,
/// noise density dBm per Hz; all antenna gains are folded into the EIRP.
#[derive(Debug, Clone, Copy)]
pub struct LinkBudget {
    pub eirp_psd: f64,
    pub noise_psd: f64,
    pub bandwidth: f64,
    pub carrier_freq: f64,
    pub avg_snr: f64,
}

impl LinkBudget {
    pub fn new(eirp_psd: f64, noise_psd: f64, bandwidth: f64, carrier_freq: f64) -> Result<Self> {
        let avg_snr = compute_avg_snr(eirp_psd, noise_psd, bandwidth)?;
        Ok(Self {
            eirp_psd,
            noise_psd,
            bandwidth,
            carrier_freq,
            avg_snr,
        })
    }
}

/// Average SNR (linear) from the EIRP spectral density over the full link
/// bandwidth against thermal noise.
pub fn compute_avg_snr(eirp_psd: f64, noise_psd: f64, bandwidth: f64) -> Result<f64> {
    if bandwidth <= 0.0 {
        return Err(Error::InvalidArgument("bandwidth must be positive".into()));
    }
    let power_dbw = eirp_psd + 10.0 * (bandwidth / 4000.0).log10();
    let noise_dbw = (noise_psd - 30.0) + 10.0 * bandwidth.log10();
    Ok(10f64.powf((power_dbw - noise_dbw) / 10.0))
}

/// Discrete phase levels, one per RIS element, 1-based in {1..C}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseControl {
    pub levels: usize,
    pub indices: Vec<usize>,
}

impl PhaseControl {
    pub fn new(levels: usize, indices: Vec<usize>) -> Result<Self> {
        if levels < 1 {
            return Err(Error::InvalidArgument("need at least one phase level".into()));
        }
        for &c in &indices {
            if c < 1 || c > levels {
                return Err(Error::InvalidArgument(format!(
                    "phase level {c} outside 1..={levels}"
                )));
            }
        }
        Ok(Self { levels, indices })
    }
}

/// Unit-modulus phase vector: entry m is exp(j 2 pi (c_m - 1) / C).
pub fn phase_vector(control: &PhaseControl) -> Vec<Complex64> {
    control
        .indices
        .iter()
        .map(|&c| {
            let phi = std::f64::consts::TAU * (c as f64 - 1.0) / control.levels as f64;
            Complex64::from_polar(1.0, phi)
        })
        .collect()
}

fn amplitude_scale(wavelength: f64, dist: f64, k: f64) -> Result<f64> {
    if dist <= 0.0 {
        return Err(Error::InvalidArgument("distance must be positive".into()));
    }
    Ok(wavelength / (4.0 * std::f64::consts::PI * dist * (k + 1.0).sqrt()))
}

fn standard_complex_normal(rng: &mut impl Rng) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(
        s * rng.sample::<f64, _>(StandardNormal),
        s * rng.sample::<f64, _>(StandardNormal),
    )
}

pub(crate) fn assemble_rician_vector(
    scale: f64,
    k: f64,
    nlos: DVector<Complex64>,
) -> DVector<Complex64> {
    let los = k.sqrt();
    nlos.map(|g| Complex64::new(scale, 0.0) * (Complex64::new(los, 0.0) + g))
}

/// Satellite-to-RIS channel: parallel-wavefront LoS (all-ones) plus i.i.d.
/// scattered terms.
pub fn lr_channel(
    params: &RicianParams,
    dist: f64,
    m_elems: usize,
    rng: &mut impl Rng,
) -> Result<DVector<Complex64>> {
    let scale = amplitude_scale(params.wavelength, dist, params.rician_k_lr)?;
    let nlos = DVector::from_fn(m_elems, |_, _| standard_complex_normal(rng));
    Ok(assemble_rician_vector(scale, params.rician_k_lr, nlos))
}

/// RIS-to-user channel for a FAS user: M x H, rows independent, ports
/// correlated through the sampler's factor.
pub fn ru_channel_fas(
    params: &RicianParams,
    dist: f64,
    sampler: &CorrelatedSampler,
    m_elems: usize,
    rng: &mut impl Rng,
) -> Result<DMatrix<Complex64>> {
    let scale = amplitude_scale(params.wavelength, dist, params.rician_k_ru)?;
    let nlos = sampler.sample_rows(m_elems, rng);
    let los = params.rician_k_ru.sqrt();
    Ok(nlos.map(|g| Complex64::new(scale, 0.0) * (Complex64::new(los, 0.0) + g)))
}

/// RIS-to-user channel for a conventional user.
pub fn ru_channel_plain(
    params: &RicianParams,
    dist: f64,
    m_elems: usize,
    rng: &mut impl Rng,
) -> Result<DVector<Complex64>> {
    let scale = amplitude_scale(params.wavelength, dist, params.rician_k_ru)?;
    let nlos = DVector::from_fn(m_elems, |_, _| standard_complex_normal(rng));
    Ok(assemble_rician_vector(scale, params.rician_k_ru, nlos))
}

/// Cascaded scalar channel through one RU column.
pub fn equivalent_channel(
    lr: &DVector<Complex64>,
    phase: &[Complex64],
    ru: &DVector<Complex64>,
) -> Result<Complex64> {
    if lr.len() != phase.len() || lr.len() != ru.len() {
        return Err(Error::DimensionMismatch(format!(
            "lr {} / phase {} / ru {}",
            lr.len(),
            phase.len(),
            ru.len()
        )));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..lr.len() {
        acc += lr[m] * phase[m] * ru[m];
    }
    Ok(acc)
}

/// Pick the port with the largest cascaded gain; ties go to the lowest index.
pub fn select_port(
    lr: &DVector<Complex64>,
    phase: &[Complex64],
    ru_fas: &DMatrix<Complex64>,
) -> Result<(usize, Complex64)> {
    if lr.len() != phase.len() || lr.len() != ru_fas.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "lr {} / phase {} / ru rows {}",
            lr.len(),
            phase.len(),
            ru_fas.nrows()
        )));
    }
    let mut best_port = 0usize;
    let mut best_gain = f64::NEG_INFINITY;
    let mut best_value = Complex64::new(0.0, 0.0);
    for h in 0..ru_fas.ncols() {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..lr.len() {
            acc += lr[m] * phase[m] * ru_fas[(m, h)];
        }
        let gain = acc.norm_sqr();
        if gain > best_gain {
            best_gain = gain;
            best_port = h;
            best_value = acc;
        }
    }
    Ok((best_port, best_value))
}

/// Shannon rate in bits per time unit.
pub fn rate(equiv: Complex64, budget: &LinkBudget) -> f64 {
    budget.bandwidth * (1.0 + budget.avg_snr * equiv.norm_sqr()).log2()
}
