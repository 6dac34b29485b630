//! Fluid-antenna port geometry: the sinc spatial-correlation matrix over the
//! port grid and correlated circularly-symmetric complex Gaussian sampling of
//! the port-resolved scattered component.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Two-dimensional port layout. `size_w1`/`size_w2` are the aperture extents
/// in wavelengths, so inter-port distances below are already
/// wavelength-normalized.
#[derive(Debug, Clone, Copy)]
pub struct PortGrid {
    pub rows: usize,
    pub cols: usize,
    pub size_w1: f64,
    pub size_w2: f64,
}

impl PortGrid {
    pub fn new(rows: usize, cols: usize, size_w1: f64, size_w2: f64) -> Result<Self> {
        if rows < 1 || cols < 1 {
            return Err(Error::InvalidArgument("port grid needs >= 1x1 ports".into()));
        }
        if size_w1 <= 0.0 || size_w2 <= 0.0 {
            return Err(Error::InvalidArgument("aperture sizes must be positive".into()));
        }
        Ok(Self { rows, cols, size_w1, size_w2 })
    }

    pub fn ports(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major port index -> (row, col).
    fn coords(&self, h: usize) -> (usize, usize) {
        (h / self.cols, h % self.cols)
    }
}

/// Port correlation matrix: symmetric, unit diagonal, entries in [-1, 1].
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    matrix: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn entry(&self, h: usize, h_tilde: usize) -> f64 {
        self.matrix[(h, h_tilde)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Correlation between ports h and h~ is sinc(2 d), with d the inter-port
/// distance in wavelengths. A single-row (or single-column) grid contributes
/// zero offset along the degenerate axis.
pub fn build_correlation(grid: &PortGrid) -> CorrelationMatrix {
    let h_total = grid.ports();
    let step1 = if grid.rows > 1 {
        grid.size_w1 / (grid.rows - 1) as f64
    } else {
        0.0
    };
    let step2 = if grid.cols > 1 {
        grid.size_w2 / (grid.cols - 1) as f64
    } else {
        0.0
    };
    let mut m = DMatrix::zeros(h_total, h_total);
    for h in 0..h_total {
        let (r1, c1) = grid.coords(h);
        for ht in 0..=h {
            let (r2, c2) = grid.coords(ht);
            let d1 = (r1 as f64 - r2 as f64).abs() * step1;
            let d2 = (c1 as f64 - c2 as f64).abs() * step2;
            let d = (d1 * d1 + d2 * d2).sqrt();
            let v = sinc(2.0 * d);
            m[(h, ht)] = v;
            m[(ht, h)] = v;
        }
    }
    CorrelationMatrix { matrix: m }
}

/// Holds a factor L with L L^T equal to the eigenvalue-repaired correlation
/// matrix; rows of the scattered component are drawn as L z.
#[derive(Debug, Clone)]
pub struct CorrelatedSampler {
    factor: DMatrix<f64>,
    dimension: usize,
}

/// Eigen-decompose, clamp negative eigenvalues to zero, and form
/// L = V sqrt(Lambda). Tolerates the small negative eigenvalues the sinc
/// matrix produces in floating point.
pub fn factorize(r: &CorrelationMatrix) -> Result<CorrelatedSampler> {
    let m = &r.matrix;
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 {
                return Err(Error::InvalidArgument(
                    "correlation matrix is not symmetric".into(),
                ));
            }
        }
    }
    let eig = m.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (col, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        scaled.column_mut(col).scale_mut(s);
    }
    Ok(CorrelatedSampler {
        factor: scaled,
        dimension: n,
    })
}

impl CorrelatedSampler {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Max-norm reconstruction error against the given matrix.
    pub fn reconstruction_error(&self, r: &CorrelationMatrix) -> f64 {
        let rec = &self.factor * self.factor.transpose();
        (rec - &r.matrix).amax()
    }

    /// Identity-correlation sampler of the given dimension (independent ports).
    pub fn identity(dimension: usize) -> Self {
        Self {
            factor: DMatrix::identity(dimension, dimension),
            dimension,
        }
    }

    /// Draw `m_rows` independent rows, each with port covariance R. Real and
    /// imaginary parts carry variance 1/2 each (unit total variance).
    pub fn sample_rows(&self, m_rows: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
        let h = self.dimension;
        let mut out = DMatrix::zeros(m_rows, h);
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        for row in 0..m_rows {
            let z = DVector::from_fn(h, |_, _| {
                Complex64::new(
                    scale * rng.sample::<f64, _>(StandardNormal),
                    scale * rng.sample::<f64, _>(StandardNormal),
                )
            });
            let correlated = self.factor.map(|v| Complex64::new(v, 0.0)) * z;
            for (col, v) in correlated.iter().enumerate() {
                out[(row, col)] = *v;
            }
        }
        out
    }
}
