//! Diffusion models and the Riemannian structure induced by their diffusion matrix.
//!
//! A model is a set of coefficient callbacks (drift `b`, diffusion coefficient
//! `sigma`) together with a membership test for the state domain `S`. The
//! metric tensor used by every distance computation is `a(z)^{-1}` where
//! `a = sigma sigma^T`. The drift is carried along for simulation only; it never
//! enters the metric.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A point of the state space.
pub type Point = DVector<f64>;

type VectorField = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
type MatrixField = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type DomainTest = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Structural information the exit module uses to pick a closed-form backend.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Constant diffusion coefficient on the whole of R^d.
    Constant { sigma: DMatrix<f64> },
    /// Hull-White stochastic volatility in (log-price, volatility) coordinates.
    HullWhite {
        b: f64,
        mu: f64,
        sigma_vol: f64,
        rho: f64,
    },
    /// Heston model; constructible, but flagged incomplete.
    Heston { mu: f64, kappa: f64, theta: f64, nu: f64 },
    /// Coefficients sampled on a grid and interpolated bilinearly.
    Grid,
    /// Arbitrary user callbacks.
    Custom,
}

/// An Ito diffusion `dX = b(X) dt + sigma(X) dB` on an open set `S`.
///
/// Immutable after construction; clones share the coefficient callbacks.
#[derive(Clone)]
pub struct DiffusionModel {
    dim: usize,
    drift: VectorField,
    sigma: MatrixField,
    domain: DomainTest,
    complete: bool,
    kind: ModelKind,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("dim", &self.dim)
            .field("complete", &self.complete)
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

impl DiffusionModel {
    /// Builds a model from raw callbacks.
    ///
    /// `complete` asserts that `S` is complete for the induced distance; it is
    /// taken on trust.
    pub fn custom<B, S, D>(dim: usize, drift: B, sigma: S, domain: D, complete: bool) -> Self
    where
        B: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
        S: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        D: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        Self {
            dim,
            drift: Arc::new(drift),
            sigma: Arc::new(sigma),
            domain: Arc::new(domain),
            complete,
            kind: ModelKind::Custom,
        }
    }

    /// Constant diffusion coefficient, zero drift, `S = R^d`.
    pub fn constant(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("sigma must be finite".into()));
        }
        let dim = sigma.nrows();
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let a = symmetric_product(&sigma);
        if a.cholesky().is_none() {
            return Err(Error::NotSpd(vec![]));
        }
        let s = sigma.clone();
        Ok(Self {
            dim,
            drift: Arc::new(move |_| DVector::zeros(dim)),
            sigma: Arc::new(move |_| s.clone()),
            domain: Arc::new(|z| z.iter().all(|v| v.is_finite())),
            complete: true,
            kind: ModelKind::Constant { sigma },
        })
    }

    /// Standard Brownian motion in dimension `dim`.
    pub fn identity(dim: usize) -> Self {
        Self::constant(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    /// Hull-White stochastic volatility model in coordinates `(xi, v)`:
    ///
    /// ```text
    /// d xi = (b - v^2/2) dt + v rho dB1 + v sqrt(1 - rho^2) dB2
    /// d v  = mu v dt + sigma_vol v dB1
    /// ```
    ///
    /// on `S = R x (0, inf)`. The boundary `v = 0` is at infinite distance, so
    /// the model is complete.
    pub fn hull_white(b: f64, mu: f64, sigma_vol: f64, rho: f64) -> Result<Self> {
        if !(sigma_vol > 0.0 && sigma_vol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma_vol must be positive, got {sigma_vol}"
            )));
        }
        if !(rho.abs() <= 1.0) {
            return Err(Error::InvalidArgument(format!("rho must lie in [-1, 1], got {rho}")));
        }
        if rho.abs() == 1.0 {
            return Err(Error::DegenerateCorrelation(rho));
        }
        let rho_bar = (1.0 - rho * rho).sqrt();
        Ok(Self {
            dim: 2,
            drift: Arc::new(move |z| DVector::from_vec(vec![b - 0.5 * z[1] * z[1], mu * z[1]])),
            sigma: Arc::new(move |z| {
                let v = z[1];
                DMatrix::from_row_slice(2, 2, &[v * rho, v * rho_bar, sigma_vol * v, 0.0])
            }),
            domain: Arc::new(|z| z[0].is_finite() && z[1].is_finite() && z[1] > 0.0),
            complete: true,
            kind: ModelKind::HullWhite {
                b,
                mu,
                sigma_vol,
                rho,
            },
        })
    }

    /// Hull-White with `sigma_vol = 1`, `rho = 0`: the metric is the Poincare
    /// half-plane metric `(dxi^2 + dv^2) / v^2`.
    pub fn hull_white_simple(b: f64, mu: f64) -> Self {
        Self::hull_white(b, mu, 1.0, 0.0).expect("valid parameters")
    }

    /// Heston model in coordinates `(s, v)`:
    ///
    /// ```text
    /// d s = mu dt + sqrt(v) dB1
    /// d v = kappa (theta - v) dt + nu sqrt(v) dB2
    /// ```
    ///
    /// The boundary `v = 0` is at finite distance, so the model is always
    /// flagged incomplete and the exit module refuses it.
    pub fn heston(mu: f64, kappa: f64, theta: f64, nu: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidArgument("nu must be positive".into()));
        }
        Ok(Self {
            dim: 2,
            drift: Arc::new(move |z| DVector::from_vec(vec![mu, kappa * (theta - z[1])])),
            sigma: Arc::new(move |z| {
                let r = z[1].sqrt();
                DMatrix::from_row_slice(2, 2, &[r, 0.0, 0.0, nu * r])
            }),
            domain: Arc::new(|z| z[0].is_finite() && z[1].is_finite() && z[1] > 0.0),
            complete: false,
            kind: ModelKind::Heston {
                mu,
                kappa,
                theta,
                nu,
            },
        })
    }

    /// Two-dimensional model whose diffusion coefficient is bilinearly
    /// interpolated from `grid`. Zero drift; `S` is the open grid rectangle.
    pub fn from_sigma_grid(grid: SigmaGrid, complete: bool) -> Self {
        let grid = Arc::new(grid);
        let g = Arc::clone(&grid);
        Self {
            dim: 2,
            drift: Arc::new(|_| DVector::zeros(2)),
            sigma: Arc::new(move |z| g.sigma_at(z[0], z[1])),
            domain: Arc::new(move |z| grid.contains(z[0], z[1])),
            complete,
            kind: ModelKind::Grid,
        }
    }

    /// Same coefficients and domain, different drift.
    pub fn with_drift<B>(&self, drift: B) -> Self
    where
        B: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            drift: Arc::new(drift),
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Membership in the state domain `S`.
    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim && (self.domain)(z)
    }

    pub fn drift(&self, z: &[f64]) -> DVector<f64> {
        (self.drift)(z)
    }

    pub fn sigma(&self, z: &[f64]) -> DMatrix<f64> {
        (self.sigma)(z)
    }

    /// `(sigma_vol, rho)` when this is a Hull-White model.
    pub fn hull_white_params(&self) -> Option<(f64, f64)> {
        match self.kind {
            ModelKind::HullWhite { sigma_vol, rho, .. } => Some((sigma_vol, rho)),
            _ => None,
        }
    }

    /// The metric tensor of a constant-coefficient model.
    pub fn constant_inverse_metric(&self) -> Option<DMatrix<f64>> {
        match &self.kind {
            ModelKind::Constant { sigma } => symmetric_product(sigma).cholesky().map(|c| c.inverse()),
            _ => None,
        }
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        if !(self.domain)(z) {
            return Err(Error::OutsideDomain(z.to_vec()));
        }
        Ok(())
    }

    /// The diffusion matrix `a(z) = sigma(z) sigma(z)^T`.
    pub fn diffusion_matrix(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        self.check(z)?;
        let s = (self.sigma)(z);
        if s.nrows() != self.dim || !s.iter().all(|v| v.is_finite()) {
            return Err(Error::NotSpd(z.to_vec()));
        }
        let a = symmetric_product(&s);
        if a.clone().cholesky().is_none() {
            return Err(Error::NotSpd(z.to_vec()));
        }
        Ok(a)
    }

    /// The metric tensor `a(z)^{-1}`, computed from the Cholesky factor of `a`.
    pub fn inverse_metric(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        self.check(z)?;
        let s = (self.sigma)(z);
        if s.nrows() != self.dim || !s.iter().all(|v| v.is_finite()) {
            return Err(Error::NotSpd(z.to_vec()));
        }
        let chol = symmetric_product(&s)
            .cholesky()
            .ok_or_else(|| Error::NotSpd(z.to_vec()))?;
        let mut inv = chol.inverse();
        symmetrize(&mut inv);
        Ok(inv)
    }
}

/// `s s^T`, filled so that the result is exactly symmetric.
fn symmetric_product(s: &DMatrix<f64>) -> DMatrix<f64> {
    let d = s.nrows();
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = s.row(i).dot(&s.row(j));
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Diffusion coefficients of a 2-d model sampled on a rectilinear grid.
///
/// CSV layout: header `x0,x1,s00,s01,s10,s11`, one row per grid node, any
/// row order. Every combination of the distinct `x0` and `x1` values must be
/// present.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaGrid {
    xs: Vec<f64>,
    ys: Vec<f64>,
    // row-major over (ix, iy), sigma entries s00, s01, s10, s11
    values: Vec<[f64; 4]>,
}

impl SigmaGrid {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<[f64; 4]>) -> Result<Self> {
        if xs.len() < 2 || ys.len() < 2 {
            return Err(Error::InvalidArgument("grid needs at least 2 nodes per axis".into()));
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) || ys.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("grid axes must be strictly increasing".into()));
        }
        if values.len() != xs.len() * ys.len() {
            return Err(Error::InvalidArgument("grid value count does not match axes".into()));
        }
        Ok(Self { xs, ys, values })
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("x0")) {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidArgument(format!("grid line {}: {e}", lineno + 1)))?;
            if fields.len() != 6 {
                return Err(Error::InvalidArgument(format!(
                    "grid line {}: expected 6 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            rows.push(fields);
        }
        let mut xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mut ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        for axis in [&mut xs, &mut ys] {
            axis.sort_by(f64::total_cmp);
            axis.dedup();
        }
        let mut values = vec![[f64::NAN; 4]; xs.len() * ys.len()];
        for r in &rows {
            let ix = xs.partition_point(|&v| v < r[0]);
            let iy = ys.partition_point(|&v| v < r[1]);
            values[ix * ys.len() + iy] = [r[2], r[3], r[4], r[5]];
        }
        if values.iter().any(|v| v[0].is_nan()) {
            return Err(Error::InvalidArgument("grid is missing nodes".into()));
        }
        Self::new(xs, ys, values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        Self::parse_csv(&text)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x > self.xs[0] && x < *self.xs.last().unwrap() && y > self.ys[0] && y < *self.ys.last().unwrap()
    }

    fn sigma_at(&self, x: f64, y: f64) -> DMatrix<f64> {
        let (ix, tx) = locate(&self.xs, x);
        let (iy, ty) = locate(&self.ys, y);
        let ny = self.ys.len();
        let v00 = &self.values[ix * ny + iy];
        let v01 = &self.values[ix * ny + iy + 1];
        let v10 = &self.values[(ix + 1) * ny + iy];
        let v11 = &self.values[(ix + 1) * ny + iy + 1];
        let mut out = [0.0; 4];
        for k in 0..4 {
            out[k] = (1.0 - tx) * ((1.0 - ty) * v00[k] + ty * v01[k])
                + tx * ((1.0 - ty) * v10[k] + ty * v11[k]);
        }
        DMatrix::from_row_slice(2, 2, &out)
    }
}

fn locate(axis: &[f64], v: f64) -> (usize, f64) {
    let i = axis.partition_point(|&a| a <= v).clamp(1, axis.len() - 1) - 1;
    let t = ((v - axis[i]) / (axis[i + 1] - axis[i])).clamp(0.0, 1.0);
    (i, t)
}
