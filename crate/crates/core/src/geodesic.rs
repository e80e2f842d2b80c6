//! Discrete action functional and Riemannian distance by energy minimization.
//!
//! A path is a polyline on the uniform grid `s_i = i/N` of `[0, 1]`. Its
//! energy is the midpoint Riemann sum of `1/2 ∫ <a(γ)^{-1} γ', γ'> ds`:
//!
//! ```text
//! E = N/2 · Σ_i <G(m_i) Δ_i, Δ_i>,   Δ_i = p_{i+1} - p_i,  m_i = (p_i + p_{i+1})/2
//! ```
//!
//! with `G = a^{-1}`. Minimizing over the interior nodes gives a constant-speed
//! geodesic, and the distance is recovered as `sqrt(2 E_min)`.
//!
//! The minimizer is a Polak-Ribiere (PR+) nonlinear conjugate gradient with
//! Armijo backtracking. Directions are preconditioned by the block-tridiagonal
//! Hessian of the energy with the metric frozen at the current midpoints,
//! which removes the `N^2` conditioning of the discrete Laplacian.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::model::{DiffusionModel, ModelKind, Point};

/// Polyline on the uniform grid `s_i = i/N`, `i = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    points: Vec<Point>,
}

impl DiscretePath {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidArgument("a path needs at least 2 segments".into()));
        }
        let d = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("path coordinates must be finite".into()));
        }
        Ok(Self { points })
    }

    /// Straight chord from `x` to `y` with `n` segments.
    pub fn chord(x: &Point, y: &Point, n: usize) -> Result<Self> {
        Self::from_fn(n, |s| x + (y - x) * s)
    }

    /// Samples `f(s)` on the grid `s_i = i/n`.
    pub fn from_fn<F: FnMut(f64) -> Point>(n: usize, mut f: F) -> Result<Self> {
        Self::new((0..=n).map(|i| f(i as f64 / n as f64)).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn start(&self) -> &Point {
        &self.points[0]
    }

    pub fn end(&self) -> &Point {
        self.points.last().unwrap()
    }

    /// Joins `self` (ending at the start of `other`) and `other`.
    pub fn concat(&self, other: &DiscretePath) -> Result<Self> {
        let mut points = self.points.clone();
        points.extend(other.points.iter().skip(1).cloned());
        Self::new(points)
    }

    /// Linear interpolation onto a grid with `n` segments.
    pub fn resample(&self, n: usize) -> Result<Self> {
        let old = self.segments();
        Self::from_fn(n, |s| {
            let t = s * old as f64;
            let i = (t.floor() as usize).min(old - 1);
            let w = t - i as f64;
            &self.points[i] * (1.0 - w) + &self.points[i + 1] * w
        })
    }

    /// CSV with header `s,coord_0,...,coord_{d-1}`, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.segments();
        let mut out = String::from("s");
        for k in 0..self.dim() {
            let _ = write!(out, ",coord_{k}");
        }
        out.push('\n');
        for (i, p) in self.points.iter().enumerate() {
            out.push_str(&sig12(i as f64 / n as f64));
            for v in p.iter() {
                out.push(',');
                out.push_str(&sig12(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty path CSV".into()))?;
        if !header.starts_with("s,") {
            return Err(Error::InvalidArgument("path CSV must start with column s".into()));
        }
        let mut points = Vec::new();
        for line in lines {
            let values: Vec<f64> = line
                .split(',')
                .skip(1)
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidArgument(format!("path CSV: {e}")))?;
            points.push(DVector::from_vec(values));
        }
        Self::new(points)
    }
}

/// Options for [`geodesic_between`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Segment count `N`.
    pub segments: usize,
    /// Sup-norm gradient tolerance; `None` means `1e-8` times the initial energy.
    pub grad_tol: Option<f64>,
    pub max_iter: usize,
    /// Per-coordinate lower clamp applied to the initial chord where it leaves `S`.
    pub floor: Option<Vec<f64>>,
    /// Also start from two perturbed chords and keep the best minimum.
    pub multi_start: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            segments: 200,
            grad_tol: None,
            max_iter: 5000,
            floor: None,
            multi_start: false,
        }
    }
}

impl SolverOptions {
    pub fn with_segments(segments: usize) -> Self {
        Self {
            segments,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.segments < 2 {
            return Err(Error::InvalidArgument("segment count must be at least 2".into()));
        }
        if matches!(self.grad_tol, Some(t) if !(t > 0.0)) {
            return Err(Error::InvalidArgument("grad_tol must be positive".into()));
        }
        Ok(())
    }
}

/// A converged (locally) energy-minimizing path.
#[derive(Debug, Clone)]
pub struct GeodesicSolution {
    pub path: DiscretePath,
    /// `sqrt(2 E_min)`.
    pub distance: f64,
    pub energy: f64,
    /// Sum of segment Riemannian lengths, for diagnostics.
    pub length: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Energy after every accepted step, starting with the initial path.
    pub energy_history: Vec<f64>,
    /// Set when multi-start runs disagree on the distance by more than 1e-3 relative.
    pub multistart_disagreement: bool,
}

/// Discrete energy of `path` under the metric of `model`.
pub fn path_energy(model: &DiffusionModel, path: &DiscretePath) -> Result<f64> {
    check_dim(model, path)?;
    let nodes = flatten(path);
    Ok(Workspace::new(model, path.segments()).energy(&nodes)?.0)
}

/// Gradient of [`path_energy`] with respect to the interior nodes `1..N`.
pub fn energy_gradient(model: &DiffusionModel, path: &DiscretePath) -> Result<Vec<Point>> {
    check_dim(model, path)?;
    let d = model.dim();
    let nodes = flatten(path);
    let ws = Workspace::new(model, path.segments());
    let (_, metrics) = ws.energy(&nodes)?;
    let grad = ws.gradient(&nodes, &metrics)?;
    Ok(grad.chunks(d).map(DVector::from_column_slice).collect())
}

/// Riemannian length of each segment, `sqrt(<G(m_i) Δ_i, Δ_i>)`.
pub fn segment_lengths(model: &DiffusionModel, path: &DiscretePath) -> Result<Vec<f64>> {
    check_dim(model, path)?;
    let nodes = flatten(path);
    let ws = Workspace::new(model, path.segments());
    let (_, metrics) = ws.energy(&nodes)?;
    Ok(ws.segment_lengths(&nodes, &metrics))
}

/// Minimizing geodesic from `x` to `y` and the induced distance.
pub fn geodesic_between(
    model: &DiffusionModel,
    x: &Point,
    y: &Point,
    opts: &SolverOptions,
) -> Result<GeodesicSolution> {
    opts.validate()?;
    for p in [x, y] {
        if p.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: p.len(),
            });
        }
        if !model.contains(p.as_slice()) {
            return Err(Error::OutsideDomain(p.iter().copied().collect()));
        }
    }
    let n = opts.segments;
    if x == y {
        let path = DiscretePath::chord(x, y, n)?;
        return Ok(GeodesicSolution {
            path,
            distance: 0.0,
            energy: 0.0,
            length: 0.0,
            iterations: 0,
            grad_norm: 0.0,
            energy_history: vec![0.0],
            multistart_disagreement: false,
        });
    }
    let chord = initial_chord(model, x, y, opts)?;
    let mut best = minimize_from(model, &chord, opts)?;
    if opts.multi_start && model.dim() >= 2 {
        let mut disagreement = false;
        for sign in [1.0, -1.0] {
            let Some(start) = perturbed_chord(model, x, y, n, sign) else {
                continue;
            };
            match minimize_from(model, &start, opts) {
                Ok(sol) => {
                    if (sol.distance - best.distance).abs() > 1e-3 * best.distance {
                        disagreement = true;
                    }
                    if sol.energy < best.energy {
                        best = sol;
                    }
                }
                Err(Error::NoConvergence { .. }) | Err(Error::OutsideDomain(_)) => {}
                Err(e) => return Err(e),
            }
        }
        best.multistart_disagreement = disagreement;
    }
    Ok(best)
}

/// Riemannian distance `d(x, y)`.
pub fn distance(model: &DiffusionModel, x: &Point, y: &Point, opts: &SolverOptions) -> Result<f64> {
    geodesic_between(model, x, y, opts).map(|s| s.distance)
}

/// Interpolates `path` onto `target_n` segments and re-minimizes.
pub fn refine(
    model: &DiffusionModel,
    path: &DiscretePath,
    target_n: usize,
    opts: &SolverOptions,
) -> Result<GeodesicSolution> {
    if target_n < path.segments() {
        return Err(Error::InvalidArgument(format!(
            "target segment count {target_n} is below the current {}",
            path.segments()
        )));
    }
    let fine = if target_n == path.segments() {
        path.clone()
    } else {
        path.resample(target_n)?
    };
    let opts = SolverOptions {
        segments: target_n,
        ..opts.clone()
    };
    minimize_from(model, &fine, &opts)
}

/// Minimizes the energy starting from `initial`, keeping its endpoints fixed.
///
/// This is the warm-start entry point used by boundary scans.
pub fn minimize_from(
    model: &DiffusionModel,
    initial: &DiscretePath,
    opts: &SolverOptions,
) -> Result<GeodesicSolution> {
    opts.validate()?;
    check_dim(model, initial)?;
    let n = initial.segments();
    let d = model.dim();
    let ws = Workspace::new(model, n);
    let mut nodes = flatten(initial);
    for p in initial.points() {
        if !model.contains(p.as_slice()) {
            return Err(Error::OutsideDomain(p.iter().copied().collect()));
        }
    }
    let (mut energy, mut metrics) = ws.energy(&nodes)?;
    let tol = opts.grad_tol.unwrap_or(1e-8 * energy.max(f64::MIN_POSITIVE));
    let mut grad = ws.gradient(&nodes, &metrics)?;
    let mut pre = ws.precondition(&metrics, &grad)?;
    let mut g_dot_pre = dot(&grad, &pre);
    let mut dir: Vec<f64> = pre.iter().map(|v| -v).collect();
    let mut history = vec![energy];
    let restart_every = d * (n - 1);
    let mut since_restart = 0;
    let mut iterations = 0;
    let mut trial = vec![0.0; nodes.len()];

    loop {
        let grad_norm = sup_norm(&grad);
        if grad_norm <= tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                grad_norm,
            });
        }
        let mut slope = dot(&grad, &dir);
        let mut steepest = since_restart == 0;
        if slope >= 0.0 {
            dir.iter_mut().zip(&pre).for_each(|(v, p)| *v = -p);
            slope = -g_dot_pre;
            steepest = true;
        }

        let accepted = loop {
            match line_search(&ws, &nodes, &dir, energy, slope, &mut trial) {
                Some(step) => break Some(step),
                None if !steepest => {
                    dir.iter_mut().zip(&pre).for_each(|(v, p)| *v = -p);
                    slope = -g_dot_pre;
                    steepest = true;
                }
                None => break None,
            }
        };
        let Some((new_energy, new_metrics)) = accepted else {
            return Err(Error::NoConvergence {
                iterations,
                grad_norm,
            });
        };

        std::mem::swap(&mut nodes, &mut trial);
        energy = new_energy;
        metrics = new_metrics;
        history.push(energy);
        iterations += 1;
        since_restart = if steepest { 1 } else { since_restart + 1 };

        let new_grad = ws.gradient(&nodes, &metrics)?;
        let new_pre = ws.precondition(&metrics, &new_grad)?;
        let new_g_dot_pre = dot(&new_grad, &new_pre);
        let beta = if since_restart >= restart_every {
            since_restart = 0;
            0.0
        } else {
            let num: f64 = new_grad
                .iter()
                .zip(new_pre.iter().zip(&pre))
                .map(|(g, (zn, zo))| g * (zn - zo))
                .sum();
            (num / g_dot_pre).max(0.0)
        };
        for (v, p) in dir.iter_mut().zip(&new_pre) {
            *v = -p + beta * *v;
        }
        grad = new_grad;
        pre = new_pre;
        g_dot_pre = new_g_dot_pre;
    }

    let lengths = ws.segment_lengths(&nodes, &metrics);
    let points = nodes.chunks(d).map(DVector::from_column_slice).collect();
    Ok(GeodesicSolution {
        path: DiscretePath { points },
        distance: (2.0 * energy).sqrt(),
        energy,
        length: lengths.iter().sum(),
        iterations,
        grad_norm: sup_norm(&grad),
        energy_history: history,
        multistart_disagreement: false,
    })
}

/// Armijo backtracking along `dir`; writes the accepted nodes into `trial`.
fn line_search(
    ws: &Workspace<'_>,
    nodes: &[f64],
    dir: &[f64],
    energy: f64,
    slope: f64,
    trial: &mut [f64],
) -> Option<(f64, Vec<DMatrix<f64>>)> {
    let d = ws.model.dim();
    let last = nodes.len() - d;
    let slack = 8.0 * f64::EPSILON * energy.abs();
    let mut alpha = 1.0;
    for _ in 0..60 {
        trial.copy_from_slice(nodes);
        for (t, v) in trial[d..last].iter_mut().zip(dir) {
            *t += alpha * v;
        }
        match ws.energy(trial) {
            Ok((e, metrics)) if e <= energy + 1e-4 * alpha * slope + slack => {
                return Some((e, metrics));
            }
            Ok((e, _)) if e.is_finite() => {
                let denom = 2.0 * (e - energy - slope * alpha);
                let quad = if denom > 0.0 {
                    -slope * alpha * alpha / denom
                } else {
                    0.5 * alpha
                };
                alpha = quad.clamp(0.1 * alpha, 0.5 * alpha);
            }
            _ => alpha *= 0.25,
        }
    }
    None
}

/// Evaluation context: the model plus the segment count.
struct Workspace<'a> {
    model: &'a DiffusionModel,
    n: usize,
}

impl<'a> Workspace<'a> {
    fn new(model: &'a DiffusionModel, n: usize) -> Self {
        Self { model, n }
    }

    fn metric(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        self.model.inverse_metric(z)
    }

    /// Energy and the metric at every segment midpoint.
    fn energy(&self, nodes: &[f64]) -> Result<(f64, Vec<DMatrix<f64>>)> {
        let d = self.model.dim();
        let mut metrics = Vec::with_capacity(self.n);
        let mut sum = 0.0;
        let mut mid = vec![0.0; d];
        let mut delta = vec![0.0; d];
        for i in 0..self.n {
            let (p, q) = (&nodes[i * d..(i + 1) * d], &nodes[(i + 1) * d..(i + 2) * d]);
            if i > 0 && !self.model.contains(p) {
                return Err(Error::OutsideDomain(p.to_vec()));
            }
            for k in 0..d {
                mid[k] = 0.5 * (p[k] + q[k]);
                delta[k] = q[k] - p[k];
            }
            let g = self.metric(&mid)?;
            sum += quad_form(&g, &delta);
            metrics.push(g);
        }
        let energy = 0.5 * self.n as f64 * sum;
        if !energy.is_finite() {
            return Err(Error::OutsideDomain(vec![]));
        }
        Ok((energy, metrics))
    }

    /// `Δ^T (∂_k G)(m) Δ` for each coordinate `k`, by central differences of `G`.
    fn metric_derivative_forms(&self, mid: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
        let d = mid.len();
        let mut out = vec![0.0; d];
        let mut probe = mid.to_vec();
        for k in 0..d {
            let h = 1e-6 * mid[k].abs().max(1e-2);
            probe[k] = mid[k] + h;
            let plus = self.metric(&probe).ok();
            probe[k] = mid[k] - h;
            let minus = self.metric(&probe).ok();
            probe[k] = mid[k];
            out[k] = match (plus, minus) {
                (Some(p), Some(m)) => (quad_form(&p, delta) - quad_form(&m, delta)) / (2.0 * h),
                (Some(p), None) => (quad_form(&p, delta) - quad_form(&self.metric(mid)?, delta)) / h,
                (None, Some(m)) => (quad_form(&self.metric(mid)?, delta) - quad_form(&m, delta)) / h,
                (None, None) => return Err(Error::OutsideDomain(mid.to_vec())),
            };
        }
        Ok(out)
    }

    /// Exact gradient of the discrete energy with respect to interior nodes.
    fn gradient(&self, nodes: &[f64], metrics: &[DMatrix<f64>]) -> Result<Vec<f64>> {
        let d = self.model.dim();
        let nf = self.n as f64;
        let mut grad = vec![0.0; (self.n - 1) * d];
        let mut mid = vec![0.0; d];
        let mut delta = vec![0.0; d];
        for i in 0..self.n {
            let (p, q) = (&nodes[i * d..(i + 1) * d], &nodes[(i + 1) * d..(i + 2) * d]);
            for k in 0..d {
                mid[k] = 0.5 * (p[k] + q[k]);
                delta[k] = q[k] - p[k];
            }
            let g = &metrics[i];
            let forms = self.metric_derivative_forms(&mid, &delta)?;
            // segment i touches node i (as its start) and node i+1 (as its end)
            for k in 0..d {
                let g_delta: f64 = (0..d).map(|l| g[(k, l)] * delta[l]).sum();
                let shared = 0.25 * nf * forms[k];
                if i >= 1 {
                    grad[(i - 1) * d + k] += -nf * g_delta + shared;
                }
                if i + 1 < self.n {
                    grad[i * d + k] += nf * g_delta + shared;
                }
            }
        }
        Ok(grad)
    }

    /// Solves `H z = g` with `H` the block-tridiagonal energy Hessian at frozen
    /// metric: diagonal blocks `N (G_{j-1} + G_j)`, off-diagonal `-N G_j`.
    fn precondition(&self, metrics: &[DMatrix<f64>], grad: &[f64]) -> Result<Vec<f64>> {
        let d = self.model.dim();
        let m = self.n - 1;
        let nf = self.n as f64;
        let mut c_prime: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        let mut g_prime: Vec<DVector<f64>> = Vec::with_capacity(m);
        for j in 0..m {
            // interior node j+1 sits between segments j and j+1
            let mut denom = (&metrics[j] + &metrics[j + 1]) * nf;
            let mut rhs = DVector::from_column_slice(&grad[j * d..(j + 1) * d]);
            if j > 0 {
                let lower = &metrics[j] * (-nf);
                denom -= &lower * &c_prime[j - 1];
                rhs -= &lower * &g_prime[j - 1];
            }
            let inv = denom
                .try_inverse()
                .ok_or_else(|| Error::NotSpd(grad[j * d..(j + 1) * d].to_vec()))?;
            let upper = &metrics[j + 1] * (-nf);
            c_prime.push(&inv * upper);
            g_prime.push(&inv * rhs);
        }
        let mut z = vec![0.0; m * d];
        let mut next: Option<DVector<f64>> = None;
        for j in (0..m).rev() {
            let zj = match &next {
                Some(zn) => &g_prime[j] - &c_prime[j] * zn,
                None => g_prime[j].clone(),
            };
            z[j * d..(j + 1) * d].copy_from_slice(zj.as_slice());
            next = Some(zj);
        }
        Ok(z)
    }

    fn segment_lengths(&self, nodes: &[f64], metrics: &[DMatrix<f64>]) -> Vec<f64> {
        let d = self.model.dim();
        (0..self.n)
            .map(|i| {
                let delta: Vec<f64> = (0..d).map(|k| nodes[(i + 1) * d + k] - nodes[i * d + k]).collect();
                quad_form(&metrics[i], &delta).max(0.0).sqrt()
            })
            .collect()
    }
}

fn initial_chord(
    model: &DiffusionModel,
    x: &Point,
    y: &Point,
    opts: &SolverOptions,
) -> Result<DiscretePath> {
    let floor = opts.floor.clone().or_else(|| default_floor(model, x, y));
    let mut chord = DiscretePath::chord(x, y, opts.segments)?;
    for p in chord.points.iter_mut() {
        if model.contains(p.as_slice()) {
            continue;
        }
        if let Some(f) = &floor {
            for (v, lo) in p.iter_mut().zip(f) {
                *v = v.max(*lo);
            }
        }
        if !model.contains(p.as_slice()) {
            return Err(Error::OutsideDomain(p.iter().copied().collect()));
        }
    }
    Ok(chord)
}

/// Volatility floor `1e-3 · min(v_x, v_y)` for Hull-White models.
fn default_floor(model: &DiffusionModel, x: &Point, y: &Point) -> Option<Vec<f64>> {
    match model.kind() {
        ModelKind::HullWhite { .. } | ModelKind::Heston { .. } => {
            Some(vec![f64::NEG_INFINITY, 1e-3 * x[1].min(y[1])])
        }
        _ => None,
    }
}

/// Chord bent by `± 0.25 |y - x| sin(π s)` along a direction orthogonal to it.
fn perturbed_chord(model: &DiffusionModel, x: &Point, y: &Point, n: usize, sign: f64) -> Option<DiscretePath> {
    let chord = y - x;
    let len = chord.norm();
    let d = x.len();
    // orthogonalize the coordinate axis least aligned with the chord
    let k = (0..d).min_by(|&a, &b| chord[a].abs().total_cmp(&chord[b].abs()))?;
    let mut normal = DVector::zeros(d);
    normal[k] = 1.0;
    normal -= &chord * (chord[k] / (len * len));
    let nn = normal.norm();
    if nn == 0.0 {
        return None;
    }
    normal /= nn;
    let path = DiscretePath::from_fn(n, |s| {
        x + &chord * s + &normal * (sign * 0.25 * len * (std::f64::consts::PI * s).sin())
    })
    .ok()?;
    path.points
        .iter()
        .all(|p| model.contains(p.as_slice()))
        .then_some(path)
}

fn check_dim(model: &DiffusionModel, path: &DiscretePath) -> Result<()> {
    if path.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: path.dim(),
        });
    }
    Ok(())
}

fn flatten(path: &DiscretePath) -> Vec<f64> {
    path.points.iter().flat_map(|p| p.iter().copied()).collect()
}

fn quad_form(g: &DMatrix<f64>, v: &[f64]) -> f64 {
    let d = v.len();
    let mut s = 0.0;
    for k in 0..d {
        for l in 0..d {
            s += v[k] * g[(k, l)] * v[l];
        }
    }
    s
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
