//! Exit exponent of a small-time bridge from a domain `D`.
//!
//! For a bridge from `x` to `y` with both endpoints in `D`,
//!
//! ```text
//! t log P(exit before time 1) -> -J,   J = inf_{z ∈ ∂D} 1/2 ((d(x,z) + d(z,y))^2 - d(x,y)^2)
//! ```
//!
//! and the optimal path crosses at time `u = d(x,z*) / (d(x,z*) + d(z*,y))`.
//!
//! Backends, chosen automatically:
//! - Hull-White with a straight barrier: reflection in the half-plane when the
//!   barrier image is vertical, otherwise a 1-d search along the barrier with
//!   closed-form distances;
//! - constant metric with a hyperplane: Mahalanobis reflection;
//! - anything else: boundary scan (grid then golden section) with numerical
//!   geodesic distances, warm-started from neighbouring samples.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::geodesic::{self, DiscretePath, GeodesicSolution, SolverOptions};
use crate::hyperbolic::{self, HalfPlanePoint};
use crate::model::{DiffusionModel, ModelKind, Point};
use crate::search::{self, golden_section, linspace};

/// Parametrized boundary curve `θ ↦ z(θ)`.
#[derive(Clone)]
pub struct ParametricCurve {
    pub map: Arc<dyn Fn(f64) -> Point + Send + Sync>,
    pub theta_min: f64,
    pub theta_max: f64,
    pub samples: usize,
}

impl fmt::Debug for ParametricCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricCurve")
            .field("theta_min", &self.theta_min)
            .field("theta_max", &self.theta_max)
            .field("samples", &self.samples)
            .finish_non_exhaustive()
    }
}

/// The boundary `∂D`.
#[derive(Debug, Clone)]
pub enum Boundary {
    /// `D = {z : <normal, z> < offset}`; `normal` has unit length and points out of `D`.
    Hyperplane { normal: Point, offset: f64 },
    /// The line `z_0 = x0`; `D` is the side containing the starting point.
    VerticalBarrier { x0: f64 },
    ParametricCurve(ParametricCurve),
}

impl Boundary {
    /// Hyperplane `<normal, z> = offset` with exit side `<normal, z> > offset`.
    pub fn hyperplane(normal: Point, offset: f64) -> Result<Self> {
        let norm = normal.norm();
        if !(norm > 0.0 && norm.is_finite() && offset.is_finite()) {
            return Err(Error::InvalidArgument("hyperplane normal must be non-zero".into()));
        }
        Ok(Boundary::Hyperplane {
            normal: normal / norm,
            offset: offset / norm,
        })
    }

    pub fn vertical(x0: f64) -> Self {
        Boundary::VerticalBarrier { x0 }
    }

    /// Circle of the given centre and radius in the plane, sampled `samples` times.
    pub fn circle(center: [f64; 2], radius: f64, samples: usize) -> Self {
        Boundary::ParametricCurve(ParametricCurve {
            map: Arc::new(move |th: f64| {
                DVector::from_vec(vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()])
            }),
            theta_min: 0.0,
            theta_max: std::f64::consts::TAU,
            samples,
        })
    }

    /// Oriented hyperplane form, with `D` on the negative side. `x` fixes the
    /// side of a vertical barrier.
    pub(crate) fn as_hyperplane(&self, x: &Point) -> Option<(Point, f64)> {
        match self {
            Boundary::Hyperplane { normal, offset } => Some((normal.clone(), *offset)),
            Boundary::VerticalBarrier { x0 } => {
                let sign = if x[0] <= *x0 { 1.0 } else { -1.0 };
                let mut n = DVector::zeros(x.len());
                n[0] = sign;
                Some((n, sign * x0))
            }
            Boundary::ParametricCurve(_) => None,
        }
    }
}

/// How a result was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Exact reflection formula.
    ClosedForm,
    /// 1-d search along the boundary with closed-form distances.
    Numeric1d,
    /// Boundary scan with numerical geodesic distances.
    NumericGeodesic,
    /// Constant metric frozen at a point.
    Frozen,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::Numeric1d => "numeric_1d",
            Method::NumericGeodesic => "numeric_geodesic",
            Method::Frozen => "frozen",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::ClosedForm, Method::Numeric1d, Method::NumericGeodesic, Method::Frozen]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

/// Degenerate configurations, reported alongside `J = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitFlag {
    Regular,
    /// The geodesic from `x` to `y` itself leaves `D`; exit has probability → 1.
    GeodesicExits,
    /// `x` or `y` lies on `∂D`.
    EndpointOnBoundary,
}

impl ExitFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitFlag::Regular => "",
            ExitFlag::GeodesicExits => "geodesic_exits",
            ExitFlag::EndpointOnBoundary => "endpoint_on_boundary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [ExitFlag::Regular, ExitFlag::GeodesicExits, ExitFlag::EndpointOnBoundary]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

/// Exit exponent together with the optimal crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitAsymptotics {
    pub j: f64,
    pub z_star: Point,
    pub u_bar: f64,
    pub d_xy: f64,
    pub d_xz: f64,
    pub d_zy: f64,
    pub method: Method,
    pub flag: ExitFlag,
}

/// Selects the distance backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Auto,
    /// Always scan the boundary with numerical geodesics.
    Geodesic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitOptions {
    pub solver: SolverOptions,
    /// Coarse grid size `M` for boundary scans.
    pub boundary_samples: usize,
    /// Unbounded boundaries are truncated to `truncation_factor · d(x, y)`
    /// (Euclidean) around the projection of the chord midpoint.
    pub truncation_factor: f64,
    /// Golden-section bracket width.
    pub golden_tol: f64,
    pub backend: Backend,
    pub workers: usize,
}

impl Default for ExitOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            boundary_samples: 256,
            truncation_factor: 4.0,
            golden_tol: 1e-10,
            backend: Backend::Auto,
            workers: 1,
        }
    }
}

/// `1/2 (d_xz^2/u + d_zy^2/(1-u) - d_xy^2)`: cost of reaching `z` at time `u`.
pub fn time_profile(u: f64, d_xz: f64, d_zy: f64, d_xy: f64) -> f64 {
    if !(u > 0.0 && u < 1.0) {
        return f64::INFINITY;
    }
    0.5 * (d_xz * d_xz / u + d_zy * d_zy / (1.0 - u) - d_xy * d_xy)
}

/// `u = d_xz / (d_xz + d_zy)`, the minimizer of [`time_profile`].
pub fn optimal_crossing_time(d_xz: f64, d_zy: f64) -> Result<f64> {
    if d_xz < 0.0 || d_zy < 0.0 {
        return Err(Error::InvalidArgument("distances must be non-negative".into()));
    }
    let s = d_xz + d_zy;
    if s == 0.0 {
        return Err(Error::BothZero);
    }
    Ok(d_xz / s)
}

/// `exp(-J/t)`, the logarithmic equivalent of the exit probability.
pub fn exit_probability_equivalent(j: f64, t: f64) -> f64 {
    (-j / t).exp()
}

fn cost(d_xz: f64, d_zy: f64, d_xy: f64) -> f64 {
    0.5 * ((d_xz + d_zy).powi(2) - d_xy * d_xy)
}

/// Closed-form distance when one exists, otherwise `None`.
enum ClosedMetric {
    HullWhite { sigma_vol: f64, rho: f64 },
    Constant(DMatrix<f64>),
}

impl ClosedMetric {
    fn for_model(model: &DiffusionModel, anchor: &Point) -> Result<Option<Self>> {
        Ok(match model.kind() {
            ModelKind::HullWhite { sigma_vol, rho, .. } => Some(ClosedMetric::HullWhite {
                sigma_vol: *sigma_vol,
                rho: *rho,
            }),
            ModelKind::Constant { .. } => Some(ClosedMetric::Constant(model.inverse_metric(anchor.as_slice())?)),
            _ => None,
        })
    }

    fn distance(&self, a: &Point, b: &Point) -> Result<f64> {
        match self {
            ClosedMetric::HullWhite { sigma_vol, rho } => hyperbolic::hw_distance(
                *sigma_vol,
                *rho,
                HalfPlanePoint::from_point(a)?,
                HalfPlanePoint::from_point(b)?,
            ),
            ClosedMetric::Constant(g) => Ok(mahalanobis(g, &(b - a))),
        }
    }
}

fn mahalanobis(g: &DMatrix<f64>, v: &Point) -> f64 {
    (v.transpose() * g * v)[(0, 0)].max(0.0).sqrt()
}

/// `d(x, y)` by the fastest available backend.
fn best_distance(model: &DiffusionModel, x: &Point, y: &Point, solver: &SolverOptions) -> Result<f64> {
    match ClosedMetric::for_model(model, x)? {
        Some(m) => m.distance(x, y),
        None => geodesic::distance(model, x, y, solver),
    }
}

/// `1/2 ((d(x,z) + d(z,y))^2 - d(x,y)^2)`.
pub fn pointwise_exit_cost(
    model: &DiffusionModel,
    x: &Point,
    y: &Point,
    z: &Point,
    solver: &SolverOptions,
) -> Result<f64> {
    for p in [x, y, z] {
        check_point(model, p)?;
    }
    let d_xz = best_distance(model, x, z, solver)?;
    let d_zy = best_distance(model, z, y, solver)?;
    let d_xy = best_distance(model, x, y, solver)?;
    Ok(cost(d_xz, d_zy, d_xy).max(0.0))
}

/// Bridge rate function: `I(path) - 1/2 d(x,y)^2` for paths ending at `y`,
/// `+inf` otherwise.
pub fn bridge_rate(
    model: &DiffusionModel,
    path: &DiscretePath,
    x: &Point,
    y: &Point,
    solver: &SolverOptions,
) -> Result<f64> {
    if (path.start() - x).amax() > 1e-9 {
        return Err(Error::InvalidArgument("path does not start at x".into()));
    }
    if (path.end() - y).norm() > 1e-9 {
        return Ok(f64::INFINITY);
    }
    let energy = geodesic::path_energy(model, path)?;
    let d_xy = best_distance(model, x, y, solver)?;
    Ok(energy - 0.5 * d_xy * d_xy)
}

fn check_point(model: &DiffusionModel, p: &Point) -> Result<()> {
    if p.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: p.len(),
        });
    }
    if !model.contains(p.as_slice()) {
        return Err(Error::OutsideDomain(p.iter().copied().collect()));
    }
    Ok(())
}

/// Where the endpoints sit relative to a hyperplane boundary.
enum Placement {
    Inside,
    OnBoundary,
    Straddle,
}

fn placement(boundary: &Boundary, normal: &Point, offset: f64, x: &Point, y: &Point) -> Result<Placement> {
    let gap_x = offset - normal.dot(x);
    let gap_y = offset - normal.dot(y);
    let scale = 1e-12 * offset.abs().max(x.amax()).max(y.amax()).max(1.0);
    if gap_x.abs() <= scale || gap_y.abs() <= scale {
        return Ok(Placement::OnBoundary);
    }
    if gap_x < 0.0 || gap_y < 0.0 {
        return match boundary {
            Boundary::VerticalBarrier { .. } => Ok(Placement::Straddle),
            _ => Err(Error::EndpointOutsideDomain),
        };
    }
    Ok(Placement::Inside)
}

/// Small-time exit exponent of the bridge from `x` to `y` through `boundary`.
pub fn exit_asymptotics(
    model: &DiffusionModel,
    x: &Point,
    y: &Point,
    boundary: &Boundary,
    opts: &ExitOptions,
) -> Result<ExitAsymptotics> {
    if !model.is_complete() {
        return Err(Error::IncompleteModel);
    }
    check_point(model, x)?;
    check_point(model, y)?;
    let plane = boundary.as_hyperplane(x);

    if let Some((normal, offset)) = &plane {
        match placement(boundary, normal, *offset, x, y)? {
            Placement::OnBoundary => {
                let d_xy = best_distance(model, x, y, &opts.solver)?;
                return Ok(on_boundary(normal, *offset, x, y, d_xy, Method::ClosedForm));
            }
            Placement::Straddle | Placement::Inside => {}
        }
    }

    let result = match (opts.backend, model.kind(), &plane) {
        (Backend::Auto, ModelKind::Constant { .. }, Some((normal, offset))) => {
            let g = model.inverse_metric(x.as_slice())?;
            mahalanobis_reflection(&g, normal, *offset, x, y, Method::ClosedForm)
        }
        (Backend::Auto, ModelKind::HullWhite { sigma_vol, rho, .. }, Some((normal, offset))) => {
            hull_white_line(*sigma_vol, *rho, normal, *offset, x, y, opts)?
        }
        (Backend::Auto, ModelKind::Constant { .. } | ModelKind::HullWhite { .. }, None) => {
            let metric = ClosedMetric::for_model(model, x)?.expect("closed-form model");
            closed_scan(model, &metric, x, y, boundary, opts, Method::Numeric1d)?
        }
        _ => geodesic_scan(model, x, y, boundary, opts)?,
    };
    Ok(finalize(result))
}

/// Exit exponent with the metric frozen at `a(z0)^{-1}`.
pub fn frozen_exit_asymptotics(
    model: &DiffusionModel,
    x: &Point,
    y: &Point,
    boundary: &Boundary,
    z0: &Point,
    opts: &ExitOptions,
) -> Result<ExitAsymptotics> {
    if !model.is_complete() {
        return Err(Error::IncompleteModel);
    }
    check_point(model, x)?;
    check_point(model, y)?;
    check_point(model, z0)?;
    let g = model.inverse_metric(z0.as_slice())?;
    let result = match boundary.as_hyperplane(x) {
        Some((normal, offset)) => match placement(boundary, &normal, offset, x, y)? {
            Placement::OnBoundary => on_boundary(&normal, offset, x, y, mahalanobis(&g, &(y - x)), Method::Frozen),
            _ => mahalanobis_reflection(&g, &normal, offset, x, y, Method::Frozen),
        },
        None => {
            let frozen = DiffusionModel::custom(
                model.dim(),
                {
                    let d = model.dim();
                    move |_| DVector::zeros(d)
                },
                {
                    let s = model.sigma(z0.as_slice());
                    move |_| s.clone()
                },
                |z| z.iter().all(|v| v.is_finite()),
                true,
            );
            closed_scan(&frozen, &ClosedMetric::Constant(g), x, y, boundary, opts, Method::Frozen)?
        }
    };
    Ok(finalize(result))
}

fn finalize(mut r: ExitAsymptotics) -> ExitAsymptotics {
    let scale = 1e-9 * r.d_xy.powi(2).max(1e-12);
    if r.flag == ExitFlag::Regular && r.j <= scale {
        r.flag = ExitFlag::GeodesicExits;
    }
    if r.flag != ExitFlag::Regular {
        r.j = 0.0;
    }
    r.j = r.j.max(0.0);
    r
}

fn on_boundary(normal: &Point, offset: f64, x: &Point, y: &Point, d_xy: f64, method: Method) -> ExitAsymptotics {
    let x_on = (offset - normal.dot(x)).abs() <= (offset - normal.dot(y)).abs();
    let (z_star, u_bar, d_xz, d_zy) = if x_on {
        (x.clone(), 0.0, 0.0, d_xy)
    } else {
        (y.clone(), 1.0, d_xy, 0.0)
    };
    ExitAsymptotics {
        j: 0.0,
        z_star,
        u_bar,
        d_xy,
        d_xz,
        d_zy,
        method,
        flag: ExitFlag::EndpointOnBoundary,
    }
}

/// Reflection of `y` across the hyperplane in the constant metric `g`.
fn mahalanobis_reflection(
    g: &DMatrix<f64>,
    normal: &Point,
    offset: f64,
    x: &Point,
    y: &Point,
    method: Method,
) -> ExitAsymptotics {
    let gap_x = offset - normal.dot(x);
    let gap_y = offset - normal.dot(y);
    let d_xy = mahalanobis(g, &(y - x));
    if gap_x * gap_y < 0.0 {
        // the chord itself crosses
        let lambda = gap_x / (gap_x - gap_y);
        let z = x + (y - x) * lambda;
        return ExitAsymptotics {
            j: 0.0,
            z_star: z,
            u_bar: lambda,
            d_xy,
            d_xz: lambda * d_xy,
            d_zy: (1.0 - lambda) * d_xy,
            method,
            flag: ExitFlag::GeodesicExits,
        };
    }
    let cov = g.clone().cholesky().map(|c| c.inverse()).unwrap_or_else(|| g.clone());
    let a_n = &cov * normal;
    let n_a_n = normal.dot(&a_n);
    let mirrored = y + &a_n * (2.0 * gap_y / n_a_n);
    let total = mahalanobis(g, &(&mirrored - x));
    let lambda = gap_x / (gap_x + gap_y);
    let mut z = x + (&mirrored - x) * lambda;
    // put z exactly on the plane
    z += &a_n * ((offset - normal.dot(&z)) / n_a_n);
    let (d_xz, d_zy) = (lambda * total, (1.0 - lambda) * total);
    ExitAsymptotics {
        j: 2.0 * gap_x * gap_y / n_a_n,
        z_star: z,
        u_bar: lambda,
        d_xy,
        d_xz,
        d_zy,
        method,
        flag: ExitFlag::Regular,
    }
}

/// Straight barrier under a Hull-White model.
fn hull_white_line(
    sigma_vol: f64,
    rho: f64,
    normal: &Point,
    offset: f64,
    x: &Point,
    y: &Point,
    opts: &ExitOptions,
) -> Result<ExitAsymptotics> {
    let (xh, yh) = (HalfPlanePoint::from_point(x)?, HalfPlanePoint::from_point(y)?);
    let d_xy = hyperbolic::hw_distance(sigma_vol, rho, xh, yh)?;
    let vertical = normal[1] == 0.0;
    let straddle = (offset - normal.dot(x)) * (offset - normal.dot(y)) < 0.0;
    if vertical && rho == 0.0 && !straddle {
        // the barrier stays vertical in half-plane coordinates: reflect
        let (xa, ya) = (
            hyperbolic::hw_apply(sigma_vol, rho, xh)?,
            hyperbolic::hw_apply(sigma_vol, rho, yh)?,
        );
        let x0 = offset / normal[0];
        let inf = hyperbolic::barrier_infimum_vertical(xa, ya, x0)?;
        let z = hyperbolic::hw_unapply(sigma_vol, rho, inf.z_star)?;
        let d_xz = hyperbolic::poincare_distance(xa, inf.z_star) / sigma_vol;
        let d_zy = hyperbolic::poincare_distance(inf.z_star, ya) / sigma_vol;
        let total = inf.path_sum / sigma_vol;
        return Ok(ExitAsymptotics {
            j: 0.5 * (total * total - d_xy * d_xy),
            z_star: z.to_point(),
            u_bar: optimal_crossing_time(d_xz, d_zy)?,
            d_xy,
            d_xz,
            d_zy,
            method: Method::ClosedForm,
            flag: ExitFlag::Regular,
        });
    }

    // 1-d search along the line with closed-form distances
    let (n0, n1) = (normal[0], normal[1]);
    let param: Box<dyn Fn(f64) -> Point> = if n0 != 0.0 {
        // v = v_ref e^θ, xi from the line equation
        let v_ref = (x[1] * y[1]).sqrt();
        Box::new(move |th: f64| {
            let v = v_ref * th.exp();
            DVector::from_vec(vec![(offset - n1 * v) / n0, v])
        })
    } else {
        let v = offset / n1;
        let xi_mid = 0.5 * (x[0] + y[0]);
        let scale = v.abs().max(1e-12);
        Box::new(move |th: f64| DVector::from_vec(vec![xi_mid + scale * th.sinh(), v]))
    };
    let evaluate = |th: f64| -> Option<(f64, f64)> {
        let z = HalfPlanePoint::from_point(&param(th)).ok()?;
        let d_xz = hyperbolic::hw_distance(sigma_vol, rho, xh, z).ok()?;
        let d_zy = hyperbolic::hw_distance(sigma_vol, rho, z, yh).ok()?;
        Some((d_xz, d_zy))
    };
    let objective = |th: f64| evaluate(th).map_or(f64::INFINITY, |(a, b)| cost(a, b, d_xy));
    let best = search::grid_then_golden(objective, -12.0, 12.0, opts.boundary_samples, opts.golden_tol)
        .ok_or(Error::InvalidArgument("barrier does not meet the state space".into()))?;
    let (d_xz, d_zy) = evaluate(best.arg).expect("finite at minimum");
    Ok(ExitAsymptotics {
        j: cost(d_xz, d_zy, d_xy),
        z_star: param(best.arg),
        u_bar: optimal_crossing_time(d_xz, d_zy)?,
        d_xy,
        d_xz,
        d_zy,
        method: Method::Numeric1d,
        flag: if straddle {
            ExitFlag::GeodesicExits
        } else {
            ExitFlag::Regular
        },
    })
}

type CurveMap = Arc<dyn Fn(f64) -> Point + Send + Sync>;

/// Boundary parametrization used by the scans: `(θ range, θ ↦ z)`.
fn scan_parametrization(
    boundary: &Boundary,
    x: &Point,
    y: &Point,
    d_xy: f64,
    opts: &ExitOptions,
) -> Result<((f64, f64, usize), CurveMap)> {
    match boundary {
        Boundary::ParametricCurve(c) => Ok(((c.theta_min, c.theta_max, c.samples), Arc::clone(&c.map))),
        _ => {
            let (normal, offset) = boundary.as_hyperplane(x).expect("straight boundary");
            if normal.len() != 2 {
                return Err(Error::InvalidArgument(
                    "numerical scan of a hyperplane is only available in dimension 2".into(),
                ));
            }
            let mid = (x + y) * 0.5;
            let center = &mid + &normal * (offset - normal.dot(&mid));
            let tangent = DVector::from_vec(vec![-normal[1], normal[0]]);
            let radius = opts.truncation_factor * d_xy.max(f64::MIN_POSITIVE);
            Ok((
                (-radius, radius, opts.boundary_samples),
                Arc::new(move |th: f64| &center + &tangent * th),
            ))
        }
    }
}

/// Grid-then-golden scan with closed-form distances.
fn closed_scan(
    model: &DiffusionModel,
    metric: &ClosedMetric,
    x: &Point,
    y: &Point,
    boundary: &Boundary,
    opts: &ExitOptions,
    method: Method,
) -> Result<ExitAsymptotics> {
    let d_xy = metric.distance(x, y)?;
    let ((lo, hi, m), map) = scan_parametrization(boundary, x, y, d_xy, opts)?;
    let evaluate = |th: f64| -> Option<(f64, f64)> {
        let z = map(th);
        if !model.contains(z.as_slice()) {
            return None;
        }
        Some((metric.distance(x, &z).ok()?, metric.distance(&z, y).ok()?))
    };
    let objective = |th: f64| evaluate(th).map_or(f64::INFINITY, |(a, b)| cost(a, b, d_xy));
    let best = search::grid_then_golden(objective, lo, hi, m, opts.golden_tol)
        .ok_or(Error::InvalidArgument("boundary does not meet the state space".into()))?;
    let (d_xz, d_zy) = evaluate(best.arg).expect("finite at minimum");
    Ok(ExitAsymptotics {
        j: cost(d_xz, d_zy, d_xy),
        z_star: map(best.arg),
        u_bar: optimal_crossing_time(d_xz, d_zy)?,
        d_xy,
        d_xz,
        d_zy,
        method,
        flag: ExitFlag::Regular,
    })
}

/// Geodesics from `x` to `z` and from `z` to `y` for one boundary sample.
type SamplePair = (GeodesicSolution, GeodesicSolution);

/// Shifts `path` so that its end moves from `old_end` to `new_end`, linearly in `s`.
fn shift_end(path: &DiscretePath, new_end: &Point) -> Option<DiscretePath> {
    let n = path.segments() as f64;
    let delta = new_end - path.end();
    DiscretePath::new(
        path.points()
            .iter()
            .enumerate()
            .map(|(i, p)| p + &delta * (i as f64 / n))
            .collect(),
    )
    .ok()
}

fn shift_start(path: &DiscretePath, new_start: &Point) -> Option<DiscretePath> {
    let n = path.segments() as f64;
    let delta = new_start - path.start();
    DiscretePath::new(
        path.points()
            .iter()
            .enumerate()
            .map(|(i, p)| p + &delta * (1.0 - i as f64 / n))
            .collect(),
    )
    .ok()
}

/// Solves both legs through `z`, warm-starting from `warm` when possible.
fn solve_pair(
    model: &DiffusionModel,
    x: &Point,
    y: &Point,
    z: &Point,
    warm: Option<&SamplePair>,
    solver: &SolverOptions,
) -> Result<SamplePair> {
    let contained = |p: &DiscretePath| p.points().iter().all(|q| model.contains(q.as_slice()));
    let first = match warm.and_then(|w| shift_end(&w.0.path, z)).filter(contained) {
        Some(init) => geodesic::minimize_from(model, &init, solver),
        None => geodesic::geodesic_between(model, x, z, solver),
    }?;
    let second = match warm.and_then(|w| shift_start(&w.1.path, z)).filter(contained) {
        Some(init) => geodesic::minimize_from(model, &init, solver),
        None => geodesic::geodesic_between(model, z, y, solver),
    }?;
    Ok((first, second))
}

const SCAN_CHUNK: usize = 16;

/// Boundary scan with numerical geodesic distances.
fn geodesic_scan(
    model: &DiffusionModel,
    x: &Point,
    y: &Point,
    boundary: &Boundary,
    opts: &ExitOptions,
) -> Result<ExitAsymptotics> {
    if model.dim() < 2 && !matches!(boundary, Boundary::ParametricCurve(_)) {
        return Err(Error::InvalidArgument("numerical scan needs dimension 2".into()));
    }
    let solver = &opts.solver;
    let d_xy = geodesic::distance(model, x, y, solver)?;
    let ((lo, hi, m), map) = scan_parametrization(boundary, x, y, d_xy, opts)?;
    let thetas = linspace(lo, hi, m.max(2));

    // fixed chunking keeps warm starts, and therefore results, independent of the worker count
    let run_chunk = |chunk: &[f64]| -> Vec<Option<SamplePair>> {
        let mut warm: Option<SamplePair> = None;
        chunk
            .iter()
            .map(|&th| {
                let z = map(th);
                if !model.contains(z.as_slice()) {
                    return None;
                }
                match solve_pair(model, x, y, &z, warm.as_ref(), solver) {
                    Ok(pair) => {
                        warm = Some(pair.clone());
                        Some(pair)
                    }
                    Err(_) => None,
                }
            })
            .collect()
    };
    let chunks: Vec<&[f64]> = thetas.chunks(SCAN_CHUNK).collect();
    let samples: Vec<Option<SamplePair>> = if opts.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| chunks.par_iter().map(|c| run_chunk(c)).collect::<Vec<_>>())
            .into_iter()
            .flatten()
            .collect()
    } else {
        chunks.iter().flat_map(|c| run_chunk(c)).collect()
    };
    let values: Vec<f64> = samples
        .iter()
        .map(|s| s.as_ref().map_or(f64::INFINITY, |(a, b)| cost(a.distance, b.distance, d_xy)))
        .collect();

    let best_idx = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or(Error::InvalidArgument("no boundary sample admits a geodesic".into()))?;

    let mut warm = samples[best_idx].clone();
    let mut best_pair = warm.clone().expect("finite sample");
    let mut best_theta = thetas[best_idx];
    let mut best_value = values[best_idx];
    let a = thetas[best_idx.saturating_sub(1)];
    let b = thetas[(best_idx + 1).min(thetas.len() - 1)];
    let _ = golden_section(
        |th| {
            let z = map(th);
            if !model.contains(z.as_slice()) {
                return f64::INFINITY;
            }
            match solve_pair(model, x, y, &z, warm.as_ref(), solver) {
                Ok(pair) => {
                    let v = cost(pair.0.distance, pair.1.distance, d_xy);
                    if v < best_value || (v == best_value && th < best_theta) {
                        best_value = v;
                        best_theta = th;
                        best_pair = pair.clone();
                    }
                    warm = Some(pair);
                    v
                }
                Err(_) => f64::INFINITY,
            }
        },
        a,
        b,
        opts.golden_tol,
    );
    let (d_xz, d_zy) = (best_pair.0.distance, best_pair.1.distance);
    Ok(ExitAsymptotics {
        j: cost(d_xz, d_zy, d_xy),
        z_star: map(best_theta),
        u_bar: optimal_crossing_time(d_xz, d_zy)?,
        d_xy,
        d_xz,
        d_zy,
        method: Method::NumericGeodesic,
        flag: ExitFlag::Regular,
    })
}

/// One row of [`compare_freezing`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub result: ExitAsymptotics,
    /// `(t, exp(-J/t))` for each requested horizon.
    pub probabilities: Vec<(f64, f64)>,
}

/// True exponent followed by the frozen-coefficient exponents at each point.
pub fn compare_freezing(
    model: &DiffusionModel,
    x: &Point,
    y: &Point,
    boundary: &Boundary,
    freeze_points: &[Point],
    t_list: &[f64],
    opts: &ExitOptions,
) -> Result<Vec<ComparisonRow>> {
    let row = |label: String, result: ExitAsymptotics| ComparisonRow {
        probabilities: t_list
            .iter()
            .map(|&t| (t, exit_probability_equivalent(result.j, t)))
            .collect(),
        label,
        result,
    };
    let mut rows = vec![row("true".into(), exit_asymptotics(model, x, y, boundary, opts)?)];
    for z0 in freeze_points {
        let label = format!("frozen@({})", z0.iter().map(|v| sig12(*v)).collect::<Vec<_>>().join(";"));
        rows.push(row(label, frozen_exit_asymptotics(model, x, y, boundary, z0, opts)?));
    }
    Ok(rows)
}

/// CSV `label,J,z_star_0..,u_bar,d_xy,d_xz,d_zy,method,flag,p_t=..` with 12 significant digits.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let dim = rows.first().map_or(0, |r| r.result.z_star.len());
    let mut header = vec!["label".to_string(), "J".to_string()];
    header.extend((0..dim).map(|k| format!("z_star_{k}")));
    header.extend(["u_bar", "d_xy", "d_xz", "d_zy", "method", "flag"].map(String::from));
    if let Some(r) = rows.first() {
        header.extend(r.probabilities.iter().map(|(t, _)| format!("p_t={}", sig12(*t))));
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let e = &r.result;
        let mut fields = vec![r.label.clone(), sig12(e.j)];
        fields.extend(e.z_star.iter().map(|v| sig12(*v)));
        fields.extend([e.u_bar, e.d_xy, e.d_xz, e.d_zy].map(sig12));
        fields.push(e.method.as_str().into());
        fields.push(e.flag.as_str().into());
        fields.extend(r.probabilities.iter().map(|(_, p)| sig12(*p)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Parses the output of [`comparison_csv`].
pub fn parse_comparison_csv(text: &str) -> Result<Vec<ComparisonRow>> {
    let bad = |msg: &str| Error::InvalidArgument(format!("exit CSV: {msg}"));
    let mut lines = text.lines().filter(|l| !l.is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty"))?.split(',').collect();
    let dim = header.iter().filter(|h| h.starts_with("z_star_")).count();
    let ts: Vec<f64> = header
        .iter()
        .filter_map(|h| h.strip_prefix("p_t="))
        .map(|t| t.parse::<f64>().map_err(|_| bad("bad horizon")))
        .collect::<Result<_>>()?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number {s:?}")));
    let mut rows = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(bad("field count mismatch"));
        }
        let z: Vec<f64> = f[2..2 + dim].iter().map(|s| num(s)).collect::<Result<_>>()?;
        let k = 2 + dim;
        rows.push(ComparisonRow {
            label: f[0].to_string(),
            result: ExitAsymptotics {
                j: num(f[1])?,
                z_star: DVector::from_vec(z),
                u_bar: num(f[k])?,
                d_xy: num(f[k + 1])?,
                d_xz: num(f[k + 2])?,
                d_zy: num(f[k + 3])?,
                method: Method::parse(f[k + 4]).ok_or_else(|| bad("method"))?,
                flag: ExitFlag::parse(f[k + 5]).ok_or_else(|| bad("flag"))?,
            },
            probabilities: ts
                .iter()
                .zip(&f[k + 6..])
                .map(|(t, p)| Ok((*t, num(p)?)))
                .collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}
