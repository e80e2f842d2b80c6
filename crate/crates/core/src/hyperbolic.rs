//! Closed-form geometry of the Poincare half-plane `{(x, y) : y > 0}` with
//! metric `(dx^2 + dy^2) / y^2`, and its use for Hull-White models.
//!
//! The Hull-White metric with vol-of-vol `sigma` and correlation `rho` is
//!
//! ```text
//! G(xi, v) = 1 / (v^2 sigma^2 (1 - rho^2)) · [[sigma^2, -sigma rho], [-sigma rho, 1]]
//! ```
//!
//! The linear map `A = [[1/rho_bar, -rho/(sigma rho_bar)], [0, 1/sigma]]`,
//! `rho_bar = sqrt(1 - rho^2)`, pulls the Poincare metric back to
//! `sigma^2 · G`. Distances therefore satisfy
//!
//! ```text
//! d_G(p, q) = (1/sigma) · d_H(A p, A q)
//! ```
//!
//! and geodesics are pullbacks of half-plane geodesics (circles centred on the
//! axis become the ellipses `((x - rho y/sigma)/rho_bar - alpha)^2 + (y/sigma)^2 = R^2`).

use nalgebra::{DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::geodesic::DiscretePath;
use crate::model::Point;

/// A point of the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlanePoint {
    pub x: f64,
    pub y: f64,
}

impl HalfPlanePoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && y > 0.0) {
            return Err(Error::OutsideDomain(vec![x, y]));
        }
        Ok(Self { x, y })
    }

    pub fn from_point(p: &Point) -> Result<Self> {
        if p.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: p.len(),
            });
        }
        Self::new(p[0], p[1])
    }

    pub fn to_point(self) -> Point {
        DVector::from_vec(vec![self.x, self.y])
    }

    fn vec(self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// `acosh(1 + u)` without cancellation for small `u`.
fn acosh1p(u: f64) -> f64 {
    if u < 1e-8 {
        // acosh(1 + u) = sqrt(2u) (1 - u/12 + O(u^2))
        (2.0 * u).sqrt() * (1.0 - u / 12.0)
    } else {
        (u + (u * (u + 2.0)).sqrt()).ln_1p()
    }
}

/// Hyperbolic distance `acosh(1 + |p - q|^2 / (2 p.y q.y))`.
pub fn poincare_distance(p: HalfPlanePoint, q: HalfPlanePoint) -> f64 {
    let dx = q.x - p.x;
    let dy = q.y - p.y;
    acosh1p((dx * dx + dy * dy) / (2.0 * p.y * q.y))
}

/// A half-plane geodesic through two points.
///
/// Circles are parametrized as `(center_x + radius cos θ, radius sin θ)` with
/// `θ` in `(0, π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeodesicArc {
    Circle {
        center_x: f64,
        radius: f64,
        theta_start: f64,
        theta_end: f64,
    },
    Vertical {
        x: f64,
        y_start: f64,
        y_end: f64,
    },
}

impl GeodesicArc {
    /// Whether `p` lies on the supporting circle or line, to relative 1e-9.
    pub fn passes_through(&self, p: HalfPlanePoint) -> bool {
        match *self {
            GeodesicArc::Circle {
                center_x, radius, ..
            } => ((p.x - center_x).hypot(p.y) - radius).abs() <= 1e-9 * radius.max(1.0),
            GeodesicArc::Vertical { x, .. } => (p.x - x).abs() <= 1e-9 * x.abs().max(1.0),
        }
    }

    /// Height of the arc's supporting geodesic above abscissa `x0`, if it reaches it.
    pub fn height_at(&self, x0: f64) -> Option<f64> {
        match *self {
            GeodesicArc::Circle {
                center_x, radius, ..
            } => {
                let h2 = radius * radius - (x0 - center_x).powi(2);
                (h2 > 0.0).then(|| h2.sqrt())
            }
            GeodesicArc::Vertical { .. } => None,
        }
    }

    /// CSV with header `kind,center_x,radius` or `kind,x`.
    pub fn to_csv(&self) -> String {
        match *self {
            GeodesicArc::Circle {
                center_x, radius, ..
            } => format!("kind,center_x,radius\ncircle,{},{}\n", sig12(center_x), sig12(radius)),
            GeodesicArc::Vertical { x, .. } => format!("kind,x\nvertical,{}\n", sig12(x)),
        }
    }
}

/// The geodesic through `p` and `q`: a vertical line when they share an
/// abscissa, otherwise the circle centred on the axis equidistant from both.
pub fn geodesic_arc(p: HalfPlanePoint, q: HalfPlanePoint) -> Result<GeodesicArc> {
    if p == q {
        return Err(Error::CoincidentPoints);
    }
    let scale = p.x.abs().max(q.x.abs()).max(1.0);
    if (q.x - p.x).abs() <= 1e-14 * scale {
        return Ok(GeodesicArc::Vertical {
            x: p.x,
            y_start: p.y,
            y_end: q.y,
        });
    }
    let center_x = (q.x * q.x + q.y * q.y - p.x * p.x - p.y * p.y) / (2.0 * (q.x - p.x));
    let radius = (p.x - center_x).hypot(p.y);
    Ok(GeodesicArc::Circle {
        center_x,
        radius,
        theta_start: p.y.atan2(p.x - center_x),
        theta_end: q.y.atan2(q.x - center_x),
    })
}

/// `n + 1` points from `p` to `q` along `arc`, equally spaced in hyperbolic arclength.
pub fn sample_arc(arc: &GeodesicArc, p: HalfPlanePoint, q: HalfPlanePoint, n: usize) -> Result<DiscretePath> {
    if !arc.passes_through(p) || !arc.passes_through(q) {
        return Err(Error::PointNotOnArc);
    }
    let mut path = match *arc {
        GeodesicArc::Circle {
            center_x, radius, ..
        } => {
            // hyperbolic arclength along the circle is ln tan(θ/2)
            let a = (p.y.atan2(p.x - center_x) / 2.0).tan().ln();
            let b = (q.y.atan2(q.x - center_x) / 2.0).tan().ln();
            DiscretePath::from_fn(n, |s| {
                let theta = 2.0 * (a + (b - a) * s).exp().atan();
                DVector::from_vec(vec![center_x + radius * theta.cos(), radius * theta.sin()])
            })?
        }
        GeodesicArc::Vertical { x, .. } => {
            let (a, b) = (p.y.ln(), q.y.ln());
            DiscretePath::from_fn(n, |s| DVector::from_vec(vec![x, (a + (b - a) * s).exp()]))?
        }
    };
    let mut points = path.points().to_vec();
    points[0] = p.to_point();
    points[n] = q.to_point();
    path = DiscretePath::new(points)?;
    Ok(path)
}

/// Mirror image across the vertical line `x = x0` (a half-plane isometry).
pub fn reflect_across_vertical(p: HalfPlanePoint, x0: f64) -> HalfPlanePoint {
    HalfPlanePoint {
        x: 2.0 * x0 - p.x,
        y: p.y,
    }
}

/// Minimizer of `d(x, z) + d(z, y)` over the vertical line `x = x0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierInfimum {
    pub z_star: HalfPlanePoint,
    pub path_sum: f64,
}

/// Closed-form minimum of `d(x, z) + d(z, y)` over `z` on `{x = x0}` for two
/// points strictly on the same side: reflect `y`, join by the geodesic, and
/// intersect with the line.
pub fn barrier_infimum_vertical(x: HalfPlanePoint, y: HalfPlanePoint, x0: f64) -> Result<BarrierInfimum> {
    let (sx, sy) = (x.x - x0, y.x - x0);
    if !(sx * sy > 0.0) {
        return Err(Error::EndpointsStraddleBarrier);
    }
    let mirrored = reflect_across_vertical(y, x0);
    let arc = geodesic_arc(x, mirrored)?;
    let h = arc.height_at(x0).ok_or(Error::PointNotOnArc)?;
    Ok(BarrierInfimum {
        z_star: HalfPlanePoint { x: x0, y: h },
        path_sum: poincare_distance(x, mirrored),
    })
}

fn check_hw(sigma_vol: f64, rho: f64) -> Result<()> {
    if !(sigma_vol > 0.0 && sigma_vol.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma_vol must be positive, got {sigma_vol}")));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::DegenerateCorrelation(rho));
    }
    Ok(())
}

/// The map `A` taking the Hull-White metric to (a multiple of) the Poincare metric.
pub fn hw_transform(sigma_vol: f64, rho: f64) -> Result<Matrix2<f64>> {
    check_hw(sigma_vol, rho)?;
    let rho_bar = (1.0 - rho * rho).sqrt();
    Ok(Matrix2::new(
        1.0 / rho_bar,
        -rho / (sigma_vol * rho_bar),
        0.0,
        1.0 / sigma_vol,
    ))
}

/// `A p` for a state-space point `p = (xi, v)`.
pub fn hw_apply(sigma_vol: f64, rho: f64, p: HalfPlanePoint) -> Result<HalfPlanePoint> {
    let w = hw_transform(sigma_vol, rho)? * p.vec();
    Ok(HalfPlanePoint { x: w[0], y: w[1] })
}

/// `A^{-1} w`, back to state-space coordinates.
pub fn hw_unapply(sigma_vol: f64, rho: f64, w: HalfPlanePoint) -> Result<HalfPlanePoint> {
    check_hw(sigma_vol, rho)?;
    let rho_bar = (1.0 - rho * rho).sqrt();
    let v = sigma_vol * w.y;
    Ok(HalfPlanePoint {
        x: rho_bar * w.x + rho * w.y,
        y: v,
    })
}

/// Riemannian distance of the Hull-White metric, `(1/sigma) d_H(A p, A q)`.
pub fn hw_distance(sigma_vol: f64, rho: f64, p: HalfPlanePoint, q: HalfPlanePoint) -> Result<f64> {
    let (pa, qa) = (hw_apply(sigma_vol, rho, p)?, hw_apply(sigma_vol, rho, q)?);
    Ok(poincare_distance(pa, qa) / sigma_vol)
}

/// Implicit form `((x - rho y/sigma)/rho_bar - alpha)^2 + (y/sigma)^2 = R^2` of a
/// pulled-back circular geodesic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseImage {
    pub sigma_vol: f64,
    pub rho: f64,
    pub alpha: f64,
    pub radius: f64,
}

impl EllipseImage {
    /// Left-hand side minus right-hand side of the implicit equation.
    pub fn residual(&self, p: HalfPlanePoint) -> f64 {
        let rho_bar = (1.0 - self.rho * self.rho).sqrt();
        let u = (p.x - self.rho * p.y / self.sigma_vol) / rho_bar - self.alpha;
        let w = p.y / self.sigma_vol;
        u * u + w * w - self.radius * self.radius
    }
}

/// Hull-White geodesic from `p` to `q`, obtained by pulling back the half-plane geodesic.
#[derive(Debug, Clone)]
pub struct HwGeodesicImage {
    /// Geodesic of the transformed points, in half-plane coordinates.
    pub arc: GeodesicArc,
    /// Samples in state-space coordinates, constant speed.
    pub polyline: DiscretePath,
    /// Present when the half-plane geodesic is a circle.
    pub ellipse: Option<EllipseImage>,
}

pub fn hw_geodesic_image(
    sigma_vol: f64,
    rho: f64,
    p: HalfPlanePoint,
    q: HalfPlanePoint,
    n: usize,
) -> Result<HwGeodesicImage> {
    let (pa, qa) = (hw_apply(sigma_vol, rho, p)?, hw_apply(sigma_vol, rho, q)?);
    let arc = geodesic_arc(pa, qa)?;
    let sampled = sample_arc(&arc, pa, qa, n)?;
    let mut points = sampled
        .points()
        .iter()
        .map(|w| hw_unapply(sigma_vol, rho, HalfPlanePoint { x: w[0], y: w[1] }).map(HalfPlanePoint::to_point))
        .collect::<Result<Vec<_>>>()?;
    points[0] = p.to_point();
    points[n] = q.to_point();
    let ellipse = match arc {
        GeodesicArc::Circle {
            center_x, radius, ..
        } => Some(EllipseImage {
            sigma_vol,
            rho,
            alpha: center_x,
            radius,
        }),
        GeodesicArc::Vertical { .. } => None,
    };
    Ok(HwGeodesicImage {
        arc,
        polyline: DiscretePath::new(points)?,
        ellipse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(x: f64, y: f64) -> HalfPlanePoint {
        HalfPlanePoint::new(x, y).unwrap()
    }

    #[test]
    fn distance_values() {
        assert_eq!(poincare_distance(hp(1.0, 0.2), hp(1.0, 0.2)), 0.0);
        let d = poincare_distance(hp(1.0, 0.2), hp(2.0, 0.5));
        assert!((d - 6.45f64.acosh()).abs() < 1e-14);
        assert!((d - 2.5512).abs() < 5e-5);
        let v = poincare_distance(hp(0.0, 0.3), hp(0.0, 2.1));
        assert!((v - (2.1f64 / 0.3).ln()).abs() < 1e-14);
    }

    #[test]
    fn nearby_points_keep_precision() {
        // exact value: acosh(1 + u) with u = 1e-20 / (2 * 1) → sqrt(1e-20) = 1e-10
        let d = poincare_distance(hp(0.0, 1.0), hp(1e-10, 1.0));
        assert!((d - 1e-10).abs() < 1e-24);
    }

    #[test]
    fn figure_one_arc() {
        let arc = geodesic_arc(hp(1.0, 0.2), hp(3.0, 0.5)).unwrap();
        let GeodesicArc::Circle { center_x, radius, .. } = arc else {
            panic!("expected circle")
        };
        assert!((center_x - 2.0525).abs() < 1e-12);
        assert!((radius - 1.0713).abs() < 1e-4);
        assert!(arc.passes_through(hp(1.0, 0.2)) && arc.passes_through(hp(3.0, 0.5)));
    }

    #[test]
    fn figure_two_arc() {
        let arc = geodesic_arc(hp(2.47, 0.08), hp(2.52, 0.12)).unwrap();
        let GeodesicArc::Circle { center_x, radius, .. } = arc else {
            panic!("expected circle")
        };
        assert!((center_x - 2.575).abs() < 1e-12);
        assert!((radius - 0.1320).abs() < 1e-4);
    }

    #[test]
    fn vertical_arc_and_coincident_points() {
        assert!(matches!(
            geodesic_arc(hp(0.0, 1.0), hp(0.0, 2.0)).unwrap(),
            GeodesicArc::Vertical { x, .. } if x == 0.0
        ));
        assert_eq!(geodesic_arc(hp(0.5, 1.0), hp(0.5, 1.0)), Err(Error::CoincidentPoints));
    }

    #[test]
    fn sampled_arc_properties() {
        let (p, q) = (hp(0.0, 1.0), hp(0.0, 4.0));
        let arc = geodesic_arc(p, q).unwrap();
        let path = sample_arc(&arc, p, q, 2).unwrap();
        assert!((path.points()[1][1] - 2.0).abs() < 1e-14);

        let (p, q) = (hp(1.0, 0.2), hp(2.0, 0.5));
        let arc = geodesic_arc(p, q).unwrap();
        let path = sample_arc(&arc, p, q, 64).unwrap();
        assert_eq!(path.start(), &p.to_point());
        assert_eq!(path.end(), &q.to_point());
        let pts: Vec<HalfPlanePoint> = path.points().iter().map(|v| hp(v[0], v[1])).collect();
        let steps: Vec<f64> = pts.windows(2).map(|w| poincare_distance(w[0], w[1])).collect();
        let total: f64 = steps.iter().sum();
        assert!((total - poincare_distance(p, q)).abs() < 1e-12);
        assert!(steps.iter().all(|s| (s - total / 64.0).abs() < 1e-9));
        assert_eq!(sample_arc(&arc, p, hp(2.0, 0.6), 8).unwrap_err(), Error::PointNotOnArc);
    }

    #[test]
    fn reflections() {
        assert_eq!(reflect_across_vertical(hp(2.0, 0.5), 2.5), hp(3.0, 0.5));
        let r = reflect_across_vertical(hp(2.48, 0.12), 2.5);
        assert!((r.x - 2.52).abs() < 1e-14 && r.y == 0.12);
        let p = hp(-0.3, 0.7);
        let back = reflect_across_vertical(reflect_across_vertical(p, 1.1), 1.1);
        assert!((back.x - p.x).abs() < 1e-15 && back.y == p.y);
    }

    #[test]
    fn barrier_infimum_figures() {
        let f1 = barrier_infimum_vertical(hp(1.0, 0.2), hp(2.0, 0.5), 2.5).unwrap();
        assert!((f1.z_star.y - 0.9733961).abs() < 1e-6);
        assert!((f1.path_sum - 21.45f64.acosh()).abs() < 1e-13);
        let f2 = barrier_infimum_vertical(hp(2.47, 0.08), hp(2.48, 0.12), 2.5).unwrap();
        assert!((f2.z_star.y - 0.10863).abs() < 1e-5);
        assert!((f2.path_sum - 1.2135417f64.acosh()).abs() < 1e-7);
        assert!((f2.path_sum - 0.64241).abs() < 1e-5);
        assert_eq!(
            barrier_infimum_vertical(hp(2.0, 0.1), hp(3.0, 0.1), 2.5),
            Err(Error::EndpointsStraddleBarrier)
        );
    }

    #[test]
    fn transform_cases() {
        assert_eq!(hw_transform(1.0, 0.0).unwrap(), Matrix2::identity());
        assert_eq!(hw_transform(2.0, 0.0).unwrap(), Matrix2::new(1.0, 0.0, 0.0, 0.5));
        assert_eq!(hw_transform(1.0, 1.0), Err(Error::DegenerateCorrelation(1.0)));
        let p = hp(0.3, 0.9);
        let back = hw_unapply(1.7, -0.4, hw_apply(1.7, -0.4, p).unwrap()).unwrap();
        assert!((back.x - p.x).abs() < 1e-14 && (back.y - p.y).abs() < 1e-14);
    }

    #[test]
    fn hw_distance_cases() {
        let (p, q) = (hp(1.0, 0.2), hp(2.0, 0.5));
        assert_eq!(hw_distance(1.0, 0.0, p, q).unwrap(), poincare_distance(p, q));
        let d = hw_distance(2.0, 0.0, hp(0.0, 1.0), hp(0.0, std::f64::consts::E)).unwrap();
        assert!((d - 0.5).abs() < 1e-14);
    }

    #[test]
    fn ellipse_image_is_consistent() {
        let (p, q) = (hp(0.2, 0.3), hp(1.1, 0.8));
        let img = hw_geodesic_image(1.5, 0.6, p, q, 40).unwrap();
        let e = img.ellipse.unwrap();
        for v in img.polyline.points() {
            assert!(e.residual(hp(v[0], v[1])).abs() < 1e-9);
        }
        let plain = hw_geodesic_image(1.0, 0.0, p, q, 40).unwrap();
        let arc = geodesic_arc(p, q).unwrap();
        assert_eq!(plain.arc, arc);
    }
}
