use ldbridge::exit::{self, Backend, Boundary, ExitOptions, Method};
use ldbridge::geodesic::{DiscretePath, SolverOptions};
use ldbridge::hyperbolic::{self, HalfPlanePoint};
use ldbridge::{DiffusionModel, Point};
use nalgebra::{DMatrix, DVector};

fn pt(a: f64, b: f64) -> Point {
    DVector::from_vec(vec![a, b])
}

fn hp(p: &Point) -> HalfPlanePoint {
    HalfPlanePoint::from_point(p).unwrap()
}

const FIGURES: [((f64, f64), (f64, f64)); 2] = [((1.0, 0.2), (2.0, 0.5)), ((2.47, 0.08), (2.48, 0.12))];

#[test]
fn geodesic_backend_reproduces_reflection() {
    let model = DiffusionModel::hull_white_simple(0.0, 0.0);
    let b = Boundary::vertical(2.5);
    for (x, y) in FIGURES {
        let (x, y) = (pt(x.0, x.1), pt(y.0, y.1));
        let closed = exit::exit_asymptotics(&model, &x, &y, &b, &ExitOptions::default()).unwrap();
        let opts = ExitOptions {
            backend: Backend::Geodesic,
            ..Default::default()
        };
        let numeric = exit::exit_asymptotics(&model, &x, &y, &b, &opts).unwrap();
        assert_eq!(closed.method, Method::ClosedForm);
        assert_eq!(numeric.method, Method::NumericGeodesic);
        assert!((numeric.j - closed.j).abs() <= 1e-3 * closed.j, "{} vs {}", numeric.j, closed.j);
        assert!((&numeric.z_star - &closed.z_star).norm() <= 1e-2);
    }
}

#[test]
fn geodesic_backend_is_symmetric() {
    let model = DiffusionModel::hull_white_simple(0.0, 0.0);
    let opts = ExitOptions {
        backend: Backend::Geodesic,
        ..Default::default()
    };
    let (x, y) = (pt(2.47, 0.08), pt(2.48, 0.12));
    let b = Boundary::vertical(2.5);
    let a = exit::exit_asymptotics(&model, &x, &y, &b, &opts).unwrap();
    let c = exit::exit_asymptotics(&model, &y, &x, &b, &opts).unwrap();
    assert!((a.j - c.j).abs() <= 1e-4 * a.j);
}

#[test]
fn geodesic_scan_independent_of_workers() {
    let model = DiffusionModel::hull_white_simple(0.0, 0.0);
    let (x, y) = (pt(2.47, 0.08), pt(2.48, 0.12));
    let run = |workers| {
        let opts = ExitOptions {
            backend: Backend::Geodesic,
            workers,
            boundary_samples: 64,
            ..Default::default()
        };
        exit::exit_asymptotics(&model, &x, &y, &Boundary::vertical(2.5), &opts).unwrap()
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn correlated_line_search_matches_geodesic_scan() {
    let model = DiffusionModel::hull_white(0.0, 0.0, 1.5, -0.4).unwrap();
    let (x, y) = (pt(1.0, 0.3), pt(2.0, 0.5));
    let b = Boundary::vertical(2.5);
    let line = exit::exit_asymptotics(&model, &x, &y, &b, &ExitOptions::default()).unwrap();
    assert_eq!(line.method, Method::Numeric1d);
    let opts = ExitOptions {
        backend: Backend::Geodesic,
        ..Default::default()
    };
    let scan = exit::exit_asymptotics(&model, &x, &y, &b, &opts).unwrap();
    assert!((scan.j - line.j).abs() <= 1e-3 * line.j, "{} vs {}", scan.j, line.j);
}

#[test]
fn uncorrelated_scaled_model_uses_reflection() {
    // rho = 0 keeps the barrier vertical after the transform
    let model = DiffusionModel::hull_white(0.0, 0.0, 2.0, 0.0).unwrap();
    let (x, y) = (pt(1.0, 0.2), pt(2.0, 0.5));
    let b = Boundary::vertical(2.5);
    let closed = exit::exit_asymptotics(&model, &x, &y, &b, &ExitOptions::default()).unwrap();
    assert_eq!(closed.method, Method::ClosedForm);
    let opts = ExitOptions {
        backend: Backend::Geodesic,
        ..Default::default()
    };
    let scan = exit::exit_asymptotics(&model, &x, &y, &b, &opts).unwrap();
    assert!((scan.j - closed.j).abs() <= 1e-3 * closed.j);
}

#[test]
fn circle_boundary_with_closed_form_distances() {
    let model = DiffusionModel::identity(2);
    // unit circle centred at the origin; D is the disc
    let b = Boundary::circle([0.0, 0.0], 1.0, 256);
    let (x, y) = (pt(0.5, 0.0), pt(0.5, 0.0));
    let r = exit::exit_asymptotics(&model, &x, &y, &b, &ExitOptions::default()).unwrap();
    // nearest boundary point (1, 0): J = 1/2 (2 * 0.5)^2
    assert!((r.j - 0.5).abs() < 1e-12, "{}", r.j);
    assert!((&r.z_star - pt(1.0, 0.0)).norm() < 1e-6);
    assert_eq!(r.method, Method::Numeric1d);
}

#[test]
fn grid_model_matches_constant_model() {
    use ldbridge::model::SigmaGrid;
    let s = [1.0, 0.0, 0.3, 0.8];
    let grid = SigmaGrid::new(vec![-1.0, 1.0], vec![-1.0, 1.0], vec![s; 4]).unwrap();
    let grid_model = DiffusionModel::from_sigma_grid(grid, true);
    let constant = DiffusionModel::constant(DMatrix::from_row_slice(2, 2, &s)).unwrap();
    let (x, y) = (pt(-0.5, 0.0), pt(0.0, 0.4));
    let b = Boundary::hyperplane(pt(1.0, 0.0), 0.3).unwrap();
    let exact = exit::exit_asymptotics(&constant, &x, &y, &b, &ExitOptions::default()).unwrap();
    let numeric = exit::exit_asymptotics(&grid_model, &x, &y, &b, &ExitOptions::default()).unwrap();
    assert_eq!(numeric.method, Method::NumericGeodesic);
    assert!((numeric.j - exact.j).abs() <= 1e-3 * exact.j, "{} vs {}", numeric.j, exact.j);
}

#[test]
fn bridge_rate_of_geodesic_is_zero() {
    let model = DiffusionModel::hull_white_simple(0.0, 0.0);
    let (x, y) = (pt(1.0, 0.2), pt(2.0, 0.5));
    let img = hyperbolic::hw_geodesic_image(1.0, 0.0, hp(&x), hp(&y), 400).unwrap();
    let rate = exit::bridge_rate(&model, &img.polyline, &x, &y, &SolverOptions::default()).unwrap();
    assert!(rate.abs() < 1e-4, "{rate}");
    let elsewhere = DiscretePath::chord(&x, &pt(2.0, 0.6), 10).unwrap();
    assert_eq!(
        exit::bridge_rate(&model, &elsewhere, &x, &y, &SolverOptions::default()).unwrap(),
        f64::INFINITY
    );
}

#[test]
fn bridge_rate_through_crossing_point_equals_exit_cost() {
    let model = DiffusionModel::hull_white_simple(0.0, 0.0);
    let (x, y) = (pt(2.47, 0.08), pt(2.48, 0.12));
    let z = pt(2.5, 0.10862780491200326);
    let (dxz, dzy) = (
        hyperbolic::poincare_distance(hp(&x), hp(&z)),
        hyperbolic::poincare_distance(hp(&z), hp(&y)),
    );
    let u = exit::optimal_crossing_time(dxz, dzy).unwrap();
    // both arcs at constant speed, meeting z at time u
    let n = 2000;
    let k = (u * n as f64).round() as usize;
    let first = hyperbolic::hw_geodesic_image(1.0, 0.0, hp(&x), hp(&z), k).unwrap().polyline;
    let second = hyperbolic::hw_geodesic_image(1.0, 0.0, hp(&z), hp(&y), n - k).unwrap().polyline;
    let path = first.concat(&second).unwrap();
    let rate = exit::bridge_rate(&model, &path, &x, &y, &SolverOptions::default()).unwrap();
    assert!((rate - 0.1191).abs() < 1e-3, "{rate}");
    let cost = exit::pointwise_exit_cost(&model, &x, &y, &z, &SolverOptions::default()).unwrap();
    assert!((rate - cost).abs() < 1e-3);
}

#[test]
fn figure_two_crossing_time_matches_grid() {
    let (x, y, z) = (hp(&pt(2.47, 0.08)), hp(&pt(2.48, 0.12)), hp(&pt(2.5, 0.10863)));
    let (dxz, dzy, dxy) = (
        hyperbolic::poincare_distance(x, z),
        hyperbolic::poincare_distance(z, y),
        hyperbolic::poincare_distance(x, y),
    );
    let u = exit::optimal_crossing_time(dxz, dzy).unwrap();
    assert!(u > 0.0 && u < 1.0);
    let arg = (1..10_000)
        .map(|k| k as f64 / 10_000.0)
        .min_by(|a, b| {
            exit::time_profile(*a, dxz, dzy, dxy).total_cmp(&exit::time_profile(*b, dxz, dzy, dxy))
        })
        .unwrap();
    assert!((arg - u).abs() <= 1e-4);
}

#[test]
fn pointwise_cost_at_figure_one_optimum() {
    let model = DiffusionModel::hull_white_simple(0.0, 0.0);
    let c = exit::pointwise_exit_cost(&model, &pt(1.0, 0.2), &pt(2.0, 0.5), &pt(2.5, 0.97340), &SolverOptions::default())
        .unwrap();
    assert!((c - 3.808).abs() < 1e-3);
}

#[test]
fn identity_hyperplane_cost_is_twice_gap_product() {
    let model = DiffusionModel::identity(2);
    let (x, y) = (pt(0.0, 0.5), pt(1.0, 0.3));
    let z = pt(0.5 / 0.8, 0.0);
    let c = exit::pointwise_exit_cost(&model, &x, &y, &z, &SolverOptions::default()).unwrap();
    assert!((c - 0.3).abs() < 1e-12);
}
