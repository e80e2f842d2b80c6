use ldbridge::exit::{self, Boundary, ExitOptions};
use ldbridge::montecarlo::{self, HwSampling, McOptions, McSource, RngSpec};
use ldbridge::{DiffusionModel, Point};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn one(v: f64) -> Point {
    DVector::from_vec(vec![v])
}

fn pt(a: f64, b: f64) -> Point {
    DVector::from_vec(vec![a, b])
}

fn unit() -> DMatrix<f64> {
    DMatrix::identity(1, 1)
}

#[test]
fn reproducible_across_worker_counts() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let b = Boundary::hyperplane(pt(0.0, -1.0), 0.0).unwrap();
    let run = |workers| {
        let opts = McOptions {
            n_paths: 50_000,
            steps: 20,
            workers,
            correction: true,
        };
        montecarlo::crossing_probability(&pt(0.0, 0.5), &pt(1.0, 0.3), 0.2, &cov, &b, &opts, RngSpec { seed: 77, stream: 3 })
            .unwrap()
    };
    let first = run(1);
    for w in 2..=8 {
        let other = run(w);
        assert_eq!(first.p_hat.to_bits(), other.p_hat.to_bits());
        assert_eq!(first, other);
    }
    let different = montecarlo::crossing_probability(
        &pt(0.0, 0.5),
        &pt(1.0, 0.3),
        0.2,
        &cov,
        &b,
        &McOptions {
            n_paths: 50_000,
            steps: 20,
            workers: 1,
            correction: true,
        },
        RngSpec { seed: 78, stream: 3 },
    )
    .unwrap();
    assert_ne!(first.p_hat, different.p_hat);
}

#[test]
fn hw_estimates_reproducible_across_worker_counts() {
    let model = DiffusionModel::hull_white_simple(0.0, 0.0);
    let run = |workers| {
        let opts = McOptions {
            n_paths: 300,
            steps: 20,
            workers,
            correction: true,
        };
        let sampling = HwSampling {
            eps: 0.02,
            max_attempts: 50_000_000,
        };
        montecarlo::hw_crossing_probability(
            &model,
            &pt(2.47, 0.08),
            &pt(2.48, 0.12),
            0.2,
            &Boundary::vertical(2.5),
            &opts,
            sampling,
            RngSpec::new(5),
        )
        .unwrap()
    };
    let first = run(1);
    for w in [2, 5, 8] {
        assert_eq!(first, run(w));
    }
}

#[test]
fn bridge_marginal_at_midpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.5]);
    let (x, y, t) = (pt(0.0, 1.0), pt(2.0, -1.0), 0.3);
    let n = 100_000;
    let mut sum = DVector::zeros(2);
    let mut sq = DMatrix::zeros(2, 2);
    for _ in 0..n {
        let path = montecarlo::sample_gaussian_bridge(&x, &y, t, &cov, 4, &mut rng).unwrap();
        let m = &path.points()[2];
        sum += m;
        sq += m * m.transpose();
    }
    let mean = &sum / n as f64;
    let second = &sq / n as f64 - &mean * mean.transpose();
    let expected_mean = (&x + &y) * 0.5;
    let expected_cov = &cov * (t * 0.25);
    for k in 0..2 {
        let se = (expected_cov[(k, k)] / n as f64).sqrt();
        assert!((mean[k] - expected_mean[k]).abs() <= 3.0 * se);
    }
    for i in 0..2 {
        for j in 0..2 {
            // standard error of a sample covariance: sqrt((s_ii s_jj + s_ij^2) / n)
            let se = ((expected_cov[(i, i)] * expected_cov[(j, j)] + expected_cov[(i, j)].powi(2)) / n as f64).sqrt();
            assert!((second[(i, j)] - expected_cov[(i, j)]).abs() <= 3.0 * se);
        }
    }
}

#[test]
fn small_time_bridges_stay_near_the_chord() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cov = unit();
    let t = 1e-3;
    let inside = (0..1000)
        .filter(|_| {
            let p = montecarlo::sample_gaussian_bridge(&one(0.0), &one(1.0), t, &cov, 100, &mut rng).unwrap();
            p.points()
                .iter()
                .enumerate()
                .all(|(i, z)| (z[0] - i as f64 / 100.0).abs() <= 5.0 * t.sqrt())
        })
        .count();
    assert!(inside >= 990, "{inside}");
}

#[test]
fn confidence_intervals_are_calibrated() {
    let cov = unit();
    let b = Boundary::vertical(0.0);
    let p = (-2.0 * 0.5 * 0.3 / 0.2f64).exp();
    let opts = McOptions {
        n_paths: 2000,
        steps: 5,
        workers: 1,
        correction: true,
    };
    let covered = (0..200)
        .filter(|&k| {
            montecarlo::crossing_probability(&one(0.5), &one(0.3), 0.2, &cov, &b, &opts, RngSpec { seed: 1000 + k, stream: 0 })
                .unwrap()
                .contains(p)
        })
        .count();
    let rate = covered as f64 / 200.0;
    assert!((0.90..=0.99).contains(&rate), "coverage {rate}");
}

#[test]
fn correction_removes_discretization_bias() {
    let cov = unit();
    let b = Boundary::vertical(0.0);
    let p = (-3.0f64).exp();
    let est = |steps, correction| {
        let opts = McOptions {
            n_paths: 200_000,
            steps,
            workers: 1,
            correction,
        };
        montecarlo::crossing_probability(&one(0.5), &one(0.3), 0.1, &cov, &b, &opts, RngSpec::new(8)).unwrap()
    };
    let (coarse, fine) = (est(50, true), est(500, true));
    assert!((coarse.p_hat - fine.p_hat).abs() <= coarse.ci_half_width + fine.ci_half_width);
    assert!((coarse.p_hat - p).abs() <= 3.0 * coarse.ci_half_width);
    // negative control: discrete monitoring alone misses crossings between nodes
    let naive = est(50, false);
    assert!(naive.p_hat + 3.0 * naive.ci_half_width < p, "naive {} vs {p}", naive.p_hat);
}

#[test]
fn ld_slope_matches_exit_exponent() {
    let cov = unit();
    let b = Boundary::hyperplane(one(-1.0), 0.0).unwrap();
    let opts = McOptions {
        n_paths: 200_000,
        steps: 20,
        workers: 2,
        correction: true,
    };
    let fit = montecarlo::ld_slope(
        &one(0.5),
        &one(0.3),
        McSource::Gaussian { cov: &cov },
        &b,
        &[0.2, 0.1, 0.05],
        &opts,
        RngSpec::new(12),
    )
    .unwrap();
    let model = DiffusionModel::constant(unit()).unwrap();
    let j = exit::exit_asymptotics(&model, &one(0.5), &one(0.3), &b, &ExitOptions::default()).unwrap().j;
    assert!((j - 0.3).abs() < 1e-14);
    let intercept = fit.intercept.unwrap();
    assert!((intercept - j).abs() <= 0.05 * j, "{intercept}");
}

#[test]
fn hw_acceptance_grows_with_eps() {
    let model = DiffusionModel::hull_white_simple(0.0, 0.0);
    let (x, y) = (pt(2.47, 0.08), pt(2.48, 0.12));
    let accepted = |eps: f64| {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        (0..400)
            .filter(|_| montecarlo::sample_hw_bridge_rejection(&model, &x, &y, 0.2, 20, eps, 1, &mut rng).is_ok())
            .count()
    };
    let rates: Vec<usize> = [0.01, 0.03, 0.1, 0.3].into_iter().map(accepted).collect();
    assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{rates:?}");
    assert!(rates[3] > rates[0]);
}

#[test]
fn hw_rejection_exponent_approaches_exit_exponent() {
    let model = DiffusionModel::hull_white_simple(0.0, 0.0);
    let (x, y) = (pt(2.47, 0.08), pt(2.48, 0.12));
    let opts = McOptions {
        n_paths: 2000,
        steps: 50,
        workers: 1,
        correction: true,
    };
    let sampling = HwSampling {
        eps: 0.01,
        max_attempts: 500_000_000,
    };
    let fit = montecarlo::ld_slope(
        &x,
        &y,
        McSource::HullWhite { model: &model, sampling },
        &Boundary::vertical(2.5),
        &[0.5, 0.2, 0.1, 0.05],
        &opts,
        RngSpec::new(1),
    )
    .unwrap();
    let p: Vec<f64> = fit.rows.iter().map(|r| r.p_hat).collect();
    assert!(p.windows(2).all(|w| w[0] > w[1]), "{p:?}");
    let last = fit.rows.last().unwrap().exponent;
    assert!((last - 0.1191).abs() <= 0.25 * 0.1191, "{last}");
}
