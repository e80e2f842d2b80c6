//! One-dimensional minimization: grid scan followed by golden-section refinement.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimum found by [`golden_section`] or [`grid_then_golden`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub arg: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`, stopping when the
/// bracket is narrower than `tol`. Non-finite values count as `+inf`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Minimum {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut eval = |t: f64| {
        let v = f(t);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    let mut evaluations = 2;
    while (b - a) > tol {
        // ties move toward the smaller argument
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
        }
        evaluations += 1;
        if evaluations > 400 {
            break;
        }
    }
    let (arg, value) = if fc <= fd { (c, fc) } else { (d, fd) };
    Minimum {
        arg,
        value,
        evaluations,
    }
}

/// Evaluates `values` (already computed on the uniform grid `thetas`), picks
/// the smallest (first on ties) and refines with golden section on the
/// neighbouring bracket.
pub fn refine_grid_minimum<F: FnMut(f64) -> f64>(
    thetas: &[f64],
    values: &[f64],
    f: F,
    tol: f64,
) -> Option<Minimum> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| *v < values[b]) {
            best = Some(i);
        }
    }
    let k = best?;
    let lo = thetas[k.saturating_sub(1)];
    let hi = thetas[(k + 1).min(thetas.len() - 1)];
    let refined = golden_section(f, lo, hi, tol);
    let grid = Minimum {
        arg: thetas[k],
        value: values[k],
        evaluations: values.len(),
    };
    Some(if refined.value <= grid.value {
        Minimum {
            evaluations: refined.evaluations + values.len(),
            ..refined
        }
    } else {
        grid
    })
}

/// Scans `samples` equally spaced points of `[lo, hi]` and refines the best
/// bracket by golden section.
pub fn grid_then_golden<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    samples: usize,
    tol: f64,
) -> Option<Minimum> {
    let thetas = linspace(lo, hi, samples.max(2));
    let values: Vec<f64> = thetas.iter().map(|&t| f(t)).collect();
    refine_grid_minimum(&thetas, &values, f, tol)
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let m = golden_section(|t| (t - 0.3).powi(2) + 1.0, -2.0, 5.0, 1e-10);
        assert!((m.arg - 0.3).abs() < 1e-6);
        assert!((m.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grid_picks_global_basin() {
        // two basins; the deeper one is at t = 2
        let f = |t: f64| ((t + 1.0).powi(2)).min((t - 2.0).powi(2) - 0.5);
        let m = grid_then_golden(f, -4.0, 4.0, 64, 1e-10).unwrap();
        assert!((m.arg - 2.0).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn ties_prefer_smallest_argument() {
        let thetas = linspace(0.0, 4.0, 5);
        let values = [3.0, 1.0, 2.0, 1.0, 3.0];
        let m = refine_grid_minimum(&thetas, &values, |t| (t - 1.0).abs() + 1.0, 1e-10).unwrap();
        assert!((m.arg - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infinite_values_skipped() {
        let m = grid_then_golden(
            |t| if t < 1.0 { f64::INFINITY } else { (t - 1.5).powi(2) },
            0.0,
            3.0,
            31,
            1e-10,
        )
        .unwrap();
        assert!((m.arg - 1.5).abs() < 1e-6);
    }
}
