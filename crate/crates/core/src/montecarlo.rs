//! Monte Carlo estimates of bridge exit probabilities.
//!
//! Constant coefficients use exact Gaussian bridge sampling with the Brownian
//! per-step crossing correction `exp(-2 δ_i δ_{i+1} / (σ_n^2 t Δ))`. Hull-White
//! bridges are approximated by rejection: Euler paths from `x` whose endpoint
//! lands within `eps` of `y` (biased `O(eps)`, experimental).
//!
//! Paths are grouped into fixed-size blocks, each with its own ChaCha stream,
//! so estimates depend only on `(seed, stream, parameters)` and never on the
//! worker count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exit::Boundary;
use crate::format::sig12;
use crate::geodesic::DiscretePath;
use crate::model::{DiffusionModel, ModelKind, Point};

const GAUSSIAN_BLOCK: u64 = 4096;
const HW_BLOCK: u64 = 1024;
const HW_WAVE: u64 = 64;

/// Seed and stream identifying a reproducible sequence of estimates.
///
/// `stream` must be below `2^24`; each estimate derives per-block ChaCha
/// streams from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    /// Generator for a given block of paths.
    pub fn block_rng(&self, block: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((self.stream << 32) | (block & 0xffff_ffff));
        rng
    }

    /// Independent sub-sequence `k < 256`, used for the horizons of [`ld_slope`].
    pub fn substream(&self, k: u64) -> Self {
        Self {
            seed: self.seed,
            stream: (self.stream << 8) | (k & 0xff),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOptions {
    pub n_paths: u64,
    /// Time steps `N` per path.
    pub steps: usize,
    pub workers: usize,
    /// Apply the per-step Brownian-bridge crossing correction.
    pub correction: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            steps: 50,
            workers: 1,
            correction: true,
        }
    }
}

/// Binomial estimate of an exit probability at horizon `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingEstimate {
    pub t: f64,
    pub n_paths: u64,
    pub p_hat: f64,
    /// 95% normal-approximation half-width, `1.96 sqrt(p(1-p)/n)`.
    pub ci_half_width: f64,
    /// `-t log p_hat`.
    pub exponent: f64,
}

impl CrossingEstimate {
    pub fn from_counts(t: f64, hits: u64, n_paths: u64) -> Self {
        let p = hits as f64 / n_paths as f64;
        Self {
            t,
            n_paths,
            p_hat: p,
            ci_half_width: 1.96 * (p * (1.0 - p) / n_paths as f64).sqrt(),
            exponent: -t * p.ln(),
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        (self.p_hat - p).abs() <= self.ci_half_width
    }
}

fn check_common(t: f64, steps: usize) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {t}")));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("at least one time step is required".into()));
    }
    Ok(())
}

fn cov_factor(cov: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    if cov.nrows() != dim || cov.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: cov.nrows(),
        });
    }
    let sym = (cov - cov.transpose()).amax() <= 1e-12 * cov.amax().max(1.0);
    match cov.clone().cholesky() {
        Some(c) if sym => Ok(c.l()),
        _ => Err(Error::NotSpd(cov.iter().copied().collect())),
    }
}

/// Exact sample of the bridge of `x + sqrt(t) cov^{1/2} W_s`, `s ∈ [0, 1]`,
/// pinned at `y`, on `steps` equal steps.
pub fn sample_gaussian_bridge<R: Rng + ?Sized>(
    x: &Point,
    y: &Point,
    t: f64,
    cov: &DMatrix<f64>,
    steps: usize,
    rng: &mut R,
) -> Result<DiscretePath> {
    check_common(t, steps)?;
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let l = cov_factor(cov, x.len())?;
    let dt = 1.0 / steps as f64;
    let mut points = Vec::with_capacity(steps + 1);
    points.push(x.clone());
    let mut p = x.clone();
    for i in 0..steps - 1 {
        let rem = 1.0 - i as f64 * dt;
        let mean = &p + (y - &p) * (dt / rem);
        let sd = (t * dt * (rem - dt) / rem).sqrt();
        let z = DVector::from_fn(x.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        p = mean + &l * z * sd;
        points.push(p.clone());
    }
    points.push(y.clone());
    DiscretePath::new(points)
}

fn straight_boundary(boundary: &Boundary, x: &Point) -> Result<(Point, f64)> {
    boundary
        .as_hyperplane(x)
        .ok_or_else(|| Error::InvalidArgument("Monte Carlo crossing needs a straight boundary".into()))
}

fn run_blocks<F>(n_blocks: u64, workers: usize, f: F) -> Result<u64>
where
    F: Fn(u64) -> u64 + Sync + Send,
{
    if workers <= 1 {
        return Ok((0..n_blocks).map(f).sum());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(pool.install(|| (0..n_blocks).into_par_iter().map(f).sum()))
}

/// Whether one bridge of the normal coordinate crosses zero.
///
/// `gap` is the distance to the boundary on the inside, `var_rate` the variance
/// of the normal coordinate per unit rescaled time.
fn gaussian_gap_crosses(
    rng: &mut ChaCha8Rng,
    gap_x: f64,
    gap_y: f64,
    var_rate: f64,
    steps: usize,
    correction: bool,
) -> bool {
    if gap_x <= 0.0 || gap_y <= 0.0 {
        return true;
    }
    let dt = 1.0 / steps as f64;
    let mut g = gap_x;
    for i in 0..steps {
        let next = if i + 1 == steps {
            gap_y
        } else {
            let rem = 1.0 - i as f64 * dt;
            let z: f64 = rng.sample(StandardNormal);
            g + (gap_y - g) * (dt / rem) + (var_rate * dt * (rem - dt) / rem).sqrt() * z
        };
        if next <= 0.0 {
            return true;
        }
        if correction {
            let p = (-2.0 * g * next / (var_rate * dt)).exp();
            if rng.random::<f64>() < p {
                return true;
            }
        }
        g = next;
    }
    false
}

/// Probability that the constant-coefficient bridge from `x` to `y` over
/// horizon `t` leaves through the straight `boundary`.
///
/// Only the coordinate normal to the boundary matters; it is a scalar
/// Brownian bridge with variance rate `t n^T cov n`, sampled exactly.
pub fn crossing_probability(
    x: &Point,
    y: &Point,
    t: f64,
    cov: &DMatrix<f64>,
    boundary: &Boundary,
    opts: &McOptions,
    rng: RngSpec,
) -> Result<CrossingEstimate> {
    check_common(t, opts.steps)?;
    if opts.n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be positive".into()));
    }
    cov_factor(cov, x.len())?;
    let (normal, offset) = straight_boundary(boundary, x)?;
    let gap_x = offset - normal.dot(x);
    let gap_y = offset - normal.dot(y);
    let var_rate = t * normal.dot(&(cov * &normal));
    let n = opts.n_paths;
    let n_blocks = n.div_ceil(GAUSSIAN_BLOCK);
    let hits = run_blocks(n_blocks, opts.workers, |b| {
        let mut r = rng.block_rng(b);
        let count = GAUSSIAN_BLOCK.min(n - b * GAUSSIAN_BLOCK);
        (0..count)
            .filter(|_| gaussian_gap_crosses(&mut r, gap_x, gap_y, var_rate, opts.steps, opts.correction))
            .count() as u64
    })?;
    Ok(CrossingEstimate::from_counts(t, hits, n))
}

/// Rejection settings for the Hull-White sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwSampling {
    /// Radius of the Euclidean acceptance ball around `y`.
    pub eps: f64,
    /// Attempts allowed per estimate.
    pub max_attempts: u64,
}

struct HwParams {
    b: f64,
    mu: f64,
    sigma_vol: f64,
    rho: f64,
}

impl HwParams {
    fn of(model: &DiffusionModel) -> Result<Self> {
        match model.kind() {
            ModelKind::HullWhite { b, mu, sigma_vol, rho } => Ok(Self {
                b: *b,
                mu: *mu,
                sigma_vol: *sigma_vol,
                rho: *rho,
            }),
            _ => Err(Error::InvalidArgument("rejection sampler needs a Hull-White model".into())),
        }
    }

    /// One step of the rescaled dynamics over `h = t Δ`: exact lognormal `v`,
    /// Euler `xi`.
    fn step(&self, xi: f64, v: f64, h: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let rho_bar = (1.0 - self.rho * self.rho).sqrt();
        let sq = h.sqrt();
        let xi_next = xi + (self.b - 0.5 * v * v) * h + v * sq * (self.rho * z1 + rho_bar * z2);
        let s = self.sigma_vol;
        let v_next = v * ((self.mu - 0.5 * s * s) * h + s * sq * z1).exp();
        (xi_next, v_next)
    }

    /// `n^T a(z) n` at volatility `v`.
    fn normal_variance(&self, normal: &Point, v: f64) -> f64 {
        let (n0, n1, s) = (normal[0], normal[1], self.sigma_vol);
        v * v * (n0 * n0 + 2.0 * self.rho * s * n0 * n1 + s * s * n1 * n1)
    }
}

fn check_hw_inputs(model: &DiffusionModel, x: &Point, t: f64, steps: usize, eps: f64) -> Result<HwParams> {
    check_common(t, steps)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    if !model.contains(x.as_slice()) {
        return Err(Error::OutsideDomain(x.iter().copied().collect()));
    }
    HwParams::of(model)
}

/// Euler path from `x` whose endpoint lands within `eps` of `y`. Experimental:
/// the conditioning is approximate and biased `O(eps)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_hw_bridge_rejection<R: Rng + ?Sized>(
    model: &DiffusionModel,
    x: &Point,
    y: &Point,
    t: f64,
    steps: usize,
    eps: f64,
    max_attempts: u64,
    rng: &mut R,
) -> Result<DiscretePath> {
    let hw = check_hw_inputs(model, x, t, steps, eps)?;
    let mut chacha = ChaCha8Rng::seed_from_u64(rng.random());
    let h = t / steps as f64;
    for _ in 0..max_attempts {
        let mut points = Vec::with_capacity(steps + 1);
        let (mut xi, mut v) = (x[0], x[1]);
        points.push(x.clone());
        for _ in 0..steps {
            (xi, v) = hw.step(xi, v, h, &mut chacha);
            points.push(DVector::from_vec(vec![xi, v]));
        }
        if ((xi - y[0]).powi(2) + (v - y[1]).powi(2)).sqrt() <= eps {
            return DiscretePath::new(points);
        }
    }
    Err(Error::RejectionBudgetExceeded(max_attempts))
}

/// Exit probability of the Hull-White bridge, estimated from `opts.n_paths`
/// accepted rejection samples. The per-step correction freezes the volatility
/// at the start of each step.
#[allow(clippy::too_many_arguments)]
pub fn hw_crossing_probability(
    model: &DiffusionModel,
    x: &Point,
    y: &Point,
    t: f64,
    boundary: &Boundary,
    opts: &McOptions,
    sampling: HwSampling,
    rng: RngSpec,
) -> Result<CrossingEstimate> {
    let hw = check_hw_inputs(model, x, t, opts.steps, sampling.eps)?;
    if opts.n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be positive".into()));
    }
    let (normal, offset) = straight_boundary(boundary, x)?;
    let h = t / opts.steps as f64;
    let eps2 = sampling.eps * sampling.eps;

    // crossing flags of the accepted paths of one block, in order
    let block = |b: u64| -> Vec<bool> {
        let mut r = rng.block_rng(b);
        let mut accepted = Vec::new();
        for _ in 0..HW_BLOCK {
            let (mut xi, mut v) = (x[0], x[1]);
            let mut gap = offset - normal.dot(x);
            let mut crossed = gap <= 0.0;
            for _ in 0..opts.steps {
                let (xn, vn) = hw.step(xi, v, h, &mut r);
                let next = offset - (normal[0] * xn + normal[1] * vn);
                if !crossed {
                    if next <= 0.0 {
                        crossed = true;
                    } else if opts.correction {
                        let p = (-2.0 * gap * next / (hw.normal_variance(&normal, v) * h)).exp();
                        crossed = r.random::<f64>() < p;
                    }
                }
                (xi, v, gap) = (xn, vn, next);
            }
            if (xi - y[0]).powi(2) + (v - y[1]).powi(2) <= eps2 {
                accepted.push(crossed);
            }
        }
        accepted
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let block_budget = sampling.max_attempts.div_ceil(HW_BLOCK);
    let (mut taken, mut hits, mut next_block) = (0u64, 0u64, 0u64);
    while taken < opts.n_paths {
        if next_block >= block_budget {
            return Err(Error::RejectionBudgetExceeded(sampling.max_attempts));
        }
        let wave_end = (next_block + HW_WAVE).min(block_budget);
        let results: Vec<Vec<bool>> = pool.install(|| (next_block..wave_end).into_par_iter().map(block).collect());
        for flags in results {
            for crossed in flags {
                if taken < opts.n_paths {
                    taken += 1;
                    hits += crossed as u64;
                }
            }
        }
        next_block = wave_end;
    }
    Ok(CrossingEstimate::from_counts(t, hits, opts.n_paths))
}

/// Bridge family used by [`ld_slope`].
#[derive(Debug, Clone, Copy)]
pub enum McSource<'a> {
    Gaussian { cov: &'a DMatrix<f64> },
    HullWhite { model: &'a DiffusionModel, sampling: HwSampling },
}

/// Per-horizon estimates and their extrapolation to `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdSlope {
    pub rows: Vec<CrossingEstimate>,
    /// Intercept of the least-squares line `exponent ~ J + k t`; `None` with
    /// fewer than two horizons.
    pub intercept: Option<f64>,
    pub slope: Option<f64>,
}

/// Least-squares line through `(t, exponent)`; `None` if fewer than two
/// distinct horizons.
pub fn extrapolate(rows: &[CrossingEstimate]) -> Option<(f64, f64)> {
    if rows.len() < 2 {
        return None;
    }
    let n = rows.len() as f64;
    let mt = rows.iter().map(|r| r.t).sum::<f64>() / n;
    let me = rows.iter().map(|r| r.exponent).sum::<f64>() / n;
    let stt: f64 = rows.iter().map(|r| (r.t - mt).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let ste: f64 = rows.iter().map(|r| (r.t - mt) * (r.exponent - me)).sum();
    let slope = ste / stt;
    Some((me - slope * mt, slope))
}

/// Estimate for one horizon from either source.
pub fn estimate(
    x: &Point,
    y: &Point,
    t: f64,
    source: McSource<'_>,
    boundary: &Boundary,
    opts: &McOptions,
    rng: RngSpec,
) -> Result<CrossingEstimate> {
    match source {
        McSource::Gaussian { cov } => crossing_probability(x, y, t, cov, boundary, opts, rng),
        McSource::HullWhite { model, sampling } => {
            hw_crossing_probability(model, x, y, t, boundary, opts, sampling, rng)
        }
    }
}

/// Empirical exponent `-t log p_hat(t)` over `t_list` and its linear
/// extrapolation to `t = 0`. Horizon `k` uses `rng.substream(k)`.
pub fn ld_slope(
    x: &Point,
    y: &Point,
    source: McSource<'_>,
    boundary: &Boundary,
    t_list: &[f64],
    opts: &McOptions,
    rng: RngSpec,
) -> Result<LdSlope> {
    if t_list.is_empty() {
        return Err(Error::InvalidArgument("t_list is empty".into()));
    }
    let rows = t_list
        .iter()
        .enumerate()
        .map(|(k, &t)| estimate(x, y, t, source, boundary, opts, rng.substream(k as u64)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = rows.iter().find(|r| r.p_hat == 0.0) {
        let smallest_usable_t = rows
            .iter()
            .filter(|r| r.p_hat > 0.0)
            .map(|r| r.t)
            .min_by(f64::total_cmp);
        return Err(Error::DegenerateEstimate {
            t: bad.t,
            n_paths: bad.n_paths,
            smallest_usable_t,
        });
    }
    let fit = extrapolate(&rows);
    Ok(LdSlope {
        rows,
        intercept: fit.map(|f| f.0),
        slope: fit.map(|f| f.1),
    })
}

/// CSV `t,n_paths,p_hat,ci_half_width,exponent,seed`, followed by an
/// `extrapolated` row (exponent empty if unavailable) and, if given, an
/// `analytic` row.
pub fn estimates_csv(rows: &[CrossingEstimate], seed: u64, extrapolated: Option<f64>, analytic: Option<f64>) -> String {
    let mut out = String::from("t,n_paths,p_hat,ci_half_width,exponent,seed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sig12(r.t),
            r.n_paths,
            sig12(r.p_hat),
            sig12(r.ci_half_width),
            sig12(r.exponent),
            seed
        ));
    }
    out.push_str(&format!(
        "extrapolated,,,,{},{seed}\n",
        extrapolated.map(sig12).unwrap_or_default()
    ));
    if let Some(j) = analytic {
        out.push_str(&format!("analytic,,,,{},{seed}\n", sig12(j)));
    }
    out
}

/// Parsed form of [`estimates_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatesTable {
    pub rows: Vec<CrossingEstimate>,
    pub seed: u64,
    pub extrapolated: Option<f64>,
    pub analytic: Option<f64>,
}

pub fn parse_estimates_csv(text: &str) -> Result<EstimatesTable> {
    let bad = |msg: String| Error::InvalidArgument(format!("estimates CSV: {msg}"));
    let mut lines = text.lines().filter(|l| !l.is_empty());
    if lines.next() != Some("t,n_paths,p_hat,ci_half_width,exponent,seed") {
        return Err(bad("unexpected header".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
    let mut table = EstimatesTable {
        rows: Vec::new(),
        seed: 0,
        extrapolated: None,
        analytic: None,
    };
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(format!("expected 6 fields in {line:?}")));
        }
        table.seed = f[5].parse().map_err(|_| bad(format!("bad seed {:?}", f[5])))?;
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        match f[0] {
            "extrapolated" => table.extrapolated = opt(f[4])?,
            "analytic" => table.analytic = opt(f[4])?,
            t => table.rows.push(CrossingEstimate {
                t: num(t)?,
                n_paths: f[1].parse().map_err(|_| bad(format!("bad count {:?}", f[1])))?,
                p_hat: num(f[2])?,
                ci_half_width: num(f[3])?,
                exponent: num(f[4])?,
            }),
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(v: f64) -> Point {
        DVector::from_vec(vec![v])
    }

    #[test]
    fn bridge_endpoints_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cov = DMatrix::identity(2, 2);
        let (x, y) = (DVector::from_vec(vec![0.1, 0.2]), DVector::from_vec(vec![1.0, -1.0]));
        let p = sample_gaussian_bridge(&x, &y, 0.3, &cov, 20, &mut rng).unwrap();
        assert_eq!(p.start(), &x);
        assert_eq!(p.end(), &y);
        assert_eq!(p.segments(), 20);
    }

    #[test]
    fn bridge_rejects_non_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let r = sample_gaussian_bridge(&one_d(0.0).push(0.0), &one_d(0.0).push(1.0), 0.1, &cov, 4, &mut rng);
        assert!(matches!(r, Err(Error::NotSpd(_))));
    }

    #[test]
    fn straddling_barrier_always_crosses() {
        let cov = DMatrix::identity(1, 1);
        let opts = McOptions {
            n_paths: 1000,
            ..Default::default()
        };
        let e = crossing_probability(&one_d(0.5), &one_d(-0.3), 0.1, &cov, &Boundary::vertical(0.0), &opts, RngSpec::new(3))
            .unwrap();
        assert_eq!(e.p_hat, 1.0);
    }

    #[test]
    fn far_barrier_never_crosses() {
        let cov = DMatrix::identity(1, 1);
        let opts = McOptions {
            n_paths: 10_000,
            ..Default::default()
        };
        let e = crossing_probability(&one_d(50.0), &one_d(50.0), 0.1, &cov, &Boundary::vertical(0.0), &opts, RngSpec::new(3))
            .unwrap();
        assert_eq!(e.p_hat, 0.0);
        assert_eq!(e.exponent, f64::INFINITY);
    }

    #[test]
    fn classical_crossing_probability() {
        let cov = DMatrix::identity(1, 1);
        let opts = McOptions {
            n_paths: 200_000,
            steps: 20,
            ..Default::default()
        };
        let e = crossing_probability(&one_d(0.5), &one_d(0.5), 0.1, &cov, &Boundary::vertical(0.0), &opts, RngSpec::new(9))
            .unwrap();
        let p = (-5.0f64).exp();
        assert!((e.p_hat - p).abs() <= 3.0 * e.ci_half_width, "{e:?} vs {p}");
    }

    #[test]
    fn extrapolation_of_a_line() {
        let rows: Vec<_> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&t| CrossingEstimate {
                t,
                n_paths: 1,
                p_hat: 0.5,
                ci_half_width: 0.0,
                exponent: 0.3 + 2.0 * t,
            })
            .collect();
        let (j, k) = extrapolate(&rows).unwrap();
        assert!((j - 0.3).abs() < 1e-12 && (k - 2.0).abs() < 1e-12);
        assert_eq!(extrapolate(&rows[..1]), None);
    }

    #[test]
    fn degenerate_estimate_reports_usable_range() {
        let cov = DMatrix::identity(1, 1);
        let opts = McOptions {
            n_paths: 1000,
            steps: 10,
            ..Default::default()
        };
        let r = ld_slope(
            &one_d(0.5),
            &one_d(0.3),
            McSource::Gaussian { cov: &cov },
            &Boundary::vertical(0.0),
            &[1.0, 0.001],
            &opts,
            RngSpec::new(1),
        );
        match r {
            Err(Error::DegenerateEstimate { t, smallest_usable_t, .. }) => {
                assert_eq!(t, 0.001);
                assert_eq!(smallest_usable_t, Some(1.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![CrossingEstimate::from_counts(0.1, 4979, 100_000)];
        let csv = estimates_csv(&rows, 42, None, Some(0.3));
        let back = parse_estimates_csv(&csv).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.extrapolated, None);
        assert_eq!(back.analytic, Some(0.3));
        assert_eq!(back.rows[0].n_paths, 100_000);
        assert!((back.rows[0].p_hat - 0.04979).abs() < 1e-15);
    }

    #[test]
    fn hw_rejection_keeps_v_positive() {
        let m = DiffusionModel::hull_white(0.0, 0.0, 1.0, -0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = (DVector::from_vec(vec![1.0, 0.5]), DVector::from_vec(vec![1.0, 0.5]));
        let p = sample_hw_bridge_rejection(&m, &x, &y, 0.5, 50, 0.3, 100_000, &mut rng).unwrap();
        assert!(p.points().iter().all(|q| q[1] > 0.0));
        assert!((p.end() - &y).norm() <= 0.3);
        let none = sample_hw_bridge_rejection(&m, &x, &y, 0.5, 50, 1e-9, 10, &mut rng);
        assert_eq!(none, Err(Error::RejectionBudgetExceeded(10)));
    }
}
