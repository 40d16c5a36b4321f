//! The calibration form `Φ`, a numerical oriented comass, and the pointwise
//! calibration inequality `Φ(ξ) ≥ ‖ξ‖_h` over sampled spacelike planes.
//!
//! Planes are parametrised as graphs `(eᵢ, B eᵢ)` in coordinates where the
//! mixed block `G` of the metric has positive determinant. Writing `C = G B`,
//! the Gram matrix of the graph frame is `2 sym(C)`, so the spacelike
//! τ-oriented planes are exactly those with `sym(C) ≻ 0`.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost::Point;
use crate::density::DensitySpec;
use crate::error::{Error, Result};
use crate::geometry::{is_spacelike, orientation_value, MetricAtPoint, TangentPlane, TransportProblem};
use crate::linalg::{givens, sym};
use crate::optim::NelderMead;

/// An n-form on `R^{2n}` evaluated on frames at a point `(x, x̄)`.
pub trait NForm: Sync {
    fn eval(&self, x: &Point, xbar: &Point, plane: &TangentPlane) -> f64;
}

impl<F> NForm for F
where
    F: Fn(&Point, &Point, &TangentPlane) -> f64 + Sync,
{
    fn eval(&self, x: &Point, xbar: &Point, plane: &TangentPlane) -> f64 {
        self(x, xbar, plane)
    }
}

/// `Φ = ½(ρ(x) dx + ρ̄(x̄) dx̄)`.
#[derive(Debug, Clone)]
pub struct CalibrationForm {
    pub rho: DensitySpec,
    pub rhobar: DensitySpec,
}

impl CalibrationForm {
    pub fn new(rho: DensitySpec, rhobar: DensitySpec) -> Self {
        Self { rho, rhobar }
    }

    pub fn of(problem: &TransportProblem) -> Self {
        Self::new(problem.source.clone(), problem.target.clone())
    }

    /// `s·Φ`.
    pub fn scaled(&self, s: f64) -> impl NForm + '_ {
        move |x: &Point, xb: &Point, p: &TangentPlane| s * self.eval(x, xb, p)
    }
}

impl NForm for CalibrationForm {
    fn eval(&self, x: &Point, xbar: &Point, plane: &TangentPlane) -> f64 {
        eval_calibration(self, x, xbar, plane)
    }
}

pub fn eval_calibration(form: &CalibrationForm, x: &Point, xbar: &Point, plane: &TangentPlane) -> f64 {
    let (dx, dxbar) = plane.projections();
    0.5 * (form.rho.value(x) * dx + form.rhobar.value(xbar) * dxbar)
}

/// `−dx`: minus the volume form of the source factor.
pub fn negative_source_volume(_: &Point, _: &Point, plane: &TangentPlane) -> f64 {
    -plane.projections().0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComassConfig {
    /// Random starts per ladder rung, in addition to the scan optimum.
    pub starts: usize,
    pub ladder: Vec<f64>,
    /// Relative decrease across rungs that marks the infimum as unbounded.
    pub tol: f64,
    pub seed: u64,
}

impl Default for ComassConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            ladder: vec![2.0, 8.0, 32.0],
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComassEstimate {
    pub estimate: f64,
    /// Minimising plane, scaled to unit h-volume.
    pub argmin: TangentPlane,
    /// `B` of the minimising graph frame.
    pub argmin_b: DMatrix<f64>,
    pub bounded: bool,
    /// `(R, best value within radius R)` per rung.
    pub ladder: Vec<(f64, f64)>,
    /// The isotropic scan ended on its boundary.
    pub scan_at_boundary: bool,
}

const SCAN_LIMIT: f64 = 20.0;
const SCAN_POINTS: usize = 401;

/// Numerical oriented comass `inf ψ(ξ)` over τ-oriented spacelike unit planes.
///
/// An isotropic scan `sym(C) = e^s I` fixes the scale `s₀`; then for each
/// radius `R` in the ladder a multi-start Nelder–Mead search runs over
/// `C = s₀ Q diag(e^t) Qᵀ + K` with `|tₖ| ≤ ln R` and `|K_ij| ≤ s₀ R`.
pub fn numeric_comass(
    form: &dyn NForm,
    metric: &MetricAtPoint,
    x: &Point,
    xbar: &Point,
    config: &ComassConfig,
) -> Result<ComassEstimate> {
    let n = x.len();
    if metric.dim() != 2 * n || xbar.len() != n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            found: metric.dim(),
        });
    }
    if metric.signature != (n, n) {
        return Err(Error::BadSignature {
            expected: (n, n),
            found: metric.signature,
        });
    }
    let h = &metric.matrix;
    let diag_blocks = h.view((0, 0), (n, n)).amax().max(h.view((n, n), (n, n)).amax());
    if diag_blocks > 1e-12 * h.amax() {
        return Err(Error::InvalidArgument(
            "metric must be block off-diagonal in (x, x̄) coordinates".into(),
        ));
    }
    let g = metric.mixed_block();
    if g.determinant() <= 0.0 {
        return Err(Error::NegativeOrientation);
    }
    let g_inv = g.clone().try_inverse().ok_or(Error::NegativeOrientation)?;
    if config.ladder.is_empty() || config.ladder.iter().any(|&r| !(r > 1.0)) {
        return Err(Error::InvalidArgument("comass ladder radii must exceed 1".into()));
    }

    let value_of = |c: &DMatrix<f64>| -> f64 {
        let s = sym(c);
        let det = (&s * 2.0).determinant();
        if !(det > 0.0) || s.cholesky().is_none() {
            return f64::INFINITY;
        }
        let b = &g_inv * c;
        form.eval(x, xbar, &TangentPlane::graph(&b)) / det.sqrt()
    };

    let mut best_s = 0.0;
    let mut best_v = f64::INFINITY;
    let mut best_k = 0;
    for k in 0..SCAN_POINTS {
        let s = -SCAN_LIMIT + 2.0 * SCAN_LIMIT * k as f64 / (SCAN_POINTS - 1) as f64;
        let v = value_of(&(DMatrix::identity(n, n) * s.exp()));
        if v < best_v {
            best_v = v;
            best_s = s;
            best_k = k;
        }
    }
    let scan_at_boundary = best_k == 0 || best_k == SCAN_POINTS - 1;
    let s0 = best_s.exp();

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let m = pairs.len();
    let build = |p: &[f64], r: f64| -> DMatrix<f64> {
        let mut q: DMatrix<f64> = DMatrix::identity(n, n);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            q *= givens(n, i, j, p[k]);
        }
        let d: DMatrix<f64> = DMatrix::from_fn(n, n, |i, j| if i == j { (r.ln() * p[m + i].tanh()).exp() } else { 0.0 });
        let mut c = (&q * d * q.transpose()) * s0;
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let kij = s0 * r * p[m + n + k].tanh();
            c[(i, j)] += kij;
            c[(j, i)] -= kij;
        }
        c
    };

    let dim = n * n;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let starts: Vec<Vec<f64>> = std::iter::once(vec![0.0; dim])
        .chain((0..config.starts).map(|_| (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect()))
        .collect();
    let nm = NelderMead {
        max_iter: 400 * dim.max(1),
        initial_step: 0.3,
        ftol: 1e-15,
    };

    let mut ladder = Vec::with_capacity(config.ladder.len());
    let mut overall = (best_v, DMatrix::identity(n, n) * s0);
    for &r in &config.ladder {
        let runs: Vec<(Vec<f64>, f64)> = std::thread::scope(|scope| {
            let handles: Vec<_> = starts
                .iter()
                .map(|p0| scope.spawn(|| nm.minimize(|p| value_of(&build(p, r)), p0)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("comass worker panicked")).collect()
        });
        let (p, v) = runs
            .into_iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one start");
        ladder.push((r, v));
        if v < overall.0 {
            overall = (v, build(&p, r));
        }
    }

    let diverging = ladder
        .windows(2)
        .any(|w| w[1].1 < w[0].1 - config.tol * w[0].1.abs().max(1.0));
    let bounded = !scan_at_boundary && !diverging && overall.0.is_finite();

    let argmin_b = &g_inv * &overall.1;
    let plane = TangentPlane::graph(&argmin_b);
    let vol = metric.gram(&plane).determinant().max(0.0).sqrt();
    let argmin = if vol > 0.0 {
        plane.transformed(&(DMatrix::identity(n, n) * vol.powf(-1.0 / n as f64)))?
    } else {
        plane
    };
    Ok(ComassEstimate {
        estimate: overall.0,
        argmin,
        argmin_b,
        bounded,
        ladder,
        scan_at_boundary,
    })
}

/// One plane `(eᵢ, B eᵢ)` at `(x, x̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSample {
    pub x: Point,
    pub xbar: Point,
    pub b: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// `min Φ(ξ) − ‖ξ‖_h` over evaluated samples.
    pub min_gap: f64,
    pub max_gap: f64,
    pub evaluated: usize,
    /// Samples that were not spacelike or not τ-oriented.
    pub skipped: usize,
    /// `(lower edge, upper edge, count)`.
    pub histogram: Vec<(f64, f64, usize)>,
    pub gaps: Vec<f64>,
}

const HISTOGRAM_BINS: usize = 20;

/// Evaluates `Φ(ξ) − ‖ξ‖_h` under the conformal metric for every sample.
pub fn calibration_inequality_sweep(
    form: &CalibrationForm,
    problem: &TransportProblem,
    samples: &[SweepSample],
) -> Result<SweepReport> {
    let mut gaps = Vec::with_capacity(samples.len());
    let mut skipped = 0;
    for s in samples {
        let metric = problem.conformal_metric(&s.x, &s.xbar)?;
        let plane = TangentPlane::graph(&s.b);
        let margin = is_spacelike(&metric, &plane, 0.0);
        if !margin.spacelike || orientation_value(&plane) <= 0.0 {
            skipped += 1;
            continue;
        }
        let norm = metric.gram(&plane).determinant().max(0.0).sqrt();
        gaps.push(eval_calibration(form, &s.x, &s.xbar, &plane) - norm);
    }
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let max_gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let histogram = histogram(&gaps, min_gap, max_gap);
    Ok(SweepReport {
        min_gap,
        max_gap,
        evaluated: gaps.len(),
        skipped,
        histogram,
        gaps,
    })
}

fn histogram(values: &[f64], lo: f64, hi: f64) -> Vec<(f64, f64, usize)> {
    if values.is_empty() {
        return Vec::new();
    }
    let width = ((hi - lo) / HISTOGRAM_BINS as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + k as f64 * width, lo + (k + 1) as f64 * width, c))
        .collect()
}

/// Random points in the two supports with graph matrices `B = G⁻¹(P + K)`,
/// `P ≻ 0`, `K` antisymmetric, where `G` is the mixed block of `h_c`.
///
/// Gaussian supports are sampled within `±4σ` of the mean. Points where
/// `det G ≤ 0` are skipped.
pub fn random_sweep_samples(problem: &TransportProblem, count: usize, rng: &mut impl Rng) -> Result<Vec<SweepSample>> {
    let n = problem.dim();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 20 * count + 100 {
            return Err(Error::NegativeOrientation);
        }
        let x = sample_in(&problem.source, rng);
        let xbar = sample_in(&problem.target, rng);
        if problem.cost.on_cut_locus(&x, &xbar) {
            continue;
        }
        let g = -problem.cost.mixed_hessian(&x, &xbar)?;
        if g.determinant() <= 0.0 {
            continue;
        }
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let mut c = &a * a.transpose() + DMatrix::identity(n, n) * 0.05;
        for i in 0..n {
            for j in i + 1..n {
                let k = rng.gen_range(-1.0..1.0);
                c[(i, j)] += k;
                c[(j, i)] -= k;
            }
        }
        let b = g.try_inverse().ok_or(Error::NegativeOrientation)? * c;
        out.push(SweepSample { x, xbar, b });
    }
    Ok(out)
}

fn sample_in(d: &DensitySpec, rng: &mut impl Rng) -> Point {
    let b = d.support();
    match d.gaussian_parameters() {
        Some((mean, cov)) => Point::from_fn(b.dim(), |i, _| {
            let r = 4.0 * cov[(i, i)].sqrt();
            rng.gen_range((mean[i] - r).max(b.lo()[i])..(mean[i] + r).min(b.hi()[i]))
        }),
        None => Point::from_fn(b.dim(), |i, _| rng.gen_range(b.lo()[i]..b.hi()[i])),
    }
}
