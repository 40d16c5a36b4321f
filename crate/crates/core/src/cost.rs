//! Transport costs `c(x, x̄)`, their derivatives, and the twist and
//! non-degeneracy conditions.
//!
//! A [`CostField`] wraps an evaluator plus optional closed forms for `Dc`,
//! `D̄c` and the mixed Hessian `D D̄c`. Anything without a closed form falls
//! back to central finite differences with the field's `fd_step`.
//!
//! Built-in identifiers (see [`CostField::builtin`]):
//!
//! | id          | cost                     | mixed Hessian            |
//! |-------------|--------------------------|--------------------------|
//! | `quadratic` | `|x − x̄|²/2`             | `−I`                     |
//! | `bilinear`  | `−x·x̄`                   | `−I`                     |
//! | `log`       | `−log|x − x̄|`            | `−D²φ(x − x̄)`, φ = −log|z| |
//! | `sqrt1p`    | `√(1 + |x − x̄|²)`        | `−D²φ(x − x̄)`, φ = √(1+|z|²) |
//! | `custom-grid` | bicubic on a product grid (n = 1) | finite differences |

use std::fmt;
use std::io::Read;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::unit;

pub type Point = DVector<f64>;

type ScalarFn = Arc<dyn Fn(&Point, &Point) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&Point, &Point) -> DVector<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&Point, &Point) -> DMatrix<f64> + Send + Sync>;
type Predicate = Arc<dyn Fn(&Point, &Point) -> bool + Send + Sync>;

/// Default relative finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Default cut-locus margin of the `log` cost.
pub const DEFAULT_LOG_MARGIN: f64 = 1e-3;

/// Identifiers accepted by [`CostField::builtin`].
pub const BUILTIN_COSTS: [&str; 4] = ["quadratic", "bilinear", "log", "sqrt1p"];

#[derive(Clone)]
pub struct CostField {
    name: String,
    dim: usize,
    value: ScalarFn,
    grad_x: Option<VectorFn>,
    grad_xbar: Option<VectorFn>,
    mixed: Option<MatrixFn>,
    cut_locus: Option<Predicate>,
    fd_step: f64,
}

impl fmt::Debug for CostField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_mixed", &self.mixed.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

/// A radial profile `φ(z) = ψ(|z|²)` and its first two `s`-derivatives.
#[derive(Clone, Copy)]
struct Radial {
    d1: fn(f64) -> f64,
    d2: fn(f64) -> f64,
}

impl Radial {
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let s = z.norm_squared();
        z * (2.0 * (self.d1)(s))
    }

    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = z.len();
        let s = z.norm_squared();
        DMatrix::identity(n, n) * (2.0 * (self.d1)(s)) + z * z.transpose() * (4.0 * (self.d2)(s))
    }
}

impl CostField {
    /// A cost given only by its values; all derivatives by finite differences.
    pub fn from_fn<F>(name: impl Into<String>, dim: usize, f: F) -> Self
    where
        F: Fn(&Point, &Point) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            value: Arc::new(f),
            grad_x: None,
            grad_xbar: None,
            mixed: None,
            cut_locus: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_grad_x<F>(mut self, f: F) -> Self
    where
        F: Fn(&Point, &Point) -> DVector<f64> + Send + Sync + 'static,
    {
        self.grad_x = Some(Arc::new(f));
        self
    }

    pub fn with_grad_xbar<F>(mut self, f: F) -> Self
    where
        F: Fn(&Point, &Point) -> DVector<f64> + Send + Sync + 'static,
    {
        self.grad_xbar = Some(Arc::new(f));
        self
    }

    pub fn with_mixed_hessian<F>(mut self, f: F) -> Self
    where
        F: Fn(&Point, &Point) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.mixed = Some(Arc::new(f));
        self
    }

    pub fn with_cut_locus<F>(mut self, f: F) -> Self
    where
        F: Fn(&Point, &Point) -> bool + Send + Sync + 'static,
    {
        self.cut_locus = Some(Arc::new(f));
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    /// Drops every closed-form derivative so that all paths use finite differences.
    pub fn finite_difference_only(mut self) -> Self {
        self.grad_x = None;
        self.grad_xbar = None;
        self.mixed = None;
        self
    }

    /// `|x − x̄|²/2`.
    pub fn quadratic(dim: usize) -> Self {
        Self::from_fn("quadratic", dim, |x, y| 0.5 * (x - y).norm_squared())
            .with_grad_x(|x, y| x - y)
            .with_grad_xbar(|x, y| y - x)
            .with_mixed_hessian(move |x, _| -DMatrix::identity(x.len(), x.len()))
    }

    /// `−x·x̄`.
    pub fn bilinear(dim: usize) -> Self {
        Self::from_fn("bilinear", dim, |x, y| -x.dot(y))
            .with_grad_x(|_, y| -y)
            .with_grad_xbar(|x, _| -x)
            .with_mixed_hessian(move |x, _| -DMatrix::identity(x.len(), x.len()))
    }

    /// `−log|x − x̄|`, singular on the diagonal; cut locus `|x − x̄| < margin`.
    pub fn log(dim: usize, margin: f64) -> Self {
        let radial = Radial {
            d1: |s| -0.5 / s,
            d2: |s| 0.5 / (s * s),
        };
        Self::radial("log", dim, |x, y| -(x - y).norm().ln(), radial)
            .with_cut_locus(move |x, y| (x - y).norm() < margin)
    }

    /// `√(1 + |x − x̄|²)`.
    pub fn sqrt1p(dim: usize) -> Self {
        let radial = Radial {
            d1: |s| 0.5 / (1.0 + s).sqrt(),
            d2: |s| -0.25 / (1.0 + s).powf(1.5),
        };
        Self::radial("sqrt1p", dim, |x, y| (1.0 + (x - y).norm_squared()).sqrt(), radial)
    }

    fn radial(
        name: &str,
        dim: usize,
        value: impl Fn(&Point, &Point) -> f64 + Send + Sync + 'static,
        radial: Radial,
    ) -> Self {
        Self::from_fn(name, dim, value)
            .with_grad_x(move |x, y| radial.gradient(&(x - y)))
            .with_grad_xbar(move |x, y| -radial.gradient(&(x - y)))
            .with_mixed_hessian(move |x, y| -radial.hessian(&(x - y)))
    }

    /// Looks up a built-in cost by identifier.
    pub fn builtin(id: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("cost dimension must be positive".into()));
        }
        match id {
            "quadratic" => Ok(Self::quadratic(dim)),
            "bilinear" => Ok(Self::bilinear(dim)),
            "log" => Ok(Self::log(dim, DEFAULT_LOG_MARGIN)),
            "sqrt1p" => Ok(Self::sqrt1p(dim)),
            other => Err(Error::InvalidArgument(format!("unknown cost `{other}`"))),
        }
    }

    /// Cost `c̃(x, ȳ) = c(x, Q ȳ)` after an orthogonal change of target coordinates.
    pub fn with_target_rotation(&self, q: &DMatrix<f64>) -> Self {
        let base = self.clone();
        let q = q.clone();
        let value = {
            let (b, q) = (base.clone(), q.clone());
            move |x: &Point, y: &Point| (b.value)(x, &(&q * y))
        };
        let mut out = Self::from_fn(format!("{}∘Q", self.name), self.dim, value).with_fd_step(self.fd_step);
        if let Some(g) = self.grad_x.clone() {
            let q = q.clone();
            out.grad_x = Some(Arc::new(move |x, y| g(x, &(&q * y))));
        }
        if let Some(g) = self.grad_xbar.clone() {
            let q = q.clone();
            out.grad_xbar = Some(Arc::new(move |x, y| q.transpose() * g(x, &(&q * y))));
        }
        if let Some(m) = self.mixed.clone() {
            let q = q.clone();
            out.mixed = Some(Arc::new(move |x, y| m(x, &(&q * y)) * &q));
        }
        if let Some(c) = self.cut_locus.clone() {
            let q = q.clone();
            out.cut_locus = Some(Arc::new(move |x, y| c(x, &(&q * y))));
        }
        out
    }

    /// The exchanged cost `c̄(x̄, x) = c(x, x̄)`.
    pub fn transposed(&self) -> Self {
        let v = self.value.clone();
        let mut out = Self::from_fn(format!("{}ᵀ", self.name), self.dim, move |a, b| v(b, a))
            .with_fd_step(self.fd_step);
        if let Some(g) = self.grad_xbar.clone() {
            out.grad_x = Some(Arc::new(move |a, b| g(b, a)));
        }
        if let Some(g) = self.grad_x.clone() {
            out.grad_xbar = Some(Arc::new(move |a, b| g(b, a)));
        }
        if let Some(m) = self.mixed.clone() {
            out.mixed = Some(Arc::new(move |a, b| m(b, a).transpose()));
        }
        if let Some(c) = self.cut_locus.clone() {
            out.cut_locus = Some(Arc::new(move |a, b| c(b, a)));
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn has_analytic_mixed_hessian(&self) -> bool {
        self.mixed.is_some()
    }

    pub fn on_cut_locus(&self, x: &Point, xbar: &Point) -> bool {
        self.cut_locus.as_ref().is_some_and(|c| c(x, xbar))
    }

    fn check_point(&self, x: &Point, xbar: &Point) -> Result<()> {
        for p in [x, xbar] {
            if p.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: p.len(),
                });
            }
        }
        if self.on_cut_locus(x, xbar) {
            return Err(Error::CutLocus {
                cost: self.name.clone(),
                x: x.iter().copied().collect(),
                xbar: xbar.iter().copied().collect(),
            });
        }
        Ok(())
    }

    fn check_step(&self, x: &Point, xbar: &Point) -> Result<f64> {
        let h = self.fd_step;
        let scale = 1.0 + x.amax().max(xbar.amax());
        if !(h > 0.0) || h < 1e-13 * scale {
            return Err(Error::DegenerateStep { step: h, scale });
        }
        Ok(h)
    }

    /// `c(x, x̄)`.
    pub fn eval(&self, x: &Point, xbar: &Point) -> Result<f64> {
        self.check_point(x, xbar)?;
        Ok((self.value)(x, xbar))
    }

    /// `Dc(x, x̄)`, the gradient in `x`.
    pub fn grad_x(&self, x: &Point, xbar: &Point) -> Result<DVector<f64>> {
        self.check_point(x, xbar)?;
        if let Some(g) = &self.grad_x {
            return Ok(g(x, xbar));
        }
        let h = self.check_step(x, xbar)?;
        Ok(DVector::from_iterator(
            self.dim,
            (0..self.dim).map(|i| {
                let e = unit(self.dim, i) * h;
                ((self.value)(&(x + &e), xbar) - (self.value)(&(x - &e), xbar)) / (2.0 * h)
            }),
        ))
    }

    /// `D̄c(x, x̄)`, the gradient in `x̄`.
    pub fn grad_xbar(&self, x: &Point, xbar: &Point) -> Result<DVector<f64>> {
        self.check_point(x, xbar)?;
        if let Some(g) = &self.grad_xbar {
            return Ok(g(x, xbar));
        }
        let h = self.check_step(x, xbar)?;
        Ok(DVector::from_iterator(
            self.dim,
            (0..self.dim).map(|i| {
                let e = unit(self.dim, i) * h;
                ((self.value)(x, &(xbar + &e)) - (self.value)(x, &(xbar - &e))) / (2.0 * h)
            }),
        ))
    }

    /// `(D D̄c)_{ij} = ∂²c/∂xⁱ∂x̄ʲ`, closed form when available.
    pub fn mixed_hessian(&self, x: &Point, xbar: &Point) -> Result<DMatrix<f64>> {
        self.check_point(x, xbar)?;
        match &self.mixed {
            Some(m) => Ok(m(x, xbar)),
            None => self.mixed_hessian_fd(x, xbar),
        }
    }

    /// Mixed Hessian by the four-point central stencil, ignoring any closed form.
    pub fn mixed_hessian_fd(&self, x: &Point, xbar: &Point) -> Result<DMatrix<f64>> {
        self.check_point(x, xbar)?;
        let h = self.check_step(x, xbar)?;
        let n = self.dim;
        let c = &self.value;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let ei = unit(n, i) * h;
            let (xp, xm) = (x + &ei, x - &ei);
            for j in 0..n {
                let ej = unit(n, j) * h;
                let (yp, ym) = (xbar + &ej, xbar - &ej);
                m[(i, j)] = (c(&xp, &yp) - c(&xp, &ym) - c(&xm, &yp) + c(&xm, &ym)) / (4.0 * h * h);
            }
        }
        Ok(m)
    }

    /// Samples the twist condition: `x̄ ↦ Dc(x, x̄)` injective on `samples`
    /// and `D D̄c` nonsingular at each of them.
    pub fn check_twist(&self, x: &Point, samples: &[Point], tol: f64) -> Result<TwistReport> {
        let images = samples
            .iter()
            .map(|y| self.grad_x(x, y))
            .collect::<Result<Vec<_>>>()?;
        let scale = 1.0 + images.iter().fold(0.0_f64, |a, v| a.max(v.amax()));
        let mut min_separation = f64::INFINITY;
        let mut colliding_pair = None;
        for i in 0..images.len() {
            for j in i + 1..images.len() {
                let d = (&images[i] - &images[j]).norm();
                if d < min_separation {
                    min_separation = d;
                }
                if d <= tol * scale && colliding_pair.is_none() {
                    colliding_pair = Some((i, j));
                }
            }
        }
        let mut singular_sample = None;
        for (k, y) in samples.iter().enumerate() {
            if !self.check_nondegenerate(x, y, tol)? {
                singular_sample = Some(k);
                break;
            }
        }
        Ok(TwistReport {
            holds: colliding_pair.is_none() && singular_sample.is_none(),
            samples: samples.len(),
            min_separation,
            colliding_pair,
            singular_sample,
        })
    }

    /// `|det D D̄c(x, x̄)| > tol`.
    pub fn check_nondegenerate(&self, x: &Point, xbar: &Point, tol: f64) -> Result<bool> {
        Ok(self.mixed_hessian(x, xbar)?.determinant().abs() > tol)
    }
}

/// Outcome of a sampled twist check.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistReport {
    pub holds: bool,
    /// Sample count (the resolution the verdict rests on).
    pub samples: usize,
    pub min_separation: f64,
    pub colliding_pair: Option<(usize, usize)>,
    pub singular_sample: Option<usize>,
}

/// A one-dimensional cost tabulated on a product grid `xs × x̄s` and
/// interpolated by cubic convolution in each variable.
#[derive(Debug, Clone)]
pub struct GridCost {
    xs: Vec<f64>,
    ys: Vec<f64>,
    values: Vec<f64>,
}

fn keys_weights(t: f64) -> [f64; 4] {
    // Catmull–Rom (a = −1/2): reproduces quadratics exactly.
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

fn locate(axis: &[f64], v: f64) -> (usize, f64) {
    let n = axis.len();
    let h = (axis[n - 1] - axis[0]) / (n - 1) as f64;
    let u = ((v - axis[0]) / h).clamp(0.0, (n - 1) as f64);
    let i = (u.floor() as usize).min(n - 2);
    (i, u - i as f64)
}

impl GridCost {
    /// `values` is row-major with `x` as the slow axis. Both axes must be uniform.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() < 4 || ys.len() < 4 || values.len() != xs.len() * ys.len() {
            return Err(Error::InvalidArgument(
                "custom-grid cost needs at least 4×4 samples filling the product grid".into(),
            ));
        }
        for axis in [&xs, &ys] {
            let h = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
            if !(h > 0.0) || axis.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
                return Err(Error::InvalidArgument("custom-grid axes must be uniform and increasing".into()));
            }
        }
        Ok(Self { xs, ys, values })
    }

    pub fn from_fn(xs: Vec<f64>, ys: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(xs, ys, values)
    }

    /// Reads rows `x,xbar,c` (header required) covering a full product grid.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Parse(format!("expected 3 columns, found {}", rec.len())));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
            rows.push((parse(&rec[0])?, parse(&rec[1])?, parse(&rec[2])?));
        }
        let mut xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for axis in [&mut xs, &mut ys] {
            axis.sort_by(|a, b| a.total_cmp(b));
            axis.dedup();
        }
        if rows.len() != xs.len() * ys.len() {
            return Err(Error::Parse("custom-grid rows do not form a product grid".into()));
        }
        let mut values = vec![f64::NAN; rows.len()];
        for (x, y, c) in rows {
            let i = xs.partition_point(|&v| v < x);
            let j = ys.partition_point(|&v| v < y);
            values[i * ys.len() + j] = c;
        }
        Self::new(xs, ys, values)
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let (i, tx) = locate(&self.xs, x);
        let (j, ty) = locate(&self.ys, y);
        let wx = keys_weights(tx);
        let wy = keys_weights(ty);
        let (nx, ny) = (self.xs.len() as isize, self.ys.len() as isize);
        let mut acc = 0.0;
        for (a, wa) in wx.iter().enumerate() {
            let ii = (i as isize + a as isize - 1).clamp(0, nx - 1) as usize;
            for (b, wb) in wy.iter().enumerate() {
                let jj = (j as isize + b as isize - 1).clamp(0, ny - 1) as usize;
                acc += wa * wb * self.values[ii * self.ys.len() + jj];
            }
        }
        acc
    }

    /// Wraps the table as a [`CostField`]; points outside the table lie on the cut locus.
    pub fn into_cost(self) -> CostField {
        let (x0, x1) = (self.xs[0], self.xs[self.xs.len() - 1]);
        let (y0, y1) = (self.ys[0], self.ys[self.ys.len() - 1]);
        let span = (x1 - x0).max(y1 - y0);
        let table = Arc::new(self);
        CostField::from_fn("custom-grid", 1, move |x, y| table.value(x[0], y[0]))
            .with_cut_locus(move |x, y| x[0] < x0 || x[0] > x1 || y[0] < y0 || y[0] > y1)
            .with_fd_step(DEFAULT_FD_STEP * span)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        DVector::from_column_slice(v)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(CostField::quadratic(1).eval(&p(&[1.0]), &p(&[3.0])).unwrap(), 2.0);
        assert_eq!(CostField::bilinear(2).eval(&p(&[1.0, 0.0]), &p(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(CostField::log(1, 1e-3).eval(&p(&[0.0]), &p(&[1.0])).unwrap(), 0.0);
    }

    #[test]
    fn log_cost_cut_locus() {
        let c = CostField::log(1, 1e-3);
        let err = c.eval(&p(&[0.5]), &p(&[0.5])).unwrap_err();
        assert!(matches!(err, Error::CutLocus { .. }));
        assert!(matches!(c.mixed_hessian(&p(&[0.5]), &p(&[0.5005])), Err(Error::CutLocus { .. })));
    }

    #[test]
    fn constant_mixed_hessians() {
        for c in [CostField::quadratic(3), CostField::bilinear(3)] {
            let m = c.mixed_hessian(&p(&[0.3, -1.0, 2.0]), &p(&[1.0, 0.5, 0.0])).unwrap();
            assert_eq!(m, -DMatrix::identity(3, 3));
        }
    }

    #[test]
    fn log_mixed_hessian_matches_fd() {
        // d²/dx dx̄ of −log|x − x̄| is −1/(x − x̄)², i.e. −1 at (0, 1).
        let c = CostField::log(1, 1e-3);
        let (x, y) = (p(&[0.0]), p(&[1.0]));
        let exact = c.mixed_hessian(&x, &y).unwrap()[(0, 0)];
        assert_eq!(exact, -1.0);
        let fd = c.mixed_hessian_fd(&x, &y).unwrap()[(0, 0)];
        assert!(((fd - exact) / exact).abs() < 1e-6, "fd = {fd}");
    }

    #[test]
    fn degenerate_step_is_rejected() {
        let c = CostField::log(1, 1e-3).with_fd_step(1e-300);
        assert!(matches!(
            c.mixed_hessian_fd(&p(&[0.0]), &p(&[1.0])),
            Err(Error::DegenerateStep { .. })
        ));
        let c = CostField::quadratic(1).finite_difference_only().with_fd_step(0.0);
        assert!(c.mixed_hessian(&p(&[0.0]), &p(&[1.0])).is_err());
    }

    #[test]
    fn twist_examples() {
        let q = CostField::quadratic(1);
        let grid: Vec<Point> = (0..=20).map(|k| p(&[k as f64 / 20.0])).collect();
        assert!(q.check_twist(&p(&[0.0]), &grid, 1e-9).unwrap().holds);

        let single = q.check_twist(&p(&[0.0]), &grid[..1], 1e-9).unwrap();
        assert!(single.holds);
        assert_eq!(single.samples, 1);

        // Dc(0, x̄) = sin x̄ repeats: sin θ = sin(π − θ) on an even grid.
        let cosine = CostField::from_fn("cos", 1, |x, y| (x[0] - y[0]).cos());
        let ring: Vec<Point> = (0..16).map(|k| p(&[std::f64::consts::TAU * k as f64 / 16.0])).collect();
        let r = cosine.check_twist(&p(&[0.0]), &ring, 1e-7).unwrap();
        assert!(!r.holds);
        let (i, j) = r.colliding_pair.expect("collision");
        let s = |k: usize| (ring[k][0]).sin();
        assert!((s(i) - s(j)).abs() < 1e-9);
    }

    #[test]
    fn nondegeneracy_examples() {
        for n in 1..=3 {
            let c = CostField::quadratic(n);
            let m = c.mixed_hessian(&DVector::zeros(n), &DVector::zeros(n)).unwrap();
            assert_eq!(m.determinant(), (-1.0_f64).powi(n as i32));
            assert!(c.check_nondegenerate(&DVector::zeros(n), &DVector::zeros(n), 1e-12).unwrap());
        }
        let rank_one = CostField::from_fn("x1y1", 2, |x, y| x[0] * y[0]);
        assert!(!rank_one.check_nondegenerate(&p(&[0.2, 0.3]), &p(&[1.0, -1.0]), 1e-6).unwrap());
        let log = CostField::log(1, 1e-3);
        assert!(log.check_nondegenerate(&p(&[0.0]), &p(&[1.0]), 1e-12).unwrap());
    }

    #[test]
    fn transposition_swaps_arguments() {
        let c = CostField::sqrt1p(2);
        let (x, y) = (p(&[0.1, 0.7]), p(&[-0.4, 0.2]));
        let a = c.mixed_hessian(&x, &y).unwrap();
        let b = c.transposed().mixed_hessian(&y, &x).unwrap();
        assert_eq!(a, b.transpose());
        let fd_a = c.clone().finite_difference_only().mixed_hessian(&x, &y).unwrap();
        let fd_b = c.transposed().finite_difference_only().mixed_hessian(&y, &x).unwrap();
        assert!((fd_a - fd_b.transpose()).amax() < 1e-7);
    }

    #[test]
    fn rotated_target_matches_fd() {
        let q = crate::linalg::rotation2(0.4);
        let c = CostField::sqrt1p(2).with_target_rotation(&q);
        let (x, y) = (p(&[0.3, -0.2]), p(&[0.5, 0.9]));
        let analytic = c.mixed_hessian(&x, &y).unwrap();
        let fd = c.mixed_hessian_fd(&x, &y).unwrap();
        assert!((analytic - fd).amax() < 1e-7);
        let g = c.grad_xbar(&x, &y).unwrap();
        let gfd = c.clone().finite_difference_only().grad_xbar(&x, &y).unwrap();
        assert!((g - gfd).amax() < 1e-7);
    }

    #[test]
    fn grid_cost_reproduces_bilinear() {
        let axis: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        let table = GridCost::from_fn(axis.clone(), axis, |x, y| -x * y).unwrap();
        let c = table.into_cost();
        let m = c.mixed_hessian(&p(&[0.43]), &p(&[0.61])).unwrap();
        assert!((m[(0, 0)] + 1.0).abs() < 1e-6);
        assert!(c.on_cut_locus(&p(&[1.2]), &p(&[0.5])));
    }

    #[test]
    fn grid_cost_from_csv() {
        let mut text = String::from("x,xbar,c\n");
        for i in 0..5 {
            for j in 0..5 {
                let (x, y) = (i as f64 * 0.25, j as f64 * 0.25);
                text.push_str(&format!("{x},{y},{}\n", 0.5 * (x - y) * (x - y)));
            }
        }
        let c = GridCost::from_csv(text.as_bytes()).unwrap().into_cost();
        assert!((c.eval(&p(&[0.5]), &p(&[0.75])).unwrap() - 0.03125).abs() < 1e-12);
        assert!(GridCost::from_csv("x,xbar,c\n0,0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn builtin_registry() {
        for id in BUILTIN_COSTS {
            assert_eq!(CostField::builtin(id, 2).unwrap().name(), id);
        }
        assert!(CostField::builtin("nope", 1).is_err());
    }
}
