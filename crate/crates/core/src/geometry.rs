//! The pseudo-metrics `h_c` and `h^{ρ,ρ̄}` on the product space, the
//! symplectic form `ω_c`, the space-orientation form `τ`, and the h-volume of
//! simple n-vectors.
//!
//! Points of the product space are stacked as `(x, x̄) ∈ R^{2n}`; the first `n`
//! coordinates belong to the source and the last `n` to the target.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::cost::{CostField, Point};
use crate::density::DensitySpec;
use crate::error::{Error, Result};
use crate::linalg::{concat, split, sym};

/// Relative eigenvalue threshold for signature and degeneracy decisions.
pub const SIGNATURE_RTOL: f64 = 1e-10;

/// Relative threshold on `|det D D̄c|` below which the cost is treated as degenerate.
pub const DEGENERACY_RTOL: f64 = 1e-12;

/// Exponent applied to `ρρ̄/|det D D̄c|` in the conformal factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConformalExponent {
    /// `1/n`, the exponent that makes optimal graphs calibrated.
    OneOverN,
    /// `1/(n+1)`; wrong on purpose, used for fault injection.
    OneOverNPlusOne,
}

/// Normalisation of the conformal metric `κ·h_c`, `κ = s·(ρρ̄/|det D D̄c|)^e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConformalConvention {
    /// Include the prefactor `s = 1/2`.
    pub half: bool,
    pub exponent: ConformalExponent,
}

impl Default for ConformalConvention {
    fn default() -> Self {
        Self {
            half: true,
            exponent: ConformalExponent::OneOverN,
        }
    }
}

impl ConformalConvention {
    pub fn factor(&self, n: usize, ratio: f64) -> f64 {
        let e = match self.exponent {
            ConformalExponent::OneOverN => 1.0 / n as f64,
            ConformalExponent::OneOverNPlusOne => 1.0 / (n as f64 + 1.0),
        };
        let s = if self.half { 0.5 } else { 1.0 };
        s * ratio.powf(e)
    }
}

/// A symmetric `2n × 2n` metric at one point, with its signature.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricAtPoint {
    pub matrix: DMatrix<f64>,
    pub signature: (usize, usize),
}

impl MetricAtPoint {
    /// Wraps a symmetric matrix, computing its signature.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let signature = signature(&matrix)?;
        Ok(Self { matrix, signature })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `h(u, v)`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&(&self.matrix * v))
    }

    /// Gram matrix `h(vᵢ, vⱼ)` of a frame.
    pub fn gram(&self, plane: &TangentPlane) -> DMatrix<f64> {
        let f = plane.frame();
        sym(&(f.transpose() * &self.matrix * f))
    }

    /// Upper-right `n × n` block: `−D D̄c` scaled by any conformal factor.
    pub fn mixed_block(&self) -> DMatrix<f64> {
        let n = self.dim() / 2;
        self.matrix.view((0, n), (n, n)).into_owned()
    }
}

/// Counts of positive and negative eigenvalues of a symmetric matrix.
///
/// Fails with [`Error::Degenerate`] if any eigenvalue is within
/// `1e-10 × spectral radius` of zero.
pub fn signature(m: &DMatrix<f64>) -> Result<(usize, usize)> {
    let eig = SymmetricEigen::new(sym(m)).eigenvalues;
    let radius = eig.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let tol = SIGNATURE_RTOL * radius;
    if radius == 0.0 || eig.iter().any(|v| v.abs() <= tol) {
        let smallest = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        return Err(Error::Degenerate { det: smallest, tol });
    }
    let pos = eig.iter().filter(|&&v| v > 0.0).count();
    Ok((pos, eig.len() - pos))
}

/// n vectors in `R^{2n}`, stored as the columns of a `2n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentPlane {
    frame: DMatrix<f64>,
}

impl TangentPlane {
    /// Fails unless the columns are linearly independent.
    pub fn new(frame: DMatrix<f64>) -> Result<Self> {
        let (rows, n) = frame.shape();
        if rows != 2 * n || n == 0 {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                found: rows,
            });
        }
        let gram = frame.transpose() * &frame;
        if gram.determinant() <= 1e-14 * gram.amax().powi(n as i32) {
            return Err(Error::InvalidArgument("frame vectors are linearly dependent".into()));
        }
        Ok(Self { frame })
    }

    /// Frame `(eᵢ, B eᵢ)`: tangent plane of the graph of a map with Jacobian `B`.
    pub fn graph(b: &DMatrix<f64>) -> Self {
        let n = b.nrows();
        let mut frame = DMatrix::zeros(2 * n, n);
        frame.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
        frame.view_mut((n, 0), (n, n)).copy_from(b);
        Self { frame }
    }

    /// Frame with source components `v` and target components `vbar` (both `n × n`).
    pub fn from_parts(v: &DMatrix<f64>, vbar: &DMatrix<f64>) -> Result<Self> {
        let n = v.ncols();
        let mut frame = DMatrix::zeros(2 * n, n);
        frame.view_mut((0, 0), (n, n)).copy_from(v);
        frame.view_mut((n, 0), (n, n)).copy_from(vbar);
        Self::new(frame)
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn n(&self) -> usize {
        self.frame.ncols()
    }

    pub fn source_part(&self) -> DMatrix<f64> {
        let n = self.n();
        self.frame.view((0, 0), (n, n)).into_owned()
    }

    pub fn target_part(&self) -> DMatrix<f64> {
        let n = self.n();
        self.frame.view((n, 0), (n, n)).into_owned()
    }

    /// Replaces the frame by `frame · A`; the n-vector scales by `det A`.
    pub fn transformed(&self, a: &DMatrix<f64>) -> Result<Self> {
        Self::new(&self.frame * a)
    }

    /// `dx(ξ)`, `dx̄(ξ)`: determinants of the two projections.
    pub fn projections(&self) -> (f64, f64) {
        (self.source_part().determinant(), self.target_part().determinant())
    }
}

/// Pseudo-metric `h_c = [[0, −D D̄c], [−(D D̄c)ᵀ, 0]]` at `(x, x̄)`.
pub fn base_metric(cost: &CostField, x: &Point, xbar: &Point) -> Result<MetricAtPoint> {
    let m = nondegenerate_mixed(cost, x, xbar)?;
    let n = m.nrows();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, n), (n, n)).copy_from(&(-&m));
    h.view_mut((n, 0), (n, n)).copy_from(&(-m.transpose()));
    MetricAtPoint::new(h)
}

fn nondegenerate_mixed(cost: &CostField, x: &Point, xbar: &Point) -> Result<DMatrix<f64>> {
    let m = cost.mixed_hessian(x, xbar)?;
    let det = m.determinant();
    let tol = DEGENERACY_RTOL * m.amax().max(f64::MIN_POSITIVE).powi(m.nrows() as i32);
    if det.abs() <= tol {
        return Err(Error::Degenerate { det, tol });
    }
    Ok(m)
}

/// `κ(x, x̄) = ½ (ρ(x) ρ̄(x̄) / |det D D̄c|)^{1/n}` under the default convention.
pub fn conformal_factor(
    convention: ConformalConvention,
    cost: &CostField,
    rho: &DensitySpec,
    rhobar: &DensitySpec,
    x: &Point,
    xbar: &Point,
) -> Result<f64> {
    let m = nondegenerate_mixed(cost, x, xbar)?;
    let r = rho.positive_value(x)?;
    let rb = rhobar.positive_value(xbar)?;
    Ok(convention.factor(x.len(), r * rb / m.determinant().abs()))
}

/// Conformal metric `h^{ρ,ρ̄} = κ·h_c` with the default convention.
pub fn conformal_metric(
    cost: &CostField,
    rho: &DensitySpec,
    rhobar: &DensitySpec,
    x: &Point,
    xbar: &Point,
) -> Result<MetricAtPoint> {
    conformal_metric_with(ConformalConvention::default(), cost, rho, rhobar, x, xbar)
}

pub fn conformal_metric_with(
    convention: ConformalConvention,
    cost: &CostField,
    rho: &DensitySpec,
    rhobar: &DensitySpec,
    x: &Point,
    xbar: &Point,
) -> Result<MetricAtPoint> {
    let k = conformal_factor(convention, cost, rho, rhobar, x, xbar)?;
    let base = base_metric(cost, x, xbar)?;
    Ok(MetricAtPoint {
        matrix: base.matrix * k,
        signature: base.signature,
    })
}

/// `ω_c = [[0, −D D̄c], [(D D̄c)ᵀ, 0]]`.
pub fn symplectic_form(cost: &CostField, x: &Point, xbar: &Point) -> Result<DMatrix<f64>> {
    let m = nondegenerate_mixed(cost, x, xbar)?;
    let n = m.nrows();
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    w.view_mut((0, n), (n, n)).copy_from(&(-&m));
    w.view_mut((n, 0), (n, n)).copy_from(&m.transpose());
    Ok(w)
}

/// `ω(u, v) = uᵀ Ω v`.
pub fn evaluate_two_form(omega: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    u.dot(&(omega * v))
}

/// h-volume `‖ξ‖_h = √det h(vᵢ, vⱼ)` of a spacelike frame.
pub fn nvector_norm(metric: &MetricAtPoint, plane: &TangentPlane) -> Result<f64> {
    let margin = is_spacelike(metric, plane, 0.0);
    if !margin.spacelike {
        return Err(Error::NotSpacelike {
            min_eigenvalue: margin.min_eigenvalue,
        });
    }
    Ok(metric.gram(plane).determinant().max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacelikeMargin {
    /// Smallest eigenvalue of the Gram matrix.
    pub min_eigenvalue: f64,
    pub spacelike: bool,
}

/// Smallest Gram eigenvalue; spacelike iff it exceeds `tol`.
pub fn is_spacelike(metric: &MetricAtPoint, plane: &TangentPlane, tol: f64) -> SpacelikeMargin {
    let g = metric.gram(plane);
    let min = SymmetricEigen::new(g)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v));
    SpacelikeMargin {
        min_eigenvalue: min,
        spacelike: min > tol,
    }
}

/// `τ(ξ) = ½ (dx(ξ) + dx̄(ξ))`.
pub fn orientation_value(plane: &TangentPlane) -> f64 {
    let (a, b) = plane.projections();
    0.5 * (a + b)
}

/// Sign of `τ(ξ)`; `+1` means τ-oriented.
pub fn orientation_sign(plane: &TangentPlane) -> Result<i8> {
    let (a, b) = plane.projections();
    let scale = plane.frame().amax().powi(plane.n() as i32).max(f64::MIN_POSITIVE);
    let tau = 0.5 * (a + b);
    if tau.abs() <= 1e-14 * scale {
        return Err(Error::ZeroOrientation);
    }
    Ok(if tau > 0.0 { 1 } else { -1 })
}

/// A metric tensor field on the product space `R^{2n}`.
pub trait MetricField {
    fn metric(&self, p: &DVector<f64>) -> Result<DMatrix<f64>>;
}

impl<F> MetricField for F
where
    F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    fn metric(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        self(p)
    }
}

/// A cost together with its two marginal densities.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub cost: CostField,
    pub source: DensitySpec,
    pub target: DensitySpec,
    pub convention: ConformalConvention,
}

impl TransportProblem {
    pub fn new(cost: CostField, source: DensitySpec, target: DensitySpec) -> Result<Self> {
        let n = cost.dim();
        for d in [source.dim(), target.dim()] {
            if d != n {
                return Err(Error::DimensionMismatch { expected: n, found: d });
            }
        }
        Ok(Self {
            cost,
            source,
            target,
            convention: ConformalConvention::default(),
        })
    }

    pub fn with_convention(mut self, convention: ConformalConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn dim(&self) -> usize {
        self.cost.dim()
    }

    pub fn conformal_factor(&self, x: &Point, xbar: &Point) -> Result<f64> {
        conformal_factor(self.convention, &self.cost, &self.source, &self.target, x, xbar)
    }

    pub fn conformal_metric(&self, x: &Point, xbar: &Point) -> Result<MetricAtPoint> {
        conformal_metric_with(self.convention, &self.cost, &self.source, &self.target, x, xbar)
    }

    pub fn base_metric(&self, x: &Point, xbar: &Point) -> Result<MetricAtPoint> {
        base_metric(&self.cost, x, xbar)
    }

    /// `p ↦ h_c(p)` on stacked points.
    pub fn base_field(&self) -> impl Fn(&DVector<f64>) -> Result<DMatrix<f64>> + '_ {
        move |p| {
            let (x, xbar) = split(p);
            Ok(self.base_metric(&x, &xbar)?.matrix)
        }
    }

    /// `p ↦ h^{ρ,ρ̄}(p)` on stacked points.
    pub fn conformal_field(&self) -> impl Fn(&DVector<f64>) -> Result<DMatrix<f64>> + '_ {
        move |p| {
            let (x, xbar) = split(p);
            Ok(self.conformal_metric(&x, &xbar)?.matrix)
        }
    }
}

/// Stacks `(x, x̄)`.
pub fn product_point(x: &Point, xbar: &Point) -> DVector<f64> {
    concat(x, xbar)
}
