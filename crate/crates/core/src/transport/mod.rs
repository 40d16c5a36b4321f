//! Transport maps and the desk-scale solvers that produce them.

mod discrete;
mod gaussian;
mod monotone;
mod potential;

pub use discrete::{
    cyclical_monotonicity_check, cyclical_monotonicity_sampled, read_point_cloud, solve_discrete,
    write_point_cloud, CyclicalReport, DiscretePlan,
};
pub use gaussian::{gaussian_map, gaussian_map_matrix, gaussian_potentials};
pub use monotone::{interpolate_1d, solve_1d_monotone};
pub use potential::{map_from_potential, Potential, PotentialCheck, TransportPotentials};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::cost::{CostField, Point};
use crate::density::DensitySpec;
use crate::domain::{BoxDomain, Grid};
use crate::error::{Error, Result};

type MapFn = Arc<dyn Fn(&Point) -> Result<Point> + Send + Sync>;
type JacFn = Arc<dyn Fn(&Point) -> Result<DMatrix<f64>> + Send + Sync>;

/// How a map was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Analytic,
    GridInterpolated,
    DiscreteMatching,
}

/// A map `F: M → M̄` between two boxes, with an analytic or central-difference Jacobian.
#[derive(Clone)]
pub struct TransportMap {
    name: String,
    kind: MapKind,
    source: BoxDomain,
    target: BoxDomain,
    eval: MapFn,
    jacobian: Option<JacFn>,
    fd_step: f64,
}

impl fmt::Debug for TransportMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransportMap")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("source", &self.source)
            .field("target", &self.target)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl TransportMap {
    pub fn new<F>(name: impl Into<String>, kind: MapKind, source: BoxDomain, target: BoxDomain, f: F) -> Self
    where
        F: Fn(&Point) -> Result<Point> + Send + Sync + 'static,
    {
        let fd_step = 1e-5 * source.diameter();
        Self {
            name: name.into(),
            kind,
            source,
            target,
            eval: Arc::new(f),
            jacobian: None,
            fd_step,
        }
    }

    /// Closed-form map with optional closed-form Jacobian.
    pub fn analytic<F>(name: impl Into<String>, source: BoxDomain, target: BoxDomain, f: F) -> Self
    where
        F: Fn(&Point) -> Point + Send + Sync + 'static,
    {
        Self::new(name, MapKind::Analytic, source, target, move |x| Ok(f(x)))
    }

    pub fn with_jacobian<J>(mut self, j: J) -> Self
    where
        J: Fn(&Point) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(j));
        self
    }

    /// Drops the closed-form Jacobian so that central differences are used.
    pub fn finite_difference_only(mut self) -> Self {
        self.jacobian = None;
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// `x ↦ A x + b`.
    pub fn affine(name: impl Into<String>, a: DMatrix<f64>, b: DVector<f64>, source: BoxDomain, target: BoxDomain) -> Self {
        let a2 = a.clone();
        Self::analytic(name, source, target, move |x| &a * x + &b).with_jacobian(move |_| Ok(a2.clone()))
    }

    pub fn linear(name: impl Into<String>, a: DMatrix<f64>, source: BoxDomain, target: BoxDomain) -> Self {
        let n = a.nrows();
        Self::affine(name, a, DVector::zeros(n), source, target)
    }

    pub fn identity(domain: BoxDomain) -> Self {
        let n = domain.dim();
        Self::linear("identity", DMatrix::identity(n, n), domain.clone(), domain)
    }

    /// Rotation of the plane by `theta` (n = 2).
    pub fn rotation(theta: f64, source: BoxDomain, target: BoxDomain) -> Self {
        Self::linear(
            format!("rotation_{:.4}", theta.to_degrees()),
            crate::linalg::rotation2(theta),
            source,
            target,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn source(&self) -> &BoxDomain {
        &self.source
    }

    pub fn target(&self) -> &BoxDomain {
        &self.target
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn eval(&self, x: &Point) -> Result<Point> {
        (self.eval)(x)
    }

    /// Closed-form Jacobian if present, otherwise [`Self::jacobian_fd`].
    pub fn jacobian(&self, x: &Point) -> Result<DMatrix<f64>> {
        match &self.jacobian {
            Some(j) => j(x),
            None => self.jacobian_fd(x),
        }
    }

    /// Central-difference Jacobian with step `fd_step`.
    pub fn jacobian_fd(&self, x: &Point) -> Result<DMatrix<f64>> {
        let h = self.fd_step;
        let n = self.dim();
        let mut j = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let d = (self.eval(&xp)? - self.eval(&xm)?) / (2.0 * h);
            j.set_column(k, &d);
        }
        Ok(j)
    }

    /// Forward and backward one-sided difference Jacobians.
    pub fn jacobian_one_sided(&self, x: &Point) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let h = self.fd_step;
        let n = self.dim();
        let f0 = self.eval(x)?;
        let mut fwd = DMatrix::zeros(n, n);
        let mut bwd = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            fwd.set_column(k, &((self.eval(&xp)? - &f0) / h));
            bwd.set_column(k, &((&f0 - self.eval(&xm)?) / h));
        }
        Ok((fwd, bwd))
    }

    /// `∂ₖ DF(x)`: derivative of the Jacobian along axis `k`.
    pub fn jacobian_derivative(&self, x: &Point, k: usize, step: f64) -> Result<DMatrix<f64>> {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += step;
        xm[k] -= step;
        if self.jacobian.is_some() {
            return Ok((self.jacobian(&xp)? - self.jacobian(&xm)?) / (2.0 * step));
        }
        // second differences of F: column j of ∂ₖDF is ∂ₖ∂ⱼF
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let col = if j == k {
                (self.eval(&xp)? - self.eval(x)? * 2.0 + self.eval(&xm)?) / (step * step)
            } else {
                let shift = |a: f64, b: f64| {
                    let mut y = x.clone();
                    y[k] += a * step;
                    y[j] += b * step;
                    self.eval(&y)
                };
                (shift(1.0, 1.0)? - shift(1.0, -1.0)? - shift(-1.0, 1.0)? + shift(-1.0, -1.0)?) / (4.0 * step * step)
            };
            out.set_column(j, &col);
        }
        Ok(out)
    }
}

/// `∫ c(x, F(x)) ρ(x) dx` by the midpoint rule on `grid`.
pub fn total_cost(map: &TransportMap, rho: &DensitySpec, cost: &CostField, grid: &Grid) -> Result<f64> {
    let w = grid.cell_volume();
    let mut acc = 0.0;
    for x in grid.points() {
        let r = rho.value(&x);
        if r == 0.0 {
            continue;
        }
        acc += cost.eval(&x, &map.eval(&x)?)? * r;
    }
    Ok(acc * w)
}

/// Tent map `1 − |2x − 1|` rescaled to `domain` (n = 1): preserves the uniform
/// measure, decreasing on the right half.
pub fn tent_map(domain: BoxDomain) -> Result<TransportMap> {
    if domain.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: domain.dim(),
        });
    }
    let (lo, w) = (domain.lo()[0], domain.width(0));
    Ok(TransportMap::analytic("tent", domain.clone(), domain, move |x| {
        let t = (x[0] - lo) / w;
        DVector::from_element(1, lo + w * (1.0 - (2.0 * t - 1.0).abs()))
    })
    .with_jacobian(move |x| {
        let t = (x[0] - lo) / w;
        if t == 0.5 {
            return Err(Error::NotDifferentiable(vec![x[0]]));
        }
        Ok(DMatrix::from_element(1, 1, if t < 0.5 { 2.0 } else { -2.0 }))
    }))
}

/// `x ↦ x + a·sin(π(x − lo)/w)` on a 1-D box; fixes both endpoints.
pub fn sinusoidal_map(domain: BoxDomain, amplitude: f64) -> Result<TransportMap> {
    if domain.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: domain.dim(),
        });
    }
    let (lo, w) = (domain.lo()[0], domain.width(0));
    let k = std::f64::consts::PI / w;
    Ok(TransportMap::analytic("sinusoid", domain.clone(), domain, move |x| {
        DVector::from_element(1, x[0] + amplitude * (k * (x[0] - lo)).sin())
    })
    .with_jacobian(move |x| Ok(DMatrix::from_element(1, 1, 1.0 + amplitude * k * (k * (x[0] - lo)).cos()))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> BoxDomain {
        BoxDomain::cube(1, 0.0, 1.0).unwrap()
    }

    #[test]
    fn fd_jacobian_is_second_order() {
        let b = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let f = TransportMap::analytic("cubic", b.clone(), b, |x| {
            DVector::from_column_slice(&[x[0].powi(3) + x[1], (x[0] * x[1]).sin()])
        })
        .with_jacobian(|x| {
            let c = (x[0] * x[1]).cos();
            Ok(DMatrix::from_row_slice(2, 2, &[3.0 * x[0] * x[0], 1.0, x[1] * c, x[0] * c]))
        });
        let x = DVector::from_column_slice(&[0.3, -0.4]);
        let exact = f.jacobian(&x).unwrap();
        let e1 = (f.clone().with_fd_step(1e-2).jacobian_fd(&x).unwrap() - &exact).amax();
        let e2 = (f.clone().with_fd_step(5e-3).jacobian_fd(&x).unwrap() - &exact).amax();
        assert!(e1 / e2 > 3.5 && e1 / e2 < 4.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn second_derivative_routes_agree() {
        let b = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let f = TransportMap::analytic("q", b.clone(), b, |x| {
            DVector::from_column_slice(&[x[0] * x[0] * x[1], x[1].exp()])
        })
        .with_fd_step(1e-3);
        let x = DVector::from_column_slice(&[0.5, 0.2]);
        // ∂₀ DF = [[2x₁, 2x₀], [0, 0]]
        let d0 = f.jacobian_derivative(&x, 0, 1e-3).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.4, 1.0, 0.0, 0.0]);
        assert!((d0 - want).amax() < 1e-6);
    }

    #[test]
    fn total_cost_dilation() {
        let f = TransportMap::linear(
            "dilation",
            DMatrix::from_element(1, 1, 2.0),
            unit(),
            BoxDomain::cube(1, 0.0, 2.0).unwrap(),
        );
        let g = Grid::uniform(unit(), 1000).unwrap();
        let c = total_cost(&f, &DensitySpec::uniform(unit()), &CostField::quadratic(1), &g).unwrap();
        assert!((c - 1.0 / 6.0).abs() < 1e-6);
    }

    #[test]
    fn total_cost_identity_zero() {
        let g = Grid::uniform(unit(), 50).unwrap();
        let c = total_cost(&TransportMap::identity(unit()), &DensitySpec::uniform(unit()), &CostField::sqrt1p(1), &g);
        // sqrt1p has c(x, x) = 1, the quadratic cost vanishes
        assert!((c.unwrap() - 1.0).abs() < 1e-12);
        let q = total_cost(&TransportMap::identity(unit()), &DensitySpec::uniform(unit()), &CostField::quadratic(1), &g);
        assert_eq!(q.unwrap(), 0.0);
    }

    #[test]
    fn tent_is_measure_preserving_and_folds() {
        let t = tent_map(unit()).unwrap();
        let at = |v: f64| t.eval(&DVector::from_element(1, v)).unwrap()[0];
        assert_eq!(at(0.25), 0.5);
        assert_eq!(at(0.75), 0.5);
        assert_eq!(t.jacobian(&DVector::from_element(1, 0.8)).unwrap()[(0, 0)], -2.0);
    }

    #[test]
    fn sinusoid_fixes_endpoints() {
        let s = sinusoidal_map(unit(), 0.1).unwrap();
        let at = |v: f64| s.eval(&DVector::from_element(1, v)).unwrap()[0];
        assert!(at(0.0).abs() < 1e-15);
        assert!((at(1.0) - 1.0).abs() < 1e-15);
        assert!((at(0.5) - 0.6).abs() < 1e-15);
    }
}
