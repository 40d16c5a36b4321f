//! Scalar potentials and the map they induce through the twist condition.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{MapKind, TransportMap};
use crate::cost::{CostField, Point};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&Point) -> DVector<f64> + Send + Sync>;

/// A scalar field with an optional closed-form gradient.
#[derive(Clone)]
pub struct Potential {
    value: ScalarFn,
    gradient: Option<GradFn>,
    fd_step: f64,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl Potential {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(f),
            gradient: None,
            fd_step: 1e-6,
        }
    }

    pub fn with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }

    /// `x ↦ b·x`.
    pub fn linear(b: DVector<f64>) -> Self {
        let b2 = b.clone();
        Self::from_fn(move |x| b.dot(x)).with_gradient(move |_| b2.clone())
    }

    /// `x ↦ ½ xᵀQx` for symmetric `Q`.
    pub fn quadratic_form(q: DMatrix<f64>) -> Self {
        let q2 = q.clone();
        Self::from_fn(move |x| 0.5 * x.dot(&(&q * x))).with_gradient(move |x| &q2 * x)
    }

    /// `−u`.
    pub fn negated(&self) -> Self {
        let v = Arc::clone(&self.value);
        let g = self.gradient.clone();
        Self {
            value: Arc::new(move |x| -v(x)),
            gradient: g.map(|g| Arc::new(move |x: &Point| -g(x)) as GradFn),
            fd_step: self.fd_step,
        }
    }

    pub fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Point) -> DVector<f64> {
        if let Some(g) = &self.gradient {
            return g(x);
        }
        let h = self.fd_step * x.amax().max(1.0);
        DVector::from_fn(x.len(), |k, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            (self.value(&xp) - self.value(&xm)) / (2.0 * h)
        })
    }
}

/// A pair `(u, v)` with `u(x) + v(x̄) ≤ c(x, x̄)`, equality on the optimal graph.
#[derive(Debug, Clone)]
pub struct TransportPotentials {
    pub u: Potential,
    pub v: Potential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialCheck {
    /// `max (u(x) + v(x̄) − c(x, x̄))` over the product sample; should be ≤ 0.
    pub max_excess: f64,
    /// `max |u(x) + v(F(x)) − c(x, F(x))|` over the graph sample.
    pub max_graph_gap: f64,
}

impl TransportPotentials {
    pub fn check(&self, cost: &CostField, xs: &[Point], xbars: &[Point], map: &TransportMap) -> Result<PotentialCheck> {
        let mut max_excess = f64::NEG_INFINITY;
        for x in xs {
            let ux = self.u.value(x);
            for y in xbars {
                max_excess = max_excess.max(ux + self.v.value(y) - cost.eval(x, y)?);
            }
        }
        let mut max_graph_gap = 0.0_f64;
        for x in xs {
            let y = map.eval(x)?;
            max_graph_gap = max_graph_gap.max((self.u.value(x) + self.v.value(&y) - cost.eval(x, &y)?).abs());
        }
        Ok(PotentialCheck {
            max_excess,
            max_graph_gap,
        })
    }
}

const NEWTON_MAX_ITER: usize = 100;
const ROOT_TOL: f64 = 1e-8;

/// Solves `Dₓc(x, F(x)) = −Du(x)` for `F(x)` in `target` by damped Newton
/// iteration with Jacobian `D D̄c`, started at the centre of `target`.
pub fn map_from_potential(u: &Potential, cost: &CostField, source: BoxDomain, target: BoxDomain) -> Result<TransportMap> {
    let u = u.clone();
    let cost = cost.clone();
    let t = target.clone();
    Ok(TransportMap::new("potential", MapKind::Analytic, source, target, move |x| {
        solve_twist(&u.gradient(x), &cost, x, &t)
    }))
}

fn solve_twist(du: &DVector<f64>, cost: &CostField, x: &Point, target: &BoxDomain) -> Result<Point> {
    let residual = |y: &Point| -> Result<DVector<f64>> { Ok(cost.grad_x(x, y)? + du) };
    let mut y = target.center();
    let mut r = residual(&y)?;
    let scale = 1.0 + du.norm();
    for _ in 0..NEWTON_MAX_ITER {
        if r.norm() < 1e-3 * ROOT_TOL * scale {
            break;
        }
        let j = cost.mixed_hessian(x, &y)?;
        let step = j.lu().solve(&(-&r)).ok_or(Error::Degenerate { det: 0.0, tol: 0.0 })?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let trial = &y + &step * alpha;
            if target.contains(&trial) && !cost.on_cut_locus(x, &trial) {
                let rt = residual(&trial)?;
                if rt.norm() < r.norm() {
                    y = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r.norm() < ROOT_TOL * scale {
        Ok(y)
    } else {
        Err(Error::NoRoot {
            point: x.iter().copied().collect(),
            residual: r.norm(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensitySpec;
    use crate::transport::{gaussian_map, gaussian_potentials, solve_1d_monotone};

    fn p(v: &[f64]) -> Point {
        DVector::from_column_slice(v)
    }

    #[test]
    fn zero_potential_is_identity() {
        let b = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let f = map_from_potential(&Potential::from_fn(|_| 0.0), &CostField::quadratic(2), b.clone(), b).unwrap();
        let x = p(&[0.3, -0.7]);
        assert!((f.eval(&x).unwrap() - &x).amax() < 1e-10);
    }

    #[test]
    fn linear_potential_shifts() {
        let src = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let tgt = BoxDomain::cube(1, 0.25, 1.25).unwrap();
        let f = map_from_potential(&Potential::linear(p(&[0.25])), &CostField::quadratic(1), src.clone(), tgt.clone()).unwrap();
        let m = solve_1d_monotone(&DensitySpec::uniform(src), &DensitySpec::uniform(tgt), 11).unwrap();
        for x in [0.05, 0.4, 0.9] {
            let x = p(&[x]);
            assert!((f.eval(&x).unwrap()[0] - x[0] - 0.25).abs() < 1e-10);
            assert!((f.eval(&x).unwrap()[0] - m.eval(&x).unwrap()[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn bilinear_quadratic_potential() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let src = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let tgt = BoxDomain::cube(2, -4.0, 4.0).unwrap();
        let f = map_from_potential(&Potential::quadratic_form(q.clone()), &CostField::bilinear(2), src, tgt).unwrap();
        let x = p(&[0.4, -0.9]);
        assert!((f.eval(&x).unwrap() - &q * &x).amax() < 1e-10);
        // the root satisfies the defining equation
        let y = f.eval(&x).unwrap();
        let r = CostField::bilinear(2).grad_x(&x, &y).unwrap() + &q * &x;
        assert!(r.norm() < 1e-8);
    }

    #[test]
    fn no_root_outside_target() {
        let b = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let f = map_from_potential(&Potential::linear(p(&[5.0])), &CostField::quadratic(1), b.clone(), b).unwrap();
        assert!(matches!(f.eval(&p(&[0.5])), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn gaussian_potentials_are_kantorovich_pair() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let sb = DMatrix::from_row_slice(2, 2, &[3.0, -0.5, -0.5, 0.7]);
        let pot = gaussian_potentials(&s, &sb).unwrap();
        let f = gaussian_map(&s, &sb).unwrap();
        let grid: Vec<Point> = (0..7)
            .flat_map(|i| (0..7).map(move |j| p(&[-1.5 + 0.5 * i as f64, -1.5 + 0.5 * j as f64])))
            .collect();
        let c = CostField::quadratic(2);
        let chk = pot.check(&c, &grid, &grid, &f).unwrap();
        assert!(chk.max_excess <= 1e-12);
        assert!(chk.max_graph_gap < 1e-12);
        // Du = +Dₓc on the graph; the negated potential reproduces the map
        for x in &grid {
            let y = f.eval(x).unwrap();
            assert!((pot.u.gradient(x) - c.grad_x(x, &y).unwrap()).amax() < 1e-10);
        }
        let g = map_from_potential(&pot.u.negated(), &c, f.source().clone(), f.target().clone()).unwrap();
        let x = p(&[0.7, -0.2]);
        assert!((g.eval(&x).unwrap() - f.eval(&x).unwrap()).amax() < 1e-9);
    }

    #[test]
    fn fd_gradient_matches() {
        let u = Potential::from_fn(|x| x[0].sin() * x[1]);
        let x = p(&[0.3, 2.0]);
        let g = u.gradient(&x);
        assert!((g[0] - 0.3_f64.cos() * 2.0).abs() < 1e-8);
        assert!((g[1] - 0.3_f64.sin()).abs() < 1e-8);
    }
}
