//! The graph `Γ = {(x, F(x))}` of a transport map sampled on a grid, and the
//! pointwise checks that characterise optimal graphs.

use nalgebra::{DMatrix, DVector};

use crate::cost::{CostField, Point};
use crate::curvature::christoffel;
use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::geometry::{TangentPlane, TransportProblem};
use crate::linalg::{concat, min_sym_eigenvalue, skew_difference, max_abs, sym};
use crate::transport::{DiscretePlan, TransportMap};

/// Cells removed from each face before taking sup-norms.
pub const BOUNDARY_EROSION: usize = 2;

/// Grid samples of a map, its values and Jacobians.
#[derive(Debug, Clone)]
pub struct GraphSurface {
    map: TransportMap,
    grid: Grid,
    values: Vec<Option<Point>>,
    jacobians: Vec<Option<DMatrix<f64>>>,
    kinks: Vec<bool>,
}

/// A sup/inf statistic over the interior of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStat {
    pub value: f64,
    /// Where the extreme value occurs.
    pub at: Option<Vec<f64>>,
    pub evaluated: usize,
    /// Interior points excluded as non-differentiable.
    pub flagged: usize,
}

impl GridStat {
    fn new(init: f64) -> Self {
        Self {
            value: init,
            at: None,
            evaluated: 0,
            flagged: 0,
        }
    }

    fn max(&mut self, v: f64, x: &Point) {
        self.evaluated += 1;
        if v > self.value || self.at.is_none() {
            self.value = v.max(self.value);
            self.at = Some(x.iter().copied().collect());
        }
    }

    fn min(&mut self, v: f64, x: &Point) {
        self.evaluated += 1;
        if v < self.value || self.at.is_none() {
            self.value = v.min(self.value);
            self.at = Some(x.iter().copied().collect());
        }
    }
}

impl GraphSurface {
    /// Samples `map` on every node of `grid`. Points where the map or its
    /// Jacobian fails, or where one-sided difference Jacobians disagree, are
    /// flagged as kinks.
    pub fn sample(map: &TransportMap, grid: Grid) -> Result<Self> {
        if grid.dim() != map.dim() {
            return Err(Error::DimensionMismatch {
                expected: map.dim(),
                found: grid.dim(),
            });
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut jacobians = Vec::with_capacity(grid.len());
        let mut kinks = Vec::with_capacity(grid.len());
        let h = map.fd_step();
        for x in grid.points() {
            let v = map.eval(&x).ok();
            let j = v.as_ref().and_then(|_| map.jacobian(&x).ok());
            let kink = match (&j, map.has_analytic_jacobian()) {
                (None, _) => true,
                (Some(_), true) => false,
                (Some(j), false) => match map.jacobian_one_sided(&x) {
                    Ok((fwd, bwd)) => max_abs(&(fwd - bwd)) > 10.0 * h.sqrt() * (1.0 + max_abs(j)),
                    Err(_) => true,
                },
            };
            values.push(v);
            jacobians.push(j);
            kinks.push(kink);
        }
        Ok(Self {
            map: map.clone(),
            grid,
            values,
            jacobians,
            kinks,
        })
    }

    pub fn map(&self) -> &TransportMap {
        &self.map
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn point(&self, k: usize) -> Point {
        self.grid.point(k)
    }

    pub fn value(&self, k: usize) -> Option<&Point> {
        self.values[k].as_ref()
    }

    pub fn jacobian(&self, k: usize) -> Option<&DMatrix<f64>> {
        self.jacobians[k].as_ref()
    }

    pub fn is_kink(&self, k: usize) -> bool {
        self.kinks[k]
    }

    /// Tangent frame `(eᵢ, DF eᵢ)` at node `k`.
    pub fn frame(&self, k: usize) -> Option<TangentPlane> {
        self.jacobian(k).map(TangentPlane::graph)
    }

    /// Interior nodes (eroded by two cells).
    pub fn interior(&self) -> Vec<usize> {
        self.grid.interior(BOUNDARY_EROSION)
    }

    /// Interior nodes split into (smooth, flagged).
    pub fn smooth_interior(&self) -> (Vec<usize>, usize) {
        let all = self.interior();
        let flagged = all.iter().filter(|&&k| self.kinks[k]).count();
        (all.into_iter().filter(|&k| !self.kinks[k]).collect(), flagged)
    }

    fn smooth_nodes(&self) -> (Vec<(usize, Point, Point, DMatrix<f64>)>, usize) {
        let (idx, flagged) = self.smooth_interior();
        let nodes = idx
            .into_iter()
            .map(|k| {
                (
                    k,
                    self.point(k),
                    self.values[k].clone().expect("smooth node has a value"),
                    self.jacobians[k].clone().expect("smooth node has a Jacobian"),
                )
            })
            .collect();
        (nodes, flagged)
    }
}

/// `G = −D D̄c(x, F(x))`.
fn g_block(cost: &CostField, x: &Point, fx: &Point) -> Result<DMatrix<f64>> {
    Ok(-cost.mixed_hessian(x, fx)?)
}

/// Induced metric `g = 2κ·sym(G·DF)` given `F(x)` and `DF(x)`; equal to
/// `(ρρ̄(F)/|det D D̄c|)^{1/n} sym(G·DF)` under the default convention.
pub fn pullback_metric_at(problem: &TransportProblem, x: &Point, fx: &Point, df: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = problem.conformal_factor(x, fx)?;
    Ok(sym(&(g_block(&problem.cost, x, fx)? * df)) * (2.0 * k))
}

pub fn pullback_metric(map: &TransportMap, problem: &TransportProblem, x: &Point) -> Result<DMatrix<f64>> {
    let fx = map.eval(x)?;
    let df = map.jacobian(x).map_err(|_| Error::NotDifferentiable(x.iter().copied().collect()))?;
    pullback_metric_at(problem, x, &fx, &df)
}

/// `max |G·DF − (G·DF)ᵀ|` over smooth interior nodes.
pub fn lagrangian_residual(surface: &GraphSurface, cost: &CostField) -> Result<GridStat> {
    let mut s = GridStat::new(0.0);
    let (nodes, flagged) = surface.smooth_nodes();
    s.flagged = flagged;
    for (_, x, fx, df) in nodes {
        let b = g_block(cost, &x, &fx)? * df;
        s.max(max_abs(&skew_difference(&b)), &x);
    }
    Ok(s)
}

/// `min λ_min(sym(G·DF))` over smooth interior nodes.
pub fn spacelike_margin(surface: &GraphSurface, cost: &CostField) -> Result<GridStat> {
    let mut s = GridStat::new(f64::INFINITY);
    let (nodes, flagged) = surface.smooth_nodes();
    s.flagged = flagged;
    for (_, x, fx, df) in nodes {
        s.min(min_sym_eigenvalue(&(g_block(cost, &x, &fx)? * df)), &x);
    }
    Ok(s)
}

/// `max |ρ̄(F) det DF − ρ| / ρ` over smooth interior nodes.
pub fn pushforward_residual(surface: &GraphSurface, problem: &TransportProblem) -> Result<GridStat> {
    let mut s = GridStat::new(0.0);
    let (nodes, flagged) = surface.smooth_nodes();
    s.flagged = flagged;
    for (_, x, fx, df) in nodes {
        let det = df.determinant();
        if det <= 0.0 {
            return Err(Error::OrientationFlip {
                det,
                point: x.iter().copied().collect(),
            });
        }
        let r = problem.source.positive_value(&x)?;
        let rb = problem.target.value(&fx);
        s.max((rb * det - r).abs() / r, &x);
    }
    Ok(s)
}

/// The three quantities that coincide on an optimal graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPoint {
    pub x: Vec<f64>,
    pub sqrt_det_g: f64,
    pub rho: f64,
    /// `½(ρ(x) + ρ̄(F(x)) det DF(x))`.
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub points: Vec<CalibrationPoint>,
    /// `max |√det g − ρ| / ρ`.
    pub max_volume_gap: f64,
    /// `max |Φ − ρ| / ρ`.
    pub max_phi_gap: f64,
    /// `min (Φ − √det g)`; nonnegative by the calibration inequality.
    pub min_excess: f64,
    pub flagged: usize,
}

pub fn calibration_equality_check(surface: &GraphSurface, problem: &TransportProblem) -> Result<CalibrationReport> {
    let (nodes, flagged) = surface.smooth_nodes();
    let mut points = Vec::with_capacity(nodes.len());
    let (mut vg, mut pg, mut ex) = (0.0_f64, 0.0_f64, f64::INFINITY);
    for (_, x, fx, df) in nodes {
        let g = pullback_metric_at(problem, &x, &fx, &df)?;
        let det = g.determinant();
        if det <= 0.0 || min_sym_eigenvalue(&g) <= 0.0 {
            return Err(Error::NotSpacelike {
                min_eigenvalue: min_sym_eigenvalue(&g),
            });
        }
        let r = problem.source.positive_value(&x)?;
        let rb = problem.target.value(&fx);
        let phi = 0.5 * (r + rb * df.determinant());
        let vol = det.sqrt();
        vg = vg.max((vol - r).abs() / r);
        pg = pg.max((phi - r).abs() / r);
        ex = ex.min(phi - vol);
        points.push(CalibrationPoint {
            x: x.iter().copied().collect(),
            sqrt_det_g: vol,
            rho: r,
            phi,
        });
    }
    Ok(CalibrationReport {
        points,
        max_volume_gap: vg,
        max_phi_gap: pg,
        min_excess: ex,
        flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterminantInequality {
    pub det_sym: f64,
    pub det: f64,
    pub holds: bool,
    /// `B` is symmetric to `1e-12`, so both sides coincide.
    pub equality: bool,
}

/// `det sym(B) ≤ det B` for `B` with positive semidefinite symmetric part.
pub fn determinant_inequality_check(b: &DMatrix<f64>) -> Result<DeterminantInequality> {
    let lam = min_sym_eigenvalue(b);
    if lam < -1e-12 * b.amax().max(1.0) {
        return Err(Error::NotMonotone(lam));
    }
    let det_sym = sym(b).determinant();
    let det = b.determinant();
    Ok(DeterminantInequality {
        det_sym,
        det,
        holds: det_sym <= det + 1e-12 * det.abs().max(1.0),
        equality: max_abs(&skew_difference(b)) < 1e-12,
    })
}

/// Mean curvature of the immersion `x ↦ (x, F(x))` at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurvaturePoint {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    /// `√|h(H, H)|`.
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurvatureReport {
    pub points: Vec<MeanCurvaturePoint>,
    pub sup_norm: f64,
    pub flagged: usize,
}

/// `H = g^{ij} (∇_{X_i} X_j)^⊥` in `(M × M̄, h^{ρ,ρ̄})`, with ambient
/// Christoffel symbols and second derivatives of `F` by central differences.
pub fn mean_curvature(surface: &GraphSurface, problem: &TransportProblem, fd_step: f64) -> Result<MeanCurvatureReport> {
    let map = surface.map();
    let n = map.dim();
    let field = problem.conformal_field();
    let (nodes, flagged) = surface.smooth_nodes();
    let support = problem.source.support();
    let mut points = Vec::with_capacity(nodes.len());
    let mut sup = 0.0_f64;
    for (_, x, fx, df) in nodes {
        if !support.contains_with_margin(&x, 2.0 * fd_step) {
            return Err(Error::BoundaryPoint(x.iter().copied().collect()));
        }
        let p = concat(&x, &fx);
        let h = problem.conformal_metric(&x, &fx)?.matrix;
        let gamma = christoffel(&field, &p, fd_step)?;
        let frame = TangentPlane::graph(&df);
        let xf = frame.frame();
        let g = xf.transpose() * &h * xf;
        let ginv = g.clone().try_inverse().ok_or(Error::NotSpacelike {
            min_eigenvalue: min_sym_eigenvalue(&g),
        })?;
        let d2: Vec<DMatrix<f64>> = (0..n)
            .map(|i| map.jacobian_derivative(&x, i, fd_step))
            .collect::<Result<_>>()?;
        let mut hvec = DVector::zeros(2 * n);
        for i in 0..n {
            for j in 0..n {
                let w = ginv[(i, j)];
                if w == 0.0 {
                    continue;
                }
                let xi = xf.column(i);
                let xj = xf.column(j);
                let mut v = DVector::zeros(2 * n);
                v.rows_mut(n, n).copy_from(&d2[i].column(j));
                for (k, gk) in gamma.iter().enumerate() {
                    v[k] += xi.dot(&(gk * xj));
                }
                // remove the tangential part
                let coeff = &ginv * (xf.transpose() * (&h * &v));
                let normal = &v - xf * coeff;
                hvec += normal * w;
            }
        }
        let norm = hvec.dot(&(&h * &hvec)).abs().sqrt();
        sup = sup.max(norm);
        points.push(MeanCurvaturePoint {
            x: x.iter().copied().collect(),
            h: hvec.iter().copied().collect(),
            norm,
        });
    }
    Ok(MeanCurvatureReport {
        points,
        sup_norm: sup,
        flagged,
    })
}

/// `min −⟨D D̄c·V, V̄⟩` over chords between each source point of a matching and
/// its `neighbours` nearest source points; `D D̄c` is taken at the chord midpoint.
pub fn chord_spacelike_check(plan: &DiscretePlan, cost: &CostField, neighbours: usize) -> Result<f64> {
    let n = plan.len();
    let mut worst = f64::INFINITY;
    for i in 0..n {
        let xi = &plan.source[i];
        let mut near: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((&plan.source[j] - xi).norm_squared(), j))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(_, j) in near.iter().take(neighbours) {
            let yi = &plan.target[plan.matching[i]];
            let yj = &plan.target[plan.matching[j]];
            let v = &plan.source[j] - xi;
            let vb = yj - yi;
            let mx = (xi + &plan.source[j]) * 0.5;
            let my = (yi + yj) * 0.5;
            let m = cost.mixed_hessian(&mx, &my)?;
            worst = worst.min(-v.dot(&(m * vb)));
        }
    }
    Ok(worst)
}
