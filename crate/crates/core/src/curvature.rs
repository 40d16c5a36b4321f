//! Levi-Civita connection and Riemann tensor of a metric field by central
//! differences, the MTW sign test for `h_c`, and the conformal curvature
//! identity on vanishing metric components.
//!
//! Sign convention: `R^e_{cab} = ∂_a Γ^e_{bc} − ∂_b Γ^e_{ac} + Γ^e_{af} Γ^f_{bc} − Γ^e_{bf} Γ^f_{ac}`
//! and `Rm(a, b, c, d) = g_{de} R^e_{cab}`, so that `Rm(a, b, b, a) > 0` on the
//! round sphere.

use nalgebra::{DMatrix, DVector};

use crate::cost::{CostField, Point};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::geometry::{MetricField, TransportProblem};
use crate::linalg::{concat, split};

/// Relative size below which a metric component counts as vanishing.
pub const VANISHING_RTOL: f64 = 1e-8;

/// `∂_k g` for every coordinate direction `k`.
pub fn metric_derivatives<M: MetricField + ?Sized>(field: &M, p: &DVector<f64>, step: f64) -> Result<Vec<DMatrix<f64>>> {
    (0..p.len())
        .map(|k| {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[k] += step;
            pm[k] -= step;
            Ok((field.metric(&pp)? - field.metric(&pm)?) / (2.0 * step))
        })
        .collect()
}

/// Christoffel symbols; `gamma[k][(i, j)] = Γ^k_{ij}`.
pub fn christoffel<M: MetricField + ?Sized>(field: &M, p: &DVector<f64>, step: f64) -> Result<Vec<DMatrix<f64>>> {
    let g = field.metric(p)?;
    let ginv = invert(&g)?;
    let dg = metric_derivatives(field, p, step)?;
    Ok(christoffel_from(&ginv, &dg))
}

fn christoffel_from(ginv: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let m = ginv.nrows();
    // lowered symbols Γ_{l,ij} = ½(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})
    let lowered: Vec<DMatrix<f64>> = (0..m)
        .map(|l| DMatrix::from_fn(m, m, |i, j| 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)])))
        .collect();
    (0..m)
        .map(|k| {
            let mut out = DMatrix::zeros(m, m);
            for l in 0..m {
                let w = ginv[(k, l)];
                if w != 0.0 {
                    out += &lowered[l] * w;
                }
            }
            out
        })
        .collect()
}

fn invert(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let det = g.determinant();
    let tol = 1e-300;
    g.clone().try_inverse().ok_or(Error::Degenerate { det, tol })
}

/// Fully covariant Riemann component `Rm(a, b, c, d)`.
pub fn riemann_component<M: MetricField + ?Sized>(
    field: &M,
    p: &DVector<f64>,
    (a, b, c, d): (usize, usize, usize, usize),
    step: f64,
) -> Result<f64> {
    let g = field.metric(p)?;
    let gamma = christoffel(field, p, step)?;
    let da = christoffel_derivative(field, p, a, step)?;
    let db = christoffel_derivative(field, p, b, step)?;
    let m = p.len();
    let mut acc = 0.0;
    for e in 0..m {
        let gde = g[(d, e)];
        if gde == 0.0 {
            continue;
        }
        let mut r = da[e][(b, c)] - db[e][(a, c)];
        for f in 0..m {
            r += gamma[e][(a, f)] * gamma[f][(b, c)] - gamma[e][(b, f)] * gamma[f][(a, c)];
        }
        acc += gde * r;
    }
    Ok(acc)
}

fn christoffel_derivative<M: MetricField + ?Sized>(field: &M, p: &DVector<f64>, k: usize, step: f64) -> Result<Vec<DMatrix<f64>>> {
    let mut pp = p.clone();
    let mut pm = p.clone();
    pp[k] += step;
    pm[k] -= step;
    let gp = christoffel(field, &pp, step)?;
    let gm = christoffel(field, &pm, step)?;
    Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * step)).collect())
}

/// All components `Rm(a, b, c, d)` at `p`, indexed `[a][b][c][d]`.
pub fn riemann_tensor<M: MetricField + ?Sized>(field: &M, p: &DVector<f64>, step: f64) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let m = p.len();
    let g = field.metric(p)?;
    let gamma = christoffel(field, p, step)?;
    let dgamma: Vec<Vec<DMatrix<f64>>> = (0..m)
        .map(|k| christoffel_derivative(field, p, k, step))
        .collect::<Result<_>>()?;
    let mut out = vec![vec![DMatrix::zeros(m, m); m]; m];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for e in 0..m {
                    let mut r = dgamma[a][e][(b, c)] - dgamma[b][e][(a, c)];
                    for f in 0..m {
                        r += gamma[e][(a, f)] * gamma[f][(b, c)] - gamma[e][(b, f)] * gamma[f][(a, c)];
                    }
                    for d in 0..m {
                        out[a][b][(c, d)] += g[(d, e)] * r;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Orthogonal `Q` (det +1) whose column `j` is orthogonal to row `i` of `m`, so
/// that `(m Q)_{ij} = 0`.
pub fn vanishing_rotation(m: &DMatrix<f64>, i: usize, j: usize) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let row = m.row(i).transpose();
    let rn = row.norm();
    if n < 2 || rn == 0.0 {
        return Err(Error::InvalidArgument("no rotation can zero this component".into()));
    }
    let r = row / rn;
    // start from the axis least aligned with the row
    let k0 = (0..n)
        .min_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()))
        .unwrap_or(0);
    let mut basis: Vec<DVector<f64>> = vec![r.clone()];
    for k in std::iter::once(k0).chain((0..n).filter(|&k| k != k0)) {
        let mut v = DVector::from_fn(n, |a, _| if a == k { 1.0 } else { 0.0 });
        for b in &basis {
            v -= b * b.dot(&v);
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
        if basis.len() == n {
            break;
        }
    }
    // basis[1] is the column forced orthogonal to the row; the others fill in
    let mut q = DMatrix::zeros(n, n);
    q.set_column(j, &basis[1]);
    let mut rest = basis.iter().enumerate().filter(|(k, _)| *k != 1).map(|(_, v)| v);
    for col in (0..n).filter(|&c| c != j) {
        q.set_column(col, rest.next().expect("orthonormal completion"));
    }
    if q.determinant() < 0.0 {
        let flip = if j == 0 { 1 } else { 0 };
        let c = -q.column(flip);
        q.set_column(flip, &c);
    }
    Ok(q)
}

/// The base and conformal metric fields after rotating target coordinates by `Q`.
pub struct RotatedMetrics<'a> {
    problem: &'a TransportProblem,
    cost: CostField,
    q: DMatrix<f64>,
}

impl<'a> RotatedMetrics<'a> {
    pub fn new(problem: &'a TransportProblem, q: DMatrix<f64>) -> Self {
        Self {
            cost: problem.cost.with_target_rotation(&q),
            problem,
            q,
        }
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn cost(&self) -> &CostField {
        &self.cost
    }

    pub fn base(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (x, y) = split(p);
        let m = self.cost.mixed_hessian(&x, &y)?;
        Ok(block_metric(&m))
    }

    /// Conformal factor evaluated in original target coordinates `Q ȳ`.
    pub fn factor(&self, p: &DVector<f64>) -> Result<f64> {
        let (x, y) = split(p);
        crate::geometry::conformal_factor(
            self.problem.convention,
            &self.problem.cost,
            &self.problem.source,
            &self.problem.target,
            &x,
            &(&self.q * y),
        )
    }

    pub fn conformal(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.base(p)? * self.factor(p)?)
    }
}

fn block_metric(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, n), (n, n)).copy_from(&(-m));
    h.view_mut((n, 0), (n, n)).copy_from(&(-m.transpose()));
    h
}

/// One evaluation of `R_{i j̄ j̄ i}` for `h_c` and `h^{ρ,ρ̄}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureSample {
    /// `(x, ȳ)` in rotated target coordinates.
    pub point: Vec<f64>,
    pub i: usize,
    pub j: usize,
    pub base: f64,
    pub conformal: f64,
    pub factor: f64,
    /// `(h_c)_{i j̄}` after rotation.
    pub metric_component: f64,
    /// Largest `|Rm(a, b, b, a)|` of the conformal metric at the point.
    pub scale: f64,
}

impl CurvatureSample {
    /// `|LHS − RHS| / max(|RHS|, scale)`; the floor keeps near-zero
    /// right-hand sides from inflating roundoff.
    pub fn relative_error(&self) -> f64 {
        let rhs = self.factor * self.base;
        let denom = rhs.abs().max(self.scale).max(f64::MIN_POSITIVE);
        (self.conformal - rhs).abs() / denom
    }
}

/// Computes both sides of `R^{ρ,ρ̄}_{i j̄ j̄ i} = κ R_{i j̄ j̄ i}` (κ the full
/// conformal factor) at a point where `(h_c)_{i j̄}` vanishes after the
/// rotation `Q` of target coordinates.
///
/// `xbar` is given in original coordinates; the sample point is `(x, Qᵀx̄)`.
pub fn conformal_identity_check(
    problem: &TransportProblem,
    x: &Point,
    xbar: &Point,
    q: &DMatrix<f64>,
    (i, j): (usize, usize),
    step: f64,
) -> Result<CurvatureSample> {
    let n = problem.dim();
    let rot = RotatedMetrics::new(problem, q.clone());
    let y = q.transpose() * xbar;
    let p = concat(x, &y);
    let h = rot.base(&p)?;
    let radius = h.amax();
    let comp = h[(i, n + j)];
    if comp.abs() > VANISHING_RTOL * radius {
        return Err(Error::NotVanishing { i, j, value: comp });
    }
    let idx = (i, n + j, n + j, i);
    let base_field = |p: &DVector<f64>| rot.base(p);
    let conf_field = |p: &DVector<f64>| rot.conformal(p);
    let base = riemann_component(&base_field, &p, idx, step)?;
    let conformal = riemann_component(&conf_field, &p, idx, step)?;
    let factor = rot.factor(&p)?;
    let mut scale = 0.0_f64;
    for a in 0..2 * n {
        for b in (a + 1)..2 * n {
            scale = scale.max(riemann_component(&conf_field, &p, (a, b, b, a), step)?.abs());
        }
    }
    Ok(CurvatureSample {
        point: p.iter().copied().collect(),
        i,
        j,
        base,
        conformal,
        factor,
        metric_component: comp,
        scale,
    })
}

/// Sign class of the MTW components at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtwClass {
    StrictlyPositive,
    Nonnegative,
    Violated,
}

impl MtwClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            MtwClass::StrictlyPositive => "strict positive",
            MtwClass::Nonnegative => "nonnegative",
            MtwClass::Violated => "violated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtwPoint {
    pub x: Vec<f64>,
    pub xbar: Vec<f64>,
    /// Minimum `R_{i j̄ j̄ i}` over pairs `(i, j)` made vanishing by rotation.
    pub min_component: f64,
    pub components: Vec<f64>,
    pub class: MtwClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtwReport {
    pub points: Vec<MtwPoint>,
    pub class: MtwClass,
}

fn classify(v: f64, tol: f64) -> MtwClass {
    if v > tol {
        MtwClass::StrictlyPositive
    } else if v >= -tol {
        MtwClass::Nonnegative
    } else {
        MtwClass::Violated
    }
}

/// `R_{i j̄ j̄ i}` of `h_c` over every `(i, j)` at each sample, after rotating
/// target coordinates so that `(h_c)_{i j̄} = 0`.
pub fn mtw_check(cost: &CostField, points: &[(Point, Point)], tol: f64, step: f64) -> Result<MtwReport> {
    let n = cost.dim();
    if n < 2 {
        return Err(Error::NoVanishingComponent {
            x: points.first().map(|p| p.0.iter().copied().collect()).unwrap_or_default(),
            xbar: points.first().map(|p| p.1.iter().copied().collect()).unwrap_or_default(),
        });
    }
    let mut out = Vec::with_capacity(points.len());
    for (x, xbar) in points {
        let m = cost.mixed_hessian(x, xbar)?;
        let mut comps = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let q = match vanishing_rotation(&m, i, j) {
                    Ok(q) => q,
                    Err(_) => continue,
                };
                let rc = cost.with_target_rotation(&q);
                let p = concat(x, &(q.transpose() * xbar));
                let field = |p: &DVector<f64>| {
                    let (a, b) = split(p);
                    Ok(block_metric(&rc.mixed_hessian(&a, &b)?))
                };
                let h = field(&p)?;
                if h[(i, n + j)].abs() > VANISHING_RTOL * h.amax() {
                    continue;
                }
                comps.push(riemann_component(&field, &p, (i, n + j, n + j, i), step)?);
            }
        }
        if comps.is_empty() {
            return Err(Error::NoVanishingComponent {
                x: x.iter().copied().collect(),
                xbar: xbar.iter().copied().collect(),
            });
        }
        let min = comps.iter().copied().fold(f64::INFINITY, f64::min);
        out.push(MtwPoint {
            x: x.iter().copied().collect(),
            xbar: xbar.iter().copied().collect(),
            min_component: min,
            components: comps,
            class: classify(min, tol),
        });
    }
    let worst = out.iter().map(|p| p.min_component).fold(f64::INFINITY, f64::min);
    Ok(MtwReport {
        class: classify(worst, tol),
        points: out,
    })
}

/// `1e-3 ×` the diameter of the product box `source × target`.
pub fn curvature_step(source: &BoxDomain, target: &BoxDomain) -> f64 {
    let (a, b) = (source.diameter(), target.diameter());
    1e-3 * (a * a + b * b).sqrt()
}

/// [`curvature_step`] over the two density supports.
pub fn default_curvature_step(problem: &TransportProblem) -> f64 {
    curvature_step(problem.source.support(), problem.target.support())
}
