//! 1-D monotone rearrangement `F = CDF̄⁻¹ ∘ CDF`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{MapKind, TransportMap};
use crate::density::DensitySpec;
use crate::domain::BoxDomain;
use crate::error::{Error, Result};

/// Cubic Hermite interpolant through `(xs[k], ys[k])` with slopes `ms[k]`.
#[derive(Debug)]
struct Hermite {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ms: Vec<f64>,
}

impl Hermite {
    fn locate(&self, x: f64) -> (usize, f64, f64) {
        let n = self.xs.len();
        let x = x.clamp(self.xs[0], self.xs[n - 1]);
        let k = match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let h = self.xs[k + 1] - self.xs[k];
        (k, (x - self.xs[k]) / h, h)
    }

    fn value(&self, x: f64) -> f64 {
        let (k, t, h) = self.locate(x);
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[k]
            + (t3 - 2.0 * t2 + t) * h * self.ms[k]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[k + 1]
            + (t3 - t2) * h * self.ms[k + 1]
    }

    fn slope(&self, x: f64) -> f64 {
        let (k, t, h) = self.locate(x);
        let t2 = t * t;
        (6.0 * t2 - 6.0 * t) / h * self.ys[k]
            + (3.0 * t2 - 4.0 * t + 1.0) * self.ms[k]
            + (-6.0 * t2 + 6.0 * t) / h * self.ys[k + 1]
            + (3.0 * t2 - 2.0 * t) * self.ms[k + 1]
    }
}

/// Monotone rearrangement of `rho` onto `rhobar` (n = 1), sampled at `nodes`
/// equispaced points of the source support and interpolated by cubic Hermite
/// splines with the exact slopes `ρ/ρ̄(F)`.
pub fn solve_1d_monotone(rho: &DensitySpec, rhobar: &DensitySpec, nodes: usize) -> Result<TransportMap> {
    for d in [rho, rhobar] {
        if d.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: d.dim(),
            });
        }
    }
    if nodes < 3 {
        return Err(Error::InvalidArgument("monotone solver needs at least 3 nodes".into()));
    }
    reject_flat(rho, nodes)?;
    reject_flat(rhobar, nodes)?;

    let (lo, hi) = (rho.support().lo()[0], rho.support().hi()[0]);
    let xs: Vec<f64> = (0..nodes)
        .map(|k| lo + (hi - lo) * k as f64 / (nodes - 1) as f64)
        .collect();
    let mut ys = Vec::with_capacity(nodes);
    for &x in &xs {
        let p = rho.cdf(x)?;
        // invert whichever tail is small to keep relative accuracy
        ys.push(if p <= 0.5 {
            rhobar.quantile(p)?
        } else {
            rhobar.upper_quantile(rho.sf(x)?)?
        });
    }
    let mut ms = Vec::with_capacity(nodes);
    for k in 0..nodes {
        let r = rho.value(&DVector::from_element(1, xs[k]));
        let rb = rhobar.value(&DVector::from_element(1, ys[k]));
        ms.push(if rb > 0.0 && r > 0.0 {
            r / rb
        } else {
            // end node where a density vanishes: one-sided secant
            let (a, b) = if k + 1 < nodes { (k, k + 1) } else { (k - 1, k) };
            (ys[b] - ys[a]) / (xs[b] - xs[a])
        });
    }
    let spline = Arc::new(Hermite { xs, ys, ms });
    let s2 = Arc::clone(&spline);
    Ok(TransportMap::new(
        "monotone",
        MapKind::GridInterpolated,
        rho.support().clone(),
        rhobar.support().clone(),
        move |x| Ok(DVector::from_element(1, spline.value(x[0]))),
    )
    .with_jacobian(move |x| Ok(DMatrix::from_element(1, 1, s2.slope(x[0])))))
}

/// Map through tabulated samples `(xs[k], ys[k])` (n = 1), interpolated by
/// cubic Hermite splines with Fritsch–Carlson slopes, so monotone data give a
/// monotone map. `xs` must be strictly increasing.
pub fn interpolate_1d(
    name: impl Into<String>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    source: BoxDomain,
    target: BoxDomain,
) -> Result<TransportMap> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("map samples need >= 2 strictly increasing nodes".into()));
    }
    let n = xs.len();
    let d: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])).collect();
    let mut ms = Vec::with_capacity(n);
    ms.push(d[0]);
    for k in 1..n - 1 {
        ms.push(if d[k - 1] * d[k] <= 0.0 {
            0.0
        } else {
            let (h0, h1) = (xs[k] - xs[k - 1], xs[k + 1] - xs[k]);
            let (w0, w1) = (2.0 * h1 + h0, h1 + 2.0 * h0);
            (w0 + w1) / (w0 / d[k - 1] + w1 / d[k])
        });
    }
    ms.push(d[n - 2]);
    let spline = Arc::new(Hermite { xs, ys, ms });
    let s2 = Arc::clone(&spline);
    Ok(TransportMap::new(name, MapKind::GridInterpolated, source, target, move |x| {
        Ok(DVector::from_element(1, spline.value(x[0])))
    })
    .with_jacobian(move |x| Ok(DMatrix::from_element(1, 1, s2.slope(x[0])))))
}

fn reject_flat(d: &DensitySpec, nodes: usize) -> Result<()> {
    let (lo, hi) = (d.support().lo()[0], d.support().hi()[0]);
    let m = 4 * nodes;
    for k in 1..m {
        let x = lo + (hi - lo) * k as f64 / m as f64;
        if d.value(&DVector::from_element(1, x)) <= 0.0 {
            return Err(Error::FlatCdf(x));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(f: &TransportMap, x: f64) -> f64 {
        f.eval(&DVector::from_element(1, x)).unwrap()[0]
    }

    #[test]
    fn uniform_dilation() {
        let u1 = DensitySpec::uniform(BoxDomain::cube(1, 0.0, 1.0).unwrap());
        let u2 = DensitySpec::uniform(BoxDomain::cube(1, 0.0, 2.0).unwrap());
        let f = solve_1d_monotone(&u1, &u2, 17).unwrap();
        for x in [0.0, 0.13, 0.5, 0.77, 1.0] {
            assert!((at(&f, x) - 2.0 * x).abs() < 1e-12);
            assert!((f.jacobian(&DVector::from_element(1, x)).unwrap()[(0, 0)] - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn equal_densities_give_identity() {
        let g = DensitySpec::normal_1d(0.5, 1.5).unwrap();
        let f = solve_1d_monotone(&g, &g, 101).unwrap();
        for x in [-3.0, -0.2, 0.5, 2.0, 6.0] {
            assert!((at(&f, x) - x).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn gaussian_scaling() {
        let a = DensitySpec::normal_1d(0.0, 1.0).unwrap();
        let b = DensitySpec::normal_1d(0.0, 3.0).unwrap();
        let f = solve_1d_monotone(&a, &b, 201).unwrap();
        for x in [-4.0, -1.0, 0.0, 0.3, 2.5, 5.0] {
            assert!((at(&f, x) - 3.0 * x).abs() < 1e-8, "x = {x}: {}", at(&f, x));
        }
    }

    #[test]
    fn nondecreasing_for_tabulated_target() {
        let xs: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        let vals: Vec<f64> = xs.iter().map(|x| 1.0 + x).collect();
        let t = DensitySpec::tabulated(vec![xs], vals).unwrap();
        let u = DensitySpec::uniform(BoxDomain::cube(1, 0.0, 1.0).unwrap());
        let f = solve_1d_monotone(&u, &t, 41).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=200 {
            let y = at(&f, k as f64 / 200.0);
            assert!(y >= prev);
            prev = y;
        }
        // CDF̄(y) = (y + y²/2)/1.5, so F(1/2) solves y² + 2y − 1.5 = 0
        assert!((at(&f, 0.5) - (-1.0 + 2.5_f64.sqrt())).abs() < 1e-6);
    }

    #[test]
    fn vanishing_density_is_flat() {
        let xs: Vec<f64> = (0..5).map(|k| k as f64).collect();
        let t = DensitySpec::tabulated(vec![xs], vec![1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let u = DensitySpec::uniform(BoxDomain::cube(1, 0.0, 4.0).unwrap());
        assert!(matches!(solve_1d_monotone(&u, &t, 9), Err(Error::FlatCdf(_))));
    }

    #[test]
    fn interpolation_reproduces_lines_and_keeps_order() {
        let b = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..6).map(|k| k as f64 / 5.0).collect();
        let lin = interpolate_1d("lin", xs.clone(), xs.iter().map(|x| 1.0 + 2.0 * x).collect(), b.clone(), b.clone()).unwrap();
        for x in [0.0, 0.31, 0.5, 0.99] {
            assert!((at(&lin, x) - (1.0 + 2.0 * x)).abs() < 1e-13);
        }
        let ys = vec![0.0, 0.01, 0.02, 0.5, 0.51, 1.0];
        let f = interpolate_1d("steps", xs.clone(), ys, b.clone(), b.clone()).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=500 {
            let y = at(&f, k as f64 / 500.0);
            assert!(y >= prev - 1e-15);
            prev = y;
        }
        assert!(interpolate_1d("bad", vec![0.0, 0.0], vec![0.0, 1.0], b.clone(), b).is_err());
    }
}
