//! Probability densities on boxes: uniform, Gaussian, and tabulated grids.

use std::io::Read;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use libm::erfc;

use crate::domain::{BoxDomain, Grid};
use crate::error::{Error, Result};
use crate::linalg::is_spd;

/// Half-width of the default Gaussian support box, in standard deviations.
pub const GAUSSIAN_SUPPORT_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone)]
enum Kind {
    Uniform {
        density: f64,
    },
    Gaussian {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        precision: DMatrix<f64>,
        norm: f64,
    },
    Grid(Arc<TabulatedDensity>),
}

#[derive(Debug)]
struct TabulatedDensity {
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
    scale: f64,
    // 1-D only: cumulative integral of the (scaled) interpolant at the nodes.
    cumulative: Option<Vec<f64>>,
}

/// A probability density with a box support.
#[derive(Debug, Clone)]
pub struct DensitySpec {
    name: String,
    support: BoxDomain,
    kind: Kind,
}

impl DensitySpec {
    /// Uniform density `1/vol` on `support`.
    pub fn uniform(support: BoxDomain) -> Self {
        let density = 1.0 / support.volume();
        Self {
            name: "uniform".into(),
            support,
            kind: Kind::Uniform { density },
        }
    }

    /// Gaussian `N(mean, cov)` supported (for quadrature) on `mean ± 8σ` per axis.
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        let lo: Vec<f64> = (0..n).map(|i| mean[i] - GAUSSIAN_SUPPORT_SIGMAS * cov[(i, i)].max(0.0).sqrt()).collect();
        let hi: Vec<f64> = (0..n).map(|i| mean[i] + GAUSSIAN_SUPPORT_SIGMAS * cov[(i, i)].max(0.0).sqrt()).collect();
        let support = BoxDomain::new(lo, hi).map_err(|_| Error::NotPositiveDefinite)?;
        Self::gaussian_on(mean, cov, support)
    }

    /// Gaussian with an explicit support box. The density is not renormalised to the box.
    pub fn gaussian_on(mean: DVector<f64>, cov: DMatrix<f64>, support: BoxDomain) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n || support.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: cov.nrows(),
            });
        }
        if !is_spd(&cov, 1e-12 * cov.amax().max(1.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        let precision = cov.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
        let norm = ((2.0 * std::f64::consts::PI).powi(n as i32) * cov.determinant()).sqrt().recip();
        Ok(Self {
            name: "gaussian".into(),
            support,
            kind: Kind::Gaussian {
                mean,
                cov,
                precision,
                norm,
            },
        })
    }

    /// Standard normal in dimension `n`.
    pub fn standard_gaussian(n: usize) -> Self {
        Self::gaussian(DVector::zeros(n), DMatrix::identity(n, n)).expect("identity covariance")
    }

    /// 1-D normal `N(mean, σ²)`.
    pub fn normal_1d(mean: f64, sigma: f64) -> Result<Self> {
        Self::gaussian(DVector::from_element(1, mean), DMatrix::from_element(1, 1, sigma * sigma))
    }

    /// Samples on a uniform node grid, interpolated multilinearly and
    /// renormalised to unit mass. `values` are row-major, last axis fastest.
    pub fn tabulated(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let n = axes.len();
        if n == 0 || axes.iter().any(|a| a.len() < 2) {
            return Err(Error::InvalidArgument("tabulated density needs >= 2 nodes per axis".into()));
        }
        if values.len() != axes.iter().map(Vec::len).product::<usize>() {
            return Err(Error::InvalidArgument("tabulated density values do not fill the grid".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("tabulated density values must be finite and >= 0".into()));
        }
        for a in &axes {
            let h = (a[a.len() - 1] - a[0]) / (a.len() - 1) as f64;
            if !(h > 0.0) || a.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
                return Err(Error::InvalidArgument("tabulated density axes must be uniform".into()));
            }
        }
        let support = BoxDomain::new(
            axes.iter().map(|a| a[0]).collect(),
            axes.iter().map(|a| a[a.len() - 1]).collect(),
        )?;
        let mut table = TabulatedDensity {
            axes,
            values,
            scale: 1.0,
            cumulative: None,
        };
        let mass = table.trapezoid_mass();
        if !(mass > 0.0) {
            return Err(Error::InvalidArgument("tabulated density has zero mass".into()));
        }
        table.scale = 1.0 / mass;
        if n == 1 {
            let a = &table.axes[0];
            let h = a[1] - a[0];
            let mut cum = vec![0.0];
            for w in table.values.windows(2) {
                let last = *cum.last().unwrap();
                cum.push(last + 0.5 * h * (w[0] + w[1]) * table.scale);
            }
            table.cumulative = Some(cum);
        }
        Ok(Self {
            name: "grid".into(),
            support,
            kind: Kind::Grid(Arc::new(table)),
        })
    }

    /// Reads a CSV with header `x1,…,xn,value` covering a product grid.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let width = rdr.headers()?.len();
        if width < 2 {
            return Err(Error::Parse("density grid needs coordinate and value columns".into()));
        }
        let n = width - 1;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != width {
                return Err(Error::Parse(format!("expected {width} columns, found {}", row.len())));
            }
            rows.push(row);
        }
        let mut axes: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut a: Vec<f64> = rows.iter().map(|r| r[i]).collect();
                a.sort_by(|x, y| x.total_cmp(y));
                a.dedup();
                a
            })
            .collect();
        let total: usize = axes.iter().map(Vec::len).product();
        if total != rows.len() {
            return Err(Error::Parse("density rows do not form a product grid".into()));
        }
        let mut values = vec![f64::NAN; total];
        for r in &rows {
            let mut flat = 0;
            for (i, a) in axes.iter().enumerate() {
                flat = flat * a.len() + a.partition_point(|&v| v < r[i]);
            }
            values[flat] = r[n];
        }
        axes.shrink_to_fit();
        Self::tabulated(axes, values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn support(&self) -> &BoxDomain {
        &self.support
    }

    /// `ρ(x)`; zero outside the support for uniform and tabulated densities.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match &self.kind {
            Kind::Uniform { density } => {
                if self.support.contains(x) {
                    *density
                } else {
                    0.0
                }
            }
            Kind::Gaussian {
                mean, precision, norm, ..
            } => {
                let d = x - mean;
                norm * (-0.5 * d.dot(&(precision * &d))).exp()
            }
            Kind::Grid(t) => {
                if self.support.contains(x) {
                    t.interpolate(x) * t.scale
                } else {
                    0.0
                }
            }
        }
    }

    /// `ρ(x)`, failing unless strictly positive.
    pub fn positive_value(&self, x: &DVector<f64>) -> Result<f64> {
        let v = self.value(x);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonpositiveDensity {
                value: v,
                point: x.iter().copied().collect(),
            })
        }
    }

    pub fn gaussian_parameters(&self) -> Option<(&DVector<f64>, &DMatrix<f64>)> {
        match &self.kind {
            Kind::Gaussian { mean, cov, .. } => Some((mean, cov)),
            _ => None,
        }
    }

    /// Midpoint-rule mass over the support at `cells` per axis.
    pub fn total_mass(&self, cells: usize) -> f64 {
        Grid::uniform(self.support.clone(), cells.max(3))
            .map(|g| g.integrate(|x| self.value(x)))
            .unwrap_or(f64::NAN)
    }

    fn require_1d(&self) -> Result<()> {
        if self.dim() == 1 {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: 1,
                found: self.dim(),
            })
        }
    }

    /// Cumulative distribution `P(X ≤ t)` (1-D only).
    pub fn cdf(&self, t: f64) -> Result<f64> {
        self.require_1d()?;
        let (lo, hi) = (self.support.lo()[0], self.support.hi()[0]);
        Ok(match &self.kind {
            Kind::Uniform { .. } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
            Kind::Gaussian { mean, cov, .. } => {
                0.5 * erfc(-(t - mean[0]) / (cov[(0, 0)].sqrt() * std::f64::consts::SQRT_2))
            }
            Kind::Grid(tab) => tab.cdf_1d(t),
        })
    }

    /// Survival function `P(X > t)`; accurate in the upper tail.
    pub fn sf(&self, t: f64) -> Result<f64> {
        self.require_1d()?;
        Ok(match &self.kind {
            Kind::Gaussian { mean, cov, .. } => {
                0.5 * erfc((t - mean[0]) / (cov[(0, 0)].sqrt() * std::f64::consts::SQRT_2))
            }
            _ => 1.0 - self.cdf(t)?,
        })
    }

    /// Inverse of [`Self::cdf`] restricted to the support (1-D only).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.invert(p, false)
    }

    /// Point `t` with `sf(t) = q`.
    pub fn upper_quantile(&self, q: f64) -> Result<f64> {
        self.invert(q, true)
    }

    fn invert(&self, target: f64, upper: bool) -> Result<f64> {
        self.require_1d()?;
        let (mut a, mut b) = (self.support.lo()[0], self.support.hi()[0]);
        // g increasing in t with a root at the answer
        let g = |t: f64| -> Result<f64> {
            Ok(if upper {
                target - self.sf(t)?
            } else {
                self.cdf(t)? - target
            })
        };
        let (ga, gb) = (g(a)?, g(b)?);
        if ga >= 0.0 {
            return Ok(a);
        }
        if gb <= 0.0 {
            return Ok(b);
        }
        let mut t = 0.5 * (a + b);
        for _ in 0..200 {
            let gt = g(t)?;
            if gt == 0.0 {
                return Ok(t);
            }
            if gt < 0.0 {
                a = t;
            } else {
                b = t;
            }
            let slope = self.value(&DVector::from_element(1, t));
            if slope > 0.0 && (gt / slope).abs() <= 1e-15 * t.abs().max(1.0) {
                break;
            }
            let newton = t - gt / slope;
            t = if slope > 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if (b - a) <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
                break;
            }
        }
        Ok(t)
    }
}

impl TabulatedDensity {
    fn locate(&self, axis: usize, v: f64) -> (usize, f64) {
        let a = &self.axes[axis];
        let h = (a[a.len() - 1] - a[0]) / (a.len() - 1) as f64;
        let u = ((v - a[0]) / h).clamp(0.0, (a.len() - 1) as f64);
        let i = (u.floor() as usize).min(a.len() - 2);
        (i, u - i as f64)
    }

    fn interpolate(&self, x: &DVector<f64>) -> f64 {
        let n = self.axes.len();
        let cells: Vec<(usize, f64)> = (0..n).map(|i| self.locate(i, x[i])).collect();
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut flat = 0;
            for (axis, &(i, t)) in cells.iter().enumerate() {
                let bit = (corner >> axis) & 1;
                w *= if bit == 1 { t } else { 1.0 - t };
                flat = flat * self.axes[axis].len() + i + bit;
            }
            acc += w * self.values[flat];
        }
        acc
    }

    fn trapezoid_mass(&self) -> f64 {
        let dims: Vec<usize> = self.axes.iter().map(Vec::len).collect();
        let h: f64 = self.axes.iter().map(|a| a[1] - a[0]).product();
        let mut total = 0.0;
        for (flat, v) in self.values.iter().enumerate() {
            let mut rem = flat;
            let mut w = 1.0;
            for &d in dims.iter().rev() {
                let i = rem % d;
                rem /= d;
                if i == 0 || i == d - 1 {
                    w *= 0.5;
                }
            }
            total += w * v;
        }
        total * h
    }

    fn cdf_1d(&self, t: f64) -> f64 {
        let a = &self.axes[0];
        let cum = self.cumulative.as_ref().expect("1-D table");
        if t <= a[0] {
            return 0.0;
        }
        if t >= a[a.len() - 1] {
            return 1.0;
        }
        let (i, s) = self.locate(0, t);
        let h = a[1] - a[0];
        let u = s * h;
        let (v0, v1) = (self.values[i] * self.scale, self.values[i + 1] * self.scale);
        (cum[i] + v0 * u + (v1 - v0) * u * u / (2.0 * h)).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_normalized() {
        let d = DensitySpec::uniform(BoxDomain::new(vec![0.0, 0.0], vec![2.0, 0.5]).unwrap());
        assert_eq!(d.value(&DVector::from_vec(vec![1.0, 0.25])), 1.0);
        assert_eq!(d.value(&DVector::from_vec(vec![3.0, 0.25])), 0.0);
        assert!((d.total_mass(50) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass_within_tolerance() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let d = DensitySpec::gaussian(DVector::from_vec(vec![0.5, -1.0]), cov).unwrap();
        assert!((d.total_mass(200) - 1.0).abs() < 1e-6);
        let d1 = DensitySpec::normal_1d(0.0, 3.0).unwrap();
        assert!((d1.total_mass(400) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gaussian_rejects_indefinite_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(DensitySpec::gaussian(DVector::zeros(2), cov).is_err());
    }

    #[test]
    fn quantiles_invert_cdf() {
        let g = DensitySpec::normal_1d(1.0, 2.0).unwrap();
        for p in [1e-12, 1e-3, 0.2, 0.5, 0.9] {
            let t = g.quantile(p).unwrap();
            assert!((g.cdf(t).unwrap() - p).abs() <= 1e-10 * p, "p={p}");
        }
        let t = g.upper_quantile(1e-10).unwrap();
        assert!((g.sf(t).unwrap() / 1e-10 - 1.0).abs() < 1e-9);
        let u = DensitySpec::uniform(BoxDomain::cube(1, 0.0, 2.0).unwrap());
        assert!((u.quantile(0.25).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn tabulated_cdf_matches_mass() {
        let axis: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let values: Vec<f64> = axis.iter().map(|x| 1.0 + x).collect();
        let d = DensitySpec::tabulated(vec![axis], values).unwrap();
        // 1 + x is linear so the table is exact: density (1 + x)/1.5.
        assert!((d.cdf(1.0).unwrap() - 1.0).abs() < 1e-14);
        let t = 0.37;
        let exact = (t + 0.5 * t * t) / 1.5;
        assert!((d.cdf(t).unwrap() - exact).abs() < 1e-14);
        assert!((d.value(&DVector::from_element(1, t)) - (1.0 + t) / 1.5).abs() < 1e-14);
    }

    #[test]
    fn tabulated_from_csv_2d() {
        let mut text = String::from("x1,x2,value\n");
        for i in 0..3 {
            for j in 0..4 {
                text.push_str(&format!("{},{},{}\n", i as f64, j as f64, 1.0));
            }
        }
        let d = DensitySpec::from_csv(text.as_bytes()).unwrap();
        assert_eq!(d.dim(), 2);
        assert!((d.value(&DVector::from_vec(vec![1.5, 1.5])) - 1.0 / 6.0).abs() < 1e-14);
        assert!(DensitySpec::from_csv("x1,value\n0,1\n0.5,-1\n1,1\n".as_bytes()).is_err());
    }
}
