//! Axis-aligned boxes and the tensor-product grids laid over them.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A closed axis-aligned box `[lo₁,hi₁] × … × [loₙ,hiₙ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "box has empty interior: {lo:?} .. {hi:?}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[lo, hi]ⁿ`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)))
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, v)| *v >= self.lo[i] && *v <= self.hi[i])
    }

    /// Contains `x` with at least `margin` to spare on every side.
    pub fn contains_with_margin(&self, x: &DVector<f64>, margin: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, v)| *v >= self.lo[i] + margin && *v <= self.hi[i] - margin)
    }

    pub fn clamp(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim(), x.iter().enumerate().map(|(i, v)| v.clamp(self.lo[i], self.hi[i])))
    }
}

/// Source and target boxes plus a grid resolution on the source.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub source: BoxDomain,
    pub target: BoxDomain,
    pub resolution: Vec<usize>,
}

impl DomainSpec {
    pub fn new(source: BoxDomain, target: BoxDomain, resolution: Vec<usize>) -> Result<Self> {
        if source.dim() != target.dim() || resolution.len() != source.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                found: target.dim().max(resolution.len()),
            });
        }
        if resolution.iter().any(|&r| r < 3) {
            return Err(Error::InvalidArgument("grid resolution must be >= 3 per axis".into()));
        }
        Ok(Self {
            source,
            target,
            resolution,
        })
    }

    pub fn source_grid(&self) -> Grid {
        Grid {
            domain: self.source.clone(),
            resolution: self.resolution.clone(),
        }
    }
}

/// Cell-centred tensor grid; also the midpoint quadrature rule on the box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: BoxDomain,
    resolution: Vec<usize>,
}

impl Grid {
    pub fn new(domain: BoxDomain, resolution: Vec<usize>) -> Result<Self> {
        if resolution.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: resolution.len(),
            });
        }
        if resolution.iter().any(|&r| r < 3) {
            return Err(Error::InvalidArgument("grid resolution must be >= 3 per axis".into()));
        }
        Ok(Self { domain, resolution })
    }

    pub fn uniform(domain: BoxDomain, cells_per_axis: usize) -> Result<Self> {
        let n = domain.dim();
        Self::new(domain, vec![cells_per_axis; n])
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.domain.width(axis) / self.resolution[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).product()
    }

    /// Multi-index of flat index `k` (row-major, last axis fastest).
    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = k % self.resolution[axis];
            k /= self.resolution[axis];
        }
        idx
    }

    pub fn point(&self, k: usize) -> DVector<f64> {
        let idx = self.multi_index(k);
        DVector::from_iterator(
            self.dim(),
            idx.iter()
                .enumerate()
                .map(|(a, &i)| self.domain.lo()[a] + (i as f64 + 0.5) * self.spacing(a)),
        )
    }

    pub fn points(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        (0..self.len()).map(|k| self.point(k))
    }

    /// Flat indices at least `erode` cells away from every face.
    pub fn interior(&self, erode: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| {
                self.multi_index(k)
                    .iter()
                    .zip(&self.resolution)
                    .all(|(&i, &r)| i >= erode && i + erode < r)
            })
            .collect()
    }

    /// Midpoint-rule integral of `f` over the box.
    pub fn integrate(&self, mut f: impl FnMut(&DVector<f64>) -> f64) -> f64 {
        let w = self.cell_volume();
        self.points().map(|p| f(&p)).sum::<f64>() * w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_box() {
        assert!(BoxDomain::new(vec![0.0], vec![0.0]).is_err());
        assert!(BoxDomain::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn rejects_coarse_resolution() {
        let b = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        assert!(Grid::new(b.clone(), vec![2]).is_err());
        assert!(DomainSpec::new(b.clone(), b, vec![2]).is_err());
    }

    #[test]
    fn midpoint_rule_exact_for_linear() {
        let g = Grid::uniform(BoxDomain::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap(), 7).unwrap();
        let v = g.integrate(|p| 3.0 * p[0] + p[1] + 1.0);
        // ∫∫ (3x + y + 1) over [0,2]×[-1,1] = 3·2·2 + 0 + 4 = 16
        assert!((v - 16.0).abs() < 1e-12);
    }

    #[test]
    fn interior_erodes_two_cells() {
        let g = Grid::uniform(BoxDomain::cube(2, 0.0, 1.0).unwrap(), 10).unwrap();
        assert_eq!(g.interior(2).len(), 36);
        let k = g.interior(2)[0];
        assert_eq!(g.multi_index(k), vec![2, 2]);
    }
}
