//! Closed-form optimal maps between centred Gaussians under the quadratic cost.

use nalgebra::DMatrix;

use super::{Potential, TransportMap, TransportPotentials};
use crate::density::GAUSSIAN_SUPPORT_SIGMAS;
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::linalg::{is_spd, spd_inv_sqrt, spd_sqrt, sym};

/// `A = Σ^{-1/2} (Σ^{1/2} Σ̄ Σ^{1/2})^{1/2} Σ^{-1/2}`.
pub fn gaussian_map_matrix(sigma: &DMatrix<f64>, sigma_bar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sigma.shape() != sigma_bar.shape() || !sigma.is_square() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            found: sigma_bar.nrows(),
        });
    }
    for m in [sigma, sigma_bar] {
        if !is_spd(m, 1e-12 * m.amax().max(1.0)) {
            return Err(Error::NotPositiveDefinite);
        }
    }
    let s = spd_sqrt(sigma)?;
    let si = spd_inv_sqrt(sigma)?;
    let mid = spd_sqrt(&sym(&(&s * sigma_bar * &s)))?;
    Ok(sym(&(&si * mid * &si)))
}

fn sigma_box(cov: &DMatrix<f64>) -> Result<BoxDomain> {
    let r: Vec<f64> = (0..cov.nrows())
        .map(|i| GAUSSIAN_SUPPORT_SIGMAS * cov[(i, i)].sqrt())
        .collect();
    BoxDomain::new(r.iter().map(|v| -v).collect(), r)
}

/// `x ↦ A x` from `N(0, Σ)` to `N(0, Σ̄)`. The source box is `±8σ`; the target
/// box covers both `±8σ̄` and the image of the source box.
pub fn gaussian_map(sigma: &DMatrix<f64>, sigma_bar: &DMatrix<f64>) -> Result<TransportMap> {
    let a = gaussian_map_matrix(sigma, sigma_bar)?;
    let source = sigma_box(sigma)?;
    let target = sigma_box(sigma_bar)?;
    let n = a.nrows();
    let mut hi: Vec<f64> = target.hi().to_vec();
    for (i, h) in hi.iter_mut().enumerate() {
        let reach: f64 = (0..n).map(|j| a[(i, j)].abs() * source.hi()[j]).sum();
        *h = h.max(reach);
    }
    let target = BoxDomain::new(hi.iter().map(|v| -v).collect(), hi)?;
    Ok(TransportMap::linear("gaussian", a, source, target))
}

/// Kantorovich potentials for the quadratic cost `½|x − x̄|²`:
/// `u(x) = ½ xᵀ(I − A)x`, `v(x̄) = ½|x̄|² − ½ x̄ᵀA⁻¹x̄`.
///
/// With this sign convention `u ⊕ v ≤ c` and `Du = +Dₓc` on the graph; the
/// potential that [`super::map_from_potential`] expects is `−u`.
pub fn gaussian_potentials(sigma: &DMatrix<f64>, sigma_bar: &DMatrix<f64>) -> Result<TransportPotentials> {
    let a = gaussian_map_matrix(sigma, sigma_bar)?;
    let n = a.nrows();
    let ainv = a.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let pu = DMatrix::identity(n, n) - &a;
    let pv = DMatrix::identity(n, n) - ainv;
    Ok(TransportPotentials {
        u: Potential::quadratic_form(pu),
        v: Potential::quadratic_form(pv),
    })
}
