//! Browser bindings for three small interactive views:
//! a 1-D calibration profile, the mass of rotated graphs, and the ratio
//! `‖v‖_h / Φ(v)` over directions at a point of the graph.
//!
//! Results are returned as flat `Float64Array`s, row-major, so the page can
//! plot them without any marshalling library.

use nalgebra::{DMatrix, DVector};
use wasm_bindgen::prelude::*;

use otcal::calibration::{eval_calibration, CalibrationForm};
use otcal::graph::pullback_metric;
use otcal::mesh::{graph_mesh, phi_integral, polyhedral_mass};
use otcal::{BoxDomain, CostField, DensitySpec, Error, TangentPlane, TransportMap, TransportProblem};

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn normal_pair(mu: f64, sigma: f64, mubar: f64, sigmabar: f64) -> otcal::Result<TransportProblem> {
    if !(sigma > 0.0 && sigmabar > 0.0) {
        return Err(Error::InvalidArgument("standard deviations must be positive".into()));
    }
    TransportProblem::new(
        CostField::quadratic(1),
        DensitySpec::normal_1d(mu, sigma)?,
        DensitySpec::normal_1d(mubar, sigmabar)?,
    )
}

/// Affine map `x̄ = μ̄ + s (σ̄/σ)(x − μ)`; `s = 1` is optimal.
fn scaled_map(problem: &TransportProblem, mu: f64, sigma: f64, mubar: f64, sigmabar: f64, s: f64) -> TransportMap {
    let a = s * sigmabar / sigma;
    TransportMap::affine(
        "scaled",
        DMatrix::from_element(1, 1, a),
        DVector::from_element(1, mubar - a * mu),
        problem.source.support().clone(),
        problem.target.support().clone(),
    )
}

/// Rows `[x, F(x), √det g, Φ, ρ(x)]` over `μ ± 3σ` for the normal pair
/// `N(μ, σ²) → N(μ̄, σ̄²)` under quadratic cost. `slope` rescales the optimal
/// map; `√det g = Φ = ρ` only at `slope = 1`.
#[wasm_bindgen]
pub fn calibration_profile(
    mu: f64,
    sigma: f64,
    mubar: f64,
    sigmabar: f64,
    slope: f64,
    samples: usize,
) -> Result<Vec<f64>, JsError> {
    if !(slope > 0.0) {
        return Err(JsError::new("slope factor must be positive"));
    }
    let problem = normal_pair(mu, sigma, mubar, sigmabar).map_err(js)?;
    let map = scaled_map(&problem, mu, sigma, mubar, sigmabar, slope);
    let form = CalibrationForm::of(&problem);
    let samples = samples.max(2);
    let mut out = Vec::with_capacity(5 * samples);
    for k in 0..samples {
        let x = DVector::from_element(1, mu - 3.0 * sigma + 6.0 * sigma * k as f64 / (samples - 1) as f64);
        let fx = map.eval(&x).map_err(js)?;
        let df = map.jacobian(&x).map_err(js)?;
        let g = pullback_metric(&map, &problem, &x).map_err(js)?;
        let phi = eval_calibration(&form, &x, &fx, &TangentPlane::graph(&df));
        out.extend([x[0], fx[0], g[(0, 0)].max(0.0).sqrt(), phi, problem.source.value(&x)]);
    }
    Ok(out)
}

/// Rows `[θ°, mass, ∫Φ]` for the graphs of rotations by `θ ∈ [0, max_deg]`
/// between standard planar Gaussians under the bilinear cost, meshed with
/// `cells` per axis on `[-4, 4]²`. A rotation preserves the measure but is
/// optimal only at `θ = 0`.
#[wasm_bindgen]
pub fn rotation_masses(max_deg: f64, steps: usize, cells: usize) -> Result<Vec<f64>, JsError> {
    let n = 2;
    let support = BoxDomain::cube(n, -4.0, 4.0).map_err(js)?;
    let gaussian = |s: &BoxDomain| DensitySpec::gaussian_on(DVector::zeros(n), DMatrix::identity(n, n), s.clone());
    let problem = TransportProblem::new(
        CostField::bilinear(n),
        gaussian(&support).map_err(js)?,
        gaussian(&BoxDomain::cube(n, -6.0, 6.0).map_err(js)?).map_err(js)?,
    )
    .map_err(js)?;
    let form = CalibrationForm::of(&problem);
    let metric = problem.conformal_field();
    let steps = steps.max(1);
    let mut out = Vec::with_capacity(3 * (steps + 1));
    for k in 0..=steps {
        let deg = max_deg * k as f64 / steps as f64;
        let map = TransportMap::rotation(deg.to_radians(), support.clone(), problem.target.support().clone());
        let mesh = graph_mesh(&map, &support, cells.max(1)).map_err(js)?;
        let mass = polyhedral_mass(&mesh, &metric).map_err(js)?;
        out.extend([deg, mass.mass, phi_integral(&mesh, &form).map_err(js)?]);
    }
    Ok(out)
}

/// Rows `[α, r]` for directions `v = (cos α, sin α)` at `(x, F(x))` on the
/// graph of the scaled map. `r = ‖v‖_h / Φ(v)` on spacelike, positively
/// oriented directions and `NaN` elsewhere; it never exceeds 1 and reaches 1
/// along the optimal graph.
#[wasm_bindgen]
pub fn direction_ratio(
    mu: f64,
    sigma: f64,
    mubar: f64,
    sigmabar: f64,
    slope: f64,
    x: f64,
    samples: usize,
) -> Result<Vec<f64>, JsError> {
    if !(slope > 0.0) {
        return Err(JsError::new("slope factor must be positive"));
    }
    let problem = normal_pair(mu, sigma, mubar, sigmabar).map_err(js)?;
    let map = scaled_map(&problem, mu, sigma, mubar, sigmabar, slope);
    let form = CalibrationForm::of(&problem);
    let x = DVector::from_element(1, x);
    let xbar = map.eval(&x).map_err(js)?;
    let h = problem.conformal_metric(&x, &xbar).map_err(js)?;
    let samples = samples.max(2);
    let mut out = Vec::with_capacity(2 * samples);
    for k in 0..samples {
        let alpha = std::f64::consts::PI * k as f64 / (samples - 1) as f64;
        let v = DVector::from_vec(vec![alpha.cos(), alpha.sin()]);
        let plane = TangentPlane::new(DMatrix::from_column_slice(2, 1, v.as_slice())).map_err(js)?;
        let q = h.inner(&v, &v);
        let phi = eval_calibration(&form, &x, &xbar, &plane);
        let r = if q > 0.0 && phi > 0.0 { q.sqrt() / phi } else { f64::NAN };
        out.extend([alpha, r]);
    }
    Ok(out)
}
