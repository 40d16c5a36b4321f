//! Polyhedral n-currents in `R^{2n}`: oriented simplicial meshes, their
//! h-mass, Φ-integrals, and mass comparison between graph competitors.

use std::collections::HashMap;
use std::io::{Read, Write};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::calibration::{eval_calibration, CalibrationForm};
use crate::domain::{BoxDomain, Grid};
use crate::error::{Error, Result};
use crate::geometry::{is_spacelike, orientation_value, MetricAtPoint, MetricField, TangentPlane, TransportProblem};
use crate::linalg::{concat, factorial, split};
use crate::transport::TransportMap;

/// An oriented simplicial n-mesh with vertices in `R^{2n}`.
///
/// The vertex order of each simplex fixes its orientation. Construction
/// rejects meshes where a shared face receives the same induced orientation
/// from both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralCurrent {
    n: usize,
    vertices: Vec<DVector<f64>>,
    simplices: Vec<Vec<usize>>,
}

/// Sorted face vertices with the sign induced by the simplex orientation.
fn faces(simplex: &[usize]) -> impl Iterator<Item = (Vec<usize>, i8)> + '_ {
    (0..simplex.len()).map(move |k| {
        let mut face: Vec<usize> = simplex.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &v)| v).collect();
        let parity = permutation_parity(&mut face);
        let sign = if k % 2 == 0 { 1 } else { -1 };
        (face, sign * parity)
    })
}

/// Sorts `v` in place and returns the parity of the sorting permutation.
fn permutation_parity(v: &mut [usize]) -> i8 {
    let mut sign = 1;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    sign
}

impl PolyhedralCurrent {
    pub fn new(vertices: Vec<DVector<f64>>, simplices: Vec<Vec<usize>>) -> Result<Self> {
        let n = vertices.first().map(|v| v.len() / 2).unwrap_or(0);
        if n == 0 {
            return Err(Error::InvalidArgument("mesh needs vertices in R^{2n}, n ≥ 1".into()));
        }
        for v in &vertices {
            if v.len() != 2 * n {
                return Err(Error::DimensionMismatch {
                    expected: 2 * n,
                    found: v.len(),
                });
            }
        }
        let mut seen: HashMap<Vec<usize>, i8> = HashMap::new();
        for s in &simplices {
            if s.len() != n + 1 {
                return Err(Error::DimensionMismatch {
                    expected: n + 1,
                    found: s.len(),
                });
            }
            if s.iter().any(|&i| i >= vertices.len()) || s.iter().duplicates().next().is_some() {
                return Err(Error::InvalidArgument(format!("bad simplex {s:?}")));
            }
            for (face, sign) in faces(s) {
                match seen.get(&face) {
                    None => {
                        seen.insert(face, sign);
                    }
                    Some(&prev) if prev == -sign => {
                        seen.insert(face, 0);
                    }
                    Some(_) => return Err(Error::InconsistentOrientation(face)),
                }
            }
        }
        Ok(Self { n, vertices, simplices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn simplices(&self) -> &[Vec<usize>] {
        &self.simplices
    }

    /// Edge frame `(v₁ − v₀, …, vₙ − v₀)` of simplex `k`.
    pub fn frame(&self, k: usize) -> Result<TangentPlane> {
        let s = &self.simplices[k];
        let v0 = &self.vertices[s[0]];
        let cols: Vec<DVector<f64>> = s[1..].iter().map(|&i| &self.vertices[i] - v0).collect();
        TangentPlane::new(DMatrix::from_columns(&cols))
    }

    pub fn centroid(&self, k: usize) -> DVector<f64> {
        let s = &self.simplices[k];
        s.iter().fold(DVector::zeros(2 * self.n), |acc, &i| acc + &self.vertices[i]) / s.len() as f64
    }

    /// Oriented boundary faces (those with a single incident simplex).
    pub fn boundary(&self) -> Vec<Vec<usize>> {
        let mut count: HashMap<Vec<usize>, (usize, Vec<usize>)> = HashMap::new();
        for s in &self.simplices {
            for k in 0..s.len() {
                let mut face: Vec<usize> = s.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &v)| v).collect();
                if k % 2 == 1 && face.len() >= 2 {
                    face.swap(0, 1);
                }
                let mut key = face.clone();
                key.sort_unstable();
                let e = count.entry(key).or_insert((0, face));
                e.0 += 1;
            }
        }
        let mut out: Vec<Vec<usize>> = count.into_values().filter(|(c, _)| *c == 1).map(|(_, f)| f).collect();
        out.sort();
        out
    }

    /// Reverses simplex `k` (swapping its first two vertices). The result is
    /// validated again, so a mesh with shared faces is rejected.
    pub fn with_flipped(&self, k: usize) -> Result<Self> {
        let mut simplices = self.simplices.clone();
        simplices[k].swap(0, 1);
        Self::new(self.vertices.clone(), simplices)
    }

    /// Writes `vertices.csv` (2n columns) and `simplices.csv` (n+1 indices).
    pub fn write_csv<W1: Write, W2: Write>(&self, vertices: W1, simplices: W2) -> Result<()> {
        let n = self.n;
        let mut w = csv::Writer::from_writer(vertices);
        let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).chain((1..=n).map(|i| format!("xbar{i}"))).collect();
        w.write_record(&header)?;
        for v in &self.vertices {
            w.write_record(v.iter().map(|c| format!("{c:.17e}")))?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(simplices);
        w.write_record((0..=n).map(|i| format!("v{i}")))?;
        for s in &self.simplices {
            w.write_record(s.iter().map(|i| i.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R1: Read, R2: Read>(vertices: R1, simplices: R2) -> Result<Self> {
        let mut vs = Vec::new();
        for rec in csv::Reader::from_reader(vertices).records() {
            let rec = rec?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
            vs.push(DVector::from_vec(vals.map_err(|e| Error::Parse(e.to_string()))?));
        }
        let mut ss = Vec::new();
        for rec in csv::Reader::from_reader(simplices).records() {
            let rec = rec?;
            let idx: std::result::Result<Vec<usize>, _> = rec.iter().map(|f| f.trim().parse::<usize>()).collect();
            ss.push(idx.map_err(|e| Error::Parse(e.to_string()))?);
        }
        Self::new(vs, ss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassReport {
    /// h-volume, or `−∞` when any simplex is timelike or misoriented.
    pub mass: f64,
    /// Sum over the spacelike, τ-oriented simplices only.
    pub spacelike_mass: f64,
    pub simplices: usize,
    pub timelike: usize,
    pub misoriented: usize,
}

impl MassReport {
    pub fn is_finite(&self) -> bool {
        self.timelike == 0 && self.misoriented == 0
    }
}

/// `Σ √det h(eᵢ, eⱼ) / n!` with the metric evaluated at each centroid.
pub fn polyhedral_mass(current: &PolyhedralCurrent, metric: &dyn MetricField) -> Result<MassReport> {
    let n = current.n();
    let vol = factorial(n);
    let (mut sum, mut timelike, mut misoriented) = (0.0, 0, 0);
    for k in 0..current.simplices().len() {
        let plane = current.frame(k)?;
        let h = MetricAtPoint {
            matrix: metric.metric(&current.centroid(k))?,
            signature: (n, n),
        };
        if !is_spacelike(&h, &plane, 0.0).spacelike {
            timelike += 1;
            continue;
        }
        if orientation_value(&plane) <= 0.0 {
            misoriented += 1;
            continue;
        }
        sum += h.gram(&plane).determinant().max(0.0).sqrt() / vol;
    }
    let flagged = timelike + misoriented > 0;
    Ok(MassReport {
        mass: if flagged { f64::NEG_INFINITY } else { sum },
        spacelike_mass: sum,
        simplices: current.simplices().len(),
        timelike,
        misoriented,
    })
}

/// `∫_T Φ`, one-point centroid rule per simplex.
pub fn phi_integral(current: &PolyhedralCurrent, form: &CalibrationForm) -> Result<f64> {
    let vol = factorial(current.n());
    let mut sum = 0.0;
    for k in 0..current.simplices().len() {
        let (x, xbar) = split(&current.centroid(k));
        sum += eval_calibration(form, &x, &xbar, &current.frame(k)?) / vol;
    }
    Ok(sum)
}

/// Graph of `map` over `domain` with `cells` per axis, Kuhn-triangulated and
/// positively oriented in the source coordinates.
pub fn graph_mesh(map: &TransportMap, domain: &BoxDomain, cells: usize) -> Result<PolyhedralCurrent> {
    let n = domain.dim();
    if n != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            found: n,
        });
    }
    if cells == 0 {
        return Err(Error::InvalidArgument("mesh needs at least one cell".into()));
    }
    let nodes = cells + 1;
    let total = nodes.pow(n as u32);
    let index = |m: &[usize]| m.iter().rev().fold(0, |acc, &i| acc * nodes + i);
    let mut vertices = Vec::with_capacity(total);
    for k in 0..total {
        let mut rest = k;
        let x = DVector::from_fn(n, |a, _| {
            let i = rest % nodes;
            rest /= nodes;
            domain.lo()[a] + domain.width(a) * i as f64 / cells as f64
        });
        vertices.push(concat(&x, &map.eval(&x)?));
    }
    let perms: Vec<(Vec<usize>, bool)> = (0..n)
        .permutations(n)
        .map(|p| {
            let mut q = p.clone();
            let even = permutation_parity(&mut q) > 0;
            (p, even)
        })
        .collect();
    let mut simplices = Vec::with_capacity(cells.pow(n as u32) * perms.len());
    for c in 0..cells.pow(n as u32) {
        let mut rest = c;
        let corner: Vec<usize> = (0..n)
            .map(|_| {
                let i = rest % cells;
                rest /= cells;
                i
            })
            .collect();
        for (p, even) in &perms {
            let mut m = corner.clone();
            let mut s = vec![index(&m)];
            for &axis in p {
                m[axis] += 1;
                s.push(index(&m));
            }
            if !even {
                s.swap(0, 1);
            }
            simplices.push(s);
        }
    }
    PolyhedralCurrent::new(vertices, simplices)
}

/// Threshold on the binned pushforward residual above which a competitor
/// cannot be compared.
pub const PUSHFORWARD_THRESHOLD: f64 = 1e-2;

const RESIDUAL_BINS: usize = 8;

/// `Σ_bins |∫_{F⁻¹(bin)} ρ − ∫_bin ρ̄|` over a regular partition of the
/// target box, with midpoint quadrature on a fine source grid.
pub fn binned_pushforward_residual(map: &TransportMap, problem: &TransportProblem, domain: &BoxDomain, resolution: usize) -> Result<f64> {
    let n = domain.dim();
    let tgt = map.target();
    let bins = RESIDUAL_BINS;
    let bin_of = |y: &DVector<f64>| -> Option<usize> {
        let mut k = 0;
        for a in (0..n).rev() {
            let t = (y[a] - tgt.lo()[a]) / tgt.width(a);
            if !(0.0..=1.0).contains(&t) {
                return None;
            }
            k = k * bins + ((t * bins as f64) as usize).min(bins - 1);
        }
        Some(k)
    };
    let mut push = vec![0.0; bins.pow(n as u32)];
    let src = Grid::uniform(domain.clone(), resolution)?;
    let w = src.cell_volume();
    for x in src.points() {
        let y = map.eval(&x)?;
        if let Some(k) = bin_of(&y) {
            push[k] += problem.source.value(&x) * w;
        }
    }
    let per_bin = (resolution / bins).max(8) * bins;
    let tg = Grid::uniform(tgt.clone(), per_bin)?;
    let wt = tg.cell_volume();
    let mut want = vec![0.0; push.len()];
    for y in tg.points() {
        if let Some(k) = bin_of(&y) {
            want[k] += problem.target.value(&y) * wt;
        }
    }
    Ok(push.iter().zip(&want).map(|(a, b)| (a - b).abs()).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassRow {
    pub name: String,
    pub mass: MassReport,
    pub phi_integral: f64,
    pub pushforward_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassComparison {
    /// Optimal map first, then competitors in input order.
    pub rows: Vec<MassRow>,
    /// Row indices sorted by decreasing mass.
    pub ranking: Vec<usize>,
    pub optimal_wins: bool,
    /// `max |∫Φ − 1|` over all rows.
    pub max_phi_gap: f64,
    /// `|mass(optimal) − ∫_optimal Φ|`.
    pub optimal_calibration_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassCompareOptions {
    pub cells: usize,
    /// Source resolution per axis for the binned pushforward residual.
    pub quadrature: usize,
    pub threshold: f64,
}

impl MassCompareOptions {
    pub fn new(n: usize, cells: usize) -> Self {
        Self {
            cells,
            quadrature: if n == 1 { 4 * cells } else { 2 * cells },
            threshold: PUSHFORWARD_THRESHOLD,
        }
    }
}

/// Meshes every graph over `domain` and compares conformal h-masses.
pub fn mass_compare(
    optimal: &TransportMap,
    competitors: &[TransportMap],
    problem: &TransportProblem,
    domain: &BoxDomain,
    options: &MassCompareOptions,
) -> Result<MassComparison> {
    let form = CalibrationForm::of(problem);
    let field = problem.conformal_field();
    let mut rows = Vec::with_capacity(competitors.len() + 1);
    for (i, map) in std::iter::once(optimal).chain(competitors).enumerate() {
        let residual = binned_pushforward_residual(map, problem, domain, options.quadrature)?;
        if i > 0 && residual > options.threshold {
            return Err(Error::NotComparable {
                name: map.name().to_string(),
                residual,
                threshold: options.threshold,
            });
        }
        let mesh = graph_mesh(map, domain, options.cells)?;
        rows.push(MassRow {
            name: map.name().to_string(),
            mass: polyhedral_mass(&mesh, &field)?,
            phi_integral: phi_integral(&mesh, &form)?,
            pushforward_residual: residual,
        });
    }
    let mut ranking: Vec<usize> = (0..rows.len()).collect();
    ranking.sort_by(|&a, &b| rows[b].mass.mass.total_cmp(&rows[a].mass.mass).then(a.cmp(&b)));
    let best = rows[0].mass.mass;
    let optimal_wins = rows[1..].iter().all(|r| r.mass.mass <= best + 1e-12);
    let max_phi_gap = rows.iter().map(|r| (r.phi_integral - 1.0).abs()).fold(0.0, f64::max);
    let optimal_calibration_gap = (rows[0].mass.mass - rows[0].phi_integral).abs();
    Ok(MassComparison {
        rows,
        ranking,
        optimal_wins,
        max_phi_gap,
        optimal_calibration_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostField;
    use crate::density::DensitySpec;
    use crate::transport::{tent_map, TransportMap};

    fn unit_problem(n: usize) -> (TransportProblem, BoxDomain) {
        let b = BoxDomain::cube(n, 0.0, 1.0).unwrap();
        let u = DensitySpec::uniform(b.clone());
        (TransportProblem::new(CostField::quadratic(n), u.clone(), u).unwrap(), b)
    }

    #[test]
    fn identity_graph_masses() {
        let (pr, b) = unit_problem(1);
        let mesh = graph_mesh(&TransportMap::identity(b.clone()), &b, 1024).unwrap();
        let conf = polyhedral_mass(&mesh, &pr.conformal_field()).unwrap();
        assert!((conf.mass - 1.0).abs() < 1e-3);
        let base = polyhedral_mass(&mesh, &pr.base_field()).unwrap();
        assert!((base.mass - 2f64.sqrt()).abs() < 1e-3);
        assert!((phi_integral(&mesh, &CalibrationForm::of(&pr)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn timelike_simplex_gives_negative_infinity() {
        let (pr, _) = unit_problem(1);
        let v = |a: f64, b: f64| DVector::from_column_slice(&[a, b]);
        let mesh = PolyhedralCurrent::new(vec![v(0.0, 0.0), v(0.5, 0.5), v(1.0, 0.2)], vec![vec![0, 1], vec![1, 2]]).unwrap();
        let m = polyhedral_mass(&mesh, &pr.conformal_field()).unwrap();
        assert_eq!(m.mass, f64::NEG_INFINITY);
        assert_eq!(m.timelike, 1);
    }

    #[test]
    fn flipped_simplex_is_rejected() {
        let b = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let mesh = graph_mesh(&TransportMap::identity(b.clone()), &b, 4).unwrap();
        assert!(matches!(mesh.with_flipped(5), Err(Error::InconsistentOrientation(_))));
        let b1 = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let seg = graph_mesh(&TransportMap::identity(b1.clone()), &b1, 8).unwrap();
        assert!(matches!(seg.with_flipped(3), Err(Error::InconsistentOrientation(_))));
    }

    #[test]
    fn kuhn_simplices_positively_oriented() {
        for n in 1..=3 {
            let b = BoxDomain::cube(n, 0.0, 1.0).unwrap();
            let mesh = graph_mesh(&TransportMap::identity(b.clone()), &b, 3).unwrap();
            let mut vol = 0.0;
            for k in 0..mesh.simplices().len() {
                let d = mesh.frame(k).unwrap().projections().0;
                assert!(d > 0.0);
                vol += d / factorial(n);
            }
            assert!((vol - 1.0).abs() < 1e-12);
            // the boundary of a square has 4·3 edges
            if n == 2 {
                assert_eq!(mesh.boundary().len(), 12);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let b = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let mesh = graph_mesh(&TransportMap::identity(b.clone()), &b, 2).unwrap();
        let (mut v, mut s) = (Vec::new(), Vec::new());
        mesh.write_csv(&mut v, &mut s).unwrap();
        assert!(String::from_utf8(s.clone()).unwrap().starts_with("v0,v1,v2\n"));
        let back = PolyhedralCurrent::read_csv(&v[..], &s[..]).unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn rotation_masses_are_cosines() {
        let g = DensitySpec::standard_gaussian(2);
        let pr = TransportProblem::new(CostField::bilinear(2), g.clone(), g).unwrap();
        let b = BoxDomain::cube(2, -6.0, 6.0).unwrap();
        let id = TransportMap::identity(b.clone());
        let rots: Vec<TransportMap> = [10.0_f64, 30.0, 60.0]
            .iter()
            .map(|d| TransportMap::rotation(d.to_radians(), b.clone(), BoxDomain::cube(2, -9.0, 9.0).unwrap()))
            .collect();
        let opts = MassCompareOptions::new(2, 96);
        let cmp = mass_compare(&id, &rots, &pr, &b, &opts).unwrap();
        assert!((cmp.rows[0].mass.mass - 1.0).abs() < 2e-3);
        for (row, d) in cmp.rows[1..].iter().zip([10.0_f64, 30.0, 60.0]) {
            assert!((row.mass.mass - d.to_radians().cos()).abs() < 2e-3, "{row:?}");
            assert!(row.pushforward_residual < 1e-2);
        }
        assert!(cmp.max_phi_gap < 2e-3);
        assert!(cmp.optimal_wins);
        assert_eq!(cmp.ranking, vec![0, 1, 2, 3]);
    }

    #[test]
    fn tent_map_is_flagged() {
        let (pr, b) = unit_problem(1);
        let id = TransportMap::identity(b.clone());
        let cmp = mass_compare(&id, &[tent_map(b.clone()).unwrap()], &pr, &b, &MassCompareOptions::new(1, 1024)).unwrap();
        assert_eq!(cmp.rows[1].mass.mass, f64::NEG_INFINITY);
        assert!(cmp.rows[1].mass.timelike > 0);
        assert!(cmp.optimal_wins);
        assert!(cmp.optimal_calibration_gap < 1e-3);
    }

    #[test]
    fn non_measure_preserving_is_not_comparable() {
        let (pr, b) = unit_problem(1);
        let id = TransportMap::identity(b.clone());
        let sq = TransportMap::analytic("square", b.clone(), b.clone(), |x| x.map(|v| v * v));
        assert!(matches!(
            mass_compare(&id, &[sq], &pr, &b, &MassCompareOptions::new(1, 64)),
            Err(Error::NotComparable { .. })
        ));
    }

    #[test]
    fn mass_bounded_by_phi() {
        let (pr, b) = unit_problem(1);
        let sin = crate::transport::sinusoidal_map(b.clone(), 0.1).unwrap();
        let mesh = graph_mesh(&sin, &b, 256).unwrap();
        let m = polyhedral_mass(&mesh, &pr.conformal_field()).unwrap();
        let phi = phi_integral(&mesh, &CalibrationForm::of(&pr)).unwrap();
        assert!(m.is_finite());
        assert!(m.mass <= phi + 1e-6);
        assert!(phi - m.mass > 1e-3);
    }
}
