//! Exact assignment between equal-size point clouds and c-cyclical monotonicity.

use std::io::{Read, Write};

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng;

use crate::cost::{CostField, Point};
use crate::error::{Error, Result};

/// Uniform-weight coupling of two point clouds given by a permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlan {
    pub source: Vec<Point>,
    pub target: Vec<Point>,
    pub source_weights: Vec<f64>,
    pub target_weights: Vec<f64>,
    /// `matching[i]` is the target index paired with source point `i`.
    pub matching: Vec<usize>,
}

impl DiscretePlan {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn pairs(&self) -> Vec<(Point, Point)> {
        self.matching
            .iter()
            .enumerate()
            .map(|(i, &j)| (self.source[i].clone(), self.target[j].clone()))
            .collect()
    }

    /// `Σᵢ wᵢ c(xᵢ, x̄_σ(i))`.
    pub fn total_cost(&self, cost: &CostField) -> Result<f64> {
        let mut acc = 0.0;
        for (i, &j) in self.matching.iter().enumerate() {
            acc += self.source_weights[i] * cost.eval(&self.source[i], &self.target[j])?;
        }
        Ok(acc)
    }
}

/// Row-major `N × N` cost matrix.
fn cost_matrix(xs: &[Point], ys: &[Point], cost: &CostField) -> Result<Vec<f64>> {
    let mut c = Vec::with_capacity(xs.len() * ys.len());
    for x in xs {
        for y in ys {
            c.push(cost.eval(x, y)?);
        }
    }
    Ok(c)
}

/// Minimum-cost bijection between `source` and `target` (shortest augmenting
/// paths with dual potentials, `O(N³)`).
pub fn solve_discrete(source: &[Point], target: &[Point], cost: &CostField) -> Result<DiscretePlan> {
    let n = source.len();
    if n != target.len() {
        return Err(Error::SizeMismatch(n, target.len()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty point cloud".into()));
    }
    let c = cost_matrix(source, target, cost)?;

    // 1-based arrays; row 0 / column 0 are the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![f64::INFINITY; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let ui = u[i0];
            let ci = &c[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for (j, &cij) in ci.iter().enumerate() {
                let j = j + 1;
                if !used[j] {
                    let cur = cij - ui - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut matching = vec![0; n];
    for j in 1..=n {
        matching[row_of[j] - 1] = j - 1;
    }
    let w = 1.0 / n as f64;
    Ok(DiscretePlan {
        source: source.to_vec(),
        target: target.to_vec(),
        source_weights: vec![w; n],
        target_weights: vec![w; n],
        matching,
    })
}

/// Outcome of a c-cyclical monotonicity test.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicalReport {
    pub holds: bool,
    /// Most negative `Σc(xᵢ, x̄_σ(i)) − Σc(xᵢ, x̄ᵢ)` seen (0 if none negative).
    pub worst_gain: f64,
    pub subsets_checked: usize,
    /// Indices of a violating subset, in permuted order.
    pub violation: Option<Vec<usize>>,
}

const CYCLE_TOL: f64 = 1e-10;

struct CycleScan<'a> {
    c: &'a [Vec<f64>],
    worst: f64,
    violation: Option<Vec<usize>>,
    checked: usize,
}

impl CycleScan<'_> {
    fn subset(&mut self, idx: &[usize]) {
        self.checked += 1;
        let base: f64 = idx.iter().map(|&i| self.c[i][i]).sum();
        let mut perm: Vec<usize> = (0..idx.len()).collect();
        // Heap's algorithm over all orderings of the subset
        let k = perm.len();
        let mut counters = vec![0usize; k];
        let mut i = 0;
        while i < k {
            if counters[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(counters[i], i);
                }
                let s: f64 = (0..k).map(|a| self.c[idx[a]][idx[perm[a]]]).sum();
                let gain = s - base;
                if gain < self.worst {
                    self.worst = gain;
                    if gain < -CYCLE_TOL {
                        self.violation = Some(perm.iter().map(|&a| idx[a]).collect());
                    }
                }
                counters[i] += 1;
                i = 0;
            } else {
                counters[i] = 0;
                i += 1;
            }
        }
    }

    fn report(self) -> CyclicalReport {
        CyclicalReport {
            holds: self.violation.is_none(),
            worst_gain: self.worst.min(0.0),
            subsets_checked: self.checked,
            violation: self.violation,
        }
    }
}

fn check_inputs(pairs: &[(Point, Point)], cost: &CostField, max_cycle: usize) -> Result<Vec<Vec<f64>>> {
    if !(2..=5).contains(&max_cycle) && !pairs.is_empty() {
        return Err(Error::InvalidArgument(format!("max_cycle must be in 2..=5, got {max_cycle}")));
    }
    let xs: Vec<Point> = pairs.iter().map(|p| p.0.clone()).collect();
    let ys: Vec<Point> = pairs.iter().map(|p| p.1.clone()).collect();
    let n = xs.len();
    Ok(cost_matrix(&xs, &ys, cost)?.chunks(n.max(1)).map(<[f64]>::to_vec).collect())
}

/// Checks every subset of at most `max_cycle` pairs against every reordering.
pub fn cyclical_monotonicity_check(
    pairs: &[(Point, Point)],
    cost: &CostField,
    max_cycle: usize,
) -> Result<CyclicalReport> {
    let c = check_inputs(pairs, cost, max_cycle)?;
    let mut scan = CycleScan {
        c: &c,
        worst: 0.0,
        violation: None,
        checked: 0,
    };
    let n = pairs.len();
    for k in 2..=max_cycle.min(n) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            scan.subset(&idx);
            // next k-combination in lexicographic order
            let mut p = k;
            while p > 0 && idx[p - 1] == n - k + p - 1 {
                p -= 1;
            }
            if p == 0 {
                break;
            }
            idx[p - 1] += 1;
            for q in p..k {
                idx[q] = idx[q - 1] + 1;
            }
        }
    }
    Ok(scan.report())
}

/// As [`cyclical_monotonicity_check`] on `samples` random subsets of each size.
pub fn cyclical_monotonicity_sampled<R: Rng>(
    pairs: &[(Point, Point)],
    cost: &CostField,
    max_cycle: usize,
    samples: usize,
    rng: &mut R,
) -> Result<CyclicalReport> {
    let c = check_inputs(pairs, cost, max_cycle)?;
    let mut scan = CycleScan {
        c: &c,
        worst: 0.0,
        violation: None,
        checked: 0,
    };
    let n = pairs.len();
    for k in 2..=max_cycle.min(n) {
        for _ in 0..samples {
            scan.subset(&sample(rng, n, k).into_vec());
        }
    }
    Ok(scan.report())
}

/// Reads a point cloud: header `x1,…,xn`, one point per row.
pub fn read_point_cloud<R: Read>(reader: R) -> Result<Vec<Point>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let n = rdr.headers()?.len();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        let v = v.map_err(|e| Error::Parse(e.to_string()))?;
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
        out.push(DVector::from_vec(v));
    }
    Ok(out)
}

pub fn write_point_cloud<W: Write>(writer: W, points: &[Point]) -> Result<()> {
    let n = points.first().map_or(0, |p| p.len());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((1..=n).map(|i| format!("x{i}")))?;
    for p in points {
        w.write_record(p.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
