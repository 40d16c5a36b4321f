//! `verify-map`, `comass`, `mass-compare` and `curvature`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otcal::calibration::{negative_source_volume, numeric_comass, CalibrationForm, ComassConfig, NForm};
use otcal::curvature::{conformal_identity_check, curvature_step, mtw_check, vanishing_rotation, MtwClass};
use otcal::graph::{
    calibration_equality_check, lagrangian_residual, mean_curvature, pushforward_residual, spacelike_margin,
};
use otcal::mesh::{mass_compare, MassCompareOptions};
use otcal::{BoxDomain, GraphSurface, Grid, Point, TransportProblem};

use crate::config::{ConfigError, FormKind, RunConfig};
use crate::report::{anchor, coords, Record, Table, VerificationReport};

/// Generator for one named check: FNV-1a over the root seed and the name, so
/// adding a check never shifts another check's stream.
pub fn check_rng(root: u64, name: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in root.to_le_bytes().iter().chain(name.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h)
}

pub(crate) fn sample_in(b: &BoxDomain, rng: &mut impl Rng) -> Point {
    DVector::from_fn(b.dim(), |i, _| rng.gen_range(b.lo()[i]..b.hi()[i]))
}

/// `b ∩ [lo, hi]ⁿ`.
fn clipped(b: &BoxDomain, clip: Option<(f64, f64)>, key: &str) -> Result<BoxDomain, ConfigError> {
    let Some((lo, hi)) = clip else { return Ok(b.clone()) };
    let l: Vec<f64> = b.lo().iter().map(|v| v.max(lo)).collect();
    let h: Vec<f64> = b.hi().iter().map(|v| v.min(hi)).collect();
    BoxDomain::new(l, h).map_err(|_| ConfigError::BadValue {
        key: key.into(),
        reason: "interval misses the density support".into(),
    })
}

fn fv(p: &Point) -> Vec<f64> {
    p.iter().copied().collect()
}

fn grid_err(e: otcal::Error) -> ConfigError {
    ConfigError::Invalid(format!("grid: {e}"))
}

/// Twist, nondegeneracy, spacelike, Lagrangian, pushforward, calibration
/// equality and mean curvature of the configured map's graph.
pub fn cmd_verify_map(cfg: &RunConfig) -> Result<VerificationReport, ConfigError> {
    let problem = cfg.problem()?;
    let map = cfg.transport_map(&problem)?;
    let src = cfg.source_box(&problem)?;
    let n = problem.dim();
    let grid = Grid::uniform(src.clone(), cfg.grid).map_err(grid_err)?;
    let mut report = VerificationReport::new("verify-map", cfg.seed, vec![cfg.grid; n]);
    let surface = match GraphSurface::sample(&map, grid) {
        Ok(s) => s,
        Err(e) => {
            report.push(Record::error("graph", anchor::CALIBRATED, 0.0, e));
            return Ok(report);
        }
    };
    let cost = &problem.cost;

    let cal_default = if map.has_analytic_jacobian() { 1e-6 } else { 1e-3 };
    let mc_step = cfg.fd_step.unwrap_or(1e-3 * src.diameter());

    type Out = (Vec<Record>, Vec<Table>);
    let checks: Vec<(&str, Box<dyn Fn() -> Out + Sync + '_>)> = vec![
        (
            "twist",
            Box::new(|| {
                let tol = cfg.tolerance("twist", 1e-9);
                let tg = Grid::uniform(problem.target.support().clone(), cfg.grid.min(if n == 1 { 256 } else { 24 }));
                let rec = match tg.and_then(|g| {
                    let ys: Vec<Point> = g.points().collect();
                    cost.check_twist(&src.center(), &ys, tol)
                }) {
                    Ok(t) => Record::new("twist", anchor::TWIST, t.min_separation, tol, t.holds)
                        .detail(format!("{} target samples at the source centre", t.samples)),
                    Err(e) => Record::error("twist", anchor::TWIST, tol, e),
                };
                (vec![rec], vec![])
            }),
        ),
        (
            "nondegeneracy",
            Box::new(|| {
                let tol = cfg.tolerance("nondegeneracy", 1e-12);
                let mut worst = f64::INFINITY;
                let mut err = None;
                for k in surface.interior() {
                    let Some(fx) = surface.value(k) else { continue };
                    match cost.mixed_hessian(&surface.point(k), fx) {
                        Ok(m) => worst = worst.min(m.determinant().abs()),
                        Err(e) => err = Some(e),
                    }
                }
                let rec = match err {
                    Some(e) => Record::error("nondegeneracy", anchor::NONDEGENERATE, tol, e),
                    None => Record::new("nondegeneracy", anchor::NONDEGENERATE, worst, tol, worst > tol)
                        .detail("min |det D D̄c| along the graph"),
                };
                (vec![rec], vec![])
            }),
        ),
        (
            "spacelike",
            Box::new(|| {
                let tol = cfg.tolerance("spacelike", 1e-9);
                let rec = match spacelike_margin(&surface, cost) {
                    Ok(s) => Record::new("spacelike", anchor::SPACELIKE, s.value, tol, s.value >= -tol)
                        .flagged(s.flagged)
                        .detail("min eigenvalue of sym(G·DF)"),
                    Err(e) => Record::error("spacelike", anchor::SPACELIKE, tol, e),
                };
                (vec![rec], vec![])
            }),
        ),
        (
            "lagrangian",
            Box::new(|| {
                let tol = cfg.tolerance("lagrangian", 1e-6);
                let rec = match lagrangian_residual(&surface, cost) {
                    Ok(s) => Record::at_most("lagrangian", anchor::LAGRANGIAN, s.value, tol)
                        .flagged(s.flagged)
                        .detail("max |G·DF − (G·DF)ᵀ|"),
                    Err(e) => Record::error("lagrangian", anchor::LAGRANGIAN, tol, e),
                };
                (vec![rec], vec![])
            }),
        ),
        (
            "pushforward",
            Box::new(|| {
                let tol = cfg.tolerance("pushforward", 1e-4);
                let rec = match pushforward_residual(&surface, &problem) {
                    Ok(s) => Record::at_most("pushforward", anchor::PUSHFORWARD, s.value, tol)
                        .flagged(s.flagged)
                        .detail("max |ρ̄(F) det DF − ρ| / ρ"),
                    Err(e) => Record::error("pushforward", anchor::PUSHFORWARD, tol, e),
                };
                (vec![rec], vec![])
            }),
        ),
        (
            "calibration",
            Box::new(|| {
                let tol = cfg.tolerance("calibration", cal_default);
                match calibration_equality_check(&surface, &problem) {
                    Ok(r) => {
                        let gap = r.max_volume_gap.max(r.max_phi_gap);
                        let mut t = Table::new("calibration.csv", {
                            let mut h = coords("x", n);
                            h.extend(["sqrt_det_g", "rho", "phi"].map(String::from));
                            h
                        });
                        for p in &r.points {
                            let mut row = p.x.clone();
                            row.extend([p.sqrt_det_g, p.rho, p.phi]);
                            t.push(row);
                        }
                        let rec = Record::at_most("calibration", anchor::CALIBRATED, gap, tol)
                            .flagged(r.flagged)
                            .detail(format!(
                                "max |√det g − ρ|/ρ {:.3e}, max |Φ − ρ|/ρ {:.3e}",
                                r.max_volume_gap, r.max_phi_gap
                            ));
                        (vec![rec], vec![t])
                    }
                    Err(e) => (vec![Record::error("calibration", anchor::CALIBRATED, tol, e)], vec![]),
                }
            }),
        ),
        (
            "mean_curvature",
            Box::new(|| {
                let tol = cfg.tolerance("mean_curvature", 1e-3);
                match mean_curvature(&surface, &problem, mc_step) {
                    Ok(r) => {
                        let mut t = Table::new("mean_curvature.csv", {
                            let mut h = coords("x", n);
                            h.extend(coords("h", 2 * n));
                            h.push("norm".into());
                            h
                        });
                        for p in &r.points {
                            let mut row = p.x.clone();
                            row.extend(&p.h);
                            row.push(p.norm);
                            t.push(row);
                        }
                        let rec = Record::at_most("mean_curvature", anchor::MEAN_CURVATURE, r.sup_norm, tol)
                            .flagged(r.flagged)
                            .detail(format!("sup √|h(H, H)|, step {mc_step:.2e}"));
                        (vec![rec], vec![t])
                    }
                    Err(e) => (vec![Record::error("mean_curvature", anchor::MEAN_CURVATURE, tol, e)], vec![]),
                }
            }),
        ),
    ];

    let selected: Vec<_> = checks.into_iter().filter(|(name, _)| cfg.wants(name)).collect();
    let results: Vec<Out> = std::thread::scope(|s| {
        let handles: Vec<_> = selected.iter().map(|(_, f)| s.spawn(f)).collect();
        handles
            .into_iter()
            .zip(&selected)
            .map(|(h, (name, _))| {
                h.join()
                    .unwrap_or_else(|_| (vec![Record::error(*name, anchor::PLUMBING, 0.0, "check panicked")], vec![]))
            })
            .collect()
    });
    for (recs, tables) in results {
        recs.into_iter().for_each(|r| report.push(r));
        report.tables.extend(tables);
    }
    Ok(report)
}

/// Numerical comass of `Φ` (or the `−dx` control) at seeded sample points.
pub fn cmd_comass(cfg: &RunConfig) -> Result<VerificationReport, ConfigError> {
    let problem = cfg.problem()?;
    let n = problem.dim();
    let sb = clipped(problem.source.support(), cfg.comass_box, "comass.lo")?;
    let tb = clipped(problem.target.support(), cfg.comass_box, "comass.lo")?;
    let phi = CalibrationForm::of(&problem);
    let form: &dyn NForm = match cfg.comass_form {
        FormKind::Calibration => &phi,
        FormKind::Negative => &negative_source_volume,
    };
    let tol = cfg.tolerance("comass", 1e-3);
    let mut report = VerificationReport::new("comass", cfg.seed, vec![cfg.comass_points]);
    let mut rng = check_rng(cfg.seed, "comass");
    let mut table = Table::new("comass.csv", {
        let mut h = coords("x", n);
        h.extend(coords("xbar", n));
        h.extend(["estimate", "bounded", "scan_at_boundary"].map(String::from));
        h
    });
    let (mut lo, mut hi, mut unbounded, mut errors) = (f64::INFINITY, f64::NEG_INFINITY, 0usize, Vec::new());
    for _ in 0..cfg.comass_points {
        let (x, xb) = (sample_in(&sb, &mut rng), sample_in(&tb, &mut rng));
        let cc = ComassConfig {
            seed: rng.gen(),
            ..ComassConfig::default()
        };
        match problem.conformal_metric(&x, &xb).and_then(|h| numeric_comass(form, &h, &x, &xb, &cc)) {
            Ok(e) => {
                lo = lo.min(e.estimate);
                hi = hi.max(e.estimate);
                unbounded += usize::from(!e.bounded);
                let mut row = fv(&x);
                row.extend(fv(&xb));
                row.extend([e.estimate, f64::from(u8::from(e.bounded)), f64::from(u8::from(e.scan_at_boundary))]);
                table.push(row);
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    let mut rec = Record::new("comass", anchor::CALIBRATION, lo, tol, errors.is_empty() && lo >= 1.0 - tol && hi <= 1.0 + 10.0 * tol)
        .detail(format!("estimates in [{lo:.6}, {hi:.6}] over {} points", table.rows.len()));
    if let Some(e) = errors.first() {
        rec = rec.flagged(errors.len()).detail(format!("{} point(s) failed, first: {e}", errors.len()));
    }
    report.push(rec);
    report.push(
        Record::new("comass_bounded", anchor::COMASS, unbounded as f64, 0.0, unbounded == 0 && errors.is_empty())
            .flagged(unbounded)
            .detail(format!("bounded {}", unbounded == 0)),
    );
    report.tables.push(table);
    Ok(report)
}

/// Mass ranking of the configured map against the competitor families.
pub fn cmd_mass_compare(cfg: &RunConfig) -> Result<VerificationReport, ConfigError> {
    let problem = cfg.problem()?;
    let optimal = cfg.transport_map(&problem)?;
    let competitors = cfg
        .competitors
        .iter()
        .map(|f| cfg.family_map(f, &problem))
        .collect::<Result<Vec<_>, _>>()?;
    let domain = cfg.source_box(&problem)?;
    let n = problem.dim();
    let mut report = VerificationReport::new("mass-compare", cfg.seed, vec![cfg.compare_cells; n]);
    let tol = cfg.tolerance("mass", 1e-9);
    let cal_tol = cfg.tolerance("calibration_integral", 2e-3);
    let cmp = match mass_compare(&optimal, &competitors, &problem, &domain, &MassCompareOptions::new(n, cfg.compare_cells)) {
        Ok(c) => c,
        Err(e) => {
            report.push(Record::error("mass", anchor::MASS, tol, e));
            return Ok(report);
        }
    };
    let best = cmp.rows[0].mass.mass;
    let mut table = Table::new(
        "mass_ranking.csv",
        ["rank", "mass", "spacelike_mass", "phi_integral", "pushforward_residual", "timelike", "misoriented"]
            .map(String::from)
            .to_vec(),
    )
    .with_labels(vec!["name".into(), "flag".into()]);
    for (rank, &i) in cmp.ranking.iter().enumerate() {
        let r = &cmp.rows[i];
        let flag = match (r.mass.timelike, r.mass.misoriented) {
            (0, 0) => "",
            (_, 0) => "timelike simplices",
            (0, _) => "misoriented simplices",
            _ => "timelike and misoriented simplices",
        };
        table.push_labelled(
            vec![
                (rank + 1) as f64,
                r.mass.mass,
                r.mass.spacelike_mass,
                r.phi_integral,
                r.pushforward_residual,
                r.mass.timelike as f64,
                r.mass.misoriented as f64,
            ],
            vec![r.name.clone(), flag.into()],
        );
    }
    for (i, r) in cmp.rows.iter().enumerate() {
        let bad = r.mass.timelike + r.mass.misoriented;
        let rec = if i == 0 {
            Record::new(format!("mass:{}", r.name), anchor::MASS, r.mass.mass, tol, r.mass.is_finite())
        } else {
            Record::new(format!("mass:{}", r.name), anchor::MASS, r.mass.mass, tol, r.mass.mass <= best + tol)
        };
        let detail = match (i, bad) {
            (0, _) => "optimal map".to_string(),
            (_, 0) => format!("mass ≤ optimal {best:.6}"),
            _ => format!("{} timelike simplices, {} misoriented", r.mass.timelike, r.mass.misoriented),
        };
        report.push(rec.flagged(bad).detail(detail));
    }
    report.push(
        Record::at_most("calibration_integral", anchor::CALIBRATION, cmp.optimal_calibration_gap, cal_tol)
            .detail(format!("|mass − ∫Φ| on the optimal graph; max |∫Φ − 1| {:.3e}", cmp.max_phi_gap)),
    );
    report.tables.push(table);
    Ok(report)
}

/// MTW sign classification and the conformal curvature identity at seeded points.
pub fn cmd_curvature(cfg: &RunConfig) -> Result<VerificationReport, ConfigError> {
    let problem = cfg.problem()?;
    let n = problem.dim();
    if n < 2 {
        return Err(ConfigError::Invalid("curvature checks need n >= 2".into()));
    }
    let sb = clipped(problem.source.support(), cfg.curvature_box, "curvature.lo")?;
    let tb = clipped(problem.target.support(), cfg.curvature_box, "curvature.lo")?;
    let step = cfg.curvature_step.unwrap_or_else(|| curvature_step(&sb, &tb));
    let mut report = VerificationReport::new("curvature", cfg.seed, vec![cfg.curvature_points]);
    let mut rng = check_rng(cfg.seed, "curvature");
    let mut pairs = Vec::with_capacity(cfg.curvature_points);
    while pairs.len() < cfg.curvature_points {
        let (x, xb) = (sample_in(&sb, &mut rng), sample_in(&tb, &mut rng));
        if !problem.cost.on_cut_locus(&x, &xb) {
            pairs.push((x, xb));
        }
    }

    let (mtw, identity) = std::thread::scope(|s| {
        let a = s.spawn(|| mtw_check(&problem.cost, &pairs, cfg.curvature_tol, step));
        let b = s.spawn(|| identity_samples(&problem, &pairs, step));
        (a.join(), b.join())
    });

    if cfg.wants("mtw") {
        match mtw {
            Ok(Ok(r)) => {
                let mut t = Table::new("mtw.csv", {
                    let mut h = coords("x", n);
                    h.extend(coords("xbar", n));
                    h.push("min_component".into());
                    h
                })
                .with_labels(vec!["class".into()]);
                for p in &r.points {
                    let mut row = p.x.clone();
                    row.extend(&p.xbar);
                    row.push(p.min_component);
                    t.push_labelled(row, vec![p.class.as_str().into()]);
                }
                let worst = r.points.iter().map(|p| p.min_component).fold(f64::INFINITY, f64::min);
                report.push(
                    Record::new("mtw", anchor::CURVATURE, worst, cfg.curvature_tol, r.class != MtwClass::Violated)
                        .detail(r.class.as_str()),
                );
                report.tables.push(t);
            }
            Ok(Err(e)) => report.push(Record::error("mtw", anchor::CURVATURE, cfg.curvature_tol, e)),
            Err(_) => report.push(Record::error("mtw", anchor::CURVATURE, cfg.curvature_tol, "check panicked")),
        }
    }
    if cfg.wants("conformal_identity") {
        let tol = cfg.tolerance("conformal_identity", 1e-3);
        match identity {
            Ok(Ok(rows)) => {
                let mut t = Table::new("curvature.csv", {
                    let mut h = coords("x", n);
                    h.extend(coords("ybar", n));
                    h.extend(
                        ["i", "j", "metric_component", "base", "conformal", "factor", "relative_error"].map(String::from),
                    );
                    h
                });
                let worst = rows.iter().map(|r| r[r.len() - 1]).fold(0.0, f64::max);
                rows.into_iter().for_each(|r| t.push(r));
                report.push(
                    Record::at_most("conformal_identity", anchor::CURVATURE, worst, tol)
                        .detail(format!("max relative error over {} components, step {step:.2e}", t.rows.len())),
                );
                report.tables.push(t);
            }
            Ok(Err(e)) => report.push(Record::error("conformal_identity", anchor::CURVATURE, tol, e)),
            Err(_) => report.push(Record::error("conformal_identity", anchor::CURVATURE, tol, "check panicked")),
        }
    }
    Ok(report)
}

fn identity_samples(problem: &TransportProblem, pairs: &[(Point, Point)], step: f64) -> otcal::Result<Vec<Vec<f64>>> {
    let n = problem.dim();
    let mut rows = Vec::new();
    for (x, xb) in pairs {
        let m: DMatrix<f64> = problem.cost.mixed_hessian(x, xb)?;
        for i in 0..n {
            for j in 0..n {
                let q = vanishing_rotation(&m, i, j)?;
                let s = conformal_identity_check(problem, x, xb, &q, (i, j), step)?;
                let mut row = s.point.clone();
                row.extend([i as f64, j as f64, s.metric_component, s.base, s.conformal, s.factor, s.relative_error()]);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
