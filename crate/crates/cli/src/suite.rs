//! The full verification battery behind `suite`.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use otcal::calibration::{negative_source_volume, numeric_comass, CalibrationForm, ComassConfig};
use otcal::curvature::{conformal_identity_check, curvature_step, vanishing_rotation};
use otcal::geometry::{base_metric, ConformalExponent};
use otcal::graph::{calibration_equality_check, determinant_inequality_check, lagrangian_residual, mean_curvature};
use otcal::mesh::{graph_mesh, mass_compare, MassCompareOptions};
use otcal::transport::{cyclical_monotonicity_check, gaussian_map, sinusoidal_map, solve_1d_monotone, solve_discrete};
use otcal::{BoxDomain, ConformalConvention, CostField, DensitySpec, GraphSurface, Grid, Point, TransportMap, TransportProblem};

use crate::commands::check_rng;
use crate::config::{Mutation, RunConfig};
use crate::report::{anchor, Record, VerificationReport};

fn p(v: &[f64]) -> Point {
    DVector::from_column_slice(v)
}

struct Settings {
    convention: ConformalConvention,
    /// Multiplies every finite-difference step.
    fd_scale: f64,
    seed: u64,
}

impl Settings {
    fn rng(&self, check: &str) -> ChaCha8Rng {
        check_rng(self.seed, check)
    }

    /// FD truncation errors are O(h²), so tolerances grow with the step.
    fn fd_tol(&self, tol: f64) -> f64 {
        tol * self.fd_scale.max(1.0).powi(2)
    }
}

struct Family {
    name: &'static str,
    problem: TransportProblem,
    map: TransportMap,
    grid: Grid,
}

fn optimal_families(convention: ConformalConvention) -> otcal::Result<Vec<Family>> {
    let src = BoxDomain::cube(1, 0.0, 1.0)?;
    let tgt = BoxDomain::cube(1, 1.0, 3.0)?;
    let (rho, rhobar) = (DensitySpec::uniform(src.clone()), DensitySpec::uniform(tgt));
    let uniform = Family {
        name: "uniform-1d",
        map: solve_1d_monotone(&rho, &rhobar, 65)?,
        problem: TransportProblem::new(CostField::quadratic(1), rho, rhobar)?.with_convention(convention),
        grid: Grid::uniform(src, 400)?,
    };

    let rho = DensitySpec::normal_1d(0.0, 1.0)?;
    let rhobar = DensitySpec::normal_1d(1.0, 2.0)?;
    let map = TransportMap::affine(
        "gaussian-1d",
        DMatrix::from_element(1, 1, 2.0),
        p(&[1.0]),
        rho.support().clone(),
        rhobar.support().clone(),
    );
    let gauss1 = Family {
        name: "gaussian-1d",
        grid: Grid::uniform(rho.support().clone(), 400)?,
        problem: TransportProblem::new(CostField::quadratic(1), rho, rhobar)?.with_convention(convention),
        map,
    };

    let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let sb = DMatrix::from_row_slice(2, 2, &[2.0, -0.4, -0.4, 1.0]);
    let map = gaussian_map(&s, &sb)?;
    let rho = DensitySpec::gaussian(DVector::zeros(2), s)?;
    let rhobar = DensitySpec::gaussian_on(DVector::zeros(2), sb, map.target().clone())?;
    let gauss2 = Family {
        name: "gaussian-2d",
        grid: Grid::uniform(map.source().clone(), 48)?,
        problem: TransportProblem::new(CostField::quadratic(2), rho, rhobar)?.with_convention(convention),
        map,
    };
    Ok(vec![uniform, gauss1, gauss2])
}

fn calibration(s: &Settings) -> Vec<Record> {
    let fams = match optimal_families(s.convention) {
        Ok(f) => f,
        Err(e) => return vec![Record::error("calibration_equality", anchor::CALIBRATED, 1e-6, e)],
    };
    let mut out = Vec::new();
    for fd in [false, true] {
        let (name, tol) = if fd {
            ("calibration_equality_fd", s.fd_tol(1e-3))
        } else {
            ("calibration_equality", 1e-6)
        };
        let mut worst = 0.0_f64;
        let mut detail = Vec::new();
        for f in &fams {
            let map = if fd {
                f.map.clone().finite_difference_only().with_fd_step(f.map.fd_step() * s.fd_scale)
            } else {
                f.map.clone()
            };
            let gap = GraphSurface::sample(&map, f.grid.clone())
                .and_then(|sf| calibration_equality_check(&sf, &f.problem))
                .map(|r| r.max_volume_gap.max(r.max_phi_gap))
                .unwrap_or(f64::INFINITY);
            worst = worst.max(gap);
            detail.push(format!("{} {gap:.1e}", f.name));
        }
        out.push(Record::at_most(name, anchor::CALIBRATED, worst, tol).detail(detail.join(", ")));
    }
    out
}

fn mass(s: &Settings) -> Vec<Record> {
    let run = || -> otcal::Result<Vec<Record>> {
        let g = DensitySpec::standard_gaussian(2);
        let problem = TransportProblem::new(CostField::bilinear(2), g.clone(), g)?.with_convention(s.convention);
        let domain = BoxDomain::cube(2, -6.0, 6.0)?;
        let wide = BoxDomain::cube(2, -9.0, 9.0)?;
        let angles = [10.0_f64, 30.0, 60.0];
        let competitors: Vec<TransportMap> = angles
            .iter()
            .map(|d| TransportMap::rotation(d.to_radians(), domain.clone(), wide.clone()))
            .collect();
        let cmp = mass_compare(
            &TransportMap::identity(domain.clone()),
            &competitors,
            &problem,
            &domain,
            &MassCompareOptions::new(2, 128),
        )?;
        let expected = std::iter::once(1.0).chain(angles.iter().map(|d| d.to_radians().cos()));
        let err = cmp.rows.iter().zip(expected).map(|(r, e)| (r.mass.mass - e).abs()).fold(0.0, f64::max);
        let phi = cmp.rows.iter().map(|r| (r.phi_integral - 1.0).abs()).fold(0.0, f64::max);
        Ok(vec![
            Record::new("mass_maximality", anchor::MASS, err, 2e-3, err < 2e-3 && cmp.optimal_wins)
                .detail(format!("max |mass − cos θ| over rotations, optimal first: {}", cmp.optimal_wins)),
            Record::at_most("calibration_integral", anchor::CALIBRATION, phi, 1e-3).detail("max |∫Φ − 1|"),
        ])
    };
    run().unwrap_or_else(|e| vec![Record::error("mass_maximality", anchor::MASS, 2e-3, e)])
}

fn comass(s: &Settings) -> Vec<Record> {
    let mut rng = s.rng("comass");
    let g2 = DensitySpec::standard_gaussian(2);
    let unit = || DensitySpec::uniform(BoxDomain::cube(1, 0.0, 1.0).expect("unit box"));
    let configs = [
        (TransportProblem::new(CostField::quadratic(1), unit(), unit()), 1.0),
        (TransportProblem::new(CostField::bilinear(2), g2.clone(), g2.clone()), 3.0),
        (TransportProblem::new(CostField::sqrt1p(2), g2.clone(), g2), 2.0),
    ];
    let (mut lo, mut hi, mut unbounded, mut failed) = (f64::INFINITY, f64::NEG_INFINITY, 0, 0);
    for (pr, r) in &configs {
        let Ok(pr) = pr.clone().map(|p| p.with_convention(s.convention)) else {
            failed += 20;
            continue;
        };
        let n = pr.dim();
        let phi = CalibrationForm::of(&pr);
        for _ in 0..20 {
            let draw = |rng: &mut ChaCha8Rng| -> Point {
                if n == 1 {
                    p(&[rng.gen_range(0.0..1.0)])
                } else {
                    DVector::from_fn(n, |_, _| rng.gen_range(-r..*r))
                }
            };
            let (x, xb) = (draw(&mut rng), draw(&mut rng));
            let cc = ComassConfig {
                seed: rng.gen(),
                ..ComassConfig::default()
            };
            match pr.conformal_metric(&x, &xb).and_then(|h| numeric_comass(&phi, &h, &x, &xb, &cc)) {
                Ok(e) => {
                    lo = lo.min(e.estimate);
                    hi = hi.max(e.estimate);
                    unbounded += usize::from(!e.bounded);
                }
                Err(_) => failed += 1,
            }
        }
    }
    let x = p(&[0.5]);
    let control = TransportProblem::new(CostField::quadratic(1), unit(), unit())
        .and_then(|pr| pr.conformal_metric(&x, &x))
        .and_then(|h| numeric_comass(&negative_source_volume, &h, &x, &x, &ComassConfig::default()))
        .map(|e| e.bounded);
    vec![
        Record::new(
            "comass",
            anchor::CALIBRATION,
            lo,
            1e-3,
            failed == 0 && unbounded == 0 && lo >= 0.999 && hi <= 1.01,
        )
        .flagged(unbounded + failed)
        .detail(format!("60 points, estimates in [{lo:.6}, {hi:.6}]")),
        Record::new("comass_control", anchor::COMASS, 0.0, 0.0, control == Ok(false))
            .detail(match control {
                Ok(b) => format!("−dx¹∧…∧dxⁿ reported bounded: {b}"),
                Err(e) => format!("error: {e}"),
            }),
    ]
}

fn mean_curvature_checks(s: &Settings) -> Vec<Record> {
    let run = || -> otcal::Result<Vec<Record>> {
        let src = BoxDomain::cube(1, -2.0, 2.0)?;
        let tgt = BoxDomain::cube(1, -3.0, 5.0)?;
        let rho = DensitySpec::gaussian_on(p(&[0.0]), DMatrix::from_element(1, 1, 1.0), src.clone())?;
        let rhobar = DensitySpec::gaussian_on(p(&[1.0]), DMatrix::from_element(1, 1, 4.0), tgt.clone())?;
        let pr = TransportProblem::new(CostField::quadratic(1), rho, rhobar)?.with_convention(s.convention);
        let map = TransportMap::affine("gaussian", DMatrix::from_element(1, 1, 2.0), p(&[1.0]), src.clone(), tgt);
        let surface = GraphSurface::sample(&map, Grid::uniform(src.clone(), 40)?)?;
        let h = 1e-3 * src.diameter() * s.fd_scale;
        let (a, b) = (mean_curvature(&surface, &pr, h)?.sup_norm, mean_curvature(&surface, &pr, h / 2.0)?.sup_norm);
        let tol = s.fd_tol(1e-3);

        let unit = BoxDomain::cube(1, 0.0, 1.0)?;
        let u = DensitySpec::uniform(unit.clone());
        let upr = TransportProblem::new(CostField::quadratic(1), u.clone(), u)?.with_convention(s.convention);
        let ss = GraphSurface::sample(&sinusoidal_map(unit.clone(), 0.1)?, Grid::uniform(unit.clone(), 40)?)?;
        let hs = 1e-3 * unit.diameter() * s.fd_scale;
        let (c, d) = (mean_curvature(&ss, &upr, hs)?.sup_norm, mean_curvature(&ss, &upr, hs / 2.0)?.sup_norm);
        Ok(vec![
            Record::new("mean_curvature", anchor::MEAN_CURVATURE, a, tol, a < tol && a / b >= 3.5)
                .detail(format!("step {h:.1e}; halving reduces ‖H‖ ×{:.2}", a / b)),
            Record::new("mean_curvature_control", anchor::MEAN_CURVATURE, c, 1e-2, c > 1e-2 && (c - d).abs() < 1e-3 * d)
                .detail(format!("sinusoid ‖H‖ {c:.4} → {d:.4} under halving")),
        ])
    };
    run().unwrap_or_else(|e| vec![Record::error("mean_curvature", anchor::MEAN_CURVATURE, 1e-3, e)])
}

fn curvature(s: &Settings) -> Vec<Record> {
    let run = || -> otcal::Result<Vec<Record>> {
        let sb = DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.8]);
        let target = DensitySpec::gaussian(p(&[0.2, 0.0]), sb)?;
        let source = DensitySpec::standard_gaussian(2);
        let mk = |c: CostField| {
            TransportProblem::new(c, source.clone(), target.clone()).map(|p| p.with_convention(s.convention))
        };
        let sqrt1p = mk(CostField::sqrt1p(2))?;
        let flat = [mk(CostField::quadratic(2))?, mk(CostField::bilinear(2))?];
        let sample = BoxDomain::cube(2, -1.0, 1.0)?;
        let step = curvature_step(&sample, &sample) * s.fd_scale;
        let mut rng = s.rng("conformal_identity");
        let (mut worst, mut flat_max) = (0.0_f64, 0.0_f64);
        for _ in 0..10 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let xb = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let (i, j) = (rng.gen_range(0..2), rng.gen_range(0..2));
            let run = |pr: &TransportProblem| {
                let q = vanishing_rotation(&pr.cost.mixed_hessian(&x, &xb)?, i, j)?;
                conformal_identity_check(pr, &x, &xb, &q, (i, j), step)
            };
            worst = worst.max(run(&sqrt1p)?.relative_error());
            for pr in &flat {
                let r = run(pr)?;
                flat_max = flat_max.max(r.conformal.abs()).max((r.factor * r.base).abs());
            }
        }
        let tol = s.fd_tol(1e-3);
        Ok(vec![
            Record::at_most("conformal_identity", anchor::CURVATURE, worst, tol)
                .detail(format!("sqrt1p, Gaussian pair, 10 configurations, step {step:.1e}")),
            Record::at_most("constant_hessian_curvature", anchor::CURVATURE, flat_max, 1e-8)
                .detail("quadratic and bilinear costs"),
        ])
    };
    run().unwrap_or_else(|e| vec![Record::error("conformal_identity", anchor::CURVATURE, 1e-3, e)])
}

fn brute_force_min(xs: &[Point], ys: &[Point], c: &CostField) -> otcal::Result<f64> {
    let mut best = f64::INFINITY;
    for perm in (0..xs.len()).permutations(xs.len()) {
        let mut total = 0.0;
        for (i, &j) in perm.iter().enumerate() {
            total += c.eval(&xs[i], &ys[j])?;
        }
        best = best.min(total);
    }
    Ok(best)
}

fn assignment(s: &Settings) -> Vec<Record> {
    let mut rng = s.rng("assignment_oracle");
    let mut mismatches = 0;
    for k in 0..50 {
        let n = rng.gen_range(2..=8);
        let d = 1 + k % 2;
        let cost = if k % 3 == 0 { CostField::sqrt1p(d) } else { CostField::quadratic(d) };
        let mut cloud = || -> Vec<Point> { (0..n).map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0))).collect() };
        let (xs, ys) = (cloud(), cloud());
        let best = brute_force_min(&xs, &ys, &cost).unwrap_or(f64::NAN);
        let got = solve_discrete(&xs, &ys, &cost)
            .and_then(|pl| (0..n).map(|i| cost.eval(&xs[i], &ys[pl.matching[i]])).sum::<otcal::Result<f64>>())
            .unwrap_or(f64::INFINITY);
        if !((got - best).abs() <= 1e-12 * best.abs().max(1.0)) {
            mismatches += 1;
        }
    }

    // uniform → uniform, F = id; disjoint blocks of 100, 400, 1600 per seed
    let mut rng = s.rng("empirical_convergence");
    let seeds = 6;
    let mut errs = [0.0; 3];
    for _ in 0..seeds {
        let xs: Vec<Point> = (0..1600).map(|_| p(&[rng.gen_range(0.0..1.0)])).collect();
        let ys: Vec<Point> = (0..1600).map(|_| p(&[rng.gen_range(0.0..1.0)])).collect();
        for (e, block) in errs.iter_mut().zip([100usize, 400, 1600]) {
            let blocks = 1600 / block;
            for b in 0..blocks {
                let (x, y) = (&xs[b * block..(b + 1) * block], &ys[b * block..(b + 1) * block]);
                let err = match solve_discrete(x, y, &CostField::quadratic(1)) {
                    Ok(plan) => (0..block).map(|i| (y[plan.matching[i]][0] - x[i][0]).abs()).sum::<f64>() / block as f64,
                    Err(_) => f64::NAN,
                };
                *e += err / (seeds * blocks) as f64;
            }
        }
    }
    let (r1, r2) = (errs[1] / errs[0], errs[2] / errs[1]);
    let band = |r: f64| (0.3..=0.75).contains(&r);
    vec![
        Record::at_most("assignment_oracle", anchor::PLUMBING, mismatches as f64, 0.0)
            .detail("mismatches against brute force over 50 instances"),
        Record::new("empirical_convergence", anchor::PLUMBING, r1.max(r2), 0.75, band(r1) && band(r2))
            .detail(format!("error ratios {r1:.3}, {r2:.3} per ×4 sample size, band [0.3, 0.75]")),
    ]
}

fn structure(s: &Settings) -> Vec<Record> {
    let mut rng = s.rng("structure");
    let mut bad_signature = 0;
    let mut total = 0;
    for id in otcal::cost::BUILTIN_COSTS {
        for n in 1..=2 {
            let Ok(cost) = CostField::builtin(id, n) else {
                bad_signature += 1000;
                continue;
            };
            let mut k = 0;
            while k < 1000 {
                let x = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
                let xb = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
                if cost.on_cut_locus(&x, &xb) {
                    continue;
                }
                k += 1;
                total += 1;
                if !matches!(base_metric(&cost, &x, &xb), Ok(h) if h.signature == (n, n)) {
                    bad_signature += 1;
                }
            }
        }
    }

    let lag = optimal_families(s.convention)
        .map(|fams| {
            fams.iter()
                .map(|f| {
                    GraphSurface::sample(&f.map, f.grid.clone())
                        .and_then(|sf| lagrangian_residual(&sf, &f.problem.cost))
                        .map(|r| r.value)
                        .unwrap_or(f64::INFINITY)
                })
                .fold(0.0, f64::max)
        })
        .unwrap_or(f64::INFINITY);

    let mut det_fail = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=4);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let k = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = &a * a.transpose() + (&k - k.transpose());
        det_fail += usize::from(!determinant_inequality_check(&b).map(|r| r.holds).unwrap_or(false));
    }

    let mut cyc_fail = 0;
    for _ in 0..5 {
        let xs: Vec<Point> = (0..16).map(|_| p(&[rng.gen(), rng.gen()])).collect();
        let ys: Vec<Point> = (0..16).map(|_| p(&[rng.gen::<f64>() * 3.0, rng.gen()])).collect();
        for cost in [CostField::quadratic(2), CostField::sqrt1p(2)] {
            let holds = solve_discrete(&xs, &ys, &cost)
                .and_then(|pl| cyclical_monotonicity_check(&pl.pairs(), &cost, 3))
                .map(|r| r.holds)
                .unwrap_or(false);
            cyc_fail += usize::from(!holds);
        }
    }

    let b = BoxDomain::cube(2, 0.0, 1.0).expect("unit square");
    let flipped_rejected = graph_mesh(&TransportMap::identity(b.clone()), &b, 8)
        .map(|m| matches!(m.with_flipped(17), Err(otcal::Error::InconsistentOrientation(_))))
        .unwrap_or(false);

    vec![
        Record::at_most("signature", anchor::SIGNATURE, bad_signature as f64, 0.0)
            .detail(format!("points without signature (n, n), of {total}")),
        Record::at_most("lagrangian", anchor::LAGRANGIAN, lag, 1e-6).detail("optimal families"),
        Record::at_most("determinant_inequality", anchor::CALIBRATED, det_fail as f64, 0.0)
            .detail("failures on 1000 monotone matrices"),
        Record::at_most("cyclical_monotonicity", anchor::PLUMBING, cyc_fail as f64, 0.0)
            .detail("solver outputs failing cycles of length ≤ 3, of 10"),
        Record::new("orientation_consistency", anchor::PLUMBING, 0.0, 0.0, flipped_rejected)
            .detail("mesh with one flipped simplex rejected"),
    ]
}

/// Runs the battery. Checks run concurrently; the report lists them in a
/// fixed order.
pub fn cmd_suite(cfg: &RunConfig) -> VerificationReport {
    let convention = match cfg.mutation {
        Mutation::None => ConformalConvention::default(),
        Mutation::Exponent => ConformalConvention {
            exponent: ConformalExponent::OneOverNPlusOne,
            ..Default::default()
        },
        Mutation::Half => ConformalConvention {
            half: false,
            ..Default::default()
        },
    };
    let s = Settings {
        convention,
        fd_scale: cfg.fd_scale,
        seed: cfg.seed,
    };
    let groups: [(&str, fn(&Settings) -> Vec<Record>); 7] = [
        ("calibration", calibration),
        ("mass", mass),
        ("comass", comass),
        ("mean_curvature", mean_curvature_checks),
        ("curvature", curvature),
        ("assignment", assignment),
        ("structure", structure),
    ];
    let results: Vec<Vec<Record>> = std::thread::scope(|sc| {
        let handles: Vec<_> = groups.iter().map(|(_, f)| sc.spawn(|| f(&s))).collect();
        handles
            .into_iter()
            .zip(&groups)
            .map(|(h, (name, _))| h.join().unwrap_or_else(|_| vec![Record::error(*name, anchor::PLUMBING, 0.0, "check panicked")]))
            .collect()
    });
    let mut report = VerificationReport::new("suite", cfg.seed, vec![400, 48, 128]);
    results.into_iter().flatten().for_each(|r| report.push(r));
    report
}
