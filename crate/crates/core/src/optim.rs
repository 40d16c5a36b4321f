//! Derivative-free local minimisation (Nelder–Mead).

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_iter: usize,
    pub initial_step: f64,
    /// Stop when the spread of simplex values falls below this.
    pub ftol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            initial_step: 0.5,
            ftol: 1e-14,
        }
    }
}

impl NelderMead {
    /// Returns `(argmin, min)`. Non-finite objective values count as `+∞`.
    pub fn minimize(&self, f: impl Fn(&[f64]) -> f64, x0: &[f64]) -> (Vec<f64>, f64) {
        let d = x0.len();
        let eval = |x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        if d == 0 {
            return (Vec::new(), eval(x0));
        }
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
        simplex.push((x0.to_vec(), eval(x0)));
        for i in 0..d {
            let mut x = x0.to_vec();
            x[i] += self.initial_step;
            let v = eval(&x);
            simplex.push((x, v));
        }
        for _ in 0..self.max_iter {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (best, worst) = (simplex[0].1, simplex[d].1);
            if (worst - best).abs() <= self.ftol * (best.abs() + self.ftol) {
                break;
            }
            let centroid: Vec<f64> = (0..d)
                .map(|k| simplex[..d].iter().map(|p| p.0[k]).sum::<f64>() / d as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                (0..d).map(|k| centroid[k] + t * (simplex[d].0[k] - centroid[k])).collect()
            };
            let xr = along(-1.0);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe);
                simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[d - 1].1 {
                simplex[d] = (xr, fr);
            } else {
                let (xc, fc) = if fr < worst {
                    let x = along(-0.5);
                    let v = eval(&x);
                    (x, v)
                } else {
                    let x = along(0.5);
                    let v = eval(&x);
                    (x, v)
                };
                if fc < worst.min(fr) {
                    simplex[d] = (xc, fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for p in simplex.iter_mut().skip(1) {
                        for k in 0..d {
                            p.0[k] = x0[k] + 0.5 * (p.0[k] - x0[k]);
                        }
                        p.1 = eval(&p.0);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, v) = simplex.swap_remove(0);
        (x, v)
    }
}
