//! Derivative-free bounded maximization used by the kernel M-step and the
//! separability diagnostic: a Nelder-Mead simplex search with candidate
//! points projected into a box.

/// Box constraints, one (lo, hi) pair per coordinate.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    fn project(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.clamp(self.lo[i], self.hi[i]);
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadOpts {
    pub max_evals: usize,
    /// Stop when the simplex objective spread falls below
    /// `f_tol_abs + f_tol_rel * |f_best|`.
    pub f_tol_abs: f64,
    pub f_tol_rel: f64,
    /// Relative size of the initial simplex steps.
    pub initial_step: f64,
}

impl Default for NelderMeadOpts {
    fn default() -> Self {
        Self { max_evals: 400, f_tol_abs: 1e-12, f_tol_rel: 1e-12, initial_step: 0.1 }
    }
}

/// Result of a simplex search: the best point ever evaluated (which is never
/// worse than the starting point) and its objective value.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Maximizes `f` over the box, starting from `x0`. `x0` itself is always
/// evaluated, so the result never regresses below the starting value.
pub fn nelder_mead_max<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOpts,
) -> OptimResult {
    let dim = x0.len();
    assert!(dim >= 1);
    let mut evals = 0usize;
    let mut best_x = x0.to_vec();
    bounds.project(&mut best_x);
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    // simplex of dim + 1 vertices, tracked as (point, value)
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let v0 = eval(&best_x, &mut evals);
    let mut best_v = v0;
    simplex.push((best_x.clone(), v0));
    for i in 0..dim {
        let mut x = best_x.clone();
        let span = bounds.hi[i] - bounds.lo[i];
        let step = if x[i].abs() > 1e-12 {
            x[i].abs() * opts.initial_step
        } else {
            (span * 0.01).min(opts.initial_step).max(1e-4)
        };
        x[i] += step;
        bounds.project(&mut x);
        if (x[i] - simplex[0].0[i]).abs() < 1e-15 {
            x[i] = simplex[0].0[i] - step;
            bounds.project(&mut x);
        }
        let v = eval(&x, &mut evals);
        if v > best_v {
            best_v = v;
            best_x = x.clone();
        }
        simplex.push((x, v));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals < opts.max_evals {
        // sort descending by value (we maximize)
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(core::cmp::Ordering::Equal));
        let f_best = simplex[0].1;
        let f_worst = simplex[dim].1;
        if f_best > best_v {
            best_v = f_best;
            best_x = simplex[0].0.clone();
        }
        let spread = f_best - f_worst;
        if spread.is_finite() && spread <= opts.f_tol_abs + opts.f_tol_rel * f_best.abs() {
            break;
        }

        // centroid of all but the worst
        let mut centroid = vec![0.0; dim];
        for (x, _) in simplex.iter().take(dim) {
            for i in 0..dim {
                centroid[i] += x[i] / dim as f64;
            }
        }

        let worst = simplex[dim].0.clone();
        let mut reflected = vec![0.0; dim];
        for i in 0..dim {
            reflected[i] = centroid[i] + alpha * (centroid[i] - worst[i]);
        }
        bounds.project(&mut reflected);
        let f_r = eval(&reflected, &mut evals);

        if f_r > f_best {
            // expansion
            let mut expanded = vec![0.0; dim];
            for i in 0..dim {
                expanded[i] = centroid[i] + gamma * (reflected[i] - centroid[i]);
            }
            bounds.project(&mut expanded);
            let f_e = eval(&expanded, &mut evals);
            simplex[dim] = if f_e > f_r { (expanded, f_e) } else { (reflected, f_r) };
        } else if f_r > simplex[dim - 1].1 {
            simplex[dim] = (reflected, f_r);
        } else {
            // contraction toward the better of worst/reflected
            let (base, f_base) =
                if f_r > f_worst { (&reflected, f_r) } else { (&worst, f_worst) };
            let mut contracted = vec![0.0; dim];
            for i in 0..dim {
                contracted[i] = centroid[i] + rho * (base[i] - centroid[i]);
            }
            bounds.project(&mut contracted);
            let f_c = eval(&contracted, &mut evals);
            if f_c > f_base {
                simplex[dim] = (contracted, f_c);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let mut x = vec![0.0; dim];
                    for i in 0..dim {
                        x[i] = best[i] + sigma * (vertex.0[i] - best[i]);
                    }
                    bounds.project(&mut x);
                    let v = eval(&x, &mut evals);
                    *vertex = (x, v);
                }
            }
        }
    }

    for (x, v) in &simplex {
        if *v > best_v {
            best_v = *v;
            best_x = x.clone();
        }
    }
    OptimResult { x: best_x, value: best_v, evals }
}
