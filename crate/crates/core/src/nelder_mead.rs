//! Bounded Nelder-Mead simplex minimization.
//!
//! A small derivative-free minimizer for box-constrained problems, used by
//! the batch estimator whose objective is a full simulation run and offers
//! no gradients.  Box bounds are enforced by clipping every candidate point
//! coordinate-wise before evaluation, so the objective is never called
//! outside the box.
//!
//! The update rules and coefficients (reflection 1, expansion 2,
//! contraction 0.5, shrink 0.5) follow the standard simplex scheme;
//! convergence requires both the spread of objective values and the spread
//! of vertices to fall below absolute tolerances, or the evaluation budget
//! to run out.  Everything is deterministic: same inputs, same output.

/// Stopping rules for [`minimize`].
#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    /// Objective-evaluation budget.  Checked between iterations, so a run
    /// may overshoot by one iteration's worth of evaluations (at most
    /// dimension + 2).
    pub max_evals: usize,
    /// Absolute tolerance on the objective spread across the simplex.
    pub ftol: f64,
    /// Absolute tolerance on the vertex spread (max-norm).
    pub xtol: f64,
}

/// Outcome of one simplex descent.
#[derive(Debug, Clone)]
pub struct NmResult {
    /// Best vertex found.
    pub x: Vec<f64>,
    /// Objective at `x`.
    pub fx: f64,
    /// Objective evaluations spent.
    pub evals: usize,
    /// Iterations performed.
    pub iters: usize,
    /// Best objective value after each iteration, starting with the initial
    /// simplex; non-increasing by construction.
    pub best_trace: Vec<f64>,
}

fn clip(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = xi.clamp(lo, hi);
    }
}

/// Minimizes `f` over the box `bounds` starting from `x0`.
///
/// `x0` and `bounds` must have equal lengths and each bound must satisfy
/// `lo < hi`; `x0` is clipped into the box before the descent starts.
/// Non-finite objective values are tolerated (the batch estimator uses
/// `+inf` as a collision sentinel); they simply order as the worst vertices.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: &[(f64, f64)], opts: &NmOptions) -> NmResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n > 0, "need at least one dimension");
    assert_eq!(n, bounds.len(), "one bound pair per coordinate");
    for &(lo, hi) in bounds {
        assert!(lo < hi, "bounds must satisfy lo < hi");
    }

    // Initial simplex: x0 plus one vertex per coordinate, nudged by 5%
    // (or a small absolute step where the coordinate is zero).
    let mut start = x0.to_vec();
    clip(&mut start, bounds);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.clone());
    for k in 0..n {
        let mut vertex = start.clone();
        vertex[k] = if vertex[k] != 0.0 {
            vertex[k] * 1.05
        } else {
            0.00025
        };
        clip(&mut vertex, bounds);
        simplex.push(vertex);
    }

    let mut evals = 0usize;
    let eval = |f: &mut F, x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        f(x)
    };
    let mut values: Vec<f64> = simplex
        .iter()
        .map(|v| eval(&mut f, v, &mut evals))
        .collect();

    let order = |simplex: &mut Vec<Vec<f64>>, values: &mut Vec<f64>| {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        *simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        *values = idx.iter().map(|&i| values[i]).collect();
    };
    order(&mut simplex, &mut values);

    let mut iters = 0usize;
    let mut best_trace = vec![values[0]];

    while evals < opts.max_evals {
        let f_spread = (values[n] - values[0]).abs();
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if f_spread <= opts.ftol && x_spread <= opts.xtol {
            break;
        }

        // Centroid of all vertices but the worst.
        let mut centroid = vec![0.0; n];
        for vertex in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(vertex) {
                *c += x / n as f64;
            }
        }
        let blend = |towards: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + towards * (c - w))
                .collect();
            clip(&mut x, bounds);
            x
        };

        let reflected = blend(1.0);
        let f_reflected = eval(&mut f, &reflected, &mut evals);
        let mut shrink = false;
        if f_reflected < values[0] {
            let expanded = blend(2.0);
            let f_expanded = eval(&mut f, &expanded, &mut evals);
            if f_expanded < f_reflected {
                simplex[n] = expanded;
                values[n] = f_expanded;
            } else {
                simplex[n] = reflected;
                values[n] = f_reflected;
            }
        } else if f_reflected < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_reflected;
        } else if f_reflected < values[n] {
            let outside = blend(0.5);
            let f_outside = eval(&mut f, &outside, &mut evals);
            if f_outside <= f_reflected {
                simplex[n] = outside;
                values[n] = f_outside;
            } else {
                shrink = true;
            }
        } else {
            let inside = blend(-0.5);
            let f_inside = eval(&mut f, &inside, &mut evals);
            if f_inside < values[n] {
                simplex[n] = inside;
                values[n] = f_inside;
            } else {
                shrink = true;
            }
        }

        if shrink {
            for i in 1..=n {
                let base = simplex[0].clone();
                for (x, b) in simplex[i].iter_mut().zip(&base) {
                    *x = b + 0.5 * (*x - b);
                }
                clip(&mut simplex[i], bounds);
                values[i] = eval(&mut f, &simplex[i], &mut evals);
            }
        }

        order(&mut simplex, &mut values);
        iters += 1;
        best_trace.push(values[0]);
    }

    NmResult {
        x: simplex[0].clone(),
        fx: values[0],
        evals,
        iters,
        best_trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OPTS: NmOptions = NmOptions {
        max_evals: 2000,
        ftol: 1e-10,
        xtol: 1e-10,
    };

    fn sphere(center: &[f64]) -> impl Fn(&[f64]) -> f64 + '_ {
        move |x: &[f64]| {
            x.iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        }
    }

    #[test]
    fn finds_interior_minimum() {
        let r = minimize(
            sphere(&[0.3, 0.7]),
            &[1.0, 1.0],
            &[(0.0, 2.0), (0.0, 2.0)],
            &OPTS,
        );
        assert!((r.x[0] - 0.3).abs() < 1e-6);
        assert!((r.x[1] - 0.7).abs() < 1e-6);
        assert!(r.fx < 1e-10);
    }

    #[test]
    fn respects_bounds() {
        // Unconstrained minimum sits at (-1, 3), outside the box.
        let r = minimize(
            sphere(&[-1.0, 3.0]),
            &[1.0, 1.0],
            &[(0.5, 2.0), (0.5, 2.0)],
            &OPTS,
        );
        assert!((r.x[0] - 0.5).abs() < 1e-6);
        assert!((r.x[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn is_deterministic() {
        let run = || {
            minimize(
                |x| (x[0] - 0.2).powi(2) + (x[1] * x[1] - x[0]).powi(2),
                &[1.5, 1.5],
                &[(0.0, 2.0), (0.0, 2.0)],
                &OPTS,
            )
        };
        let a = run();
        let b = run();
        assert_eq!(a.x, b.x);
        assert_eq!(a.fx, b.fx);
        assert_eq!(a.evals, b.evals);
    }

    #[test]
    fn best_trace_is_monotone() {
        let r = minimize(
            |x| (x[0] - 0.2).powi(2) + 3.0 * (x[1] - 0.9).powi(2),
            &[1.8, 0.1],
            &[(0.0, 2.0), (0.0, 2.0)],
            &OPTS,
        );
        for w in r.best_trace.windows(2) {
            assert!(w[1] <= w[0], "best-so-far regressed: {w:?}");
        }
    }

    #[test]
    fn stops_on_budget() {
        let tight = NmOptions {
            max_evals: 20,
            ftol: 0.0,
            xtol: 0.0,
        };
        let r = minimize(sphere(&[0.3, 0.7]), &[1.0, 1.0], &[(0.0, 2.0), (0.0, 2.0)], &tight);
        assert!(r.evals >= 20);
        assert!(r.evals <= 20 + 4); // at most one iteration past the budget
        assert!(r.fx.is_finite());
    }

    #[test]
    fn survives_infinite_regions() {
        // Objective is +inf on half the box; candidate steps landing there
        // must be rejected without derailing the descent.
        let r = minimize(
            |x| {
                if x[0] > 1.0 {
                    f64::INFINITY
                } else {
                    (x[0] - 0.8).powi(2) + (x[1] - 0.5).powi(2)
                }
            },
            &[0.95, 1.8],
            &[(0.0, 2.0), (0.0, 2.0)],
            &OPTS,
        );
        assert!((r.x[0] - 0.8).abs() < 1e-5);
        assert!((r.x[1] - 0.5).abs() < 1e-5);
    }
}
