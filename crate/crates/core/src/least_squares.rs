//! Closed-form least-squares identification of (k1, k2, tau).
//!
//! The Euler-discretized model is linear in its unknowns: stacking the
//! one-step transitions of a trajectory gives
//!
//! ```text
//! v[k+1] = a11 * v[k] + a12 * s[k] + b1 * v_l[k]
//! ```
//!
//! for the three free matrix entries.  The gap row of the recurrence is
//! structural (`s[k+1] = s[k] + dt * (v_l[k] - v[k])` holds for every
//! parameter value) and contributes no information, so the fit solves the
//! speed row only; including the gap row would not change the minimizer.
//! The solution comes from a rank-revealing singular value decomposition of
//! the regressor, and the parameter triple is recovered from the fitted
//! entries by inverting the discretization.
//!
//! Data that does not excite the dynamics (constant-speed cruising at
//! equilibrium is the canonical case) leaves the parameters unidentifiable.
//! That shows up as a rank-deficient regressor and is reported as an error
//! rather than silently returning one of infinitely many minimizers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ModelParams, StateMatrices};
use crate::trajectory::Trajectory;

/// Relative rank gate: the fit fails when the smallest singular value of the
/// regressor is below `RANK_TOL` times the largest.  Separates genuine
/// unidentifiability from floating-point noise at double precision.
pub const RANK_TOL: f64 = 1e-10;

/// One-step transition data of a trajectory in matrix form.
///
/// Column `j` of `x` holds `(v[j], s[j])`, column `j` of `u` holds
/// `v_l[j]`, and column `j` of `x_next` holds `(v[j+1], s[j+1])`, so
/// `x_next` is `x` shifted left by one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices {
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub x_next: DMatrix<f64>,
    pub dt: f64,
}

/// Builds the transition matrices from a trajectory.
///
/// Requires at least 4 samples: 3 transitions for 3 unknowns.
pub fn assemble_matrices(traj: &Trajectory) -> Result<DataMatrices> {
    if traj.n() < 4 {
        return Err(Error::TooFewSamples {
            got: traj.n(),
            need: 4,
        });
    }
    let m = traj.n() - 1;
    let x = DMatrix::from_fn(2, m, |i, j| if i == 0 { traj.v()[j] } else { traj.s()[j] });
    let u = DMatrix::from_fn(1, m, |_, j| traj.v_l()[j]);
    let x_next = DMatrix::from_fn(2, m, |i, j| {
        if i == 0 {
            traj.v()[j + 1]
        } else {
            traj.s()[j + 1]
        }
    });
    Ok(DataMatrices {
        x,
        u,
        x_next,
        dt: traj.dt(),
    })
}

/// Fits (k1, k2, tau) to a trajectory in closed form.
///
/// The fitted entries are converted to parameters verbatim, without a
/// positivity projection: if the data implies a negative gain, the caller
/// should see that diagnostic rather than a silently clipped value.
///
/// Fails with a rank-deficiency error when the regressor is numerically
/// rank-deficient (see [`RANK_TOL`]) and with a degenerate-dynamics error
/// when the fitted spacing gain is zero.
pub fn fit_least_squares(traj: &Trajectory) -> Result<ModelParams> {
    let data = assemble_matrices(traj)?;
    let m = data.x.ncols();

    // Observations as rows: column order (v, s, v_l), target v[k+1].
    let regressor = DMatrix::from_fn(m, 3, |i, j| match j {
        0 => data.x[(0, i)],
        1 => data.x[(1, i)],
        _ => data.u[(0, i)],
    });
    let target = DVector::from_fn(m, |i, _| data.x_next[(0, i)]);

    let svd = regressor.svd(true, true);
    let sigma = &svd.singular_values;
    let (mut s_min, mut s_max) = (f64::INFINITY, 0.0f64);
    for &s in sigma.iter() {
        s_min = s_min.min(s);
        s_max = s_max.max(s);
    }
    let ratio = s_min / s_max;
    if !(ratio >= RANK_TOL) {
        return Err(Error::RankDeficient {
            ratio,
            threshold: RANK_TOL,
        });
    }

    let coeffs = svd
        .solve(&target, 0.0)
        .expect("svd of a full-rank regressor is solvable");
    let (a11, a12, b1) = (coeffs[0], coeffs[1], coeffs[2]);
    StateMatrices::from_free_entries(a11, a12, b1, data.dt)?.model_params()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_lead_profile, simulate_follower, LeadProfileSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dip_trajectory(params: &ModelParams, dt: f64) -> Trajectory {
        let mut spec = LeadProfileSpec::standard_dip();
        spec.dt = dt;
        let lead = generate_lead_profile(&spec).unwrap();
        simulate_follower(params, &lead, 24.4, params.tau() * 24.4, dt).unwrap()
    }

    #[test]
    fn matrices_have_one_less_column() {
        let t = Trajectory::new(
            0.0,
            0.1,
            vec![1.0, 2.0, 3.0, 4.0],
            vec![10.0, 11.0, 12.0, 13.0],
            vec![1.5, 2.5, 3.5, 4.5],
        )
        .unwrap();
        let d = assemble_matrices(&t).unwrap();
        assert_eq!(d.x.ncols(), 3);
        assert_eq!(d.u.ncols(), 3);
        assert_eq!(d.x_next.ncols(), 3);
        assert_eq!(d.x[(0, 1)], 2.0);
        assert_eq!(d.x[(1, 2)], 12.0);
        assert_eq!(d.u[(0, 0)], 1.5);
    }

    #[test]
    fn next_state_is_shifted_state() {
        let p = ModelParams::new(0.08, 0.12, 1.5).unwrap();
        let t = dip_trajectory(&p, 0.1);
        let d = assemble_matrices(&t).unwrap();
        for j in 0..d.x.ncols() - 1 {
            assert_eq!(d.x_next[(0, j)], d.x[(0, j + 1)]);
            assert_eq!(d.x_next[(1, j)], d.x[(1, j + 1)]);
        }
    }

    #[test]
    fn rejects_three_samples() {
        let t = Trajectory::new(
            0.0,
            0.1,
            vec![1.0, 2.0, 3.0],
            vec![10.0, 11.0, 12.0],
            vec![1.5, 2.5, 3.5],
        )
        .unwrap();
        assert!(matches!(
            assemble_matrices(&t),
            Err(Error::TooFewSamples { got: 3, need: 4 })
        ));
    }

    #[test]
    fn recovers_parameters_from_clean_data() {
        let p = ModelParams::new(0.08, 0.12, 1.5).unwrap();
        let fitted = fit_least_squares(&dip_trajectory(&p, 0.1)).unwrap();
        assert_relative_eq!(fitted.k1(), 0.08, max_relative = 1e-8);
        assert_relative_eq!(fitted.k2(), 0.12, max_relative = 1e-8);
        assert_relative_eq!(fitted.tau(), 1.5, max_relative = 1e-8);
    }

    #[test]
    fn equilibrium_data_is_rank_deficient() {
        let t = Trajectory::new(
            0.0,
            0.1,
            vec![24.4; 100],
            vec![36.6; 100],
            vec![24.4; 100],
        )
        .unwrap();
        assert!(matches!(
            fit_least_squares(&t),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn ignores_absolute_time() {
        let p = ModelParams::new(0.08, 0.12, 1.5).unwrap();
        let t = dip_trajectory(&p, 0.1);
        let shifted = Trajectory::new(
            t.t0() + 1000.0,
            t.dt(),
            t.v().to_vec(),
            t.s().to_vec(),
            t.v_l().to_vec(),
        )
        .unwrap();
        let a = fit_least_squares(&t).unwrap();
        let b = fit_least_squares(&shifted).unwrap();
        assert_eq!(a.k1(), b.k1());
        assert_eq!(a.k2(), b.k2());
        assert_eq!(a.tau(), b.tau());
    }

    #[test]
    fn doubling_dt_returns_the_same_parameters() {
        // The parameters are continuous-time quantities; re-simulating at a
        // coarser rate and fitting divides dt back out.
        let p = ModelParams::new(0.08, 0.12, 1.5).unwrap();
        let fitted = fit_least_squares(&dip_trajectory(&p, 0.2)).unwrap();
        assert_relative_eq!(fitted.k1(), 0.08, max_relative = 1e-8);
        assert_relative_eq!(fitted.k2(), 0.12, max_relative = 1e-8);
        assert_relative_eq!(fitted.tau(), 1.5, max_relative = 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn exact_recovery_for_generic_parameters(
            k1 in 0.02..1.0f64,
            k2 in 0.01..1.0f64,
            tau in 0.5..2.5f64,
        ) {
            let p = ModelParams::new(k1, k2, tau).unwrap();
            let fitted = fit_least_squares(&dip_trajectory(&p, 0.1)).unwrap();
            prop_assert!((fitted.k1() - k1).abs() <= 1e-8 * k1);
            prop_assert!((fitted.k2() - k2).abs() <= 1e-8 * k2);
            prop_assert!((fitted.tau() - tau).abs() <= 1e-8 * tau);
        }
    }
}
