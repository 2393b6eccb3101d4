//! Error metrics comparing simulated against measured trajectories.
//!
//! The error convention throughout is `simulated - measured`, so a positive
//! mean spacing error means the fitted model rides further back than the
//! recorded vehicle.  Percent errors are the mean absolute error divided by
//! the mean of the measured series (times 100); recompute from the raw
//! fields if another normalization is wanted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hist::Histogram;
use crate::model::ModelParams;
use crate::sim::simulate_follower;
use crate::stats;
use crate::trajectory::Trajectory;

/// Bin count of the fit-report error histograms, spanning the symmetric
/// range around zero.
pub const DEFAULT_ERROR_BINS: usize = 50;

/// Mean absolute error between two equal-length series.
pub fn mae(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.len() as f64)
}

/// Root mean squared error between two equal-length series.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum_sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum_sq / a.len() as f64).sqrt())
}

/// Full error summary of one fitted parameter triple against one recorded
/// trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Mean absolute speed error, m/s.
    pub mae_speed: f64,
    /// Mean absolute spacing error, m.
    pub mae_spacing: f64,
    /// Root mean squared spacing error, m.
    pub rmse_spacing: f64,
    /// `100 * mae_speed / mean(measured speed)`.
    pub pct_err_speed: f64,
    /// `100 * mae_spacing / mean(measured spacing)`.
    pub pct_err_spacing: f64,
    /// Mean signed speed error (simulated minus measured), m/s.
    pub mean_err_speed: f64,
    /// Mean signed spacing error, m.
    pub mean_err_spacing: f64,
    /// Population standard deviation of the speed error, m/s.
    pub std_err_speed: f64,
    /// Population standard deviation of the spacing error, m.
    pub std_err_spacing: f64,
    /// Signed speed errors in [`DEFAULT_ERROR_BINS`] zero-centered bins.
    pub hist_err_speed: Histogram,
    /// Signed spacing errors, same binning.
    pub hist_err_spacing: Histogram,
}

impl FitReport {
    /// Header matching [`FitReport::csv_row`].
    pub fn csv_header() -> &'static str {
        "mae_speed,mae_spacing,rmse_spacing,pct_err_speed,pct_err_spacing,\
         mean_err_speed,mean_err_spacing,std_err_speed,std_err_spacing"
    }

    /// Scalar fields as one CSV row (histograms are JSON-only).
    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.mae_speed,
            self.mae_spacing,
            self.rmse_spacing,
            self.pct_err_speed,
            self.pct_err_spacing,
            self.mean_err_speed,
            self.mean_err_spacing,
            self.std_err_speed,
            self.std_err_spacing,
        )
    }
}

/// Simulates `params` through the measured lead speeds from the measured
/// initial state and summarizes every error metric.
///
/// Propagates a trajectory-collapse error if the candidate parameters crash
/// the simulation.
pub fn fit_report(measured: &Trajectory, params: &ModelParams) -> Result<FitReport> {
    let sim = simulate_follower(
        params,
        measured.v_l(),
        measured.v()[0],
        measured.s()[0],
        measured.dt(),
    )?;
    let err_speed: Vec<f64> = sim.v().iter().zip(measured.v()).map(|(a, b)| a - b).collect();
    let err_spacing: Vec<f64> = sim.s().iter().zip(measured.s()).map(|(a, b)| a - b).collect();
    let abs_mean = |xs: &[f64]| xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len() as f64;

    let mae_speed = abs_mean(&err_speed);
    let mae_spacing = abs_mean(&err_spacing);
    Ok(FitReport {
        mae_speed,
        mae_spacing,
        rmse_spacing: rmse(sim.s(), measured.s())?,
        pct_err_speed: 100.0 * mae_speed / stats::mean(measured.v()),
        pct_err_spacing: 100.0 * mae_spacing / stats::mean(measured.s()),
        mean_err_speed: stats::mean(&err_speed),
        mean_err_spacing: stats::mean(&err_spacing),
        std_err_speed: stats::population_std(&err_speed),
        std_err_spacing: stats::population_std(&err_spacing),
        hist_err_speed: Histogram::symmetric(&err_speed, DEFAULT_ERROR_BINS),
        hist_err_spacing: Histogram::symmetric(&err_spacing, DEFAULT_ERROR_BINS),
    })
}
