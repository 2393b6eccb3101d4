//! Trajectory time series: container, CSV ingestion and emission, uniform
//! resampling, and radar-versus-GPS comparison statistics.
//!
//! A [`Trajectory`] holds three uniformly sampled series: follower speed `v`,
//! space gap `s`, and lead speed `v_l`.  Two CSV layouts are accepted:
//!
//! * format A, header `time,v,s,v_l`, with the lead speed as a column;
//! * format B, header `time,v,s,dv`, with the relative speed `dv = v_l - v`,
//!   from which the lead speed is reconstructed as `v + dv`.
//!
//! Emission always writes format A with 17-significant-digit floats, enough
//! to round-trip every f64 bit-exactly.

use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hist::Histogram;

/// Tolerance on timestamp spacing when checking uniformity, in seconds.
pub const TIMESTAMP_TOL: f64 = 1e-6;

/// Default sensor-comparison bin width for space-gap errors, m.
pub const DEFAULT_GAP_BIN_WIDTH: f64 = 0.1;

/// Default sensor-comparison bin width for relative-speed errors, m/s.
pub const DEFAULT_REL_SPEED_BIN_WIDTH: f64 = 0.05;

/// Column semantics of an input CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryFormat {
    /// Format A: `time,v,s,v_l`.
    LeadSpeed,
    /// Format B: `time,v,s,dv` with `dv = v_l - v`.
    RelativeSpeed,
}

/// Uniformly sampled follower speed, space gap, and lead speed.
///
/// Construction validates the container invariants: equal series lengths of
/// at least 2, positive sample period, and strictly positive gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    t0: f64,
    dt: f64,
    v: Vec<f64>,
    s: Vec<f64>,
    v_l: Vec<f64>,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, v: Vec<f64>, s: Vec<f64>, v_l: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTimestep(dt));
        }
        if v.len() != s.len() {
            return Err(Error::LengthMismatch {
                left: v.len(),
                right: s.len(),
            });
        }
        if v.len() != v_l.len() {
            return Err(Error::LengthMismatch {
                left: v.len(),
                right: v_l.len(),
            });
        }
        if v.len() < 2 {
            return Err(Error::TooFewSamples {
                got: v.len(),
                need: 2,
            });
        }
        for (row, &gap) in s.iter().enumerate() {
            if !(gap > 0.0) {
                return Err(Error::NonPositiveGap { row, value: gap });
            }
        }
        Ok(Self { t0, dt, v, s, v_l })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn v_l(&self) -> &[f64] {
        &self.v_l
    }

    /// Relative speed `v_l - v` at sample `k`.
    pub fn dv(&self, k: usize) -> f64 {
        self.v_l[k] - self.v[k]
    }

    /// Timestamp of sample `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Parses a CSV stream with a header row.  The sample period is inferred
    /// from the first interval; all later intervals must match it to within
    /// [`TIMESTAMP_TOL`].  Columns are located by name, so column order is
    /// free.
    pub fn from_csv<R: io::Read>(source: R, format: TrajectoryFormat) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);

        let third_column = match format {
            TrajectoryFormat::LeadSpeed => "v_l",
            TrajectoryFormat::RelativeSpeed => "dv",
        };
        let headers = reader
            .headers()
            .map_err(|e| Error::MalformedCsv {
                line: 1,
                msg: e.to_string(),
            })?
            .clone();
        let col = |name: &'static str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or(Error::MissingColumn(name))
        };
        let (c_time, c_v, c_s) = (col("time")?, col("v")?, col("s")?);
        let c_last = col(third_column)?;

        let mut times = Vec::new();
        let mut v = Vec::new();
        let mut s = Vec::new();
        let mut last = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2; // header occupies line 1
            let record = record.map_err(|e| Error::MalformedCsv {
                line,
                msg: e.to_string(),
            })?;
            let field = |c: usize| -> Result<f64> {
                let raw = record.get(c).ok_or(Error::MalformedCsv {
                    line,
                    msg: format!("missing field in column {c}"),
                })?;
                raw.parse::<f64>().map_err(|_| Error::MalformedCsv {
                    line,
                    msg: format!("`{raw}` is not a number"),
                })
            };
            times.push(field(c_time)?);
            v.push(field(c_v)?);
            s.push(field(c_s)?);
            last.push(field(c_last)?);
        }

        if times.len() < 2 {
            return Err(Error::TooFewSamples {
                got: times.len(),
                need: 2,
            });
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::NonMonotonicTimes { index: 1 });
        }
        for (row, w) in times.windows(2).enumerate() {
            let got = w[1] - w[0];
            if (got - dt).abs() > TIMESTAMP_TOL {
                return Err(Error::NonUniformTimestamps {
                    row: row + 1,
                    got,
                    expected: dt,
                });
            }
        }

        let v_l = match format {
            TrajectoryFormat::LeadSpeed => last,
            TrajectoryFormat::RelativeSpeed => {
                last.iter().zip(&v).map(|(dv, vk)| vk + dv).collect()
            }
        };
        Self::new(times[0], dt, v, s, v_l)
    }

    /// Writes format A (`time,v,s,v_l`) with 17 significant digits per value,
    /// so `from_csv` recovers the series bit-exactly.
    pub fn to_csv<W: io::Write>(&self, sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        writer
            .write_record(["time", "v", "s", "v_l"])
            .map_err(csv_io_error)?;
        for k in 0..self.n() {
            writer
                .write_record([
                    format!("{:.16e}", self.time(k)),
                    format!("{:.16e}", self.v[k]),
                    format!("{:.16e}", self.s[k]),
                    format!("{:.16e}", self.v_l[k]),
                ])
                .map_err(csv_io_error)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn csv_io_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::MalformedCsv {
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}

/// Linear interpolation of `(times, values)` onto the uniform grid
/// `times[0], times[0] + dt_out, ...`, clipped to the input time range.
///
/// Grid points that land exactly on an input timestamp return that sample
/// unchanged, so resampling onto the original grid is the identity.
pub fn resample_uniform(times: &[f64], values: &[f64], dt_out: f64) -> Result<Vec<f64>> {
    if times.is_empty() {
        return Err(Error::EmptyInput);
    }
    if times.len() != values.len() {
        return Err(Error::LengthMismatch {
            left: times.len(),
            right: values.len(),
        });
    }
    if !(dt_out > 0.0 && dt_out.is_finite()) {
        return Err(Error::InvalidTimestep(dt_out));
    }
    for (i, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::NonMonotonicTimes { index: i + 1 });
        }
    }
    if times.len() == 1 {
        return Ok(vec![values[0]]);
    }

    let t0 = times[0];
    let t_end = *times.last().unwrap();
    // Half-ulp-scale slack so the final grid point survives rounding in
    // (t_end - t0) / dt_out.
    let n_out = ((t_end - t0) / dt_out + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n_out);
    let mut seg = 0usize;
    for i in 0..n_out {
        let t = (t0 + i as f64 * dt_out).min(t_end);
        while seg + 2 < times.len() && times[seg + 1] <= t {
            seg += 1;
        }
        let (ta, tb) = (times[seg], times[seg + 1]);
        let (ya, yb) = (values[seg], values[seg + 1]);
        let y = if t == ta {
            ya
        } else if t == tb {
            yb
        } else {
            ya + (t - ta) / (tb - ta) * (yb - ya)
        };
        out.push(y);
    }
    Ok(out)
}

/// Element-wise difference statistics between two co-sampled trajectories,
/// typically a radar-sourced and a GPS-sourced recording of the same drive.
///
/// `histogram_*` bins are `bin_width`-wide and centered on zero; counts sum
/// to the number of compared samples.  The standard deviations are population
/// form (divisor n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorComparison {
    pub mean_gap_err: f64,
    pub std_gap_err: f64,
    pub mean_rel_speed_err: f64,
    pub std_rel_speed_err: f64,
    pub histogram_gap: Histogram,
    pub histogram_rel_speed: Histogram,
}

/// Compares `radar` against `gps` sample-by-sample: gap error
/// `radar.s - gps.s` and relative-speed error `radar.dv - gps.dv`.
///
/// Streams recorded at different rates must be aligned first (see
/// [`resample_uniform`]).
pub fn compare_sensors(
    radar: &Trajectory,
    gps: &Trajectory,
    bin_width_gap: f64,
    bin_width_speed: f64,
) -> Result<SensorComparison> {
    if radar.n() != gps.n() {
        return Err(Error::LengthMismatch {
            left: radar.n(),
            right: gps.n(),
        });
    }
    if (radar.dt() - gps.dt()).abs() > TIMESTAMP_TOL {
        return Err(Error::MismatchedSampleRate {
            left: radar.dt(),
            right: gps.dt(),
        });
    }
    if !(bin_width_gap > 0.0) {
        return Err(Error::InvalidBinWidth(bin_width_gap));
    }
    if !(bin_width_speed > 0.0) {
        return Err(Error::InvalidBinWidth(bin_width_speed));
    }

    let gap_err: Vec<f64> = (0..radar.n()).map(|k| radar.s()[k] - gps.s()[k]).collect();
    let rel_err: Vec<f64> = (0..radar.n()).map(|k| radar.dv(k) - gps.dv(k)).collect();
    Ok(SensorComparison {
        mean_gap_err: crate::stats::mean(&gap_err),
        std_gap_err: crate::stats::population_std(&gap_err),
        mean_rel_speed_err: crate::stats::mean(&rel_err),
        std_rel_speed_err: crate::stats::population_std(&rel_err),
        histogram_gap: Histogram::centered(&gap_err, bin_width_gap),
        histogram_rel_speed: Histogram::centered(&rel_err, bin_width_speed),
    })
}
