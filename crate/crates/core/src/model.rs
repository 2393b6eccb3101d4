//! The constant-time-headway relative-velocity (CTH-RV) car-following model.
//!
//! A follower with speed `v` and space gap `s` to its leader accelerates as
//!
//! ```text
//! dv/dt = k1 * (s - tau * v) + k2 * dv
//! ```
//!
//! where `dv = v_l - v` is the lead speed minus the follower speed (this sign
//! convention holds everywhere in the crate), `k1` is the gain on the spacing
//! error, `k2` the gain on relative velocity, and `tau` the equilibrium time
//! gap.  Under a forward Euler step of size `dt` the model becomes the linear
//! recurrence `x_{k+1} = A x_k + B u_k` on the state `x = [v, s]` with input
//! `u = v_l`; [`StateMatrices`] holds the `(A, B)` pair and the parameter
//! triple is recoverable from the free matrix entries.
//!
//! The module also provides the analytic string-stability criterion: the sign
//! of `lambda` decides whether a platoon of identical followers amplifies
//! (`lambda > 0`) or dissipates (`lambda < 0`) a lead-vehicle perturbation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification tolerance on `lambda`: values within `±STABILITY_TOL` are
/// reported as [`Stability::Marginal`].  A pure floating-point noise guard,
/// not a modeling choice.
pub const STABILITY_TOL: f64 = 1e-12;

/// Matrix entries with magnitude below this cannot be inverted back to a
/// time gap.
const DEGENERATE_A12: f64 = 1e-12;

/// The parameter triple `(k1, k2, tau)` of the CTH-RV model.
///
/// `k1` is in 1/s^2, `k2` in 1/s, `tau` in s.  Validated constructors reject
/// `k1 <= 0`, `k2 < 0`, and `tau <= 0`; zero `k1` or `tau` would make the
/// string-stability expression singular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    k1: f64,
    k2: f64,
    tau: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    k1: f64,
    k2: f64,
    tau: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.k1, raw.k2, raw.tau)
    }
}

impl ModelParams {
    pub fn new(k1: f64, k2: f64, tau: f64) -> Result<Self> {
        let reason = if !(k1 > 0.0) {
            Some("k1 must be > 0")
        } else if !(k2 >= 0.0) {
            Some("k2 must be >= 0")
        } else if !(tau > 0.0) {
            Some("tau must be > 0")
        } else if !(k1.is_finite() && k2.is_finite() && tau.is_finite()) {
            Some("parameters must be finite")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::InvalidParams { k1, k2, tau, reason }),
            None => Ok(Self { k1, k2, tau }),
        }
    }

    /// Builds the triple without validation.
    ///
    /// Estimators use this to report fitted values verbatim even when the
    /// data implies a parameter outside the physical range; hiding such a fit
    /// behind a projection would mask identification failure.  Also used in
    /// tests that probe structural matrix entries at zero gain.
    pub fn new_unchecked(k1: f64, k2: f64, tau: f64) -> Self {
        Self { k1, k2, tau }
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Model acceleration `k1 * (s - tau * v) + k2 * dv` in m/s^2.
    ///
    /// `dv` is lead speed minus follower speed.
    pub fn acceleration(&self, s: f64, v: f64, dv: f64) -> f64 {
        self.k1 * (s - self.tau * v) + self.k2 * dv
    }

    /// Discretizes the model with a forward Euler step of size `dt`.
    pub fn state_matrices(&self, dt: f64) -> Result<StateMatrices> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTimestep(dt));
        }
        Ok(StateMatrices {
            a: [
                [1.0 - (self.k1 * self.tau + self.k2) * dt, self.k1 * dt],
                [-dt, 1.0],
            ],
            b: [self.k2 * dt, dt],
            dt,
        })
    }

    /// Analytic string-stability verdict with the default [`STABILITY_TOL`].
    pub fn string_stability(&self) -> Result<StabilityVerdict> {
        self.string_stability_with_tol(STABILITY_TOL)
    }

    /// Evaluates
    ///
    /// ```text
    /// lambda = k1 / (-k1^3 tau^3) * (k1^2 tau^2 / 2 + k1 k2 tau - k1)
    /// ```
    ///
    /// and classifies by sign against `tol`.  Rejects `k1 <= 0` or
    /// `tau <= 0`, which make the denominator singular.
    pub fn string_stability_with_tol(&self, tol: f64) -> Result<StabilityVerdict> {
        let (k1, k2, tau) = (self.k1, self.k2, self.tau);
        if !(k1 > 0.0 && tau > 0.0) {
            return Err(Error::InvalidParams {
                k1,
                k2,
                tau,
                reason: "string stability requires k1 > 0 and tau > 0",
            });
        }
        let bracket = k1 * k1 * tau * tau / 2.0 + k1 * k2 * tau - k1;
        let lambda = k1 / -(k1.powi(3) * tau.powi(3)) * bracket;
        let classification = if lambda > tol {
            Stability::Unstable
        } else if lambda < -tol {
            Stability::Stable
        } else {
            Stability::Marginal
        };
        Ok(StabilityVerdict {
            lambda,
            classification,
        })
    }
}

/// Physical state of a follower: speed `v` (m/s) and space gap `s` (m).
///
/// The lead speed is an input to the dynamics, carried alongside rather than
/// inside this type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub v: f64,
    pub s: f64,
}

impl VehicleState {
    /// Requires `s > 0` and `v >= 0`.
    pub fn new(v: f64, s: f64) -> Result<Self> {
        if s > 0.0 && v >= 0.0 && s.is_finite() && v.is_finite() {
            Ok(Self { v, s })
        } else {
            Err(Error::InvalidState { v, s })
        }
    }
}

/// Discrete dynamics pair `(A, B)` of the Euler-discretized model.
///
/// ```text
/// A = [ 1 - (k1 tau + k2) dt    k1 dt ]      B = [ k2 dt ]
///     [ -dt                     1     ]          [ dt    ]
/// ```
///
/// The second row is structural: `a21 = -dt`, `a22 = 1`, `b2 = dt` hold
/// exactly for every parameter triple.  Only `(a11, a12, b1)` carry model
/// information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMatrices {
    a: [[f64; 2]; 2],
    b: [f64; 2],
    dt: f64,
}

impl StateMatrices {
    /// Builds the pair from the three free entries; the structural second row
    /// is filled in from `dt`, so the row invariants hold by construction.
    pub fn from_free_entries(a11: f64, a12: f64, b1: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTimestep(dt));
        }
        Ok(Self {
            a: [[a11, a12], [-dt, 1.0]],
            b: [b1, dt],
            dt,
        })
    }

    pub fn a(&self) -> [[f64; 2]; 2] {
        self.a
    }

    pub fn b(&self) -> [f64; 2] {
        self.b
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step of the recurrence `x' = A x + B u` on `x = [v, s]`,
    /// `u = v_l`.  Returns the next `(v, s)` without validation; callers
    /// decide whether a non-positive gap is fatal.
    pub fn step(&self, v: f64, s: f64, lead_speed: f64) -> (f64, f64) {
        (
            self.a[0][0] * v + self.a[0][1] * s + self.b[0] * lead_speed,
            self.a[1][0] * v + self.a[1][1] * s + self.b[1] * lead_speed,
        )
    }

    /// Recovers the parameter triple:
    ///
    /// ```text
    /// k1 = a12 / dt      k2 = b1 / dt      tau = (1 - b1 - a11) / a12
    /// ```
    ///
    /// Round-trips with [`ModelParams::state_matrices`] to within rounding.
    /// The result is reported verbatim (no positivity projection); fails with
    /// a degenerate-dynamics error when `|a12| < 1e-12`, where the time gap
    /// is undefined.
    pub fn model_params(&self) -> Result<ModelParams> {
        let a11 = self.a[0][0];
        let a12 = self.a[0][1];
        let b1 = self.b[0];
        if a12.abs() < DEGENERATE_A12 {
            return Err(Error::DegenerateDynamics { a12_abs: a12.abs() });
        }
        Ok(ModelParams::new_unchecked(
            a12 / self.dt,
            b1 / self.dt,
            (1.0 - b1 - a11) / a12,
        ))
    }
}

/// Sign class of `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stability::Stable => write!(f, "string stable"),
            Stability::Unstable => write!(f, "string unstable"),
            Stability::Marginal => write!(f, "marginal"),
        }
    }
}

/// The stability scalar and its sign classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub lambda: f64,
    pub classification: Stability,
}
