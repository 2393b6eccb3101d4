//! Forward simulation: single follower, platoons, and synthetic lead-speed
//! profiles.
//!
//! All simulation uses the forward Euler scheme at the data rate:
//!
//! ```text
//! v[k+1] = v[k] + dt * (k1 * (s[k] - tau * v[k]) + k2 * (v_l[k] - v[k]))
//! s[k+1] = s[k] + dt * (v_l[k] - v[k])
//! ```
//!
//! Mixing integrators would bias every estimator in this crate, since they
//! all assume exactly this recurrence.  A closing gap (`s <= 0`, a collision
//! in model space) is a signaled error, never a silent clamp: clamping would
//! corrupt estimator objectives invisibly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::trajectory::Trajectory;

/// Constant lead-in a platoon lead profile must hold so followers start at
/// equilibrium, s.
pub const PLATOON_LEAD_IN: f64 = 5.0;

/// One Euler step of the follower dynamics.  The exact expression form
/// matters: the gap update is written as `s + dt * (v_l - v)` so simulator
/// and particle filter advance state through the identical code path.
pub(crate) fn euler_step(params: &ModelParams, v: f64, s: f64, v_l: f64, dt: f64) -> (f64, f64) {
    let a = params.acceleration(s, v, v_l - v);
    (v + dt * a, s + dt * (v_l - v))
}

/// Simulates a single follower under the recorded lead speeds.
///
/// The output has the same length as `v_l` and starts at `(v0, s0)`; sample
/// `k+1` is one Euler step from sample `k` driven by `v_l[k]`.  Fails with a
/// trajectory-collapse error the first time the gap reaches zero.
pub fn simulate_follower(
    params: &ModelParams,
    v_l: &[f64],
    v0: f64,
    s0: f64,
    dt: f64,
) -> Result<Trajectory> {
    if v_l.len() < 2 {
        return Err(Error::TooFewSamples {
            got: v_l.len(),
            need: 2,
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimestep(dt));
    }
    if !(s0 > 0.0 && v0 >= 0.0 && s0.is_finite() && v0.is_finite()) {
        return Err(Error::InvalidState { v: v0, s: s0 });
    }

    let n = v_l.len();
    let mut v = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    v.push(v0);
    s.push(s0);
    for k in 0..n - 1 {
        let (v_next, s_next) = euler_step(params, v[k], s[k], v_l[k], dt);
        if !(s_next > 0.0) {
            return Err(Error::TrajectoryCollapse {
                step: k + 1,
                gap: s_next,
            });
        }
        v.push(v_next);
        s.push(s_next);
    }
    Trajectory::new(0.0, dt, v, s, v_l.to_vec())
}

/// One dip-or-surge event in a synthetic lead profile: from `start` seconds
/// the speed ramps toward `target` at `rate` until it arrives, then holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadEvent {
    /// Event start time, s.
    pub start: f64,
    /// Speed the ramp ends at, m/s.
    pub target: f64,
    /// Absolute ramp rate, m/s^2.
    pub rate: f64,
}

/// Recipe for a piecewise-linear synthetic lead-speed profile with optional
/// seeded Gaussian jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadProfileSpec {
    /// Total length, s.
    pub duration: f64,
    /// Sample period, s.
    pub dt: f64,
    /// Speed before the first event, m/s.
    pub base_speed: f64,
    /// Dip/surge events, ordered by start time.
    #[serde(default)]
    pub events: Vec<LeadEvent>,
    /// Jitter RNG seed.
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of per-sample speed jitter, m/s (0 disables).
    #[serde(default)]
    pub jitter_std: f64,
}

impl LeadProfileSpec {
    /// The reference scenario used by the `benchmark` workflow: 620 s at
    /// 10 Hz around 24.4 m/s with three dip-and-recover maneuvers, no
    /// jitter.  Rich enough to excite all three model parameters.
    pub fn benchmark() -> Self {
        let dip = |start: f64| LeadEvent {
            start,
            target: 18.4,
            rate: 1.5,
        };
        let recover = |start: f64| LeadEvent {
            start,
            target: 24.4,
            rate: 1.0,
        };
        Self {
            duration: 620.0,
            dt: 0.1,
            base_speed: 24.4,
            events: vec![
                dip(60.0),
                recover(64.0),
                dip(240.0),
                recover(244.0),
                dip(420.0),
                recover(424.0),
            ],
            seed: 0,
            jitter_std: 0.0,
        }
    }

    /// A short single dip-and-recover profile: 10 s constant lead-in, dip
    /// from 24.4 to 20 m/s, a hold at the dipped speed long enough for slow
    /// followers to settle, recovery, then hold.  The standard input for
    /// platoon string-stability probes and quick estimator tests.
    pub fn standard_dip() -> Self {
        Self {
            duration: 120.0,
            dt: 0.1,
            base_speed: 24.4,
            events: vec![
                LeadEvent {
                    start: 10.0,
                    target: 20.0,
                    rate: 1.5,
                },
                LeadEvent {
                    start: 40.0,
                    target: 24.4,
                    rate: 1.0,
                },
            ],
            seed: 0,
            jitter_std: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidLeadProfile(msg));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return fail(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidTimestep(self.dt));
        }
        if !(self.base_speed >= 0.0) {
            return fail(format!("base_speed must be >= 0, got {}", self.base_speed));
        }
        if !(self.jitter_std >= 0.0) {
            return fail(format!("jitter_std must be >= 0, got {}", self.jitter_std));
        }
        for (i, e) in self.events.iter().enumerate() {
            if !(e.rate > 0.0) {
                return fail(format!("event {i}: ramp rate must be > 0, got {}", e.rate));
            }
            if !(e.target >= 0.0) {
                return fail(format!("event {i}: target must be >= 0, got {}", e.target));
            }
            if !(e.start >= 0.0) {
                return fail(format!("event {i}: start must be >= 0, got {}", e.start));
            }
        }
        for (i, pair) in self.events.windows(2).enumerate() {
            if pair[1].start < pair[0].start {
                return fail(format!("events out of order at index {}", i + 1));
            }
        }
        Ok(())
    }
}

/// Generates the lead-speed series described by `spec`.
///
/// Each event ramps linearly from the previous hold speed to its target at
/// its rate; an event must finish ramping before the next one starts.
/// Jitter, when enabled, adds seeded zero-mean Gaussian noise per sample and
/// clips the result at 0.
pub fn generate_lead_profile(spec: &LeadProfileSpec) -> Result<Vec<f64>> {
    spec.validate()?;

    // Resolve each event's ramp window and check for overlap.
    let mut segments = Vec::with_capacity(spec.events.len());
    let mut hold = spec.base_speed;
    for (i, e) in spec.events.iter().enumerate() {
        let ramp_time = (e.target - hold).abs() / e.rate;
        let ramp_end = e.start + ramp_time;
        if let Some(next) = spec.events.get(i + 1) {
            if ramp_end > next.start + 1e-9 {
                return Err(Error::OverlappingEvents {
                    index: i,
                    ramp_end,
                    next_start: next.start,
                });
            }
        }
        segments.push((e.start, ramp_end, hold, e.target, e.rate));
        hold = e.target;
    }

    let n = (spec.duration / spec.dt).round() as usize;
    if n < 2 {
        return Err(Error::InvalidLeadProfile(format!(
            "profile must span at least 2 samples, got {n}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * spec.dt;
        let mut speed = spec.base_speed;
        for &(start, ramp_end, from, target, rate) in &segments {
            if t < start {
                break;
            }
            if t >= ramp_end {
                speed = target;
            } else {
                let sign = if target >= from { 1.0 } else { -1.0 };
                speed = from + sign * rate * (t - start);
            }
        }
        out.push(speed);
    }

    if spec.jitter_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for v in &mut out {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = (*v + spec.jitter_std * z).max(0.0);
        }
    }
    Ok(out)
}

/// Everything needed to produce one synthetic follower trajectory: model
/// parameters, lead profile, and follower initial conditions.  This is the
/// JSON schema of `generate` configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub params: ModelParams,
    pub profile: LeadProfileSpec,
    /// Follower initial speed, m/s.
    pub v0: f64,
    /// Follower initial space gap, m.
    pub s0: f64,
}

impl ScenarioSpec {
    /// The reference recovery scenario: the [`LeadProfileSpec::benchmark`]
    /// profile driven past a follower with parameters (0.08, 0.12, 1.5)
    /// starting at 24.4 m/s with a 62.5 m gap.
    pub fn benchmark() -> Self {
        Self {
            params: ModelParams::new(0.08, 0.12, 1.5).expect("reference parameters are valid"),
            profile: LeadProfileSpec::benchmark(),
            v0: 24.4,
            s0: 62.5,
        }
    }

    /// Generates the lead profile and simulates the follower through it.
    pub fn generate(&self) -> Result<Trajectory> {
        let lead = generate_lead_profile(&self.profile)?;
        simulate_follower(&self.params, &lead, self.v0, self.s0, self.profile.dt)
    }
}

/// Outcome of a platoon simulation.  Vehicle 0 is the lead profile itself;
/// vehicles `1..=n_followers` are simulated followers, each tracking the one
/// before it.
#[derive(Debug, Clone)]
pub struct PlatoonResult {
    v_eq: f64,
    lead: Vec<f64>,
    followers: Vec<Trajectory>,
    peak_deviation: Vec<f64>,
}

impl PlatoonResult {
    /// Equilibrium speed the platoon started from, m/s.
    pub fn v_eq(&self) -> f64 {
        self.v_eq
    }

    pub fn n_vehicles(&self) -> usize {
        self.followers.len() + 1
    }

    /// Speed series of vehicle `i`; vehicle 0 is the lead profile.
    pub fn speeds(&self, i: usize) -> &[f64] {
        if i == 0 {
            &self.lead
        } else {
            self.followers[i - 1].v()
        }
    }

    /// Follower trajectories, index 0 being vehicle 1.
    pub fn followers(&self) -> &[Trajectory] {
        &self.followers
    }

    /// Peak `|v - v_eq|` per vehicle, indexed like [`Self::speeds`].  How
    /// this evolves along the platoon is the empirical string-stability
    /// signal: growth means the platoon amplifies disturbances.
    pub fn peak_deviation(&self) -> &[f64] {
        &self.peak_deviation
    }
}

/// Simulates `n_followers` identical followers behind the given lead
/// profile.
///
/// The profile must hold a constant speed for the first [`PLATOON_LEAD_IN`]
/// seconds; every follower starts at that equilibrium (`v = v_eq`,
/// `s = tau * v_eq`), so all observed deviation is caused by the lead
/// maneuver, not by initial transients.
pub fn simulate_platoon(
    params: &ModelParams,
    n_followers: usize,
    v_l: &[f64],
    dt: f64,
) -> Result<PlatoonResult> {
    if n_followers < 2 {
        return Err(Error::InvalidPlatoon(format!(
            "need at least 2 followers, got {n_followers}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimestep(dt));
    }
    let lead_in_steps = (PLATOON_LEAD_IN / dt).ceil() as usize;
    if v_l.len() <= lead_in_steps {
        return Err(Error::PlatoonLeadIn {
            required: PLATOON_LEAD_IN,
        });
    }
    let v_eq = v_l[0];
    if v_l[..=lead_in_steps]
        .iter()
        .any(|&v| (v - v_eq).abs() > 1e-9)
    {
        return Err(Error::PlatoonLeadIn {
            required: PLATOON_LEAD_IN,
        });
    }

    let peak = |speeds: &[f64]| {
        speeds
            .iter()
            .fold(0.0f64, |acc, &v| acc.max((v - v_eq).abs()))
    };

    let mut followers: Vec<Trajectory> = Vec::with_capacity(n_followers);
    let mut peak_deviation = vec![peak(v_l)];
    for vehicle in 1..=n_followers {
        let ahead: &[f64] = if vehicle == 1 {
            v_l
        } else {
            followers[vehicle - 2].v()
        };
        let traj =
            simulate_follower(params, ahead, v_eq, params.tau() * v_eq, dt).map_err(|e| {
                match e {
                    Error::TrajectoryCollapse { step, .. } => Error::PlatoonCollapse { vehicle, step },
                    other => other,
                }
            })?;
        peak_deviation.push(peak(traj.v()));
        followers.push(traj);
    }

    Ok(PlatoonResult {
        v_eq,
        lead: v_l.to_vec(),
        followers,
        peak_deviation,
    })
}
