//! Online joint state/parameter estimation with a particle filter.
//!
//! Each particle carries the augmented state `(s, v, k1, k2, tau)`: the
//! physical state concatenated with the model parameters, which evolve as a
//! noise-driven random walk.  One filter step per measurement:
//!
//! 1. predict: advance each particle's `(v, s)` by one Euler step of the
//!    car-following model using that particle's own parameters (the exact
//!    code path the simulator uses), then add per-coordinate Gaussian
//!    process noise to all five coordinates;
//! 2. update: reweight by the Gaussian likelihood of the measured
//!    `(s, v)` pair and renormalize;
//! 3. resample: systematic (low-variance) resampling, every step.
//!
//! Process noise has two roles with different time semantics.  On the
//! physical coordinates it absorbs per-transition model error, so its
//! configured spread applies per step.  On the parameter coordinates it is
//! purely artificial dynamics for quantities that are physically constant,
//! so its configured spread is a diffusion intensity per unit `sqrt(time)`
//! and the per-step spread is `intensity * sqrt(dt)`; this keeps the
//! parameter posterior's artificial diffusion independent of the sampling
//! rate.  The distinction matters on long records: per-step parameter noise
//! lets resampling steadily select noise-absorbing (high-damping) parameter
//! drift during equilibrium driving, which inflates `k2` until the ensemble
//! crosses into the string-stable region.
//!
//! The posterior summary is recorded after each update, while the weights
//! still carry the measurement information.  All randomness flows through
//! one seeded RNG in a fixed draw order (initialization: five normals per
//! particle; each step: five normals per particle, then one uniform for the
//! resampler), so a given `(trajectory, config)` pair reproduces the result
//! bit-for-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, Stability};
use crate::sim::euler_step;
use crate::trajectory::Trajectory;

/// Positivity floor applied to the parameter coordinates after process
/// noise.  Keeps the stability scalar computable for every particle; clamp
/// events are counted and reported as a diagnostic.
pub const PARAM_FLOOR: f64 = 1e-6;

/// How particles sitting at the positivity floor (`k1` or `tau` clamped)
/// enter the instability probability.  They have no meaningful stability
/// verdict of their own; by default they are excluded from the unstable
/// count and reported separately as `degenerate_fraction`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateClass {
    /// Count clamped particles as neither stable nor unstable.
    #[default]
    Excluded,
    /// Count clamped particles as string stable.
    Stable,
    /// Count clamped particles as string unstable.
    Unstable,
}

/// Filter configuration.  All noise entries are per-coordinate standard
/// deviations of diagonal Gaussians, in the augmented-state order
/// `(s, v, k1, k2, tau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfConfig {
    pub n_particles: usize,
    /// Initial ensemble mean.
    pub init_mean: [f64; 5],
    /// Initial ensemble spread.
    pub init_std: [f64; 5],
    /// Process-noise spread: per-step transition noise for the two physical
    /// coordinates, diffusion intensity (spread per unit `sqrt(time)`) for
    /// the three parameter coordinates.  See the module docs for why the
    /// parameter entries scale with `sqrt(dt)`.
    pub process_std: [f64; 5],
    /// Measurement-noise spread for the observed `(s, v)` pair.
    pub meas_std: [f64; 2],
    pub seed: u64,
    #[serde(default)]
    pub degenerate_class: DegenerateClass,
}

impl PfConfig {
    /// The reference configuration: 500 particles, parameter guesses
    /// (0.1, 0.1, 1.4), generous initial spread, slowly diffusing
    /// parameters, and measurement noise of 0.2 m / 0.1 m/s.  The physical
    /// coordinates start at the first measured sample `(s0, v0)`.
    pub fn reference(s0: f64, v0: f64) -> Self {
        Self {
            n_particles: 500,
            init_mean: [s0, v0, 0.1, 0.1, 1.4],
            init_std: [0.5, 0.5, 0.2, 0.2, 0.3],
            process_std: [0.2, 0.1, 0.01, 0.01, 0.01],
            meas_std: [0.2, 0.1],
            seed: 0,
            degenerate_class: DegenerateClass::Excluded,
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidPfConfig(msg));
        if self.n_particles < 2 {
            return fail(format!(
                "need at least 2 particles, got {}",
                self.n_particles
            ));
        }
        let all_finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        if !all_finite(&self.init_mean)
            || !all_finite(&self.init_std)
            || !all_finite(&self.process_std)
            || !all_finite(&self.meas_std)
        {
            return fail("all configuration entries must be finite".into());
        }
        if self.init_std.iter().any(|&x| x < 0.0) || self.process_std.iter().any(|&x| x < 0.0) {
            return fail("noise standard deviations must be >= 0".into());
        }
        if self.meas_std.iter().any(|&x| !(x > 0.0)) {
            return fail("measurement standard deviations must be > 0".into());
        }
        Ok(())
    }
}

/// Weighted particle population over the augmented state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    states: Vec<[f64; 5]>,
    weights: Vec<f64>,
}

impl ParticleEnsemble {
    /// Wraps explicit states and weights, checking the simplex invariants:
    /// non-negative weights summing to 1 within 1e-12.
    pub fn new(states: Vec<[f64; 5]>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyInput);
        }
        if states.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: states.len(),
                right: weights.len(),
            });
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPfConfig(format!(
                "weights must be a simplex vector, got sum {sum}"
            )));
        }
        Ok(Self { states, weights })
    }

    fn uniform(states: Vec<[f64; 5]>) -> Self {
        let n = states.len();
        Self {
            states,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[[f64; 5]] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted mean of each augmented-state coordinate.
    pub fn mean(&self) -> [f64; 5] {
        let mut m = [0.0; 5];
        for (state, &w) in self.states.iter().zip(&self.weights) {
            for (acc, x) in m.iter_mut().zip(state) {
                *acc += w * x;
            }
        }
        m
    }

    /// Weighted population standard deviation of each coordinate.
    pub fn std(&self) -> [f64; 5] {
        let m = self.mean();
        let mut var = [0.0; 5];
        for (state, &w) in self.states.iter().zip(&self.weights) {
            for c in 0..5 {
                let d = state[c] - m[c];
                var[c] += w * d * d;
            }
        }
        var.map(f64::sqrt)
    }
}

/// Advances every particle one step: Euler dynamics with the particle's own
/// parameters, random-walk parameters, then additive process noise on all
/// five coordinates and the positivity floor on the parameter coordinates.
/// The parameter entries of `process_std` are diffusion intensities; the
/// spread actually added is `process_std[i] * sqrt(dt)` for those three
/// coordinates (see the module docs).
///
/// Draws five normals per particle from `rng` in coordinate order; returns
/// the number of parameter coordinates that hit [`PARAM_FLOOR`].
pub fn pf_predict<R: Rng>(
    ensemble: &mut ParticleEnsemble,
    v_l: f64,
    dt: f64,
    process_std: &[f64; 5],
    rng: &mut R,
) -> u64 {
    let sqrt_dt = dt.sqrt();
    let step_std = [
        process_std[0],
        process_std[1],
        process_std[2] * sqrt_dt,
        process_std[3] * sqrt_dt,
        process_std[4] * sqrt_dt,
    ];
    let mut clamps = 0;
    for state in &mut ensemble.states {
        let [s, v, k1, k2, tau] = *state;
        let params = ModelParams::new_unchecked(k1, k2, tau);
        let (v_next, s_next) = euler_step(&params, v, s, v_l, dt);
        let mut next = [s_next, v_next, k1, k2, tau];
        for (x, &std) in next.iter_mut().zip(&step_std) {
            let z: f64 = StandardNormal.sample(rng);
            *x += std * z;
        }
        for x in &mut next[2..] {
            if *x < PARAM_FLOOR {
                *x = PARAM_FLOOR;
                clamps += 1;
            }
        }
        *state = next;
    }
    clamps
}

/// Reweights the ensemble by the measured `(s, v)` pair under independent
/// per-coordinate Gaussian measurement noise, then renormalizes.
///
/// Fails with a weight-collapse error when every posterior weight
/// underflows to zero, i.e. no particle is anywhere near the measurement;
/// aborting beats renormalizing garbage.  `step` only labels that error.
pub fn pf_update(
    ensemble: &mut ParticleEnsemble,
    meas_s: f64,
    meas_v: f64,
    meas_std: &[f64; 2],
    step: usize,
) -> Result<()> {
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    for (state, w) in ensemble.states.iter().zip(&mut ensemble.weights) {
        let z_s = (meas_s - state[0]) / meas_std[0];
        let z_v = (meas_v - state[1]) / meas_std[1];
        let density_s = (-0.5 * z_s * z_s).exp() / (meas_std[0] * norm);
        let density_v = (-0.5 * z_v * z_v).exp() / (meas_std[1] * norm);
        *w *= density_s * density_v;
    }
    let sum: f64 = ensemble.weights.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::WeightCollapse { step });
    }
    for w in &mut ensemble.weights {
        *w /= sum;
    }
    Ok(())
}

/// Systematic resampling: one uniform draw `u` in `[0, 1/n)`, then the `n`
/// stratified positions `u + i/n` walked against the cumulative weights.
/// Returns `n` non-decreasing particle indices, `n` being the ensemble
/// size.
pub fn systematic_resample<R: Rng>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let u: f64 = rng.random::<f64>() / n as f64;
    systematic_resample_at(weights, n, u)
}

/// Deterministic core of [`systematic_resample`] with an explicit offset
/// `u` in `[0, 1/n_out)` and output count (useful for growing or shrinking
/// an ensemble while resampling).
pub fn systematic_resample_at(weights: &[f64], n_out: usize, u: f64) -> Vec<usize> {
    let last = weights.len() - 1;
    let mut indices = Vec::with_capacity(n_out);
    let mut j = 0usize;
    let mut cum = weights[0];
    for i in 0..n_out {
        let position = u + i as f64 / n_out as f64;
        while position >= cum && j < last {
            j += 1;
            cum += weights[j];
        }
        indices.push(j);
    }
    indices
}

/// Per-step posterior summary and final diagnostics of one filter run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfResult {
    /// Weighted posterior mean of `(s, v, k1, k2, tau)` after each
    /// measurement update (entries `1..n` of the trajectory).
    pub post_mean: Vec<[f64; 5]>,
    /// Weighted posterior standard deviation, same layout.
    pub post_std: Vec<[f64; 5]>,
    /// Plain mean of the final post-resampling ensemble's parameters.
    pub params: ModelParams,
    /// Fraction of final particles whose parameters give an unstable
    /// stability scalar (see [`DegenerateClass`] for clamped particles).
    pub instability_probability: f64,
    /// Fraction of final particles with `k1` or `tau` at the positivity
    /// floor.
    pub degenerate_fraction: f64,
    /// Total parameter-coordinate clamps across the run.
    pub clamp_events: u64,
}

/// Streaming filter state: feed samples one at a time with
/// [`ParticleFilter::push_sample`], read the running posterior whenever
/// needed, and call [`ParticleFilter::into_result`] at the end.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    config: PfConfig,
    dt: f64,
    ensemble: ParticleEnsemble,
    rng: ChaCha8Rng,
    prev_lead: Option<f64>,
    step: usize,
    clamp_events: u64,
    post_mean: Vec<[f64; 5]>,
    post_std: Vec<[f64; 5]>,
}

impl ParticleFilter {
    /// Validates the configuration and draws the initial ensemble from
    /// `N(init_mean, diag(init_std^2))`.
    pub fn new(config: PfConfig, dt: f64) -> Result<Self> {
        config.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTimestep(dt));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let states = (0..config.n_particles)
            .map(|_| {
                let mut state = config.init_mean;
                for (x, &std) in state.iter_mut().zip(&config.init_std) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x += std * z;
                }
                state
            })
            .collect();
        Ok(Self {
            ensemble: ParticleEnsemble::uniform(states),
            rng,
            dt,
            config,
            prev_lead: None,
            step: 0,
            clamp_events: 0,
            post_mean: Vec::new(),
            post_std: Vec::new(),
        })
    }

    /// Feeds one measured sample `(s, v, v_l)` in time order.
    ///
    /// The first sample only arms the filter (the initial ensemble already
    /// represents time zero); every later sample triggers one
    /// predict/update/resample cycle driven by the previous sample's lead
    /// speed.
    pub fn push_sample(&mut self, s: f64, v: f64, v_l: f64) -> Result<()> {
        if let Some(lead) = self.prev_lead {
            self.step += 1;
            self.clamp_events += pf_predict(
                &mut self.ensemble,
                lead,
                self.dt,
                &self.config.process_std,
                &mut self.rng,
            );
            pf_update(&mut self.ensemble, s, v, &self.config.meas_std, self.step)?;
            self.post_mean.push(self.ensemble.mean());
            self.post_std.push(self.ensemble.std());

            let indices = systematic_resample(&self.ensemble.weights, &mut self.rng);
            let states = indices
                .iter()
                .map(|&i| self.ensemble.states[i])
                .collect::<Vec<_>>();
            self.ensemble = ParticleEnsemble::uniform(states);
        }
        self.prev_lead = Some(v_l);
        Ok(())
    }

    /// Latest posterior `(mean, std)` over the augmented state, or the
    /// initial-ensemble summary before the first update.
    pub fn posterior(&self) -> ([f64; 5], [f64; 5]) {
        match (self.post_mean.last(), self.post_std.last()) {
            (Some(&m), Some(&s)) => (m, s),
            _ => (self.ensemble.mean(), self.ensemble.std()),
        }
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        &self.ensemble
    }

    /// Closes the run: final parameters are the plain mean of the current
    /// (post-resampling, uniformly weighted) ensemble, and the instability
    /// probability is the fraction of its particles with an unstable
    /// stability scalar.
    pub fn into_result(self) -> PfResult {
        let m = self.ensemble.mean();
        let params = ModelParams::new_unchecked(m[2], m[3], m[4]);

        let n = self.ensemble.n() as f64;
        let mut unstable = 0usize;
        let mut degenerate = 0usize;
        for state in self.ensemble.states() {
            let (k1, k2, tau) = (state[2], state[3], state[4]);
            if k1 <= PARAM_FLOOR || tau <= PARAM_FLOOR {
                degenerate += 1;
                if self.config.degenerate_class == DegenerateClass::Unstable {
                    unstable += 1;
                }
                continue;
            }
            let verdict = ModelParams::new_unchecked(k1, k2, tau)
                .string_stability()
                .expect("floored parameters are positive");
            if verdict.classification == Stability::Unstable {
                unstable += 1;
            }
        }

        PfResult {
            post_mean: self.post_mean,
            post_std: self.post_std,
            params,
            instability_probability: unstable as f64 / n,
            degenerate_fraction: degenerate as f64 / n,
            clamp_events: self.clamp_events,
        }
    }
}

/// Runs the filter over a whole recorded trajectory.
pub fn fit_particle_filter(traj: &Trajectory, config: &PfConfig) -> Result<PfResult> {
    let mut filter = ParticleFilter::new(config.clone(), traj.dt())?;
    for k in 0..traj.n() {
        filter.push_sample(traj.s()[k], traj.v()[k], traj.v_l()[k])?;
    }
    Ok(filter.into_result())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_lead_profile, simulate_follower, LeadProfileSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn uniform_ensemble(states: Vec<[f64; 5]>) -> ParticleEnsemble {
        ParticleEnsemble::uniform(states)
    }

    #[test]
    fn predict_without_noise_is_one_euler_step() {
        let mut ens = uniform_ensemble(vec![[62.5, 24.4, 0.08, 0.12, 1.5]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let clamps = pf_predict(&mut ens, 24.4, 0.1, &[0.0; 5], &mut rng);
        assert_eq!(clamps, 0);
        let state = ens.states()[0];
        assert_eq!(state[0], 62.5); // dv = 0, gap unchanged
        assert_abs_diff_eq!(state[1], 24.6072, epsilon = 1e-12);
        assert_eq!(&state[2..], &[0.08, 0.12, 1.5]);
    }

    #[test]
    fn predict_matches_simulator_bitwise() {
        // Same parameters, same inputs: the particle step and the simulator
        // step must be the identical computation.
        let p = ModelParams::new(0.08, 0.12, 1.5).unwrap();
        let lead = generate_lead_profile(&LeadProfileSpec::standard_dip()).unwrap();
        let t = simulate_follower(&p, &lead, 24.4, 62.5, 0.1).unwrap();
        let mut ens = uniform_ensemble(vec![[62.5, 24.4, 0.08, 0.12, 1.5]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (k, &v_l) in lead[..50].iter().enumerate() {
            pf_predict(&mut ens, v_l, 0.1, &[0.0; 5], &mut rng);
            assert_eq!(ens.states()[0][0], t.s()[k + 1]);
            assert_eq!(ens.states()[0][1], t.v()[k + 1]);
        }
    }

    #[test]
    fn predict_clamps_parameters_at_floor() {
        let mut ens = uniform_ensemble(vec![[50.0, 20.0, 1e-7, 0.1, -0.5]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let clamps = pf_predict(&mut ens, 20.0, 0.1, &[0.0; 5], &mut rng);
        assert_eq!(clamps, 2);
        assert_eq!(ens.states()[0][2], PARAM_FLOOR);
        assert_eq!(ens.states()[0][4], PARAM_FLOOR);
    }

    #[test]
    fn predict_scales_parameter_noise_with_sqrt_dt() {
        // Parameter entries of process_std are intensities: the spread
        // actually added in one step is intensity * sqrt(dt).  Physical
        // entries apply as-is.  Reproduce the draw stream by hand.
        let dt = 0.1;
        let mut ens = uniform_ensemble(vec![[62.5, 24.4, 0.08, 0.12, 1.5]]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        pf_predict(&mut ens, 24.4, dt, &[0.2, 0.1, 0.01, 0.01, 0.01], &mut rng);

        let mut expected_rng = ChaCha8Rng::seed_from_u64(42);
        let mut z = || -> f64 { StandardNormal.sample(&mut expected_rng) };
        let p = ModelParams::new(0.08, 0.12, 1.5).unwrap();
        let (v1, s1) = euler_step(&p, 24.4, 62.5, 24.4, dt);
        assert_eq!(ens.states()[0][0], s1 + 0.2 * z());
        assert_eq!(ens.states()[0][1], v1 + 0.1 * z());
        assert_eq!(ens.states()[0][2], 0.08 + 0.01 * dt.sqrt() * z());
        assert_eq!(ens.states()[0][3], 0.12 + 0.01 * dt.sqrt() * z());
        assert_eq!(ens.states()[0][4], 1.5 + 0.01 * dt.sqrt() * z());
    }

    #[test]
    fn update_keeps_identical_particles_uniform() {
        let mut ens = uniform_ensemble(vec![[50.0, 20.0, 0.1, 0.1, 1.4]; 4]);
        pf_update(&mut ens, 50.3, 20.1, &[0.2, 0.1], 1).unwrap();
        for &w in ens.weights() {
            assert_abs_diff_eq!(w, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn update_weight_ratio_matches_gaussian() {
        // One particle on the measurement, one 10 sigma away in s: the
        // likelihood ratio is e^{-50}.
        let mut ens = uniform_ensemble(vec![
            [50.0, 20.0, 0.1, 0.1, 1.4],
            [52.0, 20.0, 0.1, 0.1, 1.4],
        ]);
        pf_update(&mut ens, 50.0, 20.0, &[0.2, 0.1], 1).unwrap();
        let ratio = ens.weights()[1] / ens.weights()[0];
        assert!((ratio.ln() + 50.0).abs() < 1e-9, "ln ratio = {}", ratio.ln());
    }

    #[test]
    fn update_renormalizes() {
        let mut ens = uniform_ensemble(vec![
            [50.0, 20.0, 0.1, 0.1, 1.4],
            [50.5, 20.2, 0.1, 0.1, 1.4],
            [49.1, 19.9, 0.1, 0.1, 1.4],
        ]);
        pf_update(&mut ens, 50.0, 20.0, &[0.2, 0.1], 1).unwrap();
        let sum: f64 = ens.weights().iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        assert!(ens.weights().iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn update_detects_weight_collapse() {
        // Both particles hundreds of sigma from the measurement: every
        // density underflows to zero.
        let mut ens = uniform_ensemble(vec![
            [500.0, 20.0, 0.1, 0.1, 1.4],
            [510.0, 20.0, 0.1, 0.1, 1.4],
        ]);
        let err = pf_update(&mut ens, 50.0, 20.0, &[0.2, 0.1], 7).unwrap_err();
        assert!(matches!(err, Error::WeightCollapse { step: 7 }));
    }

    #[test]
    fn resample_uniform_weights_keeps_everyone() {
        let indices = systematic_resample_at(&[0.25; 4], 4, 0.1);
        assert_eq!(indices, vec![0, 1, 2, 3]);
        // Equal masses survive even the u = 0 boundary.
        let indices = systematic_resample_at(&[0.25; 4], 4, 0.0);
        assert_eq!(indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn resample_degenerate_weight_takes_over() {
        let indices = systematic_resample_at(&[1.0, 0.0, 0.0], 3, 0.2);
        assert_eq!(indices, vec![0, 0, 0]);
    }

    #[test]
    fn resample_reference_walk() {
        // Cumulative weights 0.5, 0.75, 1.0 against positions
        // 0.1, 0.35, 0.6, 0.85.
        let indices = systematic_resample_at(&[0.5, 0.25, 0.25], 4, 0.1);
        assert_eq!(indices, vec![0, 0, 1, 2]);
    }

    #[test]
    fn resample_indices_are_non_decreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let weights = [0.1, 0.05, 0.3, 0.05, 0.2, 0.3];
        let indices = systematic_resample(&weights, &mut rng);
        assert_eq!(indices.len(), weights.len());
        for w in indices.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn resample_preserves_mean_in_expectation() {
        // Over many seeded resamples of one fixed weighted ensemble, the
        // average of resampled means stays within 3 standard errors of the
        // weighted mean.
        let n = 50usize;
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let raw: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let target: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();

        let runs = 1000;
        let mut means = Vec::with_capacity(runs);
        for seed in 0..runs as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let indices = systematic_resample(&weights, &mut rng);
            let m: f64 = indices.iter().map(|&i| values[i]).sum::<f64>() / n as f64;
            means.push(m);
        }
        let grand = crate::stats::mean(&means);
        let se = crate::stats::population_std(&means) / (runs as f64).sqrt();
        assert!(
            (grand - target).abs() <= 3.0 * se.max(1e-12),
            "grand mean {grand} vs target {target} (se {se})"
        );
    }

    fn noiseless_benchmark() -> Trajectory {
        crate::sim::ScenarioSpec::benchmark().generate().unwrap()
    }

    #[test]
    fn zero_noise_filter_tracks_data_exactly() {
        // Two identical, noise-free particles seeded at the true parameters
        // must reproduce the measured (s, v) series bit-for-bit: the
        // weighted mean of two equal halves is exact.
        let t = noiseless_benchmark();
        let config = PfConfig {
            n_particles: 2,
            init_mean: [t.s()[0], t.v()[0], 0.08, 0.12, 1.5],
            init_std: [0.0; 5],
            process_std: [0.0; 5],
            meas_std: [0.2, 0.1],
            seed: 0,
            degenerate_class: DegenerateClass::Excluded,
        };
        let r = fit_particle_filter(&t, &config).unwrap();
        assert_eq!(r.post_mean.len(), t.n() - 1);
        for (k, m) in r.post_mean.iter().enumerate() {
            assert_eq!(m[0], t.s()[k + 1], "gap diverged at step {}", k + 1);
            assert_eq!(m[1], t.v()[k + 1], "speed diverged at step {}", k + 1);
        }
        assert_eq!(r.params.k1(), 0.08);
        assert_eq!(r.params.k2(), 0.12);
        assert_eq!(r.params.tau(), 1.5);
        assert_eq!(r.clamp_events, 0);
    }

    #[test]
    fn filter_run_is_deterministic() {
        let t = noiseless_benchmark();
        let config = PfConfig {
            n_particles: 64,
            seed: 42,
            ..PfConfig::reference(t.s()[0], t.v()[0])
        };
        let a = fit_particle_filter(&t, &config).unwrap();
        let b = fit_particle_filter(&t, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn streaming_matches_whole_trajectory_run() {
        let t = noiseless_benchmark();
        let config = PfConfig {
            n_particles: 32,
            seed: 9,
            ..PfConfig::reference(t.s()[0], t.v()[0])
        };
        let batch = fit_particle_filter(&t, &config).unwrap();

        let mut filter = ParticleFilter::new(config, t.dt()).unwrap();
        for k in 0..t.n() {
            filter.push_sample(t.s()[k], t.v()[k], t.v_l()[k]).unwrap();
        }
        let (mean, _) = filter.posterior();
        assert_eq!(mean, *batch.post_mean.last().unwrap());
        assert_eq!(filter.into_result(), batch);
    }

    #[test]
    fn posterior_std_stays_finite_and_nonnegative() {
        let t = noiseless_benchmark();
        let config = PfConfig {
            n_particles: 64,
            seed: 5,
            ..PfConfig::reference(t.s()[0], t.v()[0])
        };
        let r = fit_particle_filter(&t, &config).unwrap();
        for std in &r.post_std {
            for &x in std {
                assert!(x.is_finite() && x >= 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad_n = PfConfig {
            n_particles: 1,
            ..PfConfig::reference(62.5, 24.4)
        };
        assert!(ParticleFilter::new(bad_n, 0.1).is_err());
        let bad_r = PfConfig {
            meas_std: [0.2, 0.0],
            ..PfConfig::reference(62.5, 24.4)
        };
        assert!(ParticleFilter::new(bad_r, 0.1).is_err());
        let bad_dt = PfConfig::reference(62.5, 24.4);
        assert!(ParticleFilter::new(bad_dt, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn weights_stay_on_the_simplex(
            offsets in prop::collection::vec((-2.0..2.0f64, -1.0..1.0f64), 3..30),
            meas_s in 48.0..52.0f64,
            meas_v in 19.0..21.0f64,
        ) {
            let states: Vec<[f64; 5]> = offsets
                .iter()
                .map(|&(ds, dv)| [50.0 + ds, 20.0 + dv, 0.1, 0.1, 1.4])
                .collect();
            let mut ens = uniform_ensemble(states);
            pf_update(&mut ens, meas_s, meas_v, &[0.2, 0.1], 1).unwrap();
            let sum: f64 = ens.weights().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(ens.weights().iter().all(|&w| w >= 0.0));
        }
    }
}
