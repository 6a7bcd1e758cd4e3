//! Time-domain simulation of the locked interferometer.
//!
//! A [`Scenario`] describes one measurement run: interferometer parameters,
//! the classical noise budget, the lock-loop model, visibility drift, and the
//! injected dithers. [`run_experiment`] turns it into per-bin heralded photon
//! counts at both output ports.
//!
//! Bin `k` covers `[t0 + k/fs, t0 + (k+1)/fs)`; the phase is sampled at the
//! bin center.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InterferometerConfig, SignalSpec};
use crate::noise::NoiseModel;
use crate::poisson;
use crate::scalar::{lit, Scalar};
use crate::seeds;

/// Feedback-loop model used to turn the free noise budget into the locked
/// residual phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LockLoopConfig {
    /// Loop suppression collapsed to a single first-order high-pass corner at
    /// the unity-gain frequency. Fast, and adequate whenever loop dynamics
    /// are not themselves under study.
    Effective { unity_gain_hz: f64 },
    /// Discrete-time PI controller driving a fast frequency actuator
    /// (integrates to phase, range-limited) plus a slow bandwidth-limited
    /// offload actuator.
    Explicit {
        ctrl_rate_hz: f64,
        kp: f64,
        ki_fast: f64,
        ki_slow: f64,
        fast_range_rad: f64,
        slow_bandwidth_hz: f64,
    },
}

impl Default for LockLoopConfig {
    fn default() -> Self {
        LockLoopConfig::Effective { unity_gain_hz: 10.0 }
    }
}

impl LockLoopConfig {
    /// Explicit-mode defaults: 100 Hz controller, ~2 Hz unity gain with a PI
    /// zero at 0.5 Hz, gentle slow-actuator offload. Illustrative values;
    /// the real instrument's loop shape is not modeled.
    pub fn default_explicit() -> Self {
        LockLoopConfig::Explicit {
            ctrl_rate_hz: 100.0,
            kp: 12.57,
            ki_fast: 39.5,
            ki_slow: 0.02,
            fast_range_rad: 1e4,
            slow_bandwidth_hz: 0.05,
        }
    }

    pub fn validate(&self, bin_rate_hz: f64) -> Result<()> {
        match *self {
            LockLoopConfig::Effective { unity_gain_hz } => {
                if !(unity_gain_hz > 0.0) {
                    return Err(Error::domain("unity_gain_hz must be > 0"));
                }
            }
            LockLoopConfig::Explicit { ctrl_rate_hz, .. } => {
                if !(ctrl_rate_hz >= 10.0 * bin_rate_hz) {
                    return Err(Error::domain(
                        "explicit mode requires ctrl_rate_hz >= 10x bin_rate_hz",
                    ));
                }
                let ratio = ctrl_rate_hz / bin_rate_hz;
                if (ratio - ratio.round()).abs() > 1e-9 {
                    return Err(Error::domain(
                        "ctrl_rate_hz must be an integer multiple of bin_rate_hz",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Slow change of the fringe visibility over a run (polarization and
/// temperature drifts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VisibilityDrift {
    Constant {
        v: f64,
    },
    Linear {
        v_start: f64,
        v_end: f64,
    },
    /// Gaussian random walk clamped to [0.85, 0.99].
    BoundedRandomWalk {
        v_start: f64,
        walk_step_per_hour: f64,
    },
}

/// Clamp range of the bounded random walk.
pub const WALK_CLAMP: (f64, f64) = (0.85, 0.99);

impl Default for VisibilityDrift {
    fn default() -> Self {
        VisibilityDrift::Linear { v_start: 0.98, v_end: 0.92 }
    }
}

impl VisibilityDrift {
    pub fn validate(&self) -> Result<()> {
        match *self {
            VisibilityDrift::Constant { v } => {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::domain("constant visibility must be in (0, 1]"));
                }
            }
            VisibilityDrift::Linear { v_start, v_end } => {
                if !(0.0 < v_end && v_end <= v_start && v_start <= 1.0) {
                    return Err(Error::domain(
                        "linear drift requires 0 < v_end <= v_start <= 1",
                    ));
                }
            }
            VisibilityDrift::BoundedRandomWalk { v_start, walk_step_per_hour } => {
                if !(v_start > 0.0 && v_start <= 1.0) {
                    return Err(Error::domain("walk v_start must be in (0, 1]"));
                }
                if !(walk_step_per_hour >= 0.0) {
                    return Err(Error::domain("walk_step_per_hour must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Per-bin visibility over `n` bins at rate `fs`.
    pub fn series(&self, n: usize, fs_hz: f64, seed: u64) -> Vec<f64> {
        match *self {
            VisibilityDrift::Constant { v } => vec![v; n],
            VisibilityDrift::Linear { v_start, v_end } => {
                if n <= 1 {
                    return vec![v_start; n];
                }
                (0..n)
                    .map(|k| v_start + (v_end - v_start) * k as f64 / (n - 1) as f64)
                    .collect()
            }
            VisibilityDrift::BoundedRandomWalk { v_start, walk_step_per_hour } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                // per-bin step sigma scales with sqrt(bin duration / 1 hour)
                let sigma = walk_step_per_hour / (3600.0 * fs_hz).sqrt();
                let normal = rand_distr::StandardNormal;
                let mut v = v_start.clamp(WALK_CLAMP.0, WALK_CLAMP.1);
                (0..n)
                    .map(|_| {
                        let g: f64 = normal.sample(&mut rng);
                        v = (v + sigma * g).clamp(WALK_CLAMP.0, WALK_CLAMP.1);
                        v
                    })
                    .collect()
            }
        }
    }
}

/// A complete, reproducible measurement run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub interferometer: InterferometerConfig,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub lock_loop: LockLoopConfig,
    #[serde(default)]
    pub drift: VisibilityDrift,
    #[serde(default)]
    pub injections: Vec<SignalSpec>,
    pub duration_s: f64,
    #[serde(default)]
    pub t0_s: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn n_bins(&self) -> usize {
        (self.duration_s * self.interferometer.bin_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.interferometer.validate()?;
        self.noise.validate()?;
        self.lock_loop.validate(self.interferometer.bin_rate_hz)?;
        self.drift.validate()?;
        for inj in &self.injections {
            inj.validate()?;
        }
        let bins = self.duration_s * self.interferometer.bin_rate_hz;
        if (bins - bins.round()).abs() > 1e-6 {
            return Err(Error::domain(format!(
                "duration_s x bin_rate_hz = {bins} is not an integer bin count"
            )));
        }
        if bins.round() < 16.0 {
            return Err(Error::domain("scenario must span at least 16 bins"));
        }
        Ok(())
    }
}

/// Per-bin heralded counts at the two interferometer outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSeries {
    pub bin_rate_hz: f64,
    pub t0_s: f64,
    pub n1: Vec<u32>,
    pub n2: Vec<u32>,
    /// Scenario that generated this series, when simulated.
    pub ground_truth: Option<Box<Scenario>>,
}

impl CountSeries {
    pub fn len(&self) -> usize {
        self.n1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n1.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1.len() != self.n2.len() {
            return Err(Error::domain("count series n1/n2 length mismatch"));
        }
        if !(self.bin_rate_hz > 0.0) {
            return Err(Error::domain("bin_rate_hz must be > 0"));
        }
        Ok(())
    }
}

/// Locked-phase deviation from the lock point at the bin rate: loop-filtered
/// classical noise plus the injected dithers (which ride on the setpoint and
/// therefore appear unsuppressed).
pub fn residual_phase<F: Scalar>(scenario: &Scenario) -> Result<Vec<F>> {
    scenario.validate()?;
    let fs = scenario.interferometer.bin_rate_hz;
    let n = scenario.n_bins();
    let noise_model = scenario
        .noise
        .reseeded(seeds::derive(scenario.seed, seeds::STREAM_NOISE));

    match scenario.lock_loop {
        LockLoopConfig::Effective { unity_gain_hz } => {
            let raw: Vec<F> = crate::noise::synthesize(&noise_model, fs, n.max(2))?;
            let mut out = high_pass(&raw, unity_gain_hz, fs);
            out.truncate(n);
            add_injections(&mut out, &scenario.injections, fs, 1.0);
            Ok(out)
        }
        LockLoopConfig::Explicit {
            ctrl_rate_hz,
            kp,
            ki_fast,
            ki_slow,
            fast_range_rad,
            slow_bandwidth_hz,
        } => {
            let ratio = (ctrl_rate_hz / fs).round() as usize;
            let n_ctrl = n * ratio;
            let noise: Vec<F> = crate::noise::synthesize(&noise_model, ctrl_rate_hz, n_ctrl.max(2))?;
            let mut inj = vec![F::zero(); n_ctrl];
            add_injections(&mut inj, &scenario.injections, ctrl_rate_hz, 1.0);

            let dt = 1.0 / ctrl_rate_hz;
            let v = lit::<F>(scenario.interferometer.visibility);
            let (dtf, kpf, kif) = (lit::<F>(dt), lit::<F>(kp), lit::<F>(ki_fast));
            let slow_gain = lit::<F>(dt * std::f64::consts::TAU * slow_bandwidth_hz * ki_slow);
            let fast_range = lit::<F>(fast_range_rad);
            let mut phi_fast = F::zero();
            let mut phi_slow = F::zero();
            let mut integ = F::zero();
            let mut residual = Vec::with_capacity(n_ctrl);
            let mut sum_sq = F::zero();
            for k in 0..n_ctrl {
                let delta = noise[k] - phi_fast - phi_slow;
                let err = v * (delta - inj[k]).sin();
                integ += err * dtf;
                let freq_cmd = kpf * err + kif * integ;
                phi_fast = phi_fast + freq_cmd * dtf;
                if phi_fast > fast_range {
                    phi_fast = fast_range;
                } else if phi_fast < -fast_range {
                    phi_fast = -fast_range;
                }
                phi_slow = phi_slow + slow_gain * phi_fast;
                residual.push(delta);
                sum_sq += delta * delta;
                if delta.abs() > lit(30.0) {
                    return Err(unstable_loop(kp, ki_fast, ki_slow));
                }
            }
            let rms = (sum_sq / F::from_usize(n_ctrl).unwrap()).sqrt();
            if rms > lit(10.0) {
                return Err(unstable_loop(kp, ki_fast, ki_slow));
            }
            Ok(decimate_mean(&residual, ratio))
        }
    }
}

fn unstable_loop(kp: f64, ki_fast: f64, ki_slow: f64) -> Error {
    Error::simulation(format!(
        "explicit lock loop diverged (residual beyond 10 rad RMS) with gains \
         kp = {kp}, ki_fast = {ki_fast}, ki_slow = {ki_slow}"
    ))
}

/// First-order high-pass (backward Euler), corner `f_c`: the loop-suppression
/// transfer seen by noise entering the plant, `|H| = f / sqrt(f^2 + f_c^2)`.
fn high_pass<F: Scalar>(x: &[F], corner_hz: f64, fs_hz: f64) -> Vec<F> {
    let a = lit::<F>(1.0 / (1.0 + std::f64::consts::TAU * corner_hz / fs_hz));
    let mut y = Vec::with_capacity(x.len());
    let mut prev_y = F::zero();
    let mut prev_x = F::zero();
    for &xi in x {
        let yi = a * (prev_y + xi - prev_x);
        y.push(yi);
        prev_y = yi;
        prev_x = xi;
    }
    y
}

fn add_injections<F: Scalar>(out: &mut [F], injections: &[SignalSpec], fs_hz: f64, gain: f64) {
    for inj in injections {
        let amp = lit::<F>(inj.rms_rad * std::f64::consts::SQRT_2 * gain);
        let w = std::f64::consts::TAU * inj.frequency_hz / fs_hz;
        for (k, v) in out.iter_mut().enumerate() {
            let arg = w * (k as f64 + 0.5) + inj.phase_rad;
            *v = *v + amp * lit::<F>(arg.sin());
        }
    }
}

fn decimate_mean<F: Scalar>(x: &[F], ratio: usize) -> Vec<F> {
    let inv = F::one() / F::from_usize(ratio).unwrap();
    x.chunks_exact(ratio)
        .map(|c| c.iter().fold(F::zero(), |acc, &v| acc + v) * inv)
        .collect()
}

/// Convert a locked-phase series into Poisson photon counts at both ports:
/// per bin, `lambda_{1,2} = (R / fs) / 2 [1 +/- V_k cos(phi0 + phi_k)]`.
pub fn detect_photons<F: Scalar>(
    phase: &[F],
    cfg: &InterferometerConfig,
    drift: &VisibilityDrift,
    seed: u64,
) -> Result<CountSeries> {
    cfg.validate()?;
    drift.validate()?;
    let n = phase.len();
    let visibility = drift.series(n, cfg.bin_rate_hz, seeds::derive(seed, seeds::STREAM_DRIFT));
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, seeds::STREAM_PHOTONS));

    let mean_per_bin = cfg.detected_pair_rate_hz / cfg.bin_rate_hz;
    let phi0 = cfg.lock_offset_rad;
    let mut n1 = Vec::with_capacity(n);
    let mut n2 = Vec::with_capacity(n);
    for (k, &p) in phase.iter().enumerate() {
        let fringe = visibility[k] * (phi0 + p.to_f64().unwrap()).cos();
        let lam1 = 0.5 * mean_per_bin * (1.0 + fringe);
        let lam2 = 0.5 * mean_per_bin * (1.0 - fringe);
        if lam1 < 0.0 || lam2 < 0.0 {
            return Err(Error::simulation(format!(
                "negative expected count at bin {k}: visibility outside [0, 1]?"
            )));
        }
        let c1 = poisson::sample(&mut rng, lam1);
        let c2 = poisson::sample(&mut rng, lam2);
        if c1 > u32::MAX as u64 || c2 > u32::MAX as u64 {
            return Err(Error::simulation(format!("count overflow at bin {k}")));
        }
        n1.push(c1 as u32);
        n2.push(c2 as u32);
    }
    Ok(CountSeries {
        bin_rate_hz: cfg.bin_rate_hz,
        t0_s: 0.0,
        n1,
        n2,
        ground_truth: None,
    })
}

/// Simulate a full run: residual phase, then photon detection, with the
/// scenario attached as ground truth.
pub fn run_experiment<F: Scalar>(scenario: &Scenario) -> Result<CountSeries> {
    let phase: Vec<F> = residual_phase(scenario)?;
    let mut cs = detect_photons(&phase, &scenario.interferometer, &scenario.drift, scenario.seed)?;
    cs.t0_s = scenario.t0_s;
    cs.ground_truth = Some(Box::new(scenario.clone()));
    Ok(cs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseComponent;

    fn test_config() -> InterferometerConfig {
        InterferometerConfig {
            arm_length_m: 5e4,
            height_diff_m: 0.0,
            wavelength_m: 1.55e-6,
            refractive_index: 1.46,
            visibility: 0.98,
            lock_offset_rad: std::f64::consts::FRAC_PI_2,
            detected_pair_rate_hz: 1e5,
            bin_rate_hz: 10.0,
        }
    }

    fn injection_only_scenario() -> Scenario {
        Scenario {
            interferometer: test_config(),
            noise: NoiseModel { components: vec![], seed: 0 },
            lock_loop: LockLoopConfig::default(),
            drift: VisibilityDrift::Constant { v: 0.98 },
            injections: vec![SignalSpec { frequency_hz: 0.1, rms_rad: 1e-3, phase_rad: 0.2 }],
            duration_s: 100.0,
            t0_s: 0.0,
            seed: 11,
        }
    }

    #[test]
    fn injections_pass_unsuppressed_in_effective_mode() {
        let sc = injection_only_scenario();
        let phase: Vec<f64> = residual_phase(&sc).unwrap();
        let fs = 10.0;
        for (k, &p) in phase.iter().enumerate() {
            let t = (k as f64 + 0.5) / fs;
            let expect =
                1e-3 * std::f64::consts::SQRT_2 * (std::f64::consts::TAU * 0.1 * t + 0.2).sin();
            assert!((p - expect).abs() < 1e-15, "bin {k}");
        }
    }

    #[test]
    fn zero_rate_gives_zero_counts() {
        let mut sc = injection_only_scenario();
        sc.interferometer.detected_pair_rate_hz = 0.0;
        let cs = run_experiment::<f64>(&sc).unwrap();
        assert!(cs.n1.iter().all(|&c| c == 0));
        assert!(cs.n2.iter().all(|&c| c == 0));
    }

    #[test]
    fn run_is_deterministic() {
        let sc = injection_only_scenario();
        let a = run_experiment::<f64>(&sc).unwrap();
        let b = run_experiment::<f64>(&sc).unwrap();
        assert_eq!(a.n1, b.n1);
        assert_eq!(a.n2, b.n2);
        let mut sc2 = sc.clone();
        sc2.seed += 1;
        let c = run_experiment::<f64>(&sc2).unwrap();
        assert_ne!(a.n1, c.n1);
    }

    #[test]
    fn bin_count_matches_duration() {
        let mut sc = injection_only_scenario();
        sc.duration_s = 10.0;
        let cs = run_experiment::<f64>(&sc).unwrap();
        assert_eq!(cs.len(), 100);
    }

    #[test]
    fn fractional_bin_count_rejected() {
        let mut sc = injection_only_scenario();
        sc.duration_s = 10.05;
        assert!(sc.validate().is_err());
        sc.duration_s = 1.0; // 10 bins < 16
        assert!(sc.validate().is_err());
    }

    #[test]
    fn poisson_bin_means_match_expectation() {
        let mut sc = injection_only_scenario();
        sc.injections.clear();
        sc.interferometer.detected_pair_rate_hz = 1e5; // R/fs = 1e4 per bin
        sc.duration_s = 10_000.0; // 1e5 bins
        let cs = run_experiment::<f64>(&sc).unwrap();
        let m1 = cs.n1.iter().map(|&c| c as f64).sum::<f64>() / cs.len() as f64;
        let m2 = cs.n2.iter().map(|&c| c as f64).sum::<f64>() / cs.len() as f64;
        // each port expects 5000 per bin; 3-sigma of the mean over 1e5 bins
        let tol = 3.0 * (5000.0f64 / cs.len() as f64).sqrt();
        assert!((m1 - 5000.0).abs() < tol, "port 1 mean {m1}");
        assert!((m2 - 5000.0).abs() < tol, "port 2 mean {m2}");
        // photon-count conservation in expectation, 4-sigma
        let total = m1 + m2;
        let tol_total = 4.0 * (10_000.0f64 / cs.len() as f64).sqrt();
        assert!((total - 10_000.0).abs() < tol_total, "total {total}");
    }

    #[test]
    fn explicit_mode_rejects_slow_controller() {
        let mut sc = injection_only_scenario();
        sc.lock_loop = LockLoopConfig::Explicit {
            ctrl_rate_hz: 50.0, // < 10x bin rate
            kp: 1.0,
            ki_fast: 1.0,
            ki_slow: 0.0,
            fast_range_rad: 10.0,
            slow_bandwidth_hz: 0.05,
        };
        assert!(sc.validate().is_err());
    }

    #[test]
    fn explicit_mode_unstable_gains_error_names_gains() {
        let mut sc = injection_only_scenario();
        sc.noise = NoiseModel {
            components: vec![NoiseComponent::White { level_rad_per_sqrt_hz: 1.0 }],
            seed: 3,
        };
        sc.lock_loop = LockLoopConfig::Explicit {
            ctrl_rate_hz: 100.0,
            kp: 4000.0, // far beyond the Nyquist-stable range
            ki_fast: 0.0,
            ki_slow: 0.0,
            fast_range_rad: 1e6,
            slow_bandwidth_hz: 0.05,
        };
        let err = residual_phase::<f64>(&sc).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("kp = 4000"), "message should name the gains: {msg}");
    }

    #[test]
    fn visibility_walk_stays_clamped() {
        let d = VisibilityDrift::BoundedRandomWalk { v_start: 0.98, walk_step_per_hour: 0.5 };
        let v = d.series(50_000, 10.0, 9);
        assert!(v.iter().all(|&x| (0.85..=0.99).contains(&x)));
    }
}
