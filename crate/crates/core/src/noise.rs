//! Seeded synthesis of the phase-noise budget: white noise, power-law
//! (colored) noise, sinusoidal dithers, and the compressor harmonic comb.
//!
//! Synthesis is a pure function of `(model, fs, n_samples)` including the
//! seed: identical inputs give bit-identical series. Each component draws
//! from its own RNG stream (seed XOR-folded with the component index), so a
//! component's realization does not depend on which other components are
//! present.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::scalar::{lit, Scalar};
use crate::seeds;

/// One additive term of the phase-noise budget.
///
/// Levels for `white` and `power_law` are one-sided ASDs in rad/sqrt(Hz)
/// (referenced at 1 Hz for `power_law`); tone and comb levels are RMS
/// amplitudes in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseComponent {
    White {
        level_rad_per_sqrt_hz: f64,
    },
    /// ASD proportional to `f^(alpha/2)`; `alpha = -2` is a 1/f amplitude
    /// slope, `alpha = -4` a random-walk slope.
    PowerLaw {
        level_rad_per_sqrt_hz: f64,
        exponent_alpha: f64,
    },
    Tone {
        rms_rad: f64,
        frequency_hz: f64,
        #[serde(default)]
        phase_rad: f64,
    },
    /// `n_harmonics` equal-RMS tones at integer multiples of the fundamental.
    HarmonicComb {
        rms_rad: f64,
        frequency_hz: f64,
        n_harmonics: u32,
        #[serde(default)]
        phase_rad: f64,
    },
}

impl NoiseComponent {
    pub fn validate(&self) -> Result<()> {
        let level = match self {
            NoiseComponent::White { level_rad_per_sqrt_hz } => *level_rad_per_sqrt_hz,
            NoiseComponent::PowerLaw { level_rad_per_sqrt_hz, exponent_alpha } => {
                if !(-4.0..=0.0).contains(exponent_alpha) {
                    return Err(Error::domain("power_law exponent_alpha must be in [-4, 0]"));
                }
                *level_rad_per_sqrt_hz
            }
            NoiseComponent::Tone { rms_rad, frequency_hz, .. } => {
                if !(*frequency_hz > 0.0) {
                    return Err(Error::domain("tone frequency_hz must be > 0"));
                }
                *rms_rad
            }
            NoiseComponent::HarmonicComb { rms_rad, frequency_hz, n_harmonics, .. } => {
                if !(*frequency_hz > 0.0) {
                    return Err(Error::domain("comb frequency_hz must be > 0"));
                }
                if *n_harmonics < 1 {
                    return Err(Error::domain("comb n_harmonics must be >= 1"));
                }
                *rms_rad
            }
        };
        if !(level >= 0.0) || !level.is_finite() {
            return Err(Error::domain("noise component level must be finite and >= 0"));
        }
        Ok(())
    }
}

/// A reproducible set of noise components.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(default)]
    pub components: Vec<NoiseComponent>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for c in &self.components {
            c.validate()?;
        }
        Ok(())
    }

    /// Same components, different seed.
    pub fn reseeded(&self, seed: u64) -> NoiseModel {
        NoiseModel {
            components: self.components.clone(),
            seed,
        }
    }
}

/// Canonical low-frequency noise budget of the locked interferometer: a
/// power-law residual with a 1/f amplitude slope anchored to
/// 6e-4 rad/sqrt(Hz) at 0.1 Hz, plus the cryostat-compressor comb at 1 Hz
/// (5 harmonics of 2e-3 rad RMS each). Photon shot noise is not part of the
/// model; it arises in detection.
pub fn default_noise_model(seed: u64) -> NoiseModel {
    NoiseModel {
        components: vec![
            NoiseComponent::PowerLaw {
                // 6e-5 at 1 Hz rises to 6e-4 at 0.1 Hz with alpha = -2
                level_rad_per_sqrt_hz: 6e-5,
                exponent_alpha: -2.0,
            },
            NoiseComponent::HarmonicComb {
                rms_rad: 2e-3,
                frequency_hz: 1.0,
                n_harmonics: 5,
                phase_rad: 0.0,
            },
        ],
        seed,
    }
}

/// Synthesize `n_samples` of the summed phase-noise series at rate `fs`.
/// Samples sit at bin centers `t_k = (k + 1/2)/fs`.
pub fn synthesize<F: Scalar>(model: &NoiseModel, fs_hz: f64, n_samples: usize) -> Result<Vec<F>> {
    if n_samples < 2 {
        return Err(Error::domain("synthesize requires n_samples >= 2"));
    }
    if !(fs_hz > 0.0) {
        return Err(Error::domain("fs_hz must be > 0"));
    }
    model.validate()?;

    let mut out = vec![F::zero(); n_samples];
    for (index, component) in model.components.iter().enumerate() {
        let seed = seeds::component_seed(model.seed, index);
        add_component(&mut out, component, seed, fs_hz)?;
    }
    Ok(out)
}

fn add_component<F: Scalar>(
    out: &mut [F],
    component: &NoiseComponent,
    seed: u64,
    fs_hz: f64,
) -> Result<()> {
    match *component {
        NoiseComponent::White { level_rad_per_sqrt_hz } => {
            // one-sided ASD `a` -> per-sample sigma = a sqrt(fs/2)
            let sigma = level_rad_per_sqrt_hz * (fs_hz / 2.0).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in out.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v = *v + lit::<F>(sigma * g);
            }
        }
        NoiseComponent::PowerLaw { level_rad_per_sqrt_hz, exponent_alpha } => {
            add_power_law(out, level_rad_per_sqrt_hz, exponent_alpha, seed, fs_hz);
        }
        NoiseComponent::Tone { rms_rad, frequency_hz, phase_rad } => {
            add_tone(out, rms_rad, frequency_hz, phase_rad, fs_hz);
        }
        NoiseComponent::HarmonicComb { rms_rad, frequency_hz, n_harmonics, phase_rad } => {
            // Harmonics at or above Nyquist are synthesized as sampled; they
            // alias deterministically rather than being silently dropped.
            for h in 1..=n_harmonics {
                add_tone(out, rms_rad, frequency_hz * h as f64, phase_rad, fs_hz);
            }
        }
    }
    Ok(())
}

fn add_tone<F: Scalar>(out: &mut [F], rms_rad: f64, f_hz: f64, phase_rad: f64, fs_hz: f64) {
    let amp = lit::<F>(rms_rad * std::f64::consts::SQRT_2);
    let w = std::f64::consts::TAU * f_hz / fs_hz;
    for (k, v) in out.iter_mut().enumerate() {
        let arg = w * (k as f64 + 0.5) + phase_rad;
        *v = *v + amp * lit::<F>(arg.sin());
    }
}

/// Frequency-domain shaping: unit white Gaussian noise is transformed,
/// each bin scaled so the one-sided ASD becomes `level * |f|^(alpha/2)`,
/// the DC bin zeroed (zero-mean output), and the result transformed back.
fn add_power_law<F: Scalar>(out: &mut [F], level: f64, alpha: f64, seed: u64, fs_hz: f64) {
    let n = out.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<F> = (0..n)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            lit::<F>(g)
        })
        .collect();
    let mut spec = fft::forward_real(&white);

    // unit-variance white noise has one-sided ASD sqrt(2/fs)
    let white_asd = (2.0 / fs_hz).sqrt();
    spec[0] = rustfft::num_complex::Complex::new(F::zero(), F::zero());
    for (k, c) in spec.iter_mut().enumerate().skip(1) {
        let f = fft::bin_frequency_hz(k, n, fs_hz).abs();
        let gain = level * f.powf(alpha / 2.0) / white_asd;
        *c = *c * lit::<F>(gain);
    }
    let shaped = fft::inverse_real(&mut spec);
    for (v, s) in out.iter_mut().zip(shaped) {
        *v = *v + s;
    }
}
