//! Closed-form physics of the fiber interferometer.
//!
//! Everything here is a pure function of its inputs: the gravitational
//! phase-shift predictor, the two-port fringe formula, the shot-noise limit
//! of the phase estimate, the optical loss budget, and a few unit/scale
//! conversions used by the reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Speed of light in vacuum, m/s (defined SI constant).
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

/// Physical constants entering the phase-shift predictor. `c` is fixed to
/// the SI definition; the local gravitational acceleration is configurable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants<F: Scalar> {
    /// Local gravitational acceleration, m/s².
    pub g_m_per_s2: F,
}

impl<F: Scalar> Default for PhysicalConstants<F> {
    fn default() -> Self {
        Self {
            g_m_per_s2: lit(9.81),
        }
    }
}

impl<F: Scalar> PhysicalConstants<F> {
    pub fn with_gravity(g_m_per_s2: F) -> Result<Self> {
        if !(g_m_per_s2 > F::zero()) || !g_m_per_s2.is_finite() {
            return Err(Error::domain("gravitational acceleration must be finite and > 0"));
        }
        Ok(Self { g_m_per_s2 })
    }

    /// Speed of light in the working scalar type.
    pub fn c_m_per_s(&self) -> F {
        lit(SPEED_OF_LIGHT_M_PER_S)
    }
}

/// Optical and operating parameters of the interferometer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometerConfig {
    /// Length of each fiber arm, m.
    pub arm_length_m: f64,
    /// Vertical separation of the two arms, m (sign = which arm is higher).
    pub height_diff_m: f64,
    /// Vacuum wavelength of the probe photons, m.
    pub wavelength_m: f64,
    /// Effective refractive index of the fiber.
    pub refractive_index: f64,
    /// Fringe visibility, in [0, 1].
    pub visibility: f64,
    /// Locking offset phase phi0, rad (mid-fringe pi/2 for peak sensitivity).
    pub lock_offset_rad: f64,
    /// Detected heralded pair rate summed over both output ports, Hz.
    pub detected_pair_rate_hz: f64,
    /// Count binning rate of the time tagger, Hz.
    pub bin_rate_hz: f64,
}

impl InterferometerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.arm_length_m > 0.0) {
            return Err(Error::domain("arm_length_m must be > 0"));
        }
        if !(self.wavelength_m > 0.0) {
            return Err(Error::domain("wavelength_m must be > 0"));
        }
        if !(self.refractive_index >= 1.0) {
            return Err(Error::domain("refractive_index must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::domain("visibility must be in [0, 1]"));
        }
        if !(self.detected_pair_rate_hz >= 0.0) {
            return Err(Error::domain("detected_pair_rate_hz must be >= 0"));
        }
        if !(self.bin_rate_hz > 0.0) {
            return Err(Error::domain("bin_rate_hz must be > 0"));
        }
        if !self.height_diff_m.is_finite() || !self.lock_offset_rad.is_finite() {
            return Err(Error::domain("height_diff_m and lock_offset_rad must be finite"));
        }
        Ok(())
    }
}

/// One attenuation source along the photon path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEntry {
    pub label: String,
    pub loss_db: f64,
    #[serde(default)]
    pub uncertainty_db: f64,
}

/// Itemized optical loss budget of the full photon path.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBudget {
    pub entries: Vec<LossEntry>,
}

/// Totals derived from a [`LossBudget`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTotals {
    pub total_db: f64,
    /// Root-sum-square of the per-entry uncertainties, dB.
    pub total_uncertainty_db: f64,
    /// End-to-end power transmission, in (0, 1].
    pub transmission: f64,
}

impl LossBudget {
    /// Sum the budget: total dB, quadrature uncertainty, and transmission
    /// `10^(-total_db/10)`.
    pub fn totals(&self) -> Result<LossTotals> {
        let mut total_db = 0.0;
        let mut var_db = 0.0;
        for e in &self.entries {
            if !(e.loss_db >= 0.0) || !e.loss_db.is_finite() {
                return Err(Error::domain(format!(
                    "loss entry '{}' has negative or non-finite loss_db",
                    e.label
                )));
            }
            if !(e.uncertainty_db >= 0.0) || !e.uncertainty_db.is_finite() {
                return Err(Error::domain(format!(
                    "loss entry '{}' has negative or non-finite uncertainty_db",
                    e.label
                )));
            }
            total_db += e.loss_db;
            var_db += e.uncertainty_db * e.uncertainty_db;
        }
        Ok(LossTotals {
            total_db,
            total_uncertainty_db: var_db.sqrt(),
            transmission: 10f64.powf(-total_db / 10.0),
        })
    }
}

/// A deliberately injected sinusoidal phase modulation (calibration dither
/// or surrogate signal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub frequency_hz: f64,
    pub rms_rad: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz > 0.0) {
            return Err(Error::domain("injection frequency_hz must be > 0"));
        }
        if !(self.rms_rad >= 0.0) {
            return Err(Error::domain("injection rms_rad must be >= 0"));
        }
        Ok(())
    }
}

/// Gravitational phase shift between two equal-length arms separated
/// vertically by `height_m`:
///
/// `dphi = 2.pi.n.g.h.l / (lambda.c^2)`
///
/// Odd in `height_m`, linear in `height_m` and `arm_length_m`.
pub fn gravitational_phase_shift<F: Scalar>(
    consts: &PhysicalConstants<F>,
    refractive_index: F,
    height_m: F,
    arm_length_m: F,
    wavelength_m: F,
) -> Result<F> {
    if !(arm_length_m > F::zero()) || !arm_length_m.is_finite() {
        return Err(Error::domain("arm_length_m must be finite and > 0"));
    }
    if !(wavelength_m > F::zero()) || !wavelength_m.is_finite() {
        return Err(Error::domain("wavelength_m must be finite and > 0"));
    }
    if !(refractive_index >= F::one()) {
        return Err(Error::domain("refractive_index must be >= 1"));
    }
    if !height_m.is_finite() {
        return Err(Error::domain("height_m must be finite"));
    }
    let c = consts.c_m_per_s();
    let two_pi = F::TAU();
    Ok(two_pi * refractive_index * consts.g_m_per_s2 * height_m * arm_length_m
        / (wavelength_m * c * c))
}

/// Predicted phase shift for a classical control field in the same geometry.
/// Identical to [`gravitational_phase_shift`]; exposed under the name used by
/// the differential measurement scheme, where the classically-derived value
/// is subtracted from the single-photon result.
pub fn classical_phase_prediction<F: Scalar>(
    cfg: &InterferometerConfig,
    consts: &PhysicalConstants<F>,
) -> Result<F> {
    gravitational_phase_shift(
        consts,
        lit(cfg.refractive_index),
        lit(cfg.height_diff_m),
        lit(cfg.arm_length_m),
        lit(cfg.wavelength_m),
    )
}

/// Expected counts at the two output ports for a total of `n_total` photons
/// at interferometer phase `phi`:
///
/// `N1 = N/2 [1 + V cos(phi)]`, `N2 = N/2 [1 - V cos(phi)]`.
///
/// The sum is exactly `n_total` for every `(V, phi)`.
pub fn expected_fringe_counts<F: Scalar>(n_total: F, visibility: F, phi: F) -> Result<(F, F)> {
    if !(n_total >= F::zero()) {
        return Err(Error::domain("n_total must be >= 0"));
    }
    if !(visibility >= F::zero() && visibility <= F::one()) {
        return Err(Error::domain("visibility must be in [0, 1]"));
    }
    let half = lit::<F>(0.5) * n_total;
    let m = visibility * phi.cos();
    let n1 = half * (F::one() + m);
    let n2 = n_total - n1;
    Ok((n1, n2))
}

/// One-sided amplitude spectral density of the half-difference phase
/// estimator for Poisson counting at mid-fringe lock (phi0 = pi/2):
///
/// `asd = sqrt(2) / (V sqrt(R))`  [rad/sqrt(Hz)]
///
/// `R` is the detected pair rate summed over both ports.
pub fn shot_noise_asd<F: Scalar>(pair_rate_hz: F, visibility: F) -> Result<F> {
    if !(pair_rate_hz > F::zero()) {
        return Err(Error::domain("pair_rate_hz must be > 0"));
    }
    if !(visibility > F::zero() && visibility <= F::one()) {
        return Err(Error::domain("visibility must be in (0, 1]"));
    }
    Ok(F::SQRT_2() / (visibility * pair_rate_hz.sqrt()))
}

/// Convert a phase ASD into a fractional displacement (travel-time dilation)
/// ASD: `asd_phase * lambda / (2.pi.n.l)`, in 1/sqrt(Hz).
pub fn fractional_displacement_asd<F: Scalar>(
    asd_phase: F,
    wavelength_m: F,
    refractive_index: F,
    arm_length_m: F,
) -> Result<F> {
    if !(asd_phase >= F::zero()) {
        return Err(Error::domain("asd_phase must be >= 0"));
    }
    if !(wavelength_m > F::zero()) || !(arm_length_m > F::zero()) {
        return Err(Error::domain("wavelength_m and arm_length_m must be > 0"));
    }
    if !(refractive_index >= F::one()) {
        return Err(Error::domain("refractive_index must be >= 1"));
    }
    Ok(asd_phase * wavelength_m / (F::TAU() * refractive_index * arm_length_m))
}

/// Integration time at which the amplitude-estimate uncertainty `asd/sqrt(T)`
/// reaches `signal_rms / target_snr`:
///
/// `T = (target_snr * asd / signal_rms)^2`  [s]
pub fn snr_integration_time<F: Scalar>(signal_rms: F, asd: F, target_snr: F) -> Result<F> {
    if !(signal_rms > F::zero()) {
        return Err(Error::domain("signal_rms must be > 0"));
    }
    if !(asd >= F::zero()) || !(target_snr >= F::zero()) {
        return Err(Error::domain("asd and target_snr must be >= 0"));
    }
    let q = target_snr * asd / signal_rms;
    Ok(q * q)
}

/// RMS phase obtained by integrating a flat ASD over a band; one reading of a
/// broadband sensitivity figure.
pub fn band_rms<F: Scalar>(asd_flat: F, f_lo_hz: F, f_hi_hz: F) -> Result<F> {
    if !(f_hi_hz > f_lo_hz) || !(f_lo_hz >= F::zero()) {
        return Err(Error::domain("band edges must satisfy 0 <= f_lo < f_hi"));
    }
    Ok(asd_flat * (f_hi_hz - f_lo_hz).sqrt())
}

/// Amplitude resolution after integrating for `duration_s`: `asd/sqrt(T)`;
/// the other common reading of a broadband sensitivity figure.
pub fn amplitude_resolution<F: Scalar>(asd_flat: F, duration_s: F) -> Result<F> {
    if !(duration_s > F::zero()) {
        return Err(Error::domain("duration_s must be > 0"));
    }
    Ok(asd_flat / duration_s.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_shift_zero_height() {
        let c = PhysicalConstants::<f64>::default();
        let v = gravitational_phase_shift(&c, 1.46, 0.0, 5e4, 1.55e-6).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn phase_shift_rejects_bad_inputs() {
        let c = PhysicalConstants::<f64>::default();
        assert!(gravitational_phase_shift(&c, 1.46, 1.0, 0.0, 1.55e-6).is_err());
        assert!(gravitational_phase_shift(&c, 1.46, 1.0, 5e4, -1.0).is_err());
        assert!(gravitational_phase_shift(&c, 1.46, 1.0, f64::NAN, 1.55e-6).is_err());
        assert!(gravitational_phase_shift(&c, 0.99, 1.0, 5e4, 1.55e-6).is_err());
    }

    #[test]
    fn fringe_counts_trivial_cases() {
        let (n1, n2) = expected_fringe_counts(1000.0, 1.0, 0.0).unwrap();
        assert_eq!((n1, n2), (1000.0, 0.0));
        let (n1, n2) = expected_fringe_counts(1000.0, 0.98, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((n1 - 500.0).abs() < 1e-9 && (n2 - 500.0).abs() < 1e-9);
        let (n1, n2) = expected_fringe_counts(1000.0, 0.0, 1.3).unwrap();
        assert_eq!((n1, n2), (500.0, 500.0));
        assert!(expected_fringe_counts(1000.0, 1.2, 0.0).is_err());
    }

    #[test]
    fn shot_noise_trivial() {
        assert!((shot_noise_asd(2.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        // inverse-square-root rate scaling
        let a0 = shot_noise_asd(1e4, 0.9).unwrap();
        let a1 = shot_noise_asd(4e4, 0.9).unwrap();
        assert!((a1 / a0 - 0.5).abs() < 1e-12);
        assert!(shot_noise_asd(0.0, 0.9).is_err());
        assert!(shot_noise_asd(1e4, 0.0).is_err());
    }

    #[test]
    fn fractional_displacement_identities() {
        assert_eq!(fractional_displacement_asd(0.0, 1.55e-6, 1.46, 5e4).unwrap(), 0.0);
        let unit =
            fractional_displacement_asd(std::f64::consts::TAU, 1.0, 1.0, 1.0).unwrap();
        assert!((unit - 1.0).abs() < 1e-15);
    }

    #[test]
    fn loss_budget_empty_and_single() {
        let t = LossBudget::default().totals().unwrap();
        assert_eq!(t.total_db, 0.0);
        assert_eq!(t.transmission, 1.0);

        let b = LossBudget {
            entries: vec![LossEntry {
                label: "half".into(),
                loss_db: 3.01,
                uncertainty_db: 0.0,
            }],
        };
        let t = b.totals().unwrap();
        // 10^(-0.301) = 0.500035 (frozen from exact evaluation)
        assert!((t.transmission - 0.5000345349769785).abs() < 1e-12);
    }

    #[test]
    fn loss_budget_rejects_negative() {
        let b = LossBudget {
            entries: vec![LossEntry {
                label: "bad".into(),
                loss_db: -1.0,
                uncertainty_db: 0.0,
            }],
        };
        assert!(b.totals().is_err());
    }

    #[test]
    fn snr_time_scalings() {
        // doubling the signal quarters the time
        let t0 = snr_integration_time(1e-4, 4.42e-3, 10.0).unwrap();
        let t1 = snr_integration_time(2e-4, 4.42e-3, 10.0).unwrap();
        assert!((t0 / t1 - 4.0).abs() < 1e-12);
        assert_eq!(snr_integration_time(1e-4, 4.42e-3, 0.0).unwrap(), 0.0);
        assert!(snr_integration_time(0.0, 4.42e-3, 10.0).is_err());
        // composing with the uncertainty after T returns the target SNR
        let snr = 7.5f64;
        let t = snr_integration_time(6.48e-5, 4.42e-3, snr).unwrap();
        let sem = 4.42e-3 / t.sqrt();
        assert!((6.48e-5 / sem - snr).abs() / snr < 1e-12);
    }

    #[test]
    fn works_in_f32() {
        let c = PhysicalConstants::<f32>::default();
        let v = gravitational_phase_shift(&c, 1.46f32, 1.0, 5e4, 1.55e-6).unwrap();
        assert!((v - 3.23e-5).abs() / 3.23e-5 < 1e-3);
    }
}
