//! Thin wrappers around `rustfft` for real-valued series.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Scalar;

/// Forward FFT of a real series into a full complex spectrum.
pub fn forward_real<F: Scalar>(x: &[F]) -> Vec<Complex<F>> {
    let mut buf: Vec<Complex<F>> = x.iter().map(|&v| Complex::new(v, F::zero())).collect();
    let fft = FftPlanner::new().plan_fft_forward(buf.len());
    fft.process(&mut buf);
    buf
}

/// Inverse FFT returning the real part, normalized by 1/n.
pub fn inverse_real<F: Scalar>(spec: &mut [Complex<F>]) -> Vec<F> {
    let n = spec.len();
    let fft = FftPlanner::new().plan_fft_inverse(n);
    fft.process(spec);
    let scale = F::one() / F::from_usize(n).unwrap();
    spec.iter().map(|c| c.re * scale).collect()
}

/// Frequency of FFT bin `k` for an `n`-point transform at sample rate `fs`,
/// mapped to the signed range `(-fs/2, fs/2]`.
pub fn bin_frequency_hz(k: usize, n: usize, fs: f64) -> f64 {
    if k <= n / 2 {
        k as f64 * fs / n as f64
    } else {
        (k as f64 - n as f64) * fs / n as f64
    }
}
