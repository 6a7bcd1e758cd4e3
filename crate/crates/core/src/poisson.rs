//! Poisson sampling for per-bin photon counts.
//!
//! Uses CDF inversion for small means and a Lorentzian-envelope rejection
//! method for large means. Both paths consume only `f64` uniforms from the
//! caller's RNG, keeping the draw sequence identical for every scalar type
//! and platform.

use rand::Rng;

/// Mean above which the rejection sampler takes over from inversion.
const INVERSION_CUTOFF: f64 = 30.0;

/// Draw one Poisson variate with mean `lambda`.
pub fn sample<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    debug_assert!(lambda >= 0.0 && lambda.is_finite(), "invalid Poisson mean {lambda}");
    if lambda <= 0.0 {
        0
    } else if lambda < INVERSION_CUTOFF {
        inversion(rng, lambda)
    } else {
        rejection(rng, lambda)
    }
}

/// Sequential CDF search. The iteration cap guards against the (measure-zero)
/// u -> 1 tail.
fn inversion<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let u: f64 = rng.gen();
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cum = p;
    let cap = (lambda + 20.0 * lambda.sqrt() + 100.0) as u64;
    while u > cum && k < cap {
        k += 1;
        p *= lambda / k as f64;
        cum += p;
    }
    k
}

/// Rejection sampling with a Lorentzian comparison function; no Gaussian
/// approximation enters, so tails stay exactly Poisson.
fn rejection<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let sq = (2.0 * lambda).sqrt();
    let log_lambda = lambda.ln();
    let g = lambda * log_lambda - ln_gamma(lambda + 1.0);
    loop {
        let mut y;
        let mut em;
        loop {
            let u: f64 = rng.gen();
            y = (std::f64::consts::PI * u).tan();
            em = sq * y + lambda;
            if em >= 0.0 {
                break;
            }
        }
        em = em.floor();
        let t = 0.9 * (1.0 + y * y) * (em * log_lambda - ln_gamma(em + 1.0) - g).exp();
        let u2: f64 = rng.gen();
        if u2 <= t {
            return em as u64;
        }
    }
}

/// Lanczos approximation (g = 7, 9 terms) of ln Gamma(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    debug_assert!(x > 0.0);
    let z = x - 1.0;
    let mut a = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        a += c / (z + (i + 1) as f64);
    }
    let t = z + 7.5;
    0.5 * (std::f64::consts::TAU).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ln_gamma_matches_factorials() {
        // ln Gamma(n+1) = ln n!
        let mut fact = 1.0f64;
        for n in 1..=20u32 {
            fact *= n as f64;
            let lg = ln_gamma(n as f64 + 1.0);
            assert!(
                (lg - fact.ln()).abs() < 1e-11,
                "n = {n}: {lg} vs {}",
                fact.ln()
            );
        }
        // half-integer check: Gamma(1/2) = sqrt(pi)
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample(&mut rng, 0.0), 0);
    }

    #[test]
    fn moments_match_both_regimes() {
        for &lambda in &[3.0, 25.0, 80.0, 5330.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let n = 200_000usize;
            let mut sum = 0.0f64;
            let mut sumsq = 0.0f64;
            for _ in 0..n {
                let k = sample(&mut rng, lambda) as f64;
                sum += k;
                sumsq += k * k;
            }
            let mean = sum / n as f64;
            let var = sumsq / n as f64 - mean * mean;
            // mean and variance both equal lambda; allow 5-sigma statistics
            let mean_tol = 5.0 * (lambda / n as f64).sqrt();
            assert!((mean - lambda).abs() < mean_tol, "lambda {lambda}: mean {mean}");
            let var_tol = 5.0 * lambda * (2.0 / n as f64).sqrt() + 0.05;
            assert!((var - lambda).abs() < var_tol, "lambda {lambda}: var {var}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let draw = |seed: u64| -> Vec<u64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| sample(&mut rng, 123.4)).collect()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }
}
