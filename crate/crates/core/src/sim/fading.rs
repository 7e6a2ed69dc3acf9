//! Rician block fading of received power.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::FadingGain;
use crate::error::{Error, Result};

/// One fading block: from `start` (µs) until the next block starts, gains
/// are drawn with Rician factor `k_a` (`f64::INFINITY` for no fading).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingBlock {
    pub start_us: f64,
    pub k_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingParams {
    pub blocks: Vec<FadingBlock>,
}

impl FadingParams {
    pub fn none() -> Self {
        FadingParams::constant(f64::INFINITY)
    }

    /// A single block with factor `k_a` over the whole run.
    pub fn constant(k_a: f64) -> Self {
        FadingParams {
            blocks: vec![FadingBlock { start_us: 0.0, k_a }],
        }
    }

    pub fn blocks(blocks: Vec<FadingBlock>) -> Result<Self> {
        let f = FadingParams { blocks };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.blocks.first() else {
            return Err(Error::invalid("fading", "need at least one block"));
        };
        if first.start_us != 0.0 {
            return Err(Error::invalid("fading", "first block must start at time 0"));
        }
        for w in self.blocks.windows(2) {
            if !(w[1].start_us > w[0].start_us) {
                return Err(Error::invalid("fading", "block start times must increase"));
            }
        }
        if let Some(b) = self.blocks.iter().find(|b| !(b.k_a >= 0.0)) {
            return Err(Error::invalid("k_a", format!("must be >= 0 or inf, got {}", b.k_a)));
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        self.blocks.iter().all(|b| b.k_a.is_infinite())
    }
}

/// Draw a unit-mean power gain `(ν + X)² + Y²` with `ν² = K/(K+1)` and
/// `X, Y ~ N(0, 1/(2(K+1)))`. `K = ∞` gives exactly 1; `K = 0` gives an
/// exponential gain.
pub fn sample_rician_gain<R: Rng + ?Sized>(k_a: f64, rng: &mut R) -> FadingGain {
    if k_a.is_infinite() {
        return FadingGain::UNIT;
    }
    let nu = (k_a / (k_a + 1.0)).sqrt();
    let sigma = (0.5 / (k_a + 1.0)).sqrt();
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    let re = nu + sigma * x;
    let im = sigma * y;
    FadingGain::from_raw(re * re + im * im)
}

/// `ln I₀(x)` by the power series `Σ (x/2)^{2m} / (m!)²`, summed outward
/// from the largest term so that large arguments do not overflow.
pub fn ln_bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        return 0.0;
    }
    let q = 0.25 * x * x;
    let m_star = (0.5 * x).floor() as u64;
    let ln_peak = 2.0 * m_star as f64 * (0.5 * x).ln() - 2.0 * (1..=m_star).map(|k| (k as f64).ln()).sum::<f64>();
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut m = m_star;
    loop {
        m += 1;
        term *= q / (m as f64 * m as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    let mut term = 1.0;
    let mut m = m_star;
    while m > 0 {
        term *= (m as f64 * m as f64) / q;
        m -= 1;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    ln_peak + sum.ln()
}

/// Density of the gain: `(1+K) e^{-K} e^{-(1+K)g} I₀(2√(K(1+K)g))`.
pub fn rician_pdf(g: f64, k_a: f64) -> Result<f64> {
    if !(k_a >= 0.0 && k_a.is_finite()) {
        return Err(Error::invalid("k_a", format!("density needs finite k_a >= 0, got {k_a}")));
    }
    if g < 0.0 {
        return Ok(0.0);
    }
    let arg = 2.0 * (k_a * (1.0 + k_a) * g).sqrt();
    Ok(((1.0 + k_a).ln() - k_a - (1.0 + k_a) * g + ln_bessel_i0(arg)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_fading_is_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_rician_gain(f64::INFINITY, &mut rng), FadingGain::UNIT);
        }
    }

    #[test]
    fn rayleigh_density_at_zero() {
        assert_eq!(rician_pdf(0.0, 0.0).unwrap(), 1.0);
        assert!((rician_pdf(2.0, 0.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        assert!(rician_pdf(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn bessel_small_arguments() {
        // I0(1) and I0(10) reference values
        assert!((ln_bessel_i0(1.0).exp() - 1.2660658777520082).abs() < 1e-14);
        assert!((ln_bessel_i0(10.0).exp() / 2815.716628466254 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn bessel_large_argument_matches_asymptotic() {
        let x = 800.0f64;
        // I0(x) ~ e^x / sqrt(2πx) · (1 + 1/(8x) + 9/(128x²))
        let asym = x - (2.0 * std::f64::consts::PI * x).ln() / 2.0 + (1.0 + 1.0 / (8.0 * x) + 9.0 / (128.0 * x * x)).ln();
        assert!((ln_bessel_i0(x) - asym).abs() < 1e-9);
    }

    #[test]
    fn validation() {
        assert!(FadingParams::blocks(vec![]).is_err());
        assert!(FadingParams::blocks(vec![FadingBlock { start_us: 1.0, k_a: 1.0 }]).is_err());
        assert!(FadingParams::blocks(vec![
            FadingBlock { start_us: 0.0, k_a: 1.0 },
            FadingBlock { start_us: 0.0, k_a: 2.0 },
        ])
        .is_err());
        assert!(FadingParams::blocks(vec![FadingBlock { start_us: 0.0, k_a: -1.0 }]).is_err());
        assert!(FadingParams::none().is_static());
        assert!(!FadingParams::constant(3.0).is_static());
    }
}
