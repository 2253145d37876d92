use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{std_normal_cdf, std_normal_ln_pdf, std_normal_mass, std_normal_pdf, std_normal_quantile};

/// Reward support used by the tabular family.
pub const REWARD_LO: f64 = -2.0;
pub const REWARD_HI: f64 = 2.0;

/// Unit-variance Gaussian centred at `center`, restricted to `[lo, hi]` and
/// renormalised.
///
/// `mass` is the standard-normal probability of `[lo - center, hi - center]`,
/// so the density is `φ(x - center) / mass` on the support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedGaussian {
    center: f64,
    lo: f64,
    hi: f64,
    mass: f64,
    ln_mass: f64,
}

impl TruncatedGaussian {
    /// The reward distribution of the tabular family: support `[-2, 2]`,
    /// centre in `[-1, 1]`.
    pub fn reward(center: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&center) {
            return Err(Error::domain(format!(
                "truncated-Gaussian centre {center} outside [-1, 1]"
            )));
        }
        Ok(Self::with_support(center, REWARD_LO, REWARD_HI))
    }

    pub(crate) fn with_support(center: f64, lo: f64, hi: f64) -> Self {
        debug_assert!(lo < hi);
        let mass = std_normal_mass(lo - center, hi - center);
        Self {
            center,
            lo,
            hi,
            mass,
            ln_mass: mass.ln(),
        }
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Normalisation constant (Gaussian mass of the support).
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi || x.is_nan() {
            return f64::NEG_INFINITY;
        }
        std_normal_ln_pdf(x - self.center) - self.ln_mass
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi || x.is_nan() {
            return 0.0;
        }
        std_normal_pdf(x - self.center) / self.mass
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        (std_normal_mass(self.lo - self.center, x - self.center) / self.mass).clamp(0.0, 1.0)
    }

    /// Expected value: `center + (φ(a) - φ(b)) / mass` with `a`, `b` the
    /// standardised support bounds.
    pub fn mean(&self) -> f64 {
        let a = self.lo - self.center;
        let b = self.hi - self.center;
        self.center + (std_normal_pdf(a) - std_normal_pdf(b)) / self.mass
    }

    /// Inverse-CDF draw on the truncated range.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = std_normal_cdf(self.lo - self.center);
        let b = std_normal_cdf(self.hi - self.center);
        let u: f64 = rng.random();
        let x = self.center + std_normal_quantile(a + u * (b - a));
        x.clamp(self.lo, self.hi)
    }

    /// `ln ∫ p^ζ q^(1-ζ)` for two truncated Gaussians on the same support.
    ///
    /// Completing the square gives `exp(-ζ(1-ζ)d²/2) · mass(m) / (mass_p^ζ mass_q^(1-ζ))`
    /// with `d` the centre difference and `m = ζ c_p + (1-ζ) c_q`.
    pub(crate) fn ln_affinity(&self, other: &Self, zeta: f64) -> f64 {
        let d = self.center - other.center;
        let m = zeta * self.center + (1.0 - zeta) * other.center;
        let mixed = std_normal_mass(self.lo - m, self.hi - m).ln();
        mixed - 0.5 * zeta * (1.0 - zeta) * d * d - zeta * self.ln_mass - (1.0 - zeta) * other.ln_mass
    }

    /// KL divergence to another truncated Gaussian on the same support.
    ///
    /// `ln p/q = d·x - (c_p² - c_q²)/2 + ln(mass_q / mass_p)` is affine in
    /// `x`, so the expectation only needs the truncated mean.
    pub(crate) fn kl(&self, other: &Self) -> f64 {
        let d = self.center - other.center;
        let v = d * self.mean() - 0.5 * (self.center * self.center - other.center * other.center)
            + other.ln_mass
            - self.ln_mass;
        v.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson on a fine uniform grid; test-only oracle.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn centred_mass_is_two_sigma() {
        let t = TruncatedGaussian::reward(0.0).unwrap();
        let oracle = simpson(std_normal_pdf, -2.0, 2.0, 20_000);
        assert!((t.mass() - oracle).abs() < 1e-12);
        assert!((t.mass() - 0.9545).abs() < 1e-4);
    }

    #[test]
    fn density_integrates_to_one() {
        for &c in &[-1.0, -0.3, 0.0, 0.55, 1.0] {
            let t = TruncatedGaussian::reward(c).unwrap();
            let total = simpson(|x| t.pdf(x), -2.0, 2.0, 20_000);
            assert!((total - 1.0).abs() < 1e-9, "centre {c}: {total}");
        }
    }

    #[test]
    fn mean_matches_quadrature() {
        // H = 1 single-state MDP with action mean 0.3 has this expected reward.
        let t = TruncatedGaussian::reward(0.3).unwrap();
        let oracle = simpson(|x| x * t.pdf(x), -2.0, 2.0, 20_000);
        assert!((t.mean() - oracle).abs() < 1e-10);
        assert!(t.mean() < 0.3);
    }

    #[test]
    fn outside_support() {
        let t = TruncatedGaussian::reward(0.0).unwrap();
        assert_eq!(t.pdf(3.0), 0.0);
        assert_eq!(t.ln_pdf(3.0), f64::NEG_INFINITY);
        assert_eq!(t.cdf(-2.5), 0.0);
        assert_eq!(t.cdf(2.5), 1.0);
    }

    #[test]
    fn rejects_out_of_range_centre() {
        assert!(matches!(TruncatedGaussian::reward(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn equal_centres_have_zero_kl() {
        let a = TruncatedGaussian::reward(0.4).unwrap();
        assert_eq!(a.kl(&a), 0.0);
    }

    #[test]
    fn kl_matches_quadrature() {
        let p = TruncatedGaussian::reward(0.7).unwrap();
        let q = TruncatedGaussian::reward(-0.4).unwrap();
        let oracle = simpson(|x| p.pdf(x) * (p.ln_pdf(x) - q.ln_pdf(x)), -2.0, 2.0, 20_000);
        assert!((p.kl(&q) - oracle).abs() < 1e-10);
    }

    #[test]
    fn samples_stay_in_support() {
        let t = TruncatedGaussian::reward(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x = t.sample(&mut rng);
            assert!((-2.0..=2.0).contains(&x));
        }
    }
}
