//! Standard normal CDF, quantile and the truncated normal used by the
//! stick-breaking sampler.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;

const SQRT_2PI: f64 = 2.506_628_274_631_000_2;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF, computed through `erfc` so the lower tail keeps full
/// relative precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation (relative error about 1.2e-9) followed by
/// one Newton step on [`normal_cdf`]. Returns `-inf`/`+inf` at 0 and 1 and NaN
/// outside `[0, 1]`.
pub fn normal_inv_cdf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let x = acklam(p);
    if !x.is_finite() {
        return x;
    }
    let density = normal_pdf(x);
    if density <= 0.0 {
        return x;
    }
    // Newton in the tail where Φ is accurate; use the complement above 0.5.
    let err = if p < 0.5 {
        normal_cdf(x) - p
    } else {
        (1.0 - p) - normal_cdf(-x)
    };
    x - err / density
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Normal distribution N(mean, std²) truncated to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, std: f64, lo: f64, hi: f64) -> Self {
        debug_assert!(std > 0.0 && lo < hi);
        Self { mean, std, lo, hi }
    }

    fn standardized(&self) -> (f64, f64) {
        ((self.lo - self.mean) / self.std, (self.hi - self.mean) / self.std)
    }

    /// Probability mass of the untruncated normal inside `[lo, hi]`, as a log.
    pub fn log_mass(&self) -> f64 {
        let (a, b) = self.standardized();
        // Work in whichever tail keeps precision.
        let mass = if a > 0.0 {
            normal_cdf(-a) - normal_cdf(-b)
        } else {
            normal_cdf(b) - normal_cdf(a)
        };
        if mass > 0.0 {
            mass.ln()
        } else {
            // Far-tail asymptotic: log φ(t) - log t at the nearer bound.
            let t = if a > 0.0 { a } else { -b };
            -0.5 * t * t - (SQRT_2PI * t).ln()
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.mean) / self.std;
        -0.5 * z * z - 0.5 * (2.0 * PI).ln() - self.std.ln() - self.log_mass()
    }

    /// Derivative of `log_pdf(x)` with respect to the mean.
    pub fn dlog_pdf_dmean(&self, x: f64) -> f64 {
        let (a, b) = self.standardized();
        let z = (x - self.mean) / self.std;
        let mass = self.log_mass().exp();
        let dlogmass = if mass > 0.0 {
            (normal_pdf(a) - normal_pdf(b)) / (self.std * mass)
        } else {
            // Mills-ratio limit: the mass behaves like the density at the nearer bound.
            if a > 0.0 {
                a / self.std
            } else {
                b / self.std
            }
        };
        z / self.std - dlogmass
    }

    pub fn mean_value(&self) -> f64 {
        let (a, b) = self.standardized();
        let mass = self.log_mass().exp();
        if mass > 0.0 {
            self.mean + self.std * (normal_pdf(a) - normal_pdf(b)) / mass
        } else if a > 0.0 {
            self.lo
        } else {
            self.hi
        }
    }

    /// Differential entropy in nats.
    pub fn entropy(&self) -> f64 {
        let (a, b) = self.standardized();
        let log_z = self.log_mass();
        let z = log_z.exp();
        let edge = if z > 0.0 {
            (a * normal_pdf(a) - b * normal_pdf(b)) / (2.0 * z)
        } else {
            0.0
        };
        0.5 * (2.0 * PI * std::f64::consts::E).ln() + self.std.ln() + log_z + edge
    }

    /// Inverse-CDF sampling in the numerically favourable tail.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a, b) = self.standardized();
        let flip = a > 0.0;
        let (lo, hi) = if flip { (-b, -a) } else { (a, b) };
        let p_lo = normal_cdf(lo);
        let p_hi = normal_cdf(hi);
        let z = if p_hi - p_lo > 0.0 {
            let u: f64 = rng.gen();
            normal_inv_cdf(p_lo + u * (p_hi - p_lo)).clamp(lo, hi)
        } else {
            hi
        };
        let z = if flip { -z } else { z };
        (self.mean + self.std * z).clamp(self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Frozen from mpmath at 50 digits.
    const CDF_TABLE: [(f64, f64); 6] = [
        (-8.0, 6.220_960_574_271_785e-16),
        (-3.0, 1.349_898_031_630_094_6e-3),
        (-1.0, 0.158_655_253_931_457_05),
        (0.5, 0.691_462_461_274_013_1),
        (1.959_964, 0.975_000_0),
        (2.5, 0.993_790_334_674_223_8),
    ];

    #[test]
    fn cdf_matches_reference() {
        assert_eq!(normal_cdf(0.0), 0.5);
        for &(x, p) in &CDF_TABLE {
            let tol = if x == 1.959_964 { 1e-6 } else { 1e-12 };
            assert!((normal_cdf(x) - p).abs() <= tol, "x={x}: {}", normal_cdf(x));
        }
    }

    #[test]
    fn inverse_round_trips() {
        assert_eq!(normal_inv_cdf(0.5), 0.0);
        for &(x, p) in &CDF_TABLE[..4] {
            assert!((normal_inv_cdf(p) - x).abs() < 1e-9, "p={p}");
        }
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = normal_inv_cdf(p);
            assert!((normal_cdf(x) - p).abs() < 1e-13);
        }
        assert!(normal_inv_cdf(1.5).is_nan());
        assert_eq!(normal_inv_cdf(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn truncated_density_integrates_to_one() {
        let tn = TruncatedNormal::new(0.3, 0.05, 0.0, 10.0);
        let n = 200_000;
        let h = 10.0 / n as f64;
        let total: f64 = (0..n).map(|k| tn.log_pdf((k as f64 + 0.5) * h).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn truncated_mean_matches_samples() {
        let tn = TruncatedNormal::new(0.02, 0.05, 0.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| tn.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - tn.mean_value()).abs() < 3.0 * se);
        assert!(xs.iter().all(|&x| (0.0..=10.0).contains(&x)));
    }

    #[test]
    fn far_tail_sampling_stays_in_range() {
        let tn = TruncatedNormal::new(50.0, 0.05, 0.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = tn.sample(&mut rng);
        assert!((x - 10.0).abs() < 1e-2);
        assert!(tn.log_pdf(9.999).is_finite());
    }

    #[test]
    fn mean_gradient_matches_finite_difference() {
        let x = 0.41;
        for mean in [0.3, 0.0, 1.2] {
            let h = 1e-6;
            let up = TruncatedNormal::new(mean + h, 0.05, 0.0, 10.0).log_pdf(x);
            let dn = TruncatedNormal::new(mean - h, 0.05, 0.0, 10.0).log_pdf(x);
            let fd = (up - dn) / (2.0 * h);
            let an = TruncatedNormal::new(mean, 0.05, 0.0, 10.0).dlog_pdf_dmean(x);
            assert!((fd - an).abs() < 1e-4 * an.abs().max(1.0), "{fd} vs {an}");
        }
    }
}
