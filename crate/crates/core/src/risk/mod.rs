//! Spectral risk measures over finite atomic distributions.
//!
//! A spectrum σ on [0, 1] defines R_σ(X) = ∫ F_X⁻¹(u) σ(u) du. Everything in
//! this module works through the cumulative spectrum S(u) = ∫₀ᵘ σ, which makes
//! the risk of an atomic distribution an exact finite sum.

mod discretize;
mod distribution;
mod spectrum;

use thiserror::Error;

pub use discretize::{discretize, l1_error};
pub use distribution::ReturnDistribution;
pub use spectrum::{DiscretizedSpectrum, Spectrum, TableSpectrum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("spectrum argument u={u} outside its domain: {reason}")]
    Domain { u: f64, reason: &'static str },
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("beta has {got} breakpoints, spectrum needs {expected}")]
    BetaLength { expected: usize, got: usize },
    #[error("beta must be non-decreasing, got {0:?}")]
    BetaOrder(Vec<f64>),
    #[error("discretization did not converge (unit-integral residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("cannot parse spectrum descriptor `{0}`")]
    Parse(String),
}

/// Anything that can act as the weighting of a spectral risk measure.
pub trait SpectralMeasure {
    /// S(u) = ∫₀ᵘ σ(v) dv for u in [0, 1]; S(1) = 1.
    fn cumulative(&self, u: f64) -> f64;
}

/// R_σ(X) for an atomic distribution.
///
/// Atoms are sorted by value; atom k owns the quantile levels (F_{k-1}, F_k]
/// and contributes x_k (S(F_k) - S(F_{k-1})).
pub fn spectral_risk<S: SpectralMeasure + ?Sized>(spectrum: &S, dist: &ReturnDistribution) -> f64 {
    let atoms = dist.sorted_atoms();
    let last = atoms.len() - 1;
    let mut cdf = 0.0;
    let mut prev_s = 0.0;
    let mut risk = 0.0;
    for (k, &(x, p)) in atoms.iter().enumerate() {
        cdf += p;
        let level = if k == last { 1.0 } else { cdf.min(1.0) };
        let s = spectrum.cumulative(level);
        risk += x * (s - prev_s);
        prev_s = s;
    }
    risk
}

/// E[(X - β)₊]/(1 - α) + β, the Rockafellar-Uryasev objective for CVaR_α.
pub fn cvar_dual(dist: &ReturnDistribution, alpha: f64, beta: f64) -> f64 {
    let tail: f64 = dist.atoms().iter().map(|&(x, p)| p * (x - beta).max(0.0)).sum();
    tail / (1.0 - alpha) + beta
}

/// C_max σ(1) / ((1 - γ) M); `None` when σ(1) is unbounded.
pub fn discretization_error_bound(spectrum: &Spectrum, m: usize, c_max: f64, gamma: f64) -> Option<f64> {
    let top = spectrum.sigma_at_one()?;
    Some(c_max * top / ((1.0 - gamma) * m as f64))
}

/// Breakpoint vector of the piecewise-linear g_β (one entry per level jump).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BetaParam(pub Vec<f64>);

impl BetaParam {
    pub fn new(values: Vec<f64>) -> Result<Self, RiskError> {
        if values.windows(2).any(|w| w[0] > w[1]) || values.iter().any(|v| !v.is_finite()) {
            return Err(RiskError::BetaOrder(values));
        }
        Ok(Self(values))
    }

    /// Checks the `[0, upper]` range as well as ordering.
    pub fn bounded(values: Vec<f64>, upper: f64) -> Result<Self, RiskError> {
        let beta = Self::new(values)?;
        if beta.0.iter().any(|&b| b < 0.0 || b > upper + 1e-12) {
            return Err(RiskError::InvalidSpectrum(format!(
                "beta {:?} outside [0, {upper}]",
                beta.0
            )));
        }
        Ok(beta)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// g_β bundled with its spectrum: the increasing convex function applied to
/// the total cost return.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GBeta {
    disc: DiscretizedSpectrum,
    beta: BetaParam,
}

impl GBeta {
    pub fn new(disc: DiscretizedSpectrum, beta: BetaParam) -> Result<Self, RiskError> {
        check_beta(&disc, &beta)?;
        Ok(Self { disc, beta })
    }

    /// g(x) = x with no conjugate term (expected-cost constraints).
    pub fn identity() -> Self {
        Self {
            disc: DiscretizedSpectrum::identity(),
            beta: BetaParam(Vec::new()),
        }
    }

    pub fn disc(&self) -> &DiscretizedSpectrum {
        &self.disc
    }

    pub fn beta(&self) -> &BetaParam {
        &self.beta
    }

    pub fn eval(&self, x: f64) -> f64 {
        g_beta(&self.disc, &self.beta, x)
    }

    pub fn slope(&self, x: f64) -> f64 {
        g_beta_slope(&self.disc, &self.beta, x)
    }

    pub fn conjugate(&self) -> f64 {
        conjugate_integral(&self.disc, &self.beta).expect("length checked at construction")
    }

    pub fn sub_risk(&self, dist: &ReturnDistribution) -> f64 {
        sub_risk(&self.disc, &self.beta, dist).expect("length checked at construction")
    }
}

fn check_beta(disc: &DiscretizedSpectrum, beta: &BetaParam) -> Result<(), RiskError> {
    let expected = disc.levels().len() - 1;
    if beta.len() != expected {
        return Err(RiskError::BetaLength {
            expected,
            got: beta.len(),
        });
    }
    Ok(())
}

/// g_β(x) = η₁x + Σᵢ (ηᵢ₊₁ - ηᵢ)(x - β[i])₊.
pub fn g_beta(disc: &DiscretizedSpectrum, beta: &BetaParam, x: f64) -> f64 {
    let eta = disc.levels();
    let mut value = eta[0] * x;
    for (i, &b) in beta.as_slice().iter().enumerate() {
        value += (eta[i + 1] - eta[i]) * (x - b).max(0.0);
    }
    value
}

/// Right derivative of g_β at x.
pub fn g_beta_slope(disc: &DiscretizedSpectrum, beta: &BetaParam, x: f64) -> f64 {
    let eta = disc.levels();
    let mut slope = eta[0];
    for (i, &b) in beta.as_slice().iter().enumerate() {
        if x >= b {
            slope += eta[i + 1] - eta[i];
        }
    }
    slope
}

/// ∫₀¹ g_β*(σ̃(u)) du in closed form: Σᵢ (ηᵢ₊₁ - ηᵢ)(1 - αᵢ) β[i].
pub fn conjugate_integral(disc: &DiscretizedSpectrum, beta: &BetaParam) -> Result<f64, RiskError> {
    check_beta(disc, beta)?;
    let eta = disc.levels();
    let alpha = disc.breakpoints();
    Ok(beta
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &b)| (eta[i + 1] - eta[i]) * (1.0 - alpha[i]) * b)
        .sum())
}

/// R^β(X) = E[g_β(X)] + ∫ g_β*(σ̃(u)) du, an upper bound on R_σ̃(X).
pub fn sub_risk(disc: &DiscretizedSpectrum, beta: &BetaParam, dist: &ReturnDistribution) -> Result<f64, RiskError> {
    let constant = conjugate_integral(disc, beta)?;
    let expectation: f64 = dist.atoms().iter().map(|&(x, p)| p * g_beta(disc, beta, x)).sum();
    Ok(expectation + constant)
}

/// β[i] = F_X⁻¹(αᵢ), the minimizer of [`sub_risk`] over β.
pub fn minimizing_beta(disc: &DiscretizedSpectrum, dist: &ReturnDistribution) -> BetaParam {
    BetaParam(disc.breakpoints().iter().map(|&a| dist.quantile(a)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(values: &[f64]) -> ReturnDistribution {
        let p = 1.0 / values.len() as f64;
        ReturnDistribution::new(values.iter().map(|&v| (v, p)).collect()).unwrap()
    }

    fn cvar_disc(alpha: f64) -> DiscretizedSpectrum {
        DiscretizedSpectrum::new(vec![0.0, 1.0 / (1.0 - alpha)], vec![alpha]).unwrap()
    }

    #[test]
    fn spectral_risk_examples() {
        let x = uniform(&[0.0, 1.0, 2.0, 3.0]);
        assert!((spectral_risk(&Spectrum::Cvar { alpha: 0.5 }, &x) - 2.5).abs() < 1e-12);
        assert!((spectral_risk(&Spectrum::Cvar { alpha: 0.0 }, &x) - x.mean()).abs() < 1e-12);
        let c = ReturnDistribution::point(1.7);
        for spec in [
            Spectrum::Cvar { alpha: 0.3 },
            Spectrum::Pow { alpha: 0.6 },
            Spectrum::Wang { alpha: 1.0 },
        ] {
            assert!((spectral_risk(&spec, &c) - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn cvar_dual_examples() {
        let x = uniform(&[0.0, 1.0, 2.0, 3.0]);
        assert!((cvar_dual(&x, 0.5, 2.0) - 2.5).abs() < 1e-12);
        assert!((cvar_dual(&x, 0.5, 0.0) - 3.0).abs() < 1e-12);
        let c = ReturnDistribution::point(4.0);
        assert!((cvar_dual(&c, 0.8, 4.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn error_bound_examples() {
        let b = discretization_error_bound(&Spectrum::Cvar { alpha: 0.75 }, 5, 1.0, 0.99).unwrap();
        assert!((b - 80.0).abs() < 1e-9);
        let b = discretization_error_bound(&Spectrum::Cvar { alpha: 0.0 }, 10, 1.0, 0.9).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
        let b = discretization_error_bound(&Spectrum::Pow { alpha: 0.5 }, 4, 2.0, 0.5).unwrap();
        assert!((b - 2.0).abs() < 1e-12);
        assert!(discretization_error_bound(&Spectrum::Wang { alpha: 0.5 }, 4, 1.0, 0.5).is_none());
    }

    #[test]
    fn g_beta_examples() {
        let disc = cvar_disc(0.75);
        let beta = BetaParam(vec![2.0]);
        assert!((g_beta(&disc, &beta, 3.0) - 4.0).abs() < 1e-12);
        assert_eq!(g_beta(&disc, &beta, 1.5), 0.0);
        let neutral = DiscretizedSpectrum::new(vec![1.0], vec![]).unwrap();
        assert_eq!(g_beta(&neutral, &BetaParam(vec![]), 5.0), 5.0);
    }

    #[test]
    fn conjugate_examples() {
        for alpha in [0.1, 0.5, 0.9] {
            let v = conjugate_integral(&cvar_disc(alpha), &BetaParam(vec![1.3])).unwrap();
            assert!((v - 1.3).abs() < 1e-12);
        }
        let pow = DiscretizedSpectrum::new(vec![0.2, 0.6, 1.0, 1.4, 1.8], vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        assert_eq!(conjugate_integral(&pow, &BetaParam::zeros(4)).unwrap(), 0.0);
        let v = conjugate_integral(&pow, &BetaParam(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert!((v - 1.6).abs() < 1e-12);
        assert!(matches!(
            conjugate_integral(&pow, &BetaParam(vec![1.0])),
            Err(RiskError::BetaLength { expected: 4, got: 1 })
        ));
    }

    #[test]
    fn sub_risk_examples() {
        let x = uniform(&[0.0, 1.0, 2.0, 3.0]);
        let disc = cvar_disc(0.5);
        let v = sub_risk(&disc, &BetaParam(vec![2.0]), &x).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
        let neutral = DiscretizedSpectrum::new(vec![1.0], vec![]).unwrap();
        let c = ReturnDistribution::point(0.7);
        assert!((sub_risk(&neutral, &BetaParam(vec![]), &c).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn minimizing_beta_examples() {
        let x = uniform(&[0.0, 1.0, 2.0, 3.0]);
        let disc = cvar_disc(0.5);
        let beta = minimizing_beta(&disc, &x);
        // Left-continuous quantile: F(1) = 0.5 already reaches the level.
        assert_eq!(beta.0, vec![1.0]);
        let at_left = sub_risk(&disc, &beta, &x).unwrap();
        let at_right = sub_risk(&disc, &BetaParam(vec![2.0]), &x).unwrap();
        assert!((at_left - at_right).abs() < 1e-12);
        assert!((at_left - spectral_risk(&disc, &x)).abs() < 1e-10);

        let c = ReturnDistribution::point(2.5);
        let pow = DiscretizedSpectrum::new(vec![0.2, 0.6, 1.0, 1.4, 1.8], vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        assert_eq!(minimizing_beta(&pow, &c).0, vec![2.5; 4]);

        let ten = uniform(&(0..10).map(f64::from).collect::<Vec<_>>());
        let left = minimizing_beta(&pow, &ten);
        assert_eq!(left.0, vec![1.0, 3.0, 5.0, 7.0]);
        let right = BetaParam(vec![2.0, 4.0, 6.0, 8.0]);
        let r_left = sub_risk(&pow, &left, &ten).unwrap();
        let r_right = sub_risk(&pow, &right, &ten).unwrap();
        assert!((r_left - r_right).abs() < 1e-12);
        assert!((r_left - spectral_risk(&pow, &ten)).abs() < 1e-10);
    }

    #[test]
    fn beta_param_validation() {
        assert!(BetaParam::new(vec![1.0, 0.5]).is_err());
        assert!(BetaParam::bounded(vec![0.5, 11.0], 10.0).is_err());
        assert!(BetaParam::bounded(vec![0.0, 10.0], 10.0).is_ok());
    }
}
