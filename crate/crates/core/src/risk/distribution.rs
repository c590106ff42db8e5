use super::RiskError;

const PROB_TOL: f64 = 1e-10;
// Slack when comparing a running CDF against a quantile level.
const LEVEL_TOL: f64 = 1e-12;

/// A finite discrete distribution, stored sorted by value with distinct values.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnDistribution {
    atoms: Vec<(f64, f64)>,
}

impl ReturnDistribution {
    /// Atoms as `(value, probability)`; probabilities must sum to 1 within 1e-10.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self, RiskError> {
        if atoms.is_empty() {
            return Err(RiskError::InvalidDistribution("empty atom list".into()));
        }
        if atoms.iter().any(|&(x, p)| !x.is_finite() || !p.is_finite() || p < 0.0) {
            return Err(RiskError::InvalidDistribution(
                "values must be finite and probabilities non-negative".into(),
            ));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(RiskError::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(Self::from_sorted(sort_and_merge(atoms, 0.0)))
    }

    /// Like [`new`](Self::new) but rescales the probabilities to sum to 1.
    pub fn normalized(atoms: Vec<(f64, f64)>) -> Result<Self, RiskError> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if !(total > 0.0) {
            return Err(RiskError::InvalidDistribution("no probability mass".into()));
        }
        Self::new(atoms.into_iter().map(|(x, p)| (x, p / total)).collect())
    }

    /// Normalizes, then merges atoms whose values lie within `tol` of their
    /// group's first value, keeping the probability-weighted mean value.
    pub fn merged(atoms: Vec<(f64, f64)>, tol: f64) -> Result<Self, RiskError> {
        let dist = Self::normalized(atoms)?;
        Ok(Self::from_sorted(sort_and_merge(dist.atoms, tol)))
    }

    pub fn point(value: f64) -> Self {
        Self {
            atoms: vec![(value, 1.0)],
        }
    }

    fn from_sorted(atoms: Vec<(f64, f64)>) -> Self {
        Self { atoms }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn sorted_atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(x, p)| x * p).sum()
    }

    pub fn min(&self) -> f64 {
        self.atoms[0].0
    }

    pub fn max(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].0
    }

    /// F⁻¹(u) = inf{x : F(x) ≥ u}.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut cdf = 0.0;
        for &(x, p) in &self.atoms {
            cdf += p;
            if cdf >= u - LEVEL_TOL {
                return x;
            }
        }
        self.max()
    }

    /// Applies `f` to every value (f need not be monotone).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_sorted(sort_and_merge(
            self.atoms.iter().map(|&(x, p)| (f(x), p)).collect(),
            0.0,
        ))
    }
}

fn sort_and_merge(mut atoms: Vec<(f64, f64)>, tol: f64) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    let mut anchor = f64::NEG_INFINITY;
    for (x, p) in atoms {
        match out.last_mut() {
            Some(last) if x - anchor <= tol => {
                let mass = last.1 + p;
                if mass > 0.0 {
                    last.0 = (last.0 * last.1 + x * p) / mass;
                }
                last.1 = mass;
            }
            _ => {
                anchor = x;
                out.push((x, p));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        assert!(ReturnDistribution::new(vec![]).is_err());
        assert!(ReturnDistribution::new(vec![(1.0, 0.5)]).is_err());
        assert!(ReturnDistribution::new(vec![(1.0, 1.5), (2.0, -0.5)]).is_err());
        assert!(ReturnDistribution::new(vec![(f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn duplicates_collapse() {
        let d = ReturnDistribution::new(vec![(2.0, 0.25), (1.0, 0.5), (2.0, 0.25)]).unwrap();
        assert_eq!(d.atoms(), &[(1.0, 0.5), (2.0, 0.5)]);
    }

    #[test]
    fn merging_keeps_weighted_mean() {
        let d = ReturnDistribution::merged(vec![(1.0, 0.25), (1.0 + 1e-10, 0.75), (3.0, 0.0)], 1e-9).unwrap();
        assert_eq!(d.atoms().len(), 2);
        assert!((d.atoms()[0].0 - (1.0 + 0.75e-10)).abs() < 1e-15);
        assert_eq!(d.atoms()[0].1, 1.0);
    }

    #[test]
    fn quantile_is_left_continuous() {
        let d = ReturnDistribution::new(vec![(0.0, 0.25), (1.0, 0.25), (2.0, 0.25), (3.0, 0.25)]).unwrap();
        assert_eq!(d.quantile(0.0), 0.0);
        assert_eq!(d.quantile(0.25), 0.0);
        assert_eq!(d.quantile(0.2500001), 1.0);
        assert_eq!(d.quantile(0.5), 1.0);
        assert_eq!(d.quantile(1.0), 3.0);
        assert_eq!(d.mean(), 1.5);
    }
}
