use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RiskError, SpectralMeasure};
use crate::normal::{normal_cdf, normal_inv_cdf};

const UNIT_TOL: f64 = 1e-8;

/// A spectrum σ on [0, 1] defining a spectral risk measure.
#[derive(Debug, Clone, PartialEq)]
pub enum Spectrum {
    /// σ(u) = 1{u ≥ α}/(1 - α).
    Cvar { alpha: f64 },
    /// σ(u) = u^{α/(1-α)}/(1 - α).
    Pow { alpha: f64 },
    /// Wang distortion: σ(u) = φ(Φ⁻¹(u) - α)/φ(Φ⁻¹(u)), unbounded at u = 1.
    Wang { alpha: f64 },
    /// Piecewise-linear interpolation of sampled (u, σ(u)) points.
    Table(TableSpectrum),
}

impl Spectrum {
    pub fn cvar(alpha: f64) -> Result<Self, RiskError> {
        check_level(alpha, "cvar")?;
        Ok(Self::Cvar { alpha })
    }

    pub fn pow(alpha: f64) -> Result<Self, RiskError> {
        check_level(alpha, "pow")?;
        Ok(Self::Pow { alpha })
    }

    pub fn wang(alpha: f64) -> Result<Self, RiskError> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(RiskError::InvalidSpectrum(format!(
                "wang level {alpha} must be finite and >= 0"
            )));
        }
        Ok(Self::Wang { alpha })
    }

    /// Parses `cvar:0.75`, `pow:0.5`, `wang:1.0` or `table:<path>`.
    pub fn parse(descriptor: &str) -> Result<Self, RiskError> {
        let (family, arg) = descriptor
            .trim()
            .split_once(':')
            .ok_or_else(|| RiskError::Parse(descriptor.to_string()))?;
        let level = || {
            arg.trim()
                .parse::<f64>()
                .map_err(|_| RiskError::Parse(descriptor.to_string()))
        };
        match family.trim().to_ascii_lowercase().as_str() {
            "cvar" => Self::cvar(level()?),
            "pow" => Self::pow(level()?),
            "wang" => Self::wang(level()?),
            "table" => Ok(Self::Table(TableSpectrum::from_file(arg.trim())?)),
            _ => Err(RiskError::Parse(descriptor.to_string())),
        }
    }

    /// σ(u).
    pub fn eval(&self, u: f64) -> Result<f64, RiskError> {
        if !(0.0..=1.0).contains(&u) {
            return Err(RiskError::Domain {
                u,
                reason: "outside [0, 1]",
            });
        }
        Ok(match self {
            Self::Cvar { alpha } => {
                if u >= *alpha {
                    1.0 / (1.0 - alpha)
                } else {
                    0.0
                }
            }
            Self::Pow { alpha } => u.powf(alpha / (1.0 - alpha)) / (1.0 - alpha),
            Self::Wang { alpha } => {
                if *alpha == 0.0 {
                    return Ok(1.0);
                }
                if u >= 1.0 {
                    return Err(RiskError::Domain {
                        u,
                        reason: "wang spectrum is unbounded at 1",
                    });
                }
                if u == 0.0 {
                    return Ok(0.0);
                }
                let z = normal_inv_cdf(u);
                (alpha * z - 0.5 * alpha * alpha).exp()
            }
            Self::Table(t) => t.eval(u),
        })
    }

    /// Smallest u with σ(u) ≥ y (1 if σ never reaches y).
    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            Self::Cvar { alpha } => {
                if y <= 0.0 {
                    0.0
                } else if y <= 1.0 / (1.0 - alpha) {
                    *alpha
                } else {
                    1.0
                }
            }
            Self::Pow { alpha } => {
                if y <= 0.0 {
                    return 0.0;
                }
                if *alpha == 0.0 {
                    return if y <= 1.0 { 0.0 } else { 1.0 };
                }
                (y * (1.0 - alpha)).powf((1.0 - alpha) / alpha).min(1.0)
            }
            Self::Wang { alpha } => {
                if y <= 0.0 {
                    return 0.0;
                }
                if *alpha == 0.0 {
                    return if y <= 1.0 { 0.0 } else { 1.0 };
                }
                normal_cdf((y.ln() + 0.5 * alpha * alpha) / alpha)
            }
            Self::Table(t) => t.inverse(y),
        }
    }

    /// σ(1), or `None` when the spectrum is unbounded there.
    pub fn sigma_at_one(&self) -> Option<f64> {
        match self {
            Self::Wang { alpha } if *alpha > 0.0 => None,
            other => other.eval(1.0).ok(),
        }
    }

    /// True when σ ≡ 1 (the risk-neutral expectation).
    pub fn is_constant(&self) -> bool {
        match self {
            Self::Cvar { alpha } | Self::Pow { alpha } | Self::Wang { alpha } => *alpha == 0.0,
            Self::Table(t) => t.points.iter().all(|&(_, s)| (s - 1.0).abs() < UNIT_TOL),
        }
    }
}

impl SpectralMeasure for Spectrum {
    fn cumulative(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            Self::Cvar { alpha } => (u - alpha).max(0.0) / (1.0 - alpha),
            Self::Pow { alpha } => u.powf(1.0 / (1.0 - alpha)),
            Self::Wang { alpha } => {
                if u <= 0.0 || u >= 1.0 {
                    u
                } else {
                    normal_cdf(normal_inv_cdf(u) - alpha)
                }
            }
            Self::Table(t) => t.cumulative(u),
        }
    }
}

impl fmt::Display for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Cvar { alpha } => write!(f, "cvar:{alpha}"),
            Self::Pow { alpha } => write!(f, "pow:{alpha}"),
            Self::Wang { alpha } => write!(f, "wang:{alpha}"),
            Self::Table(t) => match &t.source {
                Some(p) => write!(f, "table:{}", p.display()),
                None => write!(f, "table:<inline>"),
            },
        }
    }
}

fn check_level(alpha: f64, family: &str) -> Result<(), RiskError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(RiskError::InvalidSpectrum(format!(
            "{family} level {alpha} must lie in [0, 1)"
        )));
    }
    Ok(())
}

/// Sampled spectrum with linear interpolation between points.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSpectrum {
    points: Vec<(f64, f64)>,
    // Running integral at each sample point.
    integral: Vec<f64>,
    source: Option<PathBuf>,
}

impl TableSpectrum {
    /// Samples must start at u = 0, end at u = 1, be strictly increasing in u,
    /// non-decreasing and non-negative in σ, and integrate to 1.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, RiskError> {
        let bad = |msg: String| Err(RiskError::InvalidSpectrum(msg));
        if points.len() < 2 {
            return bad("table needs at least two samples".into());
        }
        if points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
            return bad("table samples must cover u = 0 to u = 1".into());
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return bad(format!("table u values must increase ({} after {})", w[1].0, w[0].0));
            }
            if w[1].1 < w[0].1 {
                return bad(format!("table sigma must be non-decreasing (at u={})", w[1].0));
            }
        }
        if points.iter().any(|&(u, s)| !u.is_finite() || !s.is_finite() || s < 0.0) {
            return bad("table sigma must be finite and non-negative".into());
        }
        let mut integral = vec![0.0];
        for w in points.windows(2) {
            let area = 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
            integral.push(integral.last().unwrap() + area);
        }
        let total = *integral.last().unwrap();
        if (total - 1.0).abs() > UNIT_TOL {
            return bad(format!("table integrates to {total}, expected 1"));
        }
        Ok(Self {
            points,
            integral,
            source: None,
        })
    }

    /// Reads `u,sigma` (or whitespace separated) rows; `#` starts a comment.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, RiskError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| RiskError::InvalidSpectrum(format!("{}: {e}", path.display())))?;
        let mut points = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parsed: Option<Vec<f64>> = fields.iter().map(|s| s.parse().ok()).collect();
            match parsed.as_deref() {
                Some(&[u, s]) => points.push((u, s)),
                _ => {
                    return Err(RiskError::InvalidSpectrum(format!(
                        "{}:{}: expected `u,sigma`",
                        path.display(),
                        n + 1
                    )))
                }
            }
        }
        let mut table = Self::new(points)?;
        table.source = Some(path.to_path_buf());
        Ok(table)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn segment(&self, u: f64) -> usize {
        let k = self.points.partition_point(|&(x, _)| x <= u);
        k.saturating_sub(1).min(self.points.len() - 2)
    }

    fn eval(&self, u: f64) -> f64 {
        let k = self.segment(u);
        let (u0, s0) = self.points[k];
        let (u1, s1) = self.points[k + 1];
        s0 + (s1 - s0) * (u - u0) / (u1 - u0)
    }

    fn cumulative(&self, u: f64) -> f64 {
        let k = self.segment(u);
        let (u0, s0) = self.points[k];
        let s = self.eval(u);
        self.integral[k] + 0.5 * (s0 + s) * (u - u0)
    }

    fn inverse(&self, y: f64) -> f64 {
        if y <= self.points[0].1 {
            return 0.0;
        }
        for w in self.points.windows(2) {
            let ((u0, s0), (u1, s1)) = (w[0], w[1]);
            if y <= s1 {
                return if s1 > s0 {
                    u0 + (y - s0) / (s1 - s0) * (u1 - u0)
                } else {
                    u0
                };
            }
        }
        1.0
    }
}

/// A step-function spectrum: level `levels[k]` on the k-th segment between
/// consecutive `breakpoints` (with 0 and 1 as the outer ends).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedSpectrum {
    levels: Vec<f64>,
    breakpoints: Vec<f64>,
}

impl DiscretizedSpectrum {
    pub fn new(levels: Vec<f64>, breakpoints: Vec<f64>) -> Result<Self, RiskError> {
        let bad = |msg: String| Err(RiskError::InvalidSpectrum(msg));
        if levels.is_empty() {
            return bad("no levels".into());
        }
        if breakpoints.len() + 1 != levels.len() {
            return bad(format!(
                "{} levels need {} breakpoints, got {}",
                levels.len(),
                levels.len() - 1,
                breakpoints.len()
            ));
        }
        if levels.iter().chain(&breakpoints).any(|v| !v.is_finite()) {
            return bad("non-finite entry".into());
        }
        if levels[0] < 0.0 || levels.windows(2).any(|w| w[0] > w[1]) {
            return bad(format!("levels must be non-negative and non-decreasing: {levels:?}"));
        }
        if breakpoints.iter().any(|a| !(0.0..=1.0).contains(a)) || breakpoints.windows(2).any(|w| w[0] > w[1]) {
            return bad(format!("breakpoints must be non-decreasing in [0, 1]: {breakpoints:?}"));
        }
        let disc = Self { levels, breakpoints };
        let total = disc.integral();
        if (total - 1.0).abs() > UNIT_TOL {
            return bad(format!("integrates to {total}, expected 1"));
        }
        Ok(disc)
    }

    /// The risk-neutral spectrum σ̃ ≡ 1.
    pub fn identity() -> Self {
        Self {
            levels: vec![1.0],
            breakpoints: Vec::new(),
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// η₁ + Σᵢ (ηᵢ₊₁ - ηᵢ)(1 - αᵢ).
    pub fn integral(&self) -> f64 {
        self.levels[0]
            + self
                .breakpoints
                .iter()
                .enumerate()
                .map(|(i, a)| (self.levels[i + 1] - self.levels[i]) * (1.0 - a))
                .sum::<f64>()
    }

    /// σ̃(u), right-continuous at breakpoints.
    pub fn eval(&self, u: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&a| a <= u);
        self.levels[k]
    }

    /// Two comma-separated lines: levels, then breakpoints.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        format!("{}\n{}\n", join(&self.levels), join(&self.breakpoints))
    }

    pub fn from_text(text: &str) -> Result<Self, RiskError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.starts_with('#'));
        let parse_line = |line: Option<&str>| -> Result<Vec<f64>, RiskError> {
            let line = line.ok_or_else(|| RiskError::Parse("missing line".into()))?;
            line.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| RiskError::Parse(format!("bad number `{s}`"))))
                .collect()
        };
        let levels = parse_line(lines.next())?;
        let breakpoints = parse_line(lines.next().or(Some("")))?;
        Self::new(levels, breakpoints)
    }
}

impl SpectralMeasure for DiscretizedSpectrum {
    fn cumulative(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let mut lo = 0.0;
        let mut total = 0.0;
        for (k, &eta) in self.levels.iter().enumerate() {
            let hi = self.breakpoints.get(k).copied().unwrap_or(1.0);
            if u <= lo {
                break;
            }
            total += eta * (u.min(hi) - lo);
            lo = hi;
        }
        total
    }
}
