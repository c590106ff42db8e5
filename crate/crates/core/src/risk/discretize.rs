use super::{DiscretizedSpectrum, RiskError, SpectralMeasure, Spectrum};

const MAX_SWEEPS: usize = 20_000;
const SWEEP_TOL: f64 = 1e-14;
const MU_BOUND: f64 = 0.99;

/// Step-function approximation of `spec` with `m` levels minimizing the L1
/// distance ∫|σ - σ̃| subject to the unit-integral constraint.
///
/// With multiplier μ on the constraint the stationarity conditions are:
/// each level sits at the (1 - μ)/2 quantile of σ over its segment, and each
/// breakpoint is where σ crosses the midpoint of the adjacent levels shifted
/// by μ times half their gap. For fixed μ these are solved by alternating
/// sweeps; μ is then found by bisection on the integral residual.
pub fn discretize(spec: &Spectrum, m: usize) -> Result<DiscretizedSpectrum, RiskError> {
    if m == 0 {
        return Err(RiskError::InvalidSpectrum("need at least one level".into()));
    }
    if m == 1 {
        return Ok(DiscretizedSpectrum::identity());
    }
    if spec.is_constant() {
        let breakpoints = (1..m).map(|k| k as f64 / m as f64).collect();
        return DiscretizedSpectrum::new(vec![1.0; m], breakpoints);
    }
    if let Spectrum::Cvar { alpha } = spec {
        return DiscretizedSpectrum::new(vec![0.0, 1.0 / (1.0 - alpha)], vec![*alpha]);
    }

    let residual = |mu: f64| {
        let (levels, breakpoints) = sweeps(spec, m, mu);
        integral(&levels, &breakpoints) - 1.0
    };
    let (mut lo, mut hi) = (-MU_BOUND, MU_BOUND);
    let (mut r_lo, r_hi) = (residual(lo), residual(hi));
    if r_lo.signum() == r_hi.signum() {
        let residual = if r_lo.abs() < r_hi.abs() { r_lo } else { r_hi };
        return Err(RiskError::NoConvergence { residual });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid);
        if r.signum() == r_lo.signum() {
            lo = mid;
            r_lo = r;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let (levels, breakpoints) = sweeps(spec, m, mu);
    let total = integral(&levels, &breakpoints);
    if (total - 1.0).abs() > 1e-6 {
        return Err(RiskError::NoConvergence { residual: total - 1.0 });
    }
    log::debug!("discretize {spec} M={m}: multiplier {mu:.6}");
    let levels = levels.into_iter().map(|l| l / total).collect();
    DiscretizedSpectrum::new(levels, breakpoints)
}

fn sweeps(spec: &Spectrum, m: usize, mu: f64) -> (Vec<f64>, Vec<f64>) {
    let q = 0.5 * (1.0 - mu);
    let mut breakpoints: Vec<f64> = (1..m).map(|k| k as f64 / m as f64).collect();
    let mut levels = vec![0.0; m];
    for _ in 0..MAX_SWEEPS {
        for (k, level) in levels.iter_mut().enumerate() {
            let a = if k == 0 { 0.0 } else { breakpoints[k - 1] };
            let b = breakpoints.get(k).copied().unwrap_or(1.0);
            // Interior point, so the Wang spectrum stays finite.
            *level = spec.eval(a + q * (b - a)).unwrap_or(f64::MAX);
        }
        let mut change: f64 = 0.0;
        for (k, bp) in breakpoints.iter_mut().enumerate() {
            let target = 0.5 * (levels[k] + levels[k + 1]) + 0.5 * mu * (levels[k + 1] - levels[k]);
            let next = spec.inverse(target);
            change = change.max((next - *bp).abs());
            *bp = next;
        }
        if change < SWEEP_TOL {
            break;
        }
    }
    (levels, breakpoints)
}

fn integral(levels: &[f64], breakpoints: &[f64]) -> f64 {
    levels[0]
        + breakpoints
            .iter()
            .enumerate()
            .map(|(i, a)| (levels[i + 1] - levels[i]) * (1.0 - a))
            .sum::<f64>()
}

/// ∫₀¹ |σ(u) - σ̃(u)| du, exact for non-decreasing σ.
pub fn l1_error(spec: &Spectrum, disc: &DiscretizedSpectrum) -> f64 {
    let levels = disc.levels();
    let breakpoints = disc.breakpoints();
    let mut total = 0.0;
    for (k, &eta) in levels.iter().enumerate() {
        let a = if k == 0 { 0.0 } else { breakpoints[k - 1] };
        let b = breakpoints.get(k).copied().unwrap_or(1.0);
        let c = spec.inverse(eta).clamp(a, b);
        let (sa, sb, sc) = (spec.cumulative(a), spec.cumulative(b), spec.cumulative(c));
        total += eta * (c - a) - (sc - sa) + (sb - sc) - eta * (b - c);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(got: &[f64], want: &[f64], tol: f64) -> bool {
        got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
    }

    #[test]
    fn pow_half_is_uniform_staircase() {
        let d = discretize(&Spectrum::Pow { alpha: 0.5 }, 5).unwrap();
        assert!(close(d.levels(), &[0.2, 0.6, 1.0, 1.4, 1.8], 1e-9), "{:?}", d.levels());
        assert!(close(d.breakpoints(), &[0.2, 0.4, 0.6, 0.8], 1e-9));
    }

    #[test]
    fn wang_half_reference_values() {
        let d = discretize(&Spectrum::Wang { alpha: 0.5 }, 5).unwrap();
        assert!(
            close(d.levels(), &[0.515, 0.790, 1.091, 1.493, 2.191], 2e-2),
            "{:?}",
            d.levels()
        );
        assert!(
            close(d.breakpoints(), &[0.263, 0.541, 0.770, 0.926], 2e-2),
            "{:?}",
            d.breakpoints()
        );
    }

    #[test]
    fn cvar_is_exact() {
        for m in [2, 5, 10] {
            let d = discretize(&Spectrum::Cvar { alpha: 0.75 }, m).unwrap();
            assert_eq!(d.levels(), &[0.0, 4.0]);
            assert_eq!(d.breakpoints(), &[0.75]);
        }
    }

    #[test]
    fn single_level_is_neutral() {
        let d = discretize(&Spectrum::Pow { alpha: 0.9 }, 1).unwrap();
        assert_eq!(d, DiscretizedSpectrum::identity());
        let d = discretize(&Spectrum::Cvar { alpha: 0.0 }, 3).unwrap();
        assert_eq!(d.levels(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn error_shrinks_with_more_levels() {
        for spec in [Spectrum::Pow { alpha: 0.75 }, Spectrum::Wang { alpha: 1.0 }] {
            let errs: Vec<f64> = [2, 4, 8, 16]
                .iter()
                .map(|&m| l1_error(&spec, &discretize(&spec, m).unwrap()))
                .collect();
            assert!(errs.windows(2).all(|w| w[1] < w[0]), "{spec}: {errs:?}");
        }
    }

    #[test]
    fn solver_beats_naive_uniform_grid() {
        let spec = Spectrum::Wang { alpha: 0.5 };
        let d = discretize(&spec, 5).unwrap();
        // Uniform breakpoints with segment-median levels, rescaled.
        let raw: Vec<f64> = (0..5).map(|k| spec.eval((k as f64 + 0.5) / 5.0).unwrap()).collect();
        let mean = raw.iter().sum::<f64>() / 5.0;
        let naive = DiscretizedSpectrum::new(raw.iter().map(|l| l / mean).collect(), vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        assert!(l1_error(&spec, &d) < l1_error(&spec, &naive));
    }
}
