//! Small dense QP duals solved by enumerating active sets.
//!
//! All problems here are expressed through the Gram matrix of the gradients
//! in the Fisher metric, K_jk = ∇J_jᵀ F† ∇J_k, so no Fisher matrix is formed.

use nalgebra::{DMatrix, DVector};

/// Largest number of multipliers accepted by the enumeration (2^MAX subsets).
pub const MAX_MULTIPLIERS: usize = 12;

fn scale_tol(g: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    let big = g.iter().chain(c.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    1e-10 * (1.0 + big)
}

/// Solves `G_SS x = rhs` through an SVD pseudo-inverse, returning `None`
/// when the system is inconsistent.
fn solve_sub(g: &DMatrix<f64>, rhs: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let svd = g.clone().svd(true, true);
    let x = svd.solve(rhs, tol * 1e-2).ok()?;
    let residual = (g * &x - rhs).amax();
    (residual <= tol * 10.0).then_some(x)
}

fn subset(indices: &[usize], g: &DMatrix<f64>, c: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let k = indices.len();
    let sub_g = DMatrix::from_fn(k, k, |r, col| g[(indices[r], indices[col])]);
    let sub_c = DVector::from_fn(k, |r, _| c[indices[r]]);
    (sub_g, sub_c)
}

/// Maximizes q(z) = -½ zᵀGz + cᵀz over z ≥ 0 for a positive semidefinite G.
///
/// Every subset of active multipliers is tried; a subset is accepted when its
/// stationary point is non-negative and no inactive multiplier wants to grow.
/// Returns `None` when no KKT point exists (q unbounded above).
pub fn maximize_nonneg_concave(g: &DMatrix<f64>, c: &DVector<f64>) -> Option<DVector<f64>> {
    let n = c.len();
    assert!(n <= MAX_MULTIPLIERS, "too many multipliers for enumeration");
    let tol = scale_tol(g, c);
    let objective = |z: &DVector<f64>| -0.5 * z.dot(&(g * z)) + c.dot(z);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let active: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) != 0).collect();
        let mut z = DVector::zeros(n);
        if !active.is_empty() {
            let (sub_g, sub_c) = subset(&active, g, c);
            let Some(x) = solve_sub(&sub_g, &sub_c, tol) else {
                continue;
            };
            if x.iter().any(|&v| v < -tol) {
                continue;
            }
            for (k, &j) in active.iter().enumerate() {
                z[j] = x[k].max(0.0);
            }
        }
        let grad = c - g * &z;
        if (0..n).any(|j| mask & (1 << j) == 0 && grad[j] > tol) {
            continue;
        }
        // Ties (singular G) go to the minimum-norm multipliers.
        let value = objective(&z);
        let better = match &best {
            None => true,
            Some((v, b)) => value > *v + tol || (value >= *v - tol && z.norm() < b.norm() - tol),
        };
        if better {
            best = Some((value, z));
        }
    }
    best.map(|(_, z)| z)
}

/// Multipliers of the linear-quadratic problem
///
/// max ∇Rᵀg  s.t.  ∇C_iᵀg + c_i ≤ 0,  gᵀFg ≤ radius²
///
/// in the form g* = F†(∇R − Σλ∇C)/ν. `k` is the Gram matrix ordered
/// (reward, costs...). Requires c ≤ 0 so that g = 0 is feasible.
/// Returns `(λ, ν)`, or `None` when the reward gradient lies in the span of
/// the active cost gradients (no unique trust-region solution).
pub fn linear_trust_region_multipliers(k: &DMatrix<f64>, c: &DVector<f64>, radius: f64) -> Option<(DVector<f64>, f64)> {
    let n = c.len();
    assert!(n < MAX_MULTIPLIERS, "too many multipliers for enumeration");
    let tol = scale_tol(k, c);
    let k_rr = k[(0, 0)];
    let mut best: Option<(f64, DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << n) {
        let active: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) != 0).collect();
        let mut lambda = DVector::zeros(n);
        let nu;
        if active.is_empty() {
            if k_rr <= tol {
                continue;
            }
            nu = k_rr.sqrt() / radius;
        } else {
            let shifted: Vec<usize> = active.iter().map(|j| j + 1).collect();
            let (k_ss, _) = subset(&shifted, k, &DVector::zeros(k.nrows()));
            let k_sr = DVector::from_fn(active.len(), |r, _| k[(shifted[r], 0)]);
            let c_s = DVector::from_fn(active.len(), |r, _| c[active[r]]);
            let Some(l0) = solve_sub(&k_ss, &k_sr, tol) else {
                continue;
            };
            let Some(l1) = solve_sub(&k_ss, &c_s, tol) else {
                continue;
            };
            // With K_SS λ0 = K_SR the Fisher norm of νg is a + ν²b.
            let a = k_rr - l0.dot(&k_sr);
            let b = l1.dot(&c_s);
            let denom = radius * radius - b;
            if a <= tol || denom <= 0.0 {
                continue;
            }
            nu = (a / denom).sqrt();
            let l = &l0 + &l1 * nu;
            if l.iter().any(|&v| v < -tol) {
                continue;
            }
            for (r, &j) in active.iter().enumerate() {
                lambda[j] = l[r].max(0.0);
            }
        }
        // Inactive constraints must hold at g = F†(∇R − Σλ∇C)/ν.
        let ok = (0..n).filter(|j| mask & (1 << j) == 0).all(|j| {
            let slope = (k[(j + 1, 0)] - (0..n).map(|m| lambda[m] * k[(j + 1, m + 1)]).sum::<f64>()) / nu;
            slope + c[j] <= tol * (1.0 + 1.0 / nu)
        });
        if !ok {
            continue;
        }
        let gain = (k_rr - (0..n).map(|m| lambda[m] * k[(0, m + 1)]).sum::<f64>()) / nu;
        if best.as_ref().is_none_or(|(v, _, _)| gain > *v + tol) {
            best = Some((gain, lambda, nu));
        }
    }
    best.map(|(_, l, nu)| (l, nu))
}
