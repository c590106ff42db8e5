//! Samplers over the dual variable β.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normal::TruncatedNormal;
use crate::risk::BetaParam;

/// Damping added to the diagonal Fisher estimate of the stick sampler.
pub const FISHER_DAMPING: f64 = 1e-8;
pub const STICK_STD: f64 = 0.05;

#[derive(Debug, Error)]
pub enum OuterError {
    #[error("constraint {0} has an empty β list")]
    EmptyList(usize),
    #[error("β grid needs at least one constraint")]
    NoConstraints,
    #[error("β entries for constraint {constraint} have length {got}, expected {expected}")]
    Length {
        constraint: usize,
        expected: usize,
        got: usize,
    },
    #[error("expected {expected} scores, got {got}")]
    ScoreCount { expected: usize, got: usize },
}

/// Per-constraint lists of β values; the joint grid is their product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaGrid {
    lists: Vec<Vec<BetaParam>>,
}

impl BetaGrid {
    pub fn new(lists: Vec<Vec<BetaParam>>) -> Result<Self, OuterError> {
        if lists.is_empty() {
            return Err(OuterError::NoConstraints);
        }
        for (i, list) in lists.iter().enumerate() {
            let first = list.first().ok_or(OuterError::EmptyList(i))?;
            if let Some(bad) = list.iter().find(|b| b.len() != first.len()) {
                return Err(OuterError::Length {
                    constraint: i,
                    expected: first.len(),
                    got: bad.len(),
                });
            }
        }
        Ok(Self { lists })
    }

    pub fn lists(&self) -> &[Vec<BetaParam>] {
        &self.lists
    }

    pub fn len(&self) -> usize {
        self.lists.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Joint point `k`, with the first constraint varying fastest.
    pub fn point(&self, mut k: usize) -> Vec<BetaParam> {
        self.lists
            .iter()
            .map(|list| {
                let b = list[k % list.len()].clone();
                k /= list.len();
                b
            })
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<BetaParam>> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Index of the grid point nearest to `betas` (L1 distance per constraint).
    pub fn nearest(&self, betas: &[BetaParam]) -> usize {
        let mut k = 0;
        let mut stride = 1;
        for (list, beta) in self.lists.iter().zip(betas) {
            let dist = |b: &BetaParam| -> f64 {
                b.as_slice()
                    .iter()
                    .zip(beta.as_slice())
                    .map(|(x, y)| (x - y).abs())
                    .sum()
            };
            let best = (0..list.len())
                .min_by(|&a, &b| dist(&list[a]).total_cmp(&dist(&list[b])))
                .expect("non-empty list");
            k += best * stride;
            stride *= list.len();
        }
        k
    }
}

/// J(π; β) = J_R − K Σ (J_{C_i} − d_i)₊.
pub fn target_score(j_r: f64, j_c: &[f64], d: &[f64], k: f64) -> f64 {
    j_r - k * j_c.iter().zip(d).map(|(c, d)| (c - d).max(0.0)).sum::<f64>()
}

/// Softmax distribution over the points of a [`BetaGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSampler {
    phi: Vec<f64>,
}

impl FiniteSampler {
    pub fn uniform(n: usize) -> Self {
        Self { phi: vec![0.0; n] }
    }

    pub fn from_logits(phi: Vec<f64>) -> Self {
        Self { phi }
    }

    pub fn logits(&self) -> &[f64] {
        &self.phi
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn probs(&self) -> Vec<f64> {
        let top = self.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.phi.iter().map(|p| (p - top).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// φ(β) ← φ(β) + α·J(π_β; β).
    pub fn step(&mut self, scores: &[f64], alpha: f64) -> Result<(), OuterError> {
        if scores.len() != self.phi.len() {
            return Err(OuterError::ScoreCount {
                expected: self.phi.len(),
                got: scores.len(),
            });
        }
        // Shifting by the mean keeps logits bounded without changing ξ.
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        for (p, s) in self.phi.iter_mut().zip(scores) {
            *p += alpha * (s - mean);
        }
        Ok(())
    }

    /// Most likely grid index (lowest index on ties).
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.phi.iter().enumerate() {
            if p > self.phi[best] {
                best = k;
            }
        }
        best
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let probs = self.probs();
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        probs.len() - 1
    }
}

/// Shannon entropy of ξ in nats.
pub fn sampler_entropy(sampler: &FiniteSampler) -> f64 {
    sampler.probs().iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum()
}

/// One draw from a [`StickSampler`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickDraw {
    pub betas: Vec<BetaParam>,
    pub log_density: f64,
    /// ∂ log density / ∂φ[i][j].
    pub grad_log: Vec<Vec<f64>>,
}

/// β_i[j] = Σ_{k≤j} Δ_i[k] with Δ_i[k] ~ N(exp φ[i][k], std²) truncated to
/// [0, upper_i]. Partial sums are clamped at upper_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickSampler {
    phi: Vec<Vec<f64>>,
    std: f64,
    upper: Vec<f64>,
}

impl StickSampler {
    /// `lens[i]` increments on constraint i, all means starting at `init_mean`.
    pub fn new(lens: &[usize], upper: Vec<f64>, init_mean: f64) -> Self {
        assert_eq!(lens.len(), upper.len());
        let phi = lens.iter().map(|&n| vec![init_mean.max(1e-12).ln(); n]).collect();
        Self {
            phi,
            std: STICK_STD,
            upper,
        }
    }

    pub fn with_std(mut self, std: f64) -> Self {
        self.std = std;
        self
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        &self.phi
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.phi
            .iter()
            .map(|row| row.iter().map(|p| p.exp()).collect())
            .collect()
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn increment(&self, i: usize, j: usize) -> TruncatedNormal {
        TruncatedNormal::new(self.phi[i][j].exp(), self.std, 0.0, self.upper[i])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StickDraw {
        let mut betas = Vec::with_capacity(self.phi.len());
        let mut grad_log = Vec::with_capacity(self.phi.len());
        let mut log_density = 0.0;
        for i in 0..self.phi.len() {
            let mut sum = 0.0;
            let mut beta = Vec::with_capacity(self.phi[i].len());
            let mut grad = Vec::with_capacity(self.phi[i].len());
            for j in 0..self.phi[i].len() {
                let dist = self.increment(i, j);
                let delta = dist.sample(rng);
                log_density += dist.log_pdf(delta);
                // μ = exp φ, so ∂/∂φ = μ ∂/∂μ.
                grad.push(dist.mean * dist.dlog_pdf_dmean(delta));
                sum += delta;
                beta.push(sum.min(self.upper[i]));
            }
            betas.push(BetaParam(beta));
            grad_log.push(grad);
        }
        StickDraw {
            betas,
            log_density,
            grad_log,
        }
    }

    /// Log density and its φ-gradient at given β values (increments are
    /// recovered as successive differences).
    pub fn log_density_grad(&self, betas: &[BetaParam]) -> (f64, Vec<Vec<f64>>) {
        let mut log_density = 0.0;
        let grad = betas
            .iter()
            .enumerate()
            .map(|(i, beta)| {
                let mut prev = 0.0;
                beta.as_slice()
                    .iter()
                    .enumerate()
                    .map(|(j, &b)| {
                        let delta = (b - prev).clamp(0.0, self.upper[i]);
                        prev = b;
                        let dist = self.increment(i, j);
                        log_density += dist.log_pdf(delta);
                        dist.mean * dist.dlog_pdf_dmean(delta)
                    })
                    .collect()
            })
            .collect();
        (log_density, grad)
    }

    /// Sum of the increments' differential entropies.
    pub fn entropy(&self) -> f64 {
        (0..self.phi.len())
            .flat_map(|i| (0..self.phi[i].len()).map(move |j| (i, j)))
            .map(|(i, j)| self.increment(i, j).entropy())
            .sum()
    }

    /// β built from the increments' modes.
    pub fn modal_betas(&self) -> Vec<BetaParam> {
        self.phi
            .iter()
            .zip(&self.upper)
            .map(|(row, &hi)| {
                let mut sum = 0.0;
                BetaParam(
                    row.iter()
                        .map(|p| {
                            sum += p.exp().clamp(0.0, hi);
                            sum.min(hi)
                        })
                        .collect(),
                )
            })
            .collect()
    }

    /// Uniform exploration draw: β_i[j] ~ U(β_i[j-1], upper_i), β_i[0] = 0.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<BetaParam> {
        self.phi
            .iter()
            .zip(&self.upper)
            .map(|(row, &hi)| {
                let mut prev = 0.0;
                BetaParam(
                    row.iter()
                        .map(|_| {
                            prev = if prev < hi { rng.gen_range(prev..hi) } else { hi };
                            prev
                        })
                        .collect(),
                )
            })
            .collect()
    }

    /// Score-function ascent on φ with a batch-mean baseline, preconditioned
    /// by the diagonal empirical Fisher. Returns the applied φ change.
    pub fn step(&mut self, batch: &[(Vec<Vec<f64>>, f64)], alpha: f64) -> Vec<Vec<f64>> {
        let mut delta: Vec<Vec<f64>> = self.phi.iter().map(|r| vec![0.0; r.len()]).collect();
        if batch.is_empty() {
            return delta;
        }
        let n = batch.len() as f64;
        let baseline = batch.iter().map(|b| b.1).sum::<f64>() / n;
        for i in 0..self.phi.len() {
            for j in 0..self.phi[i].len() {
                let grad = batch.iter().map(|(g, s)| g[i][j] * (s - baseline)).sum::<f64>() / n;
                let fisher = batch.iter().map(|(g, _)| g[i][j] * g[i][j]).sum::<f64>() / n + FISHER_DAMPING;
                delta[i][j] = alpha * grad / fisher;
                self.phi[i][j] += delta[i][j];
            }
        }
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn target_score_examples() {
        assert_eq!(target_score(3.0, &[0.1, 0.2], &[0.5, 0.5], 10.0), 3.0);
        assert!((target_score(1.0, &[0.7], &[0.5], 10.0) + 1.0).abs() < 1e-12);
        assert_eq!(target_score(1.0, &[5.0], &[0.5], 0.0), 1.0);
    }

    #[test]
    fn finite_sampler_examples() {
        let mut s = FiniteSampler::uniform(2);
        s.step(&[1.0, 0.0], 1.0).unwrap();
        let p = s.probs();
        assert!((p[0] - 0.7310585786300049).abs() < 1e-12);
        let mut flat = FiniteSampler::uniform(3);
        flat.step(&[2.0, 2.0, 2.0], 0.5).unwrap();
        assert_eq!(flat.probs(), FiniteSampler::uniform(3).probs());
        let mut s = FiniteSampler::uniform(2);
        for _ in 0..100 {
            s.step(&[0.3, 0.0], 0.01).unwrap();
        }
        let log_odds = s.logits()[0] - s.logits()[1];
        assert!((log_odds - 0.01 * 0.3 * 100.0).abs() < 1e-12);
        assert!(s.step(&[1.0], 1.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!((sampler_entropy(&FiniteSampler::uniform(4)) - 4f64.ln()).abs() < 1e-12);
        let one_hot = FiniteSampler::from_logits(vec![0.0, -1e4, -1e4]);
        assert!(sampler_entropy(&one_hot).abs() < 1e-12);
        let half = FiniteSampler::from_logits(vec![0.0, 0.0, -1e4, -1e4]);
        assert!((sampler_entropy(&half) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn grid_indexing() {
        let grid = BetaGrid::new(vec![
            vec![BetaParam(vec![0.0]), BetaParam(vec![1.0])],
            vec![
                BetaParam(vec![0.0, 1.0]),
                BetaParam(vec![1.0, 2.0]),
                BetaParam(vec![2.0, 2.0]),
            ],
        ])
        .unwrap();
        assert_eq!(grid.len(), 6);
        assert_eq!(grid.point(3), vec![BetaParam(vec![1.0]), BetaParam(vec![1.0, 2.0])]);
        for k in 0..6 {
            assert_eq!(grid.nearest(&grid.point(k)), k);
        }
        assert!(BetaGrid::new(vec![vec![]]).is_err());
    }

    #[test]
    fn equal_scores_do_not_move_the_stick_sampler() {
        let mut s = StickSampler::new(&[2], vec![5.0], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch: Vec<_> = (0..8).map(|_| (s.sample(&mut rng).grad_log, 1.5)).collect();
        let before = s.clone();
        s.step(&batch, 0.1);
        assert_eq!(s, before);
        let single = vec![(s.sample(&mut rng).grad_log, 3.0)];
        s.step(&single, 0.1);
        assert_eq!(s, before);
    }

    #[test]
    fn increment_mean_matches_truncated_moment() {
        let s = StickSampler::new(&[1], vec![0.1], 0.02);
        let dist = TruncatedNormal::new(0.02, STICK_STD, 0.0, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| s.sample(&mut rng).betas[0].0[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - dist.mean_value()).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn density_gradient_matches_draw() {
        let s = StickSampler::new(&[3], vec![2.0], 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = s.sample(&mut rng);
        let (log_density, grad) = s.log_density_grad(&d.betas);
        assert!((log_density - d.log_density).abs() < 1e-9);
        for (a, b) in grad[0].iter().zip(&d.grad_log[0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn entropy_of_wide_truncation_is_gaussian() {
        let s = StickSampler::new(&[1], vec![10.0], 5.0);
        let gaussian = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + STICK_STD.ln();
        assert!((s.entropy() - gaussian).abs() < 1e-9);
        assert!((s.modal_betas()[0].0[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        let s = StickSampler::new(&[1], vec![0.3], 0.1);
        let dist = s.increment(0, 0);
        let n = 200_000;
        let h = 0.3 / n as f64;
        // Simpson's rule.
        let mut total = dist.log_pdf(0.0).exp() + dist.log_pdf(0.3).exp();
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            total += w * dist.log_pdf(k as f64 * h).exp();
        }
        assert!((total * h / 3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn stick_sampler_finds_quadratic_peak() {
        let mut s = StickSampler::new(&[1], vec![10.0], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..2000 {
            let batch: Vec<_> = (0..16)
                .map(|_| {
                    let d = s.sample(&mut rng);
                    let b = d.betas[0].0[0];
                    (d.grad_log, -(b - 2.0) * (b - 2.0))
                })
                .collect();
            s.step(&batch, 0.5);
        }
        assert!((s.means()[0][0] - 2.0).abs() < 0.1, "{:?}", s.means());
    }

    proptest! {
        #[test]
        fn draws_are_monotone(seed in 0u64..1000, m0 in 0.01f64..3.0) {
            let s = StickSampler::new(&[4, 2], vec![2.0, 1.0], m0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let d = s.sample(&mut rng);
                for (b, hi) in d.betas.iter().zip(s.upper()) {
                    prop_assert!(b.0.windows(2).all(|w| w[0] <= w[1]));
                    prop_assert!(b.0.iter().all(|&x| (0.0..=*hi).contains(&x)));
                }
                let u = s.sample_uniform(&mut rng);
                prop_assert!(u.iter().all(|b| b.0.windows(2).all(|w| w[0] <= w[1])));
            }
        }

        #[test]
        fn score_shift_invariance(shift in -50.0f64..50.0) {
            let mut a = FiniteSampler::uniform(3);
            let mut b = FiniteSampler::uniform(3);
            a.step(&[1.0, 0.5, -0.2], 0.1).unwrap();
            b.step(&[1.0 + shift, 0.5 + shift, -0.2 + shift], 0.1).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
