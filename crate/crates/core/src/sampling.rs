//! Seedable randomness.
//!
//! Every random decision in the crate goes through [`Rng`], a thin wrapper
//! over ChaCha8 with hand-written conversions to floats, bounded integers,
//! normals and Beta variates. The conversions live here (rather than in a
//! distribution crate) so that a seed pins the complete draw sequence.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::pointcloud::{Point3, PointCloud, SaliencyMap};
use crate::{Error, Result};

/// Clamp margin applied to Beta draws so mixing ratios never hit 0 or 1.
pub const BETA_EPS: f64 = 1e-9;

/// Deterministic generator constructed from a 64-bit seed.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

/// Indices of the two query points, one per cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryPair {
    pub alpha: usize,
    pub beta: usize,
}

impl QueryPair {
    pub fn swapped(self) -> QueryPair {
        QueryPair {
            alpha: self.beta,
            beta: self.alpha,
        }
    }
}

/// Derives an independent child seed, used to hand one generator to each
/// worker or each mixed pair.
pub fn split_seed(parent: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a combination of both inputs
    let mut z = parent
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Generator for the `index`-th child of `seed`.
    pub fn child(seed: u64, index: u64) -> Self {
        Self::seed_from_u64(split_seed(seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Unbiased integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let range = n as u64;
        let zone = u64::MAX - (u64::MAX - range + 1) % range;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % range) as usize;
            }
        }
    }

    /// Standard normal draw (Marsaglia polar method).
    pub fn normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    /// `k` distinct indices from `0..n`, uniformly, in draw order.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }

    /// Beta(a, b) variate. Jöhnk's method when either shape is at most 1,
    /// Cheng's BB otherwise.
    pub fn beta(&mut self, a: f64, b: f64) -> f64 {
        if a > 1.0 && b > 1.0 {
            self.beta_cheng(a, b)
        } else {
            self.beta_johnk(a, b)
        }
    }

    fn beta_johnk(&mut self, a: f64, b: f64) -> f64 {
        // Work with logs of u^(1/a) and v^(1/b): both underflow for small
        // shapes long before their ratio becomes ill-defined.
        loop {
            let lx = self.uniform_open().ln() / a;
            let ly = self.uniform_open().ln() / b;
            let m = lx.max(ly);
            let ex = (lx - m).exp();
            let ey = (ly - m).exp();
            let sum = ex + ey;
            if m + sum.ln() <= 0.0 {
                return ex / sum;
            }
        }
    }

    fn beta_cheng(&mut self, a: f64, b: f64) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let alpha = lo + hi;
        let beta = ((alpha - 2.0) / (2.0 * lo * hi - alpha)).sqrt();
        let gamma = lo + 1.0 / beta;
        let ln4 = 4f64.ln();
        loop {
            let u1 = self.uniform_open();
            let u2 = self.uniform_open();
            let v = beta * (u1 / (1.0 - u1)).ln();
            let w = lo * v.exp();
            let z = u1 * u1 * u2;
            let r = gamma * v - ln4;
            let s = lo + r - w;
            let accept = s + 2.609_437_912_434_100_4 >= 5.0 * z || {
                let t = z.ln();
                s > t || r + alpha * (alpha / (hi + w)).ln() >= t
            };
            if accept {
                return if lo == a { w / (hi + w) } else { hi / (hi + w) };
            }
        }
    }
}

/// Draws index `i` with probability `weights[i] / sum(weights)` by inverting
/// the cumulative sum at a single uniform draw.
pub fn categorical_sample(weights: &[f64], rng: &mut Rng) -> Result<usize> {
    if weights.is_empty() {
        return Err(Error::invalid("categorical_sample: empty weight vector"));
    }
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::invalid(format!(
                "categorical_sample: weight {i} is {w}"
            )));
        }
        total += w;
        cumulative.push(total);
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::invalid(
            "categorical_sample: weights must have a positive finite sum",
        ));
    }
    let target = rng.uniform() * total;
    // first index whose cumulative mass exceeds the target; zero-weight
    // entries never satisfy the strict inequality
    let idx = cumulative.partition_point(|&c| c <= target);
    if idx < weights.len() {
        Ok(idx)
    } else {
        // u * total rounded up to total
        Ok(weights.iter().rposition(|&w| w > 0.0).unwrap())
    }
}

fn categorical_or_uniform(weights: &[f64], rng: &mut Rng) -> usize {
    let any_positive = weights.iter().any(|&w| w > 0.0);
    if any_positive {
        if let Ok(i) = categorical_sample(weights, rng) {
            return i;
        }
    }
    rng.below(weights.len())
}

/// Draws the first query index with probability proportional to saliency.
/// All-zero saliency falls back to a uniform draw.
pub fn sample_query_alpha(saliency: &SaliencyMap, rng: &mut Rng) -> usize {
    categorical_or_uniform(saliency.scores(), rng)
}

/// Draws the second query index with probability proportional to
/// `‖p_i − q_alpha‖ · s_i`, pushing it away from the first query.
pub fn sample_query_beta(
    cloud_b: &PointCloud,
    saliency_b: &SaliencyMap,
    q_alpha: Point3,
    rng: &mut Rng,
) -> Result<usize> {
    if cloud_b.len() != saliency_b.len() {
        return Err(Error::invalid(format!(
            "sample_query_beta: cloud has {} points but saliency has {}",
            cloud_b.len(),
            saliency_b.len()
        )));
    }
    if !q_alpha.is_finite() {
        return Err(Error::invalid("sample_query_beta: non-finite query point"));
    }
    let weights: Vec<f64> = cloud_b
        .points()
        .iter()
        .zip(saliency_b.scores())
        .map(|(p, &s)| p.distance(&q_alpha) * s)
        .collect();
    Ok(categorical_or_uniform(&weights, rng))
}

/// Symmetric Beta(θ, θ) draw clamped into `(BETA_EPS, 1 − BETA_EPS)`.
pub fn sample_beta(theta: f64, rng: &mut Rng) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::invalid(format!(
            "sample_beta: theta must be positive, got {theta}"
        )));
    }
    Ok(rng.beta(theta, theta).clamp(BETA_EPS, 1.0 - BETA_EPS))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frequencies(n: usize, draws: usize, mut f: impl FnMut() -> usize) -> Vec<f64> {
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            counts[f()] += 1;
        }
        counts.iter().map(|&c| c as f64 / draws as f64).collect()
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Rng::seed_from_u64(7);
        let mut b = Rng::seed_from_u64(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_ne!(split_seed(7, 0), split_seed(7, 1));
    }

    #[test]
    fn uniform_ranges() {
        let mut rng = Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            let o = rng.uniform_open();
            assert!(o > 0.0 && o < 1.0);
            assert!(rng.below(3) < 3);
        }
    }

    #[test]
    fn single_support_point() {
        let mut rng = Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(categorical_sample(&[0.0, 0.0, 5.0, 0.0], &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn categorical_rejects_bad_weights() {
        let mut rng = Rng::seed_from_u64(3);
        assert!(categorical_sample(&[0.0, 0.0], &mut rng).is_err());
        assert!(categorical_sample(&[1.0, -1.0], &mut rng).is_err());
        assert!(categorical_sample(&[1.0, f64::NAN], &mut rng).is_err());
        assert!(categorical_sample(&[], &mut rng).is_err());
    }

    #[test]
    fn categorical_two_equal_weights() {
        let mut rng = Rng::seed_from_u64(11);
        let f = frequencies(2, 100_000, || categorical_sample(&[1.0, 1.0], &mut rng).unwrap());
        assert!((f[0] - 0.5).abs() < 0.01 && (f[1] - 0.5).abs() < 0.01, "{f:?}");
    }

    #[test]
    fn categorical_one_two_three() {
        let mut rng = Rng::seed_from_u64(12);
        let f = frequencies(3, 100_000, || {
            categorical_sample(&[1.0, 2.0, 3.0], &mut rng).unwrap()
        });
        for (got, want) in f.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((got - want).abs() < 0.01, "{f:?}");
        }
    }

    #[test]
    fn query_alpha_cases() {
        let mut rng = Rng::seed_from_u64(5);
        let only_last = SaliencyMap::new(vec![0.0, 0.0, 1.0]).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_query_alpha(&only_last, &mut rng), 2);
        }

        let flat = SaliencyMap::new(vec![0.7; 16]).unwrap();
        let f = frequencies(16, 100_000, || sample_query_alpha(&flat, &mut rng));
        let worst = f.iter().map(|x| (x - 1.0 / 16.0).abs()).fold(0.0, f64::max);
        assert!(worst < 0.005, "{worst}");

        let skew = SaliencyMap::new(vec![1.0, 3.0]).unwrap();
        let f = frequencies(2, 100_000, || sample_query_alpha(&skew, &mut rng));
        assert!((f[1] - 0.75).abs() < 0.01);
    }

    #[test]
    fn query_alpha_zero_saliency_is_uniform() {
        let mut rng = Rng::seed_from_u64(6);
        let zeros = SaliencyMap::new(vec![0.0; 4]).unwrap();
        let f = frequencies(4, 40_000, || sample_query_alpha(&zeros, &mut rng));
        assert!(f.iter().all(|x| (x - 0.25).abs() < 0.015), "{f:?}");
    }

    #[test]
    fn query_beta_cases() {
        let mut rng = Rng::seed_from_u64(8);
        let q = Point3::new(0.0, 0.0, 0.0);
        let cloud = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
        ])
        .unwrap();
        let sal = SaliencyMap::new(vec![5.0, 1.0, 1.0]).unwrap();
        for _ in 0..100_000 {
            assert_ne!(sample_query_beta(&cloud, &sal, q, &mut rng).unwrap(), 0);
        }

        let pair = PointCloud::new(vec![Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 0.0, -3.0)])
            .unwrap();
        let ones = SaliencyMap::new(vec![1.0, 1.0]).unwrap();
        let f = frequencies(2, 100_000, || sample_query_beta(&pair, &ones, q, &mut rng).unwrap());
        assert!((f[0] - 0.25).abs() < 0.01 && (f[1] - 0.75).abs() < 0.01, "{f:?}");

        let single = PointCloud::new(vec![q]).unwrap();
        let one = SaliencyMap::new(vec![1.0]).unwrap();
        assert_eq!(sample_query_beta(&single, &one, q, &mut rng).unwrap(), 0);
        let far = PointCloud::new(vec![Point3::new(1.0, 1.0, 1.0)]).unwrap();
        assert_eq!(sample_query_beta(&far, &one, q, &mut rng).unwrap(), 0);
    }

    #[test]
    fn query_beta_length_mismatch() {
        let mut rng = Rng::seed_from_u64(8);
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]).unwrap();
        let sal = SaliencyMap::new(vec![1.0, 1.0]).unwrap();
        assert!(sample_query_beta(&cloud, &sal, Point3::new(1.0, 0.0, 0.0), &mut rng).is_err());
    }

    #[test]
    fn beta_uniform_moments() {
        let mut rng = Rng::seed_from_u64(21);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_beta(1.0, &mut rng).unwrap()).collect();
        let (mean, var) = moments(&xs);
        assert!((mean - 0.5).abs() < 0.01);
        assert!((var / (1.0 / 12.0) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn beta_small_theta_moments() {
        let mut rng = Rng::seed_from_u64(22);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_beta(0.2, &mut rng).unwrap()).collect();
        let (mean, var) = moments(&xs);
        let expected = 0.25 / (2.0 * 0.2 + 1.0);
        assert!((mean - 0.5).abs() < 0.01);
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
        assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn beta_cheng_branch_moments() {
        let mut rng = Rng::seed_from_u64(23);
        let (a, b) = (2.5, 4.0);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.beta(a, b)).collect();
        let (mean, var) = moments(&xs);
        let s = a + b;
        assert!((mean - a / s).abs() < 0.01);
        assert!((var / (a * b / (s * s * (s + 1.0))) - 1.0).abs() < 0.05);
        let ys: Vec<f64> = (0..100_000).map(|_| rng.beta(b, a)).collect();
        assert!((moments(&ys).0 - b / s).abs() < 0.01);
    }

    #[test]
    fn beta_rejects_nonpositive_theta() {
        let mut rng = Rng::seed_from_u64(0);
        assert!(sample_beta(0.0, &mut rng).is_err());
        assert!(sample_beta(-1.0, &mut rng).is_err());
        assert!(sample_beta(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn beta_draws_stay_inside_clamp() {
        let mut rng = Rng::seed_from_u64(24);
        for theta in [0.01, 0.05, 0.2, 1.0, 3.0] {
            for _ in 0..10_000 {
                let x = sample_beta(theta, &mut rng).unwrap();
                assert!(x >= BETA_EPS && x <= 1.0 - BETA_EPS);
            }
        }
    }
}
