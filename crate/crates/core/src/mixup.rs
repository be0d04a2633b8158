//! Saliency-guided point cloud mixup and the two baselines it generalizes.
//!
//! A saliency-guided mix of clouds `a` and `b` proceeds as follows:
//!
//! 1. draw a query index in `a` with probability proportional to saliency;
//! 2. draw a query index in `b` with probability proportional to saliency
//!    times the distance to the first query;
//! 3. weight every point with `exp(−‖p − q‖² / 2σ²)` around its cloud's query;
//! 4. draw a prior `π ~ Beta(θ, θ)` once for the pair;
//! 5. pair points by the optimal bijection `φ` and set
//!    `λ_i = π w^a_i / (π w^a_i + (1 − π) w^b_φ(i))`;
//! 6. emit `λ_i a_i + (1 − λ_i) b_φ(i)` and the label mixed with `λ = mean λ_i`.
//!
//! As σ grows the kernel flattens, every `λ_i` tends to `π`, and the result
//! tends to a PointMixup interpolation with ratio `π`.
//!
//! Mixed clouds are not re-normalized.

use crate::assignment::{assign, optimal_assignment, AssignmentMode, Assignment};
use crate::pointcloud::{resample, LabeledCloud, Point3, PointCloud, PointLabels, SaliencyMap, SoftLabel};
use crate::saliency::SaliencyProvider;
use crate::sampling::{sample_beta, sample_query_alpha, sample_query_beta, QueryPair, Rng};
use crate::{Error, Result};

pub const DEFAULT_SIGMA: f64 = 0.3;
pub const DEFAULT_THETA: f64 = 0.2;
pub const DEFAULT_RSMIX_RADIUS: (f64, f64) = (0.1, 0.5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixParams {
    /// Kernel bandwidth.
    pub sigma: f64,
    /// Shape of the symmetric Beta prior.
    pub theta: f64,
    pub assignment_mode: AssignmentMode,
}

impl Default for MixParams {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            theta: DEFAULT_THETA,
            assignment_mode: AssignmentMode::Exact,
        }
    }
}

impl MixParams {
    pub fn new(sigma: f64, theta: f64) -> Result<Self> {
        let params = Self {
            sigma,
            theta,
            ..Self::default()
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_mode(mut self, mode: AssignmentMode) -> Self {
        self.assignment_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_sigma(self.sigma)?;
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(Error::invalid(format!("theta must be positive, got {}", self.theta)));
        }
        Ok(())
    }
}

/// Random choices made by one saliency-guided mix. Replaying them through
/// [`sage_mix_with_draws`] reproduces the sample exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SageDraws {
    pub query_pair: QueryPair,
    pub pi: f64,
    pub assignment: Assignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedSample {
    pub cloud: PointCloud,
    /// Share of each output point contributed by the first cloud.
    pub per_point_lambda: Vec<f64>,
    /// Mean of `per_point_lambda`; the label mixing ratio.
    pub lambda: f64,
    pub label: SoftLabel,
    /// Per-point soft labels, only for segmentation mixes.
    pub point_labels: Option<Vec<SoftLabel>>,
    /// Draws of a saliency-guided mix; `None` for the baselines.
    pub draws: Option<SageDraws>,
    /// Pairing used by interpolating methods.
    pub assignment: Option<Assignment>,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

fn check_pair(a: &LabeledCloud, b: &LabeledCloud) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "clouds must have equal cardinality, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.label.classes() != b.label.classes() {
        return Err(Error::invalid(format!(
            "label spaces differ: {} vs {} classes",
            a.label.classes(),
            b.label.classes()
        )));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Gaussian kernel weights `exp(−‖p_i − query‖² / 2σ²)`.
pub fn rbf_weights(cloud: &PointCloud, query: Point3, sigma: f64) -> Result<Vec<f64>> {
    Ok(log_rbf_weights(cloud, query, sigma)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

fn log_rbf_weights(cloud: &PointCloud, query: Point3, sigma: f64) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let scale = 1.0 / (2.0 * sigma * sigma);
    Ok(cloud
        .points()
        .iter()
        .map(|p| -p.distance_sq(&query) * scale)
        .collect())
}

/// Point-wise mixing ratios `π w^a_i / (π w^a_i + (1 − π) w^b_perm[i])`.
/// With `pi = 0.5` this is the plain weight ratio.
pub fn pointwise_lambda(w_alpha: &[f64], w_beta: &[f64], perm: &[usize], pi: f64) -> Result<Vec<f64>> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::invalid(format!("pi must lie in (0, 1), got {pi}")));
    }
    if w_alpha.len() != w_beta.len() || perm.len() != w_alpha.len() {
        return Err(Error::invalid("weight and permutation lengths differ"));
    }
    if !crate::assignment::is_permutation(perm) {
        return Err(Error::invalid("perm is not a bijection"));
    }
    if w_alpha.iter().chain(w_beta).any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::invalid("kernel weights must be positive and finite"));
    }
    Ok(w_alpha
        .iter()
        .zip(perm)
        .map(|(&wa, &j)| {
            let a = pi * wa;
            open_unit(a / (a + (1.0 - pi) * w_beta[j]))
        })
        .collect())
}

/// Keeps a ratio strictly inside (0, 1) when rounding would land on an end.
fn open_unit(lambda: f64) -> f64 {
    lambda.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Geometry of a saliency-guided mix given its draws. Works on log-weights so
/// that tiny bandwidths do not underflow both kernels to zero.
fn mix_geometry(a: &PointCloud, b: &PointCloud, draws: &SageDraws, sigma: f64) -> Result<(Vec<Point3>, Vec<f64>)> {
    let n = a.len();
    if b.len() != n || draws.assignment.len() != n {
        return Err(Error::invalid("clouds and assignment must share one cardinality"));
    }
    let QueryPair { alpha, beta } = draws.query_pair;
    if alpha >= n || beta >= n {
        return Err(Error::invalid("query index out of range"));
    }
    let pi = draws.pi;
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::invalid(format!("pi must lie in (0, 1), got {pi}")));
    }
    let log_wa = log_rbf_weights(a, a.points()[alpha], sigma)?;
    let log_wb = log_rbf_weights(b, b.points()[beta], sigma)?;
    let log_odds = ((1.0 - pi) / pi).ln();

    let perm = draws.assignment.perm();
    let mut points = Vec::with_capacity(n);
    let mut lambdas = Vec::with_capacity(n);
    for i in 0..n {
        let j = perm[i];
        let lambda = open_unit(1.0 / (1.0 + (log_odds + log_wb[j] - log_wa[i]).exp()));
        points.push(a.points()[i].lerp(&b.points()[j], lambda));
        lambdas.push(lambda);
    }
    Ok((points, lambdas))
}

/// Replays a saliency-guided mix from recorded draws.
pub fn sage_mix_with_draws(a: &LabeledCloud, b: &LabeledCloud, draws: SageDraws, sigma: f64) -> Result<MixedSample> {
    check_pair(a, b)?;
    let (points, per_point_lambda) = mix_geometry(&a.cloud, &b.cloud, &draws, sigma)?;
    let lambda = mean(&per_point_lambda);
    Ok(MixedSample {
        cloud: PointCloud::new(points)?,
        label: SoftLabel::mix(&a.label, &b.label, lambda)?,
        per_point_lambda,
        lambda,
        point_labels: None,
        assignment: Some(draws.assignment.clone()),
        draws: Some(draws),
    })
}

fn attached_saliency(c: &LabeledCloud, which: &str) -> Result<SaliencyMap> {
    c.saliency
        .clone()
        .ok_or_else(|| Error::invalid(format!("cloud {which} has no saliency map")))
}

/// Draws the query pair, the prior and the pairing for two clouds with
/// attached saliency. Draw order: first query, second query, prior.
pub fn draw_sage(a: &LabeledCloud, b: &LabeledCloud, params: &MixParams, rng: &mut Rng) -> Result<SageDraws> {
    params.validate()?;
    check_pair(a, b)?;
    let sal_a = attached_saliency(a, "a")?;
    let sal_b = attached_saliency(b, "b")?;
    if sal_a.len() != a.len() || sal_b.len() != b.len() {
        return Err(Error::invalid("saliency length does not match cloud"));
    }
    let alpha = sample_query_alpha(&sal_a, rng);
    let beta = sample_query_beta(&b.cloud, &sal_b, a.cloud.points()[alpha], rng)?;
    let pi = sample_beta(params.theta, rng)?;
    let assignment = assign(&a.cloud, &b.cloud, params.assignment_mode)?;
    Ok(SageDraws {
        query_pair: QueryPair { alpha, beta },
        pi,
        assignment,
    })
}

/// Saliency-guided mix of two clouds that carry saliency maps.
pub fn sage_mix(a: &LabeledCloud, b: &LabeledCloud, params: &MixParams, rng: &mut Rng) -> Result<MixedSample> {
    let draws = draw_sage(a, b, params, rng)?;
    sage_mix_with_draws(a, b, draws, params.sigma)
}

/// Like [`sage_mix`], computing any missing saliency map with `provider`.
pub fn sage_mix_with_provider(
    a: &LabeledCloud,
    b: &LabeledCloud,
    params: &MixParams,
    provider: Option<&SaliencyProvider>,
    rng: &mut Rng,
) -> Result<MixedSample> {
    let fill = |c: &LabeledCloud| -> Result<LabeledCloud> {
        match (&c.saliency, provider) {
            (Some(_), _) => Ok(c.clone()),
            (None, Some(p)) => c.clone().with_saliency(p.compute(&c.cloud, &c.label)?),
            (None, None) => Err(Error::invalid("saliency missing and no provider given")),
        }
    };
    sage_mix(&fill(a)?, &fill(b)?, params, rng)
}

/// Per-point soft labels `λ_i onehot(a_i) + (1 − λ_i) onehot(b_perm[i])`.
pub fn mix_point_labels(a: &PointLabels, b: &PointLabels, perm: &[usize], lambdas: &[f64]) -> Result<Vec<SoftLabel>> {
    if a.classes() != b.classes() {
        return Err(Error::invalid(format!(
            "part label spaces differ: {} vs {} classes",
            a.classes(),
            b.classes()
        )));
    }
    if a.len() != perm.len() || b.len() != perm.len() || lambdas.len() != perm.len() {
        return Err(Error::invalid("per-point labels do not match the cloud size"));
    }
    Ok(a
        .labels()
        .iter()
        .zip(perm)
        .zip(lambdas)
        .map(|((&la, &j), &lambda)| {
            let lb = b.labels()[j];
            let mut probs = vec![0.0; a.classes()];
            if la == lb {
                probs[la] = 1.0;
            } else {
                probs[la] = lambda;
                probs[lb] = 1.0 - lambda;
            }
            SoftLabel::new(probs)
        })
        .collect::<Result<_>>()?)
}

fn require_point_labels(c: &LabeledCloud, which: &str) -> Result<PointLabels> {
    c.point_labels
        .clone()
        .ok_or_else(|| Error::invalid(format!("cloud {which} has no per-point labels")))
}

/// Segmentation variant: same geometry as [`sage_mix`], plus point-wise soft
/// labels. Both clouds must share one part-label space.
pub fn sage_mix_segmentation(a: &LabeledCloud, b: &LabeledCloud, params: &MixParams, rng: &mut Rng) -> Result<MixedSample> {
    let la = require_point_labels(a, "a")?;
    let lb = require_point_labels(b, "b")?;
    if la.classes() != lb.classes() {
        return Err(Error::invalid(format!(
            "part label spaces differ: {} vs {} classes",
            la.classes(),
            lb.classes()
        )));
    }
    let draws = draw_sage(a, b, params, rng)?;
    sage_mix_segmentation_with_draws(a, b, draws, params.sigma)
}

pub fn sage_mix_segmentation_with_draws(a: &LabeledCloud, b: &LabeledCloud, draws: SageDraws, sigma: f64) -> Result<MixedSample> {
    let la = require_point_labels(a, "a")?;
    let lb = require_point_labels(b, "b")?;
    let mut sample = sage_mix_with_draws(a, b, draws, sigma)?;
    let perm = sample.assignment.as_ref().expect("sage mix records its assignment").perm();
    sample.point_labels = Some(mix_point_labels(&la, &lb, perm, &sample.per_point_lambda)?);
    Ok(sample)
}

/// Constant-ratio interpolation under the optimal pairing.
pub fn point_mixup(a: &LabeledCloud, b: &LabeledCloud, lambda: f64) -> Result<MixedSample> {
    check_pair(a, b)?;
    let assignment = optimal_assignment(&a.cloud, &b.cloud)?;
    point_mixup_with_assignment(a, b, lambda, assignment)
}

pub fn point_mixup_with_assignment(a: &LabeledCloud, b: &LabeledCloud, lambda: f64, assignment: Assignment) -> Result<MixedSample> {
    check_pair(a, b)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if assignment.len() != a.len() {
        return Err(Error::invalid("assignment does not match the cloud size"));
    }
    let points = a
        .cloud
        .points()
        .iter()
        .zip(assignment.perm())
        .map(|(p, &j)| p.lerp(&b.cloud.points()[j], lambda))
        .collect();
    Ok(MixedSample {
        cloud: PointCloud::new(points)?,
        per_point_lambda: vec![lambda; a.len()],
        lambda,
        label: SoftLabel::mix(&a.label, &b.label, lambda)?,
        point_labels: None,
        draws: None,
        assignment: Some(assignment),
    })
}

/// Indices of points within `radius` of `center`.
pub fn ball_query(cloud: &PointCloud, center: Point3, radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.distance_sq(&center) <= r2)
        .map(|(i, _)| i)
        .collect()
}

/// Rigid-subset cut and paste: ball subsets of equal radius around a random
/// center in each cloud; `a`'s subset is removed and `b`'s subset is pasted in,
/// translated onto the removed subset's centroid.
pub fn rs_mix(a: &LabeledCloud, b: &LabeledCloud, radius_range: (f64, f64), rng: &mut Rng) -> Result<MixedSample> {
    check_pair(a, b)?;
    let (lo, hi) = radius_range;
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
        return Err(Error::invalid(format!("invalid radius range [{lo}, {hi}]")));
    }
    let radius = rng.uniform_range(lo, hi);
    let center_a = a.cloud.points()[rng.below(a.len())];
    let center_b = b.cloud.points()[rng.below(b.len())];
    let subset_a = ball_query(&a.cloud, center_a, radius);
    let subset_b = ball_query(&b.cloud, center_b, radius);
    rs_mix_with_subsets(a, b, &subset_a, &subset_b, rng)
}

fn subset_centroid(cloud: &PointCloud, idx: &[usize]) -> Option<Point3> {
    if idx.is_empty() {
        return None;
    }
    let sum = idx.iter().fold(Point3::ORIGIN, |acc, &i| acc + cloud.points()[i]);
    Some(sum * (1.0 / idx.len() as f64))
}

/// Cut and paste with explicit subsets. The output keeps every pasted point
/// and fills the remaining `n − |subset_b|` slots by resampling what is left
/// of `a`, so the share of points from `a` is exactly `1 − |subset_b| / n`.
/// Output order: points from `a` first, then the pasted points.
pub fn rs_mix_with_subsets(
    a: &LabeledCloud,
    b: &LabeledCloud,
    subset_a: &[usize],
    subset_b: &[usize],
    rng: &mut Rng,
) -> Result<MixedSample> {
    check_pair(a, b)?;
    let n = a.len();
    if subset_a.iter().chain(subset_b).any(|&i| i >= n) {
        return Err(Error::invalid("subset index out of range"));
    }
    let mut removed = vec![false; n];
    for &i in subset_a {
        removed[i] = true;
    }
    let mut pasted_mask = vec![false; n];
    for &j in subset_b {
        pasted_mask[j] = true;
    }
    let pasted_idx: Vec<usize> = (0..n).filter(|&j| pasted_mask[j]).collect();

    if pasted_idx.is_empty() {
        return Ok(MixedSample {
            cloud: a.cloud.clone(),
            per_point_lambda: vec![1.0; n],
            lambda: 1.0,
            label: a.label.clone(),
            point_labels: None,
            draws: None,
            assignment: None,
        });
    }

    let removed_idx: Vec<usize> = (0..n).filter(|&i| removed[i]).collect();
    let offset = match (subset_centroid(&a.cloud, &removed_idx), subset_centroid(&b.cloud, &pasted_idx)) {
        (Some(ca), Some(cb)) => ca - cb,
        _ => Point3::ORIGIN,
    };
    let pasted: Vec<Point3> = pasted_idx.iter().map(|&j| b.cloud.points()[j] + offset).collect();

    let kept: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
    let fill = n - pasted.len();
    let mut points = Vec::with_capacity(n);
    let mut per_point_lambda = Vec::with_capacity(n);
    if fill > 0 {
        if kept.is_empty() {
            // nothing of `a` survives; pad with duplicated pasted points
            let pasted_cloud = PointCloud::new(pasted.clone())?;
            let padded = resample(&pasted_cloud, n, rng)?;
            return finish_rs_mix(a, b, padded.into_points(), vec![0.0; n]);
        }
        let survivors = resample(&a.cloud.select(&kept), fill, rng)?;
        points.extend_from_slice(survivors.points());
        per_point_lambda.extend(std::iter::repeat(1.0).take(fill));
    }
    points.extend(pasted);
    per_point_lambda.extend(std::iter::repeat(0.0).take(n - fill));
    finish_rs_mix(a, b, points, per_point_lambda)
}

fn finish_rs_mix(a: &LabeledCloud, b: &LabeledCloud, points: Vec<Point3>, per_point_lambda: Vec<f64>) -> Result<MixedSample> {
    let lambda = mean(&per_point_lambda);
    Ok(MixedSample {
        cloud: PointCloud::new(points)?,
        label: SoftLabel::mix(&a.label, &b.label, lambda)?,
        per_point_lambda,
        lambda,
        point_labels: None,
        draws: None,
        assignment: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::{normalize_unit_sphere, synth_shape, ShapeKind};
    use crate::saliency::heuristic_saliency;

    fn labeled(cloud: PointCloud, class: usize, classes: usize) -> LabeledCloud {
        let sal = heuristic_saliency(&cloud);
        LabeledCloud::new(cloud, SoftLabel::one_hot(class, classes).unwrap())
            .with_saliency(sal)
            .unwrap()
    }

    fn random_cloud(n: usize, rng: &mut Rng) -> PointCloud {
        normalize_unit_sphere(
            &PointCloud::new(
                (0..n)
                    .map(|_| Point3::new(rng.normal(), rng.normal(), rng.normal()))
                    .collect(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn rbf_examples() {
        let c = PointCloud::new(vec![
            Point3::ORIGIN,
            Point3::new(0.3 * (2.0 * 2f64.ln()).sqrt(), 0.0, 0.0),
            Point3::new(0.0, 0.6, 0.0),
        ])
        .unwrap();
        let w = rbf_weights(&c, Point3::ORIGIN, 0.3).unwrap();
        assert_eq!(w[0], 1.0);
        assert!((w[1] - 0.5).abs() < 1e-12);
        // direct evaluation: exp(-0.36 / 0.18) = exp(-2)
        assert!((w[2] - 0.135_335_283_236_612_7).abs() < 1e-12);
        assert!(rbf_weights(&c, Point3::ORIGIN, 0.0).is_err());
        assert!(rbf_weights(&c, Point3::ORIGIN, -1.0).is_err());
    }

    #[test]
    fn kernel_lipschitz_bound() {
        let mut rng = Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let sigma = rng.uniform_range(0.05, 3.0);
            let d1 = rng.uniform_range(0.0, 4.0);
            let d2 = rng.uniform_range(0.0, 4.0);
            let w = |d: f64| (-d * d / (2.0 * sigma * sigma)).exp();
            let bound = (-0.5f64).exp() / sigma * (d1 - d2).abs() + 1e-12;
            assert!((w(d1) - w(d2)).abs() <= bound);
        }
    }

    #[test]
    fn pointwise_lambda_examples() {
        let id = [0usize, 1, 2];
        let l = pointwise_lambda(&[0.3, 0.7, 1.0], &[0.3, 0.7, 1.0], &id, 0.5).unwrap();
        assert!(l.iter().all(|&x| x == 0.5));
        let l = pointwise_lambda(&[1.0], &[1.0], &[0], 0.8).unwrap();
        assert!((l[0] - 0.8).abs() < 1e-15);
        let l = pointwise_lambda(&[0.9], &[0.1], &[0], 0.5).unwrap();
        assert!((l[0] - 0.9).abs() < 1e-15);
        // perm routes beta weights
        let l = pointwise_lambda(&[0.9, 0.1], &[0.9, 0.1], &[1, 0], 0.5).unwrap();
        assert!((l[0] - 0.9).abs() < 1e-15 && (l[1] - 0.1).abs() < 1e-15);
        assert!(pointwise_lambda(&[1.0], &[1.0], &[0], 0.0).is_err());
        assert!(pointwise_lambda(&[1.0], &[1.0], &[0], 1.0).is_err());
        assert!(pointwise_lambda(&[0.0], &[1.0], &[0], 0.5).is_err());
        assert!(pointwise_lambda(&[1.0, 1.0], &[1.0, 1.0], &[0, 0], 0.5).is_err());
    }

    #[test]
    fn pointwise_lambda_monotone_in_weights() {
        let mut rng = Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let pi = rng.uniform_open();
            let (wa, wb) = (rng.uniform_open(), rng.uniform_open());
            let (wa2, wb2) = (wa * rng.uniform_open(), (wb + rng.uniform()).min(1.0));
            let l = pointwise_lambda(&[wa, wa2], &[wb, wb2], &[0, 1], pi).unwrap();
            assert!(l[0] >= l[1]);
        }
    }

    #[test]
    fn log_domain_agrees_with_direct_formula() {
        let mut rng = Rng::seed_from_u64(3);
        let a = labeled(random_cloud(64, &mut rng), 0, 2);
        let b = labeled(random_cloud(64, &mut rng), 1, 2);
        let params = MixParams::new(0.5, 0.2).unwrap();
        let m = sage_mix(&a, &b, &params, &mut rng).unwrap();
        let d = m.draws.as_ref().unwrap();
        let wa = rbf_weights(&a.cloud, a.cloud.points()[d.query_pair.alpha], 0.5).unwrap();
        let wb = rbf_weights(&b.cloud, b.cloud.points()[d.query_pair.beta], 0.5).unwrap();
        let direct = pointwise_lambda(&wa, &wb, d.assignment.perm(), d.pi).unwrap();
        for (x, y) in direct.iter().zip(&m.per_point_lambda) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mixing_a_cloud_with_itself_is_identity() {
        let mut rng = Rng::seed_from_u64(4);
        let a = labeled(random_cloud(50, &mut rng), 1, 3);
        for seed in 0..10 {
            let mut rng = Rng::seed_from_u64(seed);
            let m = sage_mix(&a, &a, &MixParams::default(), &mut rng).unwrap();
            for (p, q) in m.cloud.points().iter().zip(a.cloud.points()) {
                assert!(p.distance(q) < 1e-12);
            }
            assert_eq!(m.label, a.label);
        }
    }

    #[test]
    fn sage_mix_algebra() {
        let mut rng = Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = labeled(random_cloud(40, &mut rng), 0, 4);
            let b = labeled(random_cloud(40, &mut rng), 3, 4);
            let m = sage_mix(&a, &b, &MixParams::default(), &mut rng).unwrap();
            assert!((m.lambda - mean(&m.per_point_lambda)).abs() < 1e-12);
            assert!(m.per_point_lambda.iter().all(|&l| l > 0.0 && l < 1.0));
            let perm = m.assignment.as_ref().unwrap().perm();
            for i in 0..40 {
                let l = m.per_point_lambda[i];
                let expected = a.cloud.points()[i] * l + b.cloud.points()[perm[i]] * (1.0 - l);
                assert!(m.cloud.points()[i].distance(&expected) < 1e-12);
            }
            let sum: f64 = m.label.probs().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!((m.label.probs()[0] - m.lambda).abs() < 1e-12);
        }
    }

    #[test]
    fn sage_mix_requires_saliency_and_matching_sizes() {
        let mut rng = Rng::seed_from_u64(6);
        let a = labeled(random_cloud(10, &mut rng), 0, 2);
        let bare = LabeledCloud::new(random_cloud(10, &mut rng), SoftLabel::one_hot(1, 2).unwrap());
        assert!(sage_mix(&a, &bare, &MixParams::default(), &mut rng).is_err());
        let small = labeled(random_cloud(9, &mut rng), 0, 2);
        assert!(sage_mix(&a, &small, &MixParams::default(), &mut rng).is_err());
        let other_space = labeled(random_cloud(10, &mut rng), 0, 3);
        assert!(sage_mix(&a, &other_space, &MixParams::default(), &mut rng).is_err());

        let filled = sage_mix_with_provider(
            &a,
            &bare,
            &MixParams::default(),
            Some(&SaliencyProvider::Heuristic),
            &mut rng,
        );
        assert!(filled.is_ok());
        assert!(sage_mix_with_provider(&a, &bare, &MixParams::default(), None, &mut rng).is_err());
    }

    #[test]
    fn large_bandwidth_emulates_point_mixup() {
        let mut rng = Rng::seed_from_u64(7);
        let a = labeled(random_cloud(128, &mut rng), 0, 2);
        let b = labeled(random_cloud(128, &mut rng), 1, 2);
        let m = sage_mix(&a, &b, &MixParams::new(100.0, 0.2).unwrap(), &mut rng).unwrap();
        let pi = m.draws.as_ref().unwrap().pi;
        let worst = m.per_point_lambda.iter().map(|l| (l - pi).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-3);
        let pm = point_mixup(&a, &b, pi).unwrap();
        for (p, q) in m.cloud.points().iter().zip(pm.cloud.points()) {
            assert!(p.distance(q) < 1e-3);
        }
    }

    #[test]
    fn swapping_roles_reproduces_geometry() {
        let mut rng = Rng::seed_from_u64(8);
        for _ in 0..10 {
            let a = labeled(random_cloud(30, &mut rng), 0, 2);
            let b = labeled(random_cloud(30, &mut rng), 1, 2);
            let ab = sage_mix(&a, &b, &MixParams::default(), &mut rng).unwrap();
            let d = ab.draws.clone().unwrap();
            let swapped = SageDraws {
                query_pair: d.query_pair.swapped(),
                pi: 1.0 - d.pi,
                assignment: d.assignment.inverse(&a.cloud, &b.cloud).unwrap(),
            };
            let ba = sage_mix_with_draws(&b, &a, swapped, DEFAULT_SIGMA).unwrap();
            for (i, &j) in d.assignment.perm().iter().enumerate() {
                assert!(ab.cloud.points()[i].distance(&ba.cloud.points()[j]) < 1e-9);
                assert!((ab.per_point_lambda[i] + ba.per_point_lambda[j] - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ratios_stay_open_at_extreme_pi() {
        let mut rng = Rng::seed_from_u64(12);
        let a = labeled(random_cloud(40, &mut rng), 0, 2);
        let b = labeled(random_cloud(40, &mut rng), 1, 2);
        let d = draw_sage(&a, &b, &MixParams::default(), &mut rng).unwrap();
        for pi in [crate::sampling::BETA_EPS, 1.0 - crate::sampling::BETA_EPS] {
            for sigma in [0.05, DEFAULT_SIGMA] {
                let draws = SageDraws { pi, ..d.clone() };
                let m = sage_mix_with_draws(&a, &b, draws, sigma).unwrap();
                assert!(m.per_point_lambda.iter().all(|&l| l > 0.0 && l < 1.0));
            }
        }
    }

    #[test]
    fn query_pair_dominates() {
        let mut rng = Rng::seed_from_u64(9);
        let a = labeled(random_cloud(60, &mut rng), 0, 2);
        let b = labeled(random_cloud(60, &mut rng), 1, 2);
        let m = sage_mix(&a, &b, &MixParams::default(), &mut rng).unwrap();
        let d = m.draws.as_ref().unwrap();
        let q = d.query_pair.alpha;
        let perm = d.assignment.perm();
        let wa = rbf_weights(&a.cloud, a.cloud.points()[q], DEFAULT_SIGMA).unwrap();
        let wb = rbf_weights(&b.cloud, b.cloud.points()[d.query_pair.beta], DEFAULT_SIGMA).unwrap();
        for j in 0..60 {
            if wa[j] <= wa[q] && wb[perm[j]] >= wb[perm[q]] {
                assert!(m.per_point_lambda[q] >= m.per_point_lambda[j]);
            }
        }
    }

    #[test]
    fn greedy_mode_still_uses_mean_lambda() {
        let mut rng = Rng::seed_from_u64(10);
        let a = labeled(random_cloud(40, &mut rng), 0, 2);
        let b = labeled(random_cloud(40, &mut rng), 1, 2);
        let params = MixParams::default().with_mode(AssignmentMode::Greedy);
        let m = sage_mix(&a, &b, &params, &mut rng).unwrap();
        assert!((m.lambda - mean(&m.per_point_lambda)).abs() < 1e-12);
    }

    fn seg_cloud(cloud: PointCloud, labels: Vec<usize>, parts: usize) -> LabeledCloud {
        labeled(cloud, 0, 1)
            .with_point_labels(PointLabels::new(labels, parts).unwrap())
            .unwrap()
    }

    #[test]
    fn segmentation_single_class() {
        let mut rng = Rng::seed_from_u64(11);
        let a = seg_cloud(random_cloud(30, &mut rng), vec![2; 30], 4);
        let b = seg_cloud(random_cloud(30, &mut rng), vec![2; 30], 4);
        let m = sage_mix_segmentation(&a, &b, &MixParams::default(), &mut rng).unwrap();
        for l in m.point_labels.unwrap() {
            assert_eq!(l, SoftLabel::one_hot(2, 4).unwrap());
        }
    }

    #[test]
    fn segmentation_structure() {
        let mut rng = Rng::seed_from_u64(12);
        for _ in 0..20 {
            let la: Vec<usize> = (0..30).map(|_| rng.below(5)).collect();
            let lb: Vec<usize> = (0..30).map(|_| rng.below(5)).collect();
            let a = seg_cloud(random_cloud(30, &mut rng), la.clone(), 5);
            let b = seg_cloud(random_cloud(30, &mut rng), lb.clone(), 5);
            let m = sage_mix_segmentation(&a, &b, &MixParams::default(), &mut rng).unwrap();
            let perm = m.assignment.as_ref().unwrap().perm().to_vec();
            for (i, l) in m.point_labels.as_ref().unwrap().iter().enumerate() {
                let sum: f64 = l.probs().iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                for (c, &p) in l.probs().iter().enumerate() {
                    if p > 0.0 {
                        assert!(c == la[i] || c == lb[perm[i]]);
                    }
                }
                if la[i] != lb[perm[i]] {
                    assert!((l.probs()[la[i]] - m.per_point_lambda[i]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn segmentation_saturated_lambda_gives_alpha_label() {
        let mut rng = Rng::seed_from_u64(13);
        let a = seg_cloud(random_cloud(20, &mut rng), (0..20).map(|i| i % 2).collect(), 3);
        let b = seg_cloud(random_cloud(20, &mut rng), vec![2; 20], 3);
        let draws = SageDraws {
            query_pair: QueryPair { alpha: 0, beta: 5 },
            pi: 1.0 - 1e-12,
            assignment: optimal_assignment(&a.cloud, &b.cloud).unwrap(),
        };
        let m = sage_mix_segmentation_with_draws(&a, &b, draws, 0.05).unwrap();
        let labels = m.point_labels.unwrap();
        let mut saturated = 0;
        for (i, l) in labels.iter().enumerate() {
            if m.per_point_lambda[i] > 1.0 - 1e-12 {
                saturated += 1;
                let expect = SoftLabel::one_hot(i % 2, 3).unwrap();
                for (p, q) in l.probs().iter().zip(expect.probs()) {
                    assert!((p - q).abs() < 1e-12);
                }
            }
        }
        assert!(saturated > 0);
    }

    #[test]
    fn segmentation_errors() {
        let mut rng = Rng::seed_from_u64(14);
        let a = seg_cloud(random_cloud(10, &mut rng), vec![0; 10], 2);
        let b = seg_cloud(random_cloud(10, &mut rng), vec![0; 10], 3);
        assert!(sage_mix_segmentation(&a, &b, &MixParams::default(), &mut rng).is_err());
        let plain = labeled(random_cloud(10, &mut rng), 0, 1);
        assert!(sage_mix_segmentation(&a, &plain, &MixParams::default(), &mut rng).is_err());
    }

    #[test]
    fn point_mixup_endpoints() {
        let mut rng = Rng::seed_from_u64(15);
        let a = labeled(random_cloud(25, &mut rng), 0, 2);
        let b = labeled(random_cloud(25, &mut rng), 1, 2);
        let one = point_mixup(&a, &b, 1.0).unwrap();
        assert_eq!(one.cloud, a.cloud);
        assert_eq!(one.label, a.label);
        let zero = point_mixup(&a, &b, 0.0).unwrap();
        let perm = zero.assignment.as_ref().unwrap().perm();
        for (i, &j) in perm.iter().enumerate() {
            assert!(zero.cloud.points()[i].distance(&b.cloud.points()[j]) < 1e-12);
        }
        assert_eq!(zero.label, b.label);
        assert!(point_mixup(&a, &b, 1.5).is_err());
    }

    #[test]
    fn point_mixup_collinear_midpoints() {
        let a = LabeledCloud::new(
            PointCloud::new(vec![Point3::ORIGIN, Point3::new(3.0, 0.0, 0.0)]).unwrap(),
            SoftLabel::one_hot(0, 2).unwrap(),
        );
        let b = LabeledCloud::new(
            PointCloud::new(vec![Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)]).unwrap(),
            SoftLabel::one_hot(1, 2).unwrap(),
        );
        let m = point_mixup(&a, &b, 0.5).unwrap();
        assert_eq!(m.cloud.points(), &[Point3::new(0.5, 0.0, 0.0), Point3::new(2.5, 0.0, 0.0)]);
        assert_eq!(m.label.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn rs_mix_degenerate_subsets() {
        let mut rng = Rng::seed_from_u64(16);
        let a = labeled(random_cloud(20, &mut rng), 0, 2);
        let b = labeled(random_cloud(20, &mut rng), 1, 2);
        let none = rs_mix_with_subsets(&a, &b, &[0, 1, 2], &[], &mut rng).unwrap();
        assert_eq!(none.cloud, a.cloud);
        assert_eq!(none.label, a.label);

        let all: Vec<usize> = (0..20).collect();
        let full = rs_mix_with_subsets(&a, &b, &all, &all, &mut rng).unwrap();
        // both subsets are whole clouds with centroid at the origin
        for (p, q) in full.cloud.points().iter().zip(b.cloud.points()) {
            assert!(p.distance(q) < 1e-12);
        }
        assert_eq!(full.label, b.label);
        assert_eq!(full.lambda, 0.0);
    }

    #[test]
    fn rs_mix_never_interpolates() {
        let mut rng = Rng::seed_from_u64(17);
        for _ in 0..20 {
            let a = labeled(random_cloud(64, &mut rng), 0, 2);
            let b = labeled(random_cloud(64, &mut rng), 1, 2);
            let m = rs_mix(&a, &b, DEFAULT_RSMIX_RADIUS, &mut rng).unwrap();
            assert_eq!(m.cloud.len(), 64);
            let pasted = m.per_point_lambda.iter().filter(|&&l| l == 0.0).count();
            assert!((m.lambda - (1.0 - pasted as f64 / 64.0)).abs() < 1e-12);
            assert!((m.lambda - mean(&m.per_point_lambda)).abs() < 1e-12);
            // translation offsets are not recorded, so test membership by
            // origin: points from a are exact copies; pasted points are rigid
            // translates of b points
            let from_b: Vec<Point3> = m
                .cloud
                .points()
                .iter()
                .zip(&m.per_point_lambda)
                .filter(|(_, &l)| l == 0.0)
                .map(|(p, _)| *p)
                .collect();
            for (p, &l) in m.cloud.points().iter().zip(&m.per_point_lambda) {
                if l == 1.0 {
                    assert!(a.cloud.points().contains(p));
                }
            }
            if let Some(first) = from_b.first() {
                let anchor = b
                    .cloud
                    .points()
                    .iter()
                    .map(|q| *first - *q)
                    .find(|off| {
                        from_b.iter().all(|p| {
                            b.cloud.points().iter().any(|q| p.distance(&(*q + *off)) < 1e-12)
                        })
                    });
                assert!(anchor.is_some());
            }
        }
    }

    #[test]
    fn rs_mix_rejects_bad_radius() {
        let mut rng = Rng::seed_from_u64(18);
        let a = labeled(random_cloud(8, &mut rng), 0, 2);
        assert!(rs_mix(&a, &a, (0.0, 0.5), &mut rng).is_err());
        assert!(rs_mix(&a, &a, (0.5, 0.1), &mut rng).is_err());
    }

    #[test]
    fn sage_mix_on_synthetic_shapes() {
        let mut rng = Rng::seed_from_u64(19);
        let a = labeled(synth_shape(ShapeKind::Cube, 128, &mut rng).unwrap(), 1, 4);
        let b = labeled(synth_shape(ShapeKind::Torus, 128, &mut rng).unwrap(), 3, 4);
        let m = sage_mix(&a, &b, &MixParams::default(), &mut rng).unwrap();
        assert!(m.cloud.max_norm() <= 1.0 + 1e-12);
    }
}
