//! Stage 2: direct algebraic fitting and model-based reclassification.

use std::collections::VecDeque;

use nalgebra::{DMatrix, Matrix3, Matrix4, Point2, Point3, SymmetricEigen};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    ellipse_from_conic, ellipsoid_from_quadric, signed_sampson, ConicCoeffs, EllipseParams, EllipsoidParams,
    QuadricCoeffs,
};
use crate::labels::{DetectionLabels, Stage};
use crate::points::PointSet;
use crate::seed::{derive_seed, rng};
use crate::stats::{mad, median, MAD_TO_SIGMA};

/// Minimal sample size for a conic.
pub const ELLIPSE_MIN_POINTS: usize = 5;
/// Minimal sample size for a quadric.
pub const ELLIPSOID_MIN_POINTS: usize = 9;

/// Absolute lower bound on the adaptive deviation threshold.
const THRESHOLD_FLOOR: f64 = 1e-12;
/// Lower bound relative to the data spread, above roundoff of minimal fits.
const RELATIVE_FLOOR: f64 = 1e-8;

pub fn min_points_for_dim(dim: usize) -> usize {
    if dim == 3 {
        ELLIPSOID_MIN_POINTS
    } else {
        ELLIPSE_MIN_POINTS
    }
}

// ── Direct fitting ────────────────────────────────────────────────────────

/// Translation to the centroid followed by isotropic scaling so the mean
/// distance from the origin is `√dim`.
fn normalizing_transform(points: &[&[f64]], dim: usize) -> Result<(Vec<f64>, f64)> {
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n).collect();
    let spread = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>().sqrt())
        .sum::<f64>()
        / n;
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::DegenerateConfiguration("all points coincide"));
    }
    Ok((mean, (dim as f64).sqrt() / spread))
}

/// Direct least-squares ellipse fit minimizing the algebraic error subject
/// to `4AC − B² = 1`, solved on the reduced 3×3 problem after eliminating
/// the linear terms.
pub fn fit_ellipse_direct(points: &[Point2<f64>]) -> Result<ConicCoeffs> {
    if points.len() < ELLIPSE_MIN_POINTS {
        return Err(Error::TooFewPoints { needed: ELLIPSE_MIN_POINTS, got: points.len() });
    }
    let refs: Vec<&[f64]> = points.iter().map(|p| p.coords.as_slice()).collect();
    let (mean, scale) = normalizing_transform(&refs, 2)?;

    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    for p in points {
        let x = (p.x - mean[0]) * scale;
        let y = (p.y - mean[1]) * scale;
        let quad = nalgebra::Vector3::new(x * x, x * y, y * y);
        let lin = nalgebra::Vector3::new(x, y, 1.0);
        s1 += quad * quad.transpose();
        s2 += quad * lin.transpose();
        s3 += lin * lin.transpose();
    }

    let s3_eig = SymmetricEigen::new(s3);
    let (lo, hi) = minmax(s3_eig.eigenvalues.iter().copied());
    if lo <= 1e-12 * hi {
        return Err(Error::DegenerateConfiguration("points are collinear"));
    }
    let s3_inv = s3.try_inverse().ok_or(Error::DegenerateConfiguration("points are collinear"))?;
    let t = -s3_inv * s2.transpose();
    let reduced = s1 + s2 * t;
    let reduced = (reduced + reduced.transpose()) * 0.5;

    // max aᵀCa / aᵀSa via the whitened symmetric problem; near-null
    // directions of S are clamped so exact fits stay representable.
    let constraint = Matrix3::new(0.0, 0.0, 2.0, 0.0, -1.0, 0.0, 2.0, 0.0, 0.0);
    let s_eig = SymmetricEigen::new(reduced);
    let top = s_eig.eigenvalues.amax();
    if !(top > 0.0) {
        return Err(Error::DegenerateConfiguration("zero scatter"));
    }
    let floor = top * 1e-13;
    let inv_sqrt = Matrix3::from_diagonal(&s_eig.eigenvalues.map(|l| 1.0 / l.max(floor).sqrt()));
    let whiten = s_eig.eigenvectors * inv_sqrt * s_eig.eigenvectors.transpose();
    let m = whiten * constraint * whiten;
    let m_eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let (best, mu) = m_eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    if !(mu > 0.0) {
        return Err(Error::DegenerateConfiguration("no admissible ellipse eigenvector"));
    }
    let a1 = whiten * m_eig.eigenvectors.column(best);
    let a2 = t * a1;

    let normalized = ConicCoeffs([a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]]);
    let h = Matrix3::new(
        scale,
        0.0,
        -scale * mean[0],
        0.0,
        scale,
        -scale * mean[1],
        0.0,
        0.0,
        1.0,
    );
    let q = h.transpose() * normalized.matrix() * h;
    let conic = ConicCoeffs::from_matrix(&q).map_err(|_| Error::DegenerateConfiguration("zero conic"))?;
    if !conic.is_ellipse() {
        return Err(Error::DegenerateConfiguration("no admissible ellipse eigenvector"));
    }
    Ok(conic)
}

/// Least-squares quadric with unit coefficient norm (smallest right
/// singular vector of the design matrix), validated as an ellipsoid.
pub fn fit_ellipsoid_direct(points: &[Point3<f64>]) -> Result<QuadricCoeffs> {
    if points.len() < ELLIPSOID_MIN_POINTS {
        return Err(Error::TooFewPoints { needed: ELLIPSOID_MIN_POINTS, got: points.len() });
    }
    let refs: Vec<&[f64]> = points.iter().map(|p| p.coords.as_slice()).collect();
    let (mean, scale) = normalizing_transform(&refs, 3)?;

    let rows = points.len().max(10);
    let mut design = DMatrix::<f64>::zeros(rows, 10);
    for (r, p) in points.iter().enumerate() {
        let x = (p.x - mean[0]) * scale;
        let y = (p.y - mean[1]) * scale;
        let z = (p.z - mean[2]) * scale;
        let row = [x * x, y * y, z * z, x * y, x * z, y * z, x, y, z, 1.0];
        for (c, v) in row.into_iter().enumerate() {
            design[(r, c)] = v;
        }
    }
    let svd = design.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::DegenerateConfiguration("singular value decomposition failed"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let smallest = order[0];
    let second = svd.singular_values[order[1]];
    let largest = svd.singular_values[order[order.len() - 1]];
    if second <= 1e-10 * largest {
        return Err(Error::DegenerateConfiguration("points do not determine a unique quadric"));
    }
    let v: Vec<f64> = v_t.row(smallest).iter().copied().collect();
    let normalized = QuadricCoeffs([v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]]);

    let (m, lin, constant) = normalized.parts();
    let mut qn = Matrix4::<f64>::zeros();
    qn.fixed_view_mut::<3, 3>(0, 0).copy_from(&m);
    for k in 0..3 {
        qn[(k, 3)] = lin[k] / 2.0;
        qn[(3, k)] = lin[k] / 2.0;
    }
    qn[(3, 3)] = constant;
    let mut h = Matrix4::<f64>::identity() * scale;
    for k in 0..3 {
        h[(k, 3)] = -scale * mean[k];
    }
    h[(3, 3)] = 1.0;
    let q = h.transpose() * qn * h;
    let m = q.fixed_view::<3, 3>(0, 0).into_owned();
    let lin = nalgebra::Vector3::new(2.0 * q[(0, 3)], 2.0 * q[(1, 3)], 2.0 * q[(2, 3)]);
    let quadric = QuadricCoeffs::from_parts(&m, &lin, q[(3, 3)])
        .map_err(|_| Error::DegenerateConfiguration("zero quadric"))?;
    if !quadric.is_ellipsoid() {
        return Err(Error::NotAnEllipsoid);
    }
    Ok(quadric)
}

fn minmax(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

// ── Fitted models ─────────────────────────────────────────────────────────

/// An algebraic ellipse or ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FittedModel {
    Conic(ConicCoeffs),
    Quadric(QuadricCoeffs),
}

impl FittedModel {
    /// Signed Sampson distance; points where the gradient vanishes count as
    /// infinitely far.
    pub fn deviation(&self, p: &[f64]) -> f64 {
        let d = match self {
            FittedModel::Conic(c) => signed_sampson(p, c),
            FittedModel::Quadric(q) => signed_sampson(p, q),
        };
        d.unwrap_or(f64::INFINITY)
    }

    pub fn deviations(&self, points: &PointSet) -> Vec<f64> {
        (0..points.len()).map(|i| self.deviation(points.coords(i))).collect()
    }

    pub fn coefficients(&self) -> &[f64] {
        match self {
            FittedModel::Conic(c) => &c.0,
            FittedModel::Quadric(q) => &q.0,
        }
    }

    pub fn ellipse(&self) -> Result<EllipseParams> {
        match self {
            FittedModel::Conic(c) => ellipse_from_conic(c),
            FittedModel::Quadric(_) => Err(Error::NotAnEllipse),
        }
    }

    pub fn ellipsoid(&self) -> Result<EllipsoidParams> {
        match self {
            FittedModel::Quadric(q) => ellipsoid_from_quadric(q),
            FittedModel::Conic(_) => Err(Error::NotAnEllipsoid),
        }
    }
}

/// Fits the dimension-appropriate model to the points selected by `mask`
/// (all points when `None`).
pub fn fit_model(points: &PointSet, mask: Option<&[bool]>) -> Result<FittedModel> {
    let chosen = match mask {
        Some(m) => points.select(m),
        None => points.clone(),
    };
    match chosen {
        PointSet::Planar(p) => fit_ellipse_direct(&p).map(FittedModel::Conic),
        PointSet::Spatial(p) => fit_ellipsoid_direct(&p).map(FittedModel::Quadric),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FittedModel,
    pub labels: DetectionLabels,
    pub iterations: usize,
    pub converged: bool,
}

// ── Iterative refinement ─────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub tau_scale: f64,
    /// Share of the starting inliers the trimmed fit is computed from.
    pub trim_fraction: f64,
    /// Random minimal-sample starts searched for the trimmed fit, besides
    /// the starting labels themselves.
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Defaults to the minimal sample size for the data dimension.
    pub min_points: Option<usize>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { tau_scale: 3.0, trim_fraction: 0.5, starts: 100, seed: 0, max_iter: 50, min_points: None }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_scale > 0.0 && self.trim_fraction > 0.0 && self.trim_fraction <= 1.0 && self.max_iter >= 1 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid refinement settings: {self:?}")))
        }
    }

    pub fn min_points_for(&self, dim: usize) -> usize {
        self.min_points.unwrap_or_else(|| min_points_for_dim(dim)).max(min_points_for_dim(dim))
    }
}

/// `τ_scale · 1.4826 · MAD` of the signed deviations of the given points,
/// floored at `max(1e-12, 1e-8 · spread)` where `spread` is the data's
/// RMS distance from its centroid.
pub fn robust_threshold(deviations: &[f64], tau_scale: f64, spread: f64) -> f64 {
    let floor = THRESHOLD_FLOOR.max(RELATIVE_FLOOR * spread);
    let finite: Vec<f64> = deviations.iter().copied().filter(|d| d.is_finite()).collect();
    if finite.is_empty() {
        return floor;
    }
    (tau_scale * MAD_TO_SIGMA * mad(&finite)).max(floor)
}

/// RMS distance of the points from their centroid.
pub fn spread(points: &PointSet) -> f64 {
    let (n, dim) = (points.len(), points.dim());
    if n == 0 {
        return 0.0;
    }
    let mean: Vec<f64> = (0..dim).map(|k| (0..n).map(|i| points.coords(i)[k]).sum::<f64>() / n as f64).collect();
    let ss: f64 = (0..n)
        .map(|i| points.coords(i).iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>())
        .sum();
    (ss / n as f64).sqrt()
}

/// Mask of the `keep` members of `pool` with the smallest |deviation|, ties
/// broken by index.
fn closest_subset(dev: &[f64], pool: &[bool], keep: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dev.len()).filter(|&i| pool[i]).collect();
    order.sort_by(|&a, &b| dev[a].abs().total_cmp(&dev[b].abs()).then(a.cmp(&b)));
    let mut mask = vec![false; dev.len()];
    for &i in order.iter().take(keep) {
        mask[i] = true;
    }
    mask
}

fn mask_hash(mask: &[bool]) -> u64 {
    use std::hash::{DefaultHasher, Hash, Hasher};
    let mut h = DefaultHasher::new();
    mask.hash(&mut h);
    h.finish()
}

struct Iterate {
    inliers: Vec<bool>,
    model: FittedModel,
    score: f64,
}

/// Sum of squared deviations over `mask`.
fn trimmed_objective(dev: &[f64], mask: &[bool]) -> f64 {
    dev.iter().zip(mask).filter(|(_, &k)| k).map(|(d, _)| d * d).sum()
}

/// Concentration steps: fit to `mask`, keep the `keep` members of `pool`
/// closest to the fit, repeat. Stops after `steps` fits or once the subset
/// is stable.
fn concentrate(points: &PointSet, pool: &[bool], keep: usize, mut mask: Vec<bool>, steps: usize) -> Option<(Vec<bool>, f64)> {
    let mut objective = f64::INFINITY;
    for _ in 0..steps {
        let dev = fit_model(points, Some(&mask)).ok()?.deviations(points);
        let next = closest_subset(&dev, pool, keep);
        objective = trimmed_objective(&dev, &next);
        if next == mask {
            break;
        }
        mask = next;
    }
    Some((mask, objective))
}

/// Steps given to each random start before the best few are iterated to
/// convergence.
const SCREEN_STEPS: usize = 2;
const FINALISTS: usize = 5;

/// The `keep`-point subset of the starting inliers with the smallest sum of
/// squared deviations that concentration steps reach, searched from the
/// starting labels and from `cfg.starts` random minimal samples.
fn trimmed_core(points: &PointSet, start: &[bool], keep: usize, cfg: &RefineConfig) -> Vec<bool> {
    let pool: Vec<usize> = (0..start.len()).filter(|&i| start[i]).collect();
    let n = min_points_for_dim(points.dim());
    let mut screened: Vec<(usize, Vec<bool>, f64)> = (0..=cfg.starts)
        .into_par_iter()
        .filter_map(|i| {
            let mask = if i == 0 {
                start.to_vec()
            } else {
                let mut r = rng(derive_seed(cfg.seed, &[i as u64]));
                let mut mask = vec![false; start.len()];
                index::sample(&mut r, pool.len(), n).iter().for_each(|j| mask[pool[j]] = true);
                mask
            };
            concentrate(points, start, keep, mask, SCREEN_STEPS).map(|(m, obj)| (i, m, obj))
        })
        .collect();
    screened.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
    screened.truncate(FINALISTS);
    screened
        .into_par_iter()
        .filter_map(|(i, mask, _)| concentrate(points, start, keep, mask, cfg.max_iter).map(|(m, obj)| (i, m, obj)))
        .collect::<Vec<_>>()
        .into_iter()
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))
        .map_or_else(|| start.to_vec(), |(_, m, _)| m)
}

/// Fits to the current inliers, reclassifies every point against the fit
/// with an adaptive threshold, and repeats until the labels stop changing.
///
/// The loop starts from a trimmed fit: the `trim_fraction` share of the
/// starting inliers that fits best, found by concentration steps from the
/// starting labels and from random minimal samples. Leftover outliers in the
/// starting set then cannot drag the first fit far enough to lock in their
/// own bias. Starting labels that already agree with their own fit are kept
/// unless the trimmed loop ends with a median inlier deviation below half of
/// theirs.
///
/// A label cycle stops the loop and returns the iterate on the cycle with
/// the smallest median inlier deviation. A fit failure after the first
/// iteration returns the last valid iterate with `converged = false`.
pub fn refine(points: &PointSet, initial: &DetectionLabels, cfg: &RefineConfig) -> Result<FitResult> {
    cfg.validate()?;
    if initial.len() != points.len() {
        return Err(Error::LengthMismatch { left: points.len(), right: initial.len() });
    }
    let min_points = cfg.min_points_for(points.dim());
    let data_spread = spread(points);
    let start = initial.inlier_mask();
    let start_count = initial.inlier_count();
    if start_count < min_points {
        return Err(Error::TooFewPoints { needed: min_points, got: start_count });
    }

    let finish = |inliers: &[bool], model: FittedModel, iterations: usize, converged: bool| {
        let outliers: Vec<bool> = inliers.iter().map(|&k| !k).collect();
        FitResult { model, labels: initial.updated(&outliers, Stage::Model), iterations, converged }
    };
    let reclassify = |model: &FittedModel, inliers: &[bool]| {
        let dev = model.deviations(points);
        let inlier_dev: Vec<f64> = dev.iter().zip(inliers).filter(|(_, &k)| k).map(|(&d, _)| d).collect();
        let tau = robust_threshold(&inlier_dev, cfg.tau_scale, data_spread);
        let score = median(inlier_dev.iter().map(|d| d.abs()));
        (dev.iter().map(|d| d.abs() <= tau).collect::<Vec<bool>>(), score)
    };

    // Starting labels that already agree with their own fit stand unless the
    // trimmed path reaches a clearly tighter fixpoint: a fit dragged by
    // outliers can widen its own threshold enough to accept them all. A
    // switched result faces the same test, so refining the output again
    // changes nothing.
    let mut start = start;
    let mut total = 0;
    for _ in 0..cfg.max_iter {
        let start_count = start.iter().filter(|&&k| k).count();
        let model = fit_model(points, Some(&start))?;
        let (start_labels, start_score) = reclassify(&model, &start);
        let keep = ((cfg.trim_fraction * start_count as f64).ceil() as usize).clamp(min_points, start_count);
        let core = trimmed_core(points, &start, keep, cfg);
        let fallback = Iterate { inliers: start.clone(), model, score: f64::INFINITY };
        let (inliers, final_model, iterations, converged, score) =
            iterate_from(points, core, fallback, min_points, cfg, &reclassify);
        let fixpoint = start_labels == start;
        if fixpoint && (inliers == start || score >= SWITCH_RATIO * start_score) {
            return Ok(finish(&start, model, total.max(1), true));
        }
        total += iterations;
        if !converged {
            return Ok(finish(&inliers, final_model, total, converged));
        }
        start = inliers;
    }
    let model = fit_model(points, Some(&start))?;
    Ok(finish(&start, model, total, false))
}

/// A fixpoint must be clearly tighter than the starting labels to replace
/// them.
const SWITCH_RATIO: f64 = 0.5;

/// New labels for every point against a fit, plus the median inlier
/// deviation under the current labels.
type Reclassify<'a> = dyn Fn(&FittedModel, &[bool]) -> (Vec<bool>, f64) + 'a;

/// The reclassification loop from `inliers`; returns the final labels and
/// model, the iteration count, whether the labels settled, and the median
/// inlier deviation of the result.
fn iterate_from(
    points: &PointSet,
    mut inliers: Vec<bool>,
    fallback: Iterate,
    min_points: usize,
    cfg: &RefineConfig,
    reclassify: &Reclassify<'_>,
) -> (Vec<bool>, FittedModel, usize, bool, f64) {
    let mut last = fallback;
    let mut history: VecDeque<(u64, Iterate)> = VecDeque::new();
    for iteration in 2..=cfg.max_iter {
        let model = match fit_model(points, Some(&inliers)) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("refit failed at iteration {iteration} ({e}); keeping previous model");
                return (last.inliers, last.model, iteration - 1, false, last.score);
            }
        };
        let (next, score) = reclassify(&model, &inliers);
        if next == inliers {
            return (inliers, model, iteration, true, score);
        }
        if next.iter().filter(|&&k| k).count() < min_points {
            log::warn!("refinement would leave fewer than {min_points} inliers; stopping");
            return (inliers, model, iteration, false, score);
        }
        let current = Iterate { inliers: inliers.clone(), model, score };
        let next_hash = mask_hash(&next);
        history.push_back((mask_hash(&current.inliers), current));
        if history.len() > 8 {
            history.pop_front();
        }
        if let Some(pos) = history.iter().position(|(h, it)| *h == next_hash && it.inliers == next) {
            let best = history
                .into_iter()
                .skip(pos)
                .map(|(_, it)| it)
                .reduce(|a, b| if b.score < a.score { b } else { a })
                .expect("history is nonempty");
            log::warn!("refinement labels cycle; returning the tightest iterate on the cycle");
            return (best.inliers, best.model, iteration, false, best.score);
        }
        let (_, it) = history.back().expect("just pushed");
        last = Iterate { inliers: it.inliers.clone(), model: it.model, score: it.score };
        inliers = next;
    }
    // Out of iterations: fit the final labels once more so model and
    // labels agree.
    match fit_model(points, Some(&inliers)) {
        Ok(model) => {
            let score = reclassify(&model, &inliers).1;
            (inliers, model, cfg.max_iter, false, score)
        }
        Err(_) => (last.inliers, last.model, cfg.max_iter, false, last.score),
    }
}

// ── Vanilla RANSAC baseline ──────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Fixed consensus threshold on the Sampson distance. When absent, each
    /// trial derives `τ_scale · 1.4826 · MAD` from its own deviations and the
    /// trial with the smallest threshold wins.
    pub inlier_threshold: Option<f64>,
    pub tau_scale: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { iterations: 1000, inlier_threshold: None, tau_scale: 3.0, seed: 0 }
    }
}

struct Trial {
    index: usize,
    model: FittedModel,
    consensus: Vec<bool>,
    support: usize,
    /// Lower is better; ties go to larger support, then lower index.
    score: f64,
}

impl Trial {
    fn beats(&self, other: &Trial) -> bool {
        (self.score, std::cmp::Reverse(self.support), self.index)
            < (other.score, std::cmp::Reverse(other.support), other.index)
    }
}

pub fn vanilla_ransac(points: &PointSet, cfg: &RansacConfig) -> Result<FitResult> {
    let n = min_points_for_dim(points.dim());
    if points.len() < n {
        return Err(Error::TooFewPoints { needed: n, got: points.len() });
    }
    if let Some(t) = cfg.inlier_threshold {
        if !(t > 0.0) {
            return Err(Error::InvalidConfig(format!("RANSAC threshold must be positive, got {t}")));
        }
    }
    let data_spread = spread(points);
    let trials: Vec<Option<Trial>> = (0..cfg.iterations)
        .into_par_iter()
        .map(|index| {
            let mut r = rng(derive_seed(cfg.seed, &[index as u64]));
            let sample = index::sample(&mut r, points.len(), n);
            let mut mask = vec![false; points.len()];
            sample.iter().for_each(|i| mask[i] = true);
            let model = fit_model(points, Some(&mask)).ok()?;
            let dev = model.deviations(points);
            let (tau, fixed) = match cfg.inlier_threshold {
                Some(t) => (t, true),
                None => (robust_threshold(&dev, cfg.tau_scale, data_spread), false),
            };
            let consensus: Vec<bool> = dev.iter().map(|d| d.abs() <= tau).collect();
            let support = consensus.iter().filter(|&&k| k).count();
            let score = if fixed { -(support as f64) } else { tau };
            Some(Trial { index, model, consensus, support, score })
        })
        .collect();

    let best = trials
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.beats(&a) { b } else { a })
        .ok_or(Error::NoValidModel)?;

    let model = if best.support >= n {
        fit_model(points, Some(&best.consensus)).unwrap_or(best.model)
    } else {
        best.model
    };
    let outliers: Vec<bool> = best.consensus.iter().map(|&k| !k).collect();
    Ok(FitResult {
        model,
        labels: DetectionLabels::from_outlier_mask(&outliers, Stage::Model),
        iterations: cfg.iterations,
        converged: true,
    })
}

/// Probability that at least one of `k` minimal samples of size `n` is
/// outlier-free when a fraction `w` of the data are inliers.
pub fn ransac_success_prob(w: f64, n: u32, k: u64) -> f64 {
    1.0 - (1.0 - w.powi(n as i32)).powf(k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{conic_from_ellipse, quadric_from_ellipsoid};
    use approx::assert_relative_eq;

    fn ellipse_points(e: &EllipseParams, ts: &[f64]) -> Vec<Point2<f64>> {
        ts.iter().map(|&t| Point2::from(e.point_at(t))).collect()
    }

    fn coeff_distance(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn unit_circle_from_six_points() {
        let e = EllipseParams::standard(1.0, 1.0).unwrap();
        let ts: Vec<f64> = (0..6).map(|k| k as f64 * 1.047).collect();
        let c = fit_ellipse_direct(&ellipse_points(&e, &ts)).unwrap();
        assert!(coeff_distance(&c.0, &conic_from_ellipse(&e).0) < 1e-9);
    }

    #[test]
    fn eccentric_ellipse_from_five_points() {
        let e = EllipseParams::standard(5.0, 1.56125).unwrap();
        let pts = ellipse_points(&e, &[0.1, 1.2, 2.5, 3.9, 5.1]);
        let got = ellipse_from_conic(&fit_ellipse_direct(&pts).unwrap()).unwrap();
        assert_relative_eq!(got.a(), 5.0, max_relative = 1e-6);
        assert_relative_eq!(got.b(), 1.56125, max_relative = 1e-6);
        assert!(got.center[0].abs() < 1e-6 && got.center[1].abs() < 1e-6);
        assert!(got.rotation.abs() < 1e-6);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts: Vec<Point2<f64>> = (0..5).map(|i| Point2::new(i as f64, 2.0 * i as f64 + 1.0)).collect();
        assert!(matches!(fit_ellipse_direct(&pts), Err(Error::DegenerateConfiguration(_))));
        assert!(matches!(fit_ellipse_direct(&pts[..4]), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn sphere_from_twelve_points() {
        let s = EllipsoidParams::standard(1.0, 1.0, 1.0).unwrap();
        let pts: Vec<Point3<f64>> = (0..12)
            .map(|k| {
                let th = 0.3 + 0.55 * k as f64;
                let ph = 1.7 * k as f64;
                Point3::from(s.point_at([th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]))
            })
            .collect();
        let q = fit_ellipsoid_direct(&pts).unwrap();
        assert!(coeff_distance(&q.0, &quadric_from_ellipsoid(&s).0) < 1e-9);
    }

    #[test]
    fn coplanar_points_are_degenerate() {
        let pts: Vec<Point3<f64>> =
            (0..9).map(|k| Point3::new((k as f64).cos() * 2.0, (k as f64 * 0.7).sin(), 1.0)).collect();
        assert!(matches!(fit_ellipsoid_direct(&pts), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn success_probability_examples() {
        assert!(ransac_success_prob(0.5, 5, 146) >= 0.99);
        assert!(ransac_success_prob(0.5, 9, 2356) >= 0.99);
        assert_eq!(ransac_success_prob(0.3, 4, 0), 0.0);
        // the line case rounds: 16 trials fall just short of 0.99
        assert!(ransac_success_prob(0.5, 2, 16) < 0.99);
        assert!(ransac_success_prob(0.5, 2, 17) >= 0.99);
    }

    #[test]
    fn refine_keeps_correct_labels_on_exact_data() {
        let e = EllipseParams::new([1.0, -2.0], 4.0, 2.0, 0.3).unwrap();
        let ts: Vec<f64> = (0..40).map(|k| k as f64 * 0.157).collect();
        let points = PointSet::Planar(ellipse_points(&e, &ts));
        let initial = DetectionLabels::all_inliers(40, Stage::Proximity);
        let res = refine(&points, &initial, &RefineConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.labels, initial);
    }

    #[test]
    fn refine_rejects_too_few_inliers() {
        let e = EllipseParams::standard(2.0, 1.0).unwrap();
        let points = PointSet::Planar(ellipse_points(&e, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]));
        let initial = DetectionLabels::from_outlier_mask(&[true, true, false, false, false, false], Stage::Proximity);
        assert_eq!(
            refine(&points, &initial, &RefineConfig::default()),
            Err(Error::TooFewPoints { needed: 5, got: 4 })
        );
    }

    #[test]
    fn ransac_on_clean_points() {
        let e = EllipseParams::new([0.5, 0.5], 3.0, 1.0, -0.4).unwrap();
        let ts: Vec<f64> = (0..30).map(|k| k as f64 * 0.21).collect();
        let points = PointSet::Planar(ellipse_points(&e, &ts));
        let cfg = RansacConfig { iterations: 50, inlier_threshold: Some(1e-6), ..Default::default() };
        let res = vanilla_ransac(&points, &cfg).unwrap();
        assert_eq!(res.labels.outlier_count(), 0);
        let fitted = res.model.ellipse().unwrap();
        assert_relative_eq!(fitted.a(), 3.0, max_relative = 1e-8);
        let adaptive = vanilla_ransac(&points, &RansacConfig { iterations: 50, ..Default::default() }).unwrap();
        assert_eq!(adaptive.labels.outlier_count(), 0);
    }

    #[test]
    fn ransac_rejects_degenerate_only_data() {
        let pts: Vec<Point2<f64>> = (0..10).map(|i| Point2::new(i as f64, 0.0)).collect();
        let cfg = RansacConfig { iterations: 20, ..Default::default() };
        assert_eq!(vanilla_ransac(&PointSet::Planar(pts), &cfg), Err(Error::NoValidModel));
    }
}
