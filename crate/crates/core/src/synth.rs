//! Seeded synthetic scenarios and detection-quality metrics.

use nalgebra::{Point2, Point3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EllipseParams, EllipsoidParams};
use crate::labels::{DetectionLabels, Label, Stage};
use crate::model::RefineConfig;
use crate::points::PointSet;
use crate::proximity::EligibilityConfig;
use crate::seed::{derive_seed, rng};

/// Ground-truth model of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthModel {
    Ellipse(EllipseParams),
    Ellipsoid(EllipsoidParams),
}

impl TruthModel {
    pub fn dim(&self) -> usize {
        match self {
            TruthModel::Ellipse(_) => 2,
            TruthModel::Ellipsoid(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierMode {
    /// Model points displaced by N(0, σ₁²) per coordinate.
    #[default]
    Gaussian,
    /// Uniform over the model's bounding box grown by 3σ₁ on every side.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: TruthModel,
    pub inliers: usize,
    pub outliers: usize,
    pub sigma0: f64,
    pub sigma1: f64,
    pub seed: u64,
    #[serde(default)]
    pub outlier_mode: OutlierMode,
    #[serde(default)]
    pub proximity: EligibilityConfig,
    #[serde(default)]
    pub refine: RefineConfig,
}

impl ExperimentConfig {
    pub fn new(model: TruthModel, inliers: usize, outliers: usize, sigma0: f64, sigma1: f64, seed: u64) -> Self {
        Self {
            model,
            inliers,
            outliers,
            sigma0,
            sigma1,
            seed,
            outlier_mode: OutlierMode::Gaussian,
            proximity: EligibilityConfig::default(),
            refine: RefineConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inliers < 12 {
            return Err(Error::InvalidConfig(format!("need at least 12 inliers, got {}", self.inliers)));
        }
        if !(self.sigma0 >= 0.0) || !(self.sigma1 >= self.sigma0) || !self.sigma1.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise levels must satisfy 0 <= sigma0 <= sigma1 (got {}, {})",
                self.sigma0, self.sigma1
            )));
        }
        self.proximity.validate()?;
        self.refine.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub points: PointSet,
    pub truth: DetectionLabels,
    pub config: ExperimentConfig,
}

/// `b = a·√(1 − ε²)`.
pub fn ellipse_from_eccentricity(a: f64, eccentricity: f64, center: [f64; 2], rotation: f64) -> Result<EllipseParams> {
    if !(0.0..1.0).contains(&eccentricity) {
        return Err(Error::InvalidConfig(format!("eccentricity must lie in [0, 1), got {eccentricity}")));
    }
    EllipseParams::new(center, a, a * (1.0 - eccentricity * eccentricity).sqrt(), rotation)
}

fn unit_direction<R: Rng>(r: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [r.sample(StandardNormal), r.sample(StandardNormal), r.sample(StandardNormal)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return v.map(|x| x / n);
        }
    }
}

fn noise(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("validated noise level")
}

/// Draws `N` noisy model points and `M` outliers, then shuffles them.
/// Planar model points sit at evenly spaced parametric angles from a seeded
/// phase (inliers and outliers each get their own grid); spatial ones use
/// uniform random directions on the unit sphere mapped through the axes.
pub fn make_dataset(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut r = rng(derive_seed(cfg.seed, &[0xDA7A]));
    let total = cfg.inliers + cfg.outliers;
    let (inlier_noise, outlier_noise) = (noise(cfg.sigma0), noise(cfg.sigma1));

    let mut rows: Vec<(Vec<f64>, Label)> = Vec::with_capacity(total);
    let phase: f64 = r.random_range(0.0..std::f64::consts::TAU);
    let on_model = |r: &mut rand_chacha::ChaCha8Rng, i: usize, n: usize| -> Vec<f64> {
        match &cfg.model {
            TruthModel::Ellipse(e) => e.point_at(phase + std::f64::consts::TAU * i as f64 / n as f64).to_vec(),
            TruthModel::Ellipsoid(e) => e.point_at(unit_direction(r)).to_vec(),
        }
    };
    for i in 0..cfg.inliers {
        let p = on_model(&mut r, i, cfg.inliers).into_iter().map(|c| c + inlier_noise.sample(&mut r)).collect();
        rows.push((p, Label::Inlier));
    }
    let (lo, hi) = bounding_box(&cfg.model, 3.0 * cfg.sigma1);
    for i in 0..cfg.outliers {
        let p: Vec<f64> = match cfg.outlier_mode {
            OutlierMode::Gaussian => on_model(&mut r, i, cfg.outliers).into_iter().map(|c| c + outlier_noise.sample(&mut r)).collect(),
            OutlierMode::Uniform => lo.iter().zip(&hi).map(|(&l, &h)| if h > l { r.random_range(l..h) } else { l }).collect(),
        };
        rows.push((p, Label::Outlier));
    }
    rows.shuffle(&mut r);

    let points = match cfg.model {
        TruthModel::Ellipse(_) => PointSet::Planar(rows.iter().map(|(p, _)| Point2::new(p[0], p[1])).collect()),
        TruthModel::Ellipsoid(_) => {
            PointSet::Spatial(rows.iter().map(|(p, _)| Point3::new(p[0], p[1], p[2])).collect())
        }
    };
    let labels: Vec<Label> = rows.iter().map(|(_, l)| *l).collect();
    let truth = DetectionLabels::new(labels, vec![Stage::Truth; total])?;
    Ok(LabeledDataset { points, truth, config: cfg.clone() })
}

fn bounding_box(model: &TruthModel, margin: f64) -> (Vec<f64>, Vec<f64>) {
    let (center, half): (Vec<f64>, Vec<f64>) = match model {
        TruthModel::Ellipse(e) => (e.center.to_vec(), e.half_extent().to_vec()),
        TruthModel::Ellipsoid(e) => (e.center.to_vec(), e.half_extent().to_vec()),
    };
    let lo = center.iter().zip(&half).map(|(c, h)| c - h - margin).collect();
    let hi = center.iter().zip(&half).map(|(c, h)| c + h + margin).collect();
    (lo, hi)
}

/// Precision, recall and F1 on the outlier class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Empty denominators score 1 when the other count is also empty, 0
/// otherwise.
pub fn detection_metrics(predicted: &DetectionLabels, truth: &DetectionLabels) -> Result<DetectionMetrics> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: truth.len() });
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for i in 0..truth.len() {
        match (predicted.is_outlier(i), truth.is_outlier(i)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize, other_empty: bool| {
        if den == 0 {
            if other_empty {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp, tp + fneg == 0);
    let recall = ratio(tp, tp + fneg, tp + fp == 0);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(DetectionMetrics { precision, recall, f1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eccentricity_examples() {
        let circle = ellipse_from_eccentricity(3.0, 0.0, [0.0, 0.0], 0.0).unwrap();
        assert_eq!(circle.semi_axes, [3.0, 3.0]);
        let e = ellipse_from_eccentricity(5.0, 0.95, [0.0, 0.0], 0.0).unwrap();
        assert_relative_eq!(e.b(), 1.5612494995995996, max_relative = 1e-15);
        assert_relative_eq!(e.b() * e.b(), 25.0 * (1.0 - 0.95 * 0.95), max_relative = 1e-14);
        let thin = ellipse_from_eccentricity(5.0, 0.999_999, [0.0, 0.0], 0.0).unwrap();
        assert!(thin.b() > 0.0 && thin.b() < 0.01);
        assert!(ellipse_from_eccentricity(5.0, 1.0, [0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn metrics_examples() {
        let truth = DetectionLabels::from_outlier_mask(&[true, true, false, false], Stage::Truth);
        let m = detection_metrics(&truth, &truth).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let none = DetectionLabels::all_inliers(4, Stage::Model);
        let m = detection_metrics(&none, &truth).unwrap();
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
        let clean = DetectionLabels::all_inliers(4, Stage::Truth);
        assert_eq!(detection_metrics(&none, &clean).unwrap().precision, 1.0);

        let mut truth_mask = vec![false; 30];
        truth_mask[..10].iter_mut().for_each(|m| *m = true);
        let mut pred_mask = vec![false; 30];
        pred_mask[..8].iter_mut().for_each(|m| *m = true);
        pred_mask[20] = true;
        pred_mask[21] = true;
        let m = detection_metrics(
            &DetectionLabels::from_outlier_mask(&pred_mask, Stage::Model),
            &DetectionLabels::from_outlier_mask(&truth_mask, Stage::Truth),
        )
        .unwrap();
        assert_relative_eq!(m.precision, 0.8);
        assert_relative_eq!(m.recall, 0.8);
        assert!(detection_metrics(&none, &DetectionLabels::all_inliers(3, Stage::Truth)).is_err());
    }

    #[test]
    fn config_validation() {
        let e = TruthModel::Ellipse(EllipseParams::standard(5.0, 2.0).unwrap());
        assert!(ExperimentConfig::new(e, 11, 0, 0.1, 0.1, 0).validate().is_err());
        assert!(ExperimentConfig::new(e, 12, 0, 0.2, 0.1, 0).validate().is_err());
        assert!(ExperimentConfig::new(e, 12, 0, 0.0, 0.0, 0).validate().is_ok());
    }
}
