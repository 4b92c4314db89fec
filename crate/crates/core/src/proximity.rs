//! Stage 1: proximity-based outlier detection on near-binary eigenvectors
//! of the heat-kernel graph Laplacian.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{DetectionLabels, Stage};
use crate::points::PointSet;
use crate::seed::{derive_seed, rng};
use crate::spectral::{point_spectrum, Spectrum};
use crate::stats::{median, quantile_sorted, sorted};

/// How per-eigenvector flags are merged into one outlier set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Any element flagged in any eligible eigenvector.
    #[default]
    Union,
    /// Only elements flagged above the interval, i.e. the protruding
    /// positive entries of small-block indicators.
    Protruding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EligibilityConfig {
    pub eig_threshold: f64,
    pub hf_threshold: f64,
    pub gamma: f64,
    pub max_iter: usize,
    /// Bandwidth rank multiplier.
    pub p: usize,
    /// Independent runs of the 1-D detector per eigenvector; the run with
    /// the smallest intra-class deviation wins.
    pub repeats: usize,
    pub aggregation: Aggregation,
    /// Smallest interval half-width on either side of the median, as a
    /// fraction of the eigenvector's range.
    pub min_width: f64,
    /// Eigenvectors whose retained majority has a relative spread at or
    /// below this are kept whatever their high-frequency measure.
    pub flat_tol: f64,
    /// Also keep eigenvectors whose high-frequency measure is below the
    /// threshold once their median is subtracted.
    pub centered: bool,
    /// Largest share of the points a single eigenvector may flag; a larger
    /// block is a weakly linked stretch of the model, not a set of outliers.
    pub max_block: f64,
}

impl Default for EligibilityConfig {
    fn default() -> Self {
        Self {
            eig_threshold: 0.1,
            hf_threshold: 0.5,
            gamma: 2.5,
            max_iter: 100,
            p: 4,
            repeats: 1,
            aggregation: Aggregation::Union,
            min_width: 0.015,
            flat_tol: 1e-7,
            centered: true,
            max_block: 1.0,
        }
    }
}

impl EligibilityConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eig_threshold > 0.0
            && self.hf_threshold > 0.0
            && self.hf_threshold <= 1.0
            && self.gamma > 0.0
            && self.max_iter >= 1
            && self.p >= 1
            && self.repeats >= 1
            && (0.0..1.0).contains(&self.min_width)
            && self.flat_tol >= 0.0
            && self.max_block > 0.0
            && self.max_block <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid proximity settings: {self:?}")))
        }
    }
}

/// `(Σ|f| − |Σf|) / Σ|f|`: 0 for single-signed vectors, 1 when positive
/// and negative mass cancel exactly.
pub fn high_frequency_measure(f: &[f64]) -> Result<f64> {
    let total: f64 = f.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return Err(Error::ZeroVector);
    }
    let net: f64 = f.iter().sum();
    Ok((total - net.abs()) / total)
}

/// Indices of eigenvectors with eigenvalue below `eig_threshold` and
/// high-frequency measure below `hf_threshold`, ascending by eigenvalue.
pub fn select_eligible(spectrum: &Spectrum, cfg: &EligibilityConfig) -> Result<Vec<usize>> {
    let mut eligible = Vec::new();
    for (i, &lambda) in spectrum.eigenvalues.iter().enumerate() {
        if lambda >= cfg.eig_threshold {
            break;
        }
        if high_frequency_measure(&spectrum.vector(i))? < cfg.hf_threshold {
            eligible.push(i);
        }
    }
    if eligible.is_empty() {
        Err(Error::NoEligibleVectors)
    } else {
        Ok(eligible)
    }
}

/// Outcome of the 1-D quantile-interval detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection1d {
    /// True for elements outside the final interval.
    pub outliers: Vec<bool>,
    pub interval: (f64, f64),
    pub iterations: usize,
    pub converged: bool,
    /// Interquartile range of the retained elements over the range of all
    /// elements; 0 when the vector is constant.
    pub majority_spread: f64,
}

impl Detection1d {
    pub fn flagged(&self) -> usize {
        self.outliers.iter().filter(|&&o| o).count()
    }

    /// Sum of squared deviations from each class mean.
    fn intra_class_deviation(&self, values: &[f64]) -> f64 {
        [false, true]
            .iter()
            .map(|&class| {
                let members: Vec<f64> =
                    values.iter().zip(&self.outliers).filter(|(_, &o)| o == class).map(|(&v, _)| v).collect();
                if members.is_empty() {
                    return 0.0;
                }
                let mean = members.iter().sum::<f64>() / members.len() as f64;
                members.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            })
            .sum()
    }
}

/// Iterative quantile-interval detector. Starts from a seeded random half
/// of the elements as inliers, then repeatedly rebuilds
/// `[μ − γ(μ − q₁), μ + γ(q₃ − μ)]` from the current inliers and
/// reclassifies every element until nothing changes.
pub fn detect_1d(values: &[f64], gamma: f64, min_width: f64, rng_seed: u64, max_iter: usize) -> Result<Detection1d> {
    if values.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: values.len() });
    }
    // Rank order makes the random half independent of input order.
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order.shuffle(&mut rng(rng_seed));
    let mut inliers = vec![false; values.len()];
    for &i in order.iter().take(values.len().div_ceil(2)) {
        inliers[i] = true;
    }
    detect_1d_from(values, gamma, min_width, inliers, max_iter)
}

/// The iteration of [`detect_1d`] from an explicit initial inlier set.
pub fn detect_1d_from(
    values: &[f64],
    gamma: f64,
    min_width: f64,
    initial_inliers: Vec<bool>,
    max_iter: usize,
) -> Result<Detection1d> {
    let (lo_all, hi_all) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let peak = lo_all.abs().max(hi_all.abs());
    // Absorbs rounding noise on vectors that are constant in exact arithmetic.
    let slack = 1e-9 * (hi_all - lo_all) + 1e-10 * peak;
    let floor = min_width * (hi_all - lo_all);

    let mut inliers = initial_inliers;
    let mut interval = (lo_all, hi_all);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let current = sorted(values.iter().zip(&inliers).filter(|(_, &k)| k).map(|(&v, _)| v));
        if current.is_empty() {
            return Err(Error::AllFlagged);
        }
        let q1 = quantile_sorted(&current, 0.25);
        let mu = quantile_sorted(&current, 0.5);
        let q3 = quantile_sorted(&current, 0.75);
        let below = (gamma * (mu - q1)).max(floor) + slack;
        let above = (gamma * (q3 - mu)).max(floor) + slack;
        interval = (mu - below, mu + above);
        let next: Vec<bool> = values.iter().map(|&v| v >= interval.0 && v <= interval.1).collect();
        if !next.iter().any(|&k| k) {
            return Err(Error::AllFlagged);
        }
        if next == inliers {
            converged = true;
            break;
        }
        inliers = next;
    }
    let kept = sorted(values.iter().zip(&inliers).filter(|(_, &k)| k).map(|(&v, _)| v));
    let range = hi_all - lo_all;
    let majority_spread =
        if range > 0.0 { (quantile_sorted(&kept, 0.75) - quantile_sorted(&kept, 0.25)) / range } else { 0.0 };
    Ok(Detection1d { outliers: inliers.iter().map(|&k| !k).collect(), interval, iterations, converged, majority_spread })
}

/// Best of `repeats` seeded runs by intra-class deviation, lowest run
/// index on ties.
pub fn detect_1d_repeated(
    values: &[f64],
    gamma: f64,
    min_width: f64,
    rng_seed: u64,
    max_iter: usize,
    repeats: usize,
) -> Result<Detection1d> {
    if repeats <= 1 {
        return detect_1d(values, gamma, min_width, rng_seed, max_iter);
    }
    let mut best: Option<(f64, Detection1d)> = None;
    let mut last_err = None;
    for r in 0..repeats {
        match detect_1d(values, gamma, min_width, derive_seed(rng_seed, &[r as u64]), max_iter) {
            Ok(d) => {
                let score = d.intra_class_deviation(values);
                if best.as_ref().is_none_or(|(s, _)| score < *s) {
                    best = Some((score, d));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.map(|(_, d)| d).ok_or_else(|| last_err.unwrap_or(Error::AllFlagged))
}

/// Diagnostics for one eligible eigenvector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EligibleVector {
    pub index: usize,
    pub eigenvalue: f64,
    pub hf_measure: f64,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximityReport {
    pub labels: DetectionLabels,
    pub bandwidth: f64,
    pub eigenvalues: Vec<f64>,
    pub eligible: Vec<EligibleVector>,
}

/// Minimum point count for the proximity stage.
pub const MIN_PROXIMITY_POINTS: usize = 12;

pub fn proximity_stage(points: &PointSet, cfg: &EligibilityConfig, rng_seed: u64) -> Result<DetectionLabels> {
    proximity_stage_report(points, cfg, rng_seed).map(|r| r.labels)
}

/// Stage 1 with full diagnostics.
pub fn proximity_stage_report(points: &PointSet, cfg: &EligibilityConfig, rng_seed: u64) -> Result<ProximityReport> {
    cfg.validate()?;
    let k = points.len();
    if k < MIN_PROXIMITY_POINTS {
        return Err(Error::TooFewPoints { needed: MIN_PROXIMITY_POINTS, got: k });
    }
    let (bandwidth, spectrum) = point_spectrum(points, cfg.p)?;
    // The high-frequency test alone rejects sign-mixed indicators, which an
    // eigensolver returns freely inside a (near-)degenerate eigenspace, so a
    // flat majority also qualifies a candidate. It also rejects the
    // indicator of a weakly attached point, whose D-orthogonality to the
    // constant vector spreads a small opposite-sign offset over every other
    // entry; measured from the median, that vector is a single spike.
    let candidates: Vec<usize> = (0..spectrum.len()).take_while(|&i| spectrum.eigenvalues[i] < cfg.eig_threshold).collect();
    let detections: Vec<(usize, f64, f64, Option<Detection1d>)> = candidates
        .par_iter()
        .map(|&i| {
            let f = spectrum.vector(i);
            let hf = high_frequency_measure(&f)?;
            let level = median(f.iter().copied());
            let centered: Vec<f64> = f.iter().map(|v| v - level).collect();
            let hf_centered = high_frequency_measure(&centered).unwrap_or(1.0);
            let seed = derive_seed(rng_seed, &[i as u64]);
            match detect_1d_repeated(&f, cfg.gamma, cfg.min_width, seed, cfg.max_iter, cfg.repeats) {
                Ok(d) => Ok((i, hf, hf_centered, Some(d))),
                Err(Error::AllFlagged) => {
                    log::warn!("eigenvector {i}: interval excluded every element; ignored");
                    Ok((i, hf, hf_centered, None))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let mut outliers = vec![false; k];
    let mut eligible = Vec::new();
    for (i, hf, hf_centered, det) in detections {
        let Some(det) = det else { continue };
        let localized = cfg.centered && hf_centered < cfg.hf_threshold;
        if hf >= cfg.hf_threshold && det.majority_spread > cfg.flat_tol && !localized {
            continue;
        }
        let f = spectrum.eigenvectors.column(i);
        let keep: Vec<bool> = det
            .outliers
            .iter()
            .enumerate()
            .map(|(j, &o)| match cfg.aggregation {
                Aggregation::Union => o,
                Aggregation::Protruding => o && f[j] > det.interval.1,
            })
            .collect();
        let flagged = keep.iter().filter(|&&o| o).count();
        if flagged as f64 > cfg.max_block * k as f64 {
            continue;
        }
        outliers.iter_mut().zip(&keep).for_each(|(o, &f)| *o |= f);
        eligible.push(EligibleVector { index: i, eigenvalue: spectrum.eigenvalues[i], hf_measure: hf, flagged });
    }
    if eligible.is_empty() {
        log::warn!("no eligible eigenvectors; proximity stage flags nothing");
    }

    let count = outliers.iter().filter(|&&o| o).count();
    if 2 * count > k {
        log::warn!("proximity stage flagged {count} of {k} points, more than half; discarding its outliers");
        outliers.iter_mut().for_each(|o| *o = false);
    }
    Ok(ProximityReport {
        labels: DetectionLabels::from_outlier_mask(&outliers, Stage::Proximity),
        bandwidth,
        eigenvalues: spectrum.eigenvalues,
        eligible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    #[test]
    fn hf_measure_examples() {
        assert_eq!(high_frequency_measure(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(high_frequency_measure(&[1.0, -1.0, 1.0, -1.0]).unwrap(), 1.0);
        // Σ|f| = 3.0, |Σf| = 2.8
        assert_relative_eq!(high_frequency_measure(&[1.0, 1.0, 0.9, -0.1]).unwrap(), 0.2 / 3.0, epsilon = 1e-15);
        assert_eq!(high_frequency_measure(&[0.0, 0.0]), Err(Error::ZeroVector));
    }

    fn spectrum_of(values: &[f64], vectors: Vec<Vec<f64>>) -> Spectrum {
        let k = vectors[0].len();
        let cols: Vec<f64> = vectors.into_iter().flatten().collect();
        Spectrum { eigenvalues: values.to_vec(), eigenvectors: DMatrix::from_column_slice(k, values.len(), &cols) }
    }

    #[test]
    fn eligibility_filters() {
        let s = spectrum_of(
            &[0.0, 0.05, 0.07, 0.5],
            vec![vec![1.0; 4], vec![1.0, -1.0, 1.0, -1.0], vec![1.0, 0.9, 0.0, 0.0], vec![1.0; 4]],
        );
        assert_eq!(select_eligible(&s, &EligibilityConfig::default()).unwrap(), vec![0, 2]);
        let s = spectrum_of(&[0.2, 0.3], vec![vec![1.0; 4], vec![1.0; 4]]);
        assert_eq!(select_eligible(&s, &EligibilityConfig::default()), Err(Error::NoEligibleVectors));
    }

    #[test]
    fn constant_vector_flags_nothing() {
        let d = detect_1d(&[0.7; 20], 2.5, 0.0, 3, 100).unwrap();
        assert_eq!(d.flagged(), 0);
        assert!(d.converged);
        // rounding noise around a constant
        let noisy: Vec<f64> = (0..20).map(|i| 1.0 + (i % 3) as f64 * 1e-16).collect();
        assert_eq!(detect_1d(&noisy, 2.5, 0.0, 3, 100).unwrap().flagged(), 0);
    }

    #[test]
    fn minority_ones_and_zeros_flagged() {
        let mut v = vec![0.0; 90];
        v.extend([1.0; 10]);
        let agree = (0..100u64)
            .filter(|&s| {
                let d = detect_1d(&v, 2.5, 0.0, s, 100).unwrap();
                d.outliers.iter().zip(&v).all(|(&o, &x)| o == (x == 1.0))
            })
            .count();
        assert!(agree >= 99, "{agree}");

        let mirrored: Vec<f64> = v.iter().map(|x| 1.0 - x).collect();
        let agree = (0..100u64)
            .filter(|&s| {
                let d = detect_1d(&mirrored, 2.5, 0.0, s, 100).unwrap();
                d.outliers.iter().zip(&mirrored).all(|(&o, &x)| o == (x == 0.0))
            })
            .count();
        assert!(agree >= 99, "{agree}");
    }

    #[test]
    fn short_input_rejected() {
        assert_eq!(detect_1d(&[1.0, 2.0, 3.0], 2.5, 0.0, 0, 10), Err(Error::TooFewPoints { needed: 4, got: 3 }));
    }

    #[test]
    fn repeats_pick_a_valid_run() {
        let mut v = vec![0.0; 40];
        v.extend([1.0; 4]);
        let d = detect_1d_repeated(&v, 2.5, 0.0, 11, 100, 5).unwrap();
        assert_eq!(d.flagged(), 4);
    }

    #[test]
    fn config_validation() {
        assert!(EligibilityConfig::default().validate().is_ok());
        let bad = EligibilityConfig { hf_threshold: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = EligibilityConfig { gamma: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn too_few_points_for_stage() {
        let pts = PointSet::from_rows(&(0..11).map(|i| vec![i as f64, 0.0]).collect::<Vec<_>>()).unwrap();
        assert_eq!(
            proximity_stage(&pts, &EligibilityConfig::default(), 0),
            Err(Error::TooFewPoints { needed: 12, got: 11 })
        );
    }
}
