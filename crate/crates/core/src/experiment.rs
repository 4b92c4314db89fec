//! End-to-end pipelines, per-trial scoring and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ellipse_nonoverlap, ellipsoid_nonoverlap, DEFAULT_GRID_RESOLUTION, DEFAULT_MC_SAMPLES};
use crate::labels::{DetectionLabels, Stage};
use crate::model::{fit_model, refine, vanilla_ransac, FitResult, FittedModel, RansacConfig, RefineConfig};
use crate::points::PointSet;
use crate::proximity::{proximity_stage_report, EligibilityConfig, ProximityReport};
use crate::seed::derive_seed;
use crate::stats::{quantile_sorted, sorted};
use crate::synth::{detection_metrics, make_dataset, DetectionMetrics, ExperimentConfig, LabeledDataset, TruthModel};

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageOutput {
    pub proximity: ProximityReport,
    pub fit: FitResult,
}

/// Proximity stage followed by model refinement seeded with its labels.
pub fn two_stage(
    points: &PointSet,
    proximity: &EligibilityConfig,
    refine_cfg: &RefineConfig,
    seed: u64,
) -> Result<TwoStageOutput> {
    let report = proximity_stage_report(points, proximity, seed)?;
    let fit = refine(points, &report.labels, refine_cfg)?;
    Ok(TwoStageOutput { proximity: report, fit })
}

/// Fitting strategies compared by the benchmark harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Proximity stage then model refinement.
    TwoStage,
    /// Direct fit to every point, no elimination.
    Plain,
    /// Minimal-sample consensus baseline.
    Ransac,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::TwoStage => "two_stage",
            Pipeline::Plain => "plain",
            Pipeline::Ransac => "ransac",
        }
    }
}

/// Runs one pipeline on a dataset. The algorithm seed is derived from the
/// dataset seed so the whole trial is reproducible from the config.
pub fn run_pipeline(dataset: &LabeledDataset, pipeline: Pipeline, ransac: &RansacConfig) -> Result<FitResult> {
    let cfg = &dataset.config;
    let algo_seed = derive_seed(cfg.seed, &[0xA160]);
    match pipeline {
        Pipeline::TwoStage => two_stage(&dataset.points, &cfg.proximity, &cfg.refine, algo_seed).map(|o| o.fit),
        Pipeline::Plain => {
            let model = fit_model(&dataset.points, None)?;
            Ok(FitResult {
                model,
                labels: DetectionLabels::all_inliers(dataset.points.len(), Stage::Model),
                iterations: 1,
                converged: true,
            })
        }
        Pipeline::Ransac => vanilla_ransac(&dataset.points, &RansacConfig { seed: algo_seed, ..ransac.clone() }),
    }
}

/// Non-overlap ratio of a fitted model against the truth; infinite when
/// the fit is not a valid ellipse/ellipsoid of the right dimension.
pub fn fit_error(model: &FittedModel, truth: &TruthModel, seed: u64) -> f64 {
    match truth {
        TruthModel::Ellipse(t) => model
            .ellipse()
            .map(|f| ellipse_nonoverlap(&f, t, DEFAULT_GRID_RESOLUTION))
            .unwrap_or(f64::INFINITY),
        TruthModel::Ellipsoid(t) => model
            .ellipsoid()
            .map(|f| ellipsoid_nonoverlap(&f, t, DEFAULT_MC_SAMPLES, seed))
            .unwrap_or(f64::INFINITY),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub error: f64,
    pub metrics: DetectionMetrics,
    pub failed: bool,
}

/// Scores one pipeline on one dataset. Pipeline failures score infinite
/// error and zero precision/recall.
pub fn evaluate(dataset: &LabeledDataset, pipeline: Pipeline, ransac: &RansacConfig) -> TrialOutcome {
    match run_pipeline(dataset, pipeline, ransac) {
        Ok(fit) => TrialOutcome {
            error: fit_error(&fit.model, &dataset.config.model, derive_seed(dataset.config.seed, &[0xE220])),
            metrics: detection_metrics(&fit.labels, &dataset.truth).expect("labels match dataset length"),
            failed: false,
        },
        Err(e) => {
            log::warn!("{} failed on seed {}: {e}", pipeline.as_str(), dataset.config.seed);
            TrialOutcome {
                error: f64::INFINITY,
                metrics: DetectionMetrics { precision: 0.0, recall: 0.0, f1: 0.0 },
                failed: true,
            }
        }
    }
}

/// Scenario field varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Outliers,
    Inliers,
    Sigma0,
    Sigma1,
    Gamma,
    TauScale,
}

impl SweepParameter {
    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidConfig(format!("{self:?} must be a nonnegative integer, got {value}")))
            }
        };
        match self {
            SweepParameter::Outliers => cfg.outliers = count()?,
            SweepParameter::Inliers => cfg.inliers = count()?,
            SweepParameter::Sigma0 => cfg.sigma0 = value,
            SweepParameter::Sigma1 => cfg.sigma1 = value,
            SweepParameter::Gamma => cfg.proximity.gamma = value,
            SweepParameter::TauScale => cfg.refine.tau_scale = value,
        }
        Ok(())
    }
}

fn default_trials() -> usize {
    20
}

fn default_pipelines() -> Vec<Pipeline> {
    vec![Pipeline::TwoStage]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_pipelines")]
    pub pipelines: Vec<Pipeline>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub ransac: RansacConfig,
}

/// One aggregated curve point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param_value: f64,
    pub pipeline: Pipeline,
    pub mean_error: f64,
    pub median_error: f64,
    pub p90_error: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

impl SweepRow {
    fn aggregate(param_value: f64, pipeline: Pipeline, outcomes: &[TrialOutcome]) -> Self {
        let n = outcomes.len().max(1) as f64;
        let errors = sorted(outcomes.iter().map(|o| o.error));
        let q = |p: f64| if errors.is_empty() { f64::NAN } else { quantile_sorted(&errors, p) };
        Self {
            param_value,
            pipeline,
            mean_error: errors.iter().sum::<f64>() / n,
            median_error: q(0.5),
            p90_error: q(0.9),
            mean_precision: outcomes.iter().map(|o| o.metrics.precision).sum::<f64>() / n,
            mean_recall: outcomes.iter().map(|o| o.metrics.recall).sum::<f64>() / n,
        }
    }
}

/// Per-trial outcomes of a sweep, indexed `[grid point][trial][pipeline]`.
pub type SweepOutcomes = Vec<Vec<Vec<TrialOutcome>>>;

/// Runs every trial of a sweep. Trial `(i, j)` uses the dataset seed
/// `derive_seed(master_seed, [i, j])`, so results do not depend on
/// scheduling.
pub fn run_sweep_trials(spec: &SweepSpec) -> Result<SweepOutcomes> {
    let mut configs = Vec::with_capacity(spec.grid.len());
    for &value in &spec.grid {
        let mut cfg = spec.base.clone();
        spec.parameter.apply(&mut cfg, value)?;
        cfg.validate()?;
        configs.push(cfg);
    }
    let jobs: Vec<(usize, usize)> =
        (0..configs.len()).flat_map(|i| (0..spec.trials).map(move |j| (i, j))).collect();
    let flat: Vec<Vec<TrialOutcome>> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let cfg = ExperimentConfig { seed: derive_seed(spec.master_seed, &[i as u64, j as u64]), ..configs[i].clone() };
            let dataset = make_dataset(&cfg)?;
            Ok(spec.pipelines.iter().map(|&p| evaluate(&dataset, p, &spec.ransac)).collect())
        })
        .collect::<Result<_>>()?;
    let mut out: SweepOutcomes = vec![Vec::with_capacity(spec.trials); configs.len()];
    for ((i, _), outcomes) in jobs.into_iter().zip(flat) {
        out[i].push(outcomes);
    }
    Ok(out)
}

/// Aggregated rows in grid order, then in the order pipelines are listed.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let trials = run_sweep_trials(spec)?;
    Ok(aggregate_sweep(spec, &trials))
}

pub fn aggregate_sweep(spec: &SweepSpec, trials: &SweepOutcomes) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for (i, per_point) in trials.iter().enumerate() {
        for (k, &pipeline) in spec.pipelines.iter().enumerate() {
            let outcomes: Vec<TrialOutcome> = per_point.iter().map(|t| t[k]).collect();
            rows.push(SweepRow::aggregate(spec.grid[i], pipeline, &outcomes));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EllipseParams;

    fn small_spec(grid: Vec<f64>) -> SweepSpec {
        let model = TruthModel::Ellipse(EllipseParams::standard(5.0, 3.0).unwrap());
        SweepSpec {
            base: ExperimentConfig::new(model, 40, 5, 0.05, 2.0, 0),
            parameter: SweepParameter::Outliers,
            grid,
            trials: 2,
            pipelines: vec![Pipeline::TwoStage, Pipeline::Plain],
            master_seed: 9,
            ransac: RansacConfig::default(),
        }
    }

    #[test]
    fn empty_grid_gives_no_rows() {
        assert!(run_sweep(&small_spec(vec![])).unwrap().is_empty());
    }

    #[test]
    fn rows_follow_grid_and_pipeline_order() {
        let rows = run_sweep(&small_spec(vec![2.0, 4.0])).unwrap();
        let keys: Vec<(f64, Pipeline)> = rows.iter().map(|r| (r.param_value, r.pipeline)).collect();
        assert_eq!(
            keys,
            vec![(2.0, Pipeline::TwoStage), (2.0, Pipeline::Plain), (4.0, Pipeline::TwoStage), (4.0, Pipeline::Plain)]
        );
        assert_eq!(rows, run_sweep(&small_spec(vec![2.0, 4.0])).unwrap());
    }

    #[test]
    fn fractional_counts_rejected() {
        assert!(run_sweep(&small_spec(vec![2.5])).is_err());
    }
}
