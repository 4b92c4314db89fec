//! Two-stage outlier elimination for ellipse and ellipsoid fitting.
//!
//! The first stage builds a heat-kernel graph over the samples and looks for
//! weakly connected points in the near-binary eigenvectors of its Laplacian.
//! The second stage fits an algebraic model to the surviving points and
//! reclassifies everything against it until the labels settle.
//!
//! ```
//! use conic_purge::prelude::*;
//!
//! let truth = ellipse_from_eccentricity(5.0, 0.95, [0.0, 0.0], 0.0).unwrap();
//! let cfg = ExperimentConfig::new(TruthModel::Ellipse(truth), 100, 30, 0.01, 2.0, 7);
//! let data = make_dataset(&cfg).unwrap();
//! let out = two_stage(&data.points, &cfg.proximity, &cfg.refine, 7).unwrap();
//! let fitted = out.fit.model.ellipse().unwrap();
//! assert!((fitted.a() - 5.0).abs() < 0.1);
//! ```

// `!(x > 0.0)` is how NaN gets rejected along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod geometry;
pub mod labels;
pub mod model;
pub mod points;
pub mod proximity;
pub mod seed;
pub mod spectral;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::experiment::{
        evaluate, fit_error, run_pipeline, run_sweep, two_stage, Pipeline, SweepParameter, SweepRow, SweepSpec,
        TrialOutcome, TwoStageOutput,
    };
    pub use crate::geometry::{
        conic_from_ellipse, ellipse_from_conic, ellipse_nonoverlap, ellipsoid_from_quadric, ellipsoid_nonoverlap,
        quadric_from_ellipsoid, sampson_distance, signed_sampson, ConicCoeffs, EllipseParams, EllipsoidParams,
        QuadricCoeffs,
    };
    pub use crate::labels::{DetectionLabels, Label, Stage};
    pub use crate::model::{
        fit_ellipse_direct, fit_ellipsoid_direct, fit_model, ransac_success_prob, refine, vanilla_ransac, FitResult,
        FittedModel, RansacConfig, RefineConfig,
    };
    pub use crate::points::PointSet;
    pub use crate::proximity::{
        detect_1d, high_frequency_measure, proximity_stage, proximity_stage_report, select_eligible, Aggregation,
        EligibilityConfig, ProximityReport,
    };
    pub use crate::spectral::{
        generalized_eigs, graph_laplacian, heat_kernel_weights, pairwise_distances, select_bandwidth,
        DistanceMatrix, LaplacianPair, Spectrum,
    };
    pub use crate::synth::{
        detection_metrics, ellipse_from_eccentricity, make_dataset, DetectionMetrics, ExperimentConfig,
        LabeledDataset, OutlierMode, TruthModel,
    };
}
