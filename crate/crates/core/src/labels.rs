use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Inlier,
    Outlier,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Inlier => "inlier",
            Label::Outlier => "outlier",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inlier" | "0" => Ok(Label::Inlier),
            "outlier" | "1" => Ok(Label::Outlier),
            other => Err(Error::InvalidConfig(format!("unknown label '{other}'"))),
        }
    }
}

/// Which step assigned a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Proximity,
    Model,
    /// Ground truth from a synthetic generator.
    Truth,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Proximity => "proximity",
            Stage::Model => "model",
            Stage::Truth => "truth",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "proximity" => Ok(Stage::Proximity),
            "model" => Ok(Stage::Model),
            "truth" => Ok(Stage::Truth),
            other => Err(Error::InvalidConfig(format!("unknown stage '{other}'"))),
        }
    }
}

/// Per-point inlier/outlier classification with the stage that decided it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionLabels {
    labels: Vec<Label>,
    stages: Vec<Stage>,
}

impl DetectionLabels {
    pub fn new(labels: Vec<Label>, stages: Vec<Stage>) -> Result<Self> {
        if labels.len() != stages.len() {
            return Err(Error::LengthMismatch { left: labels.len(), right: stages.len() });
        }
        Ok(Self { labels, stages })
    }

    pub fn from_outlier_mask(mask: &[bool], stage: Stage) -> Self {
        Self {
            labels: mask.iter().map(|&o| if o { Label::Outlier } else { Label::Inlier }).collect(),
            stages: vec![stage; mask.len()],
        }
    }

    pub fn all_inliers(len: usize, stage: Stage) -> Self {
        Self { labels: vec![Label::Inlier; len], stages: vec![stage; len] }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn stage(&self, i: usize) -> Stage {
        self.stages[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn is_outlier(&self, i: usize) -> bool {
        self.labels[i] == Label::Outlier
    }

    pub fn outlier_mask(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l == Label::Outlier).collect()
    }

    pub fn inlier_mask(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l == Label::Inlier).collect()
    }

    pub fn outlier_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Label::Outlier).count()
    }

    pub fn inlier_count(&self) -> usize {
        self.len() - self.outlier_count()
    }

    /// Relabels from `mask`, tagging only the points whose label changed.
    pub fn updated(&self, outlier_mask: &[bool], stage: Stage) -> Self {
        let mut next = self.clone();
        for (i, &o) in outlier_mask.iter().enumerate() {
            let label = if o { Label::Outlier } else { Label::Inlier };
            if label != next.labels[i] {
                next.labels[i] = label;
                next.stages[i] = stage;
            }
        }
        next
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            labels: order.iter().map(|&i| self.labels[i]).collect(),
            stages: order.iter().map(|&i| self.stages[i]).collect(),
        }
    }
}
