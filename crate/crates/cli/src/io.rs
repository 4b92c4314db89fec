use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use conic_purge::prelude::*;
use conic_purge::proximity::EligibleVector;
use serde_json::json;

/// Points read from a dataset CSV, with ground truth when the file has a
/// `label` column.
pub struct Dataset {
    pub points: PointSet,
    pub truth: Option<DetectionLabels>,
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(x), Some(y)) = (column("x"), column("y")) else {
        bail!(Error::InvalidConfig(format!("{}: header must name x and y columns", path.display())));
    };
    let mut coords = vec![x, y];
    coords.extend(column("z"));
    let label_col = column("label");

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let row = coords
            .iter()
            .map(|&c| {
                field(c).parse::<f64>().map_err(|_| {
                    Error::InvalidConfig(format!("row {}: cannot parse '{}' as a number", line + 1, field(c)))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
        if let Some(c) = label_col {
            labels.push(field(c).parse::<Label>()?);
        }
    }
    let points = PointSet::from_rows(&rows)?;
    let truth = label_col.map(|_| {
        let n = labels.len();
        DetectionLabels::new(labels, vec![Stage::Truth; n]).expect("equal lengths")
    });
    Ok(Dataset { points, truth })
}

pub fn write_dataset(path: &Path, points: &PointSet, labels: &DetectionLabels) -> Result<()> {
    let mut w = writer(path)?;
    let header: &[&str] = if points.dim() == 3 { &["x", "y", "z", "label"] } else { &["x", "y", "label"] };
    w.write_record(header)?;
    for i in 0..points.len() {
        let mut record: Vec<String> = points.coords(i).iter().map(f64::to_string).collect();
        record.push(labels.label(i).as_str().to_owned());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `index,label,stage` file written by [`write_labels`].
pub fn read_labels(path: &Path, expected_len: usize) -> Result<DetectionLabels> {
    let mut rdr = reader(path)?;
    let mut labels = Vec::new();
    let mut stages = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let index: usize = record.get(0).unwrap_or("").parse().map_err(|_| {
            Error::InvalidConfig(format!("{}: row {} has no valid index", path.display(), i + 1))
        })?;
        if index != i {
            bail!(Error::InvalidConfig(format!("{}: expected index {i}, found {index}", path.display())));
        }
        labels.push(record.get(1).unwrap_or("").parse::<Label>()?);
        stages.push(record.get(2).unwrap_or("").parse::<Stage>()?);
    }
    if labels.len() != expected_len {
        bail!(Error::LengthMismatch { left: expected_len, right: labels.len() });
    }
    Ok(DetectionLabels::new(labels, stages)?)
}

pub fn write_labels(path: &Path, labels: &DetectionLabels) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["index", "label", "stage"])?;
    for i in 0..labels.len() {
        w.write_record([i.to_string().as_str(), labels.label(i).as_str(), labels.stage(i).as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_model(path: &Path, model: &FittedModel) -> Result<()> {
    let value = match model {
        FittedModel::Conic(_) => json!({
            "kind": "ellipse",
            "coefficients": model.coefficients(),
            "params": model.ellipse().ok(),
        }),
        FittedModel::Quadric(_) => json!({
            "kind": "ellipsoid",
            "coefficients": model.coefficients(),
            "params": model.ellipsoid().ok(),
        }),
    };
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn write_spectrum(path: &Path, eigenvalues: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["index", "eigenvalue"])?;
    for (i, v) in eigenvalues.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_eligible(path: &Path, eligible: &[EligibleVector]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["eigenvalue", "hf_measure", "flagged_count"])?;
    for e in eligible {
        w.write_record([e.eigenvalue.to_string(), e.hf_measure.to_string(), e.flagged.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "param_value",
        "pipeline",
        "mean_error",
        "median_error",
        "p90_error",
        "mean_precision",
        "mean_recall",
    ])?;
    for r in rows {
        w.write_record([
            r.param_value.to_string(),
            r.pipeline.as_str().to_owned(),
            r.mean_error.to_string(),
            r.median_error.to_string(),
            r.p90_error.to_string(),
            r.mean_precision.to_string(),
            r.mean_recall.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| anyhow::Error::new(Error::InvalidConfig(format!("{}: {e}", path.display()))))
}
