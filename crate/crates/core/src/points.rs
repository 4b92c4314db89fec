use nalgebra::{Point2, Point3};

use crate::error::{Error, Result};

/// An ordered collection of planar or spatial samples.
#[derive(Debug, Clone, PartialEq)]
pub enum PointSet {
    Planar(Vec<Point2<f64>>),
    Spatial(Vec<Point3<f64>>),
}

impl PointSet {
    pub fn len(&self) -> usize {
        match self {
            PointSet::Planar(p) => p.len(),
            PointSet::Spatial(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            PointSet::Planar(_) => 2,
            PointSet::Spatial(_) => 3,
        }
    }

    /// Coordinates of point `i` as a slice of length `dim()`.
    pub fn coords(&self, i: usize) -> &[f64] {
        match self {
            PointSet::Planar(p) => p[i].coords.as_slice(),
            PointSet::Spatial(p) => p[i].coords.as_slice(),
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.coords(i)
            .iter()
            .zip(self.coords(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Builds a point set from rows of 2 or 3 coordinates.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(2, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite coordinate".into()));
        }
        match dim {
            2 => Ok(PointSet::Planar(rows.iter().map(|r| Point2::new(r[0], r[1])).collect())),
            3 => Ok(PointSet::Spatial(
                rows.iter().map(|r| Point3::new(r[0], r[1], r[2])).collect(),
            )),
            d => Err(Error::DimensionMismatch { expected: 2, got: d }),
        }
    }

    /// Keeps the points whose mask entry is true, preserving order.
    pub fn select(&self, mask: &[bool]) -> PointSet {
        fn pick<T: Clone>(v: &[T], mask: &[bool]) -> Vec<T> {
            v.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| p.clone()).collect()
        }
        match self {
            PointSet::Planar(p) => PointSet::Planar(pick(p, mask)),
            PointSet::Spatial(p) => PointSet::Spatial(pick(p, mask)),
        }
    }

    /// Reorders points so that output `i` is input `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> PointSet {
        match self {
            PointSet::Planar(p) => PointSet::Planar(order.iter().map(|&i| p[i]).collect()),
            PointSet::Spatial(p) => PointSet::Spatial(order.iter().map(|&i| p[i]).collect()),
        }
    }
}
