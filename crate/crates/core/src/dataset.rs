//! Point datasets with stable row identifiers.

use std::collections::HashSet;

use thiserror::Error;

use crate::sphere::{AmbientVector, GeometryError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("dataset has no rows")]
    Empty,
    #[error("row {row} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{ids} ids for {points} points")]
    IdCountMismatch { ids: usize, points: usize },
    #[error("duplicate row id {0}")]
    DuplicateId(u64),
    #[error("row {row}: {source}")]
    InvalidRow { row: usize, source: GeometryError },
}

/// An ordered collection of `n ≥ 1` points of common dimension, each tagged
/// with a unique row id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<AmbientVector>,
    ids: Vec<u64>,
    dim: usize,
}

impl Dataset {
    /// Builds a dataset with ids `0..n` in row order.
    pub fn new(points: Vec<AmbientVector>) -> Result<Self, DatasetError> {
        let ids = (0..points.len() as u64).collect();
        Self::with_ids(points, ids)
    }

    pub fn with_ids(points: Vec<AmbientVector>, ids: Vec<u64>) -> Result<Self, DatasetError> {
        let first = points.first().ok_or(DatasetError::Empty)?;
        let dim = first.dim();
        if ids.len() != points.len() {
            return Err(DatasetError::IdCountMismatch {
                ids: ids.len(),
                points: points.len(),
            });
        }
        if let Some((row, p)) = points.iter().enumerate().find(|(_, p)| p.dim() != dim) {
            return Err(DatasetError::DimensionMismatch {
                row,
                expected: dim,
                found: p.dim(),
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(*id) {
                return Err(DatasetError::DuplicateId(*id));
            }
        }
        Ok(Self { points, ids, dim })
    }

    /// Builds a dataset from raw rows, validating every coordinate.
    pub fn from_rows<I, R>(rows: I) -> Result<Self, DatasetError>
    where
        I: IntoIterator<Item = R>,
        R: Into<Vec<f64>>,
    {
        let points = rows
            .into_iter()
            .enumerate()
            .map(|(row, r)| {
                AmbientVector::new(r.into())
                    .map_err(|source| DatasetError::InvalidRow { row, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(points)
    }

    pub(crate) fn from_trusted(points: Vec<AmbientVector>, ids: Vec<u64>, dim: usize) -> Self {
        debug_assert_eq!(points.len(), ids.len());
        debug_assert!(points.iter().all(|p| p.dim() == dim));
        Self { points, ids, dim }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false for a constructed dataset; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[AmbientVector] {
        &self.points
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &AmbientVector)> {
        self.ids.iter().copied().zip(self.points.iter())
    }

    /// Applies `f` to every point, keeping ids.
    pub fn map_points<F>(&self, mut f: F) -> Result<Self, DatasetError>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let points = self
            .points
            .iter()
            .enumerate()
            .map(|(row, p)| {
                AmbientVector::new(f(p.coords()))
                    .map_err(|source| DatasetError::InvalidRow { row, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_ids(points, self.ids.clone())
    }
}
