use super::DetectorError;
use crate::rng::SplitMix64;

/// Random linear map used to compare descriptors during coreset selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `out_dim × in_dim`; `None` is the identity.
    matrix: Option<Vec<f64>>,
    seed: u64,
}

/// Gaussian projection with entries `N(0, 1) / sqrt(out_dim)`, or the exact
/// identity when `out_dim == in_dim`.
pub fn make_projector(
    in_dim: usize,
    out_dim: usize,
    seed: u64,
) -> Result<Projector, DetectorError> {
    if out_dim == 0 || out_dim > in_dim {
        return Err(DetectorError::BadDims { in_dim, out_dim });
    }
    if out_dim == in_dim {
        return Ok(Projector::identity(in_dim));
    }
    let mut rng = SplitMix64::new(seed);
    let scale = 1.0 / (out_dim as f64).sqrt();
    let matrix = (0..out_dim * in_dim)
        .map(|_| rng.next_gaussian() * scale)
        .collect();
    Ok(Projector {
        in_dim,
        out_dim,
        matrix: Some(matrix),
        seed,
    })
}

impl Projector {
    pub fn identity(dim: usize) -> Self {
        Self {
            in_dim: dim,
            out_dim: dim,
            matrix: None,
            seed: 0,
        }
    }

    /// Projector with an explicit matrix (row-major `out_dim × in_dim`).
    pub fn from_matrix(
        in_dim: usize,
        out_dim: usize,
        matrix: Vec<f64>,
    ) -> Result<Self, DetectorError> {
        if out_dim == 0 || out_dim > in_dim || matrix.len() != in_dim * out_dim {
            return Err(DetectorError::BadDims { in_dim, out_dim });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(DetectorError::BadDims { in_dim, out_dim });
        }
        Ok(Self {
            in_dim,
            out_dim,
            matrix: Some(matrix),
            seed: 0,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_identity(&self) -> bool {
        self.matrix.is_none()
    }

    pub fn matrix(&self) -> Option<&[f64]> {
        self.matrix.as_deref()
    }

    pub fn apply(&self, v: &[f32]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.in_dim);
        match &self.matrix {
            None => v.iter().map(|x| f64::from(*x)).collect(),
            Some(m) => m
                .chunks_exact(self.in_dim)
                .map(|row| row.iter().zip(v).map(|(a, b)| a * f64::from(*b)).sum())
                .collect(),
        }
    }
}
