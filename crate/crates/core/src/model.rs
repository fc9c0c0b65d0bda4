//! Data containers and latent correlation structures.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WclError};

/// One cluster or series: responses in `1..=K`, one covariate row per
/// observed coordinate, and the coordinate (time offset) of each
/// observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterData {
    pub id: String,
    pub y: Vec<usize>,
    pub x: Vec<Vec<f64>>,
    pub coords: Vec<usize>,
}

impl ClusterData {
    pub fn new(id: impl Into<String>, y: Vec<usize>, x: Vec<Vec<f64>>, coords: Vec<usize>) -> Result<Self> {
        let c = ClusterData {
            id: id.into(),
            y,
            x,
            coords,
        };
        c.validate(None, None)?;
        Ok(c)
    }

    /// Cluster with coordinates `0..d`.
    pub fn complete(id: impl Into<String>, y: Vec<usize>, x: Vec<Vec<f64>>) -> Result<Self> {
        let d = y.len();
        Self::new(id, y, x, (0..d).collect())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn validate(&self, categories: Option<usize>, p: Option<usize>) -> Result<()> {
        let d = self.y.len();
        if d == 0 {
            return Err(WclError::Domain(format!("cluster '{}' is empty", self.id)));
        }
        if self.x.len() != d || self.coords.len() != d {
            return Err(WclError::Domain(format!(
                "cluster '{}': {} responses, {} covariate rows, {} coordinates",
                self.id,
                d,
                self.x.len(),
                self.coords.len()
            )));
        }
        if self.coords.windows(2).any(|w| w[0] >= w[1]) {
            return Err(WclError::Domain(format!(
                "cluster '{}': coordinates must increase",
                self.id
            )));
        }
        if let Some(p) = p {
            if self.x.iter().any(|row| row.len() != p) {
                return Err(WclError::Domain(format!(
                    "cluster '{}': covariate rows must have {p} columns",
                    self.id
                )));
            }
        }
        let k = categories.unwrap_or(usize::MAX);
        if let Some(bad) = self.y.iter().find(|&&v| v == 0 || v > k) {
            return Err(WclError::Domain(format!(
                "cluster '{}': response {bad} outside 1..={k}",
                self.id
            )));
        }
        Ok(())
    }

    /// Pairs `(j, k)`, `j < k`, of positions within the cluster in
    /// lexicographic order, optionally limited to coordinate lag `max_lag`.
    pub fn pairs(&self, max_lag: Option<usize>) -> Vec<(usize, usize)> {
        let d = self.len();
        let mut out = Vec::with_capacity(d * d.saturating_sub(1) / 2);
        for j in 0..d {
            for k in (j + 1)..d {
                if let Some(m) = max_lag {
                    if self.coords[k] - self.coords[j] > m {
                        break;
                    }
                }
                out.push((j, k));
            }
        }
        out
    }
}

/// Number of covariates and categories implied by a dataset.
pub fn dataset_shape(data: &[ClusterData]) -> Result<(usize, usize)> {
    let first = data
        .first()
        .ok_or_else(|| WclError::Domain("dataset has no clusters".into()))?;
    let p = first.x.first().map(|r| r.len()).unwrap_or(0);
    let k = data.iter().flat_map(|c| c.y.iter()).copied().max().unwrap_or(0);
    for c in data {
        c.validate(Some(k), Some(p))?;
    }
    Ok((p, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    Unstructured,
    Exchangeable,
    Ar1,
}

impl std::str::FromStr for CorrelationKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unstructured" | "un" => Ok(CorrelationKind::Unstructured),
            "exchangeable" | "exch" => Ok(CorrelationKind::Exchangeable),
            "ar1" => Ok(CorrelationKind::Ar1),
            other => Err(format!(
                "unknown correlation '{other}' (expected unstructured, exchangeable or ar1)"
            )),
        }
    }
}

impl std::fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CorrelationKind::Unstructured => "unstructured",
            CorrelationKind::Exchangeable => "exchangeable",
            CorrelationKind::Ar1 => "ar1",
        })
    }
}

/// Latent correlation `R(theta)` indexed by coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CorrelationModel {
    /// One correlation per coordinate pair of `0..dim`, lexicographic.
    Unstructured {
        dim: usize,
        rho: Vec<f64>,
    },
    Exchangeable {
        rho: f64,
    },
    /// `rho^|t_k - t_j|`.
    Ar1 {
        rho: f64,
    },
}

/// Position of the pair `(j, k)`, `j < k`, in the lexicographic list of
/// pairs of `0..dim`.
#[inline]
pub fn pair_index(dim: usize, j: usize, k: usize) -> usize {
    debug_assert!(j < k && k < dim);
    j * (2 * dim - j - 1) / 2 + (k - j - 1)
}

impl CorrelationModel {
    /// Independence of the given kind; `dim` is used by the unstructured form.
    pub fn independent(kind: CorrelationKind, dim: usize) -> Self {
        match kind {
            CorrelationKind::Unstructured => CorrelationModel::Unstructured {
                dim,
                rho: vec![0.0; dim * dim.saturating_sub(1) / 2],
            },
            CorrelationKind::Exchangeable => CorrelationModel::Exchangeable { rho: 0.0 },
            CorrelationKind::Ar1 => CorrelationModel::Ar1 { rho: 0.0 },
        }
    }

    pub fn unstructured_from_matrix(r: &DMatrix<f64>) -> Self {
        let dim = r.nrows();
        let mut rho = Vec::new();
        for j in 0..dim {
            for k in (j + 1)..dim {
                rho.push(r[(j, k)]);
            }
        }
        CorrelationModel::Unstructured { dim, rho }
    }

    pub fn kind(&self) -> CorrelationKind {
        match self {
            CorrelationModel::Unstructured { .. } => CorrelationKind::Unstructured,
            CorrelationModel::Exchangeable { .. } => CorrelationKind::Exchangeable,
            CorrelationModel::Ar1 { .. } => CorrelationKind::Ar1,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            CorrelationModel::Unstructured { rho, .. } => rho.len(),
            _ => 1,
        }
    }

    pub fn theta(&self) -> Vec<f64> {
        match self {
            CorrelationModel::Unstructured { rho, .. } => rho.clone(),
            CorrelationModel::Exchangeable { rho } | CorrelationModel::Ar1 { rho } => vec![*rho],
        }
    }

    pub fn with_theta(&self, theta: &[f64]) -> Self {
        assert_eq!(theta.len(), self.n_params());
        match self {
            CorrelationModel::Unstructured { dim, .. } => CorrelationModel::Unstructured {
                dim: *dim,
                rho: theta.to_vec(),
            },
            CorrelationModel::Exchangeable { .. } => CorrelationModel::Exchangeable { rho: theta[0] },
            CorrelationModel::Ar1 { .. } => CorrelationModel::Ar1 { rho: theta[0] },
        }
    }

    /// Names of the correlation parameters, e.g. `rho_12` (1-based coordinates).
    pub fn param_names(&self) -> Vec<String> {
        match self {
            CorrelationModel::Unstructured { dim, .. } => {
                let mut v = Vec::new();
                for j in 0..*dim {
                    for k in (j + 1)..*dim {
                        v.push(format!("rho_{}_{}", j + 1, k + 1));
                    }
                }
                v
            }
            _ => vec!["rho".to_string()],
        }
    }

    /// Correlation between coordinates `cj < ck`.
    #[inline]
    pub fn rho(&self, cj: usize, ck: usize) -> f64 {
        match self {
            CorrelationModel::Unstructured { dim, rho } => rho[pair_index(*dim, cj, ck)],
            CorrelationModel::Exchangeable { rho } => *rho,
            CorrelationModel::Ar1 { rho } => rho.powi((ck - cj) as i32),
        }
    }

    /// The single parameter the pair correlation depends on and the
    /// derivative with respect to it.
    #[inline]
    pub fn drho(&self, cj: usize, ck: usize) -> (usize, f64) {
        match self {
            CorrelationModel::Unstructured { dim, .. } => (pair_index(*dim, cj, ck), 1.0),
            CorrelationModel::Exchangeable { .. } => (0, 1.0),
            CorrelationModel::Ar1 { rho } => {
                let lag = (ck - cj) as i32;
                (0, lag as f64 * rho.powi(lag - 1))
            }
        }
    }

    /// Correlation matrix over a set of increasing coordinates.
    pub fn matrix(&self, coords: &[usize]) -> DMatrix<f64> {
        let m = coords.len();
        DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                1.0
            } else {
                let (a, b) = if i < j {
                    (coords[i], coords[j])
                } else {
                    (coords[j], coords[i])
                };
                self.rho(a, b)
            }
        })
    }

    /// Checks that every pair correlation is inside the open unit interval
    /// and that the coordinates are admissible for the structure.
    pub fn check_coords(&self, coords: &[usize]) -> Result<()> {
        if let CorrelationModel::Unstructured { dim, .. } = self {
            if let Some(&c) = coords.iter().find(|&&c| c >= *dim) {
                return Err(WclError::Domain(format!(
                    "coordinate {} outside the {dim}-dimensional unstructured correlation",
                    c + 1
                )));
            }
        }
        for v in self.theta() {
            if !(v.abs() < 1.0) {
                return Err(WclError::Boundary(format!("correlation parameter {v} outside (-1, 1)")));
            }
        }
        Ok(())
    }

    /// Whether `R` restricted to the coordinates is positive definite.
    pub fn is_positive_definite(&self, coords: &[usize]) -> bool {
        self.matrix(coords).cholesky().is_some()
    }

    /// For an unstructured model whose matrix is not positive definite, the
    /// unstructured model of the nearest correlation matrix with eigenvalues
    /// at least `floor`; `None` when no repair is needed or possible.
    pub fn positive_definite_repair(&self, floor: f64) -> Option<CorrelationModel> {
        match self {
            CorrelationModel::Unstructured { dim, .. } => {
                let coords: Vec<usize> = (0..*dim).collect();
                let r = self.matrix(&coords);
                if r.clone().cholesky().is_some() {
                    return None;
                }
                Some(CorrelationModel::unstructured_from_matrix(&nearest_correlation(
                    &r, floor,
                )))
            }
            _ => None,
        }
    }

    /// Unconstrained coordinates (Fisher z of every correlation parameter).
    pub fn to_unconstrained(&self) -> Vec<f64> {
        self.theta().iter().map(|r| r.atanh()).collect()
    }

    pub fn from_unconstrained(&self, eta: &[f64]) -> Self {
        let theta: Vec<f64> = eta.iter().map(|e| e.tanh()).collect();
        self.with_theta(&theta)
    }
}

/// Nearest correlation matrix in Frobenius norm with eigenvalues at least
/// `floor`: alternating projections onto the eigenvalue-floored cone and
/// the unit-diagonal set, with Dykstra's correction (Higham's method).
pub fn nearest_correlation(r: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let n = r.nrows();
    let mut y = r.clone();
    let mut ds = DMatrix::zeros(n, n);
    for _ in 0..500 {
        let rk = &y - &ds;
        let eig = SymmetricEigen::new(rk.clone());
        let vals = eig.eigenvalues.map(|v| v.max(floor));
        let x = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        ds = &x - &rk;
        let mut next = x.clone();
        next.fill_diagonal(1.0);
        let moved = (&next - &y).abs().max();
        y = next;
        if moved < 1e-12 {
            break;
        }
    }
    // floor the spectrum once more and rescale to a unit diagonal
    let eig = SymmetricEigen::new(y);
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let x = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            x[(i, j)] / (x[(i, i)] * x[(j, j)]).sqrt()
        }
    })
}
