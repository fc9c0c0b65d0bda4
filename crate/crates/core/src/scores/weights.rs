//! Weight actions and the Godambe pieces `J` and `H` of the weighted
//! estimating equations.

use nalgebra::{Cholesky, DMatrix, Dyn};

use super::moments::MomentMatrices;
use crate::error::{Result, WclError};

/// Weight actions of one cluster: `a1` (`r x dq`) multiplies the univariate
/// scores, `a2` (`n_theta x m2`) the pair scores.
#[derive(Debug, Clone)]
pub struct ClusterWeights {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    /// Whether `a2` is the optimal action (otherwise the chain-rule one).
    pub stage2_optimal: bool,
    /// Diagonal jitter that had to be added to factor an `omega`, if any.
    pub jitter: Option<f64>,
}

/// Weight actions for a whole dataset.
#[derive(Debug, Clone)]
pub enum WeightSet {
    /// Plain composite likelihood: `X_i^T` and `C_i^T`.
    Identity,
    /// Per-cluster actions, in dataset order.
    Clusters(Vec<ClusterWeights>),
}

impl WeightSet {
    pub fn is_identity(&self) -> bool {
        matches!(self, WeightSet::Identity)
    }

    /// Whether every cluster uses optimal stage-2 actions.
    pub fn stage2_optimal(&self) -> bool {
        match self {
            WeightSet::Identity => false,
            WeightSet::Clusters(c) => c.iter().all(|w| w.stage2_optimal),
        }
    }

    pub fn jitter_clusters(&self) -> usize {
        match self {
            WeightSet::Identity => 0,
            WeightSet::Clusters(c) => c.iter().filter(|w| w.jitter.is_some()).count(),
        }
    }
}

/// Symmetric factorization, retrying with a small diagonal jitter.
pub(crate) fn factor_spd(m: &DMatrix<f64>, cluster: &str, what: &str) -> Result<(Cholesky<f64, Dyn>, Option<f64>)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, None));
    }
    let scale = (m.trace() / m.nrows().max(1) as f64).abs().max(1.0);
    let mut jitter = 1e-10 * scale;
    for _ in 0..4 {
        let mut mm = m.clone();
        for i in 0..mm.nrows() {
            mm[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(mm) {
            return Ok((c, Some(jitter)));
        }
        jitter *= 100.0;
    }
    Err(WclError::Conditioning {
        cluster: cluster.to_string(),
        detail: format!("{what} is not positive definite"),
    })
}

impl ClusterWeights {
    /// Identity actions for a cluster with design `x` (`dq x r`).
    pub fn identity(x: &DMatrix<f64>, m: &MomentMatrices) -> Self {
        ClusterWeights {
            a1: x.transpose(),
            a2: m.pair_jacobian.transpose(),
            stage2_optimal: false,
            jitter: None,
        }
    }

    /// Optimal actions `psi1^T omega1^-1` and, when the full moments are
    /// present and `stage2` is set, `delta2^T omega2^-1`.
    pub fn optimal(m: &MomentMatrices, cluster: &str, stage2: bool) -> Result<Self> {
        let (c1, j1) = factor_spd(&m.omega1, cluster, "univariate score covariance")?;
        let a1 = c1.solve(&m.psi1).transpose();
        let mut jitter = j1;
        let (a2, stage2_optimal) = match (&m.omega2, &m.delta2) {
            (Some(o2), Some(d2)) if stage2 && !m.pairs.is_empty() => {
                let (c2, j2) = factor_spd(o2, cluster, "pair score covariance")?;
                jitter = match (jitter, j2) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                };
                (c2.solve(d2).transpose(), true)
            }
            _ => (m.pair_jacobian.transpose(), false),
        };
        Ok(ClusterWeights {
            a1,
            a2,
            stage2_optimal,
            jitter,
        })
    }
}

/// Sensitivity `H` and variability `J` of the stacked weighted equations
/// over `(a, theta)`. When the pair moments are missing only the
/// `a` blocks are filled and `full` is false.
#[derive(Debug, Clone)]
pub struct GodambePieces {
    pub j: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub full: bool,
}

impl GodambePieces {
    pub fn zeros(r: usize, nt: usize) -> Self {
        GodambePieces {
            j: DMatrix::zeros(r + nt, r + nt),
            h: DMatrix::zeros(r + nt, r + nt),
            full: true,
        }
    }

    /// Adds one cluster's contribution.
    pub fn add(&mut self, w: &ClusterWeights, m: &MomentMatrices) {
        let r = w.a1.nrows();
        let nt = w.a2.nrows();
        let a1o = &w.a1 * &m.omega1;
        let jaa = &a1o * w.a1.transpose();
        let haa = &w.a1 * &m.psi1;
        self.j.view_mut((0, 0), (r, r)).add_assign(&jaa);
        self.h.view_mut((0, 0), (r, r)).add_assign(&haa);
        match (&m.omega12, &m.omega2, &m.psi21, &m.delta2) {
            (Some(o12), Some(o2), Some(p21), Some(d2)) if nt > 0 => {
                let jat = &w.a1 * o12 * w.a2.transpose();
                let jtt = &w.a2 * o2 * w.a2.transpose();
                let hta = &w.a2 * p21;
                let htt = &w.a2 * d2;
                self.j.view_mut((0, r), (r, nt)).add_assign(&jat);
                self.j.view_mut((r, 0), (nt, r)).add_assign(&jat.transpose());
                self.j.view_mut((r, r), (nt, nt)).add_assign(&jtt);
                self.h.view_mut((r, 0), (nt, r)).add_assign(&hta);
                self.h.view_mut((r, r), (nt, nt)).add_assign(&htt);
            }
            _ => self.full = nt == 0 && self.full,
        }
    }

    pub fn merge(mut self, other: &GodambePieces) -> Self {
        self.j += &other.j;
        self.h += &other.h;
        self.full &= other.full;
        self
    }
}

trait AddAssignView {
    fn add_assign(&mut self, m: &DMatrix<f64>);
}

impl AddAssignView for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign(&mut self, m: &DMatrix<f64>) {
        *self += m;
    }
}
