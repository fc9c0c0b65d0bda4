//! Simulation designs, covariate generation and sampling from the
//! discretized multivariate normal.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WclError};
use crate::kernels::normal::{cdf, quantile};
use crate::margins::{LinkFunction, MarginEval, ParameterVector};
use crate::model::{ClusterData, CorrelationModel};

/// Covariate generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// Time `1..d`, a per-cluster group indicator, their product and a
    /// uniform(-1, 1) covariate.
    Longitudinal41,
    /// One long series: a Bernoulli(0.4) indicator, a uniform(0, 1)
    /// covariate with Gaussian-copula AR(0.5) dependence, and their product.
    TimeSeries42,
    /// `p` independent uniform(-1, 1) covariates per observation.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub kind: DesignKind,
    /// Cluster size.
    pub d: usize,
    /// Number of clusters per replication.
    pub n: usize,
    /// Number of replications.
    pub b: usize,
    pub link: LinkFunction,
    pub correlation: CorrelationModel,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub seed: u64,
}

/// The four-coordinate correlation matrix of the longitudinal design.
pub const LONGITUDINAL_R: [f64; 6] = [0.6348, 0.5821, 0.6916, 0.3662, 0.8059, 0.0435];

/// Probit cutpoints giving `k` equally likely categories at zero predictor.
pub fn equal_probit_cutpoints(k: usize) -> Vec<f64> {
    (1..k).map(|m| quantile(m as f64 / k as f64)).collect()
}

impl SimDesign {
    /// Four repeated measurements, five equally likely categories, probit.
    pub fn longitudinal41(n: usize, b: usize, seed: u64) -> Self {
        SimDesign {
            kind: DesignKind::Longitudinal41,
            d: 4,
            n,
            b,
            link: LinkFunction::Probit,
            correlation: CorrelationModel::Unstructured {
                dim: 4,
                rho: LONGITUDINAL_R.to_vec(),
            },
            beta: vec![-0.5, 0.5, 0.5, 1.0],
            gamma: equal_probit_cutpoints(5),
            seed,
        }
    }

    /// A single series of length `d` with AR1(0.8) latent correlation and
    /// four equally likely categories, probit.
    pub fn time_series42(d: usize, b: usize, seed: u64) -> Self {
        SimDesign {
            kind: DesignKind::TimeSeries42,
            d,
            n: 1,
            b,
            link: LinkFunction::Probit,
            correlation: CorrelationModel::Ar1 { rho: 0.8 },
            beta: vec![-0.5, 0.5, -0.5],
            gamma: equal_probit_cutpoints(4),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 || self.n == 0 || self.d == 0 {
            return Err(WclError::Domain("design sizes must be positive".into()));
        }
        let a = self.parameters()?;
        let p = match self.kind {
            DesignKind::Longitudinal41 => 4,
            DesignKind::TimeSeries42 => 3,
            DesignKind::Custom => a.p(),
        };
        if a.p() != p {
            return Err(WclError::Domain(format!("design needs {p} slopes, got {}", a.p())));
        }
        if self.kind == DesignKind::TimeSeries42 && self.n != 1 {
            return Err(WclError::Domain("the time-series design has a single series".into()));
        }
        let coords: Vec<usize> = (0..self.d).collect();
        self.correlation.check_coords(&coords)?;
        if !matches!(self.correlation, CorrelationModel::Ar1 { .. }) && !self.correlation.is_positive_definite(&coords)
        {
            return Err(WclError::Domain("latent correlation is not positive definite".into()));
        }
        Ok(())
    }

    pub fn parameters(&self) -> Result<ParameterVector> {
        ParameterVector::new(self.beta.clone(), self.gamma.clone())
    }

    pub fn categories(&self) -> usize {
        self.gamma.len() + 1
    }

    /// Generator for one replication: the seed picks the key, the
    /// replication index the stream.
    pub fn rng(&self, replication: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replication);
        rng
    }
}

fn gen_cluster_covariates(design: &SimDesign, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = design.d;
    match design.kind {
        DesignKind::Longitudinal41 => {
            let group = if Bernoulli::new(0.5).unwrap().sample(rng) {
                1.0
            } else {
                0.0
            };
            let unif = Uniform::new_inclusive(-1.0, 1.0);
            (0..d)
                .map(|j| {
                    let t = (j + 1) as f64;
                    vec![t, group, t * group, unif.sample(rng)]
                })
                .collect()
        }
        DesignKind::TimeSeries42 => {
            let bern = Bernoulli::new(0.4).unwrap();
            let phi: f64 = 0.5;
            let innov = (1.0 - phi * phi).sqrt();
            let mut prev: f64 = rng.sample(StandardNormal);
            (0..d)
                .map(|t| {
                    if t > 0 {
                        let e: f64 = rng.sample(StandardNormal);
                        prev = phi * prev + innov * e;
                    }
                    let x1 = if bern.sample(rng) { 1.0 } else { 0.0 };
                    // uniform margin, Gaussian AR dependence
                    let x2 = cdf(prev);
                    vec![x1, x2, x1 * x2]
                })
                .collect()
        }
        DesignKind::Custom => {
            let unif = Uniform::new_inclusive(-1.0, 1.0);
            (0..d)
                .map(|_| (0..design.beta.len()).map(|_| unif.sample(rng)).collect())
                .collect()
        }
    }
}

/// Covariate rows of every cluster of one replication; the same rows
/// [`sample_ordinal_mvn`] uses.
pub fn gen_design_covariates(design: &SimDesign, replication: u64) -> Vec<Vec<Vec<f64>>> {
    let mut rng = design.rng(replication);
    covariates_from(design, &mut rng)
}

fn covariates_from(design: &SimDesign, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<f64>>> {
    (0..design.n).map(|_| gen_cluster_covariates(design, rng)).collect()
}

/// Draws latent normals with correlation `corr` over coordinates `coords`.
pub fn draw_latent(
    corr: &CorrelationModel,
    coords: &[usize],
    chol: Option<&DMatrix<f64>>,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let d = coords.len();
    let e: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    match (corr, chol) {
        (CorrelationModel::Ar1 { rho }, _) => {
            let mut z = Vec::with_capacity(d);
            for j in 0..d {
                if j == 0 {
                    z.push(e[0]);
                } else {
                    let r = rho.powi((coords[j] - coords[j - 1]) as i32);
                    z.push(r * z[j - 1] + (1.0 - r * r).sqrt() * e[j]);
                }
            }
            z
        }
        (CorrelationModel::Exchangeable { rho }, _) if *rho >= 0.0 => {
            let w: f64 = rng.sample(StandardNormal);
            let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
            e.iter().map(|v| a * w + b * v).collect()
        }
        (_, Some(l)) => (0..d).map(|i| (0..=i).map(|k| l[(i, k)] * e[k]).sum()).collect(),
        (_, None) => {
            let l = corr.matrix(coords).cholesky().expect("positive definite").l();
            (0..d).map(|i| (0..=i).map(|k| l[(i, k)] * e[k]).sum()).collect()
        }
    }
}

/// Discretizes latent normals at the shifted cutpoints of each observation.
pub fn discretize(a: &ParameterVector, x: &[Vec<f64>], z: &[f64], link: LinkFunction) -> Result<Vec<usize>> {
    x.iter()
        .zip(z)
        .map(|(row, zv)| {
            let nu = a.predictor(row);
            let g: Vec<f64> = a.gamma.iter().map(|v| v + nu).collect();
            let m = MarginEval::new(&g, link)?;
            Ok(1 + m.z[1..m.z.len() - 1].iter().filter(|&&c| c < *zv).count())
        })
        .collect()
}

/// One replication's dataset.
pub fn sample_ordinal_mvn(design: &SimDesign, replication: u64) -> Result<Vec<ClusterData>> {
    let a = design.parameters()?;
    let mut rng = design.rng(replication);
    let coords: Vec<usize> = (0..design.d).collect();
    let chol = match design.correlation {
        CorrelationModel::Unstructured { .. } | CorrelationModel::Exchangeable { .. } => {
            design.correlation.matrix(&coords).cholesky().map(|c| c.l())
        }
        CorrelationModel::Ar1 { .. } => None,
    };
    let xs = covariates_from(design, &mut rng);
    xs.into_iter()
        .enumerate()
        .map(|(i, x)| {
            let z = draw_latent(&design.correlation, &coords, chol.as_ref(), &mut rng);
            let y = discretize(&a, &x, &z, design.link)?;
            ClusterData::new(format!("{}", i + 1), y, x, coords.clone())
        })
        .collect()
}
