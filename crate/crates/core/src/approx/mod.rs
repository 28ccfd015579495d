//! One-hidden-layer vector-field approximator `f_θ(x) = −x + Pσ(Wx + b)`.
//!
//! Parameters are stored row-major: `P` is `n × N`, `W` is `N × n`. With a
//! [`BlockLayout`] hidden unit `k` reads out only to its owning coordinate and
//! every other entry of column `k` of `P` is a structural zero that training
//! never touches.

mod dataset;
mod lift;
mod side;
mod train;

pub use dataset::{sample_dataset, sample_dataset_with_jacobians, Dataset};
pub use lift::{lift, LiftedSystem};
pub use side::{c1_error, check_side_conditions, C1Error, SideConditions};
pub use train::{mse, train, TrainConfig, TrainOutcome};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::field::VectorField;

/// Sizes `N_1, …, N_n` of the hidden-unit groups owned by each output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockLayout(Vec<usize>);

impl BlockLayout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter(format!("block sizes must be positive, got {sizes:?}")));
        }
        Ok(BlockLayout(sizes))
    }

    /// `n` equal blocks of size `N/n`.
    pub fn uniform(n: usize, hidden: usize) -> Result<Self> {
        if n == 0 || hidden % n != 0 {
            return Err(Error::InvalidParameter(format!("{hidden} hidden units do not split into {n} equal blocks")));
        }
        BlockLayout::new(vec![hidden / n; n])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Output coordinate owning each hidden unit; groups are contiguous.
    pub fn owners(&self) -> Vec<usize> {
        self.0.iter().enumerate().flat_map(|(i, &s)| std::iter::repeat_n(i, s)).collect()
    }

    /// Half-open hidden-unit range of block `i`.
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.0[..i].iter().sum();
        start..start + self.0[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxNetwork {
    n: usize,
    hidden: usize,
    pub(crate) p: Vec<f64>,
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
    layout: Option<BlockLayout>,
    sigma: Activation,
}

impl ApproxNetwork {
    /// Builds a network from explicit parameters (row-major `P` and `W`).
    pub fn from_parts(
        n: usize,
        p: Vec<f64>,
        w: Vec<f64>,
        b: Vec<f64>,
        layout: Option<BlockLayout>,
        sigma: Activation,
    ) -> Result<Self> {
        let hidden = b.len();
        if n == 0 || hidden == 0 || p.len() != n * hidden || w.len() != hidden * n {
            return Err(Error::InvalidParameter("parameter shapes do not match (n, N)".into()));
        }
        if let Some(l) = &layout {
            if l.sizes().len() != n || l.total() != hidden {
                return Err(Error::InvalidParameter(format!("layout {:?} does not fit n={n}, N={hidden}", l.sizes())));
            }
            let owners = l.owners();
            for i in 0..n {
                for (k, &o) in owners.iter().enumerate() {
                    if o != i && p[i * hidden + k] != 0.0 {
                        return Err(Error::InvalidParameter(format!("P[{i},{k}] violates the block layout")));
                    }
                }
            }
        }
        Ok(ApproxNetwork { n, hidden, p, w, b, layout, sigma })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn layout(&self) -> Option<&BlockLayout> {
        self.layout.as_ref()
    }

    pub fn activation(&self) -> Activation {
        self.sigma
    }

    pub fn p_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.hidden, &self.p)
    }

    pub fn w_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.hidden, self.n, &self.w)
    }

    pub fn bias(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.b)
    }

    /// Mask of trainable entries of `P` (row-major).
    pub fn p_mask(&self) -> Vec<bool> {
        match &self.layout {
            None => vec![true; self.n * self.hidden],
            Some(l) => {
                let owners = l.owners();
                (0..self.n * self.hidden).map(|idx| owners[idx % self.hidden] == idx / self.hidden).collect()
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.p_mask().iter().filter(|m| **m).count() + self.w.len() + self.b.len()
    }

    /// Preactivations `Wx + b`.
    pub fn preactivation(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|k| self.b[k] + (0..self.n).map(|j| self.w[k * self.n + j] * x[j]).sum::<f64>())
            .collect()
    }

    pub fn eval_slice(&self, x: &[f64], out: &mut [f64]) {
        let z = self.preactivation(x);
        for i in 0..self.n {
            let row = &self.p[i * self.hidden..(i + 1) * self.hidden];
            out[i] = -x[i] + row.iter().zip(&z).map(|(p, z)| p * self.sigma.value(*z)).sum::<f64>();
        }
    }
}

impl VectorField for ApproxNetwork {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        self.eval_slice(x.as_slice(), out.as_mut_slice());
        out
    }

    /// `−I + P diag(σ'(Wx + b)) W`.
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let z = self.preactivation(x.as_slice());
        let ds: Vec<f64> = z.iter().map(|z| self.sigma.derivative(*z)).collect();
        Some(DMatrix::from_fn(self.n, self.n, |i, j| {
            let s: f64 = (0..self.hidden).map(|k| self.p[i * self.hidden + k] * ds[k] * self.w[k * self.n + j]).sum();
            s - if i == j { 1.0 } else { 0.0 }
        }))
    }
}

/// Draws initial parameters: `W ~ U(±√(6/(n+N)))`, `b = 0`, and each
/// trainable `P` entry `~ U(±1)/√N_i` with `N_i` the size of its block (`N`
/// without a layout).
pub fn init_network(
    n: usize,
    hidden: usize,
    layout: Option<BlockLayout>,
    sigma: Activation,
    seed: u64,
) -> Result<ApproxNetwork> {
    if n == 0 || hidden < n {
        return Err(Error::InvalidParameter(format!("need N ≥ n ≥ 1, got n={n}, N={hidden}")));
    }
    if let Some(l) = &layout {
        if l.sizes().len() != n || l.total() != hidden {
            return Err(Error::InvalidParameter(format!("layout {:?} does not fit n={n}, N={hidden}", l.sizes())));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = (6.0 / (n + hidden) as f64).sqrt();
    let w: Vec<f64> = (0..hidden * n).map(|_| rng.random_range(-limit..limit)).collect();
    let owners = layout.as_ref().map(|l| l.owners());
    let mut p = vec![0.0; n * hidden];
    for i in 0..n {
        for k in 0..hidden {
            let block = match (&owners, &layout) {
                (Some(o), Some(l)) if o[k] == i => Some(l.sizes()[i]),
                (Some(_), _) => None,
                (None, _) => Some(hidden),
            };
            if let Some(size) = block {
                p[i * hidden + k] = rng.random_range(-1.0..1.0) / (size as f64).sqrt();
            }
        }
    }
    ApproxNetwork::from_parts(n, p, w, vec![0.0; hidden], layout, sigma)
}

/// Samples `target` on the configured box, initializes a network with `hidden`
/// units (block layout when `blocks` is set) and trains it. The dataset and the
/// initialization both use `config.seed`.
pub fn fit<F: VectorField>(target: &F, hidden: usize, blocks: bool, sigma: Activation, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let n = target.dim();
    if config.domain_lo.len() != n {
        return Err(Error::InvalidParameter(format!("training box has dimension {}, target {n}", config.domain_lo.len())));
    }
    let data = if config.jacobian_penalty_weight > 0.0 {
        sample_dataset_with_jacobians(target, &config.domain_lo, &config.domain_hi, config.dataset_size, config.seed)?
    } else {
        sample_dataset(target, &config.domain_lo, &config.domain_hi, config.dataset_size, config.seed)?
    };
    let layout = if blocks { Some(BlockLayout::uniform(n, hidden)?) } else { None };
    let net = init_network(n, hidden, layout, sigma, config.seed)?;
    train(&net, &data, config)
}

/// Serialized network checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    #[serde(rename = "N")]
    pub hidden: usize,
    pub block_layout: Option<BlockLayout>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub sigma_kind: crate::activation::ActivationKind,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn from_network(net: &ApproxNetwork, seed: u64, config: serde_json::Value) -> Self {
        Checkpoint {
            n: net.n,
            hidden: net.hidden,
            block_layout: net.layout.clone(),
            p: net.p.chunks(net.hidden).map(<[f64]>::to_vec).collect(),
            w: net.w.chunks(net.n).map(<[f64]>::to_vec).collect(),
            b: net.b.clone(),
            sigma_kind: net.sigma.kind(),
            seed,
            config,
        }
    }

    pub fn to_network(&self) -> Result<ApproxNetwork> {
        if self.p.len() != self.n || self.w.len() != self.hidden {
            return Err(Error::InvalidParameter("checkpoint matrix shapes do not match n and N".into()));
        }
        ApproxNetwork::from_parts(
            self.n,
            self.p.concat(),
            self.w.concat(),
            self.b.clone(),
            self.block_layout.clone(),
            Activation::new(self.sigma_kind),
        )
    }
}
