//! Mini-batch Adam on the mean squared field error.
//!
//! Batch gradients are accumulated over fixed-size chunks in parallel and the
//! chunk sums are added in chunk order, so results do not depend on the
//! number of threads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::ApproxNetwork;
use crate::error::{Error, Result};

const CHUNK: usize = 128;
const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dataset_size: usize,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Multiplies the step size after every epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Share of the dataset held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
    pub jacobian_penalty_weight: f64,
    /// Hinge penalty on `max(0, face_margin − f_j(x))²` at points moved onto
    /// the face `x_j = face_lo[j]`; keeps the learned flow pointing into the
    /// box there.
    pub face_penalty_weight: f64,
    pub face_margin: f64,
    /// Face coordinates for the penalty; `domain_lo` when absent.
    pub face_lo: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset_size: 100_000,
            domain_lo: vec![0.0; 3],
            domain_hi: vec![1.0; 3],
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            lr_decay: 1.0,
            batch_size: 1024,
            epochs: 200,
            patience: 10,
            validation_fraction: 0.1,
            seed: 0,
            jacobian_penalty_weight: 0.0,
            face_penalty_weight: 0.0,
            face_margin: 0.0,
            face_lo: None,
        }
    }
}

impl TrainConfig {
    /// Settings for learning a competitive target on the unit cube with
    /// `D = 1e5`: a box with a 0.05 margin, step 0.01 decaying by 2% per
    /// epoch, batches of 256, and an inward-flow penalty on the faces
    /// `x_j = 0`.
    pub fn desk() -> Self {
        TrainConfig {
            domain_lo: vec![-0.05; 3],
            domain_hi: vec![1.05; 3],
            learning_rate: 0.01,
            lr_decay: 0.98,
            batch_size: 256,
            face_penalty_weight: 10.0,
            face_margin: 0.005,
            face_lo: Some(vec![0.0; 3]),
            ..TrainConfig::default()
        }
    }

    /// [`desk`](Self::desk) with `D = 1e6`.
    pub fn paper() -> Self {
        TrainConfig { dataset_size: 1_000_000, ..TrainConfig::desk() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.dataset_size == 0 {
            return bad("dataset size must be at least 1");
        }
        if self.batch_size == 0 || self.batch_size > self.dataset_size {
            return bad("batch size must lie in [1, D]");
        }
        if self.domain_lo.len() != self.domain_hi.len() || self.domain_lo.iter().zip(&self.domain_hi).any(|(l, h)| !(l < h)) {
            return bad("training domain must be a nondegenerate box");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("optimizer hyperparameters out of range");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must lie in [0, 1)");
        }
        if !(self.jacobian_penalty_weight >= 0.0) {
            return bad("jacobian penalty weight must be nonnegative");
        }
        if !(self.face_penalty_weight >= 0.0) || !self.face_margin.is_finite() {
            return bad("face penalty weight must be nonnegative with a finite margin");
        }
        if self.face_lo.as_ref().is_some_and(|f| f.len() != self.domain_lo.len()) {
            return bad("face coordinates must match the domain dimension");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation loss (the last epoch without a
    /// validation split).
    pub net: ApproxNetwork,
    /// Training MSE before the first step, then the mean batch loss of every
    /// epoch.
    pub loss_trace: Vec<f64>,
    pub validation_trace: Vec<f64>,
    /// Training MSE of the returned parameters.
    pub final_mse: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Gradient buffers laid out like the parameters.
#[derive(Clone)]
struct Grad {
    p: Vec<f64>,
    w: Vec<f64>,
    b: Vec<f64>,
    loss: f64,
}

impl Grad {
    fn zeros(net: &ApproxNetwork) -> Self {
        Grad { p: vec![0.0; net.p.len()], w: vec![0.0; net.w.len()], b: vec![0.0; net.b.len()], loss: 0.0 }
    }

    fn add(&mut self, other: &Grad) {
        for (a, b) in self.p.iter_mut().zip(&other.p) {
            *a += b;
        }
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
        self.loss += other.loss;
    }
}

#[derive(Clone, Copy)]
struct Penalties<'a> {
    jacobian: f64,
    face: f64,
    margin: f64,
    lo: &'a [f64],
}

impl<'a> Penalties<'a> {
    #[cfg(test)]
    fn none() -> Self {
        Penalties { jacobian: 0.0, face: 0.0, margin: 0.0, lo: &[] }
    }

    fn from_config(cfg: &'a TrainConfig) -> Self {
        Penalties {
            jacobian: cfg.jacobian_penalty_weight,
            face: cfg.face_penalty_weight,
            margin: cfg.face_margin,
            lo: cfg.face_lo.as_deref().unwrap_or(&cfg.domain_lo),
        }
    }
}

/// Accumulates the unnormalized loss and gradient of the rows `idx`.
fn accumulate(net: &ApproxNetwork, data: &Dataset, idx: &[usize], pen: Penalties, g: &mut Grad) {
    let penalty = pen.jacobian;
    let (n, h) = (net.n(), net.hidden());
    let sigma = net.activation();
    let mut z = vec![0.0; h];
    let mut s = vec![0.0; h];
    let mut ds = vec![0.0; h];
    let mut dds = vec![0.0; h];
    let mut r = vec![0.0; n];
    let mut c = vec![0.0; h * n];
    let mut e = vec![0.0; n * n];
    for &k in idx {
        let x = data.input(k);
        let y = data.target(k);
        for u in 0..h {
            z[u] = net.b[u] + (0..n).map(|j| net.w[u * n + j] * x[j]).sum::<f64>();
            let (v, d) = sigma.eval(z[u]);
            s[u] = v;
            ds[u] = d;
        }
        for i in 0..n {
            let row = &net.p[i * h..(i + 1) * h];
            r[i] = -x[i] + row.iter().zip(&s).map(|(p, s)| p * s).sum::<f64>() - y[i];
            g.loss += r[i] * r[i];
        }
        for u in 0..h {
            let mut back = 0.0;
            for i in 0..n {
                let p = net.p[i * h + u];
                g.p[i * h + u] += 2.0 * r[i] * s[u];
                back += p * r[i];
            }
            let delta = 2.0 * back * ds[u];
            g.b[u] += delta;
            for j in 0..n {
                g.w[u * n + j] += delta * x[j];
            }
        }

        if pen.face > 0.0 {
            face_term(net, x, k % n, pen, &mut z, g);
        }

        let Some(target_jac) = data.jacobian(k).filter(|_| penalty > 0.0) else {
            continue;
        };
        for u in 0..h {
            dds[u] = -2.0 * s[u] * ds[u];
        }
        for i in 0..n {
            for j in 0..n {
                let jac: f64 = (0..h).map(|u| net.p[i * h + u] * ds[u] * net.w[u * n + j]).sum::<f64>()
                    - if i == j { 1.0 } else { 0.0 };
                e[i * n + j] = jac - target_jac[i * n + j];
                g.loss += penalty * e[i * n + j] * e[i * n + j];
            }
        }
        for u in 0..h {
            for j in 0..n {
                c[u * n + j] = (0..n).map(|i| net.p[i * h + u] * e[i * n + j]).sum();
            }
            let cw: f64 = (0..n).map(|j| c[u * n + j] * net.w[u * n + j]).sum();
            for i in 0..n {
                let ew: f64 = (0..n).map(|j| e[i * n + j] * net.w[u * n + j]).sum();
                g.p[i * h + u] += 2.0 * penalty * ds[u] * ew;
            }
            g.b[u] += 2.0 * penalty * dds[u] * cw;
            for l in 0..n {
                g.w[u * n + l] += 2.0 * penalty * (dds[u] * cw * x[l] + ds[u] * c[u * n + l]);
            }
        }
    }
}

/// Face hinge for sample `x` moved onto the lower face of coordinate `j`.
fn face_term(net: &ApproxNetwork, x: &[f64], j: usize, pen: Penalties, z: &mut [f64], g: &mut Grad) {
    let (n, h) = (net.n(), net.hidden());
    let sigma = net.activation();
    let mut xf = x.to_vec();
    xf[j] = pen.lo[j];
    let mut fj = -xf[j];
    for u in 0..h {
        z[u] = net.b[u] + (0..n).map(|l| net.w[u * n + l] * xf[l]).sum::<f64>();
        fj += net.p[j * h + u] * sigma.value(z[u]);
    }
    let gap = pen.margin - fj;
    if gap <= 0.0 {
        return;
    }
    g.loss += pen.face * gap * gap;
    let c = -2.0 * pen.face * gap;
    for u in 0..h {
        let (s, d) = sigma.eval(z[u]);
        let p = net.p[j * h + u];
        g.p[j * h + u] += c * s;
        let delta = c * p * d;
        g.b[u] += delta;
        for l in 0..n {
            g.w[u * n + l] += delta * xf[l];
        }
    }
}

/// Loss and gradient over `idx`, reduced chunk by chunk in index order.
fn batch_gradient(net: &ApproxNetwork, data: &Dataset, idx: &[usize], pen: Penalties) -> Grad {
    let parts: Vec<Grad> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = Grad::zeros(net);
            accumulate(net, data, chunk, pen, &mut g);
            g
        })
        .collect();
    let mut total = Grad::zeros(net);
    for part in &parts {
        total.add(part);
    }
    total
}

/// Mean squared error `(1/|S|) Σ ‖f_θ(x) − y‖²` over the whole dataset.
pub fn mse(net: &ApproxNetwork, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let parts: Vec<f64> = (0..data.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut out = vec![0.0; net.n()];
            chunk
                .iter()
                .map(|&k| {
                    net.eval_slice(data.input(k), &mut out);
                    out.iter().zip(data.target(k)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                })
                .sum::<f64>()
        })
        .collect();
    parts.iter().sum::<f64>() / data.len() as f64
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Adam { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// Trains `net` on `data`, holding out the last `validation_fraction` of the
/// rows for early stopping. Rows are reshuffled every epoch with a generator
/// seeded from `config.seed`.
pub fn train(net: &ApproxNetwork, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("training dataset is empty".into()));
    }
    if data.dim() != net.n() {
        return Err(Error::InvalidParameter(format!("dataset dimension {} does not match network {}", data.dim(), net.n())));
    }
    let mut cfg = config.clone();
    cfg.dataset_size = data.len();
    cfg.batch_size = cfg.batch_size.min(data.len());
    cfg.validate()?;
    let pen = Penalties::from_config(&cfg);
    if pen.jacobian > 0.0 && !data.has_jacobians() {
        return Err(Error::InvalidParameter("jacobian penalty needs a dataset with target Jacobians".into()));
    }

    let n_val = ((data.len() as f64) * cfg.validation_fraction).floor() as usize;
    let n_val = if n_val >= data.len() { 0 } else { n_val };
    let (train_set, val_set) = data.clone().split_tail(n_val);
    let batch = cfg.batch_size.min(train_set.len());

    let mut net = net.clone();
    let mask = net.p_mask();
    let initial = mse(&net, &train_set);
    let limit = DIVERGENCE_FACTOR * initial.max(f64::MIN_POSITIVE);
    let mut loss_trace = vec![initial];
    let mut validation_trace = Vec::new();
    let mut best = (net.clone(), if n_val > 0 { mse(&net, &val_set) } else { initial }, 0usize);
    if n_val > 0 {
        validation_trace.push(best.1);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut opt_p = Adam::new(net.p.len());
    let mut opt_w = Adam::new(net.w.len());
    let mut opt_b = Adam::new(net.b.len());
    let mut lr = cfg.learning_rate;
    let mut stopped_early = false;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(batch) {
            let g = batch_gradient(&net, &train_set, idx, pen);
            epoch_loss += g.loss;
            let scale = 1.0 / idx.len() as f64;
            adam_step(&mut net.p, &g.p, scale, Some(&mask), &mut opt_p, lr, &cfg);
            adam_step(&mut net.w, &g.w, scale, None, &mut opt_w, lr, &cfg);
            adam_step(&mut net.b, &g.b, scale, None, &mut opt_b, lr, &cfg);
        }
        epochs_run = epoch;
        lr *= cfg.lr_decay;

        let loss = epoch_loss / train_set.len() as f64;
        loss_trace.push(loss);
        if !loss.is_finite() || loss > limit {
            return Err(Error::Diverged { epoch, loss, limit, trace: loss_trace });
        }
        let score = if n_val > 0 {
            let v = mse(&net, &val_set);
            validation_trace.push(v);
            v
        } else {
            loss
        };
        if score < best.1 {
            best = (net.clone(), score, epoch);
        } else if n_val > 0 && epoch - best.2 >= cfg.patience {
            stopped_early = true;
            break;
        }
    }

    let (net, _, best_epoch) = if n_val > 0 || cfg.epochs == 0 { best } else { (net, 0.0, epochs_run) };
    let final_mse = mse(&net, &train_set);
    Ok(TrainOutcome { net, loss_trace, validation_trace, final_mse, epochs_run, best_epoch, stopped_early })
}

fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    scale: f64,
    mask: Option<&[bool]>,
    state: &mut Adam,
    lr: f64,
    cfg: &TrainConfig,
) {
    state.step += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.step);
    let c2 = 1.0 - cfg.beta2.powi(state.step);
    for k in 0..params.len() {
        if mask.is_some_and(|m| !m[k]) {
            continue;
        }
        let g = grad[k] * scale;
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        params[k] -= lr * (state.m[k] / c1) / ((state.v[k] / c2).sqrt() + cfg.adam_eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::approx::{init_network, sample_dataset, sample_dataset_with_jacobians, BlockLayout};
    use crate::lv::LotkaVolterraSystem;

    fn small_net(seed: u64) -> ApproxNetwork {
        init_network(3, 9, Some(BlockLayout::uniform(3, 9).unwrap()), Activation::tanh(), seed).unwrap()
    }

    fn lv_data(count: usize, jac: bool) -> Dataset {
        let g = LotkaVolterraSystem::symmetric(0.6).unwrap();
        if jac {
            sample_dataset_with_jacobians(&g, &[0.0; 3], &[1.0; 3], count, 3).unwrap()
        } else {
            sample_dataset(&g, &[0.0; 3], &[1.0; 3], count, 3).unwrap()
        }
    }

    /// Central differences of the batch loss against the analytic gradient.
    fn check_gradient(pen: Penalties) {
        let net = small_net(1);
        let data = lv_data(20, pen.jacobian > 0.0);
        let idx: Vec<usize> = (0..data.len()).collect();
        let g = batch_gradient(&net, &data, &idx, pen);
        let loss = |m: &ApproxNetwork| batch_gradient(m, &data, &idx, pen).loss;
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for which in 0..3 {
            let len = [net.p.len(), net.w.len(), net.b.len()][which];
            for k in 0..len {
                let mut plus = net.clone();
                let mut minus = net.clone();
                match which {
                    0 => {
                        plus.p[k] += h;
                        minus.p[k] -= h;
                    }
                    1 => {
                        plus.w[k] += h;
                        minus.w[k] -= h;
                    }
                    _ => {
                        plus.b[k] += h;
                        minus.b[k] -= h;
                    }
                }
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = [&g.p, &g.w, &g.b][which][k];
                worst = worst.max((fd - an).abs() / an.abs().max(1.0));
            }
        }
        assert!(worst < 1e-6, "worst relative gradient error {worst:e}");
    }

    #[test]
    fn value_gradient_matches_differences() {
        check_gradient(Penalties::none());
    }

    #[test]
    fn penalized_gradient_matches_differences() {
        check_gradient(Penalties { jacobian: 0.7, ..Penalties::none() });
    }

    #[test]
    fn face_gradient_matches_differences() {
        // A large margin keeps every hinge active.
        check_gradient(Penalties { face: 0.9, margin: 5.0, lo: &[0.0; 3], ..Penalties::none() });
    }

    #[test]
    fn face_penalty_pushes_flow_inward() {
        let net = small_net(8);
        let data = lv_data(3000, false);
        let base = TrainConfig { epochs: 20, batch_size: 100, learning_rate: 1e-2, ..TrainConfig::default() };
        let faced = TrainConfig { face_penalty_weight: 10.0, face_margin: 1e-2, ..base.clone() };
        let worst = |net: &ApproxNetwork| {
            crate::lv::lattice(&[0.0; 3], &[1.0; 3], 11)
                .flat_map(|x| {
                    let f = crate::field::VectorField::eval(net, &x);
                    (0..3).filter(move |&j| x[j] == 0.0).map(move |j| f[j]).collect::<Vec<_>>()
                })
                .fold(f64::INFINITY, f64::min)
        };
        let plain = train(&net, &data, &base).unwrap();
        let pushed = train(&net, &data, &faced).unwrap();
        assert!(worst(&pushed.net) > worst(&plain.net));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let net = small_net(2);
        let cfg = TrainConfig { epochs: 0, batch_size: 16, ..TrainConfig::default() };
        let out = train(&net, &lv_data(100, false), &cfg).unwrap();
        assert_eq!(out.net, net);
        assert_eq!(out.loss_trace.len(), 1);
        assert_eq!(out.epochs_run, 0);
    }

    #[test]
    fn training_reduces_loss_and_keeps_structural_zeros() {
        let net = small_net(4);
        let cfg = TrainConfig { epochs: 15, batch_size: 64, learning_rate: 1e-2, ..TrainConfig::default() };
        let out = train(&net, &lv_data(2000, false), &cfg).unwrap();
        assert!(out.final_mse < out.loss_trace[0]);
        let mask = out.net.p_mask();
        for (p, m) in out.net.p.iter().zip(&mask) {
            if !m {
                assert_eq!(*p, 0.0);
            }
        }
        let mut running = f64::INFINITY;
        for l in &out.loss_trace {
            let next = running.min(*l);
            assert!(next <= running);
            running = next;
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let net = small_net(5);
        let data = lv_data(1500, false);
        let cfg = TrainConfig { epochs: 3, batch_size: 500, ..TrainConfig::default() };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| train(&net, &data, &cfg).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.net, b.net);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn divergence_aborts_with_trace() {
        let net = small_net(6);
        let cfg = TrainConfig { epochs: 5, batch_size: 32, learning_rate: 50.0, ..TrainConfig::default() };
        match train(&net, &lv_data(500, false), &cfg) {
            Err(Error::Diverged { trace, limit, .. }) => {
                assert!(!trace.is_empty());
                assert!(trace.last().unwrap() > &limit || !trace.last().unwrap().is_finite());
            }
            other => panic!("expected divergence, got {:?}", other.map(|o| o.final_mse)),
        }
    }

    #[test]
    fn penalty_requires_jacobians() {
        let cfg = TrainConfig { jacobian_penalty_weight: 1.0, batch_size: 10, ..TrainConfig::default() };
        assert!(train(&small_net(0), &lv_data(50, false), &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 200_000, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { jacobian_penalty_weight: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert_eq!(TrainConfig::paper().dataset_size, 1_000_000);
    }
}
