//! Uniform samples of a target field on a box, with a binary column cache.

use std::io::{Read, Write};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::VectorField;

const MAGIC: &[u8; 8] = b"CFDSET01";

/// Pairs `(x_i, g(x_i))` stored row-major, `n` values per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    seed: u64,
    pub(crate) inputs: Vec<f64>,
    pub(crate) targets: Vec<f64>,
    /// Row-major target Jacobians, `n²` values per row, when requested.
    pub(crate) jacobians: Option<Vec<f64>>,
}

impl Dataset {
    pub fn from_rows(n: usize, seed: u64, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if n == 0 || inputs.len() != targets.len() || inputs.len() % n != 0 {
            return Err(Error::InvalidParameter("dataset rows do not match the dimension".into()));
        }
        Ok(Dataset { n, seed, inputs, targets, jacobians: None })
    }

    pub fn with_jacobians(mut self, jacobians: Vec<f64>) -> Result<Self> {
        if jacobians.len() != self.len() * self.n * self.n {
            return Err(Error::InvalidParameter("jacobian rows do not match the dataset".into()));
        }
        self.jacobians = Some(jacobians);
        Ok(self)
    }

    pub fn has_jacobians(&self) -> bool {
        self.jacobians.is_some()
    }

    pub fn jacobian(&self, k: usize) -> Option<&[f64]> {
        let nn = self.n * self.n;
        self.jacobians.as_ref().map(|j| &j[k * nn..(k + 1) * nn])
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.n..(k + 1) * self.n]
    }

    pub fn target(&self, k: usize) -> &[f64] {
        &self.targets[k * self.n..(k + 1) * self.n]
    }

    /// Per-coordinate sample mean of the inputs.
    pub fn input_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for row in self.inputs.chunks(self.n) {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        m.iter().map(|s| s / self.len() as f64).collect()
    }

    /// Splits off the last `count` rows.
    pub fn split_tail(mut self, count: usize) -> (Dataset, Dataset) {
        let keep = self.len().saturating_sub(count) * self.n;
        let tail = Dataset {
            n: self.n,
            seed: self.seed,
            inputs: self.inputs.split_off(keep),
            targets: self.targets.split_off(keep),
            jacobians: self.jacobians.as_mut().map(|j| j.split_off(keep * self.n)),
        };
        (self, tail)
    }

    /// Header (magic, then D, n, seed and the number of Jacobian columns as
    /// little-endian u64) followed by the columns `x_1..x_n, y_1..y_n` and any
    /// Jacobian columns, each as `D` little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        let jac_cols = if self.jacobians.is_some() { self.n * self.n } else { 0 };
        for v in [self.len() as u64, self.n as u64, self.seed, jac_cols as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut blocks = vec![(&self.inputs, self.n), (&self.targets, self.n)];
        if let Some(j) = &self.jacobians {
            blocks.push((j, jac_cols));
        }
        for (source, width) in blocks {
            for j in 0..width {
                for row in source.chunks(width) {
                    w.write_all(&row[j].to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidParameter("not a dataset cache file".into()));
        }
        let mut word = [0u8; 8];
        let mut header = [0u64; 4];
        for h in &mut header {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let [d, n, seed, jac_cols] = header;
        let (d, n, jac_cols) = (d as usize, n as usize, jac_cols as usize);
        if n == 0 || (jac_cols != 0 && jac_cols != n * n) {
            return Err(Error::InvalidParameter("dataset cache header is inconsistent".into()));
        }
        let mut read_block = |width: usize| -> Result<Vec<f64>> {
            let mut dest = vec![0.0; d * width];
            for j in 0..width {
                for k in 0..d {
                    r.read_exact(&mut word)?;
                    dest[k * width + j] = f64::from_le_bytes(word);
                }
            }
            Ok(dest)
        };
        let inputs = read_block(n)?;
        let targets = read_block(n)?;
        let jacobians = if jac_cols > 0 { Some(read_block(jac_cols)?) } else { None };
        let data = Dataset::from_rows(n, seed, inputs, targets)?;
        match jacobians {
            Some(j) => data.with_jacobians(j),
            None => Ok(data),
        }
    }
}

/// Draws `count` points i.i.d. uniform on the box `[lo, hi]` and evaluates `g`.
pub fn sample_dataset<F: VectorField>(g: &F, lo: &[f64], hi: &[f64], count: usize, seed: u64) -> Result<Dataset> {
    sample(g, lo, hi, count, seed, false)
}

/// Like [`sample_dataset`] but also stores `Dg(x_i)`, which the Jacobian
/// penalty in training needs. Fails if `g` has no analytic Jacobian.
pub fn sample_dataset_with_jacobians<F: VectorField>(
    g: &F,
    lo: &[f64],
    hi: &[f64],
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    sample(g, lo, hi, count, seed, true)
}

fn sample<F: VectorField>(g: &F, lo: &[f64], hi: &[f64], count: usize, seed: u64, with_jac: bool) -> Result<Dataset> {
    let n = g.dim();
    if count == 0 {
        return Err(Error::InvalidParameter("dataset size must be at least 1".into()));
    }
    if lo.len() != n || hi.len() != n || lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
        return Err(Error::InvalidParameter("sampling box must be nondegenerate and match the field dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(count * n);
    let mut targets = Vec::with_capacity(count * n);
    let mut jacobians = Vec::new();
    for _ in 0..count {
        let x = DVector::from_iterator(n, lo.iter().zip(hi).map(|(l, h)| rng.random_range(*l..*h)));
        let y = g.eval(&x);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("target field at {:?}", x.as_slice())));
        }
        inputs.extend_from_slice(x.as_slice());
        targets.extend_from_slice(y.as_slice());
        if with_jac {
            let jac = g.jacobian(&x).ok_or_else(|| Error::InvalidParameter("target field has no Jacobian".into()))?;
            jacobians.extend(jac.transpose().iter().copied());
        }
    }
    let data = Dataset::from_rows(n, seed, inputs, targets)?;
    if with_jac {
        data.with_jacobians(jacobians)
    } else {
        Ok(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lv::LotkaVolterraSystem;

    fn lv() -> LotkaVolterraSystem {
        LotkaVolterraSystem::symmetric(0.6).unwrap()
    }

    #[test]
    fn single_sample_is_reproducible() {
        let a = sample_dataset(&lv(), &[0.0; 3], &[1.0; 3], 1, 42).unwrap();
        let b = sample_dataset(&lv(), &[0.0; 3], &[1.0; 3], 1, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn large_sample_mean_is_centered() {
        let d = sample_dataset(&lv(), &[0.0; 3], &[1.0; 3], 1_000_000, 5).unwrap();
        for m in d.input_mean() {
            assert!((m - 0.5).abs() < 0.002, "{m}");
        }
        assert!(d.targets.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn binary_cache_round_trip() {
        let d = sample_dataset(&lv(), &[0.0; 3], &[1.0; 3], 37, 9).unwrap();
        let mut buf = Vec::new();
        d.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 40 + 37 * 6 * 8);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 37);
        assert_eq!(Dataset::read_binary(&buf[..]).unwrap(), d);
        assert!(Dataset::read_binary(&b"garbage!garbage!"[..]).is_err());

        let dj = sample_dataset_with_jacobians(&lv(), &[0.0; 3], &[1.0; 3], 5, 9).unwrap();
        let mut buf = Vec::new();
        dj.write_binary(&mut buf).unwrap();
        let back = Dataset::read_binary(&buf[..]).unwrap();
        assert_eq!(back, dj);
        let x = DVector::from_column_slice(dj.input(2));
        let jac = lv().jacobian(&x).unwrap();
        assert_eq!(back.jacobian(2).unwrap()[1], jac[(0, 1)]);
    }

    #[test]
    fn empty_or_degenerate_requests_fail() {
        assert!(sample_dataset(&lv(), &[0.0; 3], &[1.0; 3], 0, 0).is_err());
        assert!(sample_dataset(&lv(), &[0.0; 3], &[0.0, 1.0, 1.0], 5, 0).is_err());
    }

    #[test]
    fn split_keeps_every_row() {
        let d = sample_dataset(&lv(), &[0.0; 3], &[1.0; 3], 10, 1).unwrap();
        let (head, tail) = d.clone().split_tail(3);
        assert_eq!((head.len(), tail.len()), (7, 3));
        assert_eq!(tail.input(0), d.input(7));
    }
}
