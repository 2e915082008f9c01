//! Synthetic linearly separable data with label noise, and seeded
//! train/test splitting.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::models::{LabelEncoding, Sample};
use crate::numkit::linalg::dot;
use crate::numkit::RngStream;
use crate::shiftmaps::BaseDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub m: usize,
    pub m_test: usize,
    pub d: usize,
    pub flip_frac: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            m: 800,
            m_test: 200,
            d: 10,
            flip_frac: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: BaseDataset,
    pub test: BaseDataset,
    /// Ground-truth direction that generated the clean labels.
    pub theta_o: Vec<f64>,
    /// Train indices whose label was flipped, ascending.
    pub flipped: Vec<usize>,
}

fn labelled(rng: &mut RngStream, n: usize, theta_o: &[f64]) -> Vec<Sample> {
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..theta_o.len())
                .map(|_| rng.uniform_in(-1.0, 1.0))
                .collect();
            let y = if dot(&x, theta_o) >= 0.0 { 1 } else { -1 };
            Sample { x, y }
        })
        .collect()
}

/// Features uniform on `[-1, 1]^d`, labels `sign(⟨x, θ°⟩)` with
/// `θ° ~ N(0, I)`, then exactly `⌊flip_frac · m⌋` distinct training labels
/// flipped. The test set comes from an independent stream and is never
/// flipped.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.m == 0 || spec.m_test == 0 || spec.d == 0 {
        return Err(Error::InvalidArgument(
            "sizes and dimension must be positive",
        ));
    }
    if !(0.0..=1.0).contains(&spec.flip_frac) {
        return Err(Error::InvalidArgument("flip fraction must lie in [0, 1]"));
    }
    let root = RngStream::new(spec.seed);
    let theta_o = root.fork(0).normal_vec(spec.d);
    let mut train = labelled(&mut root.fork(1), spec.m, &theta_o);
    let n_flip = libm::floor(spec.flip_frac * spec.m as f64) as usize;
    let mut flipped = root.fork(2).choose_distinct(spec.m, n_flip);
    flipped.sort_unstable();
    for &i in &flipped {
        train[i].y = -train[i].y;
    }
    let test = labelled(&mut root.fork(3), spec.m_test, &theta_o);
    Ok(SyntheticData {
        train: BaseDataset::new(train, LabelEncoding::PlusMinusOne)?,
        test: BaseDataset::new(test, LabelEncoding::PlusMinusOne)?,
        theta_o,
        flipped,
    })
}

/// Seeded random partition; the first `⌊train_frac · m⌋` entries of a
/// uniform permutation form the training side.
pub fn split(data: &BaseDataset, train_frac: f64, seed: u64) -> Result<(BaseDataset, BaseDataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument("train fraction must lie in (0, 1)"));
    }
    let m = data.len();
    let n_train = libm::floor(train_frac * m as f64) as usize;
    if n_train == 0 || n_train == m {
        return Err(Error::InvalidArgument("split leaves one side empty"));
    }
    let perm = RngStream::new(seed).permutation(m);
    let pick =
        |idx: &[usize]| -> Vec<Sample> { idx.iter().map(|&i| data.samples()[i].clone()).collect() };
    Ok((
        BaseDataset::new(pick(&perm[..n_train]), data.encoding())?,
        BaseDataset::new(pick(&perm[n_train..]), data.encoding())?,
    ))
}
