#![allow(dead_code)]

use mccdic_core::dictionary::{DictionaryBank, MultiScaleDictionary};
use mccdic_core::{Features, Tensor};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

pub fn random_features(
    rows: usize,
    cols: usize,
    widths: &[usize],
    rng: &mut ChaCha8Rng,
) -> Features {
    Features::new(
        widths
            .iter()
            .enumerate()
            .map(|(l, &k)| random_tensor(&[rows >> l, cols >> l, k], rng))
            .collect(),
    )
    .unwrap()
}

/// Dense matrix of a zero-padded same-size convolution with stride-`stride`
/// zero insertion on the input side:
/// `out[Y, X, c] = Σ w[k][c][Y - s·y + r][X - s·x + r] · in[y, x, k]`.
pub fn dense_conv(
    bank: &DictionaryBank,
    out_rows: usize,
    out_cols: usize,
    stride: usize,
) -> DMatrix<f64> {
    let (n, kk, p) = (bank.size() as isize, bank.features(), bank.outputs());
    let r = n / 2;
    let (in_rows, in_cols) = (out_rows / stride, out_cols / stride);
    let mut m = DMatrix::zeros(out_rows * out_cols * p, in_rows * in_cols * kk);
    for yy in 0..out_rows {
        for xx in 0..out_cols {
            for c in 0..p {
                let row = (yy * out_cols + xx) * p + c;
                for y in 0..in_rows {
                    for x in 0..in_cols {
                        let i = yy as isize - (stride * y) as isize + r;
                        let j = xx as isize - (stride * x) as isize + r;
                        if i < 0 || j < 0 || i >= n || j >= n {
                            continue;
                        }
                        for k in 0..kk {
                            let col = (y * in_cols + x) * kk + k;
                            m[(row, col)] = bank.weight(k, c, i as usize, j as usize);
                        }
                    }
                }
            }
        }
    }
    m
}

/// Dense matrix of the whole multi-scale decoder, columns ordered level by level.
pub fn dense_pyramid(msd: &MultiScaleDictionary, rows: usize, cols: usize) -> DMatrix<f64> {
    let banks = msd.banks();
    // map from level-l features to the merged level-0 map
    let mut to_fine: Vec<DMatrix<f64>> = Vec::new();
    let k0 = banks[0].features();
    to_fine.push(DMatrix::identity(rows * cols * k0, rows * cols * k0));
    for l in 1..banks.len() {
        let up = dense_conv(&banks[l], rows >> (l - 1), cols >> (l - 1), 2);
        let prev = to_fine[l - 1].clone();
        to_fine.push(prev * up);
    }
    let head = dense_conv(&banks[0], rows, cols, 1);
    let blocks: Vec<DMatrix<f64>> = to_fine.iter().map(|t| &head * t).collect();
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(head.nrows(), total);
    let mut offset = 0;
    for b in blocks {
        out.view_mut((0, offset), (b.nrows(), b.ncols()))
            .copy_from(&b);
        offset += b.ncols();
    }
    out
}

pub fn flatten(f: &Features) -> DVector<f64> {
    DVector::from_iterator(
        f.len(),
        f.levels().iter().flat_map(|t| t.data().iter().copied()),
    )
}

pub fn vec_of(t: &Tensor) -> DVector<f64> {
    DVector::from_column_slice(t.data())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
