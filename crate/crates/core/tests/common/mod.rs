#![allow(dead_code)]

use eqsdp::generate::{
    random_density, random_hermitian, random_measurement, random_pure_state, rng_from_seed,
};
use eqsdp::{CMatrix, DensityOperator, PureState, TensoredHermitian, C64};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    rng_from_seed(seed)
}

pub fn diag(values: &[f64]) -> TensoredHermitian {
    TensoredHermitian::from_real_diagonal(values)
}

pub fn herm(dims: Vec<usize>, rng: &mut ChaCha20Rng) -> TensoredHermitian {
    random_hermitian(dims, rng).unwrap()
}

pub fn density(dims: Vec<usize>, rng: &mut ChaCha20Rng) -> DensityOperator {
    let side: usize = dims.iter().product();
    let rank = rng.random_range(1..=side);
    random_density(dims, rank, rng).unwrap()
}

pub fn full_rank_density(dims: Vec<usize>, rng: &mut ChaCha20Rng) -> DensityOperator {
    let side: usize = dims.iter().product();
    random_density(dims, side, rng).unwrap()
}

pub fn pure(dims: Vec<usize>, rng: &mut ChaCha20Rng) -> PureState {
    random_pure_state(dims, rng).unwrap()
}

pub fn measurement(dims: Vec<usize>, rng: &mut ChaCha20Rng) -> TensoredHermitian {
    random_measurement(dims, rng).unwrap()
}

/// Random `0 <= P <= I`: a random eigenframe with eigenvalues in `[0, 1]`.
pub fn contraction(dims: Vec<usize>, rng: &mut ChaCha20Rng) -> TensoredHermitian {
    let eig = herm(dims.clone(), rng).eig();
    let values =
        nalgebra::DVector::from_fn(eig.values.len(), |_, _| C64::new(rng.random::<f64>(), 0.0));
    let m = &eig.vectors * CMatrix::from_diagonal(&values) * eig.vectors.adjoint();
    TensoredHermitian::new(dims, m).unwrap()
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Entry-by-entry partial trace, written out with explicit index arithmetic.
pub fn partial_trace_by_sum(a: &CMatrix, dims: &[usize], k: usize) -> CMatrix {
    let n = dims.len();
    let out_dims: Vec<usize> = dims
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, &d)| d)
        .collect();
    let out_side: usize = out_dims.iter().product::<usize>().max(1);
    let mut out = CMatrix::zeros(out_side, out_side);
    let side: usize = dims.iter().product();
    let digits = |mut x: usize| {
        let mut v = vec![0; n];
        for i in (0..n).rev() {
            v[i] = x % dims[i];
            x /= dims[i];
        }
        v
    };
    let compose = |v: &[usize]| {
        let mut x = 0;
        for (i, d) in out_dims.iter().enumerate() {
            x = x * d + v[i];
        }
        x
    };
    for r in 0..side {
        let dr = digits(r);
        for c in 0..side {
            let dc = digits(c);
            if dr[k] != dc[k] {
                continue;
            }
            let rr: Vec<usize> = dr
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, &x)| x)
                .collect();
            let cc: Vec<usize> = dc
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, &x)| x)
                .collect();
            out[(compose(&rr), compose(&cc))] += a[(r, c)];
        }
    }
    out
}

/// `exp(A)` by scaling and squaring a truncated Taylor series.
pub fn exp_by_series(a: &CMatrix, terms: usize) -> CMatrix {
    let norm = a.iter().map(|z| z.norm()).sum::<f64>();
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = a * C64::new(scale, 0.0);
    let n = a.nrows();
    let mut term = CMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=terms {
        term = &term * &x * C64::new(1.0 / k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}
