//! Shared helpers for the integration tests: seeded random inputs and plain
//! nested-`Vec` reference computations that do not go through the library's
//! matrix code.

#![allow(dead_code)]

use mlcm_core::{LabelMatrix, PredictionSet};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, l: usize, density: f64) -> LabelMatrix {
    LabelMatrix::from_fn(n, l, |_, _| rng.gen_bool(density)).unwrap()
}

pub fn random_set(rng: &mut ChaCha8Rng, n: usize, l: usize, m: usize, density: f64) -> PredictionSet {
    PredictionSet::new((0..m).map(|_| random_labels(rng, n, l, density)).collect()).unwrap()
}

/// Random prediction set with every instance and every (model, label) pair
/// predicted at least once, so no node is pruned. Empty instances and empty
/// group nodes get one random link each.
pub fn random_connected_set(rng: &mut ChaCha8Rng, n: usize, l: usize, m: usize, density: f64) -> PredictionSet {
    let mut cells: Vec<Vec<bool>> = (0..m * l).map(|_| (0..n).map(|_| rng.gen_bool(density)).collect()).collect();
    for i in 0..n {
        if !cells.iter().any(|g| g[i]) {
            let g = rng.gen_range(0..m * l);
            cells[g][i] = true;
        }
    }
    for g in cells.iter_mut() {
        if !g.iter().any(|&x| x) {
            let i = rng.gen_range(0..n);
            g[i] = true;
        }
    }
    let models = (0..m)
        .map(|k| LabelMatrix::from_fn(n, l, |i, j| cells[k * l + j][i]).unwrap())
        .collect();
    PredictionSet::new(models).unwrap()
}

/// Random graph dimensions within the acceptance bounds.
pub fn random_dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.gen_range(2..=50), rng.gen_range(2..=10), rng.gen_range(1..=5))
}

pub fn random_scores(rng: &mut ChaCha8Rng, n: usize, l: usize, levels: Option<u32>) -> DMatrix<f64> {
    DMatrix::from_fn(n, l, |_, _| match levels {
        // coarse grid to force ties
        Some(k) => f64::from(rng.gen_range(0..k)) / f64::from(k),
        None => rng.gen::<f64>(),
    })
}

pub fn permutation(rng: &mut ChaCha8Rng, len: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..len).collect();
    p.shuffle(rng);
    p
}

pub fn to_dense(m: &DMatrix<f64>) -> Dense {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for t in 0..k {
            let x = a[i][t];
            if x == 0.0 {
                continue;
            }
            for j in 0..p {
                out[i][j] += x * b[t][j];
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &Dense, b: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            worst = worst.max((x - b[(i, j)]).abs());
        }
    }
    worst
}

/// Connection matrix built straight from the predictions (no pruning).
pub fn connection(set: &PredictionSet) -> Dense {
    let (n, l) = (set.n(), set.l());
    let mut a = vec![vec![0.0; set.m() * l]; n];
    for (k, y) in set.models().iter().enumerate() {
        for i in 0..n {
            for j in 0..l {
                if y.get(i, j) {
                    a[i][k * l + j] = 1.0;
                }
            }
        }
    }
    a
}

/// `Dv^-1 A' Dn^-1 A` by explicit triple loops.
pub fn transition_oracle(a: &Dense) -> Dense {
    let n = a.len();
    let v = a[0].len();
    let d_n: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let d_v: Vec<f64> = (0..v).map(|j| a.iter().map(|r| r[j]).sum()).collect();
    let mut s = vec![vec![0.0; v]; v];
    for p in 0..v {
        for q in 0..v {
            let mut acc = 0.0;
            for i in 0..n {
                acc += a[i][p] * a[i][q] / d_n[i];
            }
            s[p][q] = acc / d_v[p];
        }
    }
    s
}

/// Truncated series `sum_{t <= terms} (D_lambda S)^t D_(1-lambda) B`.
pub fn power_series_oracle(a: &Dense, b: &Dense, alpha: f64, terms: usize) -> Dense {
    let v = a[0].len();
    let d_v: Vec<f64> = (0..v).map(|j| a.iter().map(|r| r[j]).sum()).collect();
    let s = transition_oracle(a);
    let p: Dense = (0..v)
        .map(|j| s[j].iter().map(|x| x * d_v[j] / (alpha + d_v[j])).collect())
        .collect();
    let r: Dense = (0..v)
        .map(|j| b[j].iter().map(|x| x * alpha / (alpha + d_v[j])).collect())
        .collect();
    let mut term = r.clone();
    let mut total = r;
    for _ in 0..terms {
        term = matmul(&p, &term);
        for (tr, xr) in total.iter_mut().zip(&term) {
            for (t, x) in tr.iter_mut().zip(xr) {
                *t += x;
            }
        }
    }
    total
}

/// Instance scores via `sum_k p(k | x_i) p(l | k, x_i)` with
/// `p(k | x_i) = n_k / d_i` and `p(l | k, x_i)` the mean of `Q[j, l]` over the
/// label-`k` group nodes `j` that `x_i` links to. `q` is indexed by the full
/// (unpruned) group-node index.
pub fn decomposition_oracle(set: &PredictionSet, q: &Dense) -> Dense {
    let (n, l, m) = (set.n(), set.l(), set.m());
    let mut u = vec![vec![0.0; l]; n];
    for i in 0..n {
        let d_i: usize = set.models().iter().map(|y| y.row_count(i)).sum();
        if d_i == 0 {
            u[i] = vec![1.0 / l as f64; l];
            continue;
        }
        for k in 0..l {
            let nodes: Vec<usize> = (0..m).filter(|&mk| set.model(mk).get(i, k)).map(|mk| mk * l + k).collect();
            let n_k = nodes.len();
            if n_k == 0 {
                continue;
            }
            let p_k = n_k as f64 / d_i as f64;
            for target in 0..l {
                let p_given: f64 = nodes.iter().map(|&g| q[g][target]).sum::<f64>() / n_k as f64;
                u[i][target] += p_k * p_given;
            }
        }
    }
    u
}

/// Row-normalized vote counts: `votes(i, l) / sum_l votes(i, l)`.
pub fn normalized_votes(set: &PredictionSet) -> Dense {
    let (n, l) = (set.n(), set.l());
    (0..n)
        .map(|i| {
            let votes: Vec<f64> = (0..l)
                .map(|j| set.models().iter().filter(|y| y.get(i, j)).count() as f64)
                .collect();
            let total: f64 = votes.iter().sum();
            if total == 0.0 {
                vec![1.0 / l as f64; l]
            } else {
                votes.iter().map(|v| v / total).collect()
            }
        })
        .collect()
}

/// Indices sorted by value (stable, ties by index).
pub fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// Power series summed until the newest term carries at most `tol`
/// probability mass in every row.
pub fn power_series_to_mass(a: &Dense, b: &Dense, alpha: f64, tol: f64, max_terms: usize) -> Dense {
    let v = a[0].len();
    let d_v: Vec<f64> = (0..v).map(|j| a.iter().map(|r| r[j]).sum()).collect();
    let s = transition_oracle(a);
    let p: Dense = (0..v)
        .map(|j| s[j].iter().map(|x| x * d_v[j] / (alpha + d_v[j])).collect())
        .collect();
    let r: Dense = (0..v)
        .map(|j| b[j].iter().map(|x| x * alpha / (alpha + d_v[j])).collect())
        .collect();
    let mut term = r.clone();
    let mut total = r;
    for _ in 0..max_terms {
        term = matmul(&p, &term);
        let mass = term.iter().map(|row| row.iter().sum::<f64>()).fold(0.0, f64::max);
        for (tr, xr) in total.iter_mut().zip(&term) {
            for (t, x) in tr.iter_mut().zip(xr) {
                *t += x;
            }
        }
        if mass <= tol {
            break;
        }
    }
    total
}
