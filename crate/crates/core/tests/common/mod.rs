//! Independent oracles for integration tests: finite differences, brute-force
//! graph statistics and random instance generators.
#![allow(dead_code)]

pub mod checks;

use dsbd_core::graphdata::DenseGraph;
use dsbd_core::rng::{stream, StageRng};
use dsbd_core::Tensor;
use rand::Rng;

pub fn rng(seed: u64) -> StageRng {
    stream(seed, "test", 0)
}

pub fn central_diff(x0: &Tensor, h: f64, f: impl Fn(&Tensor) -> f64) -> Tensor {
    let mut out = Tensor::zeros(x0.rows(), x0.cols());
    let mut x = x0.clone();
    for k in 0..x0.len() {
        let orig = x.data()[k];
        x.data_mut()[k] = orig + h;
        let plus = f(&x);
        x.data_mut()[k] = orig - h;
        let minus = f(&x);
        x.data_mut()[k] = orig;
        out.data_mut()[k] = (plus - minus) / (2.0 * h);
    }
    out
}

pub fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

pub fn random_tensor(r: &mut StageRng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

/// Symmetric zero-diagonal adjacency; binary if `weighted` is false.
pub fn random_adjacency(r: &mut StageRng, n: usize, p: f64, weighted: bool) -> Tensor {
    let mut a = Tensor::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < p {
                let w = if weighted { r.random_range(0.05..1.0) } else { 1.0 };
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    a
}

pub fn random_graph(r: &mut StageRng, n: usize, d: usize, weighted: bool) -> DenseGraph {
    let a = random_adjacency(r, n, 0.4, weighted);
    DenseGraph::new(a, random_tensor(r, n, d), None).unwrap()
}

pub fn random_permutation(r: &mut StageRng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = r.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Rows and columns reordered: `out[i][j] = a[p[i]][p[j]]`.
pub fn permute_sym(a: &Tensor, p: &[usize]) -> Tensor {
    Tensor::from_fn(a.rows(), a.cols(), |i, j| a.get(p[i], p[j]))
}

pub fn permute_rows(x: &Tensor, p: &[usize]) -> Tensor {
    Tensor::from_fn(x.rows(), x.cols(), |i, j| x.get(p[i], j))
}

pub fn triangle_count(a: &Tensor) -> usize {
    let n = a.rows();
    let mut c = 0;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if a.get(i, j) != 0.0 && a.get(j, k) != 0.0 && a.get(i, k) != 0.0 {
                    c += 1;
                }
            }
        }
    }
    c
}

/// Scalar-loop recomputation of (deg_mean, deg_std, density, tri).
pub fn moments_oracle(a: &Tensor) -> [f64; 4] {
    const EPS: f64 = 1e-8;
    let n = a.rows();
    let nf = n as f64;
    let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).sum()).collect();
    let total: f64 = deg.iter().sum();
    let mean = total / nf;
    let var = deg.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / nf;
    let mut tr3 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                tr3 += a.get(i, j) * a.get(j, k) * a.get(k, i);
            }
        }
    }
    [mean, (var + EPS).sqrt(), total / (nf * (nf - 1.0) + EPS), tr3 / (6.0 * nf + EPS)]
}

/// Sum over edges of `w_ij |x_i/sqrt(d_i) - x_j/sqrt(d_j)|^2`, the edge form of
/// `Tr(X^T L X)`, plus the isolated-node diagonal term.
pub fn energy_oracle(a: &Tensor, x: &Tensor) -> f64 {
    let n = a.rows();
    let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).sum()).collect();
    let mut e = 0.0;
    for i in 0..n {
        if deg[i] == 0.0 {
            e += (0..x.cols()).map(|c| x.get(i, c).powi(2)).sum::<f64>();
        }
        for j in i + 1..n {
            let w = a.get(i, j);
            if w == 0.0 {
                continue;
            }
            for c in 0..x.cols() {
                let diff = x.get(i, c) / deg[i].sqrt() - x.get(j, c) / deg[j].sqrt();
                e += w * diff * diff;
            }
        }
    }
    e
}
