#![allow(dead_code)]

use std::collections::BTreeSet;

use fracheat::Graph;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree plus Erdős–Rényi edges with probability `p`,
/// weights uniform in [0.5, 1.5].
pub fn random_connected(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = rng(seed);
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        seen.insert((j, i));
        edges.push((j, i, rng.random_range(0.5..1.5)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !seen.contains(&(i, j)) && rng.random::<f64>() < p {
                edges.push((i, j, rng.random_range(0.5..1.5)));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

/// Union of two random Hamiltonian cycles, unit weights (parallel edges
/// merge into weight 2).
pub fn expander(n: usize, seed: u64) -> Graph {
    let mut rng = rng(seed);
    let mut edges = Vec::new();
    for _ in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for k in 0..n {
            edges.push((order[k], order[(k + 1) % n], 1.0));
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

pub fn random_matrix(n: usize, c: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng(seed);
    DMatrix::from_fn(n, c, |_, _| rng.random_range(-1.0..1.0))
}

/// One-hot rows for `labeled` nodes with labels `i % c`.
pub fn labeled_rows(n: usize, c: usize, labeled: &[usize]) -> DMatrix<f64> {
    let mut u = DMatrix::zeros(n, c);
    for &i in labeled {
        u[(i, i % c)] = 1.0;
    }
    u
}

/// Samples of size `n` with exactly the given mean and sample standard
/// deviation.
pub fn exact_moments(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let m = raw.iter().sum::<f64>() / n as f64;
    let v = raw.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    raw.iter().map(|x| mean + sd * (x - m) / v.sqrt()).collect()
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Principal square root and inverse square root of a symmetric positive
/// definite matrix by the Denman–Beavers iteration.
pub fn sqrt_spd(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse().unwrap();
        let zi = z.clone().try_inverse().unwrap();
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let change = (&y_next - &y).norm() / y_next.norm();
        y = y_next;
        z = z_next;
        if change < 1e-15 {
            break;
        }
    }
    (y, z)
}

/// `L^s` for s ∈ {1/2, 1} and the pseudoinverse `(L^s)^†`, from the kernel
/// vector `v`: with `A = L + v vᵀ`, `L^{1/2} = A^{1/2} - v vᵀ`.
pub fn power_and_pinv(l: &DMatrix<f64>, v: &nalgebra::DVector<f64>, s: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = v * v.transpose();
    let a = l + &p;
    if s == 1.0 {
        (l.clone(), a.try_inverse().unwrap() - p)
    } else if s == 0.5 {
        let (root, inv_root) = sqrt_spd(&a);
        (root - &p, inv_root - p)
    } else {
        panic!("oracle only covers s = 1/2 and s = 1")
    }
}

/// `e^{-tM} U0 + t h(tM) F` through one exponential of the augmented matrix
/// `[[-tM, tF], [0, 0]]` (nalgebra's scaling-and-squaring Padé `exp`).
pub fn expm_closed_form(m: &DMatrix<f64>, u0: &DMatrix<f64>, f: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let (n, c) = (m.nrows(), u0.ncols());
    let mut b = DMatrix::zeros(n + c, n + c);
    b.view_mut((0, 0), (n, n)).copy_from(&(m * -t));
    b.view_mut((0, n), (n, c)).copy_from(&(f * t));
    let e = b.exp();
    e.view((0, 0), (n, n)) * u0 + e.view((0, n), (n, c))
}
