//! Independent numerical oracles shared by integration tests.
#![allow(dead_code)]

use mtbo_core::mtgp::FittedModel;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Nodes and weights for `E[g(Z)]`, `Z ~ N(0, 1)`, by Golub-Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i] * std::f64::consts::SQRT_2, v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn big_phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Expected improvement of `N(m, s²)` over `best`.
pub fn expected_improvement(m: f64, s: f64, best: f64) -> f64 {
    if s <= 0.0 {
        return (m - best).max(0.0);
    }
    let u = (m - best) / s;
    s * phi(u) + (m - best) * big_phi(u)
}

/// Unconstrained noisy EI at `x` by tensor Gauss-Hermite integration over the
/// joint posterior of the objective at `online` (at most three points).
pub fn nei_quadrature(model: &FittedModel, online: &[Vec<f64>], x: &[f64], nodes: usize) -> f64 {
    let c = online.len();
    assert!((1..=3).contains(&c));
    let mut queries: Vec<(usize, Vec<f64>)> = online.iter().map(|p| (0, p.clone())).collect();
    queries.push((0, x.to_vec()));
    let post = model.posterior(&queries).unwrap();
    let s_cc = post.covariance.view((0, 0), (c, c)).into_owned();
    let s_xc = post.covariance.view((c, 0), (1, c)).into_owned();
    let mu_c = post.mean.rows(0, c).into_owned();
    let mu_x = post.mean[c];
    let var_x = post.covariance[(c, c)];
    let l = s_cc.clone().cholesky().unwrap().unpack();
    let s_inv = s_cc.try_inverse().unwrap();
    let gain = &s_xc * &s_inv;
    let cond_var = (var_x - (&gain * s_xc.transpose())[(0, 0)]).max(0.0);
    let cond_sd = cond_var.sqrt();
    let (z, w) = gauss_hermite(nodes);
    let mut total = 0.0;
    let mut idx = vec![0usize; c];
    loop {
        let zv = DVector::from_fn(c, |i, _| z[idx[i]]);
        let weight: f64 = idx.iter().map(|&i| w[i]).product();
        let f_c = &mu_c + &l * zv;
        let best = f_c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let m = mu_x + (&gain * (&f_c - &mu_c))[(0, 0)];
        total += weight * expected_improvement(m, cond_sd, best);
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < nodes {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == c {
                return total;
            }
        }
    }
}
