//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use deflecto::sensing::SensingPlan;

/// Sylvester Hadamard matrix (entries ±1) by Kronecker doubling.
pub fn sylvester(n: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![1.0]];
    while h.len() < n {
        let k = h.len();
        let mut next = vec![vec![0.0; 2 * k]; 2 * k];
        for i in 0..k {
            for j in 0..k {
                next[i][j] = h[i][j];
                next[i][j + k] = h[i][j];
                next[i + k][j] = h[i][j];
                next[i + k][j + k] = -h[i][j];
            }
        }
        h = next;
    }
    h
}

/// Dense `Phi = H_Omega diag(m) / sqrt(N)`, row-major `M x N`.
pub fn dense_phi(plan: &SensingPlan) -> Vec<Vec<f64>> {
    let n = plan.n();
    let h = sylvester(n);
    let scale = 1.0 / (n as f64).sqrt();
    plan.omega()
        .iter()
        .map(|&i| {
            (0..n)
                .map(|j| h[i][j] * f64::from(plan.modulation()[j]) * scale)
                .collect()
        })
        .collect()
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

/// Orthonormal multilevel Haar basis, vectors as rows.
pub fn haar_basis(n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0 / (n as f64).sqrt(); n]];
    let mut width = n;
    while width >= 2 {
        let v = 1.0 / (width as f64).sqrt();
        for k in 0..n / width {
            let mut row = vec![0.0; n];
            for (i, r) in row.iter_mut().enumerate().skip(k * width).take(width) {
                *r = if i < k * width + width / 2 { v } else { -v };
            }
            out.push(row);
        }
        width /= 2;
    }
    out
}

/// Least squares on the columns `support` of `a`, via normal equations
/// solved by Gaussian elimination. Returns coefficients and residual norm.
pub fn least_squares(a: &[Vec<f64>], y: &[f64], support: &[usize]) -> Option<(Vec<f64>, f64)> {
    let k = support.len();
    let mut g = vec![vec![0.0; k + 1]; k];
    for (p, &i) in support.iter().enumerate() {
        for (q, &j) in support.iter().enumerate() {
            g[p][q] = a.iter().map(|row| row[i] * row[j]).sum();
        }
        g[p][k] = a.iter().zip(y).map(|(row, v)| row[i] * v).sum();
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&r, &s| g[r][col].abs().total_cmp(&g[s][col].abs()))?;
        if g[piv][col].abs() < 1e-12 {
            return None;
        }
        g.swap(col, piv);
        let pivot = g[col].clone();
        for (r, row) in g.iter_mut().enumerate() {
            if r != col {
                let f = row[col] / pivot[col];
                for (v, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                    *v -= f * p;
                }
            }
        }
    }
    let coef: Vec<f64> = (0..k).map(|p| g[p][k] / g[p][p]).collect();
    let mut full = vec![0.0; a[0].len()];
    for (p, &i) in support.iter().enumerate() {
        full[i] = coef[p];
    }
    let fit = matvec(a, &full);
    let res = fit.iter().zip(y).map(|(f, v)| (f - v) * (f - v)).sum::<f64>().sqrt();
    Some((full, res))
}

/// Sparsest exact explanation of `y` with at most two columns, found by
/// enumerating every support of size 1 and then all `C(N, 2)` pairs.
pub fn support_oracle(a: &[Vec<f64>], y: &[f64]) -> Option<(Vec<usize>, Vec<f64>)> {
    let n = a[0].len();
    let tol = 1e-9 * (1.0 + y.iter().map(|v| v * v).sum::<f64>().sqrt());
    for i in 0..n {
        if let Some((x, r)) = least_squares(a, y, &[i]) {
            if r <= tol {
                return Some((vec![i], x));
            }
        }
    }
    let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    for i in 0..n {
        for j in i + 1..n {
            if let Some((x, r)) = least_squares(a, y, &[i, j]) {
                let l1: f64 = x.iter().map(|v| v.abs()).sum();
                if r <= tol && best.as_ref().is_none_or(|b| l1 < b.2) {
                    best = Some((vec![i, j], x, l1));
                }
            }
        }
    }
    best.map(|(s, x, _)| (s, x))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
