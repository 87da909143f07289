//! Basis pursuit denoising in synthesis form,
//!
//! `min ||alpha||_1  s.t.  ||y - Phi Psi* alpha||_2 <= eps`,
//!
//! solved with the Chambolle-Pock primal-dual iteration on the saddle-point
//! form `min_alpha ||alpha||_1 + i_B(y, eps)(A alpha)`.

use crate::error::{Error, Result};
use crate::grid::SpectrumGrid;
use crate::linalg;
use crate::wavelet97::{CompositeOperator, WaveletCoeffs};

/// Relative slack allowed on the residual constraint when declaring convergence.
pub const FEASIBILITY_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Relative primal change below which the iteration may stop.
    pub tol: f64,
    pub sigma: f64,
    pub tau: f64,
    pub theta: f64,
    /// Spectral norm `L` of `A`.
    pub norm_bound: f64,
    /// Start from the analysis of the back-projection instead of zero.
    pub warm_start: bool,
}

impl SolverConfig {
    /// Default parameterization `sigma = tau = 0.99 / L`, `theta = 1`.
    pub fn for_norm(norm_bound: f64) -> Self {
        let step = 0.99 / norm_bound;
        SolverConfig {
            max_iters: 2000,
            tol: 1e-5,
            sigma: step,
            tau: step,
            theta: 1.0,
            norm_bound,
            warm_start: true,
        }
    }

    pub fn with_limits(mut self, max_iters: usize, tol: f64) -> Self {
        self.max_iters = max_iters;
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.tau > 0.0 && self.norm_bound > 0.0) {
            return Err(Error::invalid("step sizes and operator norm must be positive"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid(format!("theta = {} not in [0, 1]", self.theta)));
        }
        if self.sigma * self.tau * self.norm_bound * self.norm_bound > 1.0 + 1e-12 {
            return Err(Error::invalid("sigma * tau * L^2 must not exceed 1"));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::invalid("tol must be positive and max_iters nonzero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub alpha_hat: WaveletCoeffs,
    pub s_hat: SpectrumGrid,
    pub iterations: usize,
    pub residual_norm: f64,
    /// `||alpha_hat||_1`.
    pub objective: f64,
    pub converged: bool,
}

/// Elementwise `sign(v) * max(|v| - lambda, 0)`.
pub fn soft_threshold(v: &[f64], lambda: f64) -> Vec<f64> {
    v.iter().map(|&x| shrink(x, lambda)).collect()
}

#[inline]
fn shrink(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// Euclidean projection onto `{u : ||u - center|| <= radius}`.
pub fn project_l2_ball(v: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    let d = linalg::dist(v, center);
    if d <= radius {
        return v.to_vec();
    }
    let t = radius / d;
    v.iter()
        .zip(center)
        .map(|(x, c)| c + t * (x - c))
        .collect()
}

/// Solves BPDN for measurements `y` taken through `op`.
pub fn solve_bpdn(
    y: &[f64],
    op: &CompositeOperator,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run(y, op, eps, cfg, None)
}

/// As [`solve_bpdn`], calling `observe(iteration, alpha)` after every step.
/// The iterate passed to the observer is in the caller's scale.
pub fn solve_bpdn_observed(
    y: &[f64],
    op: &CompositeOperator,
    eps: f64,
    cfg: &SolverConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<SolveResult> {
    run(y, op, eps, cfg, Some(&mut observe))
}

type Observer<'a> = &'a mut dyn FnMut(usize, &[f64]);

fn run(
    y: &[f64],
    op: &CompositeOperator,
    eps: f64,
    cfg: &SolverConfig,
    mut observer: Option<Observer<'_>>,
) -> Result<SolveResult> {
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("eps must be non-negative, got {eps}")));
    }
    if y.iter().any(|v| !v.is_finite()) || !eps.is_finite() {
        return Err(Error::NonFinite("measurements"));
    }
    if y.len() != op.rows() {
        return Err(Error::SizeMismatch {
            expected: op.rows(),
            actual: y.len(),
        });
    }
    cfg.validate()?;

    let y_norm = linalg::norm(y);
    if eps >= y_norm {
        // Zero is feasible and has the smallest possible l1 norm.
        return finish(op, vec![0.0; op.cols()], 0, y_norm, true);
    }

    // Work on the unit-norm problem so the soft-threshold step is scale free.
    let yn: Vec<f64> = y.iter().map(|v| v / y_norm).collect();
    let eps_n = eps / y_norm;
    let (sigma, tau, theta) = (cfg.sigma, cfg.tau, cfg.theta);
    let bound = eps_n * (1.0 + FEASIBILITY_SLACK);

    let mut alpha = if cfg.warm_start {
        op.analyze(&crate::sensing::adjoint_phi(&yn, op.plan())?)
    } else {
        vec![0.0; op.cols()]
    };
    let mut a_alpha = op.apply(&alpha)?;
    let mut a_bar = a_alpha.clone();
    let mut dual = vec![0.0; op.rows()];
    let mut scratch = vec![0.0; op.rows()];
    let mut scaled = vec![0.0; op.cols()];

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;

        // Dual: prox of sigma F* via Moreau, F the indicator of B(y, eps).
        for ((v, p), a) in scratch.iter_mut().zip(&dual).zip(&a_bar) {
            *v = p + sigma * a;
        }
        let over: Vec<f64> = scratch.iter().map(|v| v / sigma).collect();
        let proj = project_l2_ball(&over, &yn, eps_n);
        for ((p, v), q) in dual.iter_mut().zip(&scratch).zip(&proj) {
            *p = v - sigma * q;
        }

        // Primal: soft-threshold the gradient step.
        let grad = op.adjoint(&dual)?;
        let mut change = 0.0;
        for ((next, a), g) in scaled.iter_mut().zip(&alpha).zip(&grad) {
            *next = shrink(a - tau * g, tau);
            change += (*next - a) * (*next - a);
        }
        let prev_norm = linalg::norm(&alpha);
        let a_next = op.apply(&scaled)?;
        for ((b, an), ao) in a_bar.iter_mut().zip(&a_next).zip(&a_alpha) {
            *b = an + theta * (an - ao);
        }
        std::mem::swap(&mut alpha, &mut scaled);
        a_alpha = a_next;

        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("solver iterate"));
        }
        if let Some(observe) = observer.as_mut() {
            let view: Vec<f64> = alpha.iter().map(|v| v * y_norm).collect();
            observe(iterations, &view);
        }

        let rel = change.sqrt() / prev_norm.max(1e-12);
        if rel < cfg.tol && linalg::dist(&a_alpha, &yn) <= bound {
            converged = true;
            break;
        }
    }

    let alpha: Vec<f64> = alpha.into_iter().map(|v| v * y_norm).collect();
    let residual = linalg::dist(&op.apply(&alpha)?, y);
    finish(op, alpha, iterations, residual, converged)
}

fn finish(
    op: &CompositeOperator,
    alpha: Vec<f64>,
    iterations: usize,
    residual_norm: f64,
    converged: bool,
) -> Result<SolveResult> {
    let objective = linalg::l1_norm(&alpha);
    let alpha_hat = WaveletCoeffs::new(op.shape(), op.levels(), alpha)?;
    let s_hat = crate::wavelet97::dwt97_inverse(&alpha_hat)?;
    Ok(SolveResult {
        alpha_hat,
        s_hat,
        iterations,
        residual_norm,
        objective,
        converged,
    })
}
