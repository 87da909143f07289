//! Separable 2-D CDF 9/7 wavelet transform, lifting implementation.
//!
//! Whole-sample symmetric boundary extension; coefficients are stored in
//! Mallat layout (approximation band in the top-left corner). The lowpass
//! analysis filter has DC gain sqrt(2), so the transform is close to
//! orthonormal but not exactly: the solver needs the true transpose of the
//! synthesis, provided by [`synthesis_adjoint`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{GridShape, SpectrumGrid};
use crate::linalg;
use crate::sensing::{self, SensingPlan};

const ALPHA: f64 = -1.586_134_342_059_924;
const BETA: f64 = -0.052_980_118_572_961;
const GAMMA: f64 = 0.882_911_075_530_934;
const DELTA: f64 = 0.443_506_852_043_971;
const ZETA: f64 = 1.149_604_398_860_241;

/// Wavelet coefficients of a spectrum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs {
    shape: GridShape,
    levels: usize,
    coeffs: Vec<f64>,
}

impl WaveletCoeffs {
    pub fn new(shape: GridShape, levels: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_levels(shape, levels)?;
        if coeffs.len() != shape.len() {
            return Err(Error::SizeMismatch {
                expected: shape.len(),
                actual: coeffs.len(),
            });
        }
        Ok(WaveletCoeffs {
            shape,
            levels,
            coeffs,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }
}

pub fn check_levels(shape: GridShape, levels: usize) -> Result<()> {
    let err = Error::IndivisibleGrid {
        width: shape.width,
        height: shape.height,
        levels,
    };
    if shape.width == 0 || shape.height == 0 || levels >= usize::BITS as usize {
        return Err(err);
    }
    let block = 1usize << levels;
    if !shape.width.is_multiple_of(block) || !shape.height.is_multiple_of(block) {
        return Err(err);
    }
    Ok(())
}

#[inline]
fn right(k: usize, n: usize) -> usize {
    if k < n {
        k
    } else {
        2 * (n - 1) - k
    }
}

/// Odd samples += c * (left even + right even).
fn lift_odd(x: &mut [f64], c: f64) {
    let n = x.len();
    for i in (1..n).step_by(2) {
        x[i] += c * (x[i - 1] + x[right(i + 1, n)]);
    }
}

/// Even samples += c * (left odd + right odd).
fn lift_even(x: &mut [f64], c: f64) {
    let n = x.len();
    for i in (0..n).step_by(2) {
        let l = if i == 0 { 1 } else { i - 1 };
        x[i] += c * (x[l] + x[i + 1]);
    }
}

fn lift_odd_t(x: &mut [f64], c: f64) {
    let n = x.len();
    for i in (1..n).step_by(2) {
        let v = c * x[i];
        x[i - 1] += v;
        x[right(i + 1, n)] += v;
    }
}

fn lift_even_t(x: &mut [f64], c: f64) {
    let n = x.len();
    for i in (0..n).step_by(2) {
        let v = c * x[i];
        let l = if i == 0 { 1 } else { i - 1 };
        x[l] += v;
        x[i + 1] += v;
    }
}

fn scale(x: &mut [f64], even: f64, odd: f64) {
    for pair in x.chunks_exact_mut(2) {
        pair[0] *= even;
        pair[1] *= odd;
    }
}

fn deinterleave(x: &mut [f64], tmp: &mut [f64]) {
    let half = x.len() / 2;
    for i in 0..half {
        tmp[i] = x[2 * i];
        tmp[half + i] = x[2 * i + 1];
    }
    x.copy_from_slice(&tmp[..x.len()]);
}

fn interleave(x: &mut [f64], tmp: &mut [f64]) {
    let half = x.len() / 2;
    for i in 0..half {
        tmp[2 * i] = x[i];
        tmp[2 * i + 1] = x[half + i];
    }
    x.copy_from_slice(&tmp[..x.len()]);
}

fn analysis_1d(x: &mut [f64], tmp: &mut [f64]) {
    lift_odd(x, ALPHA);
    lift_even(x, BETA);
    lift_odd(x, GAMMA);
    lift_even(x, DELTA);
    scale(x, ZETA, ZETA.recip());
    deinterleave(x, tmp);
}

fn synthesis_1d(x: &mut [f64], tmp: &mut [f64]) {
    interleave(x, tmp);
    scale(x, ZETA.recip(), ZETA);
    lift_even(x, -DELTA);
    lift_odd(x, -GAMMA);
    lift_even(x, -BETA);
    lift_odd(x, -ALPHA);
}

fn synthesis_1d_t(x: &mut [f64], tmp: &mut [f64]) {
    lift_odd_t(x, -ALPHA);
    lift_even_t(x, -BETA);
    lift_odd_t(x, -GAMMA);
    lift_even_t(x, -DELTA);
    scale(x, ZETA.recip(), ZETA);
    deinterleave(x, tmp);
}

type LineOp = fn(&mut [f64], &mut [f64]);

/// Runs `op` on every row of the top-left `w x h` block.
fn on_rows(data: &mut [f64], stride: usize, w: usize, h: usize, op: LineOp, tmp: &mut [f64]) {
    for r in 0..h {
        op(&mut data[r * stride..r * stride + w], tmp);
    }
}

/// Runs `op` on every column of the top-left `w x h` block.
fn on_cols(
    data: &mut [f64],
    stride: usize,
    w: usize,
    h: usize,
    op: LineOp,
    line: &mut [f64],
    tmp: &mut [f64],
) {
    for c in 0..w {
        for r in 0..h {
            line[r] = data[r * stride + c];
        }
        op(&mut line[..h], tmp);
        for r in 0..h {
            data[r * stride + c] = line[r];
        }
    }
}

enum Direction {
    Analysis,
    Synthesis,
    SynthesisAdjoint,
}

fn transform(data: &mut [f64], shape: GridShape, levels: usize, dir: Direction) {
    let (w, h) = (shape.width, shape.height);
    let mut tmp = vec![0.0; w.max(h)];
    let mut line = vec![0.0; h];
    let level_dims = |l: usize| (w >> l, h >> l);
    match dir {
        Direction::Analysis => {
            for l in 0..levels {
                let (lw, lh) = level_dims(l);
                on_rows(data, w, lw, lh, analysis_1d, &mut tmp);
                on_cols(data, w, lw, lh, analysis_1d, &mut line, &mut tmp);
            }
        }
        Direction::Synthesis => {
            for l in (0..levels).rev() {
                let (lw, lh) = level_dims(l);
                on_cols(data, w, lw, lh, synthesis_1d, &mut line, &mut tmp);
                on_rows(data, w, lw, lh, synthesis_1d, &mut tmp);
            }
        }
        Direction::SynthesisAdjoint => {
            for l in 0..levels {
                let (lw, lh) = level_dims(l);
                on_rows(data, w, lw, lh, synthesis_1d_t, &mut tmp);
                on_cols(data, w, lw, lh, synthesis_1d_t, &mut line, &mut tmp);
            }
        }
    }
}

/// Multilevel analysis `alpha = Psi s`.
pub fn dwt97_forward(s: &SpectrumGrid, levels: usize) -> Result<WaveletCoeffs> {
    check_levels(s.shape(), levels)?;
    let mut coeffs = s.values().to_vec();
    transform(&mut coeffs, s.shape(), levels, Direction::Analysis);
    Ok(WaveletCoeffs {
        shape: s.shape(),
        levels,
        coeffs,
    })
}

/// Multilevel synthesis `s = Psi* alpha`; exact inverse of [`dwt97_forward`].
pub fn dwt97_inverse(a: &WaveletCoeffs) -> Result<SpectrumGrid> {
    check_levels(a.shape, a.levels)?;
    let mut values = a.coeffs.clone();
    transform(&mut values, a.shape, a.levels, Direction::Synthesis);
    SpectrumGrid::from_values(a.shape, values)
}

pub(crate) fn analysis_in_place(data: &mut [f64], shape: GridShape, levels: usize) {
    transform(data, shape, levels, Direction::Analysis);
}

pub(crate) fn synthesis_in_place(data: &mut [f64], shape: GridShape, levels: usize) {
    transform(data, shape, levels, Direction::Synthesis);
}

/// Transpose of the synthesis operator, `(Psi*)^T x`.
pub fn synthesis_adjoint(x: &[f64], shape: GridShape, levels: usize) -> Result<Vec<f64>> {
    check_levels(shape, levels)?;
    if x.len() != shape.len() {
        return Err(Error::SizeMismatch {
            expected: shape.len(),
            actual: x.len(),
        });
    }
    let mut out = x.to_vec();
    transform(&mut out, shape, levels, Direction::SynthesisAdjoint);
    Ok(out)
}

/// `A = Phi Psi*`: wavelet coefficients to digital measurements.
/// `levels == 0` makes `Psi` the identity.
#[derive(Debug, Clone)]
pub struct CompositeOperator {
    plan: SensingPlan,
    shape: GridShape,
    levels: usize,
}

impl CompositeOperator {
    pub fn new(plan: SensingPlan, shape: GridShape, levels: usize) -> Result<Self> {
        check_levels(shape, levels)?;
        if shape.len() != plan.n() {
            return Err(Error::SizeMismatch {
                expected: plan.n(),
                actual: shape.len(),
            });
        }
        Ok(CompositeOperator {
            plan,
            shape,
            levels,
        })
    }

    pub fn plan(&self) -> &SensingPlan {
        &self.plan
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn rows(&self) -> usize {
        self.plan.m_count()
    }

    pub fn cols(&self) -> usize {
        self.plan.n()
    }

    pub fn synthesize(&self, alpha: &[f64]) -> Vec<f64> {
        let mut s = alpha.to_vec();
        synthesis_in_place(&mut s, self.shape, self.levels);
        s
    }

    pub fn analyze(&self, s: &[f64]) -> Vec<f64> {
        let mut a = s.to_vec();
        analysis_in_place(&mut a, self.shape, self.levels);
        a
    }

    pub fn apply(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.cols() {
            return Err(Error::SizeMismatch {
                expected: self.cols(),
                actual: alpha.len(),
            });
        }
        sensing::apply_phi(&self.synthesize(alpha), &self.plan)
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = sensing::adjoint_phi(y, &self.plan)?;
        transform(&mut x, self.shape, self.levels, Direction::SynthesisAdjoint);
        Ok(x)
    }

    /// Power iteration on `A^T A`; returns the spectral norm estimate.
    pub fn norm_estimate(&self, iters: usize) -> Result<f64> {
        if iters < 10 {
            return Err(Error::invalid(format!("power iteration needs >= 10 iterations, got {iters}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.plan.seed() ^ 0x5_eed0_fa11);
        let mut v: Vec<f64> = (0..self.cols()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut estimate = 0.0;
        for _ in 0..iters {
            let nv = linalg::norm(&v);
            if nv == 0.0 {
                return Ok(0.0);
            }
            v.iter_mut().for_each(|x| *x /= nv);
            let w = self.adjoint(&self.apply(&v)?)?;
            estimate = linalg::dot(&v, &w).max(0.0).sqrt();
            v = w;
        }
        Ok(estimate)
    }
}

/// Spectral norm estimate of `Phi Psi*` by power iteration.
pub fn operator_norm_estimate(
    plan: &SensingPlan,
    shape: GridShape,
    levels: usize,
    iters: usize,
) -> Result<f64> {
    CompositeOperator::new(plan.clone(), shape, levels)?.norm_estimate(iters)
}
