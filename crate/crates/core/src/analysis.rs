//! Matched-filter centroids (full and compressive) and quality metrics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridShape, SpectrumGrid};
use crate::linalg;
use crate::sensing::{self, MeasurementBundle, SensingPlan};

/// Centered unit-peak Gaussian of standard deviation `rho` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTemplate {
    rho: f64,
    shape: GridShape,
    support: Vec<f64>,
}

impl GaussianTemplate {
    pub fn new(rho: f64, shape: GridShape) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid(format!("template width must be positive, got {rho}")));
        }
        if shape.is_empty() {
            return Err(Error::invalid("empty template grid"));
        }
        let (cx, cy) = shape.origin();
        let inv = 1.0 / (2.0 * rho * rho);
        let mut support = Vec::with_capacity(shape.len());
        for r in 0..shape.height {
            for c in 0..shape.width {
                let (dx, dy) = (c as f64 - cx as f64, r as f64 - cy as f64);
                support.push((-(dx * dx + dy * dy) * inv).exp());
            }
        }
        Ok(GaussianTemplate {
            rho,
            shape,
            support,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CentroidMode {
    Full,
    Compressive,
}

/// Sub-pixel translation: `x` along columns, `y` along rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shift {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidEstimate {
    /// `None` when the spectrum carries no feature at all.
    pub tau: Option<Shift>,
    /// Integer maximizer `[x, y]` before refinement.
    pub peak: Option<[i64; 2]>,
    pub score: f64,
    pub mode: CentroidMode,
}

/// `|<s, T_tau g>|` for every cyclic integer shift, indexed by
/// `(ty mod h) * w + (tx mod w)`.
pub fn correlation_map(values: &[f64], template: &GaussianTemplate) -> Result<Vec<f64>> {
    let shape = template.shape;
    if values.len() != shape.len() {
        return Err(Error::SizeMismatch {
            expected: shape.len(),
            actual: values.len(),
        });
    }
    let (w, h) = (shape.width, shape.height);
    let g = &template.support;
    let mut map = vec![0.0; w * h];
    for ty in 0..h {
        for tx in 0..w {
            let mut acc = 0.0;
            for r in 0..h {
                let srow = &values[r * w..(r + 1) * w];
                let gr = (r + h - ty) % h;
                let grow = &g[gr * w..(gr + 1) * w];
                // s[r][c] * g[gr][(c - tx) mod w], split at the wrap point.
                let (head, tail) = srow.split_at(tx);
                acc += linalg::dot(tail, &grow[..w - tx]);
                acc += linalg::dot(head, &grow[w - tx..]);
            }
            map[ty * w + tx] = acc.abs();
        }
    }
    Ok(map)
}

fn wrap_signed(v: f64, n: usize) -> f64 {
    let n = n as f64;
    let half = (n / 2.0).floor();
    let mut t = v.rem_euclid(n);
    if t >= n - half {
        t -= n;
    }
    t
}

/// Stationary point of the least-squares quadratic through a 3x3 patch,
/// falling back to separable parabolas when the fit is not a maximum.
fn refine(patch: &[[f64; 3]; 3]) -> (f64, f64) {
    let (mut s, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (j, row) in patch.iter().enumerate() {
        let y = j as f64 - 1.0;
        for (i, &f) in row.iter().enumerate() {
            let x = i as f64 - 1.0;
            s += f;
            sx += x * f;
            sy += y * f;
            sxx += x * x * f;
            syy += y * y * f;
            sxy += x * y * f;
        }
    }
    let b = sx / 6.0;
    let c = sy / 6.0;
    let d = sxx / 2.0 - s / 3.0;
    let e = syy / 2.0 - s / 3.0;
    let f = sxy / 4.0;
    let det = 4.0 * d * e - f * f;
    if d < 0.0 && det > 0.0 {
        let x = (-2.0 * e * b + f * c) / det;
        let y = (-2.0 * d * c + f * b) / det;
        if x.abs() <= 1.0 && y.abs() <= 1.0 {
            return (x.clamp(-0.5, 0.5), y.clamp(-0.5, 0.5));
        }
    }
    let parabola = |m: f64, z: f64, p: f64| {
        let den = m - 2.0 * z + p;
        if den < 0.0 {
            (0.5 * (m - p) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    (
        parabola(patch[1][0], patch[1][1], patch[1][2]),
        parabola(patch[0][1], patch[1][1], patch[2][1]),
    )
}

fn search(values: &[f64], template: &GaussianTemplate, mode: CentroidMode) -> Result<CentroidEstimate> {
    let map = correlation_map(values, template)?;
    let (w, h) = (template.shape.width, template.shape.height);
    // Signed shifts in increasing (row, col) order; strict comparison keeps
    // the lexicographically smallest maximizer.
    let mut best: Option<(f64, i64, i64)> = None;
    for sy in -((h / 2) as i64)..(h - h / 2) as i64 {
        let iy = sy.rem_euclid(h as i64) as usize;
        for sx in -((w / 2) as i64)..(w - w / 2) as i64 {
            let ix = sx.rem_euclid(w as i64) as usize;
            let v = map[iy * w + ix];
            if best.is_none_or(|(b, _, _)| v > b) {
                best = Some((v, sx, sy));
            }
        }
    }
    let (score, sx, sy) = best.expect("non-empty grid");
    if !(score > 0.0) {
        return Ok(CentroidEstimate {
            tau: None,
            peak: None,
            score: 0.0,
            mode,
        });
    }
    let mut patch = [[0.0; 3]; 3];
    for (j, row) in patch.iter_mut().enumerate() {
        let iy = (sy + j as i64 - 1).rem_euclid(h as i64) as usize;
        for (i, v) in row.iter_mut().enumerate() {
            let ix = (sx + i as i64 - 1).rem_euclid(w as i64) as usize;
            *v = map[iy * w + ix];
        }
    }
    let (dx, dy) = refine(&patch);
    Ok(CentroidEstimate {
        tau: Some(Shift {
            x: wrap_signed(sx as f64 + dx, w),
            y: wrap_signed(sy as f64 + dy, h),
        }),
        peak: Some([sx, sy]),
        score,
        mode,
    })
}

/// Matched-filter centroid of a spectrum.
pub fn centroid_full(s: &SpectrumGrid, template: &GaussianTemplate) -> Result<CentroidEstimate> {
    search(s.values(), template, CentroidMode::Full)
}

/// Matched-filter centroid of the back-projection `Phi^T y`.
pub fn centroid_compressive(
    bundle: &MeasurementBundle,
    plan: &SensingPlan,
    template: &GaussianTemplate,
) -> Result<CentroidEstimate> {
    let y = sensing::debias(bundle, plan)?;
    let back = sensing::adjoint_phi(&y, plan)?;
    search(&back, template, CentroidMode::Compressive)
}

/// `20 log10(||reference|| / ||reference - estimate||)`, `+inf` on equality.
pub fn osnr(reference: &SpectrumGrid, estimate: &SpectrumGrid) -> Result<f64> {
    if reference.values().len() != estimate.values().len() {
        return Err(Error::SizeMismatch {
            expected: reference.values().len(),
            actual: estimate.values().len(),
        });
    }
    let num = reference.norm();
    if num == 0.0 {
        return Err(Error::ZeroNorm("reference spectrum"));
    }
    Ok(ratio_db(num, linalg::dist(reference.values(), estimate.values())))
}

/// `20 log10(||Phi s_no|| / ||y_no - Phi s_no||)`, `+inf` when noiseless.
pub fn isnr(y_no: &[f64], plan: &SensingPlan, s_no: &SpectrumGrid) -> Result<f64> {
    let clean = sensing::apply_phi(s_no.values(), plan)?;
    if y_no.len() != clean.len() {
        return Err(Error::SizeMismatch {
            expected: clean.len(),
            actual: y_no.len(),
        });
    }
    let num = linalg::norm(&clean);
    if num == 0.0 {
        return Err(Error::ZeroNorm("noiseless reference measurements"));
    }
    Ok(ratio_db(num, linalg::dist(y_no, &clean)))
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (num / den).log10()
    }
}

/// `||tau_full - tau_compressive||` in pixels.
pub fn centroid_error(full: &CentroidEstimate, compressive: &CentroidEstimate) -> Result<f64> {
    match (full.tau, compressive.tau) {
        (Some(a), Some(b)) => Ok((a.x - b.x).hypot(a.y - b.y)),
        _ => Err(Error::NoFeature),
    }
}

/// One exported centroid row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentroidRecord {
    pub pixel_id: u32,
    pub mode: CentroidMode,
    #[serde(rename = "M")]
    pub m_count: usize,
    pub seed: u64,
    pub tau_x: f64,
    pub tau_y: f64,
    pub score: f64,
    pub error_px: f64,
}

pub fn write_centroid_records<W: std::io::Write>(out: W, rows: &[CentroidRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn translated(t: &GaussianTemplate, dx: i64, dy: i64) -> SpectrumGrid {
        let s = t.shape();
        let (w, h) = (s.width as i64, s.height as i64);
        let mut v = vec![0.0; s.len()];
        for r in 0..h {
            for c in 0..w {
                let sr = (r - dy).rem_euclid(h) as usize;
                let sc = (c - dx).rem_euclid(w) as usize;
                v[(r * w + c) as usize] = t.support()[sr * s.width + sc];
            }
        }
        SpectrumGrid::from_values(s, v).unwrap()
    }

    #[test]
    fn template_shape() {
        let t = GaussianTemplate::new(2.0, GridShape::new(16, 16, 1.0)).unwrap();
        assert_eq!(t.support()[8 * 16 + 8], 1.0);
        assert!(t.support().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(GaussianTemplate::new(0.0, GridShape::new(16, 16, 1.0)).is_err());
    }

    #[test]
    fn recovers_integer_translation() {
        let t = GaussianTemplate::new(2.0, GridShape::new(32, 32, 1.0)).unwrap();
        let s = translated(&t, 5, -3);
        let c = centroid_full(&s, &t).unwrap();
        assert_eq!(c.peak, Some([5, -3]));
        let tau = c.tau.unwrap();
        assert!((tau.x - 5.0).abs() < 1e-9 && (tau.y + 3.0).abs() < 1e-9, "{tau:?}");

        for rho in [0.7, 1.5, 3.0, 6.0] {
            let t = GaussianTemplate::new(rho, GridShape::new(32, 32, 1.0)).unwrap();
            let c = centroid_full(&translated(&t, 0, 0), &t).unwrap();
            assert_eq!(c.peak, Some([0, 0]));
            let tau = c.tau.unwrap();
            assert!(tau.x.abs() < 1e-9 && tau.y.abs() < 1e-9);
        }
    }

    #[test]
    fn subpixel_refinement_moves_towards_truth() {
        let shape = GridShape::new(32, 32, 1.0);
        let t = GaussianTemplate::new(2.0, shape).unwrap();
        let (x0, y0) = (16.0 + 3.3, 16.0 - 2.6);
        let v: Vec<f64> = (0..32)
            .flat_map(|r| (0..32).map(move |c| (r, c)))
            .map(|(r, c)| {
                let (dx, dy) = (c as f64 - x0, r as f64 - y0);
                (-(dx * dx + dy * dy) / 8.0).exp()
            })
            .collect();
        let c = centroid_full(&SpectrumGrid::from_values(shape, v).unwrap(), &t).unwrap();
        let tau = c.tau.unwrap();
        assert!((tau.x - 3.3).abs() < 0.15 && (tau.y + 2.6).abs() < 0.15, "{tau:?}");
    }

    #[test]
    fn matches_exhaustive_oracle() {
        let shape = GridShape::new(16, 16, 1.0);
        let t = GaussianTemplate::new(1.5, shape).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let v: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..1.0)).collect();
            let s = SpectrumGrid::from_values(shape, v.clone()).unwrap();
            // Brute force: build every translated template explicitly.
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for dy in -8i64..8 {
                for dx in -8i64..8 {
                    let g = translated(&t, dx, dy);
                    let score = linalg::dot(&v, g.values()).abs();
                    if score > best.0 {
                        best = (score, dx, dy);
                    }
                }
            }
            let c = centroid_full(&s, &t).unwrap();
            assert_eq!(c.peak, Some([best.1, best.2]));
            assert!((c.score - best.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_spectrum_has_no_feature() {
        let shape = GridShape::new(8, 8, 1.0);
        let t = GaussianTemplate::new(1.0, shape).unwrap();
        let c = centroid_full(&SpectrumGrid::zeros(shape), &t).unwrap();
        assert_eq!(c.tau, None);
        assert_eq!(c.score, 0.0);
        assert!(matches!(centroid_error(&c, &c), Err(Error::NoFeature)));
    }

    #[test]
    fn centroid_errors() {
        let mk = |x, y| CentroidEstimate {
            tau: Some(Shift { x, y }),
            peak: None,
            score: 1.0,
            mode: CentroidMode::Full,
        };
        assert_eq!(centroid_error(&mk(1.0, 2.0), &mk(1.0, 2.0)).unwrap(), 0.0);
        assert_eq!(centroid_error(&mk(0.0, 0.0), &mk(3.0, 4.0)).unwrap(), 5.0);
    }

    #[test]
    fn osnr_values() {
        let shape = GridShape::new(4, 4, 1.0);
        let r = SpectrumGrid::from_values(shape, (0..16).map(|v| v as f64 + 1.0).collect()).unwrap();
        let est = r.clone().scaled(0.9);
        assert!((osnr(&r, &est).unwrap() - 20.0).abs() < 1e-9);
        assert!(osnr(&r, &SpectrumGrid::zeros(shape)).unwrap().abs() < 1e-12);
        assert_eq!(osnr(&r, &r).unwrap(), f64::INFINITY);
        assert!(osnr(&SpectrumGrid::zeros(shape), &r).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..16 {
            num += a[i] * a[i];
            den += (a[i] - b[i]) * (a[i] - b[i]);
        }
        let expect = 10.0 * (num / den).log10();
        let got = osnr(
            &SpectrumGrid::from_values(shape, a).unwrap(),
            &SpectrumGrid::from_values(shape, b).unwrap(),
        )
        .unwrap();
        assert!((got - expect).abs() < 1e-10);
    }
}
