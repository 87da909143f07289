//! Noise-bound estimation from no-object, full-sampling measurements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::linalg;
use crate::optics;
use crate::sensing::{self, SensingPlan};

/// Half-width of the origin search, pixels.
pub const ORIGIN_SEARCH_RADIUS: f64 = 2.0;
pub const ORIGIN_SEARCH_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    /// Residual norm at full sampling, `||y_no - h Phi s_no||`.
    pub eps_full: f64,
    pub disk_height: f64,
    /// Fitted SLM origin shift `(dx, dy)` in pixels.
    pub origin_offset: [f64; 2],
}

/// Fits disk height and sub-pixel origin to no-object measurements `y_no`
/// (digital convention, `M = N`) and reports the attained residual.
pub fn fit_reference(
    y_no: &[f64],
    plan: &SensingPlan,
    shape: GridShape,
    pinhole_radius: f64,
) -> Result<NoiseEstimate> {
    if !plan.is_full() {
        return Err(Error::NotFullSampling {
            m: plan.m_count(),
            n: plan.n(),
        });
    }
    if shape.len() != plan.n() {
        return Err(Error::SizeMismatch {
            expected: plan.n(),
            actual: shape.len(),
        });
    }
    if y_no.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("no-object measurements"));
    }
    // Phi is orthogonal at full sampling, so residuals can be taken in the
    // spectrum domain.
    let back = sensing::adjoint_phi(y_no, plan)?;

    let steps = (2.0 * ORIGIN_SEARCH_RADIUS / ORIGIN_SEARCH_STEP).round() as i32;
    let mut best: Option<(f64, f64, [f64; 2])> = None;
    for iy in 0..=steps {
        let dy = -ORIGIN_SEARCH_RADIUS + iy as f64 * ORIGIN_SEARCH_STEP;
        for ix in 0..=steps {
            let dx = -ORIGIN_SEARCH_RADIUS + ix as f64 * ORIGIN_SEARCH_STEP;
            let model = optics::disk(shape, pinhole_radius, (dx, dy));
            let d = model.values();
            let dd = linalg::dot(d, d);
            if dd == 0.0 {
                continue;
            }
            let h = linalg::dot(&back, d) / dd;
            let residual = back
                .iter()
                .zip(d)
                .map(|(b, v)| (b - h * v).powi(2))
                .sum::<f64>()
                .sqrt();
            if best.is_none_or(|(r, _, _)| residual < r) {
                best = Some((residual, h, [dx, dy]));
            }
        }
    }
    let (eps_full, disk_height, origin_offset) =
        best.ok_or_else(|| Error::invalid("pinhole disk is empty"))?;
    if !(disk_height > 0.0) {
        return Err(Error::invalid(format!(
            "fitted disk height {disk_height} is not positive; no disk in the reference data"
        )));
    }
    Ok(NoiseEstimate {
        eps_full,
        disk_height,
        origin_offset,
    })
}

/// Scales a full-sampling noise bound down to `m_count` measurements:
/// `eps_full * sqrt(M + 2 sqrt(M)) / sqrt(N)`.
///
/// At `M = N` this is slightly larger than `eps_full` (a factor
/// `sqrt(1 + 2/sqrt(N))`).
pub fn scale_epsilon(eps_full: f64, m_count: usize, n_total: usize) -> Result<f64> {
    if m_count == 0 || m_count > n_total {
        return Err(Error::invalid(format!(
            "measurement count {m_count} out of range 1..={n_total}"
        )));
    }
    let m = m_count as f64;
    Ok(eps_full * (m + 2.0 * m.sqrt()).sqrt() / (n_total as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hadamard::HadamardOrder;
    use crate::sensing::{apply_phi, make_plan};

    #[test]
    fn scale_rule_values() {
        let e = scale_epsilon(2.0, 4096, 4096).unwrap();
        assert!((e - 2.0 * (4096.0f64 + 128.0).sqrt() / 64.0).abs() < 1e-12);
        assert!((e / 2.0 - 1.015_504_800_579_495).abs() < 1e-12);
        let one = scale_epsilon(2.0, 1, 4096).unwrap();
        assert!((one - 2.0 * 3f64.sqrt() / 64.0).abs() < 1e-15);
        assert!(scale_epsilon(1.0, 0, 16).is_err());
        assert!(scale_epsilon(1.0, 17, 16).is_err());
        let mut prev = 0.0;
        for m in 1..=256 {
            let v = scale_epsilon(1.0, m, 256).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!((scale_epsilon(3.0, 50, 256).unwrap() - 3.0 * scale_epsilon(1.0, 50, 256).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn exact_reference_fit() {
        let shape = GridShape::new(32, 32, 1.0);
        let plan = make_plan(HadamardOrder::from_len(1024).unwrap(), 1024, 2, true).unwrap();
        let s = optics::disk(shape, 4.0, (0.0, 0.0));
        let y = apply_phi(s.values(), &plan).unwrap();
        let est = fit_reference(&y, &plan, shape, 4.0).unwrap();
        assert!((est.disk_height - 1.0).abs() < 1e-6);
        assert_eq!(est.origin_offset, [0.0, 0.0]);
        assert!(est.eps_full <= 1e-8);

        let scaled: Vec<f64> = y.iter().map(|v| v * 3.5).collect();
        let est2 = fit_reference(&scaled, &plan, shape, 4.0).unwrap();
        assert!((est2.disk_height - 3.5).abs() < 1e-6);
    }

    #[test]
    fn recovers_shifted_origin() {
        let shape = GridShape::new(32, 32, 1.0);
        let plan = make_plan(HadamardOrder::from_len(1024).unwrap(), 1024, 2, true).unwrap();
        let s = optics::disk(shape, 4.0, (1.0, -0.5));
        let y = apply_phi(s.values(), &plan).unwrap();
        let est = fit_reference(&y, &plan, shape, 4.0).unwrap();
        assert!((est.origin_offset[0] - 1.0).abs() <= 0.5);
        assert!((est.origin_offset[1] + 0.5).abs() <= 0.5);
    }

    #[test]
    fn requires_full_sampling() {
        let shape = GridShape::new(16, 16, 1.0);
        let plan = make_plan(HadamardOrder::from_len(256).unwrap(), 100, 2, false).unwrap();
        assert!(matches!(
            fit_reference(&[0.0; 100], &plan, shape, 3.0),
            Err(Error::NotFullSampling { m: 100, n: 256 })
        ));
    }
}
