//! Synthetic Schlieren deflectometer.
//!
//! A thin lens of power `P` deflects the ray through CCD location `p` by
//! `tan(theta) = P |p|` towards the optical axis; on the SLM plane that is a
//! displacement of `f tan(theta)`, i.e. `f tan(theta) * pixel_pitch` grid
//! pixels from the origin. The flip around the optical axis is ignored.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridShape, SpectrumGrid};
use crate::sensing::{self, MeasurementBundle, SensingPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentModel {
    /// Schlieren lens focal length, meters.
    pub focal_length: f64,
    /// Pinhole image radius on the SLM, grid pixels.
    pub pinhole_radius: f64,
    /// Probed object locations `p`, meters from the optical axis.
    pub ccd_pixels: Vec<[f64; 2]>,
    /// Std dev of the signal noise `n_s` (per spectrum element).
    pub sigma_s: f64,
    /// Std dev of the observation noise `n_y` (per optical measurement).
    pub sigma_y: f64,
    pub noise_seed: u64,
}

impl InstrumentModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length > 0.0) {
            return Err(Error::invalid("focal length must be positive"));
        }
        if !(self.pinhole_radius >= 1.0) {
            return Err(Error::invalid("pinhole radius must be at least one pixel"));
        }
        if self.ccd_pixels.is_empty() {
            return Err(Error::invalid("at least one CCD location is required"));
        }
        if !(self.sigma_s >= 0.0 && self.sigma_y >= 0.0) {
            return Err(Error::invalid("noise levels must be non-negative"));
        }
        Ok(())
    }

    pub fn noiseless(mut self) -> Self {
        self.sigma_s = 0.0;
        self.sigma_y = 0.0;
        self
    }
}

impl Default for InstrumentModel {
    fn default() -> Self {
        InstrumentModel {
            focal_length: 0.1,
            pinhole_radius: 3.0,
            ccd_pixels: vec![
                [1.0e-3, 0.0],
                [0.0, 1.5e-3],
                [-2.0e-3, 0.5e-3],
                [1.5e-3, -1.5e-3],
                [-0.5e-3, -2.5e-3],
            ],
            sigma_s: 0.0,
            sigma_y: 0.0,
            noise_seed: 0,
        }
    }
}

fn in_disk(row: i64, col: i64, cx: i64, cy: i64, r2: f64) -> bool {
    let (dx, dy) = ((col - cx) as f64, (row - cy) as f64);
    dx * dx + dy * dy <= r2
}

/// Binary disk of `radius` at the grid origin, translated by `offset = (dx, dy)`
/// pixels with bilinear interpolation.
pub fn disk(shape: GridShape, radius: f64, offset: (f64, f64)) -> SpectrumGrid {
    let (cx, cy) = shape.origin();
    let (cx, cy) = (cx as i64, cy as i64);
    let r2 = radius * radius;
    let mut values = vec![0.0; shape.len()];
    for row in 0..shape.height {
        let y = row as f64 - offset.1;
        let (y0, fy) = (y.floor(), y - y.floor());
        for col in 0..shape.width {
            let x = col as f64 - offset.0;
            let (x0, fx) = (x.floor(), x - x.floor());
            let (x0, y0i) = (x0 as i64, y0 as i64);
            let mut v = 0.0;
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let w = wy * wx;
                    if w > 0.0 && in_disk(y0i + dy, x0 + dx, cx, cy, r2) {
                        v += w;
                    }
                }
            }
            values[row * shape.width + col] = v;
        }
    }
    SpectrumGrid::from_values(shape, values).expect("finite disk")
}

/// No-object spectrum: unit-height disk of the pinhole radius at the origin.
pub fn disk_spectrum(model: &InstrumentModel, shape: GridShape) -> Result<SpectrumGrid> {
    let half = shape.width.min(shape.height) as f64 / 2.0;
    if !(model.pinhole_radius < half) {
        return Err(Error::invalid(format!(
            "pinhole radius {} does not fit in a {}x{} grid",
            model.pinhole_radius, shape.width, shape.height
        )));
    }
    Ok(disk(shape, model.pinhole_radius, (0.0, 0.0)))
}

/// Spot displacement `(dx, dy)` in grid pixels relative to the origin.
pub fn spot_displacement(
    power_diopters: f64,
    location: [f64; 2],
    model: &InstrumentModel,
    shape: GridShape,
) -> (f64, f64) {
    // tan(theta) = P |p| towards the axis, so the vector is -P f pitch p.
    let k = -power_diopters * model.focal_length * shape.pixel_pitch;
    (k * location[0], k * location[1])
}

/// Absolute spot center `(col, row)` on the grid.
pub fn spot_center(
    power_diopters: f64,
    location: [f64; 2],
    model: &InstrumentModel,
    shape: GridShape,
) -> Result<(f64, f64)> {
    let (dx, dy) = spot_displacement(power_diopters, location, model, shape);
    let (ox, oy) = shape.origin();
    let (x, y) = (ox as f64 + dx, oy as f64 + dy);
    let inside = x >= 0.0 && y >= 0.0 && x < shape.width as f64 && y < shape.height as f64;
    if !inside || !x.is_finite() || !y.is_finite() {
        return Err(Error::OffGrid {
            x,
            y,
            px: location[0],
            py: location[1],
            width: shape.width,
            height: shape.height,
        });
    }
    Ok((x, y))
}

/// Unit-peak isotropic Gaussian spot at the deflected position.
pub fn lens_spectrum(
    power_diopters: f64,
    location: [f64; 2],
    model: &InstrumentModel,
    spot_sigma: f64,
    shape: GridShape,
) -> Result<SpectrumGrid> {
    if !(spot_sigma > 0.0) {
        return Err(Error::invalid("spot sigma must be positive"));
    }
    let (x, y) = spot_center(power_diopters, location, model, shape)?;
    let inv = 1.0 / (2.0 * spot_sigma * spot_sigma);
    let mut values = Vec::with_capacity(shape.len());
    for row in 0..shape.height {
        let dy = row as f64 - y;
        for col in 0..shape.width {
            let dx = col as f64 - x;
            values.push((-(dx * dx + dy * dy) * inv).exp());
        }
    }
    SpectrumGrid::from_values(shape, values)
}

/// Simulated biased acquisition of `s` for one CCD pixel.
///
/// `y_bar = Phi_bar (s + n_s) + n_y` with the {0,1} patterns and
/// `z_bar = <1, s + n_s> + n_z`; the noise stream is seeded with
/// `noise_seed ^ pixel_id`.
pub fn measure(
    s: &SpectrumGrid,
    plan: &SensingPlan,
    model: &InstrumentModel,
    pixel_id: u32,
) -> Result<MeasurementBundle> {
    if s.values().len() != plan.n() {
        return Err(Error::SizeMismatch {
            expected: plan.n(),
            actual: s.values().len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.noise_seed ^ u64::from(pixel_id));
    let perturbed: Vec<f64> = s
        .values()
        .iter()
        .map(|&v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            v + model.sigma_s * n
        })
        .collect();
    let total: f64 = perturbed.iter().sum();
    let products = sensing::optical_products(&perturbed, plan)?;
    let y_biased = products
        .iter()
        .map(|&p| {
            let n: f64 = StandardNormal.sample(&mut rng);
            0.5 * (p + total) + model.sigma_y * n
        })
        .collect();
    let nz: f64 = StandardNormal.sample(&mut rng);
    let z_bar = total + model.sigma_y * nz;
    Ok(MeasurementBundle::new(pixel_id, y_biased, Some(z_bar)))
}
