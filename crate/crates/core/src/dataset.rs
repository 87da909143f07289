//! On-disk datasets: one `DFCM` bundle per acquisition plus a TOML manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::NoiseEstimate;
use crate::error::{Error, Result};
use crate::formats;
use crate::grid::{GridShape, SpectrumGrid};
use crate::optics::{self, InstrumentModel};
use crate::seeds::derive_seed;
use crate::sensing::{MeasurementBundle, SensingPlan};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleKind {
    NoObject,
    Lens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleEntry {
    pub kind: BundleKind,
    pub pixel_id: u32,
    /// Bundle file, relative to the dataset directory.
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lens_power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<[f64; 2]>,
    /// Noiseless phantom, `DFLS`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<String>,
    /// Simulated spot center `[col, row]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_center: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub grid: GridShape,
    pub plan_seed: u64,
    pub spot_sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_isnr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulated_isnr_db: Option<f64>,
    pub instrument: InstrumentModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_estimate: Option<NoiseEstimate>,
    pub bundles: Vec<BundleEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from(MANIFEST_FILE),
            message: e.to_string(),
        })?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::invalid(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("manifest: {e}")))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Manifest::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { path, message },
            other => other,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(MANIFEST_FILE), self.to_toml()?.as_bytes())
    }

    pub fn no_object(&self) -> Result<&BundleEntry> {
        self.bundles
            .iter()
            .find(|b| b.kind == BundleKind::NoObject)
            .ok_or_else(|| Error::invalid("dataset has no no-object bundle"))
    }

    pub fn lenses(&self) -> impl Iterator<Item = &BundleEntry> {
        self.bundles.iter().filter(|b| b.kind == BundleKind::Lens)
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bundle(dir: &Path, entry: &BundleEntry) -> Result<(SensingPlan, MeasurementBundle)> {
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    formats::decode_bundle(&bytes).map_err(|e| Error::Parse {
        path,
        message: e.to_string(),
    })
}

pub fn read_spectrum(dir: &Path, file: &str, pixel_pitch: f64) -> Result<SpectrumGrid> {
    let path = dir.join(file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    formats::decode_spectrum(&bytes, pixel_pitch).map_err(|e| Error::Parse {
        path,
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LensSpec {
    pub power: f64,
    /// Peak height of the simulated spot.
    #[serde(default = "unit")]
    pub contrast: f64,
}

fn unit() -> f64 {
    1.0
}

/// What to put in front of the instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub lenses: Vec<LensSpec>,
    pub spot_sigma: f64,
}

/// Noise model for acquisition `index` (0 = no object, `i + 1` = lens `i`).
///
/// Every acquisition gets its own noise stream; CCD pixels within one
/// acquisition are further separated by `pixel_id`.
pub fn acquisition_model(model: &InstrumentModel, index: u64) -> InstrumentModel {
    InstrumentModel {
        noise_seed: derive_seed(model.noise_seed, &[index]),
        ..model.clone()
    }
}

/// Simulates every acquisition in `phantom` through `plan` and writes the
/// bundles, noiseless phantoms and manifest into `dir`.
pub fn snapshot_dataset(
    dir: &Path,
    phantom: &PhantomSpec,
    plan: &SensingPlan,
    model: &InstrumentModel,
    shape: GridShape,
) -> Result<Manifest> {
    model.validate()?;
    if shape.len() != plan.n() {
        return Err(Error::SizeMismatch {
            expected: plan.n(),
            actual: shape.len(),
        });
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut bundles = Vec::new();
    let s_no = optics::disk_spectrum(model, shape)?;
    let y_no = optics::measure(&s_no, plan, &acquisition_model(model, 0), 0)?;
    let file = "no_object.dfcm".to_string();
    write_file(&dir.join(&file), &formats::encode_bundle(plan, &y_no)?)?;
    bundles.push(BundleEntry {
        kind: BundleKind::NoObject,
        pixel_id: 0,
        file,
        lens_power: None,
        contrast: None,
        location: None,
        spectrum: None,
        true_center: None,
    });

    for (li, lens) in phantom.lenses.iter().enumerate() {
        if !(lens.contrast > 0.0 && lens.contrast.is_finite()) {
            return Err(Error::invalid(format!("lens contrast must be positive, got {}", lens.contrast)));
        }
        let acq = acquisition_model(model, li as u64 + 1);
        for (pi, &location) in model.ccd_pixels.iter().enumerate() {
            let pixel_id = pi as u32;
            let s = optics::lens_spectrum(lens.power, location, model, phantom.spot_sigma, shape)?
                .scaled(lens.contrast);
            let center = optics::spot_center(lens.power, location, model, shape)?;
            let bundle = optics::measure(&s, plan, &acq, pixel_id)?;
            let file = format!("lens{li}_px{pi}.dfcm");
            let spectrum = format!("lens{li}_px{pi}.dfls");
            write_file(&dir.join(&file), &formats::encode_bundle(plan, &bundle)?)?;
            write_file(&dir.join(&spectrum), &formats::encode_spectrum(&s)?)?;
            bundles.push(BundleEntry {
                kind: BundleKind::Lens,
                pixel_id,
                file,
                lens_power: Some(lens.power),
                contrast: Some(lens.contrast),
                location: Some(location),
                spectrum: Some(spectrum),
                true_center: Some([center.0, center.1]),
            });
        }
    }

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        grid: shape,
        plan_seed: plan.seed(),
        spot_sigma: phantom.spot_sigma,
        target_isnr_db: None,
        simulated_isnr_db: None,
        instrument: model.clone(),
        noise_estimate: None,
        bundles,
    };
    manifest.write(dir)?;
    Ok(manifest)
}
