//! Reproducible experiment pipeline: simulate, calibrate, and the
//! reconstruction and centroid sweeps over `M/N`.
//!
//! Work items are independent and seeded from the config seed, so results
//! are identical for any worker-pool size.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, CentroidMode, CentroidRecord, GaussianTemplate};
use crate::calibration::{self, NoiseEstimate};
use crate::dataset::{self, BundleEntry, LensSpec, Manifest, PhantomSpec};
use crate::error::{Error, Result};
use crate::formats;
use crate::grid::{GridShape, SpectrumGrid};
use crate::hadamard::HadamardOrder;
use crate::optics::{self, InstrumentModel};
use crate::seeds::derive_seed;
use crate::sensing::{self, make_plan, MeasurementBundle, SensingPlan};
use crate::solver::{self, SolverConfig};
use crate::wavelet97::{self, CompositeOperator};

/// Accepted distance between simulated and requested iSNR, dB.
pub const ISNR_TOLERANCE_DB: f64 = 0.01;

const PLAN_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const RECONSTRUCT_STREAM: u64 = 3;
const CENTROID_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstrumentSettings {
    pub focal_length: f64,
    pub pinhole_radius: f64,
    pub ccd_pixels: Vec<[f64; 2]>,
    /// Used only when no target iSNR is set.
    pub sigma_s: f64,
    pub sigma_y: f64,
}

impl Default for InstrumentSettings {
    fn default() -> Self {
        let m = InstrumentModel::default();
        InstrumentSettings {
            focal_length: m.focal_length,
            pinhole_radius: m.pinhole_radius,
            ccd_pixels: m.ccd_pixels,
            sigma_s: m.sigma_s,
            sigma_y: m.sigma_y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub tol: f64,
    /// Power iterations for the operator norm.
    pub norm_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iters: 2000,
            tol: 1e-5,
            norm_iters: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub ratios: Vec<f64>,
    pub trials: usize,
}

impl SweepSettings {
    fn validate(&self, what: &str) -> Result<()> {
        if self.ratios.is_empty() {
            return Err(Error::invalid(format!("{what}: ratio list is empty")));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::invalid(format!("{what}: ratio {r} not in (0, 1]")));
        }
        if self.trials == 0 {
            return Err(Error::invalid(format!("{what}: trials must be at least 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Wavelet decomposition depth.
    pub levels: usize,
    pub spot_sigma: f64,
    /// Noise is scaled to reach this iSNR; `None` keeps the instrument sigmas.
    pub target_isnr_db: Option<f64>,
    /// Template width; defaults to the pinhole radius.
    pub rho: Option<f64>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub grid: GridShape,
    pub instrument: InstrumentSettings,
    pub lenses: Vec<LensSpec>,
    pub solver: SolverSettings,
    pub reconstruct: SweepSettings,
    pub centroid: SweepSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 2013,
            levels: 4,
            spot_sigma: 2.0,
            target_isnr_db: Some(4.34),
            rho: None,
            threads: None,
            out: PathBuf::from("deflecto-out"),
            grid: GridShape::default(),
            instrument: InstrumentSettings::default(),
            lenses: vec![
                LensSpec {
                    power: 60.0,
                    contrast: 1.0,
                },
                LensSpec {
                    power: 10.03,
                    contrast: 0.6,
                },
            ],
            solver: SolverSettings::default(),
            reconstruct: SweepSettings {
                ratios: vec![0.02, 0.05, 0.1, 0.2, 0.5],
                trials: 10,
            },
            centroid: SweepSettings {
                ratios: vec![0.005, 0.01, 0.015, 0.02, 0.024, 0.03, 0.037, 0.05],
                trials: 50,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn order(&self) -> Result<HadamardOrder> {
        HadamardOrder::from_len(self.grid.len())
    }

    pub fn instrument_model(&self) -> InstrumentModel {
        let i = &self.instrument;
        InstrumentModel {
            focal_length: i.focal_length,
            pinhole_radius: i.pinhole_radius,
            ccd_pixels: i.ccd_pixels.clone(),
            sigma_s: i.sigma_s,
            sigma_y: i.sigma_y,
            noise_seed: derive_seed(self.seed, &[NOISE_STREAM]),
        }
    }

    pub fn template_width(&self) -> f64 {
        self.rho.unwrap_or(self.instrument.pinhole_radius)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed >= 1 << 63 {
            return Err(Error::invalid("seed must be below 2^63"));
        }
        let g = self.grid;
        if !(g.width.is_power_of_two() && g.height.is_power_of_two()) {
            return Err(Error::invalid(format!(
                "grid {}x{} must have power-of-two sides",
                g.width, g.height
            )));
        }
        if !(g.pixel_pitch > 0.0 && g.pixel_pitch.is_finite()) {
            return Err(Error::invalid("pixel pitch must be positive"));
        }
        wavelet97::check_levels(g, self.levels).map_err(|e| Error::invalid(e.to_string()))?;
        if !(self.spot_sigma > 0.0 && self.spot_sigma.is_finite()) {
            return Err(Error::invalid("spot sigma must be positive"));
        }
        if let Some(t) = self.target_isnr_db {
            if !t.is_finite() {
                return Err(Error::invalid("target iSNR must be finite"));
            }
        }
        if !(self.template_width() > 0.0 && self.template_width().is_finite()) {
            return Err(Error::invalid("template width rho must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be at least 1"));
        }
        if self.lenses.is_empty() {
            return Err(Error::invalid("at least one lens is required"));
        }
        for l in &self.lenses {
            if !l.power.is_finite() || !(l.contrast > 0.0 && l.contrast.is_finite()) {
                return Err(Error::invalid(format!(
                    "lens {} D: power must be finite and contrast positive",
                    l.power
                )));
            }
        }
        let s = self.solver;
        if s.max_iters == 0 || !(s.tol > 0.0) || s.norm_iters < 10 {
            return Err(Error::invalid(
                "solver needs max_iters >= 1, tol > 0 and norm_iters >= 10",
            ));
        }
        self.reconstruct.validate("reconstruct")?;
        self.centroid.validate("centroid")?;
        let model = self.instrument_model();
        model.validate()?;
        optics::disk_spectrum(&model, g)?;
        for l in &self.lenses {
            for &p in &model.ccd_pixels {
                optics::spot_center(l.power, p, &model, g)?;
            }
        }
        Ok(())
    }

    /// Runs `f` on a pool of the configured size.
    pub fn in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

/// Measurement count for `ratio` of `n`, at least one.
pub fn measurement_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64).round() as usize).clamp(1, n)
}

/// Scales the instrument noise (split evenly between the spectrum and the
/// detector in the debiased domain) until the simulated no-object iSNR is
/// within [`ISNR_TOLERANCE_DB`] of `target_db`. Bisects on a log scale.
pub fn tune_noise(
    model: &InstrumentModel,
    plan: &SensingPlan,
    shape: GridShape,
    target_db: f64,
) -> Result<(InstrumentModel, f64)> {
    let s_no = optics::disk_spectrum(model, shape)?;
    let half_root_n = (plan.n() as f64).sqrt() / 2.0;
    let with_scale = |t: f64| InstrumentModel {
        sigma_s: t,
        sigma_y: t * half_root_n,
        ..model.clone()
    };
    let isnr_at = |t: f64| -> Result<f64> {
        let m = dataset::acquisition_model(&with_scale(t), 0);
        let b = optics::measure(&s_no, plan, &m, 0)?;
        analysis::isnr(&sensing::debias(&b, plan)?, plan, &s_no)
    };
    let (mut lo, mut hi) = (1e-9f64, 1e6f64);
    if isnr_at(lo)? < target_db || isnr_at(hi)? > target_db {
        return Err(Error::invalid(format!("target iSNR {target_db} dB is out of reach")));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let v = isnr_at(mid)?;
        if (v - target_db).abs() <= ISNR_TOLERANCE_DB {
            return Ok((with_scale(mid), v));
        }
        if v > target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonFinite("iSNR bisection did not converge"))
}

/// Generates the dataset: one full-sampling acquisition per lens and CCD
/// location, plus the no-object acquisition.
pub fn simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let order = cfg.order()?;
    let plan = make_plan(order, order.len(), derive_seed(cfg.seed, &[PLAN_STREAM]), true)?;
    let mut model = cfg.instrument_model();
    let mut achieved = None;
    if let Some(target) = cfg.target_isnr_db {
        let (tuned, v) = tune_noise(&model, &plan, cfg.grid, target)?;
        model = tuned;
        achieved = Some(v);
    }
    let phantom = PhantomSpec {
        lenses: cfg.lenses.clone(),
        spot_sigma: cfg.spot_sigma,
    };
    let mut manifest = dataset::snapshot_dataset(dir, &phantom, &plan, &model, cfg.grid)?;
    manifest.target_isnr_db = cfg.target_isnr_db;
    manifest.simulated_isnr_db = match achieved {
        Some(v) => Some(v),
        None => no_object_isnr(dir, &manifest)?,
    };
    manifest.write(dir)?;
    Ok(manifest)
}

fn no_object_isnr(dir: &Path, manifest: &Manifest) -> Result<Option<f64>> {
    let (plan, bundle) = dataset::read_bundle(dir, manifest.no_object()?)?;
    let s_no = optics::disk_spectrum(&manifest.instrument, manifest.grid)?;
    let v = analysis::isnr(&sensing::debias(&bundle, &plan)?, &plan, &s_no)?;
    Ok(v.is_finite().then_some(v))
}

/// Fits the no-object acquisition and stores the estimate in the manifest.
pub fn calibrate(dir: &Path) -> Result<NoiseEstimate> {
    let mut manifest = Manifest::read(dir)?;
    let (plan, bundle) = dataset::read_bundle(dir, manifest.no_object()?)?;
    let y = sensing::debias(&bundle, &plan)?;
    let est = calibration::fit_reference(&y, &plan, manifest.grid, manifest.instrument.pinhole_radius)?;
    manifest.noise_estimate = Some(est);
    manifest.write(dir)?;
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructRow {
    pub lens_power: f64,
    pub ratio: f64,
    pub trial: usize,
    pub pixel_id: u32,
    pub m_count: usize,
    pub osnr_db: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidRow {
    pub lens_power: f64,
    pub ratio: f64,
    pub trial: usize,
    pub pixel_id: u32,
    pub m_count: usize,
    pub error_px: f64,
}

/// Mean and standard error of one `(lens, ratio)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub lens_power: f64,
    pub ratio: f64,
    pub m_count: usize,
    pub samples: usize,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructReport {
    pub rows: Vec<ReconstructRow>,
    pub summary: Vec<SummaryRow>,
    pub isnr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidReport {
    pub rows: Vec<CentroidRow>,
    pub summary: Vec<SummaryRow>,
    /// Distance of each M = N ground-truth centroid from the simulated spot.
    pub ground_truth_error: Vec<(f64, u32, f64)>,
}

/// One lens acquisition with its full-sampling reference reconstruction.
struct Prepared {
    lens_index: usize,
    entry: BundleEntry,
    bundle: MeasurementBundle,
    reference: SpectrumGrid,
}

struct Context {
    manifest: Manifest,
    estimate: NoiseEstimate,
    plan: SensingPlan,
    items: Vec<Prepared>,
}

fn lens_power(entry: &BundleEntry) -> f64 {
    entry.lens_power.unwrap_or(0.0)
}

fn solver_config(op: &CompositeOperator, s: &SolverSettings) -> Result<SolverConfig> {
    let norm = op.norm_estimate(s.norm_iters)?;
    Ok(SolverConfig::for_norm(norm).with_limits(s.max_iters, s.tol))
}

fn prepare(dir: &Path, cfg: &ExperimentConfig, lens_filter: Option<f64>) -> Result<Context> {
    let manifest = Manifest::read(dir)?;
    let estimate = manifest
        .noise_estimate
        .ok_or_else(|| Error::invalid("dataset is not calibrated; run calibrate first"))?;
    let (plan, _) = dataset::read_bundle(dir, manifest.no_object()?)?;
    let mut powers: Vec<f64> = Vec::new();
    let mut entries = Vec::new();
    for e in manifest.lenses() {
        let p = lens_power(e);
        if lens_filter.is_some_and(|f| (f - p).abs() > 1e-9) {
            continue;
        }
        let li = match powers.iter().position(|&q| q == p) {
            Some(i) => i,
            None => {
                powers.push(p);
                powers.len() - 1
            }
        };
        entries.push((li, e.clone()));
    }
    if entries.is_empty() {
        return Err(Error::invalid(match lens_filter {
            Some(p) => format!("dataset has no lens of power {p}"),
            None => "dataset has no lens acquisitions".to_string(),
        }));
    }

    let op = CompositeOperator::new(plan.clone(), manifest.grid, cfg.levels)?;
    let scfg = solver_config(&op, &cfg.solver)?;
    // Same epsilon rule as a sweep trial at M = N.
    let eps = calibration::scale_epsilon(estimate.eps_full, plan.n(), plan.n())?;
    let items = cfg.in_pool(|| {
        entries
            .into_par_iter()
            .map(|(lens_index, entry)| -> Result<Prepared> {
                let (p, bundle) = dataset::read_bundle(dir, &entry)?;
                if p != plan {
                    return Err(Error::invalid(format!(
                        "{}: sensing plan differs from the no-object acquisition",
                        entry.file
                    )));
                }
                let y = sensing::debias(&bundle, &plan)?;
                let r = solver::solve_bpdn(&y, &op, eps, &scfg)?;
                Ok(Prepared {
                    lens_index,
                    entry,
                    bundle,
                    reference: r.s_hat,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(Context {
        manifest,
        estimate,
        plan,
        items,
    })
}

struct Job {
    item: usize,
    ratio: f64,
    m_count: usize,
    trial: usize,
}

fn jobs(ctx: &Context, sweep: &SweepSettings) -> Vec<Job> {
    let n = ctx.plan.n();
    let mut out = Vec::new();
    for item in 0..ctx.items.len() {
        for &ratio in &sweep.ratios {
            for trial in 0..sweep.trials {
                out.push(Job {
                    item,
                    ratio,
                    m_count: measurement_count(ratio, n),
                    trial,
                });
            }
        }
    }
    out
}

/// Draws the trial's `Omega` from the full acquisition. The seed depends only
/// on `(stream, M, trial)`: all CCD pixels of one trial share the SLM patterns.
fn trial_plan(parent: &SensingPlan, base: u64, stream: u64, m: usize, trial: usize) -> Result<SensingPlan> {
    // Every draw at M = N is the parent set; keep its seed so the solve
    // matches the reference exactly.
    if m == parent.n() {
        return Ok(parent.clone());
    }
    let seed = derive_seed(base, &[stream, m as u64, trial as u64]);
    parent.restrict(m, seed, m == parent.n())
}

fn summarize<'a>(cells: impl Iterator<Item = (f64, f64, usize, f64)> + 'a) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (lens_power, ratio, m_count, v) in cells {
        match out
            .iter()
            .position(|s| s.lens_power == lens_power && s.ratio == ratio)
        {
            Some(i) => values[i].push(v),
            None => {
                out.push(SummaryRow {
                    lens_power,
                    ratio,
                    m_count,
                    samples: 0,
                    mean: 0.0,
                    std_error: 0.0,
                });
                values.push(vec![v]);
            }
        }
    }
    for (row, v) in out.iter_mut().zip(&values) {
        let (mean, se) = mean_and_std_error(v);
        row.samples = v.len();
        row.mean = mean;
        row.std_error = se;
    }
    out
}

/// Sample mean and standard error; infinite samples make both infinite.
pub fn mean_and_std_error(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 || !mean.is_finite() {
        return (mean, if mean.is_finite() { 0.0 } else { f64::NAN });
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// oSNR of compressive reconstructions against the `M = N` reference.
pub fn reconstruct(
    dir: &Path,
    cfg: &ExperimentConfig,
    out: &Path,
    lens_filter: Option<f64>,
) -> Result<ReconstructReport> {
    cfg.validate()?;
    let ctx = prepare(dir, cfg, lens_filter)?;
    let n = ctx.plan.n();
    let shape = ctx.manifest.grid;
    let work = jobs(&ctx, &cfg.reconstruct);

    let mut rows = cfg.in_pool(|| {
        work.par_iter()
            .map(|job| -> Result<(usize, ReconstructRow)> {
                let it = &ctx.items[job.item];
                let child = trial_plan(&ctx.plan, cfg.seed, RECONSTRUCT_STREAM, job.m_count, job.trial)?;
                let b = it.bundle.restrict(&ctx.plan, &child)?;
                let y = sensing::debias(&b, &child)?;
                let eps = calibration::scale_epsilon(ctx.estimate.eps_full, job.m_count, n)?;
                let op = CompositeOperator::new(child, shape, cfg.levels)?;
                let r = solver::solve_bpdn(&y, &op, eps, &solver_config(&op, &cfg.solver)?)?;
                Ok((
                    it.lens_index,
                    ReconstructRow {
                        lens_power: lens_power(&it.entry),
                        ratio: job.ratio,
                        trial: job.trial,
                        pixel_id: it.entry.pixel_id,
                        m_count: job.m_count,
                        osnr_db: analysis::osnr(&it.reference, &r.s_hat)?,
                        iterations: r.iterations,
                        converged: r.converged,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    rows.sort_by(|a, b| {
        (a.0, a.1.m_count, a.1.trial, a.1.pixel_id).cmp(&(b.0, b.1.m_count, b.1.trial, b.1.pixel_id))
    });
    let rows: Vec<ReconstructRow> = rows.into_iter().map(|(_, r)| r).collect();
    let summary = summarize(rows.iter().map(|r| (r.lens_power, r.ratio, r.m_count, r.osnr_db)));
    let report = ReconstructReport {
        rows,
        summary,
        isnr_db: ctx.manifest.simulated_isnr_db,
    };

    let spectra = out.join("spectra");
    fs::create_dir_all(&spectra).map_err(|e| Error::io(&spectra, e))?;
    for it in &ctx.items {
        let name = it.entry.file.replace(".dfcm", "_ref.dfls");
        dataset::write_file(&spectra.join(name), &formats::encode_spectrum(&it.reference)?)?;
    }
    let header = match report.isnr_db {
        Some(v) => format!("{RECONSTRUCT_HEADER} isnr_db={v}"),
        None => RECONSTRUCT_HEADER.to_string(),
    };
    write_csv(&out.join("reconstruct.csv"), Some(&header), &report.rows)?;
    write_csv(&out.join("reconstruct_summary.csv"), None, &report.summary)?;
    Ok(report)
}

/// Compressive centroid error against the centroid of the `M = N`
/// reference reconstruction.
pub fn centroid(
    dir: &Path,
    cfg: &ExperimentConfig,
    out: &Path,
    lens_filter: Option<f64>,
) -> Result<CentroidReport> {
    cfg.validate()?;
    let ctx = prepare(dir, cfg, lens_filter)?;
    let shape = ctx.manifest.grid;
    let template = GaussianTemplate::new(cfg.template_width(), shape)?;
    let (ox, oy) = shape.origin();

    let truths = ctx
        .items
        .iter()
        .map(|it| analysis::centroid_full(&it.reference, &template))
        .collect::<Result<Vec<_>>>()?;
    let mut ground_truth_error = Vec::new();
    let mut records = Vec::new();
    for (it, t) in ctx.items.iter().zip(&truths) {
        let tau = t.tau.ok_or(Error::NoFeature)?;
        if let Some([x, y]) = it.entry.true_center {
            let e = (tau.x - (x - ox as f64)).hypot(tau.y - (y - oy as f64));
            ground_truth_error.push((lens_power(&it.entry), it.entry.pixel_id, e));
        }
        records.push((
            it.lens_index,
            0,
            0,
            CentroidRecord {
                pixel_id: it.entry.pixel_id,
                mode: CentroidMode::Full,
                m_count: ctx.plan.n(),
                seed: ctx.plan.seed(),
                tau_x: tau.x,
                tau_y: tau.y,
                score: t.score,
                error_px: 0.0,
            },
        ));
    }

    let work = jobs(&ctx, &cfg.centroid);
    let mut results = cfg.in_pool(|| {
        work.par_iter()
            .map(|job| -> Result<(usize, CentroidRow, CentroidRecord)> {
                let it = &ctx.items[job.item];
                let child = trial_plan(&ctx.plan, cfg.seed, CENTROID_STREAM, job.m_count, job.trial)?;
                let b = it.bundle.restrict(&ctx.plan, &child)?;
                let est = analysis::centroid_compressive(&b, &child, &template)?;
                let error_px = analysis::centroid_error(&truths[job.item], &est)?;
                let tau = est.tau.ok_or(Error::NoFeature)?;
                Ok((
                    it.lens_index,
                    CentroidRow {
                        lens_power: lens_power(&it.entry),
                        ratio: job.ratio,
                        trial: job.trial,
                        pixel_id: it.entry.pixel_id,
                        m_count: job.m_count,
                        error_px,
                    },
                    CentroidRecord {
                        pixel_id: it.entry.pixel_id,
                        mode: CentroidMode::Compressive,
                        m_count: job.m_count,
                        seed: child.seed(),
                        tau_x: tau.x,
                        tau_y: tau.y,
                        score: est.score,
                        error_px,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    results.sort_by(|a, b| {
        (a.0, a.1.m_count, a.1.trial, a.1.pixel_id).cmp(&(b.0, b.1.m_count, b.1.trial, b.1.pixel_id))
    });
    let mut rows = Vec::with_capacity(results.len());
    for (li, row, rec) in results {
        records.push((li, row.m_count, row.trial + 1, rec));
        rows.push(row);
    }
    records.sort_by_key(|r| (r.0, r.1, r.2, r.3.pixel_id));
    let summary = summarize(rows.iter().map(|r| (r.lens_power, r.ratio, r.m_count, r.error_px)));
    let report = CentroidReport {
        rows,
        summary,
        ground_truth_error,
    };

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_csv(&out.join("centroid.csv"), Some(CENTROID_HEADER), &report.rows)?;
    write_csv(&out.join("centroid_summary.csv"), None, &report.summary)?;
    let path = out.join("centroid_records.csv");
    let mut buf = Vec::new();
    let recs: Vec<CentroidRecord> = records.into_iter().map(|r| r.3).collect();
    analysis::write_centroid_records(&mut buf, &recs).map_err(|e| Error::invalid(e.to_string()))?;
    dataset::write_file(&path, &buf)?;
    Ok(report)
}

/// First line of the per-trial reconstruction CSV.
pub const RECONSTRUCT_HEADER: &str = "# deflecto reconstruct v1";
/// First line of the per-trial centroid CSV.
pub const CENTROID_HEADER: &str = "# deflecto centroid v1";

fn write_csv<T: Serialize>(path: &Path, header: Option<&str>, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut buf = Vec::new();
    if let Some(h) = header {
        writeln!(buf, "{h}").map_err(|e| Error::io(path, e))?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    dataset::write_file(path, &buf)
}
