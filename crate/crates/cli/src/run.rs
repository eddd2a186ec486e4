//! Experiment execution: simulation, reconstruction, sweeps.
//!
//! Every command stages its outputs in a hidden sibling directory and
//! renames it onto the requested output directory only after everything
//! has been written.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use nerp_core::forward::simulate;
use nerp_core::io::{
    load_image, save_checkpoint, save_image, save_measurements, CheckpointInfo, ImageFormat,
};
use nerp_core::metrics::evaluate;
use nerp_core::phantom::longitudinal_pair;
use nerp_core::pipeline::{embed_prior, reconstruct};
use nerp_core::{ImageGrid, Measurements, Real, ReconMode, Representation};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Mode, Precision, Source};

/// One scored reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub mode: Mode,
    pub psnr: f64,
    pub ssim: f64,
    pub iters: usize,
    #[serde(skip)]
    pub seconds: f64,
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub mode: Mode,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Views,
    Spokes,
    Depth,
    Width,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "views" => SweepAxis::Views,
            "spokes" => SweepAxis::Spokes,
            "depth" => SweepAxis::Depth,
            "width" => SweepAxis::Width,
            other => bail!("unknown sweep axis `{other}` (expected views, spokes, depth, width)"),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Views => "views",
            SweepAxis::Spokes => "spokes",
            SweepAxis::Depth => "depth",
            SweepAxis::Width => "width",
        }
    }

    fn apply(self, cfg: &mut ExperimentConfig, value: usize) -> Result<()> {
        match self {
            SweepAxis::Views => {
                ensure!(cfg.modality() == nerp_core::Modality::Ct, "views sweep needs a CT config");
                cfg.recon.sampling.views = value;
            }
            SweepAxis::Spokes => {
                ensure!(cfg.modality() == nerp_core::Modality::Mri, "spokes sweep needs an MRI config");
                cfg.recon.sampling.views = value;
            }
            SweepAxis::Depth => cfg.recon.depth = value,
            SweepAxis::Width => cfg.recon.width = value,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Replace an existing non-empty output directory.
    pub force: bool,
}

enum AnyRep {
    F32(Representation<f32>),
    F64(Representation<f64>),
}

/// Precisions a cached prior can be stored in.
trait Cacheable: Real {
    fn wrap(rep: Representation<Self>) -> AnyRep;
    fn unwrap(rep: &AnyRep) -> Option<&Representation<Self>>;
}

impl Cacheable for f32 {
    fn wrap(rep: Representation<f32>) -> AnyRep {
        AnyRep::F32(rep)
    }

    fn unwrap(rep: &AnyRep) -> Option<&Representation<f32>> {
        match rep {
            AnyRep::F32(r) => Some(r),
            AnyRep::F64(_) => None,
        }
    }
}

impl Cacheable for f64 {
    fn wrap(rep: Representation<f64>) -> AnyRep {
        AnyRep::F64(rep)
    }

    fn unwrap(rep: &AnyRep) -> Option<&Representation<f64>> {
        match rep {
            AnyRep::F64(r) => Some(r),
            AnyRep::F32(_) => None,
        }
    }
}

/// Metric rows, per-stage timings and manifest details of one run.
type ModeResults = (Vec<MetricRow>, Vec<(String, f64)>, serde_json::Value);

/// Prior embeddings keyed by everything that determines them, so sweeps
/// over the sampling pattern fit the prior once.
#[derive(Default)]
pub struct PriorCache {
    entries: HashMap<String, (AnyRep, f64, Vec<f64>)>,
}

impl PriorCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn prior_key(cfg: &ExperimentConfig, prior: &ImageGrid) -> String {
    let r = &cfg.recon;
    let fields = json!([
        r.fourier_features,
        r.fourier_sigma,
        r.depth,
        r.width,
        r.activation,
        r.prior_iters,
        r.prior_target_psnr,
        r.prior_lr,
        r.seed,
        cfg.precision,
    ]);
    let mut h = Sha256::new();
    h.update(fields.to_string().as_bytes());
    for d in prior.shape() {
        h.update((*d as u64).to_le_bytes());
    }
    for v in prior.values() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn resolve_out(cfg: &ExperimentConfig, opts: RunOptions) -> Result<PathBuf> {
    let out = cfg.out_dir.clone().context("no output directory: pass --out or set `out_dir`")?;
    check_out_dir(&out, opts)?;
    Ok(out)
}

fn check_out_dir(out: &Path, opts: RunOptions) -> Result<()> {
    if out.exists() {
        ensure!(out.is_dir(), "output path {} exists and is not a directory", out.display());
        let empty = fs::read_dir(out)?.next().is_none();
        ensure!(
            empty || opts.force,
            "output directory {} is not empty; pass --force to replace it",
            out.display()
        );
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

/// Staging directory that is removed unless promoted.
struct Staging {
    dir: PathBuf,
    target: PathBuf,
    promoted: bool,
}

impl Staging {
    fn new(target: &Path) -> Result<Self> {
        let name = target.file_name().context("output directory has no name")?.to_string_lossy();
        let dir = target.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            target: target.to_path_buf(),
            promoted: false,
        })
    }

    fn promote(mut self) -> Result<()> {
        if self.target.exists() {
            fs::remove_dir_all(&self.target).with_context(|| format!("replacing {}", self.target.display()))?;
        }
        fs::rename(&self.dir, &self.target).with_context(|| format!("promoting results to {}", self.target.display()))?;
        self.promoted = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.promoted {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

/// Prior (if any) and target, normalized for reconstruction.
pub fn load_pair(cfg: &ExperimentConfig) -> Result<(Option<ImageGrid>, ImageGrid)> {
    match &cfg.source {
        Source::Phantom { size, lesions } => {
            let (prior, target) = longitudinal_pair(*size, lesions)?;
            Ok((Some(prior), target))
        }
        Source::Files { prior, target, format } => {
            let read = |p: &Path| -> Result<ImageGrid> {
                let fmt = format.or_else(|| ImageFormat::from_path(p)).context("unknown image format")?;
                load_image(p, fmt).with_context(|| format!("reading {}", p.display()))
            };
            let target_raw = read(target)?;
            let prior_raw = prior.as_deref().map(read).transpose()?;
            ensure!(target_raw.ndim() == 2, "reconstruction needs 2D images, target is {:?}", target_raw.shape());
            let range = match &prior_raw {
                Some(p) => {
                    ensure!(p.shape() == target_raw.shape(), "prior {:?} and target {:?} differ in shape", p.shape(), target_raw.shape());
                    p.min_max()
                }
                None => target_raw.min_max(),
            };
            let norm = |img: &ImageGrid| ImageGrid::normalized_with(img.shape().to_vec(), img.values(), range);
            Ok((prior_raw.as_ref().map(norm).transpose()?, norm(&target_raw)?))
        }
    }
}

fn write_image_pair(dir: &Path, stem: &str, img: &ImageGrid, fmt: ImageFormat) -> Result<()> {
    save_image(img, &dir.join(format!("{stem}.raw")), ImageFormat::RawF64)?;
    if fmt != ImageFormat::RawF64 {
        let ext = match fmt {
            ImageFormat::Pgm => "pgm",
            _ => "png",
        };
        save_image(img, &dir.join(format!("{stem}.{ext}")), fmt)?;
    }
    Ok(())
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let mut s = String::from("iteration,loss\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(s, "{},{l}", i + 1).expect("string write");
    }
    fs::write(path, s)?;
    Ok(())
}

fn manifest(cfg: &ExperimentConfig, command: &str, extra: serde_json::Value) -> serde_json::Value {
    json!({
        "command": command,
        "config": cfg,
        "config_hash": cfg.hash(),
        "seed": cfg.recon.seed,
        "versions": {
            "nerp-cli": env!("CARGO_PKG_VERSION"),
            "nerp-core": nerp_core::VERSION,
        },
        "threads": rayon::current_num_threads(),
        "details": extra,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value).expect("JSON value"))?;
    Ok(())
}

/// Writes the prior/target images and simulated measurements.
pub fn cmd_simulate(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Measurements> {
    cfg.validate()?;
    let out = resolve_out(cfg, opts)?;
    let staging = Staging::new(&out)?;
    let (prior, target) = load_pair(cfg)?;
    let y = simulate(&target, &cfg.recon.sampling)?;
    if let Some(p) = &prior {
        write_image_pair(&staging.dir, "prior", p, cfg.image_format)?;
    }
    write_image_pair(&staging.dir, "target", &target, cfg.image_format)?;
    save_measurements(&y, &staging.dir.join("measurements.bin"))?;
    write_json(
        &staging.dir.join("manifest.json"),
        &manifest(cfg, "simulate", json!({"measurement_len": y.to_vector().len(), "views": y.views()})),
    )?;
    staging.promote()?;
    Ok(y)
}

fn embed_cached<T: Cacheable>(
    cfg: &ExperimentConfig,
    prior: &ImageGrid,
    cache: &mut PriorCache,
) -> Result<(Representation<T>, f64, Vec<f64>, bool)> {
    let key = prior_key(cfg, prior);
    if let Some((rep, psnr, losses)) = cache.entries.get(&key) {
        let rep = T::unwrap(rep).context("cached prior has a different precision")?;
        return Ok((rep.clone(), *psnr, losses.clone(), true));
    }
    let emb = embed_prior::<T>(prior, &cfg.recon)?;
    cache
        .entries
        .insert(key, (T::wrap(emb.representation.clone()), emb.fit_psnr, emb.losses.clone()));
    Ok((emb.representation, emb.fit_psnr, emb.losses, false))
}

fn run_modes<T: Cacheable>(
    cfg: &ExperimentConfig,
    dir: &Path,
    prior: Option<&ImageGrid>,
    target: &ImageGrid,
    y: &Measurements,
    cache: &mut PriorCache,
) -> Result<ModeResults> {
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut details = json!({});
    let mut prior_rep = None;
    if cfg.modes.contains(&Mode::Nerp) {
        let prior = prior.context("nerp mode needs a prior image")?;
        let t = Instant::now();
        let (rep, psnr, losses, cached) = embed_cached::<T>(cfg, prior, cache)?;
        timings.push(("prior_embedding".to_string(), t.elapsed().as_secs_f64()));
        write_losses(&dir.join("loss_prior.csv"), &losses)?;
        let info = CheckpointInfo {
            seed: cfg.recon.seed,
            config_hash: cfg.hash(),
        };
        save_checkpoint(&rep, &info, &dir.join("prior_embedding.bin"))?;
        details["prior_fit_psnr"] = json!(psnr);
        details["prior_iters"] = json!(losses.len());
        details["prior_from_cache"] = json!(cached);
        prior_rep = Some(rep);
    }
    for &mode in &cfg.modes {
        let t = Instant::now();
        let (image, iters) = match mode {
            Mode::Fbp | Mode::AdjointNufft => (y.baseline_reconstruction()?, 0),
            Mode::Nerp | Mode::NerpNoPrior | Mode::Grff => {
                let recon_mode = match mode {
                    Mode::Nerp => ReconMode::Nerp,
                    Mode::NerpNoPrior => ReconMode::NerpNoPrior,
                    _ => ReconMode::Grff,
                };
                let out = reconstruct::<T>(prior_rep.as_ref(), y, &cfg.recon, recon_mode)?;
                write_losses(&dir.join(format!("loss_{mode}.csv")), &out.losses)?;
                (out.image, out.iterations)
            }
        };
        let seconds = t.elapsed().as_secs_f64();
        timings.push((mode.name().to_string(), seconds));
        write_image_pair(dir, mode.name(), &image, cfg.image_format)?;
        let q = evaluate(&image, target)?;
        rows.push(MetricRow {
            mode,
            psnr: q.psnr,
            ssim: q.ssim,
            iters,
            seconds,
        });
    }
    Ok((rows, timings, details))
}

/// Runs all requested modes into `dir`, which must already exist.
pub fn run_into(cfg: &ExperimentConfig, dir: &Path, cache: &mut PriorCache) -> Result<Vec<MetricRow>> {
    let (prior, target) = load_pair(cfg)?;
    let y = simulate(&target, &cfg.recon.sampling)?;
    if let Some(p) = &prior {
        write_image_pair(dir, "prior", p, cfg.image_format)?;
    }
    write_image_pair(dir, "target", &target, cfg.image_format)?;
    save_measurements(&y, &dir.join("measurements.bin"))?;

    let (rows, timings, details) = match cfg.precision {
        Precision::F32 => run_modes::<f32>(cfg, dir, prior.as_ref(), &target, &y, cache)?,
        Precision::F64 => run_modes::<f64>(cfg, dir, prior.as_ref(), &target, &y, cache)?,
    };

    fs::write(dir.join("metrics.csv"), metrics_csv(&rows))?;
    let mut t = String::from("stage,seconds\n");
    for (stage, s) in &timings {
        writeln!(t, "{stage},{s:.3}").expect("string write");
    }
    fs::write(dir.join("timings.csv"), t)?;
    write_json(&dir.join("manifest.json"), &manifest(cfg, "reconstruct", details))?;
    Ok(rows)
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from("mode,psnr,ssim,iters\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.mode, r.psnr, r.ssim, r.iters).expect("string write");
    }
    s
}

/// Reconstructs with every requested mode and scores against the target.
pub fn cmd_reconstruct(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Vec<MetricRow>> {
    cmd_reconstruct_cached(cfg, opts, &mut PriorCache::default())
}

pub fn cmd_reconstruct_cached(cfg: &ExperimentConfig, opts: RunOptions, cache: &mut PriorCache) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    let out = resolve_out(cfg, opts)?;
    let staging = Staging::new(&out)?;
    let rows = run_into(cfg, &staging.dir, cache)?;
    staging.promote()?;
    Ok(rows)
}

/// Repeats the reconstruction over `values` of `axis` with a shared seed.
/// Each point gets its own subdirectory; `sweep.csv` aggregates them.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[usize],
    opts: RunOptions,
    cache: &mut PriorCache,
) -> Result<Vec<SweepRow>> {
    ensure!(!values.is_empty(), "sweep needs at least one value");
    let mut points = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = cfg.clone();
        axis.apply(&mut c, v)?;
        c.validate().with_context(|| format!("sweep point {}={v}", axis.name()))?;
        points.push((v, c));
    }
    cfg.validate()?;
    let out = resolve_out(cfg, opts)?;
    let staging = Staging::new(&out)?;
    let mut rows = Vec::new();
    for (v, c) in &points {
        let dir = staging.dir.join(format!("{}_{v}", axis.name()));
        fs::create_dir_all(&dir)?;
        for r in run_into(c, &dir, cache)? {
            rows.push(SweepRow {
                value: *v as f64,
                mode: r.mode,
                psnr: r.psnr,
                ssim: r.ssim,
            });
        }
    }
    fs::write(staging.dir.join("sweep.csv"), sweep_csv(&rows))?;
    write_json(
        &staging.dir.join("manifest.json"),
        &manifest(cfg, "sweep", json!({"axis": axis.name(), "values": values})),
    )?;
    staging.promote()?;
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("value,mode,psnr,ssim\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.value, r.mode, r.psnr, r.ssim).expect("string write");
    }
    s
}

/// PSNR and SSIM of one image file against another.
pub fn cmd_metrics(recon: &Path, reference: &Path) -> Result<nerp_core::metrics::Quality> {
    let read = |p: &Path| -> Result<ImageGrid> {
        let fmt = ImageFormat::from_path(p).with_context(|| format!("cannot tell the format of {}", p.display()))?;
        load_image(p, fmt).with_context(|| format!("reading {}", p.display()))
    };
    Ok(evaluate(&read(recon)?, &read(reference)?)?)
}
