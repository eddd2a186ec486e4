//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use nerp_core::io::ImageFormat;
use nerp_core::phantom::LesionSpec;
use nerp_core::{Modality, ReconConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// A reconstruction method to run and score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Nerp,
    NerpNoPrior,
    Grff,
    Fbp,
    AdjointNufft,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Nerp => "nerp",
            Mode::NerpNoPrior => "nerp_no_prior",
            Mode::Grff => "grff",
            Mode::Fbp => "fbp",
            Mode::AdjointNufft => "adjoint_nufft",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.trim().to_string()))
            .with_context(|| format!("unknown mode `{s}` (expected nerp, nerp_no_prior, grff, fbp, adjoint_nufft)"))
    }

    pub fn is_trained(self) -> bool {
        matches!(self, Mode::Nerp | Mode::NerpNoPrior | Mode::Grff)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Where the prior and target images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    /// Synthetic Shepp-Logan pair; the target carries the lesions.
    Phantom {
        size: usize,
        #[serde(default = "default_lesions")]
        lesions: Vec<LesionSpec>,
    },
    /// Image files, normalized jointly by the prior's range.
    Files {
        #[serde(default)]
        prior: Option<PathBuf>,
        target: PathBuf,
        /// Guessed from the extension when absent.
        #[serde(default)]
        format: Option<ImageFormat>,
    },
}

fn default_lesions() -> Vec<LesionSpec> {
    vec![LesionSpec::progression()]
}

impl Default for Source {
    fn default() -> Self {
        Source::Phantom {
            size: 64,
            lesions: default_lesions(),
        }
    }
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Nerp, Mode::NerpNoPrior]
}

fn default_image_format() -> ImageFormat {
    ImageFormat::Png
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub recon: ReconConfig,
    #[serde(default)]
    pub source: Source,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub precision: Precision,
    /// Format for the viewable images; exact `raw` copies are always written.
    #[serde(default = "default_image_format")]
    pub image_format: ImageFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            recon: ReconConfig::ct_defaults(),
            source: Source::default(),
            modes: default_modes(),
            out_dir: None,
            precision: Precision::default(),
            image_format: default_image_format(),
        }
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl ExperimentConfig {
    /// Parses a JSON config. Missing `recon` keys take the defaults for the
    /// configured modality (CT unless `recon.sampling.modality` says MRI).
    pub fn from_json(text: &str) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let obj = doc.as_object_mut().context("config must be a JSON object")?;
        let recon_overlay = obj.remove("recon").unwrap_or(Value::Object(Default::default()));
        let modality = recon_overlay
            .pointer("/sampling/modality")
            .and_then(Value::as_str)
            .unwrap_or("ct");
        let base = match modality {
            "mri" => ReconConfig::mri_defaults(),
            _ => ReconConfig::ct_defaults(),
        };
        let mut recon = serde_json::to_value(base).expect("plain struct");
        // replace the default sampling block wholesale when given, so that
        // modality-specific keys are not inherited from the other modality
        if let Some(sampling) = recon_overlay.get("sampling") {
            recon["sampling"] = sampling.clone();
        }
        let mut overlay = recon_overlay;
        if let Some(o) = overlay.as_object_mut() {
            o.remove("sampling");
        }
        merge(&mut recon, overlay);
        obj.insert("recon".into(), recon);
        let cfg: Self = serde_json::from_value(doc).context("invalid config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn modality(&self) -> Modality {
        self.recon.sampling.modality
    }

    /// Stable SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plain struct");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks everything that can be checked without computing.
    pub fn validate(&self) -> Result<()> {
        self.recon.validate()?;
        ensure!(!self.modes.is_empty(), "no modes requested");
        for (i, m) in self.modes.iter().enumerate() {
            ensure!(!self.modes[..i].contains(m), "mode `{m}` listed twice");
        }
        for &m in &self.modes {
            match (m, self.modality()) {
                (Mode::Fbp, Modality::Mri) => bail!("fbp is a CT baseline; this config samples MRI k-space"),
                (Mode::AdjointNufft, Modality::Ct) => bail!("adjoint_nufft is an MRI baseline; this config samples CT"),
                _ => {}
            }
        }
        match &self.source {
            Source::Phantom { size, lesions } => {
                ensure!(*size >= 8, "phantom size must be >= 8, got {size}");
                for l in lesions {
                    l.validate()?;
                }
            }
            Source::Files { prior, target, format } => {
                if prior.is_none() && self.modes.contains(&Mode::Nerp) {
                    bail!("nerp mode needs a prior image; add `source.files.prior` or drop the mode");
                }
                for path in prior.iter().chain([target]) {
                    ensure!(path.is_file(), "input image {} does not exist", path.display());
                    if format.is_none() {
                        ensure!(
                            ImageFormat::from_path(path).is_some(),
                            "cannot tell the format of {}; set `source.files.format`",
                            path.display()
                        );
                    }
                }
            }
        }
        Ok(())
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub modes: Option<Vec<Mode>>,
    pub views: Option<usize>,
    pub spokes: Option<usize>,
    pub prior_iters: Option<usize>,
    pub recon_iters: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            cfg.recon.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        if let Some(modes) = &self.modes {
            cfg.modes = modes.clone();
        }
        if let Some(v) = self.views {
            ensure!(cfg.modality() == Modality::Ct, "--views applies to CT configs; use --spokes for MRI");
            cfg.recon.sampling.views = v;
        }
        if let Some(s) = self.spokes {
            ensure!(cfg.modality() == Modality::Mri, "--spokes applies to MRI configs; use --views for CT");
            cfg.recon.sampling.views = s;
        }
        if let Some(n) = self.prior_iters {
            cfg.recon.prior_iters = n;
        }
        if let Some(n) = self.recon_iters {
            cfg.recon.recon_iters = n;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_ct_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn mri_modality_pulls_mri_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"recon": {"sampling": {"modality": "mri", "views": 40}, "depth": 4}}"#).unwrap();
        assert_eq!(cfg.recon.width, 512);
        assert_eq!(cfg.recon.fourier_sigma, 3.0);
        assert_eq!(cfg.recon.depth, 4);
        assert_eq!(cfg.recon.sampling.views, 40);
    }

    #[test]
    fn unknown_keys_rejected_at_every_level() {
        for bad in [
            r#"{"extra": 1}"#,
            r#"{"recon": {"widht": 3}}"#,
            r#"{"recon": {"sampling": {"modality": "ct", "views": 3, "bogus": 0}}}"#,
            r#"{"source": {"phantom": {"size": 32, "colour": 1}}}"#,
            r#"{"source": {"phantom": {"size": 32, "lesions": [{"center": [0.5, 0.5], "axes": [0.1, 0.1], "delta_intensity": 0.1, "x": 1}]}}}"#,
            r#"{"modes": ["nerp", "magic"]}"#,
        ] {
            assert!(ExperimentConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn baseline_must_match_modality() {
        let mut cfg = ExperimentConfig {
            modes: vec![Mode::AdjointNufft],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.modes = vec![Mode::Fbp];
        cfg.validate().unwrap();
    }

    #[test]
    fn nerp_without_prior_file_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("t.png");
        std::fs::write(&target, b"x").unwrap();
        let mut cfg = ExperimentConfig {
            source: Source::Files {
                prior: None,
                target,
                format: None,
            },
            modes: vec![Mode::Nerp],
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("prior"));
        cfg.modes = vec![Mode::NerpNoPrior];
        cfg.validate().unwrap();
    }

    #[test]
    fn missing_input_fails_validation() {
        let cfg = ExperimentConfig {
            source: Source::Files {
                prior: Some("/nonexistent/p.png".into()),
                target: "/nonexistent/t.png".into(),
                format: None,
            },
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = ExperimentConfig::default();
        Overrides {
            seed: Some(9),
            views: Some(5),
            modes: Some(vec![Mode::Fbp]),
            ..Default::default()
        }
        .apply(&mut cfg)
        .unwrap();
        assert_eq!((cfg.recon.seed, cfg.recon.sampling.views, cfg.modes.clone()), (9, 5, vec![Mode::Fbp]));
        let bad = Overrides {
            spokes: Some(3),
            ..Default::default()
        };
        assert!(bad.apply(&mut cfg).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.recon.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(Mode::parse("nerp_no_prior").unwrap(), Mode::NerpNoPrior);
        assert!(Mode::parse("nerp-no-prior").is_err());
    }
}
