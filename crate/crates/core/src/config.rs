//! Pipeline configuration: one JSON document, every key overridable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::descriptor::{DescriptorMode, DEFAULT_VIEW_COUNT};
use crate::error::{Error, Result};
use crate::io::{read_json, PoseJson};
use crate::metrics::Thresholds;
use crate::retarget::RetargetWeights;
use crate::scale::{ScaleMode, DEFAULT_K_NEIGHBORS};
use crate::track::{PnpConfig, DEFAULT_RMS_GATE, DEFAULT_SEED_POINTS, MIN_SEEDS};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "P6D_SEED";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding one view bundle per object.
    pub bundles: Option<String>,
    pub index: Option<String>,
    /// Scale database lines (`{"text", "scale_m"}`).
    pub scale_db: Option<String>,
    pub scale_db_embeddings: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackSettings {
    pub seed_points: usize,
    pub rms_gate_px: f64,
    pub ransac: bool,
    pub inlier_threshold_px: f64,
    pub ransac_iterations: usize,
    pub sample_size: usize,
}

impl Default for TrackSettings {
    fn default() -> Self {
        let p = PnpConfig::default();
        TrackSettings {
            seed_points: DEFAULT_SEED_POINTS,
            rms_gate_px: DEFAULT_RMS_GATE,
            ransac: p.ransac,
            inlier_threshold_px: p.inlier_threshold_px,
            ransac_iterations: p.iterations,
            sample_size: p.sample_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetargetSettings {
    pub dt: f64,
    pub weights: RetargetWeights,
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub project_limits: bool,
    /// Chain profile; the shipped Panda profile when absent.
    pub chain: Option<String>,
    /// Camera pose in the robot frame; a front-facing camera at 30° elevation when absent.
    pub t_rc: Option<PoseJson>,
    /// Gripper-to-object transform.
    pub grasp: Option<PoseJson>,
    /// Initial joints; the chain's ready pose when absent.
    pub q0: Option<Vec<f64>>,
    /// Robot-frame object pose at the first step; the camera-to-robot mapped
    /// first pose when absent.
    pub start: Option<PoseJson>,
}

impl Default for RetargetSettings {
    fn default() -> Self {
        RetargetSettings {
            dt: 0.05,
            weights: RetargetWeights::default(),
            max_iterations: crate::retarget::DEFAULT_MAX_ITERATIONS,
            rel_tol: crate::retarget::DEFAULT_REL_TOL,
            project_limits: true,
            chain: None,
            t_rc: None,
            grasp: None,
            q0: None,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Surface samples per mesh for CH and pCH.
    pub n_samples: usize,
    /// Custom AR thresholds; defaults follow the evaluation image diagonal.
    pub thresholds: Option<Thresholds>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            n_samples: 1000,
            thresholds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    /// Views per object expected in every bundle.
    pub views: usize,
    pub descriptor: DescriptorMode,
    /// Hits reported per retrieval query.
    pub k_retrieval: usize,
    pub k_neighbors: usize,
    pub scale_mode: ScaleMode,
    pub track: TrackSettings,
    pub retarget: RetargetSettings,
    pub eval: EvalSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            views: DEFAULT_VIEW_COUNT,
            descriptor: DescriptorMode::Ffa,
            k_retrieval: 5,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            scale_mode: ScaleMode::MaxProjection,
            track: TrackSettings::default(),
            retarget: RetargetSettings::default(),
            eval: EvalSettings::default(),
        }
    }
}

/// Sets `dotted.key` inside a JSON object, creating intermediate objects.
pub fn set_key(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid(format!("bad config key {key:?}")));
    }
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            if cur.is_null() {
                *cur = Value::Object(Default::default());
            } else {
                return Err(Error::invalid(format!("config key {key:?}: {:?} is not an object", parts[..i].join("."))));
            }
        }
        let map = cur.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        cur = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("loop returns on the last part")
}

/// Parses an override value as JSON, falling back to a plain string.
pub fn parse_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

impl PipelineConfig {
    /// Applies `(key, value)` overrides to a raw document and validates the result.
    pub fn from_value(mut doc: Value, overrides: &[(String, Value)]) -> Result<Self> {
        if doc.is_null() {
            doc = Value::Object(Default::default());
        }
        for (k, v) in overrides {
            set_key(&mut doc, k, v.clone())?;
        }
        let cfg: PipelineConfig = serde_json::from_value(doc).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<Self> {
        let doc: Value = read_json(path)?;
        Self::from_value(doc, overrides).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Replaces the seed from `P6D_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{SEED_ENV} must be an unsigned integer, got {s:?}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("config: {m}")));
        if self.views == 0 {
            return bad("views must be at least 1");
        }
        if self.k_retrieval == 0 || self.k_neighbors == 0 {
            return bad("k_retrieval and k_neighbors must be at least 1");
        }
        let t = &self.track;
        if t.seed_points < MIN_SEEDS {
            return bad(&format!("track.seed_points must be at least {MIN_SEEDS}"));
        }
        if !(t.rms_gate_px > 0.0) || !(t.inlier_threshold_px > 0.0) {
            return bad("track pixel thresholds must be positive");
        }
        if t.ransac_iterations == 0 || t.sample_size < 4 {
            return bad("track.ransac_iterations must be positive and track.sample_size at least 4");
        }
        let r = &self.retarget;
        if !(r.dt > 0.0) || !(r.weights.w_d > 0.0) || !(r.weights.w_qd >= 0.0) || !(r.weights.w_tau >= 0.0) {
            return bad("retarget needs dt > 0, w_d > 0 and non-negative weights");
        }
        if r.max_iterations == 0 || !(r.rel_tol >= 0.0) {
            return bad("retarget.max_iterations must be positive and rel_tol non-negative");
        }
        if self.eval.n_samples == 0 {
            return bad("eval.n_samples must be at least 1");
        }
        if let Some(th) = &self.eval.thresholds {
            if th.cou.is_empty() || th.ch.is_empty() || th.pch.is_empty() {
                return bad("eval.thresholds sets must be non-empty");
            }
        }
        Ok(())
    }

    pub fn pnp(&self) -> PnpConfig {
        PnpConfig {
            ransac: self.track.ransac,
            inlier_threshold_px: self.track.inlier_threshold_px,
            iterations: self.track.ransac_iterations,
            sample_size: self.track.sample_size,
            seed: self.seed,
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Resolves a config-relative path.
pub fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
