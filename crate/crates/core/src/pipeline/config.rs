use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::affinity::ExponentCombine;
use crate::localcut::CapacityFn;
use crate::refine::CrfParams;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Every knob of the extraction pipeline. Defaults reproduce the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub n_iters: usize,
    pub tau_ncut: f64,
    pub tau_knn: f64,
    pub tau_knn_min: f64,
    /// Number of thresholds in the confidence sweep.
    pub t_steps: usize,
    pub beta: f64,
    pub sc_min: f64,
    pub sigma_gauss: f64,
    pub k: usize,
    pub z_bg: f64,
    pub sharpening: bool,
    pub localcut: bool,
    pub confidence: bool,
    pub crf: bool,
    pub capacity_fn: CapacityFn,
    pub exponent_combine: ExponentCombine,
    pub rest_fraction: f64,
    pub min_active_nodes: usize,
    pub eigen_tol: f64,
    pub eigen_max_iterations: usize,
    pub crf_iterations: usize,
    pub crf_max_side: usize,
    pub crf_gaussian_sxy: f64,
    pub crf_gaussian_weight: f64,
    pub crf_bilateral_sxy: f64,
    pub crf_bilateral_srgb: f64,
    pub crf_bilateral_weight: f64,
    pub overlays: bool,
    pub worker_count: usize,
    pub manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let crf = CrfParams::default();
        Self {
            n_iters: 3,
            tau_ncut: 0.13,
            tau_knn: 0.115,
            tau_knn_min: 0.05,
            t_steps: 6,
            beta: 0.45,
            sc_min: 0.5,
            sigma_gauss: 2.0,
            k: 8,
            z_bg: 2.0,
            sharpening: true,
            localcut: true,
            confidence: true,
            crf: true,
            capacity_fn: CapacityFn::Gaussian,
            exponent_combine: ExponentCombine::Max,
            rest_fraction: 0.95,
            min_active_nodes: 16,
            eigen_tol: 1e-6,
            eigen_max_iterations: 10_000,
            crf_iterations: crf.iterations,
            crf_max_side: crf.max_side,
            crf_gaussian_sxy: crf.gaussian_sxy,
            crf_gaussian_weight: crf.gaussian_weight,
            crf_bilateral_sxy: crf.bilateral_sxy,
            crf_bilateral_srgb: crf.bilateral_srgb,
            crf_bilateral_weight: crf.bilateral_weight,
            overlays: false,
            worker_count: 4,
            manifest: None,
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    /// Semantic cutting only: no sharpening, LocalCut, confidence or CRF.
    pub fn semantic_only() -> Self {
        Self {
            sharpening: false,
            localcut: false,
            confidence: false,
            crf: false,
            ..Self::default()
        }
    }

    pub fn crf_params(&self) -> CrfParams {
        CrfParams {
            iterations: self.crf_iterations,
            max_side: self.crf_max_side,
            gaussian_sxy: self.crf_gaussian_sxy,
            gaussian_weight: self.crf_gaussian_weight,
            bilateral_sxy: self.crf_bilateral_sxy,
            bilateral_srgb: self.crf_bilateral_srgb,
            bilateral_weight: self.crf_bilateral_weight,
            prob_clamp: CrfParams::default().prob_clamp,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.n_iters < 1 {
            return fail("n_iters must be at least 1");
        }
        if !(self.tau_ncut > 0.0 && self.tau_ncut < 1.0) {
            return fail("tau_ncut must lie in (0, 1)");
        }
        if !(self.tau_knn_min > 0.0 && self.tau_knn_min < self.tau_knn) {
            return fail("need 0 < tau_knn_min < tau_knn");
        }
        if self.t_steps < 2 {
            return fail("t_steps must be at least 2");
        }
        if !(0.0..1.0).contains(&self.beta) {
            return fail("beta must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.sc_min) {
            return fail("sc_min must lie in [0, 1]");
        }
        if !(self.sigma_gauss > 0.0) {
            return fail("sigma_gauss must be positive");
        }
        if self.k < 1 {
            return fail("k must be at least 1");
        }
        if !self.z_bg.is_finite() {
            return fail("z_bg must be finite");
        }
        if !(self.rest_fraction > 0.0 && self.rest_fraction <= 1.0) {
            return fail("rest_fraction must lie in (0, 1]");
        }
        if !(self.eigen_tol > 0.0) || self.eigen_max_iterations == 0 {
            return fail("eigen_tol and eigen_max_iterations must be positive");
        }
        if self.crf_max_side == 0 || self.crf_max_side > 120 {
            return fail("crf_max_side must lie in 1..=120");
        }
        if self.worker_count == 0 {
            return fail("worker_count must be at least 1");
        }
        Ok(())
    }

    /// Parses the flat `key = value` format; `#` starts a comment. Unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: line_no })?;
            cfg.set(key.trim(), value.trim(), line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let bad = || ConfigError::InvalidValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        };
        fn num<V: std::str::FromStr>(
            v: &str,
            bad: impl Fn() -> ConfigError,
        ) -> Result<V, ConfigError> {
            v.parse().map_err(|_| bad())
        }
        let flag = |v: &str| match v {
            "true" | "on" | "yes" | "1" => Ok(true),
            "false" | "off" | "no" | "0" => Ok(false),
            _ => Err(bad()),
        };
        match key {
            "n_iters" => self.n_iters = num(value, bad)?,
            "tau_ncut" => self.tau_ncut = num(value, bad)?,
            "tau_knn" => self.tau_knn = num(value, bad)?,
            "tau_knn_min" => self.tau_knn_min = num(value, bad)?,
            "t_steps" => self.t_steps = num(value, bad)?,
            "beta" => self.beta = num(value, bad)?,
            "sc_min" => self.sc_min = num(value, bad)?,
            "sigma_gauss" => self.sigma_gauss = num(value, bad)?,
            "k" => self.k = num(value, bad)?,
            "z_bg" => self.z_bg = num(value, bad)?,
            "sharpening" => self.sharpening = flag(value)?,
            "localcut" => self.localcut = flag(value)?,
            "confidence" => self.confidence = flag(value)?,
            "crf" => self.crf = flag(value)?,
            "capacity_fn" => self.capacity_fn = enum_value(value).ok_or_else(bad)?,
            "exponent_combine" => self.exponent_combine = enum_value(value).ok_or_else(bad)?,
            "rest_fraction" => self.rest_fraction = num(value, bad)?,
            "min_active_nodes" => self.min_active_nodes = num(value, bad)?,
            "eigen_tol" => self.eigen_tol = num(value, bad)?,
            "eigen_max_iterations" => self.eigen_max_iterations = num(value, bad)?,
            "crf_iterations" => self.crf_iterations = num(value, bad)?,
            "crf_max_side" => self.crf_max_side = num(value, bad)?,
            "crf_gaussian_sxy" => self.crf_gaussian_sxy = num(value, bad)?,
            "crf_gaussian_weight" => self.crf_gaussian_weight = num(value, bad)?,
            "crf_bilateral_sxy" => self.crf_bilateral_sxy = num(value, bad)?,
            "crf_bilateral_srgb" => self.crf_bilateral_srgb = num(value, bad)?,
            "crf_bilateral_weight" => self.crf_bilateral_weight = num(value, bad)?,
            "overlays" => self.overlays = flag(value)?,
            "worker_count" => self.worker_count = num(value, bad)?,
            "manifest" => self.manifest = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Emits every key in the same format `parse` reads.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("n_iters", self.n_iters.to_string());
        kv("tau_ncut", self.tau_ncut.to_string());
        kv("tau_knn", self.tau_knn.to_string());
        kv("tau_knn_min", self.tau_knn_min.to_string());
        kv("t_steps", self.t_steps.to_string());
        kv("beta", self.beta.to_string());
        kv("sc_min", self.sc_min.to_string());
        kv("sigma_gauss", self.sigma_gauss.to_string());
        kv("k", self.k.to_string());
        kv("z_bg", self.z_bg.to_string());
        kv("sharpening", self.sharpening.to_string());
        kv("localcut", self.localcut.to_string());
        kv("confidence", self.confidence.to_string());
        kv("crf", self.crf.to_string());
        kv("capacity_fn", enum_name(&self.capacity_fn));
        kv("exponent_combine", enum_name(&self.exponent_combine));
        kv("rest_fraction", self.rest_fraction.to_string());
        kv("min_active_nodes", self.min_active_nodes.to_string());
        kv("eigen_tol", self.eigen_tol.to_string());
        kv(
            "eigen_max_iterations",
            self.eigen_max_iterations.to_string(),
        );
        kv("crf_iterations", self.crf_iterations.to_string());
        kv("crf_max_side", self.crf_max_side.to_string());
        kv("crf_gaussian_sxy", self.crf_gaussian_sxy.to_string());
        kv("crf_gaussian_weight", self.crf_gaussian_weight.to_string());
        kv("crf_bilateral_sxy", self.crf_bilateral_sxy.to_string());
        kv("crf_bilateral_srgb", self.crf_bilateral_srgb.to_string());
        kv(
            "crf_bilateral_weight",
            self.crf_bilateral_weight.to_string(),
        );
        kv("overlays", self.overlays.to_string());
        kv("worker_count", self.worker_count.to_string());
        if let Some(p) = &self.manifest {
            kv("manifest", p.display().to_string());
        }
        if let Some(p) = &self.output_dir {
            kv("output_dir", p.display().to_string());
        }
        s
    }
}

/// Reuses the serde spelling of unit enum variants.
fn enum_value<E: serde::de::DeserializeOwned>(v: &str) -> Option<E> {
    serde_json::from_value(serde_json::Value::String(v.to_string())).ok()
}

fn enum_name<E: Serialize>(e: &E) -> String {
    match serde_json::to_value(e) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enum serializes to a string"),
    }
}
