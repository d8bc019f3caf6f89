//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::denoiser::{AugmentationPolicy, TrainConfig, UNetConfig};
use crate::diffusion::{make_schedule, NoiseSchedule};
use crate::error::{Error, Result};
use crate::guided::{GradientMode, GuidanceConfig, StepRule};
use crate::model::PhantomParams;
use crate::solvers::{InitMode, SolverConfig};

/// Reconstruction method selectable from a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodKind {
    Rpie,
    Awf,
    Diffusion,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Rpie => "rpie",
            MethodKind::Awf => "awf",
            MethodKind::Diffusion => "diffusion",
        }
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rpie" => Ok(Self::Rpie),
            "awf" => Ok(Self::Awf),
            "diffusion" => Ok(Self::Diffusion),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (valid: rpie, awf, diffusion)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seed: u64,

    pub object_size: usize,
    pub phantom_count: usize,
    pub phantom: PhantomParams,
    pub train_images: usize,

    pub probe_width: usize,
    pub probe_aperture: f64,
    pub probe_taper: f64,

    pub overlaps: Vec<f64>,
    pub jitter_overlaps: Vec<f64>,
    pub jitter_max_shift: usize,

    pub photon_max: f64,
    pub noiseless: bool,

    pub method: MethodKind,
    pub sweep_methods: Vec<MethodKind>,

    pub solver_iterations: usize,
    pub rpie_alpha: f64,
    pub awf_step: f64,
    pub awf_momentum: bool,
    pub solver_init: InitMode,
    pub early_stop_tol: f64,
    pub early_stop_window: usize,

    pub schedule_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,

    pub net_width: usize,
    pub time_dim: usize,
    pub train_steps: usize,
    pub train_batch: usize,
    pub learning_rate: f64,
    pub train_patch: usize,
    pub checkpoint_every: usize,
    pub resume: bool,
    pub aug_max_rotation: f64,
    pub aug_scale_min: f64,
    pub aug_scale_max: f64,

    pub zeta0: f64,
    pub travel_depth: usize,
    pub travel_stride: usize,
    pub gradient_mode: GradientMode,
    pub step_rule: StepRule,
    pub guidance_precondition: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        let guidance = GuidanceConfig::default();
        let train = TrainConfig::default();
        let unet = UNetConfig::default();
        let aug = AugmentationPolicy::new(32);
        Self {
            output_dir: PathBuf::from("run"),
            seed: 0,
            object_size: 64,
            phantom_count: 10,
            phantom: PhantomParams::default(),
            train_images: 200,
            probe_width: 16,
            probe_aperture: crate::model::probe::DEFAULT_APERTURE,
            probe_taper: crate::model::probe::DEFAULT_TAPER,
            overlaps: vec![0.25, 0.5, 0.75],
            jitter_overlaps: vec![0.25],
            jitter_max_shift: 2,
            photon_max: 1e5,
            noiseless: false,
            method: MethodKind::Rpie,
            sweep_methods: vec![MethodKind::Rpie, MethodKind::Diffusion],
            solver_iterations: solver.iterations,
            rpie_alpha: solver.rpie_alpha,
            awf_step: solver.awf_step,
            awf_momentum: solver.awf_momentum,
            solver_init: solver.init,
            early_stop_tol: solver.early_stop_tol,
            early_stop_window: solver.early_stop_window,
            schedule_steps: 200,
            beta_min: 5e-4,
            beta_max: 0.1,
            net_width: unet.base_width,
            time_dim: unet.time_dim,
            train_steps: train.steps,
            train_batch: train.batch,
            learning_rate: train.learning_rate,
            train_patch: aug.patch,
            checkpoint_every: 500,
            resume: false,
            aug_max_rotation: aug.max_rotation,
            aug_scale_min: aug.scale_min,
            aug_scale_max: aug.scale_max,
            zeta0: guidance.zeta0,
            travel_depth: guidance.travel_depth,
            travel_stride: guidance.travel_stride,
            gradient_mode: guidance.mode,
            step_rule: guidance.step_rule,
            guidance_precondition: guidance.precondition,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{v}` for `{key}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_methods(v: &str) -> Result<Vec<MethodKind>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn mode_name(m: GradientMode) -> &'static str {
    match m {
        GradientMode::Full => "full",
        GradientMode::Surrogate => "surrogate",
    }
}

fn init_name(m: InitMode) -> &'static str {
    match m {
        InitMode::Flat => "flat",
        InitMode::Random => "random",
    }
}

impl ExperimentConfig {
    /// Parses configuration text. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = Self::default();
        let mut output_dir = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (k, v) = (key.trim(), value.trim());
            c.set(k, v, &mut output_dir)?;
        }
        if let Some(p) = output_dir {
            c.output_dir = p;
        }
        if c.output_dir.is_relative() {
            c.output_dir = base.join(&c.output_dir);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    fn set(&mut self, k: &str, v: &str, output_dir: &mut Option<PathBuf>) -> Result<()> {
        match k {
            "output_dir" => *output_dir = Some(PathBuf::from(v)),
            "seed" => self.seed = parse(k, v)?,
            "object_size" => self.object_size = parse(k, v)?,
            "phantom_count" => self.phantom_count = parse(k, v)?,
            "phantom_background" => self.phantom.background = parse(k, v)?,
            "phantom_min_blobs" => self.phantom.min_blobs = parse(k, v)?,
            "phantom_max_blobs" => self.phantom.max_blobs = parse(k, v)?,
            "phantom_min_factor" => self.phantom.min_factor = parse(k, v)?,
            "phantom_max_factor" => self.phantom.max_factor = parse(k, v)?,
            "phantom_phase_scale" => self.phantom.phase_scale = parse(k, v)?,
            "phantom_lowfreq_amplitude" => self.phantom.lowfreq_amplitude = parse(k, v)?,
            "phantom_edge" => self.phantom.edge = parse(k, v)?,
            "train_images" => self.train_images = parse(k, v)?,
            "probe_width" => self.probe_width = parse(k, v)?,
            "probe_aperture" => self.probe_aperture = parse(k, v)?,
            "probe_taper" => self.probe_taper = parse(k, v)?,
            "overlaps" => self.overlaps = parse_list(k, v)?,
            "jitter_overlaps" => self.jitter_overlaps = parse_list(k, v)?,
            "jitter_max_shift" => self.jitter_max_shift = parse(k, v)?,
            "photon_max" => self.photon_max = parse(k, v)?,
            "noiseless" => self.noiseless = parse_bool(k, v)?,
            "method" => self.method = v.parse()?,
            "sweep_methods" => self.sweep_methods = parse_methods(v)?,
            "solver_iterations" => self.solver_iterations = parse(k, v)?,
            "rpie_alpha" => self.rpie_alpha = parse(k, v)?,
            "awf_step" => self.awf_step = parse(k, v)?,
            "awf_momentum" => self.awf_momentum = parse_bool(k, v)?,
            "solver_init" => self.solver_init = v.parse()?,
            "early_stop_tol" => self.early_stop_tol = parse(k, v)?,
            "early_stop_window" => self.early_stop_window = parse(k, v)?,
            "schedule_steps" => self.schedule_steps = parse(k, v)?,
            "beta_min" => self.beta_min = parse(k, v)?,
            "beta_max" => self.beta_max = parse(k, v)?,
            "net_width" => self.net_width = parse(k, v)?,
            "time_dim" => self.time_dim = parse(k, v)?,
            "train_steps" => self.train_steps = parse(k, v)?,
            "train_batch" => self.train_batch = parse(k, v)?,
            "learning_rate" => self.learning_rate = parse(k, v)?,
            "train_patch" => self.train_patch = parse(k, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(k, v)?,
            "resume" => self.resume = parse_bool(k, v)?,
            "aug_max_rotation" => self.aug_max_rotation = parse(k, v)?,
            "aug_scale_min" => self.aug_scale_min = parse(k, v)?,
            "aug_scale_max" => self.aug_scale_max = parse(k, v)?,
            "zeta0" => self.zeta0 = parse(k, v)?,
            "travel_depth" => self.travel_depth = parse(k, v)?,
            "travel_stride" => self.travel_stride = parse(k, v)?,
            "gradient_mode" => self.gradient_mode = v.parse()?,
            "step_rule" => self.step_rule = v.parse()?,
            "guidance_precondition" => self.guidance_precondition = parse_bool(k, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.object_size < 16 || self.probe_width < 4 || self.probe_width > self.object_size {
            return Err(Error::Config(format!(
                "need object_size ≥ 16 and 4 ≤ probe_width ≤ object_size, got {} and {}",
                self.object_size, self.probe_width
            )));
        }
        if self.phantom_count == 0 {
            return Err(Error::Config("phantom_count must be at least 1".into()));
        }
        if self.overlaps.is_empty() {
            return Err(Error::Config("overlaps must list at least one value".into()));
        }
        if !(self.photon_max > 0.0) {
            return Err(Error::Config("photon_max must be positive".into()));
        }
        if self.train_patch > self.object_size || self.train_patch % 4 != 0 || self.object_size % 4 != 0 {
            return Err(Error::Config(
                "train_patch and object_size must be multiples of 4 with train_patch ≤ object_size".into(),
            ));
        }
        if self.step_rule.name().is_none() {
            return Err(Error::Config("the likelihood step rule cannot be set from a configuration".into()));
        }
        self.solver_config(0).validate()?;
        self.guidance_config(0).validate()?;
        self.train_config().validate()?;
        self.unet_config().validate()?;
        self.augmentation().validate()?;
        self.schedule()?;
        Ok(())
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            iterations: self.solver_iterations,
            rpie_alpha: self.rpie_alpha,
            awf_step: self.awf_step,
            awf_momentum: self.awf_momentum,
            seed,
            init: self.solver_init,
            early_stop_tol: self.early_stop_tol,
            early_stop_window: self.early_stop_window,
        }
    }

    pub fn guidance_config(&self, seed: u64) -> GuidanceConfig {
        GuidanceConfig {
            zeta0: self.zeta0,
            travel_depth: self.travel_depth,
            travel_stride: self.travel_stride,
            mode: self.gradient_mode,
            step_rule: self.step_rule,
            precondition: self.guidance_precondition,
            seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.train_steps,
            batch: self.train_batch,
            learning_rate: self.learning_rate,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn unet_config(&self) -> UNetConfig {
        UNetConfig {
            in_channels: 2,
            base_width: self.net_width,
            time_dim: self.time_dim,
        }
    }

    pub fn augmentation(&self) -> AugmentationPolicy {
        AugmentationPolicy {
            max_rotation: self.aug_max_rotation,
            scale_min: self.aug_scale_min,
            scale_max: self.aug_scale_max,
            patch: self.train_patch,
            random_crop: true,
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(self.schedule_steps, self.beta_min, self.beta_max)
    }

    /// Every key with its effective value, one per line.
    pub fn to_text(&self) -> String {
        let p = &self.phantom;
        let entries: Vec<(&str, String)> = vec![
            ("output_dir", self.output_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("object_size", self.object_size.to_string()),
            ("phantom_count", self.phantom_count.to_string()),
            ("phantom_background", p.background.to_string()),
            ("phantom_min_blobs", p.min_blobs.to_string()),
            ("phantom_max_blobs", p.max_blobs.to_string()),
            ("phantom_min_factor", p.min_factor.to_string()),
            ("phantom_max_factor", p.max_factor.to_string()),
            ("phantom_phase_scale", p.phase_scale.to_string()),
            ("phantom_lowfreq_amplitude", p.lowfreq_amplitude.to_string()),
            ("phantom_edge", p.edge.to_string()),
            ("train_images", self.train_images.to_string()),
            ("probe_width", self.probe_width.to_string()),
            ("probe_aperture", self.probe_aperture.to_string()),
            ("probe_taper", self.probe_taper.to_string()),
            ("overlaps", join(&self.overlaps)),
            ("jitter_overlaps", join(&self.jitter_overlaps)),
            ("jitter_max_shift", self.jitter_max_shift.to_string()),
            ("photon_max", self.photon_max.to_string()),
            ("noiseless", self.noiseless.to_string()),
            ("method", self.method.name().to_string()),
            (
                "sweep_methods",
                self.sweep_methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
            ),
            ("solver_iterations", self.solver_iterations.to_string()),
            ("rpie_alpha", self.rpie_alpha.to_string()),
            ("awf_step", self.awf_step.to_string()),
            ("awf_momentum", self.awf_momentum.to_string()),
            ("solver_init", init_name(self.solver_init).to_string()),
            ("early_stop_tol", self.early_stop_tol.to_string()),
            ("early_stop_window", self.early_stop_window.to_string()),
            ("schedule_steps", self.schedule_steps.to_string()),
            ("beta_min", self.beta_min.to_string()),
            ("beta_max", self.beta_max.to_string()),
            ("net_width", self.net_width.to_string()),
            ("time_dim", self.time_dim.to_string()),
            ("train_steps", self.train_steps.to_string()),
            ("train_batch", self.train_batch.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("train_patch", self.train_patch.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("resume", self.resume.to_string()),
            ("aug_max_rotation", self.aug_max_rotation.to_string()),
            ("aug_scale_min", self.aug_scale_min.to_string()),
            ("aug_scale_max", self.aug_scale_max.to_string()),
            ("zeta0", self.zeta0.to_string()),
            ("travel_depth", self.travel_depth.to_string()),
            ("travel_stride", self.travel_stride.to_string()),
            ("gradient_mode", mode_name(self.gradient_mode).to_string()),
            ("step_rule", self.step_rule.name().unwrap_or("likelihood").to_string()),
            ("guidance_precondition", self.guidance_precondition.to_string()),
        ];
        let mut s = String::new();
        for (k, v) in entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.output_dir.join("dataset")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.output_dir.join("model")
    }

    pub fn recon_dir(&self) -> PathBuf {
        self.output_dir.join("recon")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.output_dir.join("reports")
    }
}
