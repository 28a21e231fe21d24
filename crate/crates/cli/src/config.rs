//! `key = value` run configuration with `[section]` headers.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; missing
//! keys keep their defaults and unknown keys are rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use uvtomo::em_solver::{EmOptions, InitScheme};
use uvtomo::gan_solver::{CInit, TrainConfig};
use uvtomo::phantom::PhantomKind;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub seed: u64,
    /// 0: one worker per core
    pub workers: usize,
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSection {
    /// bandlimit in cycles per pixel
    pub bandlimit: f64,
    /// concentration radius as a fraction of `m`
    pub radius_frac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub phantom: PhantomKind,
    pub m: usize,
    pub lines: usize,
    /// `inf` for clean data
    pub snr: f64,
    pub flip: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanSection {
    pub lr_phi: f64,
    pub lr_c: f64,
    pub lr_p: f64,
    pub gamma1: f64,
    /// `gamma2` for clean data
    pub gamma2_clean: f64,
    /// `gamma2` for noisy data
    pub gamma2_noisy: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub tau: f64,
    pub n_disc: usize,
    pub n_disc_late: usize,
    pub batch: usize,
    pub clip_phi: f64,
    pub clip_c: f64,
    pub p_grad_norm: f64,
    pub n_theta: usize,
    pub iters: usize,
    pub lambda_gp: f64,
    pub ell_clean: usize,
    pub ell_noisy: usize,
    pub critic_init_std: f64,
    pub c_init: CInit,
    pub lr_decay: f64,
    pub sn_power_iters: usize,
    pub sn_init_iters: usize,
    pub freeze_p: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmSection {
    pub iters: usize,
    pub n_inits: usize,
    pub init: InitScheme,
    pub n_theta: usize,
    pub sigma_inflation: f64,
    pub sigma_floor: f64,
    /// 0 disables annealing
    pub anneal_start: f64,
    pub anneal_decay: f64,
    pub p_warmup: usize,
    pub p_smoothing: f64,
    pub pcg_tol: f64,
    pub pcg_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlSection {
    pub epsilon: f64,
    pub cutoff_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HlSection {
    pub d_max: usize,
    pub tol: f64,
    pub n_angles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run: RunSection,
    pub basis: BasisSection,
    pub data: DataSection,
    pub gan: GanSection,
    pub em: EmSection,
    pub gl: GlSection,
    pub hl: HlSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            run: RunSection {
                seed: 0,
                workers: 0,
                eval_every: t.eval_every,
            },
            basis: BasisSection {
                bandlimit: 0.4,
                radius_frac: 0.47,
            },
            data: DataSection {
                phantom: PhantomKind::Disks,
                m: 64,
                lines: 2000,
                snr: f64::INFINITY,
                flip: true,
            },
            gan: GanSection {
                lr_phi: t.lr_phi,
                lr_c: t.lr_c,
                lr_p: t.lr_p,
                gamma1: t.gamma1,
                gamma2_clean: t.gamma2,
                gamma2_noisy: 5e-4,
                gamma3: t.gamma3,
                gamma4: t.gamma4,
                tau: t.tau,
                n_disc: t.n_disc,
                n_disc_late: t.n_disc_late,
                batch: t.batch,
                clip_phi: t.clip_phi,
                clip_c: t.clip_c,
                p_grad_norm: t.p_grad_norm,
                n_theta: t.n_theta,
                iters: t.iters,
                lambda_gp: t.lambda_gp,
                ell_clean: 512,
                ell_noisy: 256,
                critic_init_std: t.critic_init_std,
                c_init: t.c_init,
                lr_decay: t.lr_decay,
                sn_power_iters: t.sn_power_iters,
                sn_init_iters: t.sn_init_iters,
                freeze_p: false,
            },
            em: EmSection {
                iters: 100,
                n_inits: 3,
                init: InitScheme::Blobs,
                n_theta: 240,
                sigma_inflation: std::f64::consts::SQRT_2,
                sigma_floor: 0.1,
                anneal_start: 2.0,
                anneal_decay: 0.95,
                p_warmup: 40,
                p_smoothing: 4.0,
                pcg_tol: 1e-8,
                pcg_max_iter: 100,
            },
            gl: GlSection {
                epsilon: uvtomo::baselines::DEFAULT_EPSILON,
                cutoff_deg: uvtomo::baselines::DEFAULT_CUTOFF_DEG,
            },
            hl: HlSection {
                d_max: 2,
                tol: 1e-3,
                n_angles: 36,
            },
        }
    }
}

/// Scalar types that can appear as config values.
pub trait ConfigValue: Sized {
    fn render(&self) -> String;
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
}

macro_rules! via_fromstr {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn render(&self) -> String {
                self.to_string()
            }
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse::<$t>().map_err(|e| e.to_string())
            }
        }
    )*};
}

via_fromstr!(f64, usize, u64, bool, PhantomKind);

impl ConfigValue for CInit {
    fn render(&self) -> String {
        match self {
            CInit::Gaussian => "gaussian",
            CInit::Spike => "spike",
        }
        .into()
    }
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gaussian" => Ok(CInit::Gaussian),
            "spike" => Ok(CInit::Spike),
            other => Err(format!("unknown c_init '{other}' (gaussian, spike)")),
        }
    }
}

impl ConfigValue for InitScheme {
    fn render(&self) -> String {
        match self {
            InitScheme::Blobs => "blobs",
            InitScheme::UniformMask => "uniform-mask",
        }
        .into()
    }
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "blobs" => Ok(InitScheme::Blobs),
            "uniform-mask" => Ok(InitScheme::UniformMask),
            other => Err(format!("unknown init '{other}' (blobs, uniform-mask)")),
        }
    }
}

macro_rules! config_fields {
    ($($sec:literal, $key:literal => $($field:ident).+ : $ty:ty;)*) => {
        impl RunConfig {
            /// `(section, key, rendered value)` in file order.
            pub fn entries(&self) -> Vec<(&'static str, &'static str, String)> {
                vec![$(($sec, $key, ConfigValue::render(&self.$($field).+))),*]
            }

            pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
                match (section, key) {
                    $(($sec, $key) => {
                        self.$($field).+ = <$ty as ConfigValue>::parse_value(value)
                            .map_err(|e| CliError::Config(format!("[{section}] {key}: {e}")))?;
                    })*
                    _ => return Err(CliError::Config(format!("unknown key [{section}] {key}"))),
                }
                Ok(())
            }
        }
    };
}

config_fields! {
    "run", "seed" => run.seed: u64;
    "run", "workers" => run.workers: usize;
    "run", "eval_every" => run.eval_every: usize;
    "basis", "bandlimit" => basis.bandlimit: f64;
    "basis", "radius_frac" => basis.radius_frac: f64;
    "data", "phantom" => data.phantom: PhantomKind;
    "data", "m" => data.m: usize;
    "data", "lines" => data.lines: usize;
    "data", "snr" => data.snr: f64;
    "data", "flip" => data.flip: bool;
    "gan", "lr_phi" => gan.lr_phi: f64;
    "gan", "lr_c" => gan.lr_c: f64;
    "gan", "lr_p" => gan.lr_p: f64;
    "gan", "gamma1" => gan.gamma1: f64;
    "gan", "gamma2_clean" => gan.gamma2_clean: f64;
    "gan", "gamma2_noisy" => gan.gamma2_noisy: f64;
    "gan", "gamma3" => gan.gamma3: f64;
    "gan", "gamma4" => gan.gamma4: f64;
    "gan", "tau" => gan.tau: f64;
    "gan", "n_disc" => gan.n_disc: usize;
    "gan", "n_disc_late" => gan.n_disc_late: usize;
    "gan", "batch" => gan.batch: usize;
    "gan", "clip_phi" => gan.clip_phi: f64;
    "gan", "clip_c" => gan.clip_c: f64;
    "gan", "p_grad_norm" => gan.p_grad_norm: f64;
    "gan", "n_theta" => gan.n_theta: usize;
    "gan", "iters" => gan.iters: usize;
    "gan", "lambda_gp" => gan.lambda_gp: f64;
    "gan", "ell_clean" => gan.ell_clean: usize;
    "gan", "ell_noisy" => gan.ell_noisy: usize;
    "gan", "critic_init_std" => gan.critic_init_std: f64;
    "gan", "c_init" => gan.c_init: CInit;
    "gan", "lr_decay" => gan.lr_decay: f64;
    "gan", "sn_power_iters" => gan.sn_power_iters: usize;
    "gan", "sn_init_iters" => gan.sn_init_iters: usize;
    "gan", "freeze_p" => gan.freeze_p: bool;
    "em", "iters" => em.iters: usize;
    "em", "n_inits" => em.n_inits: usize;
    "em", "init" => em.init: InitScheme;
    "em", "n_theta" => em.n_theta: usize;
    "em", "sigma_inflation" => em.sigma_inflation: f64;
    "em", "sigma_floor" => em.sigma_floor: f64;
    "em", "anneal_start" => em.anneal_start: f64;
    "em", "anneal_decay" => em.anneal_decay: f64;
    "em", "p_warmup" => em.p_warmup: usize;
    "em", "p_smoothing" => em.p_smoothing: f64;
    "em", "pcg_tol" => em.pcg_tol: f64;
    "em", "pcg_max_iter" => em.pcg_max_iter: usize;
    "gl", "epsilon" => gl.epsilon: f64;
    "gl", "cutoff_deg" => gl.cutoff_deg: f64;
    "hl", "d_max" => hl.d_max: usize;
    "hl", "tol" => hl.tol: f64;
    "hl", "n_angles" => hl.n_angles: usize;
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut current = "";
        for (sec, key, value) in self.entries() {
            if sec != current {
                if !current.is_empty() {
                    writeln!(f)?;
                }
                writeln!(f, "[{sec}]")?;
                current = sec;
            }
            writeln!(f, "{key} = {value}")?;
        }
        Ok(())
    }
}

impl FromStr for RunConfig {
    type Err = CliError;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            if section.is_empty() {
                return Err(CliError::Config(format!("line {}: key outside a [section]", n + 1)));
            }
            cfg.set(&section, key.trim(), value.trim())?;
        }
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingFile(path.to_path_buf()),
            _ => CliError::Io(e),
        })?;
        text.parse()
    }

    /// Solver settings; critic width and `gamma2` follow the noise level.
    pub fn train_config(&self, noisy: bool) -> TrainConfig {
        let g = &self.gan;
        TrainConfig {
            lr_phi: g.lr_phi,
            lr_c: g.lr_c,
            lr_p: g.lr_p,
            gamma1: g.gamma1,
            gamma2: if noisy { g.gamma2_noisy } else { g.gamma2_clean },
            gamma3: g.gamma3,
            gamma4: g.gamma4,
            tau: g.tau,
            n_disc: g.n_disc,
            n_disc_late: g.n_disc_late,
            n_disc_switch: None,
            batch: g.batch,
            clip_phi: g.clip_phi,
            clip_c: g.clip_c,
            p_grad_norm: g.p_grad_norm,
            n_theta: g.n_theta,
            iters: g.iters,
            seed: self.run.seed,
            lambda_gp: g.lambda_gp,
            ell: if noisy { g.ell_noisy } else { g.ell_clean },
            critic_init_std: g.critic_init_std,
            c_init: g.c_init,
            c_init_std: 0.02,
            decay_every: None,
            lr_decay: g.lr_decay,
            sn_power_iters: g.sn_power_iters,
            sn_init_iters: g.sn_init_iters,
            freeze_p: g.freeze_p,
            eval_every: self.run.eval_every,
        }
    }

    /// EM settings; `sigma_inflation` applies to noisy data only.
    pub fn em_options(&self, noisy: bool) -> EmOptions {
        let e = &self.em;
        EmOptions {
            iters: e.iters,
            sigma_inflation: if noisy { e.sigma_inflation } else { 1.0 },
            sigma: None,
            sigma_floor: e.sigma_floor,
            anneal: (e.anneal_start > 0.0).then_some((e.anneal_start, e.anneal_decay)),
            p_warmup: e.p_warmup,
            p_smoothing: e.p_smoothing,
            pcg_tol: e.pcg_tol,
            pcg_max_iter: e.pcg_max_iter,
        }
    }
}
