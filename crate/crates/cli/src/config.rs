//! Run configuration: a flat `key = value` file merged with command-line flags.

use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ihdg_core::solver::{Method, NewtonConfig};
use ihdg_core::study::{StudyConfig, TimeStepRule};

/// Largest meshes that run without `--big`.
pub const MAX_CELLS_2D: usize = 64;
pub const MAX_CELLS_3D: usize = 8;

/// Every setting is optional so that a file and the flags can be layered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub problem: Option<String>,
    pub dim: Option<usize>,
    pub k: Option<usize>,
    pub levels: Option<Vec<usize>>,
    pub tau: Option<f64>,
    pub final_time: Option<f64>,
    /// Fixed time step; `h^(k+1)` when unset.
    pub dt: Option<f64>,
    pub method: Option<Method>,
    pub newton_tol: Option<f64>,
    pub newton_step_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("bad value {value:?} for {key}: {e}"))
}

pub fn parse_levels(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| parse::<usize>("levels", s.trim()))
        .collect()
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let ctx = || format!("line {}", lineno + 1);
            match key {
                "problem" => s.problem = Some(value.to_string()),
                "dim" => s.dim = Some(parse(key, value).with_context(ctx)?),
                "k" | "degree" => s.k = Some(parse(key, value).with_context(ctx)?),
                "levels" => s.levels = Some(parse_levels(value).with_context(ctx)?),
                "tau" => s.tau = Some(parse(key, value).with_context(ctx)?),
                "final_time" | "T" => s.final_time = Some(parse(key, value).with_context(ctx)?),
                "dt" => s.dt = Some(parse(key, value).with_context(ctx)?),
                "method" => s.method = Some(parse(key, value).with_context(ctx)?),
                "newton_tol" => s.newton_tol = Some(parse(key, value).with_context(ctx)?),
                "newton_step_tol" => s.newton_step_tol = Some(parse(key, value).with_context(ctx)?),
                "max_iter" => s.max_iter = Some(parse(key, value).with_context(ctx)?),
                "seed" => s.seed = Some(parse(key, value).with_context(ctx)?),
                "threads" => s.threads = Some(parse(key, value).with_context(ctx)?),
                other => bail!("line {}: unknown key {other:?}", lineno + 1),
            }
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse_text(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// `other` wins wherever it is set.
    pub fn overridden_by(self, other: Settings) -> Settings {
        Settings {
            problem: other.problem.or(self.problem),
            dim: other.dim.or(self.dim),
            k: other.k.or(self.k),
            levels: other.levels.or(self.levels),
            tau: other.tau.or(self.tau),
            final_time: other.final_time.or(self.final_time),
            dt: other.dt.or(self.dt),
            method: other.method.or(self.method),
            newton_tol: other.newton_tol.or(self.newton_tol),
            newton_step_tol: other.newton_step_tol.or(self.newton_step_tol),
            max_iter: other.max_iter.or(self.max_iter),
            seed: other.seed.or(self.seed),
            threads: other.threads.or(self.threads),
        }
    }

    pub fn study(&self) -> StudyConfig {
        let d = StudyConfig::default();
        let nd = NewtonConfig::default();
        let dim = self.dim.unwrap_or(d.dim);
        let default_levels = if dim == 3 { vec![2, 4, 8] } else { d.levels };
        StudyConfig {
            problem: self.problem.clone().unwrap_or(d.problem),
            dim,
            k: self.k.unwrap_or(d.k),
            levels: self.levels.clone().unwrap_or(default_levels),
            tau: self.tau.unwrap_or(d.tau),
            final_time: self.final_time.unwrap_or(d.final_time),
            time_step: self.dt.map_or(TimeStepRule::MeshPower, TimeStepRule::Fixed),
            method: self.method.unwrap_or(d.method),
            newton: NewtonConfig {
                abs_tol: self.newton_tol.unwrap_or(nd.abs_tol),
                step_tol: self.newton_step_tol.unwrap_or(nd.step_tol),
                max_iter: self.max_iter.unwrap_or(nd.max_iter),
            },
        }
    }
}

/// Refuses meshes above the desk-scale limits unless `big` is set.
pub fn check_size(study: &StudyConfig, big: bool) -> Result<()> {
    let limit = if study.dim == 3 { MAX_CELLS_3D } else { MAX_CELLS_2D };
    if let Some(n) = study.levels.iter().find(|&&n| n > limit) {
        if !big {
            bail!(
                "level n = {n} exceeds {limit} cells per axis in {}D; pass --big to run it anyway",
                study.dim
            );
        }
    }
    Ok(())
}
