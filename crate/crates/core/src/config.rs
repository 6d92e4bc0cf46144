//! Flat `key = value` parameter files.
//!
//! Slider keys are bare (`mass = 0.5`). Weight keys carry a `weights.` prefix;
//! matrices are given by their diagonal (`weights.QT.diag = 200, 200, 100, 0, 0, 0, 0`)
//! and the bound by `weights.u_l`. Lines starting with `#` are comments.

use std::fs;
use std::path::Path;

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

use crate::cost::CostError;
use crate::pushdyn::DynamicsError;
use crate::{SliderParams, Weights};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error(transparent)]
    Params(#[from] DynamicsError),
    #[error(transparent)]
    Weights(#[from] CostError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamFile {
    pub params: SliderParams,
    pub weights: Weights,
}

fn diag<const N: usize>(values: &[f64]) -> Option<SMatrix<f64, N, N>> {
    (values.len() == N).then(|| SMatrix::from_diagonal(&SVector::from_column_slice(values)))
}

impl ParamFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Parses `text` on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line, message: format!("expected `key = value`, got `{content}`") });
            };
            let key = key.trim();
            let values = value
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ConfigError::Syntax { line, message: format!("`{key}`: {e}") })?;
            out.set(key, &values).map_err(|e| match e {
                None => ConfigError::UnknownKey { line, key: key.to_owned() },
                Some(message) => ConfigError::Syntax { line, message },
            })?;
        }
        out.params.validate()?;
        out.weights.validate()?;
        Ok(out)
    }

    /// `Err(None)` for unknown keys, `Err(Some(msg))` for a bad value count.
    fn set(&mut self, key: &str, v: &[f64]) -> Result<(), Option<String>> {
        let scalar = || -> Result<f64, Option<String>> {
            match v {
                [x] => Ok(*x),
                _ => Err(Some(format!("`{key}` takes one value, got {}", v.len()))),
            }
        };
        let count = |n: usize| Some(format!("`{key}` takes {n} values, got {}", v.len()));
        let p = &mut self.params;
        let w = &mut self.weights;
        match key {
            "half_side" => p.half_side = scalar()?,
            "mu_ground" => p.mu_ground = scalar()?,
            "mu_contact" => p.mu_contact = scalar()?,
            "mass" => p.mass = scalar()?,
            "gravity" => p.gravity = scalar()?,
            "char_len" => p.char_len = scalar()?,
            "contact_tol" => p.contact_tol = scalar()?,
            "weights.u_l" => w.u_limit = scalar()?,
            "weights.QT.diag" => w.q_terminal = diag(v).ok_or_else(|| count(7))?,
            "weights.Qn.diag" => w.q_switch = diag(v).ok_or_else(|| count(7))?,
            "weights.R.diag" => w.r = diag(v).ok_or_else(|| count(2))?,
            "weights.Qf.diag" => w.q_bound = diag(v).ok_or_else(|| count(2))?,
            "weights.Rdv.diag" => w.r_vel = diag(v).ok_or_else(|| count(2))?,
            "weights.Rdu.diag" => w.r_acc = diag(v).ok_or_else(|| count(2))?,
            _ => return Err(None),
        }
        Ok(())
    }
}
