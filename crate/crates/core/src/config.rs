//! JSON run configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{GraphSpec, InterferenceGraph};
use crate::measures::default_beta;
use crate::Params;

/// One scale or a ladder of scales.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scales {
    One(u64),
    Many(Vec<u64>),
}

impl Scales {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Scales::One(n) => vec![*n],
            Scales::Many(ns) => ns.clone(),
        }
    }
}

/// Pass/fail levels for experiment summaries; unset levels are not judged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Largest allowed median sup-error (or sup-deviation) at the largest scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_error: Option<f64>,
    /// Largest allowed fitted homogenization slope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_slope: Option<f64>,
    /// Smallest allowed event frequency at the largest scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_frequency: Option<f64>,
    /// Level for the absorption check of `sumlaw`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorption_level: Option<f64>,
    /// Tube radius for `convergence`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tube_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphSpec,
    pub lambda: Vec<f64>,
    pub a: f64,
    /// Defaults to 1 on complete graphs and `2(n + 1)` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Initial state in fluid units; queue lengths for `stationary`.
    pub q0: Vec<f64>,
    /// Raw initial queues for `simulate`, overriding `round(N q0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0_raw: Option<Vec<u64>>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Scales>,
    pub horizon: f64,
    #[serde(default = "one")]
    pub replicas: usize,
    pub seed: u64,
    /// Defaults to `horizon / 1000`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    /// Node for per-node outputs (Poisson solution, epochs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub thresholds: Thresholds,
}

fn one() -> usize {
    1
}

fn is_default(t: &Thresholds) -> bool {
    *t == Thresholds::default()
}

/// Parses, validates and fills defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validated()
}

impl RunConfig {
    pub fn build_graph(&self) -> Result<InterferenceGraph> {
        self.graph.build()
    }

    pub fn params(&self) -> Result<Params> {
        let g = std::sync::Arc::new(self.build_graph()?);
        let beta = self.beta.unwrap_or_else(|| default_beta(&g));
        Params::with_beta(g, self.lambda.clone(), self.a, beta)
    }

    pub fn scales(&self) -> Option<Vec<u64>> {
        self.n.as_ref().map(Scales::to_vec)
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step.unwrap_or(self.horizon / 1000.0)
    }

    /// Checks every invariant and fills `beta` and `grid_step`.
    pub fn validated(mut self) -> Result<Self> {
        let g = self.build_graph()?;
        let n = g.node_count();
        let len = |what: &'static str, got: usize| -> Result<()> {
            if got != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    got,
                });
            }
            Ok(())
        };
        len("lambda", self.lambda.len())?;
        len("q0", self.q0.len())?;
        if let Some(raw) = &self.q0_raw {
            len("q0_raw", raw.len())?;
        }
        if self.lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid("lambda", "arrival rates must be positive and finite"));
        }
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::invalid("a", "must be positive and finite"));
        }
        if self.q0.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("q0", "entries must be nonnegative and finite"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid("horizon", "must be positive and finite"));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("replicas", "must be at least 1"));
        }
        if let Some(ns) = self.scales() {
            if ns.is_empty() || ns.contains(&0) {
                return Err(Error::invalid("N", "scales must be positive"));
            }
            if ns.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid("N", "scales must be strictly increasing"));
            }
        }
        if let Some(v) = self.node {
            if v >= n {
                return Err(Error::invalid("node", format!("{v} is not below the node count {n}")));
            }
        }
        let beta = self.beta.unwrap_or_else(|| default_beta(&g));
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid("beta", "must be positive and finite"));
        }
        self.beta = Some(beta);
        let step = self.grid_step.unwrap_or(self.horizon / 1000.0);
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::invalid("grid_step", "must be positive and finite"));
        }
        self.grid_step = Some(step);
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }
}
