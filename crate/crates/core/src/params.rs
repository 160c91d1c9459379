//! Solver weights and annealing controls.
//!
//! Defaults are the tuned values: insertion weights `(200, 10, 1)`, surrogate
//! weights `(10000, 1250, 1)`, removal/closeness weights `β_s = 10000`,
//! `β_Q = 100`, `β_D = 10`, `β_T = 1`, and the cooling schedule
//! `t_initial = 100 × TN`, `t_end = 10`, `t_cool = 0.9`, `it_max = 10`,
//! `N_nei = 20`, `ε ~ U(0, 100)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cost assigned to an insertion that violates capacity or ride time.
pub const BIG_PENALTY: f64 = 1e12;

/// Weights of the insertion cost `IC = q·MQ + c·MC + t·MT`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsertionWeights {
    pub q: f64,
    pub c: f64,
    pub t: f64,
}

/// Weights of the removal cost and of the neighbour closeness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExchangeWeights {
    /// Stops on the owning trip (removal cost).
    pub s: f64,
    /// Duration of the owning trip (removal cost).
    pub t_removal: f64,
    /// Students on the candidate's trip (closeness).
    pub q: f64,
    /// Duration of the candidate's trip (closeness).
    pub t_close: f64,
    /// Travel time between the two stops (closeness).
    pub d: f64,
}

/// Weights of the surrogate cost `SC = n·TN − c·TC + t·TT`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateWeights {
    pub n: f64,
    pub c: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealParams {
    /// Initial temperature is this factor times the input plan's trip count.
    pub t_initial_factor: f64,
    pub t_end: f64,
    pub t_cool: f64,
    /// Consecutive passes without an applied move before stopping.
    pub it_max: u32,
    pub n_nei: usize,
    /// Upper bound of the uniform noise added to removal costs.
    pub epsilon_max: f64,
    /// Passes a recorded move stays tabu; `None` means `10 × TN`.
    pub tabu_tenure: Option<u64>,
    /// Accept every strictly improving move without a Bernoulli draw.
    pub always_accept_improving: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    pub alpha: InsertionWeights,
    pub beta: ExchangeWeights,
    pub gamma: SurrogateWeights,
    pub anneal: AnnealParams,
    pub big_penalty: f64,
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            alpha: InsertionWeights {
                q: 200.0,
                c: 10.0,
                t: 1.0,
            },
            beta: ExchangeWeights {
                s: 10_000.0,
                t_removal: 1.0,
                q: 100.0,
                t_close: 1.0,
                d: 10.0,
            },
            gamma: SurrogateWeights {
                n: 10_000.0,
                c: 1_250.0,
                t: 1.0,
            },
            anneal: AnnealParams {
                t_initial_factor: 100.0,
                t_end: 10.0,
                t_cool: 0.9,
                it_max: 10,
                n_nei: 20,
                epsilon_max: 100.0,
                tabu_tenure: None,
                always_accept_improving: false,
            },
            big_penalty: BIG_PENALTY,
            seed: 0,
        }
    }
}

macro_rules! default_from_solver {
    ($($ty:ty => $field:ident),*) => {
        $(impl Default for $ty {
            fn default() -> Self {
                SolverParams::default().$field
            }
        })*
    };
}

default_from_solver!(
    InsertionWeights => alpha,
    ExchangeWeights => beta,
    SurrogateWeights => gamma,
    AnnealParams => anneal
);

impl SolverParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alpha.q", self.alpha.q),
            ("alpha.c", self.alpha.c),
            ("alpha.t", self.alpha.t),
            ("beta.s", self.beta.s),
            ("beta.t_removal", self.beta.t_removal),
            ("beta.q", self.beta.q),
            ("beta.t_close", self.beta.t_close),
            ("beta.d", self.beta.d),
            ("gamma.n", self.gamma.n),
            ("gamma.c", self.gamma.c),
            ("gamma.t", self.gamma.t),
            ("anneal.epsilon_max", self.anneal.epsilon_max),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidParam(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        let a = &self.anneal;
        if !(a.t_cool > 0.0 && a.t_cool < 1.0) {
            return Err(Error::InvalidParam(format!(
                "anneal.t_cool must lie in (0, 1), got {}",
                a.t_cool
            )));
        }
        if !(a.t_end > 0.0 && a.t_end.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "anneal.t_end must be > 0, got {}",
                a.t_end
            )));
        }
        if !(a.t_initial_factor > 0.0 && a.t_initial_factor.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "anneal.t_initial_factor must be > 0, got {}",
                a.t_initial_factor
            )));
        }
        if !(self.big_penalty.is_finite() && self.big_penalty > 0.0) {
            return Err(Error::InvalidParam("big_penalty must be finite and > 0".into()));
        }
        Ok(())
    }

    /// Overrides one field addressed by a dotted key such as `alpha.q` or
    /// `anneal.n_nei`. The value is parsed as JSON, falling back to a plain
    /// string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut tree = serde_json::to_value(*self)?;
        let mut slot = &mut tree;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| Error::InvalidParam(format!("unknown parameter `{key}`")))?;
        }
        if slot.is_object() {
            return Err(Error::InvalidParam(format!("`{key}` is a group, not a field")));
        }
        *slot = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_owned()));
        let updated: SolverParams =
            serde_json::from_value(tree).map_err(|e| Error::InvalidParam(format!("`{key}={value}`: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }
    /// Applies a partial parameter tree such as
    /// `{"alpha": {"q": 150}, "anneal": {"it_max": 5}}` on top of `self`.
    pub fn merge_json(&mut self, patch: &serde_json::Value) -> Result<()> {
        fn merge(into: &mut serde_json::Value, patch: &serde_json::Value, path: &str) -> Result<()> {
            let Some(fields) = patch.as_object() else {
                *into = patch.clone();
                return Ok(());
            };
            let target = into
                .as_object_mut()
                .ok_or_else(|| Error::InvalidParam(format!("`{path}` is a field, not a group")))?;
            for (k, v) in fields {
                let key = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                let slot = target
                    .get_mut(k)
                    .ok_or_else(|| Error::InvalidParam(format!("unknown parameter `{key}`")))?;
                merge(slot, v, &key)?;
            }
            Ok(())
        }
        let mut tree = serde_json::to_value(*self)?;
        merge(&mut tree, patch, "")?;
        let updated: SolverParams = serde_json::from_value(tree).map_err(|e| Error::InvalidParam(e.to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }
}
