use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture and training hyperparameters of a first-order state autoencoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FosaeConfig {
    /// N: objects per observation.
    pub num_objects: usize,
    /// F: features per object.
    pub num_features: usize,
    /// U: predicate units.
    pub num_units: usize,
    /// A: arguments per predicate.
    pub arity: usize,
    /// P: predicate networks shared by every unit.
    pub num_predicates: usize,
    pub attention_hidden: usize,
    pub pn_hidden: usize,
    pub decoder_hidden: usize,
    pub tau_start: f64,
    pub tau_min: f64,
    pub tau_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FosaeConfig {
    fn default() -> Self {
        let epochs = 300;
        FosaeConfig {
            num_objects: 9,
            num_features: 15,
            num_units: 9,
            arity: 2,
            num_predicates: 6,
            attention_hidden: 128,
            pn_hidden: 64,
            decoder_hidden: 512,
            tau_start: 5.0,
            tau_min: 0.7,
            tau_decay: schedule_decay(5.0, 0.7, epochs),
            epochs,
            batch_size: 100,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Decay factor that brings `tau_start` down to `tau_min` after 80% of `epochs`.
pub fn schedule_decay(tau_start: f64, tau_min: f64, epochs: usize) -> f64 {
    let horizon = (0.8 * epochs as f64).max(1.0);
    (tau_min / tau_start).powf(1.0 / horizon).min(1.0)
}

impl FosaeConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_objects", self.num_objects),
            ("num_features", self.num_features),
            ("num_units", self.num_units),
            ("arity", self.arity),
            ("num_predicates", self.num_predicates),
            ("attention_hidden", self.attention_hidden),
            ("pn_hidden", self.pn_hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if self.arity > self.num_objects {
            return Err(Error::Validation(format!(
                "arity {} exceeds num_objects {}",
                self.arity, self.num_objects
            )));
        }
        if !(self.tau_min > 0.0 && self.tau_start >= self.tau_min) {
            return Err(Error::Validation(format!(
                "need tau_start >= tau_min > 0, got {} and {}",
                self.tau_start, self.tau_min
            )));
        }
        if !(self.tau_decay > 0.0 && self.tau_decay <= 1.0) {
            return Err(Error::Validation(format!("tau_decay must be in (0, 1], got {}", self.tau_decay)));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Copy with `epochs` replaced and the decay recomputed for the new horizon.
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self.tau_decay = schedule_decay(self.tau_start, self.tau_min, epochs);
        self
    }

    pub fn num_propositions(&self) -> usize {
        self.num_units * self.num_predicates
    }

    pub fn object_width(&self) -> usize {
        self.num_objects * self.num_features
    }
}

/// `max(tau_min, tau_start · tau_decay^epoch)`.
pub fn anneal_tau(epoch: usize, config: &FosaeConfig) -> f64 {
    let exp = i32::try_from(epoch).unwrap_or(i32::MAX);
    (config.tau_start * config.tau_decay.powi(exp)).max(config.tau_min)
}
