use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use fosae::fosae::schedule_decay;
use fosae::FosaeConfig;
use serde_json::{Map, Value};

pub const SEED_ENV: &str = "FOSAE_SEED";

/// Model and training settings. Precedence: flags, then the JSON file, then
/// `FOSAE_SEED` (seed only), then defaults. Unless given explicitly,
/// `tau_decay` is derived from `tau_start`, `tau_min` and `epochs`.
#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// JSON file with any subset of the config keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the effective config as JSON and exit.
    #[arg(long)]
    pub print_config: bool,
    #[arg(long)]
    pub units: Option<usize>,
    #[arg(long)]
    pub arity: Option<usize>,
    #[arg(long)]
    pub predicates: Option<usize>,
    #[arg(long)]
    pub attention_hidden: Option<usize>,
    #[arg(long)]
    pub pn_hidden: Option<usize>,
    #[arg(long)]
    pub decoder_hidden: Option<usize>,
    #[arg(long)]
    pub tau_start: Option<f64>,
    #[arg(long)]
    pub tau_min: Option<f64>,
    #[arg(long)]
    pub tau_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ModelArgs {
    fn flags(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("num_units", self.units.map(Value::from));
        put("arity", self.arity.map(Value::from));
        put("num_predicates", self.predicates.map(Value::from));
        put("attention_hidden", self.attention_hidden.map(Value::from));
        put("pn_hidden", self.pn_hidden.map(Value::from));
        put("decoder_hidden", self.decoder_hidden.map(Value::from));
        put("tau_start", self.tau_start.map(Value::from));
        put("tau_min", self.tau_min.map(Value::from));
        put("tau_decay", self.tau_decay.map(Value::from));
        put("epochs", self.epochs.map(Value::from));
        put("batch_size", self.batch_size.map(Value::from));
        put("learning_rate", self.learning_rate.map(Value::from));
        put("seed", self.seed.map(Value::from));
        m
    }

    pub fn resolve(&self, defaults: &FosaeConfig) -> Result<FosaeConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                match serde_json::from_str::<Value>(&text).with_context(|| format!("parsing {}", path.display()))? {
                    Value::Object(m) => m,
                    _ => bail!("{}: config must be a JSON object", path.display()),
                }
            }
            None => Map::new(),
        };
        let flags = self.flags();
        let explicit = |k: &str| file.contains_key(k) || flags.contains_key(k);
        let Value::Object(mut merged) = serde_json::to_value(defaults)? else {
            unreachable!("a config serializes to an object")
        };
        merged.extend(file.clone());
        merged.extend(flags.clone());
        if !explicit("seed") {
            if let Ok(s) = std::env::var(SEED_ENV) {
                let seed: u64 = s.trim().parse().with_context(|| format!("{SEED_ENV}={s} is not a seed"))?;
                merged.insert("seed".into(), seed.into());
            }
        }
        let mut cfg: FosaeConfig = serde_path_to_error::deserialize(Value::Object(merged))
            .map_err(|e| anyhow::anyhow!("config key `{}`: {}", e.path(), e.inner()))?;
        if !explicit("tau_decay") {
            cfg.tau_decay = schedule_decay(cfg.tau_start, cfg.tau_min, cfg.epochs);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
