//! Run configuration: one TOML document with a section per module.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use roiaug_core::augment::SamplerConfig;
use roiaug_core::roibank::BankConfig;
use roiaug_core::saliency::SaliencyConfig;
use roiaug_core::tissue::MaskConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldConfig {
    pub n_folds: usize,
}

impl Default for FoldConfig {
    fn default() -> Self {
        Self { n_folds: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_boot: usize,
    pub confidence: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_boot: 1000,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of all randomness in a run.
    pub seed: u64,
    pub mask: MaskConfig,
    pub saliency: SaliencyConfig,
    pub bank: BankConfig,
    pub sampler: SamplerConfig,
    pub folds: FoldConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Reads `path` (defaults when absent), applies `key=value` overrides
    /// with dotted keys, and validates every section.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut doc, item)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .context("invalid configuration")?;
        cfg.sampler.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.mask.validate().context("[mask]")?;
        self.saliency.validate().context("[saliency]")?;
        self.bank.validate().context("[bank]")?;
        self.sampler.validate().context("[sampler]")?;
        if self.folds.n_folds < 2 {
            bail!("[folds] n_folds must be >= 2, got {}", self.folds.n_folds);
        }
        if self.eval.n_boot == 0 {
            bail!("[eval] n_boot must be >= 1");
        }
        if !(self.eval.confidence > 0.0 && self.eval.confidence < 1.0) {
            bail!("[eval] confidence must be in (0, 1), got {}", self.eval.confidence);
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// `section.key=value`; the value is read as a TOML literal when it parses
/// as one and as a bare string otherwise.
fn apply_override(doc: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .with_context(|| format!("override {item:?} is not key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("override {item:?} has an empty key segment");
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = doc;
    for seg in parents {
        table = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .with_context(|| format!("override {item:?}: {seg} is not a section"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
