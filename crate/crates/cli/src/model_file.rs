//! Versioned plain-text persistence for fitted models. The format is
//! line-oriented `key = value`, human-diffable, and byte-stable under
//! save/load/save round trips (floats use the shortest exact decimal
//! rendering).

use std::path::Path;

use debias_core::{Criterion, ThresholdModel};

use crate::errors::{CliError, CliResult};

const FORMAT_VERSION: u32 = 1;

/// How the model was fitted, carried along for provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitMeta {
    pub n: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

/// A fitted model together with the group-label mapping it was trained
/// against and its fitting metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: ThresholdModel,
    pub group_labels: Vec<String>,
    pub meta: FitMeta,
}

impl ModelFile {
    pub fn new(model: ThresholdModel, group_labels: Vec<String>, meta: FitMeta) -> CliResult<Self> {
        if group_labels.len() != model.group_count() {
            return Err(CliError::data(
                "model file needs one group label per group",
            ));
        }
        for label in &group_labels {
            if label.contains('\n') || label.contains('\r') {
                return Err(CliError::data(format!(
                    "group label {label:?} contains a line break"
                )));
            }
        }
        Ok(ModelFile {
            model,
            group_labels,
            meta,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("debias_model_version = {FORMAT_VERSION}\n"));
        match self.model.criterion() {
            Criterion::ConditionalStatisticalParity => {
                out.push_str("criterion = conditional-statistical-parity\n");
            }
            Criterion::PredictiveEquality { target_rate } => {
                out.push_str("criterion = predictive-equality\n");
                out.push_str(&format!("target_rate = {target_rate:?}\n"));
            }
        }
        out.push_str(&format!("gamma = {:?}\n", self.model.gamma()));
        out.push_str(&format!("group_count = {}\n", self.model.group_count()));
        out.push_str(&format!("fit_n = {}\n", self.meta.n));
        out.push_str(&format!("fit_steps = {}\n", self.meta.steps));
        out.push_str(&format!("fit_learning_rate = {:?}\n", self.meta.learning_rate));
        out.push_str(&format!("fit_seed = {}\n", self.meta.seed));
        for k in 0..self.model.group_count() {
            out.push_str(&format!("group_{k}_label = {}\n", self.group_labels[k]));
            out.push_str(&format!("group_{k}_mu = {:?}\n", self.model.mu()[k]));
            out.push_str(&format!("group_{k}_rho = {:?}\n", self.model.rho()[k]));
            out.push_str(&format!(
                "group_{k}_degenerate = {}\n",
                self.model.degenerate()[k]
            ));
        }
        out
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut pairs = Vec::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line.split_once(" = ").ok_or_else(|| {
                CliError::data(format!(
                    "model file line {}: expected 'key = value'",
                    line_no + 1
                ))
            })?;
            pairs.push((key.to_string(), value.to_string()));
        }
        let get = |key: &str| -> CliResult<&str> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| CliError::data(format!("model file: missing key '{key}'")))
        };
        let parse_f64 = |key: &str| -> CliResult<f64> {
            get(key)?
                .parse()
                .map_err(|_| CliError::data(format!("model file: '{key}' is not a number")))
        };
        let parse_usize = |key: &str| -> CliResult<usize> {
            get(key)?
                .parse()
                .map_err(|_| CliError::data(format!("model file: '{key}' is not an integer")))
        };

        let version: u32 = get("debias_model_version")?
            .parse()
            .map_err(|_| CliError::data("model file: bad version"))?;
        if version != FORMAT_VERSION {
            return Err(CliError::data(format!(
                "model file version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let criterion = match get("criterion")? {
            "conditional-statistical-parity" => Criterion::ConditionalStatisticalParity,
            "predictive-equality" => Criterion::PredictiveEquality {
                target_rate: parse_f64("target_rate")?,
            },
            other => {
                return Err(CliError::data(format!(
                    "model file: unknown criterion '{other}'"
                )))
            }
        };
        let gamma = parse_f64("gamma")?;
        let group_count = parse_usize("group_count")?;
        let meta = FitMeta {
            n: parse_usize("fit_n")?,
            steps: parse_usize("fit_steps")?,
            learning_rate: parse_f64("fit_learning_rate")?,
            seed: get("fit_seed")?
                .parse()
                .map_err(|_| CliError::data("model file: 'fit_seed' is not an integer"))?,
        };

        let mut labels = Vec::with_capacity(group_count);
        let mut mu = Vec::with_capacity(group_count);
        let mut rho = Vec::with_capacity(group_count);
        let mut degenerate = Vec::with_capacity(group_count);
        for k in 0..group_count {
            labels.push(get(&format!("group_{k}_label"))?.to_string());
            mu.push(parse_f64(&format!("group_{k}_mu"))?);
            rho.push(parse_f64(&format!("group_{k}_rho"))?);
            degenerate.push(match get(&format!("group_{k}_degenerate"))? {
                "true" => true,
                "false" => false,
                other => {
                    return Err(CliError::data(format!(
                        "model file: group_{k}_degenerate must be true/false, got '{other}'"
                    )))
                }
            });
        }
        let model = ThresholdModel::new(mu, rho, gamma, criterion, degenerate)
            .map_err(|e| CliError::data(format!("model file: {e}")))?;
        ModelFile::new(model, labels, meta)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
