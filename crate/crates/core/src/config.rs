//! Run configurations. A configuration is a TOML document with top-level
//! keys `experiment`, `seed`, `workers` and `output`, and the sections
//! `[domain]`, `[coefficients]` and `[params]`. Unknown keys are rejected
//! everywhere, and the resolved form writes out every default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, DomainSpec};
use crate::montecarlo::{catalog_entry, resolve_params, run_experiment, RunOutput};
use crate::rsde::{CoefficientSpec, Coefficients};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientSpec>,
    #[serde(default)]
    pub params: toml::Table,
}

fn config_error(message: impl Into<String>) -> Error {
    Error::invalid("config", message)
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back
/// to a bare string.
fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `a.b.c=value` to a parsed document, creating tables as needed.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_error(format!("override `{assignment}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_error(format!("override key `{key}` is malformed")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::invalid(key.trim(), format!("`{part}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), override_value(raw.trim()));
    Ok(())
}

fn strip_nulls(v: serde_json::Value) -> Option<serde_json::Value> {
    use serde_json::Value;
    match v {
        Value::Null => None,
        Value::Array(a) => Some(Value::Array(a.into_iter().filter_map(strip_nulls).collect())),
        Value::Object(o) => Some(Value::Object(
            o.into_iter().filter_map(|(k, v)| strip_nulls(v).map(|v| (k, v))).collect(),
        )),
        other => Some(other),
    }
}

impl RunConfig {
    /// Parses a configuration and applies `key=value` overrides.
    pub fn parse(text: &str, overrides: &[String]) -> Result<RunConfig> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| config_error(e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        RunConfig::deserialize(toml::Value::Table(doc)).map_err(|e| config_error(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text, overrides)
    }

    pub fn params_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.params).expect("TOML table converts to JSON")
    }

    /// Validates everything and builds the model.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        let entry = catalog_entry(&self.experiment)
            .ok_or_else(|| resolve_params(&self.experiment, &serde_json::Value::Null).unwrap_err())?;
        if self.workers == Some(0) {
            return Err(Error::invalid("workers", "must be at least 1"));
        }
        let params = resolve_params(&self.experiment, &self.params_json())?;
        let domain = self.domain.as_ref().map(DomainSpec::build).transpose()?;
        let coeffs = self.coefficients.as_ref().map(CoefficientSpec::build).transpose()?;
        if entry.needs_model && (domain.is_none() || coeffs.is_none()) {
            let missing = if domain.is_none() { "domain" } else { "coefficients" };
            return Err(Error::invalid(
                missing,
                format!("experiment `{}` needs a [{missing}] section", self.experiment),
            ));
        }
        if let (Some(d), Some(c)) = (&domain, &coeffs) {
            if d.dim() != c.d {
                return Err(Error::invalid(
                    "coefficients.d",
                    format!("domain has dimension {}, coefficients act on dimension {}", d.dim(), c.d),
                ));
            }
        }
        let mut config = self.clone();
        config.coefficients = self.coefficients.as_ref().map(CoefficientSpec::materialized);
        config.params = match toml::Value::try_from(strip_nulls(params.clone()).expect("params is an object")) {
            Ok(toml::Value::Table(t)) => t,
            _ => return Err(config_error("resolved parameters do not form a table")),
        };
        Ok(ResolvedRun {
            config,
            params,
            domain,
            coeffs,
        })
    }
}

/// A validated configuration with its model built and defaults filled in.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub params: serde_json::Value,
    pub domain: Option<Domain>,
    pub coeffs: Option<Coefficients>,
}

impl ResolvedRun {
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.config).expect("configuration serializes")
    }

    /// Runs the experiment on the current rayon pool.
    pub fn run(&self) -> Result<RunOutput> {
        let model = self.domain.as_ref().zip(self.coeffs.as_ref());
        run_experiment(&self.config.experiment, &self.params, model, self.config.seed)
    }
}

/// Writes `report.json`, `estimates.csv`, `resolved_config.toml` and any
/// artifacts into `dir`.
pub fn write_outputs(dir: &Path, resolved: &ResolvedRun, out: &RunOutput) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), out.report.to_json())?;
    std::fs::write(dir.join("estimates.csv"), out.report.estimates_csv())?;
    std::fs::write(dir.join("resolved_config.toml"), resolved.to_toml())?;
    for (name, contents) in &out.artifacts {
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const WZ: &str = r#"
experiment = "wz_convergence"
seed = 11

[domain]
kind = "half_space"
params = { normal = [1.0], offset = 0.0 }

[coefficients]
sigma = "sin"
base = 0.5
slope = 0.25

[params]
x0 = [0.0]
"#;

    #[test]
    fn resolution_writes_out_defaults() {
        let r = RunConfig::parse(WZ, &[]).unwrap().resolve().unwrap();
        assert_eq!(r.params["levels"], serde_json::json!([4, 5, 6, 7, 8, 9]));
        let echoed = r.to_toml();
        assert!(echoed.contains("fine_level = 18"), "{echoed}");
        assert!(echoed.contains("matrix"));
        let again = RunConfig::parse(&echoed, &[]).unwrap().resolve().unwrap();
        assert_eq!(again.params, r.params);
        assert_eq!(again.to_toml(), echoed);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = RunConfig::parse(WZ, &["params.paths=17".into(), "seed=4".into(), "params.levels=[2,3]".into()]).unwrap();
        assert_eq!(c.seed, 4);
        let r = c.resolve().unwrap();
        assert_eq!(r.params["paths"], 17);
        assert_eq!(r.params["levels"], serde_json::json!([2, 3]));
        assert!(RunConfig::parse(WZ, &["nonsense".into()]).is_err());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::parse(&format!("{WZ}speed = 3\n"), &[]).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("speed"), "{err}");
        let err = RunConfig::parse(&WZ.replace("experiment", "experimnt"), &[]).unwrap_err();
        assert!(err.to_string().contains("experimnt"), "{err}");
    }

    #[test]
    fn missing_model_and_dimension_mismatch() {
        let text = "experiment = \"exp_tail\"\n[params]\nx0 = [0.0]\n";
        let err = RunConfig::parse(text, &[]).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("domain"), "{err}");
        let err = RunConfig::parse(WZ, &["coefficients.d=2".into()]).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("coefficients.d"), "{err}");
        let text = "experiment = \"smallball_and_levy\"\n";
        assert!(RunConfig::parse(text, &[]).unwrap().resolve().is_ok());
    }
}
