//! Experiment configuration: a strict TOML file plus environment overrides.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qa_ensemble::agents::AgentConfig;
use qa_ensemble::arbitration::{ArbitrationKind, ArbitrationStrategy, Rounding};
use qa_ensemble::engine::accounting::AccountingParams;
use qa_ensemble::evalsim::{IrrDenominator, ScorerModel};
use qa_ensemble::http::EndpointConfig;
use qa_ensemble::planning::{Environment, IntentRulePackConfig};
use qa_ensemble::retrieval::DEFAULT_DIM;
use qa_ensemble::scoring::ScorerConfig;
use qa_ensemble::sla::{compose_named_sla, CompositeSla, Slo};

/// Prefix of environment variables that override config keys, e.g.
/// `QA_ENSEMBLE__SEED=7` or `QA_ENSEMBLE__AGENTS__0__COST_PER_CALL=2`.
pub const ENV_PREFIX: &str = "QA_ENSEMBLE__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    #[serde(default)]
    pub threads: usize,
    pub dataset_path: Option<PathBuf>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub stores: BTreeMap<String, PathBuf>,
    pub sla: SlaSection,
    pub environment: Option<EnvironmentSection>,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    pub agents: Vec<AgentConfig>,
    #[serde(default = "default_arbitration")]
    pub arbitration: ArbitrationStrategy,
    pub planner: Option<PlannerSection>,
    #[serde(default)]
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub accounting: AccountingParams,
    pub intent_rules: Option<IntentRulePackConfig>,
    #[serde(default)]
    pub simulate: SimulateSection,
    pub reasoner_http: Option<EndpointConfig>,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_trials() -> u64 {
    100_000
}

fn default_arbitration() -> ArbitrationStrategy {
    ArbitrationStrategy::new(ArbitrationKind::RandomWithThreshold, 0.5, Rounding::Floor)
        .expect("valid default")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlaSection {
    #[serde(default = "default_sla_name")]
    pub name: String,
    /// Objectives written as `attribute<=target` or `attribute>=target`.
    pub objectives: Vec<String>,
}

fn default_sla_name() -> String {
    "default".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    /// Defaults to every configured store.
    pub available_stores: Option<BTreeSet<String>>,
    #[serde(default = "yes")]
    pub external_api_up: bool,
    #[serde(default = "yes")]
    pub local_model_available: bool,
    #[serde(default = "one")]
    pub cost_multiplier: f64,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalSection {
    #[serde(default = "default_top_k")]
    pub top_k_per_vertical: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_top_k() -> usize {
    5
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            top_k_per_vertical: default_top_k(),
            dim: default_dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    pub ensembles: Vec<Vec<String>>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_kinds")]
    pub arbitration_kinds: Vec<ArbitrationKind>,
    #[serde(default)]
    pub rounding: Rounding,
    pub calibration_path: Option<PathBuf>,
    /// Monte Carlo trials for ensembles missing from the calibration
    /// table; omit to disable the fallback.
    pub fallback_trials: Option<u64>,
}

fn default_thresholds() -> Vec<f64> {
    vec![0.5]
}

fn default_kinds() -> Vec<ArbitrationKind> {
    ArbitrationKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Agent ids whose profiles form the simulated ensemble; all agents by default.
    pub agents: Option<Vec<String>>,
    #[serde(default)]
    pub scorer_model: ScorerModel,
    #[serde(default = "one")]
    pub p_global_context: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            agents: None,
            scorer_model: ScorerModel::Uniform,
            p_global_context: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default)]
    pub irr_denominator: IrrDenominator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: Format,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out(),
            format: Format::Csv,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// A parsed, validated configuration and the hash of its effective text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
    /// Directory relative paths in the file are resolved against.
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

/// Reads `path`, applies `overrides` (as `(KEY__PATH, value)` pairs with the
/// prefix already stripped), then parses and validates.
pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError(format!("{}: {e}", path.display())))?;
    for (key, value) in overrides {
        apply_override(&mut table, key, value)?;
    }
    let canonical = serde_json::to_string(&table).expect("toml tables serialise");
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    let config: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError(format!("{}: {e}", path.display())))?;
    validate(&config)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig {
        config,
        hash,
        base_dir,
    })
}

/// `QA_ENSEMBLE__`-prefixed variables from the process environment, sorted.
pub fn env_overrides() -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = std::env::vars()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_string(), v)))
        .collect();
    v.sort();
    v
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets the value at a `__`-separated key path. Numeric segments index
/// arrays; missing tables are created.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let segments: Vec<String> = key.split("__").map(str::to_lowercase).collect();
    if segments.iter().any(String::is_empty) {
        return err(format!("override `{key}`: empty key segment"));
    }
    let value = parse_value(raw);
    let (first, rest) = segments.split_first().expect("at least one segment");
    let Some((last, middle)) = rest.split_last() else {
        table.insert(first.clone(), value);
        return Ok(());
    };
    let mut cursor = table
        .entry(first.clone())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    for seg in middle {
        cursor = step(cursor, seg, key)?;
    }
    match cursor {
        toml::Value::Table(t) => {
            t.insert(last.clone(), value);
        }
        toml::Value::Array(a) => {
            let i = index(last, a.len(), key)?;
            a[i] = value;
        }
        _ => {
            return err(format!(
                "override `{key}`: `{last}` is not inside a table or array"
            ))
        }
    }
    Ok(())
}

fn step<'a>(
    cursor: &'a mut toml::Value,
    seg: &str,
    key: &str,
) -> Result<&'a mut toml::Value, ConfigError> {
    match cursor {
        toml::Value::Table(t) => Ok(t
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))),
        toml::Value::Array(a) => {
            let i = index(seg, a.len(), key)?;
            Ok(&mut a[i])
        }
        _ => err(format!("override `{key}`: `{seg}` is not a table")),
    }
}

fn index(seg: &str, len: usize, key: &str) -> Result<usize, ConfigError> {
    match seg.parse::<usize>() {
        Ok(i) if i < len => Ok(i),
        _ => err(format!(
            "override `{key}`: `{seg}` is not an index below {len}"
        )),
    }
}

fn validate(c: &ExperimentConfig) -> Result<(), ConfigError> {
    if c.agents.is_empty() {
        return err("agents: at least one agent is required");
    }
    let mut ids = BTreeSet::new();
    for (i, a) in c.agents.iter().enumerate() {
        if let Err((field, msg)) = a.validate() {
            return err(format!("agents[{i}].{field}: {msg}"));
        }
        if !ids.insert(a.agent_id.as_str()) {
            return err(format!(
                "agents[{i}].agent_id: duplicate id `{}`",
                a.agent_id
            ));
        }
    }
    if let Err((field, msg)) = c.accounting.validate() {
        return err(format!("accounting.{field}: {msg}"));
    }
    if c.trials == 0 {
        return err("trials: must be at least 1");
    }
    if c.retrieval.top_k_per_vertical == 0 {
        return err("retrieval.top_k_per_vertical: must be at least 1");
    }
    sla(c)?;
    if let Some(env) = &c.environment {
        if !(env.cost_multiplier.is_finite() && env.cost_multiplier >= 0.0) {
            return err(format!(
                "environment.cost_multiplier: must be >= 0, got {}",
                env.cost_multiplier
            ));
        }
    }
    if let Some(p) = &c.planner {
        for (i, e) in p.ensembles.iter().enumerate() {
            if let Some(id) = e.iter().find(|id| !ids.contains(id.as_str())) {
                return err(format!("planner.ensembles[{i}]: unknown agent `{id}`"));
            }
        }
        if let Some(t) = p.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return err(format!("planner.thresholds: {t} is outside [0, 1]"));
        }
        if p.fallback_trials == Some(0) {
            return err("planner.fallback_trials: must be at least 1");
        }
    }
    if let Some(list) = &c.simulate.agents {
        if let Some(id) = list.iter().find(|id| !ids.contains(id.as_str())) {
            return err(format!("simulate.agents: unknown agent `{id}`"));
        }
    }
    if !(0.0..=1.0).contains(&c.simulate.p_global_context) {
        return err(format!(
            "simulate.p_global_context: {} is outside [0, 1]",
            c.simulate.p_global_context
        ));
    }
    Ok(())
}

/// The composite SLA declared in `[sla]`.
pub fn sla(c: &ExperimentConfig) -> Result<CompositeSla, ConfigError> {
    parse_sla(&c.sla.name, &c.sla.objectives)
        .map_err(|e| ConfigError(format!("sla.objectives: {e}")))
}

pub fn parse_sla(name: &str, objectives: &[String]) -> Result<CompositeSla, String> {
    let slos = objectives
        .iter()
        .map(|o| o.parse::<Slo>().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    compose_named_sla(name, slos).map_err(|e| e.to_string())
}

pub fn environment(c: &ExperimentConfig) -> Environment {
    let all: BTreeSet<String> = c.stores.keys().cloned().collect();
    match &c.environment {
        None => Environment::new(all),
        Some(e) => Environment {
            available_stores: e.available_stores.clone().unwrap_or(all),
            external_api_up: e.external_api_up,
            local_model_available: e.local_model_available,
            cost_multiplier: e.cost_multiplier,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> toml::Table {
        text.parse().unwrap()
    }

    #[test]
    fn scalar_and_nested_overrides() {
        let mut t = table("seed = 1\n[sla]\nobjectives = []\n");
        apply_override(&mut t, "SEED", "9").unwrap();
        apply_override(&mut t, "SLA__NAME", "gold").unwrap();
        apply_override(&mut t, "OUTPUT__FORMAT", "json").unwrap();
        assert_eq!(t["seed"].as_integer(), Some(9));
        assert_eq!(t["sla"]["name"].as_str(), Some("gold"));
        assert_eq!(t["output"]["format"].as_str(), Some("json"));
    }

    #[test]
    fn array_overrides() {
        let mut t = table("[[agents]]\ncost_per_call = 1.0\n[sla]\nobjectives = [\"f1>=0.5\"]\n");
        apply_override(&mut t, "AGENTS__0__COST_PER_CALL", "2.5").unwrap();
        apply_override(
            &mut t,
            "SLA__OBJECTIVES",
            r#"["precision>=0.7", "recall>=0.6"]"#,
        )
        .unwrap();
        assert_eq!(t["agents"][0]["cost_per_call"].as_float(), Some(2.5));
        assert_eq!(t["sla"]["objectives"].as_array().unwrap().len(), 2);
        assert!(apply_override(&mut t, "AGENTS__3__COST_PER_CALL", "1").is_err());
        assert!(apply_override(&mut t, "SEED____X", "1").is_err());
    }

    #[test]
    fn unparseable_values_become_strings() {
        assert_eq!(
            parse_value("hello world"),
            toml::Value::String("hello world".into())
        );
        assert_eq!(parse_value("true"), toml::Value::Boolean(true));
        assert_eq!(parse_value("0.25"), toml::Value::Float(0.25));
    }

    #[test]
    fn sla_strings() {
        let sla = parse_sla(
            "x",
            &["hallucination_rate<=0.23".into(), "precision>=0.6".into()],
        )
        .unwrap();
        assert_eq!(sla.slos.len(), 2);
        assert!(parse_sla("x", &["precision<=0.6".into()]).is_err());
        assert!(parse_sla("x", &[]).is_err());
    }
}
