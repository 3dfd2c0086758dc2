//! TOML experiment files: `[environment]`, `[policy.<name>]`, `[run]`, `[output]`.
//!
//! A policy section picks its algorithm with `kind`; when `kind` is absent the
//! section name itself must be a kind (`[policy.ts_sa]`). Omitted fields take
//! the policy defaults. Unknown keys are errors that name the full key path.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::harness::{EnvironmentSpec, ExperimentSpec, OutputSpec, RunSettings};
use crate::policy::{
    EpsTsConfig, PolicyConfig, TsConfig, TsSaConfig, TsSgldConfig, UcbConfig, UniformConfig,
};

const SECTIONS: [&str; 4] = ["environment", "policy", "run", "output"];

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentSpec> {
    let table: Table = text.parse()?;
    spec_from_table(&table)
}

/// Builds and validates a spec from an already parsed document.
pub fn spec_from_table(table: &Table) -> Result<ExperimentSpec> {
    if let Some(key) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(Error::config(key.as_str(), "unknown section"));
    }
    let environment = match table.get("environment") {
        Some(v) => section::<EnvironmentSpec>("environment", v)?,
        None => return Err(Error::config("environment", "missing section")),
    };
    let run = match table.get("run") {
        Some(v) => section::<RunSettings>("run", v)?,
        None => RunSettings::default(),
    };
    let output = match table.get("output") {
        Some(v) => section::<OutputSpec>("output", v)?,
        None => OutputSpec::default(),
    };
    let policies = match table.get("policy") {
        Some(Value::Table(t)) => t
            .iter()
            .map(|(name, v)| Ok((name.clone(), policy_section(name, v)?)))
            .collect::<Result<Vec<_>>>()?,
        Some(_) => {
            return Err(Error::config(
                "policy",
                "expected a table of named policies",
            ))
        }
        None => return Err(Error::config("policy", "missing section")),
    };
    let spec = ExperimentSpec {
        environment,
        policies,
        run,
        output,
    };
    spec.validate()?;
    Ok(spec)
}

fn known_keys<T: Serialize + Default>() -> Vec<String> {
    match Value::try_from(T::default()) {
        Ok(Value::Table(t)) => t.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn section<T: DeserializeOwned + Serialize + Default>(path: &str, value: &Value) -> Result<T> {
    let Value::Table(t) = value else {
        return Err(Error::config(path, "expected a table"));
    };
    let known = known_keys::<T>();
    let mut known_aliases = known.clone();
    if path == "run" {
        known_aliases.push("T".into());
    }
    if let Some(k) = t.keys().find(|k| !known_aliases.contains(k)) {
        return Err(Error::config(
            format!("{path}.{k}"),
            format!("unknown key; expected one of: {}", known.join(", ")),
        ));
    }
    // deserialize key by key so type errors carry the key path
    for (k, v) in t {
        let mut single = Table::new();
        single.insert(k.clone(), v.clone());
        Value::Table(single)
            .try_into::<T>()
            .map_err(|e| Error::config(format!("{path}.{k}"), e.message().to_string()))?;
    }
    value
        .clone()
        .try_into::<T>()
        .map_err(|e| Error::config(path, e.message().to_string()))
}

fn policy_section(name: &str, value: &Value) -> Result<PolicyConfig> {
    let path = format!("policy.{name}");
    let Value::Table(t) = value else {
        return Err(Error::config(path, "expected a table"));
    };
    let kind = match t.get("kind") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(Error::config(format!("{path}.kind"), "must be a string")),
        None if PolicyConfig::KINDS.contains(&name) => name.to_string(),
        None => {
            return Err(Error::config(
                format!("{path}.kind"),
                format!(
                    "missing; expected one of: {}",
                    PolicyConfig::KINDS.join(", ")
                ),
            ))
        }
    };
    let mut body = t.clone();
    body.remove("kind");
    let body = Value::Table(body);
    Ok(match kind.as_str() {
        "ts_sa" => PolicyConfig::TsSa(section::<TsSaConfig>(&path, &body)?),
        "ts_sgld" => PolicyConfig::TsSgld(section::<TsSgldConfig>(&path, &body)?),
        "ts" => PolicyConfig::Ts(section::<TsConfig>(&path, &body)?),
        "eps_ts" => PolicyConfig::EpsTs(section::<EpsTsConfig>(&path, &body)?),
        "ucb" => PolicyConfig::Ucb(section::<UcbConfig>(&path, &body)?),
        "uniform" => PolicyConfig::Uniform(section::<UniformConfig>(&path, &body)?),
        other => {
            return Err(Error::config(
                format!("{path}.kind"),
                format!(
                    "unknown kind `{other}`; expected one of: {}",
                    PolicyConfig::KINDS.join(", ")
                ),
            ))
        }
    })
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Value::try_from(v).map_err(|e| Error::Runtime(format!("serializing config: {e}")))
}

/// The spec as a document; every field is written out explicitly.
pub fn to_table(spec: &ExperimentSpec) -> Result<Table> {
    let mut policies = Table::new();
    for (name, cfg) in &spec.policies {
        policies.insert(name.clone(), to_value(cfg)?);
    }
    let mut doc = Table::new();
    doc.insert("environment".into(), to_value(&spec.environment)?);
    doc.insert("policy".into(), Value::Table(policies));
    doc.insert("run".into(), to_value(&spec.run)?);
    doc.insert("output".into(), to_value(&spec.output)?);
    Ok(doc)
}

pub fn to_toml_string(spec: &ExperimentSpec) -> Result<String> {
    toml::to_string(&to_table(spec)?)
        .map_err(|e| Error::Runtime(format!("serializing config: {e}")))
}

/// Overwrites the dotted `key` (e.g. `policy.ts_sa.h`, `run.horizon`) with
/// `raw`, which is read as a TOML value; bare words fall back to strings.
pub fn set_key_path(doc: &mut Table, key: &str, raw: &str) -> Result<()> {
    let value = parse_scalar(raw);
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "malformed key path"));
    }
    let (leaf, parents) = parts.split_last().expect("split yields at least one part");
    let mut cursor = doc;
    for p in parents {
        cursor = match cursor
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
        {
            Value::Table(t) => t,
            _ => return Err(Error::config(key, format!("`{p}` is not a table"))),
        };
    }
    cursor.insert(leaf.to_string(), value);
    Ok(())
}

fn parse_scalar(raw: &str) -> Value {
    let raw = raw.trim();
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvironmentKind;
    use crate::policy::InitMode;

    const MINIMAL: &str = "[environment]\nkind = \"sgr\"\n\n[policy.ts_sa]\n";

    fn key_of(r: Result<ExperimentSpec>) -> String {
        match r {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_ts_sa_section_gets_defaults() {
        let spec = parse_config_str(MINIMAL).unwrap();
        let PolicyConfig::TsSa(c) = spec.policy("ts_sa").unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(c.inner_iters, 1);
        assert_eq!(c.h, 0.532);
        assert_eq!(c.c1, 144.07);
        assert_eq!(c.c2, 677.88);
        assert_eq!(c.c3, 40.02);
        assert_eq!(c.alpha, 0.999);
        assert_eq!(c.batch_cap, 27);
        assert_eq!(c.warmup, 19);
        assert_eq!(c.init, InitMode::WarmupMean);
        assert_eq!(spec.run, RunSettings::default());
    }

    #[test]
    fn rejects_invalid_documents() {
        let with_run = |run: &str| parse_config_str(&format!("{MINIMAL}\n[run]\n{run}\n"));
        assert_eq!(key_of(with_run("trials = 0")), "run.trials");
        assert_eq!(key_of(with_run("horizon = 5")), "run.horizon");
        assert_eq!(key_of(with_run("horizn = 5")), "run.horizn");
        assert_eq!(key_of(with_run("trials = \"many\"")), "run.trials");
        assert_eq!(
            key_of(parse_config_str(
                "[environment]\n[policy.a]\nkind = \"ts_sa\"\nbatch = 3\n"
            )),
            "policy.a.batch"
        );
        assert_eq!(
            key_of(parse_config_str("[environment]\n[policy.mine]\n")),
            "policy.mine.kind"
        );
        assert_eq!(
            key_of(parse_config_str(
                "[environment]\n[policy.a]\nkind = \"thompson\"\n"
            )),
            "policy.a.kind"
        );
        assert_eq!(key_of(parse_config_str("[policy.ts]\n")), "environment");
        assert_eq!(key_of(parse_config_str("[environment]\n")), "policy");
        assert_eq!(
            key_of(parse_config_str("[environment]\n[policy.ts]\n[extra]\n")),
            "extra"
        );
        assert_eq!(
            key_of(parse_config_str("[environment]\ngap = -1.0\n[policy.ts]\n")),
            "environment.gap"
        );
        assert_eq!(
            key_of(parse_config_str("[environment]\n[policy.ts_sa]\nh = 0.0\n")),
            "policy.ts_sa.h"
        );
    }

    #[test]
    fn duplicate_policy_names_are_rejected() {
        // TOML itself forbids redefining a table
        let doc = "[environment]\n[policy.ts]\n[policy.ts]\n";
        assert!(matches!(parse_config_str(doc), Err(Error::Toml(_))));
    }

    #[test]
    fn horizon_alias() {
        let spec = parse_config_str(&format!("{MINIMAL}[run]\nT = 777\n")).unwrap();
        assert_eq!(spec.run.horizon, 777);
    }

    #[test]
    fn round_trip_is_a_fixed_point() {
        let doc = r#"
[environment]
kind = "mgr"
arms = 5
gap = 0.1
mu1 = 2.5

[policy.fast]
kind = "ts_sa"
h = 4.7
tau = 0.3
init = "prior"
sa_mode = "inverse_horizon"

[policy.ts_sgld]
sgld_batch = 8

[policy.ts]
[policy.eps_ts]
epsilon = 0.05
[policy.ucb]
tau = 2.0
[policy.uniform]

[run]
horizon = 1234
trials = 3
base_seed = 99
record_stride = 7
crn = true

[output]
directory = "out"
csv = "x_{seed}.csv"
"#;
        let spec = parse_config_str(doc).unwrap();
        assert_eq!(spec.environment.kind, EnvironmentKind::Mgr);
        assert_eq!(
            spec.policies
                .iter()
                .map(|(n, _)| n.as_str())
                .collect::<Vec<_>>(),
            ["fast", "ts_sgld", "ts", "eps_ts", "ucb", "uniform"]
        );
        let text = to_toml_string(&spec).unwrap();
        let again = parse_config_str(&text).unwrap();
        assert_eq!(again, spec);
        assert_eq!(to_toml_string(&again).unwrap(), text);
    }

    #[test]
    fn set_key_path_edits_values() {
        let mut doc: Table = MINIMAL.parse().unwrap();
        set_key_path(&mut doc, "policy.ts_sa.h", "0.25").unwrap();
        set_key_path(&mut doc, "run.horizon", "500").unwrap();
        set_key_path(&mut doc, "environment.kind", "mgr").unwrap();
        let spec = spec_from_table(&doc).unwrap();
        assert_eq!(spec.run.horizon, 500);
        assert_eq!(spec.environment.kind, EnvironmentKind::Mgr);
        match spec.policy("ts_sa").unwrap() {
            PolicyConfig::TsSa(c) => assert_eq!(c.h, 0.25),
            _ => unreachable!(),
        }
        assert!(set_key_path(&mut doc, "environment.kind.x", "1").is_err());
        assert!(set_key_path(&mut doc, "run..x", "1").is_err());
    }
}
