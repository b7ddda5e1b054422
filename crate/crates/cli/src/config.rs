//! Pipeline config: one TOML file plus `--set key.path=value` overrides.

use std::path::Path;

use granula_core::pipeline::PipelineConfig;

pub const SCHEMA_HELP: &str = "\
config sections: [dynamics] [flowgen] [scalebar] [filter] [report], plus top-level `threads`.
run `granula --dump-config` to print every key with its current value.";

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}\n{}", self.0, SCHEMA_HELP)
    }
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| ConfigError(format!("empty key in override '{key}'")))?;
    let mut table = root;
    for p in parts {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| ConfigError(format!("'{p}' in '{key}' is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Parses the right-hand side as a TOML value, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}")).ok().and_then(|mut t| t.remove("v")).unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig, ConfigError> {
    let mut table = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| ConfigError(format!("override '{o}' is not key=value")))?;
        set_path(&mut table, k.trim(), parse_value(v.trim()))?;
    }
    let cfg: PipelineConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
    cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
    Ok(cfg)
}

pub fn dump(cfg: &PipelineConfig) -> String {
    toml::to_string_pretty(cfg).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = load(None, &["dynamics.step_size=0.5".into(), "filter.diameter_min=3.5".into(), "filter.unit=\"nm\"".into(), "threads=3".into(), "report.binning={width=2.5}".into()]).unwrap();
        assert_eq!(cfg.dynamics.step_size, 0.5);
        assert_eq!(cfg.threads, Some(3));
        let path = dir.path().join("c.toml");
        std::fs::write(&path, dump(&cfg)).unwrap();
        assert_eq!(load(Some(&path), &[]).unwrap(), cfg);
        let default = PipelineConfig::default();
        std::fs::write(&path, dump(&default)).unwrap();
        assert_eq!(load(Some(&path), &[]).unwrap(), default);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(load(None, &["dynamics.stepsize=1".into()]).is_err());
        assert!(load(None, &["bogus=1".into()]).is_err());
        assert!(load(None, &["threads=0".into()]).is_err());
        assert!(load(None, &["noequals".into()]).is_err());
    }
}
