//! Config-file merging and run capture.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::CliError;

/// Loads an optional JSON config file.
pub fn load_config(path: Option<&Path>) -> Result<Option<Value>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    if !value.is_object() {
        return Err(CliError::Usage("config must be a JSON object".into()));
    }
    Ok(Some(value))
}

fn normalize_keys(obj: &Map<String, Value>) -> Map<String, Value> {
    obj.iter()
        .map(|(k, v)| (k.replace('-', "_"), v.clone()))
        .collect()
}

/// Fills every unset (`None`) field of `args` from the config. Values under a
/// key named after the subcommand take precedence over top-level values;
/// explicit flags always win.
pub fn merge<T>(args: &T, config: Option<&Value>, section: &str) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned,
{
    let mut resolved = match serde_json::to_value(args) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("argument structs serialize to objects"),
    };
    if let Some(Value::Object(cfg)) = config {
        let top = normalize_keys(cfg);
        let scoped = match cfg.get(section) {
            Some(Value::Object(m)) => normalize_keys(m),
            _ => Map::new(),
        };
        for (key, slot) in resolved.iter_mut() {
            if slot.is_null() {
                if let Some(v) = scoped.get(key).or_else(|| top.get(key)) {
                    *slot = v.clone();
                }
            }
        }
    }
    serde_json::from_value(Value::Object(resolved))
        .map_err(|e| CliError::Usage(format!("invalid config value: {e}")))
}

pub fn run_json_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    out.with_file_name(name)
}

pub fn write_run_json<T: Serialize>(
    path: &Path,
    command: &str,
    resolved: &T,
    threads: Option<usize>,
) -> Result<(), CliError> {
    let run = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "engine": "vlscore",
        "threads": threads,
        "config": resolved,
    });
    write_text(path, &(serde_json::to_string_pretty(&run)? + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
