//! Optional run configuration file: a JSON object whose keys are long flag
//! names. File values act as defaults; flags given on the command line win.

use std::collections::HashSet;

/// Expand `--config FILE` into synthetic argv entries for every key that the
/// real command line does not already set.
pub fn merge_config_file(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut config_path = None;
    let mut out: Vec<String> = Vec::with_capacity(argv.len());
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        if arg == "--config" {
            config_path = Some(
                it.next()
                    .ok_or_else(|| "--config needs a file path".to_string())?,
            );
        } else if let Some(path) = arg.strip_prefix("--config=") {
            config_path = Some(path.to_string());
        } else {
            out.push(arg);
        }
    }
    let Some(path) = config_path else {
        return Ok(out);
    };

    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config file {path}: {e}"))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("bad config file {path}: {e}"))?;
    let obj = value
        .as_object()
        .ok_or_else(|| format!("config file {path} must hold a JSON object"))?;

    let given: HashSet<String> = out
        .iter()
        .filter_map(|a| {
            a.strip_prefix("--")
                .map(|s| s.split('=').next().unwrap_or(s).to_string())
        })
        .collect();

    for (key, val) in obj {
        if given.contains(key) {
            continue;
        }
        let flag = format!("--{key}");
        match val {
            serde_json::Value::Bool(true) => out.push(flag),
            serde_json::Value::Bool(false) => {}
            serde_json::Value::Array(items) => {
                for item in items {
                    out.push(flag.clone());
                    out.push(scalar_to_string(item)?);
                }
            }
            other => {
                out.push(flag);
                out.push(scalar_to_string(other)?);
            }
        }
    }
    Ok(out)
}

fn scalar_to_string(v: &serde_json::Value) -> Result<String, String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(format!("unsupported config value {other}")),
    }
}
