//! Layered run configuration: defaults, then a TOML file, then flags, then
//! `--set key=value` overrides. The resolved value is what gets dumped.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fmt;
use std::path::{Path, PathBuf};
use toml::{Table, Value};

/// Mistakes in the invocation itself; mapped to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// `3` → integer, `true` → bool, `[1, 2]` → array, anything unparsable is
/// taken as a string.
pub fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn parse_override(raw: &str) -> anyhow::Result<(String, Value)> {
    let (k, v) = raw
        .split_once('=')
        .ok_or_else(|| usage(format!("override {raw:?} is not of the form key=value")))?;
    let k = k.trim();
    if k.is_empty() || k.split('.').any(str::is_empty) {
        return Err(usage(format!("override {raw:?} has an empty key segment")));
    }
    Ok((k.to_string(), parse_value(v.trim())))
}

pub fn set_path(table: &mut Table, key: &str, value: Value) -> anyhow::Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for (i, p) in parts.iter().enumerate() {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| usage(format!("{} is not a table", parts[..=i].join("."))))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Dotted paths of every leaf in `t`.
fn leaves(t: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in t {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(sub) if !sub.is_empty() => leaves(sub, &path, out),
            _ => out.push(path),
        }
    }
}

fn lookup<'a>(t: &'a Table, path: &str) -> Option<&'a Value> {
    let mut parts = path.split('.');
    let mut v = t.get(parts.next()?)?;
    for p in parts {
        v = v.as_table()?.get(p)?;
    }
    Some(v)
}

pub fn read_table(path: &Path) -> anyhow::Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("reading config {}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| usage(format!("config {}: {}", path.display(), e.message())))
}

/// Resolve a configuration. Every key supplied by the file, a flag or an
/// override must survive the round trip through `T`, so misspelt keys are
/// rejected even inside nested library types.
pub fn resolve<T>(file: Option<&Path>, flags: Vec<(String, Value)>, overrides: &[String]) -> anyhow::Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut table = Table::try_from(T::default())?;
    let mut user = Table::new();
    if let Some(f) = file {
        user = read_table(f)?;
    }
    for (k, v) in flags {
        set_path(&mut user, &k, v)?;
    }
    for raw in overrides {
        let (k, v) = parse_override(raw)?;
        set_path(&mut user, &k, v)?;
    }
    let mut supplied = Vec::new();
    leaves(&user, "", &mut supplied);
    merge(&mut table, user);
    let cfg: T = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| usage(format!("invalid configuration: {}", e.message())))?;
    let back = Table::try_from(&cfg)?;
    if let Some(bad) = supplied.iter().find(|k| lookup(&back, k).is_none()) {
        return Err(usage(format!("unknown configuration key {bad:?}")));
    }
    Ok(cfg)
}

/// Relative paths are made absolute so a dumped config replays from any
/// working directory.
pub fn absolutize(p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        if let Ok(cwd) = std::env::current_dir() {
            *p = cwd.join(&*p);
        }
    }
}

pub fn absolutize_opt(p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        absolutize(p);
    }
}

pub const EFFECTIVE_CONFIG: &str = "effective-config.toml";
pub const RUN_METADATA: &str = "run-metadata.json";

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'a str,
    version: &'a str,
    checkpoint_format: u32,
    subcommand: &'a str,
    effective_config: &'a str,
}

/// Write `effective-config.toml` and `run-metadata.json` into `out`.
pub fn dump<T: Serialize>(out: &Path, subcommand: &str, cfg: &T) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(EFFECTIVE_CONFIG), toml::to_string_pretty(cfg)?)?;
    let meta = Metadata {
        tool: "endodepth",
        version: env!("CARGO_PKG_VERSION"),
        checkpoint_format: endodepth::networks::FORMAT_VERSION,
        subcommand,
        effective_config: EFFECTIVE_CONFIG,
    };
    std::fs::write(out.join(RUN_METADATA), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
