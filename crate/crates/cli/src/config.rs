use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::{CliError, CliResult};

/// Resolves a configuration as flags over file over defaults.
///
/// `flags` holds only the values given on the command line; nested objects
/// are merged key by key, everything else is replaced.
pub fn resolve<C>(file: Option<&Path>, flags: Value) -> CliResult<C>
where
    C: Default + Serialize + DeserializeOwned,
{
    let mut merged = serde_json::to_value(C::default()).expect("defaults serialize");
    if let Some(path) = file {
        merge(&mut merged, load_file(path)?);
    }
    merge(&mut merged, flags);
    serde_json::from_value(merged).map_err(|e| CliError::Config(e.to_string()))
}

/// Reads a config file. A report or manifest can be passed directly: if
/// the document has a top-level `config` object, that object is used.
pub fn load_file(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| featdistill::Error::io(path, e))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|source| featdistill::Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(inner) = doc.get_mut("config").filter(|c| c.is_object()) {
        doc = inner.take();
    }
    if !doc.is_object() {
        return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
    }
    Ok(doc)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Flag values as a JSON object, plus `seed` when given.
pub fn flag_object<F: Serialize>(flags: &F, seed: Option<u64>) -> Value {
    let mut v = serde_json::to_value(flags).expect("flags serialize");
    if let (Some(s), Value::Object(m)) = (seed, &mut v) {
        m.insert("seed".into(), s.into());
    }
    v
}
