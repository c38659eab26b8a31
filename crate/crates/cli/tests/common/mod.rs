#![allow(dead_code)]

use serde_json::Value;
use std::sync::LazyLock;

static SCHEMA: LazyLock<Value> = LazyLock::new(|| {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/schemas/npcolor.schema.json")).unwrap();
    serde_json::from_str(&text).unwrap()
});

/// Panics with every violation when `value` does not match `$defs/<def>`.
pub fn assert_schema(def: &str, value: &Value) {
    let mut schema = SCHEMA.clone();
    assert!(schema["$defs"].get(def).is_some(), "no schema definition {def}");
    schema["$ref"] = Value::String(format!("#/$defs/{def}"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{def}: {errors:#?}");
}
