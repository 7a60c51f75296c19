//! Session configs from loosely typed JSON, with per-field errors.

use infogain_core::controller::{FieldError, SessionConfig, StrategyKind};
use infogain_core::types::QuestionKind;
use serde_json::{Map, Value};

fn field(field: &str, message: impl Into<String>) -> FieldError {
    FieldError { field: field.into(), message: message.into() }
}

/// Builds a config from a JSON object: `strategy` and `kind` pick the
/// preset (20-questions for binary, preference for multiple choice), and
/// any other recognised field overrides it.
pub fn parse_session_config(body: &Value) -> Result<SessionConfig, Vec<FieldError>> {
    let empty = Map::new();
    let obj = match body {
        Value::Object(o) => o,
        Value::Null => &empty,
        _ => return Err(vec![field("body", "expected a JSON object")]),
    };
    let mut errors = Vec::new();
    let strategy = match obj.get("strategy") {
        None => StrategyKind::Eig,
        Some(Value::String(s)) => s.parse().unwrap_or_else(|e: String| {
            errors.push(field("strategy", e));
            StrategyKind::Eig
        }),
        Some(_) => {
            errors.push(field("strategy", "expected a string"));
            StrategyKind::Eig
        }
    };
    let kind = match obj.get("kind") {
        None => QuestionKind::Binary,
        Some(v) => serde_json::from_value(v.clone()).unwrap_or_else(|_| {
            errors.push(field("kind", "expected \"binary\" or \"multiple_choice\""));
            QuestionKind::Binary
        }),
    };
    let preset = match kind {
        QuestionKind::Binary => SessionConfig::twenty_questions(strategy),
        QuestionKind::MultipleChoice => SessionConfig::preference(strategy),
    };
    let mut merged = serde_json::to_value(&preset).expect("config serializes");
    for (key, value) in obj {
        if key == "strategy" || key == "kind" {
            continue;
        }
        let Some(slot) = merged.get(key).cloned() else {
            errors.push(field(key, "unknown field"));
            continue;
        };
        merged[key] = value.clone();
        if let Err(e) = serde_json::from_value::<SessionConfig>(merged.clone()) {
            errors.push(field(key, e.to_string()));
            merged[key] = slot;
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let cfg: SessionConfig = serde_json::from_value(merged).map_err(|e| vec![field("body", e.to_string())])?;
    cfg.validate().map_err(|e| e.fields)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn presets_and_overrides() {
        let c = parse_session_config(&json!({"strategy": "entropy", "budget": 7})).unwrap();
        assert_eq!((c.strategy, c.budget, c.candidates), (StrategyKind::Entropy, 7, 15));
        let c = parse_session_config(&json!({"kind": "multiple_choice"})).unwrap();
        assert_eq!((c.budget, c.candidates, c.guessing), (5, 8, false));
        assert_eq!(parse_session_config(&Value::Null).unwrap(), SessionConfig::twenty_questions(StrategyKind::Eig));
    }

    #[test]
    fn field_level_errors() {
        let e = parse_session_config(&json!({"strategy": "bogus", "budget": 0, "colour": 1})).unwrap_err();
        let fields: Vec<&str> = e.iter().map(|f| f.field.as_str()).collect();
        assert_eq!(fields, vec!["strategy", "colour"]);
        let e = parse_session_config(&json!({"budget": 0})).unwrap_err();
        assert_eq!(e[0].field, "budget");
        let e = parse_session_config(&json!({"budget": "ten"})).unwrap_err();
        assert_eq!(e[0].field, "budget");
    }
}
