//! Rendering of reports.

use serde_json::Value;

use crate::jobs::Report;

pub fn to_json(r: &Report) -> String {
    serde_json::to_string_pretty(r).expect("report serializes")
}

/// Indented `key: value` lines.
pub fn to_text(r: &Report) -> String {
    let mut s = String::new();
    render(
        &serde_json::to_value(r).expect("report serializes"),
        0,
        &mut s,
    );
    s
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(t) => Some(t.clone()),
        Value::Array(a) if a.is_empty() => Some("[]".into()),
        Value::Array(a) if a.iter().all(|x| matches!(x, Value::Number(_))) => Some(format!(
            "[{}]",
            a.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )),
        Value::Object(o) if o.is_empty() => Some("{}".into()),
        _ => None,
    }
}

fn render(v: &Value, depth: usize, s: &mut String) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(o) => {
            for (k, x) in o {
                match scalar(x) {
                    Some(t) => s.push_str(&format!("{pad}{k}: {t}\n")),
                    None => {
                        s.push_str(&format!("{pad}{k}:\n"));
                        render(x, depth + 1, s);
                    }
                }
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                match scalar(x) {
                    Some(t) => s.push_str(&format!("{pad}[{i}] {t}\n")),
                    None => {
                        s.push_str(&format!("{pad}[{i}]\n"));
                        render(x, depth + 1, s);
                    }
                }
            }
        }
        other => s.push_str(&format!("{pad}{}\n", scalar(other).unwrap_or_default())),
    }
}
