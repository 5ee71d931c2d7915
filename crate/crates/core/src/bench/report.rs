use std::fmt::Write;

use serde_json::Value;

use super::EvalReport;

/// Pretty JSON with sorted object keys and every non-integer number printed
/// with exactly four decimals, so equal reports are equal byte strings.
pub fn to_canonical_json(report: &EvalReport) -> String {
    let value = serde_json::to_value(report).expect("report is plain data");
    let mut out = String::new();
    write_value(&mut out, &value, 0);
    out.push('\n');
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, v: &Value, level: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => write!(out, "{u}").unwrap(),
            (None, Some(i), _) => write!(out, "{i}").unwrap(),
            (None, None, Some(f)) => {
                let s = format!("{f:.4}");
                out.push_str(if s == "-0.0000" { "0.0000" } else { &s });
            }
            _ => unreachable!("serde_json numbers are u64, i64 or f64"),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(out, level + 1);
                write_value(out, item, level + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                indent(out, level + 1);
                out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                out.push_str(": ");
                write_value(out, &map[*k], level + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_get_four_decimals_and_keys_sort() {
        let mut out = String::new();
        write_value(&mut out, &json!({"b": 2.0/3.0, "a": [1, -0.0, 0.5]}), 0);
        assert_eq!(
            out,
            "{\n  \"a\": [\n    1,\n    0.0000,\n    0.5000\n  ],\n  \"b\": 0.6667\n}"
        );
    }
}
