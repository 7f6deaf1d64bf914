//! Deterministic JSON report construction: every float is rendered with a
//! fixed 17-significant-digit format and keys keep insertion order, so
//! identical configs produce byte-identical artifacts.

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub enum Value {
    Bool(bool),
    /// Pre-formatted numeric literal.
    Number(String),
    String(String),
    Array(Vec<Value>),
    Object(Map),
}

#[derive(Debug, Clone, Default)]
pub struct Map {
    entries: Vec<(String, Value)>,
}

impl Map {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: Value) {
        self.entries.push((key.into(), value));
    }
}

pub const SCHEMA: &str = "ruelle-kit/1";

/// A float as a fixed-format JSON number (non-finite values as strings,
/// which plain JSON cannot carry).
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(format!("{x:.16e}"))
    } else if x.is_nan() {
        Value::String("nan".into())
    } else if x > 0.0 {
        Value::String("inf".into())
    } else {
        Value::String("-inf".into())
    }
}

pub fn int(x: usize) -> Value {
    Value::Number(x.to_string())
}

/// `[re, im]` pair.
pub fn complex(z: Complex64) -> Value {
    Value::Array(vec![num(z.re), num(z.im)])
}

pub fn complex_list(zs: &[Complex64]) -> Value {
    Value::Array(zs.iter().map(|&z| complex(z)).collect())
}

pub fn num_list(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// Report envelope shared by every command.
pub fn envelope(config_hash: &str, body: Map) -> Value {
    let mut map = Map::new();
    map.insert("schema", Value::String(SCHEMA.into()));
    map.insert(
        "tool_version",
        Value::String(env!("CARGO_PKG_VERSION").into()),
    );
    map.insert("config_hash", Value::String(config_hash.into()));
    for (k, v) in body.entries {
        map.insert(k, v);
    }
    Value::Object(map)
}

/// FNV-1a 64-bit, hex-formatted.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

fn escape_into(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn render(v: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    let pad_in = "  ".repeat(indent + 1);
    match v {
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(n),
        Value::String(s) => escape_into(s, out),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // Flat arrays of scalars stay on one line.
            let scalar = items
                .iter()
                .all(|i| !matches!(i, Value::Array(_) | Value::Object(_)));
            if scalar {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    render(item, indent, out);
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (i, item) in items.iter().enumerate() {
                    out.push_str(&pad_in);
                    render(item, indent + 1, out);
                    if i + 1 < items.len() {
                        out.push(',');
                    }
                    out.push('\n');
                }
                out.push_str(&pad);
                out.push(']');
            }
        }
        Value::Object(map) => {
            if map.entries.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, val)) in map.entries.iter().enumerate() {
                out.push_str(&pad_in);
                escape_into(k, out);
                out.push_str(": ");
                render(val, indent + 1, out);
                if i + 1 < map.entries.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad);
            out.push('}');
        }
    }
}

/// Pretty-printed with a trailing newline.
pub fn to_string(v: &Value) -> String {
    let mut out = String::new();
    render(v, 0, &mut out);
    out.push('\n');
    out
}
