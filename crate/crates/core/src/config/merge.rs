use serde_yaml::Value;

use super::ConfigError;

/// Merges `overlay` into `base`. Mappings merge key by key, recursively;
/// any other value (scalars and sequences alike) replaces the base value.
pub fn deep_merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Mapping(b), Value::Mapping(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Applies one `dotted.key=value` override to a serialized config.
///
/// The key must name an existing leaf (list entries are addressed by index,
/// e.g. `stencil_set.0.tile_x`). The value is parsed as YAML and must match
/// the kind of the current leaf.
pub fn apply_override(doc: &mut Value, text: &str) -> Result<(), ConfigError> {
    let bad = |reason: String| ConfigError::BadOverride {
        text: text.to_string(),
        reason,
    };
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| bad("expected dotted.key=value".into()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(bad("empty key".into()));
    }
    let mut node = doc;
    let mut walked = Vec::new();
    for seg in key.split('.') {
        walked.push(seg);
        node = match node {
            Value::Mapping(m) => m.get_mut(seg).ok_or_else(|| ConfigError::UnknownKey {
                key: walked.join("."),
            })?,
            Value::Sequence(s) => {
                let idx: usize = seg.parse().map_err(|_| ConfigError::UnknownKey {
                    key: walked.join("."),
                })?;
                s.get_mut(idx).ok_or_else(|| ConfigError::UnknownKey {
                    key: walked.join("."),
                })?
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: walked.join("."),
                })
            }
        };
    }
    let parsed: Value =
        serde_yaml::from_str(raw.trim()).map_err(|e| bad(format!("unparsable value: {e}")))?;
    *node = coerce(node, parsed, raw.trim()).map_err(bad)?;
    Ok(())
}

fn coerce(current: &Value, new: Value, raw: &str) -> Result<Value, String> {
    match (current, &new) {
        (Value::Null, _) => Ok(new),
        (Value::Bool(_), Value::Bool(_)) => Ok(new),
        (Value::Number(c), Value::Number(n)) => {
            if c.is_f64() {
                Ok(Value::Number(n.as_f64().unwrap_or(f64::NAN).into()))
            } else if n.is_f64() {
                Err(format!("expected an integer, got {raw}"))
            } else if c.is_u64() && n.as_u64().is_none() {
                Err(format!("expected a nonnegative integer, got {raw}"))
            } else {
                Ok(new)
            }
        }
        (Value::String(_), _) => Ok(Value::String(raw.to_string())),
        (Value::Sequence(_), Value::Sequence(_)) => Ok(new),
        (Value::Mapping(_), Value::Mapping(_)) => Ok(new),
        (Value::Mapping(_), _) | (Value::Sequence(_), _) => {
            Err("key names a section, not a leaf".into())
        }
        (c, _) => Err(format!("expected {}, got {raw}", kind(c))),
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Sequence(_) => "a list",
        Value::Mapping(_) => "a mapping",
        Value::Tagged(_) => "a tagged value",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn yaml(s: &str) -> Value {
        serde_yaml::from_str(s).unwrap()
    }

    #[test]
    fn overlay_wins_key_by_key() {
        let mut base = yaml("tiles: 2\nddr: {banks: 8, tCL: 14}\nlist: [1, 2]");
        deep_merge(&mut base, yaml("tiles: 4\nddr: {banks: 16}\nlist: [3]"));
        assert_eq!(base, yaml("tiles: 4\nddr: {banks: 16, tCL: 14}\nlist: [3]"));
    }

    #[test]
    fn override_checks_leaf_type() {
        let mut doc = yaml("a: {b: 1, f: 1.5, s: x, on: true}");
        apply_override(&mut doc, "a.b=7").unwrap();
        apply_override(&mut doc, "a.f=2").unwrap();
        apply_override(&mut doc, "a.s=12").unwrap();
        assert_eq!(doc, yaml("a: {b: 7, f: 2.0, s: '12', on: true}"));
        assert!(apply_override(&mut doc, "a.b=1.5").is_err());
        assert!(apply_override(&mut doc, "a.b=-1").is_err());
        assert!(apply_override(&mut doc, "a.on=3").is_err());
        assert!(apply_override(&mut doc, "a=3").is_err());
        assert!(apply_override(&mut doc, "a.zz=3").is_err());
        assert!(apply_override(&mut doc, "novalue").is_err());
    }
}
