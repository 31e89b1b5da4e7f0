//! Versioned JSON documents and their error reporting.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: field `{field}`: {message}", path.display())]
    Parse {
        path: PathBuf,
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}: schema_version {found} is not supported (expected {expected})", path.display())]
    Schema { path: PathBuf, found: String, expected: u32 },
    #[error("{}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        #[source]
        source: ugv_plan_core::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: Option<serde_json::Value>,
}

/// Parses `text` as a document of the given schema version, reporting the
/// offending field path and position on failure.
pub fn parse<T: DeserializeOwned>(text: &str, path: &Path, schema: u32) -> Result<T, FileError> {
    let parse_error = |field: String, err: serde_json::Error| FileError::Parse {
        path: path.to_owned(),
        field,
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    };
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| parse_error(String::from("."), e))?;
    match probe.schema_version {
        Some(v) if v.as_u64() == Some(u64::from(schema)) => {}
        Some(v) => {
            return Err(FileError::Schema { path: path.to_owned(), found: v.to_string(), expected: schema });
        }
        None => {
            return Err(FileError::Schema { path: path.to_owned(), found: String::from("(missing)"), expected: schema });
        }
    }
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        parse_error(field, e.into_inner())
    })?;
    de.end().map_err(|e| parse_error(String::from("."), e))?;
    Ok(value)
}

pub fn read<T: DeserializeOwned>(path: &Path, schema: u32) -> Result<T, FileError> {
    let text = fs::read_to_string(path).map_err(|source| FileError::Io { path: path.to_owned(), source })?;
    parse(&text, path, schema)
}

pub fn write<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    let mut text = serde_json::to_string_pretty(value).expect("documents always serialize");
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| FileError::Io { path: dir.to_owned(), source })?;
    }
    fs::write(path, text).map_err(|source| FileError::Io { path: path.to_owned(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    #[allow(dead_code)]
    struct Doc {
        schema_version: u32,
        inner: Inner,
    }

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    #[allow(dead_code)]
    struct Inner {
        values: Vec<f64>,
    }

    #[test]
    fn reports_field_path_and_position() {
        let text = "{\n  \"schema_version\": 1,\n  \"inner\": { \"values\": [1.0, \"x\"] }\n}";
        match parse::<Doc>(text, Path::new("d.json"), 1) {
            Err(FileError::Parse { field, line, .. }) => {
                assert_eq!(field, "inner.values[1]");
                assert_eq!(line, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_other_schema_versions() {
        let err = parse::<Doc>(r#"{"schema_version": 7, "inner": {"values": []}}"#, Path::new("d.json"), 1).unwrap_err();
        assert!(matches!(err, FileError::Schema { .. }), "{err}");
        let err = parse::<Doc>(r#"{"inner": {"values": []}}"#, Path::new("d.json"), 1).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let err = parse::<Doc>("{\n\"schema_version\": 1,\n,}", Path::new("d.json"), 1).unwrap_err();
        assert!(matches!(err, FileError::Parse { line: 3, .. }), "{err}");
    }
}
