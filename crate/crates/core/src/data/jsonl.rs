use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LabelMap, RawExample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct JsonlDataset {
    pub examples: Vec<RawExample<String>>,
    /// Sorted distinct intent labels, `"oos"` excluded.
    pub labels: LabelMap,
}

#[derive(Deserialize)]
struct Line {
    text: Option<serde_json::Value>,
    label: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct OutLine<'a> {
    text: &'a str,
    label: &'a str,
}

/// Reads `{"text": ..., "label": ...}` objects, one per line. Blank lines are skipped.
pub fn read_jsonl_dataset(path: &Path) -> Result<JsonlDataset> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut examples = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(raw).map_err(|e| parse_err(line_no, e.to_string()))?;
        let field = |v: Option<serde_json::Value>, name: &str| -> Result<String> {
            match v {
                Some(serde_json::Value::String(s)) => Ok(s),
                Some(_) => Err(parse_err(line_no, format!("field \"{name}\" must be a string"))),
                None => Err(parse_err(line_no, format!("missing field \"{name}\""))),
            }
        };
        let text = field(parsed.text, "text")?;
        let label = field(parsed.label, "label")?;
        examples.push(RawExample { input: text, label });
    }
    if examples.is_empty() {
        return Err(Error::InvalidData(format!("{} contains no examples", path.display())));
    }
    let labels = LabelMap::from_labels(examples.iter().map(|e| e.label.as_str()));
    Ok(JsonlDataset { examples, labels })
}

pub fn write_jsonl(path: &Path, examples: &[RawExample<String>]) -> Result<()> {
    let mut out = Vec::new();
    for e in examples {
        serde_json::to_writer(
            &mut out,
            &OutLine {
                text: &e.input,
                label: &e.label,
            },
        )?;
        out.write_all(b"\n").expect("writing to a Vec cannot fail");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
