use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::config::Settings;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err("expected csv or json".into()),
        }
    }
}

/// A file or stdout, opened before any work is done so a bad path fails fast.
pub struct Sink {
    inner: Box<dyn Write>,
    name: String,
}

impl Sink {
    pub fn open(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::stdout()),
            Some(p) if p.as_os_str() == "-" => Ok(Self::stdout()),
            Some(p) => {
                let file = File::create(p)
                    .map_err(|e| CliError::Output(format!("cannot write {}: {e}", p.display())))?;
                Ok(Self {
                    inner: Box::new(BufWriter::new(file)),
                    name: p.display().to_string(),
                })
            }
        }
    }

    fn stdout() -> Self {
        Self {
            inner: Box::new(io::stdout().lock()),
            name: "stdout".into(),
        }
    }

    /// Writes `text` and flushes.
    pub fn finish(mut self, text: &str) -> Result<(), CliError> {
        self.inner
            .write_all(text.as_bytes())
            .and_then(|_| self.inner.flush())
            .map_err(|e| CliError::Output(format!("writing {}: {e}", self.name)))
    }
}

/// A JSON document with the resolved settings under `config`.
pub fn json_document(settings: &Settings, body: serde_json::Map<String, serde_json::Value>) -> String {
    let mut doc = serde_json::Map::new();
    doc.insert(
        "config".into(),
        serde_json::to_value(settings.as_map()).expect("string map serializes"),
    );
    doc.extend(body);
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(doc)).expect("json value serializes");
    text.push('\n');
    text
}
