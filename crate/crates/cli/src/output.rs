use std::io::Write;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::args::Format;
use crate::error::CliError;

/// Writes either human-readable lines or one JSON object per record.
pub struct Printer<'a> {
    pub format: Format,
    out: &'a mut dyn Write,
}

impl<'a> Printer<'a> {
    pub fn new(format: Format, out: &'a mut dyn Write) -> Self {
        Self { format, out }
    }

    pub fn human(&self) -> bool {
        self.format == Format::Human
    }

    /// A line shown only in human output.
    pub fn line(&mut self, text: impl AsRef<str>) -> Result<(), CliError> {
        if self.human() {
            writeln!(self.out, "{}", text.as_ref())?;
        }
        Ok(())
    }

    /// A record shown only in machine output, tagged with `record`.
    pub fn record<T: Serialize>(&mut self, kind: &str, value: &T) -> Result<(), CliError> {
        if self.human() {
            return Ok(());
        }
        let mut obj = match serde_json::to_value(value)? {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        obj.insert("record".into(), Value::String(kind.into()));
        writeln!(self.out, "{}", Value::Object(obj))?;
        Ok(())
    }

    /// Human line and machine record for the same item.
    pub fn both<T: Serialize>(&mut self, text: impl AsRef<str>, kind: &str, value: &T) -> Result<(), CliError> {
        self.line(text)?;
        self.record(kind, value)
    }

    /// Raw text in either format.
    pub fn raw(&mut self, text: &str) -> Result<(), CliError> {
        self.out.write_all(text.as_bytes())?;
        Ok(())
    }
}
