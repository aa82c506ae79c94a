use anyhow::Result;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Column-oriented numeric table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &str) -> Self {
        Table {
            columns: header.split(',').map(str::to_string).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_columns(columns: Vec<String>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        match format {
            Format::Csv => selfpulse::io::write_rows(
                &mut buf,
                &self.columns.join(","),
                self.rows.iter().cloned(),
            )?,
            Format::Json => {
                serde_json::to_writer(&mut buf, self)?;
                buf.push(b'\n');
            }
        }
        Ok(buf)
    }

    /// `(file name, bytes)` with the extension matching `format`.
    pub fn file(&self, stem: &str, format: Format) -> Result<(String, Vec<u8>)> {
        Ok((
            format!("{stem}.{}", format.extension()),
            self.render(format)?,
        ))
    }
}
