//! Tabular datasets on disk: one sample per row, feature columns plus a
//! label column, comma separated.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use perfpred_core::{BaseDataset, LabelEncoding, Sample};

/// How to read a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub feature_count: usize,
    /// Zero-based column holding the label.
    pub label_column: usize,
    /// Raw label text to encoded label.
    pub label_map: Vec<(String, i32)>,
    pub encoding: LabelEncoding,
    pub has_header: bool,
}

impl CsvSchema {
    /// Features first, label last, raw labels equal to the encoded ones.
    pub fn trailing_label(feature_count: usize, encoding: LabelEncoding) -> Self {
        let label_map = match encoding {
            LabelEncoding::ZeroOne => vec![("0".into(), 0), ("1".into(), 1)],
            LabelEncoding::PlusMinusOne => {
                vec![("-1".into(), -1), ("1".into(), 1), ("+1".into(), 1)]
            }
        };
        Self {
            feature_count,
            label_column: feature_count,
            label_map,
            encoding,
            has_header: false,
        }
    }

    /// The conventional spambase layout: 57 features, 0/1 label last.
    pub fn spambase() -> Self {
        Self::trailing_label(57, LabelEncoding::ZeroOne)
    }

    fn validate(&self) -> Result<()> {
        if self.feature_count == 0 {
            bail!("schema needs at least one feature column");
        }
        if self.label_column > self.feature_count {
            bail!(
                "label column {} lies outside the {} columns of a row",
                self.label_column,
                self.feature_count + 1
            );
        }
        for (raw, y) in &self.label_map {
            if !self.encoding.contains(*y) {
                bail!(
                    "label map sends {raw:?} to {y}, outside the {} encoding",
                    self.encoding.name()
                );
            }
        }
        Ok(())
    }

    fn label(&self, raw: &str) -> Option<i32> {
        let raw = raw.trim();
        self.label_map
            .iter()
            .find(|(k, _)| k == raw)
            .map(|(_, y)| *y)
    }
}

/// Reads a dataset; errors name the 1-based line of the offending row.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<BaseDataset> {
    schema.validate()?;
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .from_reader(file);
    let width = schema.feature_count + 1;
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("{}: unreadable row", path.display()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            bail!(
                "{} line {line}: expected {width} fields, found {}",
                path.display(),
                record.len()
            );
        }
        let mut x = Vec::with_capacity(schema.feature_count);
        let mut y = None;
        for (col, field) in record.iter().enumerate() {
            if col == schema.label_column {
                y = Some(schema.label(field).ok_or_else(|| {
                    anyhow!("{} line {line}: unknown label {field:?}", path.display())
                })?);
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    anyhow!(
                        "{} line {line}, column {col}: {field:?} is not a number",
                        path.display()
                    )
                })?;
                x.push(v);
            }
        }
        samples.push(Sample::new(x, y.expect("label column lies inside the row")));
    }
    if samples.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(BaseDataset::new(samples, schema.encoding)?)
}

/// Seventeen significant digits: enough for every `f64` to read back to
/// the same bits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Writes features then label, no header — the layout read by
/// [`CsvSchema::trailing_label`].
pub fn save_csv(path: &Path, data: &BaseDataset) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for z in data.samples() {
        for v in &z.x {
            write!(out, "{},", fmt_f64(*v))?;
        }
        writeln!(out, "{}", z.y)?;
    }
    out.flush()?;
    Ok(())
}
