//! Landmark and tensor dataset files.
//!
//! Landmark CSV: a header line `m,k`, a line with the two values, then one
//! object per line holding the `m·k` coordinates landmark by landmark
//! (column-major), optionally preceded by a label field. Landmark JSON:
//! `{"m": .., "k": .., "objects": [[..], ..], "labels": [..]}` with the same
//! flat coordinate order.
//!
//! Tensor CSV: a header line `m`, a line with the value, then one symmetric
//! `m × m` tensor per line in row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shapestat::difftensor::DiffusionTensor;
use shapestat::{center, Configuration, Mat};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Format implied by the file extension, CSV unless it is `.json`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: PathBuf,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub m: usize,
    pub k: usize,
    /// Raw `m × k` landmark matrices.
    pub objects: Vec<Mat>,
    pub labels: Option<Vec<String>>,
    pub provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct JsonDataset {
    m: usize,
    k: usize,
    objects: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(objects: Vec<Mat>, labels: Option<Vec<String>>) -> Result<Self, CliError> {
        let first = objects
            .first()
            .ok_or_else(|| CliError::Schema("dataset has no objects".into()))?;
        let (m, k) = first.shape();
        let ds = Self {
            m,
            k,
            objects,
            labels,
            provenance: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.objects.is_empty() {
            return Err(CliError::Schema("dataset has no objects".into()));
        }
        if self.m < 2 || self.k < 2 {
            return Err(CliError::Schema(format!("need m >= 2 and k >= 2, got m={}, k={}", self.m, self.k)));
        }
        for (i, x) in self.objects.iter().enumerate() {
            if x.shape() != (self.m, self.k) {
                return Err(CliError::Schema(format!(
                    "object {i} is {}x{}, expected {}x{}",
                    x.nrows(),
                    x.ncols(),
                    self.m,
                    self.k
                )));
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != self.objects.len() {
                return Err(CliError::Schema(format!(
                    "{} labels for {} objects",
                    l.len(),
                    self.objects.len()
                )));
            }
        }
        Ok(())
    }

    /// Centered, Helmertized configurations.
    pub fn configurations(&self) -> Result<Vec<Configuration>, CliError> {
        self.objects
            .iter()
            .enumerate()
            .map(|(i, x)| center(x).map_err(|e| CliError::Schema(format!("object {i}: {e}"))))
            .collect()
    }
}

fn parse_field(field: &str, line: u64) -> Result<f64, CliError> {
    field.trim().parse::<f64>().map_err(|_| CliError::Parse {
        line,
        message: format!("not a number: {field:?}"),
    })
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

/// One-based line number of the record starting at `byte`; the csv reader
/// neither counts skipped blank lines nor excludes them from the offset.
pub(crate) fn line_of(text: &str, byte: u64) -> u64 {
    let bytes = text.as_bytes();
    let mut end = (byte as usize).min(bytes.len());
    while end < bytes.len() && matches!(bytes[end], b'\n' | b'\r') {
        end += 1;
    }
    1 + bytes[..end].iter().filter(|&&b| b == b'\n').count() as u64
}

type NumberedRecords = Vec<(u64, csv::StringRecord)>;

/// Header and dimension lines; returns the dimensions and the remaining
/// records with their line numbers.
fn read_csv_body(text: &str, header: &[&str]) -> Result<(Vec<usize>, NumberedRecords), CliError> {
    let mut records = Vec::new();
    for rec in csv_reader(text).records() {
        let rec = rec.map_err(|e| CliError::Parse {
            line: e.position().map_or(0, |p| line_of(text, p.byte())),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| line_of(text, p.byte()));
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push((line, rec));
    }
    let mut it = records.into_iter();
    let (line, head) = it.next().ok_or(CliError::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let names: Vec<&str> = head.iter().collect();
    if names != header {
        return Err(CliError::Parse {
            line,
            message: format!("expected header {:?}, found {:?}", header.join(","), names.join(",")),
        });
    }
    let (line, dims) = it.next().ok_or(CliError::Parse {
        line: line + 1,
        message: "missing dimension line".into(),
    })?;
    if dims.len() != header.len() {
        return Err(CliError::Parse {
            line,
            message: format!("expected {} dimension values", header.len()),
        });
    }
    let dims = dims
        .iter()
        .map(|f| {
            f.parse::<usize>().map_err(|_| CliError::Parse {
                line,
                message: format!("not a dimension: {f:?}"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((dims, it.collect()))
}

fn parse_csv(text: &str) -> Result<Dataset, CliError> {
    let (dims, rows) = read_csv_body(text, &["m", "k"])?;
    let (m, k) = (dims[0], dims[1]);
    let width = m * k;
    let mut objects = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    let mut labelled = None;
    for (line, rec) in rows {
        let has_label = match rec.len() {
            n if n == width => false,
            n if n == width + 1 => true,
            n => {
                return Err(CliError::Parse {
                    line,
                    message: format!("expected {width} coordinates (m*k), found {n} fields"),
                })
            }
        };
        if *labelled.get_or_insert(has_label) != has_label {
            return Err(CliError::Parse {
                line,
                message: "label column must be present on every row or on none".into(),
            });
        }
        let offset = usize::from(has_label);
        if has_label {
            labels.push(rec[0].to_string());
        }
        let values = rec
            .iter()
            .skip(offset)
            .map(|f| parse_field(f, line))
            .collect::<Result<Vec<_>, _>>()?;
        objects.push(Mat::from_vec(m, k, values));
    }
    Dataset::new(objects, labelled.unwrap_or(false).then_some(labels))
}

fn parse_json(text: &str) -> Result<Dataset, CliError> {
    let raw: JsonDataset = serde_json::from_str(text).map_err(|e| CliError::Parse {
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let mut objects = Vec::with_capacity(raw.objects.len());
    for (i, o) in raw.objects.into_iter().enumerate() {
        if o.len() != raw.m * raw.k {
            return Err(CliError::Schema(format!(
                "object {i} has {} coordinates, expected m*k = {}",
                o.len(),
                raw.m * raw.k
            )));
        }
        objects.push(Mat::from_vec(raw.m, raw.k, o));
    }
    let ds = Dataset::new(objects, raw.labels)?;
    if (ds.m, ds.k) != (raw.m, raw.k) {
        return Err(CliError::Schema("declared dimensions do not match the objects".into()));
    }
    Ok(ds)
}

/// Load and validate a landmark dataset; every object must be centerable.
pub fn load_dataset(path: &Path, format: Format) -> Result<Dataset, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut ds = match format {
        Format::Csv => parse_csv(&text)?,
        Format::Json => parse_json(&text)?,
    };
    ds.configurations()?;
    ds.provenance = Some(Provenance {
        path: path.to_path_buf(),
        format,
    });
    Ok(ds)
}

pub fn dataset_to_string(ds: &Dataset, format: Format) -> Result<String, CliError> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
            w.write_record(["m", "k"])?;
            w.write_record([ds.m.to_string(), ds.k.to_string()])?;
            for (i, x) in ds.objects.iter().enumerate() {
                let mut row: Vec<String> = Vec::with_capacity(ds.m * ds.k + 1);
                if let Some(l) = &ds.labels {
                    row.push(l[i].clone());
                }
                row.extend(x.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
            finish_csv(w)
        }
        Format::Json => {
            let raw = JsonDataset {
                m: ds.m,
                k: ds.k,
                objects: ds.objects.iter().map(|x| x.as_slice().to_vec()).collect(),
                labels: ds.labels.clone(),
            };
            Ok(serde_json::to_string_pretty(&raw)? + "\n")
        }
    }
}

pub fn save_dataset(ds: &Dataset, path: &Path, format: Format) -> Result<(), CliError> {
    let text = dataset_to_string(ds, format)?;
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Schema(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Schema(e.to_string()))
}

/// Load symmetric positive semi-definite tensors.
pub fn load_tensors(path: &Path) -> Result<Vec<DiffusionTensor>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let (dims, rows) = read_csv_body(&text, &["m"])?;
    let m = dims[0];
    if m < 2 {
        return Err(CliError::Schema(format!("tensor dimension must be >= 2, got {m}")));
    }
    let mut out = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        if rec.len() != m * m {
            return Err(CliError::Parse {
                line,
                message: format!("expected {} entries (m*m), found {}", m * m, rec.len()),
            });
        }
        let values = rec.iter().map(|f| parse_field(f, line)).collect::<Result<Vec<_>, _>>()?;
        let a = Mat::from_row_slice(m, m, &values);
        out.push(DiffusionTensor::new(a).map_err(|e| CliError::Parse {
            line,
            message: e.to_string(),
        })?);
    }
    if out.is_empty() {
        return Err(CliError::Schema("no tensors in file".into()));
    }
    Ok(out)
}

pub fn tensors_to_string(tensors: &[Mat]) -> Result<String, CliError> {
    let m = tensors.first().map_or(0, |t| t.nrows());
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    w.write_record(["m"])?;
    w.write_record([m.to_string()])?;
    for t in tensors {
        let row: Vec<String> = t.transpose().iter().map(|v| v.to_string()).collect();
        w.write_record(&row)?;
    }
    finish_csv(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Dataset {
        let a = Mat::from_row_slice(3, 4, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let b = Mat::from_row_slice(3, 4, &[0.0, 2.0, 0.1, 0.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.3, 0.0, 1.0]);
        Dataset::new(vec![a, b], None).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let ds = fixture();
        let text = dataset_to_string(&ds, Format::Csv).unwrap();
        let back = parse_csv(&text).unwrap();
        assert_eq!((back.m, back.k), (3, 4));
        assert_eq!(back.objects, ds.objects);
    }

    #[test]
    fn json_round_trip_with_labels() {
        let mut ds = fixture();
        ds.labels = Some(vec!["a".into(), "b".into()]);
        let text = dataset_to_string(&ds, Format::Json).unwrap();
        let back = parse_json(&text).unwrap();
        assert_eq!(back.objects, ds.objects);
        assert_eq!(back.labels, ds.labels);
    }

    #[test]
    fn csv_layout_is_column_major() {
        let text = "m,k\n2,3\n1,2,3,4,5,6\n";
        let ds = parse_csv(text).unwrap();
        // landmark j is the pair (x, y) at positions 2j, 2j+1
        assert_eq!(ds.objects[0][(0, 1)], 3.0);
        assert_eq!(ds.objects[0][(1, 1)], 4.0);
    }

    #[test]
    fn labels_are_detected() {
        let text = "m,k\n2,3\nleaf,1,2,3,4,5,6\nroot,0,1,2,3,4,6\n";
        let ds = parse_csv(text).unwrap();
        assert_eq!(ds.labels.unwrap(), vec!["leaf", "root"]);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let err = parse_csv("m,k\n2,3\n1,2,3,4,5,6\n1,2,x,4,5,6\n").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 4, .. }), "{err}");
        let err = parse_csv("m,k\n2,3\n1,2,3,4,5,6\n\n1,2,3\n").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 5, .. }), "{err}");
        let err = parse_csv("m,n\n2,3\n").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_csv(""), Err(CliError::Parse { .. })));
        assert!(matches!(parse_csv("m,k\n2,3\n"), Err(CliError::Schema(_))));
        assert!(parse_json("").is_err());
    }

    #[test]
    fn json_dimension_mismatch_is_a_schema_error() {
        let err = parse_json(r#"{"m": 2, "k": 3, "objects": [[1, 2, 3, 4]]}"#).unwrap_err();
        assert!(matches!(err, CliError::Schema(_)));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Format::from_path(Path::new("a.JSON")), Format::Json);
        assert_eq!(Format::from_path(Path::new("a.csv")), Format::Csv);
        assert_eq!(Format::from_path(Path::new("a")), Format::Csv);
    }

    #[test]
    fn tensor_round_trip() {
        let t = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let text = tensors_to_string(std::slice::from_ref(&t)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, text).unwrap();
        let back = load_tensors(&p).unwrap();
        assert_eq!(back[0].entries(), &t);
    }
}
