//! Core data types: labeled feature records, datasets with provenance, and
//! the row-aligned feature matrices the transforms and classifiers consume.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth class of a detection candidate.
///
/// The declaration order fixes the class order everywhere: posterior columns,
/// confusion counts, and tie-breaking all use `[FalsePeak, Peak]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    FalsePeak,
    Peak,
}

impl Label {
    /// Class index in the fixed `[FalsePeak, Peak]` order.
    pub fn index(self) -> usize {
        match self {
            Label::FalsePeak => 0,
            Label::Peak => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 1 {
            Label::Peak
        } else {
            Label::FalsePeak
        }
    }

    pub fn toggled(self) -> Label {
        match self {
            Label::FalsePeak => Label::Peak,
            Label::Peak => Label::FalsePeak,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::FalsePeak => "FalsePeak",
            Label::Peak => "Peak",
        }
    }

    pub fn parse(s: &str) -> Result<Label> {
        match s {
            "Peak" => Ok(Label::Peak),
            "FalsePeak" => Ok(Label::FalsePeak),
            other => Err(Error::Data(format!("unknown label {other:?}"))),
        }
    }
}

/// One PRACH detection candidate: four features plus the ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    /// Correlation peak magnitude (normalized by sequence length).
    pub amplitude: f64,
    /// Variance of the correlation floor (peak region excluded).
    pub variance: f64,
    /// Adaptive detection threshold at the candidate.
    pub threshold: f64,
    /// Estimated SNR in dB (peak power over mean floor power).
    pub snr: f64,
    pub label: Label,
}

impl FeatureRecord {
    pub fn features(&self) -> [f64; 4] {
        [self.amplitude, self.variance, self.threshold, self.snr]
    }

    pub fn is_finite(&self) -> bool {
        self.features().iter().all(|v| v.is_finite())
    }
}

pub const FEATURE_NAMES: [&str; 4] = ["amplitude", "variance", "threshold", "snr"];
pub const N_FEATURES: usize = 4;

/// Provenance metadata carried by a dataset: how it was generated and what
/// corruption, if any, has been applied. Serialized as the CSV's sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<crate::prach::GenConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<crate::noise::NoiseSpec>,
    /// True once per-feature mean normalization has been applied.
    #[serde(default)]
    pub normalized: bool,
}

/// Ordered, immutable collection of records plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<FeatureRecord>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(records: Vec<FeatureRecord>, provenance: Provenance) -> Dataset {
        Dataset { records, provenance }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    /// Raw 4-column feature matrix view, row order preserved.
    pub fn to_matrix(&self) -> FeatureMatrix {
        let mut values = Vec::with_capacity(self.len() * N_FEATURES);
        for r in &self.records {
            values.extend_from_slice(&r.features());
        }
        FeatureMatrix {
            cols: N_FEATURES,
            values,
            labels: self.labels(),
            space_tag: SpaceTag::Raw,
        }
    }

    /// Subset by row indices (indices must be in range; order preserved).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Writes the CSV schema `amplitude,variance,threshold,snr,label`.
    /// Floats keep full round-trip precision.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["amplitude", "variance", "threshold", "snr", "label"])?;
        for r in &self.records {
            wtr.write_record([
                format_float(r.amplitude),
                format_float(r.variance),
                format_float(r.threshold),
                format_float(r.snr),
                r.label.as_str().to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::Io(e.to_string()))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        {
            let headers = rdr.headers()?;
            let expected = ["amplitude", "variance", "threshold", "snr", "label"];
            if headers.len() != expected.len()
                || headers.iter().zip(expected).any(|(a, b)| a != b)
            {
                return Err(Error::Data(format!(
                    "unexpected CSV header {:?}, want {:?}",
                    headers, expected
                )));
            }
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let field = |j: usize| -> Result<f64> {
                row.get(j)
                    .ok_or_else(|| Error::Data(format!("row {i}: missing column {j}")))?
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("row {i}, column {j}: {e}")))
            };
            let rec = FeatureRecord {
                amplitude: field(0)?,
                variance: field(1)?,
                threshold: field(2)?,
                snr: field(3)?,
                label: Label::parse(row.get(4).unwrap_or(""))
                    .map_err(|e| Error::Data(format!("row {i}: {e}")))?,
            };
            if !rec.is_finite() {
                return Err(Error::Data(format!("row {i}: non-finite feature")));
            }
            records.push(rec);
        }
        Ok(Dataset::new(records, Provenance::default()))
    }

    pub fn read_csv_path(path: &Path) -> Result<Dataset> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut ds = Self::read_csv(std::io::BufReader::new(f))?;
        // Pick up the provenance sidecar when present.
        let sidecar = sidecar_path(path);
        if sidecar.exists() {
            let text = std::fs::read_to_string(&sidecar)?;
            ds.provenance = serde_json::from_str(&text)
                .map_err(|e| Error::Data(format!("{}: {e}", sidecar.display())))?;
        }
        Ok(ds)
    }

    /// Writes CSV plus the provenance sidecar next to it.
    pub fn write_with_sidecar(&self, path: &Path) -> Result<()> {
        self.write_csv_path(path)?;
        let text = serde_json::to_string_pretty(&self.provenance)
            .map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(sidecar_path(path), text + "\n")?;
        Ok(())
    }
}

/// `dataset.csv` → `dataset.meta.json`.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    path.with_file_name(format!("{stem}.meta.json"))
}

fn format_float(v: f64) -> String {
    // ryu-style shortest representation that round-trips; always ≥ 9
    // significant digits of information.
    let mut buf = ryu_format(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // The csv crate itself uses ryu through serde; formatting directly keeps
    // us independent of serializer internals.
    let s = format!("{v}");
    if s.parse::<f64>() == Ok(v) {
        s
    } else {
        format!("{v:.17e}")
    }
}

/// Which feature space a matrix lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceTag {
    Raw,
    Psr,
    Pca,
}

impl SpaceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SpaceTag::Raw => "raw",
            SpaceTag::Psr => "psr",
            SpaceTag::Pca => "pca",
        }
    }
}

/// Row-major numeric matrix with row-aligned labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub cols: usize,
    pub values: Vec<f64>,
    pub labels: Vec<Label>,
    pub space_tag: SpaceTag,
}

impl FeatureMatrix {
    pub fn new(cols: usize, values: Vec<f64>, labels: Vec<Label>, space_tag: SpaceTag) -> Result<FeatureMatrix> {
        if cols == 0 || values.len() != cols * labels.len() {
            return Err(Error::Data(format!(
                "matrix shape mismatch: {} values, {} cols, {} labels",
                values.len(),
                cols,
                labels.len()
            )));
        }
        Ok(FeatureMatrix { cols, values, labels, space_tag })
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// Subset by row indices, order preserved.
    pub fn subset(&self, indices: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        FeatureMatrix { cols: self.cols, values, labels, space_tag: self.space_tag }
    }

    /// CSV round-trip with generated column names `f0..f{D-1}` plus `label`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.cols).map(|j| format!("f{j}")).collect();
        header.push("label".to_string());
        wtr.write_record(&header)?;
        for i in 0..self.rows() {
            let mut rec: Vec<String> = self.row(i).iter().map(|&v| format_float(v)).collect();
            rec.push(self.labels[i].as_str().to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::Io(e.to_string()))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: std::io::Read>(r: R, space_tag: SpaceTag) -> Result<FeatureMatrix> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let cols = {
            let headers = rdr.headers()?;
            if headers.len() < 2 || headers.iter().next_back() != Some("label") {
                return Err(Error::Data("matrix CSV must end with a label column".into()));
            }
            headers.len() - 1
        };
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            if row.len() != cols + 1 {
                return Err(Error::Data(format!("row {i}: expected {} fields", cols + 1)));
            }
            for j in 0..cols {
                let v: f64 = row[j]
                    .parse()
                    .map_err(|e| Error::Data(format!("row {i}, column {j}: {e}")))?;
                values.push(v);
            }
            labels.push(Label::parse(&row[cols])?);
        }
        FeatureMatrix::new(cols, values, labels, space_tag)
    }

    pub fn read_csv_path(path: &Path, space_tag: SpaceTag) -> Result<FeatureMatrix> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(std::io::BufReader::new(f), space_tag)
    }
}

/// Per-feature mean normalization: (x − mean) / (max − min), fit on the full
/// set. Columns with zero range are centered only.
pub fn mean_normalize(records: &mut [FeatureRecord]) {
    if records.is_empty() {
        return;
    }
    let n = records.len() as f64;
    let mut mean = [0.0f64; N_FEATURES];
    let mut lo = [f64::INFINITY; N_FEATURES];
    let mut hi = [f64::NEG_INFINITY; N_FEATURES];
    for r in records.iter() {
        for (j, v) in r.features().iter().enumerate() {
            mean[j] += v;
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let span: Vec<f64> = (0..N_FEATURES)
        .map(|j| {
            let s = hi[j] - lo[j];
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    for r in records.iter_mut() {
        r.amplitude = (r.amplitude - mean[0]) / span[0];
        r.variance = (r.variance - mean[1]) / span[1];
        r.threshold = (r.threshold - mean[2]) / span[2];
        r.snr = (r.snr - mean[3]) / span[3];
    }
}
