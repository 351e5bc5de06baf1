//! Dataset container: a JSON manifest describing feature/label geometry
//! plus a CSV of records, `indentation_id,feat_0..feat_{2m-1},label_0..label_{3n-1}`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfeat::RegionGrid;
use crate::labeling::BinGrid;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.csv";

/// One training record: 2m features paired with a 3n label.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub indentation_id: String,
    pub features: Vec<f64>,
    pub label: Vec<f64>,
}

/// Geometry and bookkeeping of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    /// Number of pooling regions (features are 2m).
    pub m: usize,
    /// Number of surface bins (labels are 3n).
    pub n: usize,
    pub record_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regions: Option<RegionGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<BinGrid>,
}

/// Full in-memory dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    m: usize,
    n: usize,
    regions: Option<RegionGrid>,
    grid: Option<BinGrid>,
    records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn new(
        m: usize,
        n: usize,
        records: Vec<DatasetRecord>,
        regions: Option<RegionGrid>,
        grid: Option<BinGrid>,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::config(format!("dataset geometry m = {m}, n = {n}")));
        }
        if let Some(r) = &regions {
            if r.region_count() != m {
                return Err(Error::config(format!(
                    "region grid {}x{} disagrees with m = {m}",
                    r.rows, r.cols
                )));
            }
        }
        if let Some(g) = &grid {
            if g.bin_count() != n {
                return Err(Error::config(format!(
                    "bin grid {}x{} disagrees with n = {n}",
                    g.rows, g.cols
                )));
            }
        }
        for rec in &records {
            if rec.features.len() != 2 * m {
                return Err(Error::schema(format!(
                    "record {}: {} features, expected {}",
                    rec.indentation_id,
                    rec.features.len(),
                    2 * m
                )));
            }
            if rec.label.len() != 3 * n {
                return Err(Error::schema(format!(
                    "record {}: {} label components, expected {}",
                    rec.indentation_id,
                    rec.label.len(),
                    3 * n
                )));
            }
            if rec.features.iter().chain(rec.label.iter()).any(|v| !v.is_finite()) {
                return Err(Error::schema(format!(
                    "record {}: non-finite value",
                    rec.indentation_id
                )));
            }
        }
        Ok(Self { m, n, regions, grid, records })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn regions(&self) -> Option<RegionGrid> {
        self.regions
    }

    pub fn grid(&self) -> Option<BinGrid> {
        self.grid
    }

    pub fn records(&self) -> &[DatasetRecord] {
        &self.records
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            schema_version: 1,
            m: self.m,
            n: self.n,
            record_count: self.records.len(),
            regions: self.regions,
            grid: self.grid,
        }
    }

    /// Write `manifest.json` and `records.csv` into a directory.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_vec_pretty(&self.manifest())?,
        )?;

        let mut buf = Vec::new();
        write!(buf, "indentation_id")?;
        for i in 0..2 * self.m {
            write!(buf, ",feat_{i}")?;
        }
        for i in 0..3 * self.n {
            write!(buf, ",label_{i}")?;
        }
        writeln!(buf)?;
        for rec in &self.records {
            write!(buf, "{}", rec.indentation_id)?;
            for f in &rec.features {
                write!(buf, ",{f}")?;
            }
            for l in &rec.label {
                write!(buf, ",{l}")?;
            }
            writeln!(buf)?;
        }
        std::fs::write(dir.join(RECORDS_FILE), buf)?;
        Ok(())
    }

    /// Read a dataset directory written by [`Self::write_dir`].
    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: DatasetManifest =
            serde_json::from_slice(&std::fs::read(&manifest_path).map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", manifest_path.display()),
                ))
            })?)?;

        let records_path = dir.join(RECORDS_FILE);
        let file = std::fs::File::open(&records_path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", records_path.display())))
        })?;
        let mut rdr = crate::characterization::csv_reader(std::io::BufReader::new(file));

        let expected_cols = 1 + 2 * manifest.m + 3 * manifest.n;
        {
            let headers = rdr.headers()?;
            if headers.len() != expected_cols || headers.get(0) != Some("indentation_id") {
                return Err(Error::schema(format!(
                    "{}: header has {} columns, expected {expected_cols}",
                    records_path.display(),
                    headers.len()
                )));
            }
        }

        let mut records = Vec::with_capacity(manifest.record_count);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != expected_cols {
                return Err(Error::schema(format!(
                    "{}: row {} has {} columns, expected {expected_cols}",
                    records_path.display(),
                    i + 2,
                    rec.len()
                )));
            }
            let id = rec.get(0).unwrap().to_string();
            let parse = |j: usize| -> Result<f64> {
                crate::characterization::parse_field(&rec, j, i, "value")
            };
            let features = (1..1 + 2 * manifest.m).map(parse).collect::<Result<Vec<_>>>()?;
            let label = (1 + 2 * manifest.m..expected_cols)
                .map(parse)
                .collect::<Result<Vec<_>>>()?;
            records.push(DatasetRecord { indentation_id: id, features, label });
        }
        if records.len() != manifest.record_count {
            return Err(Error::schema(format!(
                "manifest promises {} records, CSV holds {}",
                manifest.record_count,
                records.len()
            )));
        }
        Self::new(manifest.m, manifest.n, records, manifest.regions, manifest.grid)
    }
}
