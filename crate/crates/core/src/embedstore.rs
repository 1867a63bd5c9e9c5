//! Embedding sets on disk and in memory.
//!
//! A set is stored as a directory holding three files:
//!
//! * `manifest.json`: format version, `n`, `d`, class names, provenance and a
//!   64-bit FNV-1a checksum (16 lowercase hex digits) of `emb.bin`;
//! * `meta.jsonl`: one JSON object per row, in row order;
//! * `emb.bin`: `n * d` little-endian IEEE-754 `f32` values, row-major.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const META_FILE: &str = "meta.jsonl";
pub const EMB_FILE: &str = "emb.bin";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_extend(FNV_OFFSET, bytes)
}

/// Continues an FNV-1a hash from an intermediate state.
pub fn fnv1a64_extend(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub fn checksum_hex(h: u64) -> String {
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sample_id: String,
    /// Slide or ROI identifier; empty for patch-level sets.
    #[serde(default)]
    pub bag_id: String,
    pub label: Option<u32>,
    pub center_id: Option<String>,
    pub tissue_class: Option<u32>,
}

impl SampleMeta {
    pub fn new(sample_id: impl Into<String>) -> Self {
        Self {
            sample_id: sample_id.into(),
            bag_id: String::new(),
            label: None,
            center_id: None,
            tissue_class: None,
        }
    }

    pub fn require_label(&self) -> Result<u32> {
        self.label.ok_or_else(|| Error::MissingField {
            field: "label",
            sample_id: self.sample_id.clone(),
        })
    }

    pub fn require_tissue(&self) -> Result<u32> {
        self.tissue_class.ok_or_else(|| Error::MissingField {
            field: "tissue_class",
            sample_id: self.sample_id.clone(),
        })
    }

    pub fn require_center(&self) -> Result<&str> {
        self.center_id
            .as_deref()
            .ok_or_else(|| Error::MissingField {
                field: "center_id",
                sample_id: self.sample_id.clone(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub n: usize,
    pub d: usize,
    pub class_names: Vec<String>,
    pub provenance: String,
    pub checksum: String,
}

/// An `n × d` matrix of `f32` embeddings with per-row metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    n: usize,
    d: usize,
    data: Vec<f32>,
    meta: Vec<SampleMeta>,
    class_names: Vec<String>,
    provenance: String,
}

impl EmbeddingSet {
    /// Validates and assembles a set. `data` is row-major with `meta.len()` rows.
    pub fn new(
        d: usize,
        data: Vec<f32>,
        meta: Vec<SampleMeta>,
        class_names: Vec<String>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let n = meta.len();
        if n == 0 {
            return Err(Error::Invalid("embedding set must have n >= 1 rows".into()));
        }
        if d == 0 {
            return Err(Error::Invalid("embedding dimension must be d >= 1".into()));
        }
        if data.len() != n * d {
            return Err(Error::Shape(format!(
                "{} values for {n} rows of dimension {d}",
                data.len()
            )));
        }
        if let Some(p) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: p / d,
                col: p % d,
            });
        }
        let mut seen = HashSet::with_capacity(n);
        let k = class_names.len();
        for m in &meta {
            if !seen.insert(m.sample_id.as_str()) {
                return Err(Error::Invalid(format!(
                    "duplicate sample_id `{}`",
                    m.sample_id
                )));
            }
            for (field, v) in [("label", m.label), ("tissue_class", m.tissue_class)] {
                if let Some(v) = v {
                    if v as usize >= k {
                        return Err(Error::Invalid(format!(
                            "sample `{}`: {field} {v} is not below the class count {k}",
                            m.sample_id
                        )));
                    }
                }
            }
        }
        Ok(Self {
            n,
            d,
            data,
            meta,
            class_names,
            provenance: provenance.into(),
        })
    }

    /// Builds a set from a matrix, narrowing to `f32`.
    pub fn from_matrix<T: Scalar>(
        x: &Matrix<T>,
        meta: Vec<SampleMeta>,
        class_names: Vec<String>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if x.rows() != meta.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} metadata entries",
                x.rows(),
                meta.len()
            )));
        }
        let data = x.as_slice().iter().map(|v| v.to_f64_lossy() as f32).collect();
        Self::new(x.cols(), data, meta, class_names, provenance)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn meta(&self) -> &[SampleMeta] {
        &self.meta
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn checksum(&self) -> u64 {
        fnv1a64(&self.emb_bytes())
    }

    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        Matrix::from_fn(self.n, self.d, |i, j| T::of(self.data[i * self.d + j] as f64))
    }

    /// Rows `idx` as a matrix, in the given order.
    pub fn rows_matrix<T: Scalar>(&self, idx: &[usize]) -> Matrix<T> {
        Matrix::from_fn(idx.len(), self.d, |i, j| {
            T::of(self.data[idx[i] * self.d + j] as f64)
        })
    }

    fn emb_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            version: FORMAT_VERSION,
            n: self.n,
            d: self.d,
            class_names: self.class_names.clone(),
            provenance: self.provenance.clone(),
            checksum: checksum_hex(self.checksum()),
        }
    }
}

/// Writes `set` into directory `path`, replacing any previous set there.
///
/// Files are first written to a sibling staging directory which is then
/// renamed into place, so a failed write never leaves a partial set at `path`.
pub fn write_embedding_set(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let staging = staging_path(path);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

    let result = (|| {
        let bytes = set.emb_bytes();
        let manifest = Manifest {
            checksum: checksum_hex(fnv1a64(&bytes)),
            ..set.manifest()
        };
        write_file(&staging.join(EMB_FILE), &bytes)?;

        let mut meta = Vec::new();
        for m in &set.meta {
            serde_json::to_writer(&mut meta, m).expect("metadata serializes");
            meta.push(b'\n');
        }
        write_file(&staging.join(META_FILE), &meta)?;

        let mut mf = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        mf.push(b'\n');
        write_file(&staging.join(MANIFEST_FILE), &mf)
    })();
    if let Err(e) = result {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }

    if path.exists() {
        fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    }
    fs::rename(&staging, path).map_err(|e| Error::io(path, e))
}

fn staging_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "set".into());
    path.with_file_name(format!(".{name}.partial-{}", std::process::id()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    f.sync_all().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let mpath = path.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: mpath,
        source,
    })
}

pub fn read_embedding_set(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let manifest = read_manifest(path)?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Invalid(format!(
            "{}: unsupported format version {}",
            path.display(),
            manifest.version
        )));
    }
    if manifest.n == 0 || manifest.d == 0 {
        return Err(Error::Invalid(format!(
            "{}: manifest declares n={}, d={}; both must be >= 1",
            path.display(),
            manifest.n,
            manifest.d
        )));
    }

    let epath = path.join(EMB_FILE);
    let bytes = fs::read(&epath).map_err(|e| Error::io(&epath, e))?;
    let expected = (manifest.n as u64) * (manifest.d as u64) * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: epath,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let actual = checksum_hex(fnv1a64(&bytes));
    if actual != manifest.checksum {
        return Err(Error::ChecksumMismatch {
            path: epath,
            expected: manifest.checksum,
            actual,
        });
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mpath = path.join(META_FILE);
    let file = fs::File::open(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let mut meta = Vec::with_capacity(manifest.n);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&mpath, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let m: SampleMeta = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: mpath.clone(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        meta.push(m);
    }
    if meta.len() != manifest.n {
        return Err(Error::Invalid(format!(
            "{}: {} metadata rows for n={}",
            mpath.display(),
            meta.len(),
            manifest.n
        )));
    }
    EmbeddingSet::new(
        manifest.d,
        data,
        meta,
        manifest.class_names,
        manifest.provenance,
    )
}

/// Rows matched by `sample_id` between a student and a teacher set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlignedPairs {
    /// `(student row, teacher row)` in student row order.
    pub pairs: Vec<(usize, usize)>,
    pub student_only: usize,
    pub teacher_only: usize,
}

impl AlignedPairs {
    pub fn student_rows(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn teacher_rows(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1).collect()
    }
}

pub fn align_pairs(student: &EmbeddingSet, teacher: &EmbeddingSet) -> Result<AlignedPairs> {
    let by_id: HashMap<&str, usize> = teacher
        .meta
        .iter()
        .enumerate()
        .map(|(i, m)| (m.sample_id.as_str(), i))
        .collect();
    let pairs: Vec<(usize, usize)> = student
        .meta
        .iter()
        .enumerate()
        .filter_map(|(i, m)| by_id.get(m.sample_id.as_str()).map(|&j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Invalid(
            "student and teacher sets share no sample_id".into(),
        ));
    }
    Ok(AlignedPairs {
        student_only: student.n - pairs.len(),
        teacher_only: teacher.n - pairs.len(),
        pairs,
    })
}

/// Groups rows by `bag_id`, groups ordered by first occurrence.
pub fn group_by_bag(set: &EmbeddingSet) -> Result<Vec<(String, Vec<usize>)>> {
    let empty: Vec<&str> = set
        .meta
        .iter()
        .filter(|m| m.bag_id.is_empty())
        .map(|m| m.sample_id.as_str())
        .collect();
    if !empty.is_empty() {
        return Err(Error::Invalid(format!(
            "empty bag_id for samples: {}",
            empty.join(", ")
        )));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, m) in set.meta.iter().enumerate() {
        let g = *index.entry(m.bag_id.as_str()).or_insert_with(|| {
            groups.push((m.bag_id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(i);
    }
    Ok(groups)
}

/// Reads an embedding CSV with header
/// `sample_id,bag_id,label,center_id,tissue_class,<d value columns>`.
///
/// Empty `label`, `center_id` or `tissue_class` cells become absent fields.
/// When `class_names` is `None`, classes are named `"0".."K-1"` with `K` one
/// past the largest label or tissue class seen.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    class_names: Option<Vec<String>>,
    provenance: &str,
) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    const FIXED: [&str; 5] = ["sample_id", "bag_id", "label", "center_id", "tissue_class"];
    for (i, want) in FIXED.iter().enumerate() {
        if headers.get(i) != Some(*want) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("column {} must be `{want}`", i + 1),
            });
        }
    }
    let d = headers.len() - FIXED.len();
    if d == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "no embedding value columns".into(),
        });
    }

    let mut data = Vec::new();
    let mut meta = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if rec.len() != headers.len() {
            return Err(bad(format!(
                "{} fields, expected {}",
                rec.len(),
                headers.len()
            )));
        }
        let opt_u32 = |s: &str, field: &str| -> Result<Option<u32>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| bad(format!("{field} `{s}` is not a non-negative integer")))
            }
        };
        meta.push(SampleMeta {
            sample_id: rec[0].to_string(),
            bag_id: rec[1].to_string(),
            label: opt_u32(&rec[2], "label")?,
            center_id: (!rec[3].is_empty()).then(|| rec[3].to_string()),
            tissue_class: opt_u32(&rec[4], "tissue_class")?,
        });
        for (j, cell) in rec.iter().skip(FIXED.len()).enumerate() {
            let v: f32 = cell
                .parse()
                .map_err(|_| bad(format!("value column {} `{cell}` is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(bad(format!("value column {} is not finite", j + 1)));
            }
            data.push(v);
        }
    }
    let class_names = class_names.unwrap_or_else(|| {
        let k = meta
            .iter()
            .flat_map(|m| [m.label, m.tissue_class])
            .flatten()
            .max()
            .map_or(0, |m| m as usize + 1);
        (0..k).map(|c| c.to_string()).collect()
    });
    EmbeddingSet::new(d, data, meta, class_names, provenance)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}
