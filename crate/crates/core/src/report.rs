//! Canonical JSON output and report assembly.
//!
//! Every JSON artifact this crate writes (models, reports, stream verdicts)
//! goes through [`canonical_json`]: object keys sorted, floats rendered with
//! `{:.16e}` (17 significant digits, enough to round-trip any f64 exactly),
//! integers plain, no insignificant whitespace. Equal values therefore
//! serialize to equal bytes, which is what makes "same inputs, same output
//! bytes" a testable contract, and serialize/parse/serialize is the
//! identity on bytes.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{CvReport, GridReport, Metrics};
use crate::threshold::DetectionResult;

/// Serialize any value to canonical JSON text (no trailing newline).
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let tree = value.serialize(CanonSerializer).map_err(CanonError::into_error)?;
    let mut out = String::new();
    write_canon(&tree, &mut out);
    Ok(out)
}

/// Intermediate tree for canonical serialization. Floats are finite by
/// construction (the serializer refuses anything else), and maps sort
/// themselves, so writing the tree out cannot fail.
enum Canon {
    Null,
    Bool(bool),
    Uint(u64),
    Int(i64),
    Float(f64),
    Str(String),
    Array(Vec<Canon>),
    Map(std::collections::BTreeMap<String, Canon>),
}

fn write_canon(value: &Canon, out: &mut String) {
    match value {
        Canon::Null => out.push_str("null"),
        Canon::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Canon::Uint(u) => out.push_str(&u.to_string()),
        Canon::Int(i) => out.push_str(&i.to_string()),
        Canon::Float(f) => out.push_str(&format!("{f:.16e}")),
        Canon::Str(s) => write_escaped(s, out),
        Canon::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canon(item, out);
            }
            out.push(']');
        }
        Canon::Map(map) => {
            out.push('{');
            for (i, (key, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_escaped(key, out);
                out.push(':');
                write_canon(item, out);
            }
            out.push('}');
        }
    }
}

fn write_escaped(s: &str, out: &mut String) {
    out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
}

#[derive(Debug)]
enum CanonError {
    NonFinite,
    Unsupported(String),
}

impl std::fmt::Display for CanonError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CanonError::NonFinite => f.write_str("cannot serialize a non-finite number"),
            CanonError::Unsupported(msg) => write!(f, "cannot serialize to JSON: {msg}"),
        }
    }
}

impl std::error::Error for CanonError {}

impl serde::ser::Error for CanonError {
    fn custom<T: std::fmt::Display>(msg: T) -> Self {
        CanonError::Unsupported(msg.to_string())
    }
}

impl CanonError {
    fn into_error(self) -> Error {
        match self {
            CanonError::NonFinite => Error::numeric("report", "cannot serialize a non-finite number"),
            CanonError::Unsupported(msg) => Error::data("report", format!("cannot serialize to JSON: {msg}")),
        }
    }
}

/// A serde serializer into [`Canon`]. The one behavioral difference from
/// `serde_json::to_value` is the reason it exists: non-finite floats are an
/// error here, not `null`.
struct CanonSerializer;

type CanonResult = std::result::Result<Canon, CanonError>;

impl serde::Serializer for CanonSerializer {
    type Ok = Canon;
    type Error = CanonError;
    type SerializeSeq = CanonSeq;
    type SerializeTuple = CanonSeq;
    type SerializeTupleStruct = CanonSeq;
    type SerializeTupleVariant = CanonTagged<CanonSeq>;
    type SerializeMap = CanonMap;
    type SerializeStruct = CanonMap;
    type SerializeStructVariant = CanonTagged<CanonMap>;

    fn serialize_bool(self, v: bool) -> CanonResult {
        Ok(Canon::Bool(v))
    }

    fn serialize_i8(self, v: i8) -> CanonResult {
        Ok(Canon::Int(v.into()))
    }

    fn serialize_i16(self, v: i16) -> CanonResult {
        Ok(Canon::Int(v.into()))
    }

    fn serialize_i32(self, v: i32) -> CanonResult {
        Ok(Canon::Int(v.into()))
    }

    fn serialize_i64(self, v: i64) -> CanonResult {
        Ok(Canon::Int(v))
    }

    fn serialize_u8(self, v: u8) -> CanonResult {
        Ok(Canon::Uint(v.into()))
    }

    fn serialize_u16(self, v: u16) -> CanonResult {
        Ok(Canon::Uint(v.into()))
    }

    fn serialize_u32(self, v: u32) -> CanonResult {
        Ok(Canon::Uint(v.into()))
    }

    fn serialize_u64(self, v: u64) -> CanonResult {
        Ok(Canon::Uint(v))
    }

    fn serialize_f32(self, v: f32) -> CanonResult {
        self.serialize_f64(v.into())
    }

    fn serialize_f64(self, v: f64) -> CanonResult {
        if v.is_finite() {
            Ok(Canon::Float(v))
        } else {
            Err(CanonError::NonFinite)
        }
    }

    fn serialize_char(self, v: char) -> CanonResult {
        Ok(Canon::Str(v.to_string()))
    }

    fn serialize_str(self, v: &str) -> CanonResult {
        Ok(Canon::Str(v.to_string()))
    }

    fn serialize_bytes(self, _v: &[u8]) -> CanonResult {
        Err(CanonError::Unsupported("raw bytes have no canonical form".to_string()))
    }

    fn serialize_none(self) -> CanonResult {
        Ok(Canon::Null)
    }

    fn serialize_some<T: Serialize + ?Sized>(self, value: &T) -> CanonResult {
        value.serialize(self)
    }

    fn serialize_unit(self) -> CanonResult {
        Ok(Canon::Null)
    }

    fn serialize_unit_struct(self, _name: &'static str) -> CanonResult {
        Ok(Canon::Null)
    }

    fn serialize_unit_variant(self, _name: &'static str, _index: u32, variant: &'static str) -> CanonResult {
        Ok(Canon::Str(variant.to_string()))
    }

    fn serialize_newtype_struct<T: Serialize + ?Sized>(self, _name: &'static str, value: &T) -> CanonResult {
        value.serialize(self)
    }

    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        _index: u32,
        variant: &'static str,
        value: &T,
    ) -> CanonResult {
        let mut map = std::collections::BTreeMap::new();
        map.insert(variant.to_string(), value.serialize(CanonSerializer)?);
        Ok(Canon::Map(map))
    }

    fn serialize_seq(self, len: Option<usize>) -> std::result::Result<Self::SerializeSeq, CanonError> {
        Ok(CanonSeq { items: Vec::with_capacity(len.unwrap_or(0)) })
    }

    fn serialize_tuple(self, len: usize) -> std::result::Result<Self::SerializeTuple, CanonError> {
        self.serialize_seq(Some(len))
    }

    fn serialize_tuple_struct(
        self,
        _name: &'static str,
        len: usize,
    ) -> std::result::Result<Self::SerializeTupleStruct, CanonError> {
        self.serialize_seq(Some(len))
    }

    fn serialize_tuple_variant(
        self,
        _name: &'static str,
        _index: u32,
        variant: &'static str,
        len: usize,
    ) -> std::result::Result<Self::SerializeTupleVariant, CanonError> {
        Ok(CanonTagged { tag: variant, inner: CanonSeq { items: Vec::with_capacity(len) } })
    }

    fn serialize_map(self, _len: Option<usize>) -> std::result::Result<Self::SerializeMap, CanonError> {
        Ok(CanonMap { entries: std::collections::BTreeMap::new(), pending_key: None })
    }

    fn serialize_struct(
        self,
        _name: &'static str,
        _len: usize,
    ) -> std::result::Result<Self::SerializeStruct, CanonError> {
        self.serialize_map(None)
    }

    fn serialize_struct_variant(
        self,
        _name: &'static str,
        _index: u32,
        variant: &'static str,
        _len: usize,
    ) -> std::result::Result<Self::SerializeStructVariant, CanonError> {
        Ok(CanonTagged {
            tag: variant,
            inner: CanonMap { entries: std::collections::BTreeMap::new(), pending_key: None },
        })
    }
}

struct CanonSeq {
    items: Vec<Canon>,
}

impl serde::ser::SerializeSeq for CanonSeq {
    type Ok = Canon;
    type Error = CanonError;

    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> std::result::Result<(), CanonError> {
        self.items.push(value.serialize(CanonSerializer)?);
        Ok(())
    }

    fn end(self) -> CanonResult {
        Ok(Canon::Array(self.items))
    }
}

impl serde::ser::SerializeTuple for CanonSeq {
    type Ok = Canon;
    type Error = CanonError;

    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> std::result::Result<(), CanonError> {
        serde::ser::SerializeSeq::serialize_element(self, value)
    }

    fn end(self) -> CanonResult {
        serde::ser::SerializeSeq::end(self)
    }
}

impl serde::ser::SerializeTupleStruct for CanonSeq {
    type Ok = Canon;
    type Error = CanonError;

    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> std::result::Result<(), CanonError> {
        serde::ser::SerializeSeq::serialize_element(self, value)
    }

    fn end(self) -> CanonResult {
        serde::ser::SerializeSeq::end(self)
    }
}

struct CanonMap {
    entries: std::collections::BTreeMap<String, Canon>,
    pending_key: Option<String>,
}

impl serde::ser::SerializeMap for CanonMap {
    type Ok = Canon;
    type Error = CanonError;

    fn serialize_key<T: Serialize + ?Sized>(&mut self, key: &T) -> std::result::Result<(), CanonError> {
        self.pending_key = Some(key.serialize(CanonKeySerializer)?);
        Ok(())
    }

    fn serialize_value<T: Serialize + ?Sized>(&mut self, value: &T) -> std::result::Result<(), CanonError> {
        let key = self.pending_key.take().expect("serialize_key precedes serialize_value");
        self.entries.insert(key, value.serialize(CanonSerializer)?);
        Ok(())
    }

    fn end(self) -> CanonResult {
        Ok(Canon::Map(self.entries))
    }
}

impl serde::ser::SerializeStruct for CanonMap {
    type Ok = Canon;
    type Error = CanonError;

    fn serialize_field<T: Serialize + ?Sized>(
        &mut self,
        key: &'static str,
        value: &T,
    ) -> std::result::Result<(), CanonError> {
        self.entries.insert(key.to_string(), value.serialize(CanonSerializer)?);
        Ok(())
    }

    fn end(self) -> CanonResult {
        Ok(Canon::Map(self.entries))
    }
}

/// Externally tagged variant bodies: `{"variant": ...}`.
struct CanonTagged<S> {
    tag: &'static str,
    inner: S,
}

fn tagged(tag: &'static str, body: Canon) -> Canon {
    let mut map = std::collections::BTreeMap::new();
    map.insert(tag.to_string(), body);
    Canon::Map(map)
}

impl serde::ser::SerializeTupleVariant for CanonTagged<CanonSeq> {
    type Ok = Canon;
    type Error = CanonError;

    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> std::result::Result<(), CanonError> {
        serde::ser::SerializeSeq::serialize_element(&mut self.inner, value)
    }

    fn end(self) -> CanonResult {
        Ok(tagged(self.tag, Canon::Array(self.inner.items)))
    }
}

impl serde::ser::SerializeStructVariant for CanonTagged<CanonMap> {
    type Ok = Canon;
    type Error = CanonError;

    fn serialize_field<T: Serialize + ?Sized>(
        &mut self,
        key: &'static str,
        value: &T,
    ) -> std::result::Result<(), CanonError> {
        serde::ser::SerializeStruct::serialize_field(&mut self.inner, key, value)
    }

    fn end(self) -> CanonResult {
        Ok(tagged(self.tag, Canon::Map(self.inner.entries)))
    }
}

/// Map keys must already be strings (or stringify losslessly).
struct CanonKeySerializer;

macro_rules! key_from_display {
    ($method:ident, $ty:ty) => {
        fn $method(self, v: $ty) -> std::result::Result<String, CanonError> {
            Ok(v.to_string())
        }
    };
}

impl serde::Serializer for CanonKeySerializer {
    type Ok = String;
    type Error = CanonError;
    type SerializeSeq = serde::ser::Impossible<String, CanonError>;
    type SerializeTuple = serde::ser::Impossible<String, CanonError>;
    type SerializeTupleStruct = serde::ser::Impossible<String, CanonError>;
    type SerializeTupleVariant = serde::ser::Impossible<String, CanonError>;
    type SerializeMap = serde::ser::Impossible<String, CanonError>;
    type SerializeStruct = serde::ser::Impossible<String, CanonError>;
    type SerializeStructVariant = serde::ser::Impossible<String, CanonError>;

    key_from_display!(serialize_i8, i8);
    key_from_display!(serialize_i16, i16);
    key_from_display!(serialize_i32, i32);
    key_from_display!(serialize_i64, i64);
    key_from_display!(serialize_u8, u8);
    key_from_display!(serialize_u16, u16);
    key_from_display!(serialize_u32, u32);
    key_from_display!(serialize_u64, u64);
    key_from_display!(serialize_char, char);

    fn serialize_str(self, v: &str) -> std::result::Result<String, CanonError> {
        Ok(v.to_string())
    }

    fn serialize_unit_variant(
        self,
        _name: &'static str,
        _index: u32,
        variant: &'static str,
    ) -> std::result::Result<String, CanonError> {
        Ok(variant.to_string())
    }

    fn serialize_bool(self, _v: bool) -> std::result::Result<String, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_f32(self, _v: f32) -> std::result::Result<String, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_f64(self, _v: f64) -> std::result::Result<String, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_bytes(self, _v: &[u8]) -> std::result::Result<String, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_none(self) -> std::result::Result<String, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_some<T: Serialize + ?Sized>(self, _value: &T) -> std::result::Result<String, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_unit(self) -> std::result::Result<String, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_unit_struct(self, _name: &'static str) -> std::result::Result<String, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_newtype_struct<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        value: &T,
    ) -> std::result::Result<String, CanonError> {
        value.serialize(self)
    }

    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        _index: u32,
        _variant: &'static str,
        _value: &T,
    ) -> std::result::Result<String, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_seq(self, _len: Option<usize>) -> std::result::Result<Self::SerializeSeq, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_tuple(self, _len: usize) -> std::result::Result<Self::SerializeTuple, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_tuple_struct(
        self,
        _name: &'static str,
        _len: usize,
    ) -> std::result::Result<Self::SerializeTupleStruct, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_tuple_variant(
        self,
        _name: &'static str,
        _index: u32,
        _variant: &'static str,
        _len: usize,
    ) -> std::result::Result<Self::SerializeTupleVariant, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_map(self, _len: Option<usize>) -> std::result::Result<Self::SerializeMap, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_struct(
        self,
        _name: &'static str,
        _len: usize,
    ) -> std::result::Result<Self::SerializeStruct, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }

    fn serialize_struct_variant(
        self,
        _name: &'static str,
        _index: u32,
        _variant: &'static str,
        _len: usize,
    ) -> std::result::Result<Self::SerializeStructVariant, CanonError> {
        Err(CanonError::Unsupported("map keys must be strings".to_string()))
    }
}

/// Write `content` (plus a trailing newline) to `path` atomically: the bytes
/// land in a temporary file in the same directory and are renamed over the
/// target, so readers never observe a half-written file.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let mut bytes = content.as_bytes().to_vec();
    bytes.push(b'\n');
    write_atomic_bytes(path, &bytes)
}

/// [`write_atomic`] without the trailing newline — for content that already
/// carries its own line endings (CSV output).
pub fn write_atomic_bytes(path: &Path, content: &[u8]) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut temp = tempfile_in(parent)?;
    temp.write_all(content)?;
    temp.flush()?;
    let (file, temp_path) = temp.into_parts();
    file.sync_all()?;
    drop(file);
    std::fs::rename(&temp_path, path).map_err(|e| {
        let _ = std::fs::remove_file(&temp_path);
        Error::data("io", format!("cannot move output into place at {}: {e}", path.display()))
    })?;
    Ok(())
}

struct TempFile {
    file: Option<std::fs::File>,
    path: std::path::PathBuf,
}

impl TempFile {
    fn into_parts(mut self) -> (std::fs::File, std::path::PathBuf) {
        (self.file.take().expect("file present until into_parts"), std::mem::take(&mut self.path))
    }
}

impl Write for TempFile {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.file.as_mut().expect("file open").write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.file.as_mut().expect("file open").flush()
    }
}

impl Drop for TempFile {
    fn drop(&mut self) {
        if self.file.is_some() && !self.path.as_os_str().is_empty() {
            let _ = std::fs::remove_file(&self.path);
        }
    }
}

fn tempfile_in(dir: &Path) -> Result<TempFile> {
    // Process id plus a counter keeps concurrent writers in the same
    // directory from colliding.
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let serial = COUNTER.fetch_add(1, Ordering::Relaxed);
    let name = format!(".wod-{}-{serial}.tmp", std::process::id());
    let path = dir.join(name);
    let file = std::fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)
        .map_err(|e| Error::data("io", format!("cannot create temporary file in {}: {e}", dir.display())))?;
    Ok(TempFile { file: Some(file), path })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub features: usize,
    pub feature_names: Vec<String>,
    pub labeled_outliers: Option<usize>,
}

impl DatasetSummary {
    pub fn of(data: &Dataset) -> Self {
        DatasetSummary {
            rows: data.n(),
            features: data.dims(),
            feature_names: data.feature_names().to_vec(),
            labeled_outliers: data.labels().map(|l| l.iter().filter(|&&x| x).count()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopRow {
    pub row_id: String,
    pub score: f64,
    pub flagged: bool,
}

/// Report for `detect` and `score`: configuration echo, data shape, the
/// threshold decision, the highest-scoring rows, and metrics when labels
/// were available.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectReport {
    pub command: String,
    pub config: PipelineConfig,
    pub dataset: DatasetSummary,
    pub threshold: Option<f64>,
    pub threshold_policy: String,
    pub score_method: Option<String>,
    pub model_ref: Option<String>,
    pub flagged: usize,
    pub top_rows: Vec<TopRow>,
    pub metrics: Option<Metrics>,
    pub cluster_iterations: Option<usize>,
    pub cluster_converged: Option<bool>,
    pub cluster_objective: Option<f64>,
}

impl DetectReport {
    pub fn new(command: &str, config: &PipelineConfig, data: &Dataset, result: &DetectionResult) -> Self {
        DetectReport {
            command: command.to_string(),
            config: config.clone(),
            dataset: DatasetSummary::of(data),
            threshold: result.threshold,
            threshold_policy: result.meta.threshold_policy.clone(),
            score_method: result.meta.score_method.clone(),
            model_ref: result.meta.model_ref.clone(),
            flagged: result.flag_count(),
            top_rows: top_rows(data, result, 10),
            metrics: None,
            cluster_iterations: None,
            cluster_converged: None,
            cluster_objective: None,
        }
    }
}

/// The `limit` highest-scoring rows, descending; score ties break toward
/// the earlier row.
pub fn top_rows(data: &Dataset, result: &DetectionResult, limit: usize) -> Vec<TopRow> {
    let scores = result.scores.as_slice();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).expect("scores are finite").then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(limit)
        .map(|i| TopRow { row_id: data.row_ids()[i].clone(), score: scores[i], flagged: result.flags[i] })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub command: String,
    pub config: PipelineConfig,
    pub dataset: DatasetSummary,
    pub folds: usize,
    pub seed: u64,
    pub cv: CvReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneReport {
    pub command: String,
    pub config: PipelineConfig,
    pub dataset: DatasetSummary,
    pub grid: GridReport,
}
