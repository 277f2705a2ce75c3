//! Parquet-backed frame store.
//!
//! ```text
//! <root>/catalog.json
//! <root>/statics.parquet
//! <root>/<scenario>/frame_<t:06>.parquet    per-neuron columns
//! <root>/<scenario>/conn_<t:06>.parquet     (src_area, dst_area, count), zero counts omitted
//! ```

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parquet::basic::{Compression, Encoding};
use parquet::column::reader::ColumnReader;
use parquet::data_type::{BoolType, FloatType, Int32Type};
use parquet::file::metadata::KeyValue;
use parquet::file::properties::WriterProperties;
use parquet::file::reader::{FileReader, SerializedFileReader};
use parquet::file::writer::{SerializedFileWriter, SerializedRowGroupWriter};
use parquet::schema::parser::parse_message_type;
use parquet::schema::printer::print_schema;
use parquet::schema::types::{ColumnPath, Type as SchemaType};

use crate::error::{Error, Result};
use crate::model::{
    AreaConnectivity, ConnectivityStatus, FrameColumns, FrameKey, NeuronStatic, Scenario,
    ScenarioCatalog, Statics, TimestepFrame,
};

const CREATED_BY: &str = "plastiscope";

pub const NEURON_SCHEMA: &str = "
message neuron_frame {
    required int32 neuron_id (INTEGER(32,false));
    required float calcium;
    required float calcium_target_delta;
    required boolean fired;
    required float fired_fraction;
    required float grown_axons;
    required float grown_dendrites;
    required int32 synapses_in (INTEGER(32,false));
    required int32 synapses_out (INTEGER(32,false));
}";

pub const CONNECTIVITY_SCHEMA: &str = "
message area_connectivity {
    required int32 src_area (INTEGER(16,false));
    required int32 dst_area (INTEGER(16,false));
    required int32 count (INTEGER(32,false));
}";

pub const STATICS_SCHEMA: &str = "
message neuron_statics {
    required int32 neuron_id (INTEGER(32,false));
    required float x;
    required float y;
    required float z;
    required int32 cluster_id (INTEGER(32,false));
    required int32 cluster_slot (INTEGER(8,false));
    required int32 area_id (INTEGER(16,false));
}";

/// Continuous float columns. `fired_fraction` is left out: it takes at most
/// 101 distinct values per window and dictionary-encodes far better.
const FLOAT_COLUMNS: [&str; 4] = [
    "calcium",
    "calcium_target_delta",
    "grown_axons",
    "grown_dendrites",
];

/// Where the two files of one frame live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLocator {
    pub key: FrameKey,
    pub neuron_path: PathBuf,
    pub connectivity_path: PathBuf,
}

impl FrameLocator {
    pub fn new(root: &Path, key: FrameKey) -> Self {
        let dir = root.join(key.scenario.slug());
        FrameLocator {
            key,
            neuron_path: dir.join(format!("frame_{:06}.parquet", key.timestep)),
            connectivity_path: dir.join(format!("conn_{:06}.parquet", key.timestep)),
        }
    }

    /// Combined on-disk size of both files.
    pub fn stored_bytes(&self) -> Result<u64> {
        let size = |p: &Path| fs::metadata(p).map(|m| m.len()).map_err(|e| Error::io(p, e));
        Ok(size(&self.neuron_path)? + size(&self.connectivity_path)?)
    }
}

fn schema(text: &str) -> Arc<SchemaType> {
    Arc::new(parse_message_type(text).expect("built-in schema parses"))
}

fn pq<T>(path: &Path, r: parquet::errors::Result<T>) -> Result<T> {
    r.map_err(|source| Error::Parquet {
        path: path.to_path_buf(),
        source,
    })
}

fn kv(key: &str, value: impl ToString) -> KeyValue {
    KeyValue::new(key.to_string(), value.to_string())
}

fn properties(metadata: Vec<KeyValue>, float_columns: &[&str]) -> Arc<WriterProperties> {
    let mut b = WriterProperties::builder()
        .set_created_by(CREATED_BY.to_string())
        .set_compression(Compression::SNAPPY)
        .set_key_value_metadata(Some(metadata));
    for name in float_columns {
        // continuous floats rarely repeat; splitting bytes lets snappy find the
        // shared sign/exponent bytes
        let col = ColumnPath::from(*name);
        b = b
            .set_column_dictionary_enabled(col.clone(), false)
            .set_column_encoding(col, Encoding::BYTE_STREAM_SPLIT);
    }
    b = b
        .set_column_dictionary_enabled(ColumnPath::from("neuron_id"), false)
        .set_column_encoding(ColumnPath::from("neuron_id"), Encoding::DELTA_BINARY_PACKED);
    Arc::new(b.build())
}

fn schema_text(t: &SchemaType) -> String {
    let mut out = Vec::new();
    print_schema(&mut out, t);
    String::from_utf8_lossy(&out).into_owned()
}

/// Refuses to replace an existing file that holds a different schema.
fn check_overwrite(path: &Path, expected: &SchemaType) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let existing = File::open(path)
        .ok()
        .and_then(|f| SerializedFileReader::new(f).ok())
        .map(|r| r.metadata().file_metadata().schema().clone());
    match existing {
        Some(s) if s == *expected => Ok(()),
        Some(s) => Err(Error::Conflict {
            path: path.to_path_buf(),
            message: format!("existing schema differs:\n{}", schema_text(&s)),
        }),
        None => Err(Error::Conflict {
            path: path.to_path_buf(),
            message: "existing file is not readable parquet".into(),
        }),
    }
}

/// Writes a single-row-group file through a temporary sibling and renames it in place.
fn write_file(
    path: &Path,
    schema_text: &str,
    props: Arc<WriterProperties>,
    fill: impl FnOnce(&mut SerializedRowGroupWriter<'_, File>) -> parquet::errors::Result<()>,
) -> Result<()> {
    let schema = schema(schema_text);
    check_overwrite(path, &schema)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = path.with_extension("parquet.partial");
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let result = (|| {
        let mut writer = SerializedFileWriter::new(file, schema, props)?;
        let mut rg = writer.next_row_group()?;
        fill(&mut rg)?;
        rg.close()?;
        writer.close()?;
        Ok(())
    })();
    if let Err(e) = pq(&tmp, result) {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_i32(rg: &mut SerializedRowGroupWriter<'_, File>, values: &[i32]) -> parquet::errors::Result<()> {
    let mut col = rg.next_column()?.expect("schema column");
    col.typed::<Int32Type>().write_batch(values, None, None)?;
    col.close()
}

fn write_f32(rg: &mut SerializedRowGroupWriter<'_, File>, values: &[f32]) -> parquet::errors::Result<()> {
    let mut col = rg.next_column()?.expect("schema column");
    col.typed::<FloatType>().write_batch(values, None, None)?;
    col.close()
}

fn write_bool(rg: &mut SerializedRowGroupWriter<'_, File>, values: &[bool]) -> parquet::errors::Result<()> {
    let mut col = rg.next_column()?.expect("schema column");
    col.typed::<BoolType>().write_batch(values, None, None)?;
    col.close()
}

fn as_i32(v: &[u32]) -> Vec<i32> {
    v.iter().map(|x| *x as i32).collect()
}

/// Persists a frame as two Parquet files under `root`.
pub fn write_frame(frame: &TimestepFrame, root: &Path) -> Result<FrameLocator> {
    let n = frame.neuron_count();
    frame.columns.validate(n)?;
    let locator = FrameLocator::new(root, frame.key());
    let c = &frame.columns;

    let meta = vec![
        kv("scenario", frame.scenario.slug()),
        kv("timestep", frame.timestep),
    ];
    let ids: Vec<i32> = (0..n as i32).collect();
    write_file(&locator.neuron_path, NEURON_SCHEMA, properties(meta, &FLOAT_COLUMNS), |rg| {
        write_i32(rg, &ids)?;
        write_f32(rg, &c.calcium)?;
        write_f32(rg, &c.calcium_target_delta)?;
        write_bool(rg, &c.fired)?;
        write_f32(rg, &c.fired_fraction)?;
        write_f32(rg, &c.grown_axons)?;
        write_f32(rg, &c.grown_dendrites)?;
        write_i32(rg, &as_i32(&c.synapses_in))?;
        write_i32(rg, &as_i32(&c.synapses_out))
    })?;

    let status = match frame.connectivity_status {
        ConnectivityStatus::Present => "present",
        ConnectivityStatus::Missing => "missing",
    };
    let meta = vec![
        kv("scenario", frame.scenario.slug()),
        kv("timestep", frame.timestep),
        kv("area_count", frame.area_count()),
        kv("connectivity_status", status),
    ];
    let (mut src, mut dst, mut count) = (Vec::new(), Vec::new(), Vec::new());
    for (s, t, k) in frame.connectivity.nonzero() {
        src.push(s as i32);
        dst.push(t as i32);
        count.push(k as i32);
    }
    write_file(&locator.connectivity_path, CONNECTIVITY_SCHEMA, properties(meta, &[]), |rg| {
        write_i32(rg, &src)?;
        write_i32(rg, &dst)?;
        write_i32(rg, &count)
    })?;
    Ok(locator)
}

/// Opened file with its schema verified against `expected`.
struct CheckedFile {
    path: PathBuf,
    reader: SerializedFileReader<File>,
}

impl CheckedFile {
    fn open(path: &Path, expected: &str) -> Result<Self> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::NotFound(path.display().to_string()))
            }
            Err(e) => return Err(Error::io(path, e)),
        };
        let reader = pq(path, SerializedFileReader::new(file))?;
        let found = reader.metadata().file_metadata().schema();
        let want = schema(expected);
        if *found != *want {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!(
                    "expected\n{}found\n{}",
                    schema_text(&want),
                    schema_text(found)
                ),
            });
        }
        Ok(CheckedFile {
            path: path.to_path_buf(),
            reader,
        })
    }

    fn meta(&self, key: &str) -> Result<String> {
        self.reader
            .metadata()
            .file_metadata()
            .key_value_metadata()
            .and_then(|kvs| kvs.iter().find(|kv| kv.key == key))
            .and_then(|kv| kv.value.clone())
            .ok_or_else(|| Error::Schema {
                path: self.path.clone(),
                message: format!("missing metadata key '{key}'"),
            })
    }

    fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.meta(key)?;
        v.parse().map_err(|_| Error::Schema {
            path: self.path.clone(),
            message: format!("bad metadata {key}='{v}'"),
        })
    }

    fn rows(&self) -> usize {
        self.reader.metadata().file_metadata().num_rows() as usize
    }

    fn column(&self, index: usize) -> Result<Column> {
        let rows = self.rows();
        let mut out = None;
        for rg in 0..self.reader.num_row_groups() {
            let group = pq(&self.path, self.reader.get_row_group(rg))?;
            let reader = pq(&self.path, group.get_column_reader(index))?;
            let want = group.metadata().num_rows() as usize;
            let col = out.get_or_insert_with(|| match reader {
                ColumnReader::BoolColumnReader(_) => Column::Bool(Vec::with_capacity(rows)),
                ColumnReader::FloatColumnReader(_) => Column::F32(Vec::with_capacity(rows)),
                _ => Column::I32(Vec::with_capacity(rows)),
            });
            let read = match (reader, col) {
                (ColumnReader::BoolColumnReader(mut r), Column::Bool(v)) => {
                    r.read_records(want, None, None, v).map(|x| x.0)
                }
                (ColumnReader::FloatColumnReader(mut r), Column::F32(v)) => {
                    r.read_records(want, None, None, v).map(|x| x.0)
                }
                (ColumnReader::Int32ColumnReader(mut r), Column::I32(v)) => {
                    r.read_records(want, None, None, v).map(|x| x.0)
                }
                _ => {
                    return Err(Error::Schema {
                        path: self.path.clone(),
                        message: format!("column {index} changes type across row groups"),
                    })
                }
            };
            let read = pq(&self.path, read)?;
            if read != want {
                return Err(Error::Schema {
                    path: self.path.clone(),
                    message: format!("column {index}: read {read} of {want} rows"),
                });
            }
        }
        Ok(out.unwrap_or(Column::I32(Vec::new())))
    }

    fn f32s(&self, index: usize) -> Result<Vec<f32>> {
        match self.column(index)? {
            Column::F32(v) => Ok(v),
            Column::I32(v) if v.is_empty() => Ok(Vec::new()),
            _ => Err(self.type_error(index, "float")),
        }
    }

    fn u32s(&self, index: usize) -> Result<Vec<u32>> {
        match self.column(index)? {
            Column::I32(v) => Ok(v.into_iter().map(|x| x as u32).collect()),
            _ => Err(self.type_error(index, "int32")),
        }
    }

    fn bools(&self, index: usize) -> Result<Vec<bool>> {
        match self.column(index)? {
            Column::Bool(v) => Ok(v),
            Column::I32(v) if v.is_empty() => Ok(Vec::new()),
            _ => Err(self.type_error(index, "boolean")),
        }
    }

    fn type_error(&self, index: usize, want: &str) -> Error {
        Error::Schema {
            path: self.path.clone(),
            message: format!("column {index} is not {want}"),
        }
    }
}

enum Column {
    Bool(Vec<bool>),
    F32(Vec<f32>),
    I32(Vec<i32>),
}

/// Reads back a frame written by [`write_frame`].
pub fn read_frame(locator: &FrameLocator) -> Result<TimestepFrame> {
    let nf = CheckedFile::open(&locator.neuron_path, NEURON_SCHEMA)?;
    let cf = CheckedFile::open(&locator.connectivity_path, CONNECTIVITY_SCHEMA)?;
    let scenario: Scenario = nf.meta("scenario")?.parse()?;
    let timestep: u32 = nf.meta_parse("timestep")?;
    if scenario != locator.key.scenario || timestep != locator.key.timestep {
        return Err(Error::Schema {
            path: locator.neuron_path.clone(),
            message: format!("file holds {scenario}@{timestep}, expected {}", locator.key),
        });
    }

    let ids = nf.u32s(0)?;
    if ids.iter().enumerate().any(|(i, id)| *id as usize != i) {
        return Err(Error::Schema {
            path: locator.neuron_path.clone(),
            message: "neuron_id column is not 0..N".into(),
        });
    }
    let columns = FrameColumns {
        calcium: nf.f32s(1)?,
        calcium_target_delta: nf.f32s(2)?,
        fired: nf.bools(3)?,
        fired_fraction: nf.f32s(4)?,
        grown_axons: nf.f32s(5)?,
        grown_dendrites: nf.f32s(6)?,
        synapses_in: nf.u32s(7)?,
        synapses_out: nf.u32s(8)?,
    };
    columns.validate(ids.len())?;

    let area_count: usize = cf.meta_parse("area_count")?;
    let connectivity_status = match cf.meta("connectivity_status")?.as_str() {
        "present" => ConnectivityStatus::Present,
        "missing" => ConnectivityStatus::Missing,
        other => {
            return Err(Error::Schema {
                path: locator.connectivity_path.clone(),
                message: format!("unknown connectivity_status '{other}'"),
            })
        }
    };
    let src = cf.u32s(0)?;
    let dst = cf.u32s(1)?;
    let count = cf.u32s(2)?;
    let connectivity = AreaConnectivity::from_triplets(
        area_count,
        src.iter()
            .zip(&dst)
            .zip(&count)
            .map(|((s, t), c)| (*s as u16, *t as u16, *c)),
    )
    .map_err(|e| Error::Schema {
        path: locator.connectivity_path.clone(),
        message: e.to_string(),
    })?;

    Ok(TimestepFrame {
        scenario,
        timestep,
        columns,
        connectivity,
        connectivity_status,
    })
}

/// A store directory.
#[derive(Debug, Clone)]
pub struct FrameStore {
    root: PathBuf,
}

impl FrameStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FrameStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn locator(&self, key: FrameKey) -> FrameLocator {
        FrameLocator::new(&self.root, key)
    }

    pub fn write_frame(&self, frame: &TimestepFrame) -> Result<FrameLocator> {
        write_frame(frame, &self.root)
    }

    pub fn read_frame(&self, key: FrameKey) -> Result<TimestepFrame> {
        read_frame(&self.locator(key))
    }

    pub fn catalog_path(&self) -> PathBuf {
        self.root.join("catalog.json")
    }

    pub fn statics_path(&self) -> PathBuf {
        self.root.join("statics.parquet")
    }

    pub fn has_catalog(&self) -> bool {
        self.catalog_path().is_file()
    }

    pub fn write_catalog(&self, catalog: &ScenarioCatalog) -> Result<()> {
        catalog.validate()?;
        let path = self.catalog_path();
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let mut json = serde_json::to_vec_pretty(catalog).map_err(|source| Error::Catalog {
            path: path.clone(),
            source,
        })?;
        json.push(b'\n');
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn read_catalog(&self) -> Result<ScenarioCatalog> {
        let path = self.catalog_path();
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::NotFound(path.display().to_string()))
            }
            Err(e) => return Err(Error::io(&path, e)),
        };
        let catalog: ScenarioCatalog =
            serde_json::from_slice(&bytes).map_err(|source| Error::Catalog { path, source })?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn write_statics(&self, statics: &Statics) -> Result<()> {
        statics.validate()?;
        let areas = serde_json::to_string(&statics.areas).expect("strings serialize");
        let meta = vec![kv("areas", areas)];
        let n = &statics.neurons;
        let ints = |f: fn(&NeuronStatic) -> i32| n.iter().map(f).collect::<Vec<_>>();
        let floats = |axis: usize| n.iter().map(|s| s.position[axis]).collect::<Vec<_>>();
        write_file(
            &self.statics_path(),
            STATICS_SCHEMA,
            properties(meta, &["x", "y", "z"]),
            |rg| {
                write_i32(rg, &ints(|s| s.neuron_id as i32))?;
                write_f32(rg, &floats(0))?;
                write_f32(rg, &floats(1))?;
                write_f32(rg, &floats(2))?;
                write_i32(rg, &ints(|s| s.cluster_id as i32))?;
                write_i32(rg, &ints(|s| s.cluster_slot as i32))?;
                write_i32(rg, &ints(|s| s.area_id as i32))
            },
        )
    }

    pub fn read_statics(&self) -> Result<Statics> {
        let path = self.statics_path();
        let f = CheckedFile::open(&path, STATICS_SCHEMA)?;
        let areas: Vec<String> =
            serde_json::from_str(&f.meta("areas")?).map_err(|e| Error::Schema {
                path: path.clone(),
                message: format!("bad area table: {e}"),
            })?;
        let ids = f.u32s(0)?;
        let (x, y, z) = (f.f32s(1)?, f.f32s(2)?, f.f32s(3)?);
        let cluster = f.u32s(4)?;
        let slot = f.u32s(5)?;
        let area = f.u32s(6)?;
        let neurons = (0..ids.len())
            .map(|i| NeuronStatic {
                neuron_id: ids[i],
                position: [x[i], y[i], z[i]],
                cluster_id: cluster[i],
                cluster_slot: slot[i] as u8,
                area_id: area[i] as u16,
            })
            .collect();
        let statics = Statics { neurons, areas };
        statics.validate()?;
        Ok(statics)
    }
}
