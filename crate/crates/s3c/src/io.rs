//! Bit-exact persistence: tensor blobs, dataset matrices, CSV import, model
//! and classifier archives, and image input.
//!
//! Formats:
//! - tensor blob: magic `S3CT`, u8 rank, u32 dims, f64 little-endian payload
//! - dataset matrix: magic `S3CD`, u32 rows, u32 cols, f64 little-endian
//!   payload (`S3CS` is the optional f32 export of the same layout)
//! - raw image: magic `S3CI`, u32 H, W, C, then C planes of H×W f32
//! - archives: a directory holding `manifest.json` plus one blob per tensor
//!
//! Everything persisted is deterministic — no timestamps — so identical runs
//! produce byte-identical archives.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::classify::{FeatureScaler, LinearModel};
use crate::model::{ModelError, ModelParams};
use crate::pipeline::{Image, WhiteningTransform};

pub const FORMAT_VERSION: u32 = 1;
const TENSOR_MAGIC: &[u8; 4] = b"S3CT";
const MATRIX_MAGIC: &[u8; 4] = b"S3CD";
const MATRIX_F32_MAGIC: &[u8; 4] = b"S3CS";
const IMAGE_MAGIC: &[u8; 4] = b"S3CI";

fn created_by() -> String {
    format!("s3c {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt archive file {file}: {detail}")]
    CorruptArchive { file: String, detail: String },
    #[error("format version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed header in {file}: {detail}")]
    MalformedHeader { file: String, detail: String },
    #[error("ragged CSV row at line {line}")]
    RaggedRows { line: usize },
    #[error("tensor {file} has dims {got:?}, manifest says {expected:?}")]
    ManifestDimMismatch {
        file: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("manifest error in {file}: {detail}")]
    BadManifest { file: String, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unsupported image {path}: {detail}")]
    UnsupportedImage { path: String, detail: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Tensor blobs
// ---------------------------------------------------------------------------

pub fn save_tensor(path: &Path, dims: &[usize], data: &[f64]) -> Result<(), IoError> {
    assert_eq!(dims.iter().product::<usize>(), data.len());
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    w.write_all(TENSOR_MAGIC).map_err(io_err(path))?;
    w.write_u8(dims.len() as u8).map_err(io_err(path))?;
    for &d in dims {
        w.write_u32::<LittleEndian>(d as u32).map_err(io_err(path))?;
    }
    for &x in data {
        w.write_f64::<LittleEndian>(x).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn load_tensor(path: &Path) -> Result<(Vec<usize>, Vec<f64>), IoError> {
    let file_name = path.display().to_string();
    let corrupt = |detail: &str| IoError::CorruptArchive {
        file: file_name.clone(),
        detail: detail.to_string(),
    };
    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt("truncated magic"))?;
    if &magic != TENSOR_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let rank = r.read_u8().map_err(|_| corrupt("truncated rank"))? as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(
            r.read_u32::<LittleEndian>()
                .map_err(|_| corrupt("truncated dims"))? as usize,
        );
    }
    let count: usize = dims.iter().product();
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(
            r.read_f64::<LittleEndian>()
                .map_err(|_| corrupt("truncated payload"))?,
        );
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(io_err(path))? != 0 {
        return Err(corrupt("trailing bytes after payload"));
    }
    Ok((dims, data))
}

pub fn save_vector(path: &Path, v: &Array1<f64>) -> Result<(), IoError> {
    save_tensor(path, &[v.len()], v.as_slice().expect("contiguous"))
}

pub fn save_matrix_tensor(path: &Path, m: &Array2<f64>) -> Result<(), IoError> {
    let (rows, cols) = m.dim();
    let data: Vec<f64> = m.iter().cloned().collect();
    save_tensor(path, &[rows, cols], &data)
}

pub fn load_vector(path: &Path) -> Result<Array1<f64>, IoError> {
    let (dims, data) = load_tensor(path)?;
    if dims.len() != 1 {
        return Err(IoError::CorruptArchive {
            file: path.display().to_string(),
            detail: format!("expected rank 1, got {}", dims.len()),
        });
    }
    Ok(Array1::from_vec(data))
}

pub fn load_matrix_tensor(path: &Path) -> Result<Array2<f64>, IoError> {
    let (dims, data) = load_tensor(path)?;
    if dims.len() != 2 {
        return Err(IoError::CorruptArchive {
            file: path.display().to_string(),
            detail: format!("expected rank 2, got {}", dims.len()),
        });
    }
    Array2::from_shape_vec((dims[0], dims[1]), data).map_err(|e| IoError::CorruptArchive {
        file: path.display().to_string(),
        detail: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Dataset matrices and CSV import
// ---------------------------------------------------------------------------

/// Writes the binary dataset format (f64 payload).
pub fn save_matrix(path: &Path, m: &Array2<f64>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    w.write_all(MATRIX_MAGIC).map_err(io_err(path))?;
    w.write_u32::<LittleEndian>(m.nrows() as u32).map_err(io_err(path))?;
    w.write_u32::<LittleEndian>(m.ncols() as u32).map_err(io_err(path))?;
    for &x in m.iter() {
        w.write_f64::<LittleEndian>(x).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Single-precision export of the dataset format (explicit opt-in; loading
/// upconverts back to f64).
pub fn save_matrix_f32(path: &Path, m: &Array2<f64>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    w.write_all(MATRIX_F32_MAGIC).map_err(io_err(path))?;
    w.write_u32::<LittleEndian>(m.nrows() as u32).map_err(io_err(path))?;
    w.write_u32::<LittleEndian>(m.ncols() as u32).map_err(io_err(path))?;
    for &x in m.iter() {
        w.write_f32::<LittleEndian>(x as f32).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn load_matrix_binary(path: &Path, bytes: &[u8], f32_payload: bool) -> Result<Array2<f64>, IoError> {
    let file_name = path.display().to_string();
    let corrupt = |detail: &str| IoError::CorruptArchive {
        file: file_name.clone(),
        detail: detail.to_string(),
    };
    let mut r = &bytes[4..];
    let rows = r
        .read_u32::<LittleEndian>()
        .map_err(|_| corrupt("truncated header"))? as usize;
    let cols = r
        .read_u32::<LittleEndian>()
        .map_err(|_| corrupt("truncated header"))? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let x = if f32_payload {
            r.read_f32::<LittleEndian>()
                .map_err(|_| corrupt("truncated payload"))? as f64
        } else {
            r.read_f64::<LittleEndian>()
                .map_err(|_| corrupt("truncated payload"))?
        };
        data.push(x);
    }
    if !r.is_empty() {
        return Err(corrupt("trailing bytes after payload"));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| corrupt(&e.to_string()))
}

fn load_matrix_csv(path: &Path, text: &str) -> Result<Array2<f64>, IoError> {
    let file_name = path.display().to_string();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if let Some(w) = width {
                    if values.len() != w {
                        return Err(IoError::RaggedRows { line: idx + 1 });
                    }
                } else {
                    width = Some(values.len());
                }
                rows.push(values);
            }
            Err(_) => {
                // Only the first line may fail to parse: header auto-detect.
                if idx == 0 && rows.is_empty() {
                    width = Some(fields.len());
                    continue;
                }
                return Err(IoError::MalformedHeader {
                    file: file_name,
                    detail: format!("unparseable numeric row at line {}", idx + 1),
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(IoError::MalformedHeader {
            file: file_name,
            detail: "no data rows".into(),
        });
    }
    let cols = width.unwrap();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let nrows = flat.len() / cols;
    Ok(Array2::from_shape_vec((nrows, cols), flat).expect("validated shape"))
}

/// Loads a dataset matrix: binary `S3CD`/`S3CS` by magic, CSV otherwise
/// (first line treated as a header when it fails numeric parsing).
pub fn load_matrix(path: &Path) -> Result<Array2<f64>, IoError> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    if bytes.len() >= 4 && &bytes[..4] == MATRIX_MAGIC {
        return load_matrix_binary(path, &bytes, false);
    }
    if bytes.len() >= 4 && &bytes[..4] == MATRIX_F32_MAGIC {
        return load_matrix_binary(path, &bytes, true);
    }
    if bytes.is_empty() {
        return Err(IoError::MalformedHeader {
            file: path.display().to_string(),
            detail: "empty file".into(),
        });
    }
    let text = String::from_utf8_lossy(&bytes);
    load_matrix_csv(path, &text)
}

/// Loads integer class labels from a one-column matrix or CSV.
pub fn load_labels(path: &Path) -> Result<Vec<usize>, IoError> {
    let m = load_matrix(path)?;
    if m.ncols() != 1 {
        return Err(IoError::BadManifest {
            file: path.display().to_string(),
            detail: format!("labels must have one column, got {}", m.ncols()),
        });
    }
    m.column(0)
        .iter()
        .map(|&x| {
            if x.fract() == 0.0 && x >= 0.0 {
                Ok(x as usize)
            } else {
                Err(IoError::BadManifest {
                    file: path.display().to_string(),
                    detail: format!("label {x} is not a nonnegative integer"),
                })
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Archives
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ArchiveKind {
    Model,
    Whitening,
    Classifier,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelMeta {
    d: usize,
    n: usize,
    beta_tied: bool,
    has_whitening: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WhiteningMeta {
    dim: usize,
    epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClassifierMeta {
    classes: usize,
    features: usize,
    lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    kind: ArchiveKind,
    created_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<ModelMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    whitening: Option<WhiteningMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    classifier: Option<ClassifierMeta>,
    tensors: BTreeMap<String, Vec<usize>>,
}

/// A trained model plus its optional whitening transform, as persisted.
#[derive(Debug, Clone)]
pub struct ModelArchive {
    pub params: ModelParams,
    pub whitening: Option<WhiteningTransform>,
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), IoError> {
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).map_err(|e| IoError::BadManifest {
        file: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut f = File::create(&path).map_err(io_err(&path))?;
    f.write_all(json.as_bytes()).map_err(io_err(&path))?;
    f.write_all(b"\n").map_err(io_err(&path))
}

fn read_manifest(dir: &Path, expected_kind: ArchiveKind) -> Result<Manifest, IoError> {
    let path = dir.join("manifest.json");
    let mut text = String::new();
    File::open(&path)
        .map_err(io_err(&path))?
        .read_to_string(&mut text)
        .map_err(io_err(&path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| IoError::BadManifest {
            file: path.display().to_string(),
            detail: e.to_string(),
        })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(IoError::VersionMismatch {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if manifest.kind != expected_kind {
        return Err(IoError::BadManifest {
            file: path.display().to_string(),
            detail: format!("archive kind {:?}, expected {:?}", manifest.kind, expected_kind),
        });
    }
    Ok(manifest)
}

fn load_checked(dir: &Path, manifest: &Manifest, name: &str) -> Result<(Vec<usize>, Vec<f64>), IoError> {
    let path = dir.join(name);
    let expected = manifest.tensors.get(name).ok_or_else(|| IoError::BadManifest {
        file: dir.join("manifest.json").display().to_string(),
        detail: format!("missing tensor entry {name}"),
    })?;
    let (dims, data) = load_tensor(&path)?;
    if &dims != expected {
        return Err(IoError::ManifestDimMismatch {
            file: name.to_string(),
            expected: expected.clone(),
            got: dims,
        });
    }
    Ok((dims, data))
}

pub fn save_model(dir: &Path, archive: &ModelArchive) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = &archive.params;
    let mut tensors = BTreeMap::new();
    tensors.insert("w.s3ct".to_string(), vec![p.d(), p.n()]);
    tensors.insert("b.s3ct".to_string(), vec![p.n()]);
    tensors.insert("mu.s3ct".to_string(), vec![p.n()]);
    tensors.insert("alpha.s3ct".to_string(), vec![p.n()]);
    tensors.insert("beta.s3ct".to_string(), vec![p.d()]);
    save_matrix_tensor(&dir.join("w.s3ct"), p.w())?;
    save_vector(&dir.join("b.s3ct"), p.b())?;
    save_vector(&dir.join("mu.s3ct"), p.mu())?;
    save_vector(&dir.join("alpha.s3ct"), p.alpha())?;
    save_vector(&dir.join("beta.s3ct"), p.beta())?;
    let mut whitening_meta = None;
    if let Some(t) = &archive.whitening {
        tensors.insert("whitening_mean.s3ct".to_string(), vec![t.mean.len()]);
        tensors.insert(
            "whitening_zca.s3ct".to_string(),
            vec![t.zca.nrows(), t.zca.ncols()],
        );
        save_vector(&dir.join("whitening_mean.s3ct"), &t.mean)?;
        save_matrix_tensor(&dir.join("whitening_zca.s3ct"), &t.zca)?;
        whitening_meta = Some(WhiteningMeta {
            dim: t.mean.len(),
            epsilon: t.epsilon,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: ArchiveKind::Model,
        created_by: created_by(),
        model: Some(ModelMeta {
            d: p.d(),
            n: p.n(),
            beta_tied: p.beta_tied(),
            has_whitening: archive.whitening.is_some(),
        }),
        whitening: whitening_meta,
        classifier: None,
        tensors,
    };
    write_manifest(dir, &manifest)
}

pub fn load_model(dir: &Path) -> Result<ModelArchive, IoError> {
    let manifest = read_manifest(dir, ArchiveKind::Model)?;
    let meta = manifest.model.clone().ok_or_else(|| IoError::BadManifest {
        file: dir.join("manifest.json").display().to_string(),
        detail: "missing model metadata".into(),
    })?;
    let (wd, w) = load_checked(dir, &manifest, "w.s3ct")?;
    if wd != vec![meta.d, meta.n] {
        return Err(IoError::ManifestDimMismatch {
            file: "w.s3ct".into(),
            expected: vec![meta.d, meta.n],
            got: wd,
        });
    }
    let (_, b) = load_checked(dir, &manifest, "b.s3ct")?;
    let (_, mu) = load_checked(dir, &manifest, "mu.s3ct")?;
    let (_, alpha) = load_checked(dir, &manifest, "alpha.s3ct")?;
    let (_, beta) = load_checked(dir, &manifest, "beta.s3ct")?;
    let params = ModelParams::new(
        Array2::from_shape_vec((meta.d, meta.n), w).expect("dims checked"),
        Array1::from_vec(b),
        Array1::from_vec(mu),
        Array1::from_vec(alpha),
        Array1::from_vec(beta),
        meta.beta_tied,
    )?;
    let whitening = if meta.has_whitening {
        let (_, mean) = load_checked(dir, &manifest, "whitening_mean.s3ct")?;
        let (zd, zca) = load_checked(dir, &manifest, "whitening_zca.s3ct")?;
        let epsilon = manifest.whitening.as_ref().map_or(0.0, |m| m.epsilon);
        Some(WhiteningTransform {
            mean: Array1::from_vec(mean),
            zca: Array2::from_shape_vec((zd[0], zd[1]), zca).expect("dims checked"),
            epsilon,
        })
    } else {
        None
    };
    Ok(ModelArchive { params, whitening })
}

pub fn save_whitening(dir: &Path, t: &WhiteningTransform) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tensors = BTreeMap::new();
    tensors.insert("mean.s3ct".to_string(), vec![t.mean.len()]);
    tensors.insert("zca.s3ct".to_string(), vec![t.zca.nrows(), t.zca.ncols()]);
    save_vector(&dir.join("mean.s3ct"), &t.mean)?;
    save_matrix_tensor(&dir.join("zca.s3ct"), &t.zca)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: ArchiveKind::Whitening,
        created_by: created_by(),
        model: None,
        whitening: Some(WhiteningMeta {
            dim: t.mean.len(),
            epsilon: t.epsilon,
        }),
        classifier: None,
        tensors,
    };
    write_manifest(dir, &manifest)
}

pub fn load_whitening(dir: &Path) -> Result<WhiteningTransform, IoError> {
    let manifest = read_manifest(dir, ArchiveKind::Whitening)?;
    let (_, mean) = load_checked(dir, &manifest, "mean.s3ct")?;
    let (zd, zca) = load_checked(dir, &manifest, "zca.s3ct")?;
    let epsilon = manifest.whitening.as_ref().map_or(0.0, |m| m.epsilon);
    Ok(WhiteningTransform {
        mean: Array1::from_vec(mean),
        zca: Array2::from_shape_vec((zd[0], zd[1]), zca).expect("dims checked"),
        epsilon,
    })
}

pub fn save_classifier(
    dir: &Path,
    model: &LinearModel,
    scaler: &FeatureScaler,
) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tensors = BTreeMap::new();
    tensors.insert(
        "weights.s3ct".to_string(),
        vec![model.weights.nrows(), model.weights.ncols()],
    );
    tensors.insert("bias.s3ct".to_string(), vec![model.bias.len()]);
    tensors.insert("scaler_mean.s3ct".to_string(), vec![scaler.mean.len()]);
    tensors.insert("scaler_scale.s3ct".to_string(), vec![scaler.scale.len()]);
    save_matrix_tensor(&dir.join("weights.s3ct"), &model.weights)?;
    save_vector(&dir.join("bias.s3ct"), &model.bias)?;
    save_vector(&dir.join("scaler_mean.s3ct"), &scaler.mean)?;
    save_vector(&dir.join("scaler_scale.s3ct"), &scaler.scale)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: ArchiveKind::Classifier,
        created_by: created_by(),
        model: None,
        whitening: None,
        classifier: Some(ClassifierMeta {
            classes: model.weights.nrows(),
            features: model.weights.ncols(),
            lambda: model.lambda,
        }),
        tensors,
    };
    write_manifest(dir, &manifest)
}

pub fn load_classifier(dir: &Path) -> Result<(LinearModel, FeatureScaler), IoError> {
    let manifest = read_manifest(dir, ArchiveKind::Classifier)?;
    let meta = manifest
        .classifier
        .clone()
        .ok_or_else(|| IoError::BadManifest {
            file: dir.join("manifest.json").display().to_string(),
            detail: "missing classifier metadata".into(),
        })?;
    let (wd, w) = load_checked(dir, &manifest, "weights.s3ct")?;
    let (_, bias) = load_checked(dir, &manifest, "bias.s3ct")?;
    let (_, mean) = load_checked(dir, &manifest, "scaler_mean.s3ct")?;
    let (_, scale) = load_checked(dir, &manifest, "scaler_scale.s3ct")?;
    Ok((
        LinearModel {
            weights: Array2::from_shape_vec((wd[0], wd[1]), w).expect("dims checked"),
            bias: Array1::from_vec(bias),
            lambda: meta.lambda,
        },
        FeatureScaler {
            mean: Array1::from_vec(mean),
            scale: Array1::from_vec(scale),
        },
    ))
}

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

/// Writes the raw planar image format (f32 planes).
pub fn save_image_raw(path: &Path, img: &Image) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    w.write_all(IMAGE_MAGIC).map_err(io_err(path))?;
    w.write_u32::<LittleEndian>(img.height() as u32).map_err(io_err(path))?;
    w.write_u32::<LittleEndian>(img.width() as u32).map_err(io_err(path))?;
    w.write_u32::<LittleEndian>(img.channels() as u32).map_err(io_err(path))?;
    for c in 0..img.channels() {
        for y in 0..img.height() {
            for x in 0..img.width() {
                w.write_f32::<LittleEndian>(img.pixels()[[y, x, c]] as f32)
                    .map_err(io_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

fn load_image_raw(path: &Path, bytes: &[u8]) -> Result<Image, IoError> {
    let corrupt = |detail: &str| IoError::CorruptArchive {
        file: path.display().to_string(),
        detail: detail.to_string(),
    };
    let mut r = &bytes[4..];
    let h = r.read_u32::<LittleEndian>().map_err(|_| corrupt("truncated header"))? as usize;
    let w = r.read_u32::<LittleEndian>().map_err(|_| corrupt("truncated header"))? as usize;
    let c = r.read_u32::<LittleEndian>().map_err(|_| corrupt("truncated header"))? as usize;
    let mut pixels = Array3::zeros((h, w, c));
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                pixels[[y, x, ch]] = r
                    .read_f32::<LittleEndian>()
                    .map_err(|_| corrupt("truncated payload"))? as f64;
            }
        }
    }
    Image::new(pixels).map_err(|e| corrupt(&e.to_string()))
}

/// Loads a PNG (pixel values kept on the 0–255 scale) or a raw `S3CI` file,
/// sniffed by magic.
pub fn load_image(path: &Path) -> Result<Image, IoError> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    if bytes.len() >= 4 && &bytes[..4] == IMAGE_MAGIC {
        return load_image_raw(path, &bytes);
    }
    let decoded = image::load_from_memory(&bytes).map_err(|e| IoError::UnsupportedImage {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let img = match decoded {
        image::DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            let mut pixels = Array3::zeros((h as usize, w as usize, 1));
            for (x, y, p) in gray.enumerate_pixels() {
                pixels[[y as usize, x as usize, 0]] = p.0[0] as f64;
            }
            pixels
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = rgb.dimensions();
            let mut pixels = Array3::zeros((h as usize, w as usize, 3));
            for (x, y, p) in rgb.enumerate_pixels() {
                for c in 0..3 {
                    pixels[[y as usize, x as usize, c]] = p.0[c] as f64;
                }
            }
            pixels
        }
    };
    Image::new(img).map_err(|e| IoError::UnsupportedImage {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Image files under a directory (sorted by name), or the path itself.
pub fn list_images(path: &Path) -> Result<Vec<PathBuf>, IoError> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "s3ci"))
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

/// Serializes records as line-delimited JSON.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| IoError::BadManifest {
            file: path.display().to_string(),
            detail: e.to_string(),
        })?;
        w.write_all(line.as_bytes()).map_err(io_err(path))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
