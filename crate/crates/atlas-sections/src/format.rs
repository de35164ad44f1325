//! On-disk document format.
//!
//! All persistent artifacts (atlases, synthesis specs, run configs, ground
//! truth) share one representation: UTF-8 JSON in which every float is
//! written with 17 significant digits (`{:.16e}`), enough to round-trip any
//! f64 exactly. Writing is byte-deterministic: struct fields serialize in
//! declaration order and the formatter has no locale or width state.

use std::fs;
use std::io;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::{Atlas, AtlasError, EdgeRecord};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("parse error in {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: unsupported format_version {found}, expected {FORMAT_VERSION}")]
    Version { path: String, found: u32 },
    #[error(transparent)]
    Atlas(#[from] AtlasError),
}

/// Compact JSON formatter that prints every float with 17 significant digits.
struct SigDigitFormatter;

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes a document to its canonical byte representation (one line,
/// trailing newline).
pub fn to_doc_string<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigitFormatter);
    value
        .serialize(&mut ser)
        .expect("in-memory serialization cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serializer emits UTF-8")
}

pub fn write_doc<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let text = to_doc_string(value);
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_doc<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_doc(&text, &path.display().to_string())
}

pub fn parse_doc<T: DeserializeOwned>(text: &str, path: &str) -> Result<T, FormatError> {
    serde_json::from_str(text).map_err(|source| FormatError::Parse {
        path: path.to_string(),
        source,
    })
}

/// Raw atlas document as stored on disk; validation happens when it is turned
/// into an [`Atlas`]. Kept public so diagnostics can inspect invalid files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtlasDoc {
    pub format_version: u32,
    pub k: usize,
    pub num_charts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charts: Option<Vec<ChartDoc>>,
    pub edges: Vec<EdgeDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartDoc {
    pub id: usize,
    /// Row-major k×D basis with orthonormal rows.
    pub basis: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub u: usize,
    pub v: usize,
    /// Row-major k×k transport for the orientation `u → v`.
    pub transport: Vec<f64>,
    pub overlap_size: u64,
    pub sigma_min: f64,
}

impl AtlasDoc {
    pub fn from_atlas(atlas: &Atlas) -> Self {
        let charts: Vec<ChartDoc> = (0..atlas.num_charts())
            .filter_map(|c| {
                atlas.basis(c).map(|b| ChartDoc {
                    id: c,
                    basis: row_major(b),
                })
            })
            .collect();
        AtlasDoc {
            format_version: FORMAT_VERSION,
            k: atlas.k(),
            num_charts: atlas.num_charts(),
            ambient_dim: atlas.ambient_dim(),
            charts: if charts.is_empty() { None } else { Some(charts) },
            edges: atlas
                .edges()
                .iter()
                .map(|e| EdgeDoc {
                    u: e.u,
                    v: e.v,
                    transport: row_major(&e.transport),
                    overlap_size: e.overlap_size,
                    sigma_min: e.sigma_min,
                })
                .collect(),
        }
    }

    pub fn into_atlas(self) -> Result<Atlas, AtlasError> {
        let k = self.k;
        let mut bases: Vec<Option<DMatrix<f64>>> = vec![None; self.num_charts];
        if let Some(charts) = self.charts {
            let dim = self.ambient_dim.unwrap_or(0);
            for c in charts {
                if c.id >= self.num_charts {
                    return Err(AtlasError::NoSuchChart {
                        chart: c.id,
                        num_charts: self.num_charts,
                    });
                }
                if self.ambient_dim.is_none() {
                    return Err(AtlasError::MissingAmbientDim { chart: c.id });
                }
                if c.basis.len() != k * dim {
                    return Err(AtlasError::DimensionMismatch {
                        context: format!("basis of chart {}", c.id),
                        got: c.basis.len(),
                        expected: k * dim,
                    });
                }
                bases[c.id] = Some(DMatrix::from_row_slice(k, dim, &c.basis));
            }
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in self.edges {
            if e.transport.len() != k * k {
                return Err(AtlasError::DimensionMismatch {
                    context: format!("transport on edge ({},{})", e.u, e.v),
                    got: e.transport.len(),
                    expected: k * k,
                });
            }
            edges.push(EdgeRecord {
                u: e.u,
                v: e.v,
                transport: DMatrix::from_row_slice(k, k, &e.transport),
                overlap_size: e.overlap_size,
                sigma_min: e.sigma_min,
            });
        }
        Atlas::new(k, self.num_charts, edges, self.ambient_dim, bases)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Loads and fully validates an atlas file.
pub fn load_atlas(path: &Path) -> Result<Atlas, FormatError> {
    let doc: AtlasDoc = read_doc(path)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(FormatError::Version {
            path: path.display().to_string(),
            found: doc.format_version,
        });
    }
    Ok(doc.into_atlas()?)
}

/// Writes an atlas in the canonical document encoding.
pub fn save_atlas(atlas: &Atlas, path: &Path) -> Result<(), FormatError> {
    write_doc(path, &AtlasDoc::from_atlas(atlas))
}

pub fn atlas_to_string(atlas: &Atlas) -> String {
    to_doc_string(&AtlasDoc::from_atlas(atlas))
}
