//! Atlas data model: chart graph, per-edge orthogonal transports, validation
//! and edge admissibility filtering.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::geometry;

/// Charts are dense 0-based indices.
pub type ChartId = usize;

/// Max-norm tolerance for `‖TᵀT − I‖` on every stored transport.
pub const TRANSPORT_ORTHOGONALITY_TOL: f64 = 1e-8;
/// Max-norm tolerance for `‖B Bᵀ − I_k‖` on every chart basis.
pub const BASIS_ORTHONORMALITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("dimension mismatch: {context} has {got} entries, expected {expected}")]
    DimensionMismatch {
        context: String,
        got: usize,
        expected: usize,
    },
    #[error(
        "transport on edge ({u},{v}) is not orthogonal: residual {residual:.3e} exceeds {TRANSPORT_ORTHOGONALITY_TOL:.0e}"
    )]
    NonOrthogonalTransport { u: ChartId, v: ChartId, residual: f64 },
    #[error(
        "basis of chart {chart} has non-orthonormal rows: residual {residual:.3e} exceeds {BASIS_ORTHONORMALITY_TOL:.0e}"
    )]
    NonOrthonormalBasis { chart: ChartId, residual: f64 },
    #[error("edge ({u},{v}) references a chart outside 0..{num_charts}")]
    DanglingChart {
        u: ChartId,
        v: ChartId,
        num_charts: usize,
    },
    #[error("self-loop on chart {0}")]
    SelfLoop(ChartId),
    #[error("duplicate edge between charts {u} and {v}")]
    DuplicateEdge { u: ChartId, v: ChartId },
    #[error("no edge between charts {u} and {v}")]
    NoSuchEdge { u: ChartId, v: ChartId },
    #[error("no chart {chart} in atlas with {num_charts} charts")]
    NoSuchChart { chart: ChartId, num_charts: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("sigma_min on edge ({u},{v}) is negative: {value}")]
    NegativeSigmaMin { u: ChartId, v: ChartId, value: f64 },
    #[error("chart {chart} has a basis but ambient_dim is not set")]
    MissingAmbientDim { chart: ChartId },
    #[error("rank-deficient raw edge map on ({u},{v}): {source}")]
    RawEdgeRankDeficient {
        u: ChartId,
        v: ChartId,
        source: Box<geometry::GeometryError>,
    },
}

/// One undirected edge with its transport stored for the orientation `u → v`.
///
/// The transport is a k×k orthogonal matrix mapping `F_u → F_v`; the reverse
/// orientation is its transpose. `sigma_min` is the smallest singular value of
/// the raw pre-orthogonalization edge map (0 when unknown).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub u: ChartId,
    pub v: ChartId,
    pub transport: DMatrix<f64>,
    pub overlap_size: u64,
    pub sigma_min: f64,
}

/// A raw (possibly non-orthogonal) edge map, accepted only through
/// [`Atlas::from_raw_edges`], which replaces the map by its polar factor.
#[derive(Debug, Clone)]
pub struct RawEdge {
    pub u: ChartId,
    pub v: ChartId,
    pub map: DMatrix<f64>,
    pub overlap_size: u64,
}

/// Immutable chart graph with per-edge orthogonal transports and optional
/// per-chart ambient bases. All invariants are checked at construction; every
/// method is a pure read.
#[derive(Debug, Clone, PartialEq)]
pub struct Atlas {
    k: usize,
    num_charts: usize,
    ambient_dim: Option<usize>,
    /// One entry per chart; `Some(B)` is a k×D matrix with orthonormal rows.
    bases: Vec<Option<DMatrix<f64>>>,
    edges: Vec<EdgeRecord>,
    /// Per chart: (neighbor, edge index), ascending by neighbor.
    adjacency: Vec<Vec<(ChartId, usize)>>,
}

impl Atlas {
    pub fn new(
        k: usize,
        num_charts: usize,
        edges: Vec<EdgeRecord>,
        ambient_dim: Option<usize>,
        bases: Vec<Option<DMatrix<f64>>>,
    ) -> Result<Self, AtlasError> {
        if k == 0 {
            return Err(AtlasError::DimensionMismatch {
                context: "feature dimension k".into(),
                got: 0,
                expected: 1,
            });
        }
        if bases.len() != num_charts {
            return Err(AtlasError::DimensionMismatch {
                context: "bases vector".into(),
                got: bases.len(),
                expected: num_charts,
            });
        }
        for (c, basis) in bases.iter().enumerate() {
            let Some(b) = basis else { continue };
            let Some(dim) = ambient_dim else {
                return Err(AtlasError::MissingAmbientDim { chart: c });
            };
            if b.nrows() != k || b.ncols() != dim {
                return Err(AtlasError::DimensionMismatch {
                    context: format!("basis of chart {c}"),
                    got: b.nrows() * b.ncols(),
                    expected: k * dim,
                });
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(AtlasError::NonFinite {
                    context: format!("basis of chart {c}"),
                });
            }
            let residual = geometry::row_orthonormality_residual(b);
            if residual > BASIS_ORTHONORMALITY_TOL {
                return Err(AtlasError::NonOrthonormalBasis { chart: c, residual });
            }
        }

        let mut seen = std::collections::BTreeSet::new();
        for e in &edges {
            if e.u >= num_charts || e.v >= num_charts {
                return Err(AtlasError::DanglingChart {
                    u: e.u,
                    v: e.v,
                    num_charts,
                });
            }
            if e.u == e.v {
                return Err(AtlasError::SelfLoop(e.u));
            }
            let key = (e.u.min(e.v), e.u.max(e.v));
            if !seen.insert(key) {
                return Err(AtlasError::DuplicateEdge { u: key.0, v: key.1 });
            }
            if e.transport.nrows() != k || e.transport.ncols() != k {
                return Err(AtlasError::DimensionMismatch {
                    context: format!("transport on edge ({},{})", e.u, e.v),
                    got: e.transport.nrows() * e.transport.ncols(),
                    expected: k * k,
                });
            }
            if e.transport.iter().any(|x| !x.is_finite()) {
                return Err(AtlasError::NonFinite {
                    context: format!("transport on edge ({},{})", e.u, e.v),
                });
            }
            if !e.sigma_min.is_finite() {
                return Err(AtlasError::NonFinite {
                    context: format!("sigma_min on edge ({},{})", e.u, e.v),
                });
            }
            if e.sigma_min < 0.0 {
                return Err(AtlasError::NegativeSigmaMin {
                    u: e.u,
                    v: e.v,
                    value: e.sigma_min,
                });
            }
            let residual = geometry::orthogonality_residual(&e.transport);
            if residual > TRANSPORT_ORTHOGONALITY_TOL {
                return Err(AtlasError::NonOrthogonalTransport {
                    u: e.u,
                    v: e.v,
                    residual,
                });
            }
        }

        let mut adjacency = vec![Vec::new(); num_charts];
        for (idx, e) in edges.iter().enumerate() {
            adjacency[e.u].push((e.v, idx));
            adjacency[e.v].push((e.u, idx));
        }
        for row in &mut adjacency {
            row.sort_unstable();
        }

        Ok(Self {
            k,
            num_charts,
            ambient_dim,
            bases,
            edges,
            adjacency,
        })
    }

    /// Builds an atlas from raw (learned, possibly non-orthogonal) edge maps.
    ///
    /// Each map is replaced by its polar factor and its smallest singular
    /// value is recorded as the edge's `sigma_min`.
    pub fn from_raw_edges(
        k: usize,
        num_charts: usize,
        raw: Vec<RawEdge>,
        ambient_dim: Option<usize>,
        bases: Vec<Option<DMatrix<f64>>>,
    ) -> Result<Self, AtlasError> {
        let mut edges = Vec::with_capacity(raw.len());
        for r in raw {
            let (q, sigma_min) = geometry::polar_orthogonalize(&r.map).map_err(|source| {
                AtlasError::RawEdgeRankDeficient {
                    u: r.u,
                    v: r.v,
                    source: Box::new(source),
                }
            })?;
            edges.push(EdgeRecord {
                u: r.u,
                v: r.v,
                transport: q,
                overlap_size: r.overlap_size,
                sigma_min,
            });
        }
        Self::new(k, num_charts, edges, ambient_dim, bases)
    }

    /// Rebuilds this atlas with a replacement edge list (same charts, bases
    /// and dimensions), re-running full validation.
    pub fn rebuild_with_edges(&self, edges: Vec<EdgeRecord>) -> Result<Self, AtlasError> {
        Self::new(
            self.k,
            self.num_charts,
            edges,
            self.ambient_dim,
            self.bases.clone(),
        )
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_charts(&self) -> usize {
        self.num_charts
    }

    pub fn ambient_dim(&self) -> Option<usize> {
        self.ambient_dim
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn basis(&self, c: ChartId) -> Option<&DMatrix<f64>> {
        self.bases.get(c).and_then(|b| b.as_ref())
    }

    pub fn has_all_bases(&self) -> bool {
        self.bases.iter().all(|b| b.is_some())
    }

    pub fn has_any_basis(&self) -> bool {
        self.bases.iter().any(|b| b.is_some())
    }

    fn check_chart(&self, c: ChartId) -> Result<(), AtlasError> {
        if c >= self.num_charts {
            return Err(AtlasError::NoSuchChart {
                chart: c,
                num_charts: self.num_charts,
            });
        }
        Ok(())
    }

    /// Index of the edge joining `u` and `v` plus whether the stored
    /// orientation is `u → v`.
    pub fn edge_between(&self, u: ChartId, v: ChartId) -> Option<(usize, bool)> {
        let row = self.adjacency.get(u)?;
        let pos = row.binary_search_by_key(&v, |(n, _)| *n).ok()?;
        let idx = row[pos].1;
        Some((idx, self.edges[idx].u == u))
    }

    /// Transport carrying local representatives from `u` to `v`.
    ///
    /// Returns the stored matrix for the stored orientation, its transpose for
    /// the reverse orientation (exact inverse since transports are orthogonal).
    pub fn transport_along(&self, u: ChartId, v: ChartId) -> Result<DMatrix<f64>, AtlasError> {
        self.check_chart(u)?;
        self.check_chart(v)?;
        let (idx, forward) = self
            .edge_between(u, v)
            .ok_or(AtlasError::NoSuchEdge { u, v })?;
        let t = &self.edges[idx].transport;
        Ok(if forward { t.clone() } else { t.transpose() })
    }

    /// All graph neighbors of `c`, ascending.
    pub fn neighbors(&self, c: ChartId) -> Result<Vec<ChartId>, AtlasError> {
        self.check_chart(c)?;
        Ok(self.adjacency[c].iter().map(|(n, _)| *n).collect())
    }

    /// Neighbors of `c` whose connecting edge passes the quality filters
    /// `overlap_size ≥ min_overlap` and `sigma_min ≥ s_min`, ascending.
    pub fn admissible_neighbors(
        &self,
        c: ChartId,
        min_overlap: u64,
        s_min: f64,
    ) -> Result<Vec<ChartId>, AtlasError> {
        self.check_chart(c)?;
        Ok(self.adjacency[c]
            .iter()
            .filter(|(_, idx)| {
                let e = &self.edges[*idx];
                e.overlap_size >= min_overlap && e.sigma_min >= s_min
            })
            .map(|(n, _)| *n)
            .collect())
    }
}
