//! Synthetic ground-truth atlases.
//!
//! A consistent atlas is built from one random orthogonal frame per chart by
//! setting every edge transport to `T_{vu} = Q_v · Q_uᵀ`; every cycle
//! transport then telescopes to the identity and any seed vector `w` plants an
//! exactly coherent section `s_c = Q_c · w`. Holonomy is injected on top by
//! twisting single edges with in-plane rotations, and edge noise by polar
//! re-orthogonalization of perturbed transports.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::{Atlas, AtlasError, ChartId, EdgeRecord};
use crate::format::FORMAT_VERSION;
use crate::geometry::{self, Cycle, GeometryError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("noise_level {0} outside [0, 1)")]
    InvalidNoise(f64),
    #[error("twist plane ({0},{1}) invalid for dimension {2}: axes must be distinct and < k")]
    InvalidPlane(usize, usize, usize),
    #[error("twist edge ({0},{1}) does not exist in the topology")]
    MissingTwistEdge(ChartId, ChartId),
    #[error("topology has no charts")]
    EmptyTopology,
    #[error("edge probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("dimension k must be positive")]
    ZeroDimension,
    #[error("spec has twists or noise; consistent generation requires neither")]
    NotConsistent,
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Chart-graph shapes available for synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Topology {
    Path { n: usize },
    Cycle { n: usize },
    Grid { w: usize, h: usize },
    ErdosRenyi { n: usize, p: f64 },
}

impl Topology {
    pub fn num_charts(&self) -> usize {
        match *self {
            Topology::Path { n } | Topology::Cycle { n } => n,
            Topology::Grid { w, h } => w * h,
            Topology::ErdosRenyi { n, .. } => n,
        }
    }

    /// Edge list in canonical order (u < v, lexicographic). Erdős–Rényi edges
    /// consume exactly `n(n−1)/2` uniform draws so the stream stays aligned.
    pub fn edges(&self, rng: &mut ChaCha8Rng) -> Vec<(ChartId, ChartId)> {
        match *self {
            Topology::Path { n } => (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            Topology::Cycle { n } => {
                let mut e: Vec<_> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
                if n > 2 {
                    e.push((0, n - 1));
                }
                e.sort_unstable();
                e
            }
            Topology::Grid { w, h } => {
                let mut e = Vec::new();
                for y in 0..h {
                    for x in 0..w {
                        let c = y * w + x;
                        if x + 1 < w {
                            e.push((c, c + 1));
                        }
                        if y + 1 < h {
                            e.push((c, c + w));
                        }
                    }
                }
                e.sort_unstable();
                e
            }
            Topology::ErdosRenyi { n, p } => {
                let mut e = Vec::new();
                for i in 0..n {
                    for j in (i + 1)..n {
                        let draw: f64 = rand::Rng::random(rng);
                        if draw < p {
                            e.push((i, j));
                        }
                    }
                }
                e
            }
        }
    }
}

/// A single holonomy twist: the stored transport of edge `(u,v)` is replaced
/// by `R_plane(angle) · T`, an in-plane rotation acting on the v-side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwistSpec {
    pub u: ChartId,
    pub v: ChartId,
    pub angle: f64,
    pub plane: (usize, usize),
}

fn default_overlap_fill() -> u64 {
    1024
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

/// Recipe for one synthetic atlas; fully determined by its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub k: usize,
    pub topology: Topology,
    pub rng_seed: u64,
    #[serde(default)]
    pub twists: Vec<TwistSpec>,
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default = "default_overlap_fill")]
    pub overlap_size_fill: u64,
}

impl SynthSpec {
    pub fn consistent(k: usize, topology: Topology, rng_seed: u64) -> Self {
        SynthSpec {
            format_version: FORMAT_VERSION,
            k,
            topology,
            rng_seed,
            twists: Vec::new(),
            noise_level: 0.0,
            overlap_size_fill: default_overlap_fill(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.k == 0 {
            return Err(SynthError::ZeroDimension);
        }
        if self.topology.num_charts() == 0 {
            return Err(SynthError::EmptyTopology);
        }
        if let Topology::ErdosRenyi { p, .. } = self.topology {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::InvalidProbability(p));
            }
        }
        if !(0.0..1.0).contains(&self.noise_level) {
            return Err(SynthError::InvalidNoise(self.noise_level));
        }
        let edges = self.topology_edges();
        for t in &self.twists {
            let (i, j) = t.plane;
            if i == j || i >= self.k || j >= self.k {
                return Err(SynthError::InvalidPlane(i, j, self.k));
            }
            let key = (t.u.min(t.v), t.u.max(t.v));
            if !edges.contains(&key) {
                return Err(SynthError::MissingTwistEdge(t.u, t.v));
            }
        }
        Ok(())
    }

    /// The deterministic edge set of this spec's topology.
    pub fn topology_edges(&self) -> Vec<(ChartId, ChartId)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        self.topology.edges(&mut rng)
    }
}

/// Everything the generator knows about an atlas that discovery must recover.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub k: usize,
    pub rng_seed: u64,
    /// Orthogonal frame per chart.
    pub frames: Vec<DMatrix<f64>>,
    /// Exactly coherent sections of the consistent (pre-twist, pre-noise)
    /// atlas, planted from basis-axis seed vectors.
    pub planted_sections: Vec<PlantedSection>,
    /// For each twist lying on a cycle: a basis cycle containing exactly that
    /// twisted edge, with its exact expected holonomy defect.
    pub twisted_cycles: Vec<TwistedCycle>,
}

#[derive(Debug, Clone)]
pub struct PlantedSection {
    pub seed_vector: DVector<f64>,
    /// One unit representative per chart, `normalize(Q_c · seed)`.
    pub representatives: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct TwistedCycle {
    pub cycle: Cycle,
    pub angle: f64,
    /// `√(2 − 2·|cos angle|)`: the defect for a base representative whose
    /// frame-conjugated image lies in the twist plane.
    pub expected_defect: f64,
    /// Seed vector planting a section whose base representative is in-plane.
    pub in_plane_seed: DVector<f64>,
    /// Seed planting a section fixed by the twist (`None` when k < 3).
    pub out_of_plane_seed: Option<DVector<f64>>,
}

impl GroundTruth {
    /// The section planted by an arbitrary seed vector: `normalize(Q_c · w)`.
    pub fn section_from_seed(&self, w: &DVector<f64>) -> Result<Vec<DVector<f64>>, GeometryError> {
        self.frames
            .iter()
            .map(|q| geometry::normalize(&(q * w)))
            .collect()
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Random orthogonal frame: QR of a Gaussian matrix with the R diagonal
/// forced positive, which makes the factor unique and the draw deterministic.
pub fn random_frame(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, k, k).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            for i in 0..k {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Generates a globally consistent (zero-holonomy) atlas. The spec must have
/// no twists and zero noise; use [`generate`] for the full recipe.
pub fn generate_consistent_atlas(spec: &SynthSpec) -> Result<(Atlas, GroundTruth), SynthError> {
    spec.validate()?;
    if !spec.twists.is_empty() || spec.noise_level != 0.0 {
        return Err(SynthError::NotConsistent);
    }
    let (atlas, truth, _) = generate_stages(spec)?;
    Ok((atlas, truth))
}

/// Generates the full spec: consistent core, then twists, then noise.
/// The ground truth describes the consistent core plus the expected holonomy
/// of each twisted cycle (exact on the noiseless atlas).
pub fn generate(spec: &SynthSpec) -> Result<(Atlas, GroundTruth), SynthError> {
    spec.validate()?;
    let (mut atlas, truth, mut rng) = generate_stages(spec)?;
    for t in &spec.twists {
        atlas = inject_twist(&atlas, (t.u, t.v), t.angle, t.plane)?;
    }
    if spec.noise_level != 0.0 {
        atlas = perturb_with_rng(&atlas, spec.noise_level, &mut rng)?;
    }
    Ok((atlas, truth))
}

/// Shared generation core. RNG stream order: topology edges, then one frame
/// per chart, then (in [`generate`]) the noise draws.
fn generate_stages(spec: &SynthSpec) -> Result<(Atlas, GroundTruth, ChaCha8Rng), SynthError> {
    let k = spec.k;
    let n = spec.topology.num_charts();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let edge_pairs = spec.topology.edges(&mut rng);
    let frames: Vec<DMatrix<f64>> = (0..n).map(|_| random_frame(&mut rng, k)).collect();

    let edges: Vec<EdgeRecord> = edge_pairs
        .iter()
        .map(|&(u, v)| EdgeRecord {
            u,
            v,
            transport: &frames[v] * frames[u].transpose(),
            overlap_size: spec.overlap_size_fill,
            sigma_min: 1.0,
        })
        .collect();
    let atlas = Atlas::new(k, n, edges, None, vec![None; n])?;

    let planted_sections = (0..k.min(4))
        .map(|axis| {
            let mut seed = DVector::zeros(k);
            seed[axis] = 1.0;
            let representatives = frames.iter().map(|q| q.column(axis).into_owned()).collect();
            PlantedSection {
                seed_vector: seed,
                representatives,
            }
        })
        .collect();

    let twisted_cycles = plan_twisted_cycles(spec, &edge_pairs, &frames)?;

    let truth = GroundTruth {
        k,
        rng_seed: spec.rng_seed,
        frames,
        planted_sections,
        twisted_cycles,
    };
    Ok((atlas, truth, rng))
}

/// For each twist, finds a fundamental cycle (rooted at chart 0) containing
/// that twisted edge and no other twisted edge; on such a cycle the loop
/// transport is frame-conjugate to the twist rotation, so the expected
/// holonomy defect is exact.
fn plan_twisted_cycles(
    spec: &SynthSpec,
    edge_pairs: &[(ChartId, ChartId)],
    frames: &[DMatrix<f64>],
) -> Result<Vec<TwistedCycle>, SynthError> {
    if spec.twists.is_empty() {
        return Ok(Vec::new());
    }
    let charts: Vec<ChartId> = (0..spec.topology.num_charts()).collect();
    let basis = match geometry::fundamental_cycle_basis(&charts, edge_pairs, 0) {
        Ok(b) => b,
        // cycle bookkeeping is best-effort on disconnected topologies
        Err(GeometryError::Disconnected(_)) => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let twisted_keys: Vec<(ChartId, ChartId)> = spec
        .twists
        .iter()
        .map(|t| (t.u.min(t.v), t.u.max(t.v)))
        .collect();

    let mut out = Vec::new();
    for t in &spec.twists {
        let key = (t.u.min(t.v), t.u.max(t.v));
        let clean = basis.cycles.iter().find(|c| {
            c.contains_edge(key.0, key.1)
                && twisted_keys
                    .iter()
                    .filter(|other| c.contains_edge(other.0, other.1))
                    .count()
                    == 1
        });
        let Some(cycle) = clean else { continue };

        // stored orientation of the twisted edge is (min, max) by generation
        let stored_v = key.1;
        let (i, j) = t.plane;
        let frame_v_t = frames[stored_v].transpose();
        let mut e_i = DVector::zeros(spec.k);
        e_i[i] = 1.0;
        let in_plane_seed = &frame_v_t * e_i;
        let out_axis = (0..spec.k).find(|m| *m != i && *m != j);
        let out_of_plane_seed = out_axis.map(|m| {
            let mut e_m = DVector::zeros(spec.k);
            e_m[m] = 1.0;
            &frame_v_t * e_m
        });
        out.push(TwistedCycle {
            cycle: cycle.clone(),
            angle: t.angle,
            expected_defect: (2.0 - 2.0 * t.angle.cos().abs()).max(0.0).sqrt(),
            in_plane_seed,
            out_of_plane_seed,
        });
    }
    Ok(out)
}

/// Left-multiplies the stored transport of `edge` by the in-plane rotation
/// `R_plane(angle)` acting on the stored v-side chart.
pub fn inject_twist(
    atlas: &Atlas,
    edge: (ChartId, ChartId),
    angle: f64,
    plane: (usize, usize),
) -> Result<Atlas, SynthError> {
    let k = atlas.k();
    let (i, j) = plane;
    if i == j || i >= k || j >= k {
        return Err(SynthError::InvalidPlane(i, j, k));
    }
    let (idx, _) = atlas
        .edge_between(edge.0, edge.1)
        .ok_or(AtlasError::NoSuchEdge {
            u: edge.0,
            v: edge.1,
        })?;
    let rotation = geometry::plane_rotation(k, i, j, angle);
    let mut edges = atlas.edges().to_vec();
    edges[idx].transport = &rotation * &edges[idx].transport;
    Ok(atlas.rebuild_with_edges(edges)?)
}

/// Replaces every transport by `polar(T + noise_level · G)` with `G` a fresh
/// standard Gaussian matrix per edge, in stored edge order.
pub fn perturb_transports(
    atlas: &Atlas,
    noise_level: f64,
    rng_seed: u64,
) -> Result<Atlas, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    perturb_with_rng(atlas, noise_level, &mut rng)
}

fn perturb_with_rng(
    atlas: &Atlas,
    noise_level: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Atlas, SynthError> {
    if !(0.0..1.0).contains(&noise_level) {
        return Err(SynthError::InvalidNoise(noise_level));
    }
    let k = atlas.k();
    let mut edges = atlas.edges().to_vec();
    for e in &mut edges {
        let noise = gaussian_matrix(rng, k, k) * noise_level;
        let (q, _) = geometry::polar_orthogonalize(&(&e.transport + noise))?;
        e.transport = q;
    }
    Ok(atlas.rebuild_with_edges(edges)?)
}
