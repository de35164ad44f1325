//! Seeded section discovery: bounded-depth propagation on the chart graph,
//! sign-synchronized aggregation at multiply reached charts, path-defect
//! computation, defect pruning and support extraction.
//!
//! A discovery run is a pure function of (atlas, seed, config): traversal
//! order, candidate order and every aggregation step are deterministic, so a
//! seed grid can be evaluated in parallel with reproducible output.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::{Atlas, AtlasError, ChartId};
use crate::geometry::{self, GeometryError};

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("invalid propagation config: {0}")]
    InvalidConfig(String),
    #[error("seed vector vanishes (norm {0:.3e})")]
    VanishingSeed(f64),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Propagation, synchronization and pruning settings. Defaults follow the
/// standard discovery protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    pub max_depth: usize,
    pub min_overlap: u64,
    pub s_min: f64,
    pub sync_passes: usize,
    pub max_edge_defect_prune: f64,
    pub max_path_defect_prune: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            max_depth: 8,
            min_overlap: 256,
            s_min: 0.0,
            sync_passes: 2,
            max_edge_defect_prune: 0.25,
            max_path_defect_prune: 0.25,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<(), DiscoveryError> {
        let sqrt2 = std::f64::consts::SQRT_2;
        if self.max_depth < 1 {
            return Err(DiscoveryError::InvalidConfig(
                "max_depth must be >= 1".into(),
            ));
        }
        if self.sync_passes < 1 {
            return Err(DiscoveryError::InvalidConfig(
                "sync_passes must be >= 1".into(),
            ));
        }
        for (name, value) in [
            ("max_edge_defect_prune", self.max_edge_defect_prune),
            ("max_path_defect_prune", self.max_path_defect_prune),
        ] {
            if !(0.0..=sqrt2).contains(&value) {
                return Err(DiscoveryError::InvalidConfig(format!(
                    "{name} = {value} outside [0, sqrt(2)]"
                )));
            }
        }
        if self.s_min < 0.0 {
            return Err(DiscoveryError::InvalidConfig(format!(
                "s_min = {} is negative",
                self.s_min
            )));
        }
        Ok(())
    }
}

/// Raw propagation output: the BFS tree from the seed, the first-arrival
/// representative per chart (the normalized seed transport along the parent
/// path) and the incoming transport evidence collected per chart.
#[derive(Debug, Clone)]
pub struct PropagationRecord {
    pub seed_chart: ChartId,
    /// Normalized seed vector.
    pub seed_vector: DVector<f64>,
    /// BFS depth per chart; `None` when unreached.
    pub depth: Vec<Option<usize>>,
    /// First-arrival BFS parent per chart; `None` at the seed and unreached.
    pub parent: Vec<Option<ChartId>>,
    /// First-arrival candidate per chart. By construction this equals the
    /// normalized transport of the seed along the parent path (orthogonal
    /// transports commute with normalization).
    pub first_rep: Vec<Option<DVector<f64>>>,
    /// Incoming candidates per chart, `(source, candidate)`, source ascending.
    /// A chart `v` collects one candidate per admissible edge `(u,v)` with
    /// `depth(u) <= depth(v)`: all transport routes arriving from the seed
    /// side, including same-layer cross edges. The seed chart carries its own
    /// seed vector as its single candidate.
    pub incoming: Vec<Vec<(ChartId, DVector<f64>)>>,
    /// Edges skipped because the transported representative vanished.
    pub skipped_edges: Vec<(ChartId, ChartId)>,
}

impl PropagationRecord {
    /// Reached charts, ascending.
    pub fn visited(&self) -> Vec<ChartId> {
        (0..self.depth.len())
            .filter(|&c| self.depth[c].is_some())
            .collect()
    }
}

/// Breadth-first seeded propagation over admissible edges, depth-bounded,
/// frontier processed in ascending ChartId order.
pub fn propagate(
    atlas: &Atlas,
    seed_chart: ChartId,
    seed_vector: &DVector<f64>,
    config: &PropagationConfig,
) -> Result<PropagationRecord, DiscoveryError> {
    config.validate()?;
    if seed_chart >= atlas.num_charts() {
        return Err(AtlasError::NoSuchChart {
            chart: seed_chart,
            num_charts: atlas.num_charts(),
        }
        .into());
    }
    let norm = geometry::vector_norm(seed_vector);
    if norm <= geometry::VANISHING_TOL {
        return Err(DiscoveryError::VanishingSeed(norm));
    }
    let seed_vector = seed_vector / norm;

    let n = atlas.num_charts();
    let mut depth: Vec<Option<usize>> = vec![None; n];
    let mut parent: Vec<Option<ChartId>> = vec![None; n];
    let mut first_rep: Vec<Option<DVector<f64>>> = vec![None; n];
    let mut skipped: Vec<(ChartId, ChartId)> = Vec::new();

    depth[seed_chart] = Some(0);
    first_rep[seed_chart] = Some(seed_vector.clone());
    let mut frontier = vec![seed_chart];
    for level in 0..config.max_depth {
        let mut next = Vec::new();
        for &u in &frontier {
            let rep_u = first_rep[u].clone().expect("frontier chart has a rep");
            for v in atlas.admissible_neighbors(u, config.min_overlap, config.s_min)? {
                if depth[v].is_some() {
                    continue;
                }
                let transported = atlas.transport_along(u, v)? * &rep_u;
                let t_norm = geometry::vector_norm(&transported);
                if t_norm <= geometry::VANISHING_TOL {
                    skipped.push((u, v));
                    continue;
                }
                depth[v] = Some(level + 1);
                parent[v] = Some(u);
                first_rep[v] = Some(transported / t_norm);
                next.push(v);
            }
        }
        next.sort_unstable();
        if next.is_empty() {
            break;
        }
        frontier = next;
    }

    // collect incoming evidence: every admissible edge between reached charts
    // contributes at its seed-far endpoint(s)
    let mut incoming: Vec<Vec<(ChartId, DVector<f64>)>> = vec![Vec::new(); n];
    incoming[seed_chart].push((seed_chart, seed_vector.clone()));
    for v in 0..n {
        let Some(dv) = depth[v] else { continue };
        for u in atlas.admissible_neighbors(v, config.min_overlap, config.s_min)? {
            let Some(du) = depth[u] else { continue };
            if du > dv || skipped.contains(&(u, v)) {
                continue;
            }
            let rep_u = first_rep[u].as_ref().expect("reached chart has a rep");
            let transported = atlas.transport_along(u, v)? * rep_u;
            let t_norm = geometry::vector_norm(&transported);
            if t_norm <= geometry::VANISHING_TOL {
                skipped.push((u, v));
                continue;
            }
            incoming[v].push((u, transported / t_norm));
        }
    }

    Ok(PropagationRecord {
        seed_chart,
        seed_vector,
        depth,
        parent,
        first_rep,
        incoming,
        skipped_edges: skipped,
    })
}

/// Greedy sign-aligned aggregation: `σ_1 = +1`, each later sign follows the
/// running sum (a zero dot keeps `+1`), then the signed sum is normalized.
/// Returns `None` when the signed sum vanishes (antipodal evidence).
pub fn aggregate_candidates(candidates: &[(ChartId, DVector<f64>)]) -> Option<DVector<f64>> {
    let (_, first) = candidates.first()?;
    let mut sum = first.clone();
    for (_, cand) in &candidates[1..] {
        let sigma = if cand.dot(&sum) < 0.0 { -1.0 } else { 1.0 };
        sum.axpy(sigma, cand, 1.0);
    }
    let norm = geometry::vector_norm(&sum);
    if norm <= geometry::VANISHING_TOL {
        None
    } else {
        Some(sum / norm)
    }
}

/// Synchronized representatives: `None` for unreached or degenerate charts.
#[derive(Debug, Clone)]
pub struct SyncOutcome {
    pub representatives: Vec<Option<DVector<f64>>>,
    /// Charts dropped because their signed evidence sum vanished.
    pub degenerate: Vec<ChartId>,
}

/// Sign-synchronizes incoming evidence at every reached chart, repeated for
/// `config.sync_passes` passes.
///
/// Pass 1 aggregates the BFS-propagated candidates. Every later pass
/// regenerates candidates from the current representatives with one edge
/// transport refresh over all retained edges (both endpoints of every edge
/// between retained charts), then re-aggregates. The seed chart always keeps
/// its seed vector as its first candidate, anchoring the section.
pub fn synchronize(
    atlas: &Atlas,
    record: &PropagationRecord,
    config: &PropagationConfig,
) -> Result<SyncOutcome, DiscoveryError> {
    let n = atlas.num_charts();
    let mut reps: Vec<Option<DVector<f64>>> = vec![None; n];
    let mut degenerate = Vec::new();

    for v in record.visited() {
        match aggregate_candidates(&record.incoming[v]) {
            Some(rep) => reps[v] = Some(rep),
            None => degenerate.push(v),
        }
    }

    for _ in 1..config.sync_passes {
        let mut next: Vec<Option<DVector<f64>>> = vec![None; n];
        for v in 0..n {
            if reps[v].is_none() {
                continue;
            }
            let mut candidates: Vec<(ChartId, DVector<f64>)> = Vec::new();
            if v == record.seed_chart {
                candidates.push((v, record.seed_vector.clone()));
            }
            for u in atlas.admissible_neighbors(v, config.min_overlap, config.s_min)? {
                let Some(rep_u) = reps[u].as_ref() else {
                    continue;
                };
                let transported = atlas.transport_along(u, v)? * rep_u;
                let t_norm = geometry::vector_norm(&transported);
                if t_norm <= geometry::VANISHING_TOL {
                    continue;
                }
                candidates.push((u, transported / t_norm));
            }
            match aggregate_candidates(&candidates) {
                Some(rep) => next[v] = Some(rep),
                None => degenerate.push(v),
            }
        }
        reps = next;
    }

    Ok(SyncOutcome {
        representatives: reps,
        degenerate,
    })
}

/// Per-chart path defect: the sign-minimized distance between the pure seed
/// transport along the retained parent path (the first-arrival
/// representative) and the synchronized representative. The seed chart is 0
/// by definition.
pub fn path_defects(
    record: &PropagationRecord,
    reps: &[Option<DVector<f64>>],
) -> Vec<Option<f64>> {
    let n = record.depth.len();
    let mut out = vec![None; n];
    for c in 0..n {
        if c == record.seed_chart {
            if reps[c].is_some() {
                out[c] = Some(0.0);
            }
            continue;
        }
        let (Some(tree_rep), Some(sync_rep)) = (record.first_rep[c].as_ref(), reps[c].as_ref())
        else {
            continue;
        };
        out[c] = Some(geometry::sign_min_distance(tree_rep, sync_rep));
    }
    out
}

/// Per-section summary statistics. Means over an empty edge set use the
/// vacuous-coherence convention (defect 0, alignment 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSummary {
    pub support_size: usize,
    pub cycle_count: usize,
    pub mean_edge_defect: f64,
    pub mean_alignment: f64,
    pub mean_path_defect: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_holonomy_defect: Option<f64>,
}

/// A discovered candidate section: connected support around the seed with one
/// unit representative per chart and summary statistics.
#[derive(Debug, Clone)]
pub struct CandidateSection {
    pub seed_chart: ChartId,
    /// Axis index for grid seeds; `None` for free seed vectors.
    pub seed_axis: Option<u32>,
    /// Support charts, ascending; always contains the seed.
    pub support: Vec<ChartId>,
    /// Retained edges as canonical `(min,max)` pairs, sorted.
    pub edges: Vec<(ChartId, ChartId)>,
    /// Unit representative per support chart, parallel to `support`.
    pub representatives: Vec<DVector<f64>>,
    pub summary: SectionSummary,
}

impl CandidateSection {
    pub fn representative(&self, chart: ChartId) -> Option<&DVector<f64>> {
        let idx = self.support.binary_search(&chart).ok()?;
        self.representatives.get(idx)
    }

    pub fn support_set(&self) -> std::collections::BTreeSet<ChartId> {
        self.support.iter().copied().collect()
    }
}

/// Drops charts whose path defect exceeds the threshold, drops surviving
/// edges whose edge defect exceeds the threshold, restricts to the connected
/// component containing the seed and computes summary statistics.
///
/// A fully pruned seed degenerates to the singleton section `{seed}`.
pub fn prune_and_extract(
    atlas: &Atlas,
    record: &PropagationRecord,
    sync: &SyncOutcome,
    config: &PropagationConfig,
) -> Result<CandidateSection, DiscoveryError> {
    prune_with_axis(atlas, record, sync, config, None)
}

pub fn prune_with_axis(
    atlas: &Atlas,
    record: &PropagationRecord,
    sync: &SyncOutcome,
    config: &PropagationConfig,
    seed_axis: Option<u32>,
) -> Result<CandidateSection, DiscoveryError> {
    let n = atlas.num_charts();
    let reps = &sync.representatives;
    let defects = path_defects(record, reps);

    let mut survives = vec![false; n];
    for c in 0..n {
        if let (Some(d), Some(_)) = (defects[c], reps[c].as_ref()) {
            survives[c] = d <= config.max_path_defect_prune;
        }
    }

    if !survives[record.seed_chart] {
        return Ok(singleton_section(record, seed_axis));
    }

    // edge pruning over the induced admissible subgraph
    struct KeptEdge {
        u: ChartId,
        v: ChartId,
        defect: f64,
        alignment: f64,
    }
    let mut kept: Vec<KeptEdge> = Vec::new();
    for e in atlas.edges() {
        if !survives[e.u] || !survives[e.v] {
            continue;
        }
        if e.overlap_size < config.min_overlap || e.sigma_min < config.s_min {
            continue;
        }
        let (ru, rv) = (
            reps[e.u].as_ref().expect("surviving chart has rep"),
            reps[e.v].as_ref().expect("surviving chart has rep"),
        );
        let defect = geometry::edge_defect(&e.transport, ru, rv)?;
        if defect > config.max_edge_defect_prune {
            continue;
        }
        let alignment = geometry::alignment(&e.transport, ru, rv)?;
        kept.push(KeptEdge {
            u: e.u,
            v: e.v,
            defect,
            alignment,
        });
    }

    // connected component of the seed over kept edges
    let mut adjacency: Vec<Vec<ChartId>> = vec![Vec::new(); n];
    for e in &kept {
        adjacency[e.u].push(e.v);
        adjacency[e.v].push(e.u);
    }
    let mut in_component = vec![false; n];
    in_component[record.seed_chart] = true;
    let mut stack = vec![record.seed_chart];
    while let Some(u) = stack.pop() {
        for &v in &adjacency[u] {
            if !in_component[v] {
                in_component[v] = true;
                stack.push(v);
            }
        }
    }

    let support: Vec<ChartId> = (0..n).filter(|&c| in_component[c]).collect();
    let mut edges: Vec<(ChartId, ChartId)> = Vec::new();
    let mut edge_defect_sum = 0.0;
    let mut alignment_sum = 0.0;
    for e in &kept {
        if in_component[e.u] && in_component[e.v] {
            edges.push((e.u.min(e.v), e.u.max(e.v)));
            edge_defect_sum += e.defect;
            alignment_sum += e.alignment;
        }
    }
    edges.sort_unstable();

    let representatives: Vec<DVector<f64>> = support
        .iter()
        .map(|&c| reps[c].clone().expect("support chart has rep"))
        .collect();

    let support_size = support.len();
    let edge_count = edges.len();
    let cycle_count = edge_count + 1 - support_size;
    let (mean_edge_defect, mean_alignment) = if edge_count == 0 {
        (0.0, 1.0)
    } else {
        (
            edge_defect_sum / edge_count as f64,
            alignment_sum / edge_count as f64,
        )
    };
    let mean_path_defect = support
        .iter()
        .map(|&c| defects[c].expect("surviving chart has path defect"))
        .sum::<f64>()
        / support_size as f64;

    let mean_holonomy_defect = if cycle_count >= 1 {
        Some(mean_holonomy(
            atlas,
            &support,
            &edges,
            record.seed_chart,
            reps,
        )?)
    } else {
        None
    };

    Ok(CandidateSection {
        seed_chart: record.seed_chart,
        seed_axis,
        support,
        edges,
        representatives,
        summary: SectionSummary {
            support_size,
            cycle_count,
            mean_edge_defect,
            mean_alignment,
            mean_path_defect,
            mean_holonomy_defect,
        },
    })
}

fn singleton_section(record: &PropagationRecord, seed_axis: Option<u32>) -> CandidateSection {
    CandidateSection {
        seed_chart: record.seed_chart,
        seed_axis,
        support: vec![record.seed_chart],
        edges: Vec::new(),
        representatives: vec![record.seed_vector.clone()],
        summary: SectionSummary {
            support_size: 1,
            cycle_count: 0,
            mean_edge_defect: 0.0,
            mean_alignment: 1.0,
            mean_path_defect: 0.0,
            mean_holonomy_defect: None,
        },
    }
}

/// Mean holonomy defect over the BFS fundamental cycles of the support,
/// rooted at the seed, each evaluated at that cycle's base chart with the
/// synchronized representative there.
///
/// Cycle transports use the root-path composition identity: for a non-tree
/// edge `(u,v)` the loop transport based at `u` equals
/// `T_{u←v} · M(root→v) · M(root→u)ᵀ`, with the root products memoized along
/// the spanning tree — identical to the direct edge-by-edge product for
/// orthogonal transports, in O(1) matrix products per cycle.
fn mean_holonomy(
    atlas: &Atlas,
    support: &[ChartId],
    edges: &[(ChartId, ChartId)],
    root: ChartId,
    reps: &[Option<DVector<f64>>],
) -> Result<f64, DiscoveryError> {
    let basis = geometry::fundamental_cycle_basis(support, edges, root)?;
    if basis.cycles.is_empty() {
        return Ok(0.0);
    }

    let k = atlas.k();
    let mut cache: std::collections::BTreeMap<ChartId, DMatrix<f64>> =
        std::collections::BTreeMap::new();
    cache.insert(root, DMatrix::identity(k, k));
    let parent_of = &basis.tree_parents;

    fn product_to(
        atlas: &Atlas,
        parent_of: &std::collections::BTreeMap<ChartId, ChartId>,
        cache: &mut std::collections::BTreeMap<ChartId, DMatrix<f64>>,
        c: ChartId,
    ) -> Result<DMatrix<f64>, DiscoveryError> {
        if let Some(m) = cache.get(&c) {
            return Ok(m.clone());
        }
        let mut chain = Vec::new();
        let mut cur = c;
        while !cache.contains_key(&cur) {
            chain.push(cur);
            cur = *parent_of.get(&cur).expect("non-root chart has parent");
        }
        while let Some(child) = chain.pop() {
            let p = *parent_of.get(&child).expect("non-root chart has parent");
            let step = atlas.transport_along(p, child)?;
            let m = step * cache.get(&p).expect("ancestor cached");
            cache.insert(child, m);
        }
        Ok(cache.get(&c).expect("just inserted").clone())
    }

    let mut total = 0.0;
    for cycle in &basis.cycles {
        let base = cycle.base_chart();
        let (v, u) = *cycle.oriented_edges().last().expect("cycle has edges");
        debug_assert_eq!(u, base);
        let m_u = product_to(atlas, parent_of, &mut cache, u)?;
        let m_v = product_to(atlas, parent_of, &mut cache, v)?;
        let loop_transport = atlas.transport_along(v, u)? * m_v * m_u.transpose();
        let rep = reps[base].as_ref().expect("base chart has rep");
        total += geometry::cycle_defect(&loop_transport, rep)?;
    }
    Ok(total / basis.cycles.len() as f64)
}

/// Full single-seed discovery: propagate, synchronize, prune, extract.
pub fn discover(
    atlas: &Atlas,
    seed_chart: ChartId,
    seed_vector: &DVector<f64>,
    seed_axis: Option<u32>,
    config: &PropagationConfig,
) -> Result<CandidateSection, DiscoveryError> {
    let record = propagate(atlas, seed_chart, seed_vector, config)?;
    let sync = synchronize(atlas, &record, config)?;
    prune_with_axis(atlas, &record, &sync, config, seed_axis)
}
