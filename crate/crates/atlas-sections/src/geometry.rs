//! Numerical primitives for section analysis: normalization, sign-quotient
//! defects, cycle transports, fundamental cycle bases and polar
//! orthogonalization.
//!
//! Representatives are compared up to per-chart sign and positive scale, so
//! every distance here is minimized over `σ ∈ {±1}` after normalization. For
//! unit vectors the defect and the absolute cosine are tied by the closed form
//! `defect² + 2·alignment = 2`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::atlas::{Atlas, AtlasError, ChartId};

/// Norms at or below this are treated as vanishing representatives.
pub const VANISHING_TOL: f64 = 1e-12;
/// Smallest admissible singular value for polar orthogonalization.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("vanishing vector: norm {norm:.3e} at or below {VANISHING_TOL:.0e}")]
    VanishingVector { norm: f64 },
    #[error("vanishing transported representative: norm {norm:.3e}")]
    VanishingTransport { norm: f64 },
    #[error("rank-deficient matrix: smallest singular value {sigma_min:.3e} at or below {RANK_TOL:.0e}")]
    RankDeficient { sigma_min: f64 },
    #[error("cycle does not close: walk ends at {got}, base chart is {base}")]
    OpenCycle { base: ChartId, got: ChartId },
    #[error("cycle has {0} edges, need at least 3")]
    ShortCycle(usize),
    #[error("cycle edges do not chain at step {step}: edge ends at {got}, next starts at {want}")]
    BrokenChain { step: usize, got: ChartId, want: ChartId },
    #[error("cycle does not start at its base chart {base}: first edge starts at {got}")]
    WrongBase { base: ChartId, got: ChartId },
    #[error("support subgraph is disconnected: chart {0} unreachable from root")]
    Disconnected(ChartId),
    #[error("root chart {0} is not in the support")]
    RootOutsideSupport(ChartId),
    #[error("edge ({0},{1}) references a chart outside the support")]
    EdgeOutsideSupport(ChartId, ChartId),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
}

/// Euclidean norm with strictly sequential accumulation.
///
/// Defect values feed threshold comparisons everywhere downstream, so their
/// evaluation order is pinned rather than left to backend unrolling.
pub fn vector_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc + x * x).sqrt()
}

/// Dot product with strictly sequential accumulation, for the same reason.
pub fn dot_sequential(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// `v / ‖v‖₂`. Errors when the norm is at or below [`VANISHING_TOL`].
pub fn normalize(v: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
    let norm = vector_norm(v);
    if norm <= VANISHING_TOL {
        return Err(GeometryError::VanishingVector { norm });
    }
    Ok(v / norm)
}

/// `min over σ∈{±1} of ‖a − σ·b‖₂` for unit vectors `a`, `b`.
pub fn sign_min_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut plus = 0.0;
    let mut minus = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        let s = x + y;
        plus += d * d;
        minus += s * s;
    }
    plus.sqrt().min(minus.sqrt())
}

fn normalized_pair(
    transport: &DMatrix<f64>,
    s_u: &DVector<f64>,
    s_v: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), GeometryError> {
    let transported = transport * s_u;
    let norm = vector_norm(&transported);
    if norm <= VANISHING_TOL {
        return Err(GeometryError::VanishingTransport { norm });
    }
    Ok((transported / norm, normalize(s_v)?))
}

/// Edge defect `δ = min over σ∈{±1} of ‖T·s_u/‖T·s_u‖ − σ·s_v/‖s_v‖‖₂`.
///
/// Lives in `[0, √2]`; equals `√(2 − 2·|cos θ|)` for the angle θ between the
/// normalized vectors.
pub fn edge_defect(
    transport: &DMatrix<f64>,
    s_u: &DVector<f64>,
    s_v: &DVector<f64>,
) -> Result<f64, GeometryError> {
    let (a, b) = normalized_pair(transport, s_u, s_v)?;
    Ok(sign_min_distance(&a, &b))
}

/// Absolute cosine between the transported and the target representative,
/// in `[0, 1]`. Satisfies `alignment = 1 − defect²/2`.
pub fn alignment(
    transport: &DMatrix<f64>,
    s_u: &DVector<f64>,
    s_v: &DVector<f64>,
) -> Result<f64, GeometryError> {
    let (a, b) = normalized_pair(transport, s_u, s_v)?;
    Ok(a.dot(&b).abs().min(1.0))
}

/// Rotation of the `(i,j)` coordinate plane by `angle`, identity elsewhere.
pub fn plane_rotation(k: usize, i: usize, j: usize, angle: f64) -> DMatrix<f64> {
    assert!(i < k && j < k && i != j, "plane axes must be distinct and < k");
    let mut r = DMatrix::identity(k, k);
    let (sin, cos) = angle.sin_cos();
    r[(i, i)] = cos;
    r[(j, j)] = cos;
    r[(i, j)] = -sin;
    r[(j, i)] = sin;
    r
}

/// `‖TᵀT − I‖_max`; zero iff the columns of `T` are orthonormal.
pub fn orthogonality_residual(t: &DMatrix<f64>) -> f64 {
    let mut gram = t.transpose() * t;
    for i in 0..gram.nrows() {
        gram[(i, i)] -= 1.0;
    }
    gram.amax()
}

/// `‖B·Bᵀ − I‖_max`; zero iff the rows of `B` are orthonormal.
pub fn row_orthonormality_residual(b: &DMatrix<f64>) -> f64 {
    let mut gram = b * b.transpose();
    for i in 0..gram.nrows() {
        gram[(i, i)] -= 1.0;
    }
    gram.amax()
}

/// A closed oriented walk `base → … → base` of length ≥ 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cycle {
    base_chart: ChartId,
    oriented_edges: Vec<(ChartId, ChartId)>,
}

impl Cycle {
    pub fn new(
        base_chart: ChartId,
        oriented_edges: Vec<(ChartId, ChartId)>,
    ) -> Result<Self, GeometryError> {
        if oriented_edges.len() < 3 {
            return Err(GeometryError::ShortCycle(oriented_edges.len()));
        }
        if oriented_edges[0].0 != base_chart {
            return Err(GeometryError::WrongBase {
                base: base_chart,
                got: oriented_edges[0].0,
            });
        }
        for (step, pair) in oriented_edges.windows(2).enumerate() {
            if pair[0].1 != pair[1].0 {
                return Err(GeometryError::BrokenChain {
                    step,
                    got: pair[0].1,
                    want: pair[1].0,
                });
            }
        }
        let last = oriented_edges.last().unwrap().1;
        if last != base_chart {
            return Err(GeometryError::OpenCycle {
                base: base_chart,
                got: last,
            });
        }
        Ok(Self {
            base_chart,
            oriented_edges,
        })
    }

    pub fn base_chart(&self) -> ChartId {
        self.base_chart
    }

    pub fn oriented_edges(&self) -> &[(ChartId, ChartId)] {
        &self.oriented_edges
    }

    pub fn len(&self) -> usize {
        self.oriented_edges.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length ≥ 3 by construction
    }

    /// The same loop walked backwards, still based at `base_chart`.
    pub fn reversed(&self) -> Cycle {
        let edges = self
            .oriented_edges
            .iter()
            .rev()
            .map(|&(a, b)| (b, a))
            .collect();
        Cycle {
            base_chart: self.base_chart,
            oriented_edges: edges,
        }
    }

    /// True if the loop traverses the undirected edge `{u int v}`.
    pub fn contains_edge(&self, u: ChartId, v: ChartId) -> bool {
        self.oriented_edges
            .iter()
            .any(|&(a, b)| (a, b) == (u, v) || (a, b) == (v, u))
    }
}

/// Ordered product of edge transports around a cycle, first edge applied
/// first: for `γ = (c_0, c_1, …, c_L = c_0)` this is
/// `T_{c_0 c_{L−1}} ⋯ T_{c_2 c_1} · T_{c_1 c_0}`.
pub fn cycle_transport(atlas: &Atlas, gamma: &Cycle) -> Result<DMatrix<f64>, GeometryError> {
    let k = atlas.k();
    let mut total = DMatrix::identity(k, k);
    for &(from, to) in gamma.oriented_edges() {
        total = atlas.transport_along(from, to)? * total;
    }
    Ok(total)
}

/// Cycle (holonomy) defect: sign-minimized distance between a base
/// representative and its image under the loop transport.
pub fn cycle_defect(t_gamma: &DMatrix<f64>, s_base: &DVector<f64>) -> Result<f64, GeometryError> {
    edge_defect(t_gamma, s_base, s_base)
}

/// Fundamental cycles of a connected support subgraph relative to a BFS
/// spanning tree; `betti = |E| − |V| + 1` cycles, one per non-tree edge.
#[derive(Debug, Clone)]
pub struct CycleBasis {
    /// Tree edges as canonical `(min, max)` pairs, sorted.
    pub spanning_tree_edges: Vec<(ChartId, ChartId)>,
    /// BFS parent per non-root chart of the spanning tree.
    pub tree_parents: BTreeMap<ChartId, ChartId>,
    /// One fundamental cycle per non-tree edge, sorted by that edge's
    /// canonical pair; each based at the smaller endpoint.
    pub cycles: Vec<Cycle>,
    pub betti: usize,
}

/// Builds the BFS fundamental cycle basis of a support subgraph.
///
/// The spanning tree grows breadth-first from `root` with ascending-ChartId
/// tie-breaks. For each non-tree edge `(u,v)` (canonicalized so `u < v`), the
/// fundamental cycle is the tree path `u → v` closed by the edge `v → u`,
/// based at `u`.
pub fn fundamental_cycle_basis(
    charts: &[ChartId],
    edges: &[(ChartId, ChartId)],
    root: ChartId,
) -> Result<CycleBasis, GeometryError> {
    if !charts.contains(&root) {
        return Err(GeometryError::RootOutsideSupport(root));
    }
    let mut adjacency: BTreeMap<ChartId, Vec<ChartId>> =
        charts.iter().map(|&c| (c, Vec::new())).collect();
    for &(u, v) in edges {
        if !adjacency.contains_key(&u) || !adjacency.contains_key(&v) {
            return Err(GeometryError::EdgeOutsideSupport(u, v));
        }
        adjacency.get_mut(&u).unwrap().push(v);
        adjacency.get_mut(&v).unwrap().push(u);
    }
    for row in adjacency.values_mut() {
        row.sort_unstable();
    }

    let mut parent: BTreeMap<ChartId, ChartId> = BTreeMap::new();
    let mut depth: BTreeMap<ChartId, usize> = BTreeMap::new();
    let mut tree_edges: Vec<(ChartId, ChartId)> = Vec::new();
    let mut queue = std::collections::VecDeque::from([root]);
    depth.insert(root, 0);
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[&u] {
            if !depth.contains_key(&v) {
                depth.insert(v, depth[&u] + 1);
                parent.insert(v, u);
                tree_edges.push((u.min(v), u.max(v)));
                queue.push_back(v);
            }
        }
    }
    if let Some(&missing) = charts.iter().find(|c| !depth.contains_key(c)) {
        return Err(GeometryError::Disconnected(missing));
    }
    tree_edges.sort_unstable();

    let mut non_tree: Vec<(ChartId, ChartId)> = edges
        .iter()
        .map(|&(u, v)| (u.min(v), u.max(v)))
        .filter(|e| tree_edges.binary_search(e).is_err())
        .collect();
    non_tree.sort_unstable();
    non_tree.dedup();

    let path_to_root = |mut c: ChartId| -> Vec<ChartId> {
        let mut path = vec![c];
        while let Some(&p) = parent.get(&c) {
            path.push(p);
            c = p;
        }
        path
    };

    let mut cycles = Vec::with_capacity(non_tree.len());
    for &(u, v) in &non_tree {
        // tree path u → v through the lowest common ancestor
        let up = path_to_root(u);
        let vp = path_to_root(v);
        let mut lca_drop = 0;
        while lca_drop < up.len().min(vp.len())
            && up[up.len() - 1 - lca_drop] == vp[vp.len() - 1 - lca_drop]
        {
            lca_drop += 1;
        }
        // up ends ... lca (keep one shared chart, the LCA itself)
        let ascent = &up[..=up.len() - lca_drop];
        let descent = &vp[..=vp.len() - lca_drop];

        let mut walk: Vec<ChartId> = ascent.to_vec();
        walk.extend(descent.iter().rev().skip(1));
        walk.push(u); // close through the non-tree edge v → u

        let oriented = walk
            .windows(2)
            .map(|w| (w[0], w[1]))
            .collect::<Vec<_>>();
        cycles.push(Cycle::new(u, oriented)?);
    }

    let betti = cycles.len();
    Ok(CycleBasis {
        spanning_tree_edges: tree_edges,
        tree_parents: parent,
        cycles,
        betti,
    })
}

/// Polar factor of a square matrix: the orthogonal `Q = U·Vᵀ` from
/// `M = U·Σ·Vᵀ`, which minimizes `‖M − Q‖_F` over orthogonal matrices,
/// together with the smallest singular value of `M`.
pub fn polar_orthogonalize(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64), GeometryError> {
    let svd = m.clone().svd(true, true);
    let sigma_min = svd.singular_values.min();
    if sigma_min <= RANK_TOL {
        return Err(GeometryError::RankDeficient { sigma_min });
    }
    let q = svd.u.expect("svd with u") * svd.v_t.expect("svd with v_t");
    Ok((q, sigma_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::EdgeRecord;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn unit(data: Vec<f64>) -> DVector<f64> {
        let v = DVector::from_vec(data);
        &v / v.norm()
    }

    fn gaussian_matrix(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(rng))
    }

    fn random_orthogonal(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
        polar_orthogonalize(&gaussian_matrix(rng, k)).unwrap().0
    }

    fn gaussian_vector(rng: &mut ChaCha8Rng, k: usize) -> DVector<f64> {
        DVector::from_fn(k, |_, _| StandardNormal.sample(rng))
    }

    // Independent oracle: sign enumeration with naive loops, no nalgebra ops.
    // Accumulates the matrix-vector product column-major so both routes
    // perform bitwise-identical floating-point operations.
    fn defect_bruteforce(t: &DMatrix<f64>, s_u: &DVector<f64>, s_v: &DVector<f64>) -> f64 {
        let k = s_u.len();
        let mut a = vec![0.0; k];
        for j in 0..k {
            for i in 0..k {
                a[i] += t[(i, j)] * s_u[j];
            }
        }
        let na = a.iter().fold(0.0, |acc, x| acc + x * x).sqrt();
        let nb = s_v.iter().fold(0.0, |acc: f64, x| acc + x * x).sqrt();
        let mut best = f64::INFINITY;
        for sigma in [1.0, -1.0] {
            let mut d2 = 0.0;
            for i in 0..k {
                let diff = a[i] / na - sigma * s_v[i] / nb;
                d2 += diff * diff;
            }
            best = best.min(d2.sqrt());
        }
        best
    }

    #[test]
    fn normalize_examples() {
        let v = DVector::from_vec(vec![3.0, 4.0, 0.0]);
        let n = normalize(&v).unwrap();
        assert_eq!(n, DVector::from_vec(vec![0.6, 0.8, 0.0]));

        let u = unit(vec![1.0, 1.0, 1.0]);
        let again = normalize(&u).unwrap();
        assert!((again - &u).norm() <= 1e-15);
        assert!((normalize(&u).unwrap().norm() - 1.0).abs() <= 1e-14);

        let z = DVector::from_vec(vec![0.0, 0.0]);
        assert!(matches!(
            normalize(&z),
            Err(GeometryError::VanishingVector { .. })
        ));
    }

    #[test]
    fn edge_defect_examples() {
        let k = 4;
        let id = DMatrix::identity(k, k);
        let e1 = unit(vec![1.0, 0.0, 0.0, 0.0]);
        let e2 = unit(vec![0.0, 1.0, 0.0, 0.0]);

        // identical directions
        assert_eq!(edge_defect(&id, &e1, &e1).unwrap(), 0.0);
        // sign infimum: antipodal pair has zero defect
        assert_eq!(edge_defect(&id, &e1, &(-&e1)).unwrap(), 0.0);
        // orthogonal unit pair: sqrt(2)
        let d = edge_defect(&id, &e1, &e2).unwrap();
        assert!((d - 1.4142135623730951).abs() <= 1e-15);
        // 60 degrees: sqrt(2 - 2*0.5) = 1
        let at60 = unit(vec![0.5, 3.0f64.sqrt() / 2.0, 0.0, 0.0]);
        let d = edge_defect(&id, &e1, &at60).unwrap();
        assert!((d - 1.0).abs() <= 1e-15, "got {d}");

        // vanishing target
        let z = DVector::from_vec(vec![0.0; 4]);
        assert!(edge_defect(&id, &e1, &z).is_err());
        assert!(edge_defect(&id, &z, &e1).is_err());
    }

    #[test]
    fn alignment_examples() {
        let k = 3;
        let id = DMatrix::identity(k, k);
        let e1 = unit(vec![1.0, 0.0, 0.0]);
        let e2 = unit(vec![0.0, 1.0, 0.0]);
        assert_eq!(alignment(&id, &e1, &e1).unwrap(), 1.0);
        assert_eq!(alignment(&id, &e1, &e2).unwrap(), 0.0);

        // defect 0.1367 corresponds to alignment 1 - 0.1367^2/2 = 0.99065...
        let target_alignment = 1.0 - 0.1367f64 * 0.1367 / 2.0;
        let theta = target_alignment.acos();
        let s_v = unit(vec![theta.cos(), theta.sin(), 0.0]);
        let a = alignment(&id, &e1, &s_v).unwrap();
        let d = edge_defect(&id, &e1, &s_v).unwrap();
        assert!((a - 0.990656555).abs() <= 1e-9);
        assert!((d - 0.1367).abs() <= 1e-12);
    }

    #[test]
    fn defect_matches_bruteforce_and_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = 32;
        for _ in 0..1000 {
            let t = random_orthogonal(&mut rng, k);
            let s_u = gaussian_vector(&mut rng, k);
            let s_v = gaussian_vector(&mut rng, k);
            let d = edge_defect(&t, &s_u, &s_v).unwrap();
            let a = alignment(&t, &s_u, &s_v).unwrap();
            assert_eq!(d, defect_bruteforce(&t, &s_u, &s_v));
            assert!((d * d + 2.0 * a - 2.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn cycle_validation() {
        assert!(matches!(
            Cycle::new(0, vec![(0, 1), (1, 0)]),
            Err(GeometryError::ShortCycle(2))
        ));
        assert!(matches!(
            Cycle::new(0, vec![(0, 1), (2, 0), (0, 1)]),
            Err(GeometryError::BrokenChain { step: 0, .. })
        ));
        assert!(matches!(
            Cycle::new(0, vec![(0, 1), (1, 2), (2, 3)]),
            Err(GeometryError::OpenCycle { base: 0, got: 3 })
        ));
        assert!(matches!(
            Cycle::new(5, vec![(0, 1), (1, 2), (2, 0)]),
            Err(GeometryError::WrongBase { base: 5, got: 0 })
        ));
        let c = Cycle::new(0, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.reversed().oriented_edges(), &[(0, 2), (2, 1), (1, 0)]);
    }

    fn atlas_with_transports(k: usize, specs: Vec<(ChartId, ChartId, DMatrix<f64>)>, n: usize) -> Atlas {
        let edges = specs
            .into_iter()
            .map(|(u, v, transport)| EdgeRecord {
                u,
                v,
                transport,
                overlap_size: 1024,
                sigma_min: 1.0,
            })
            .collect();
        Atlas::new(k, n, edges, None, vec![None; n]).unwrap()
    }

    #[test]
    fn cycle_transport_identity_triangle() {
        let k = 3;
        let id = DMatrix::identity(k, k);
        let atlas = atlas_with_transports(
            k,
            vec![(0, 1, id.clone()), (1, 2, id.clone()), (0, 2, id.clone())],
            3,
        );
        let gamma = Cycle::new(0, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let t = cycle_transport(&atlas, &gamma).unwrap();
        assert!((t - id).amax() <= 1e-15);
    }

    #[test]
    fn cycle_transport_single_rotation() {
        let k = 4;
        let r = plane_rotation(k, 0, 1, 0.7);
        let id = DMatrix::identity(k, k);
        // rotation on the closing edge 2→0 (stored as 0→2, so store transpose)
        let atlas = atlas_with_transports(
            k,
            vec![
                (0, 1, id.clone()),
                (1, 2, id.clone()),
                (2, 0, r.clone()),
            ],
            3,
        );
        let gamma = Cycle::new(0, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let t = cycle_transport(&atlas, &gamma).unwrap();
        assert!((&t - &r).amax() <= 1e-15);
        assert!(orthogonality_residual(&t) <= 1e-10);
    }

    #[test]
    fn cycle_transport_conjugation_telescopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = 8;
        let frames: Vec<DMatrix<f64>> = (0..4).map(|_| random_orthogonal(&mut rng, k)).collect();
        let conj = |v: usize, u: usize| &frames[v] * frames[u].transpose();
        let atlas = atlas_with_transports(
            k,
            vec![
                (0, 1, conj(1, 0)),
                (1, 2, conj(2, 1)),
                (2, 3, conj(3, 2)),
                (0, 3, conj(3, 0)),
                (0, 2, conj(2, 0)),
            ],
            4,
        );
        for cycle in [
            Cycle::new(0, vec![(0, 1), (1, 2), (2, 0)]).unwrap(),
            Cycle::new(0, vec![(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap(),
            Cycle::new(2, vec![(2, 0), (0, 3), (3, 2)]).unwrap(),
        ] {
            let t = cycle_transport(&atlas, &cycle).unwrap();
            let residual = (t - DMatrix::identity(k, k)).amax();
            assert!(residual <= 1e-10, "cycle residual {residual}");
        }
    }

    #[test]
    fn cycle_defect_examples() {
        let k = 4;
        let e1 = unit(vec![1.0, 0.0, 0.0, 0.0]);
        let id = DMatrix::identity(k, k);
        assert_eq!(cycle_defect(&id, &e1).unwrap(), 0.0);
        // sign quotient: -I closes up to sign
        assert_eq!(cycle_defect(&(-id), &e1).unwrap(), 0.0);
        // in-plane rotation by pi/3: sqrt(2 - 2 cos 60) = 1
        let r = plane_rotation(k, 0, 1, std::f64::consts::FRAC_PI_3);
        let d = cycle_defect(&r, &e1).unwrap();
        assert!((d - 1.0).abs() <= 1e-15);
        // representative orthogonal to the rotation plane is fixed
        let e3 = unit(vec![0.0, 0.0, 1.0, 0.0]);
        assert!(cycle_defect(&r, &e3).unwrap() <= 1e-15);
    }

    #[test]
    fn cycle_defect_reversal_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = 6;
        let frames: Vec<DMatrix<f64>> = (0..3).map(|_| random_orthogonal(&mut rng, k)).collect();
        let r = plane_rotation(k, 1, 3, 0.9);
        let atlas = atlas_with_transports(
            k,
            vec![
                (0, 1, &frames[1] * frames[0].transpose()),
                (1, 2, &r * &frames[2] * frames[1].transpose()),
                (0, 2, &frames[2] * frames[0].transpose()),
            ],
            3,
        );
        let gamma = Cycle::new(0, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let s = gaussian_vector(&mut rng, k);
        let fwd = cycle_defect(&cycle_transport(&atlas, &gamma).unwrap(), &s).unwrap();
        let bwd = cycle_defect(&cycle_transport(&atlas, &gamma.reversed()).unwrap(), &s).unwrap();
        assert!((fwd - bwd).abs() <= 1e-12, "fwd {fwd} bwd {bwd}");
    }

    #[test]
    fn cycle_basis_examples() {
        // path graph: betti 0
        let basis = fundamental_cycle_basis(&[0, 1, 2], &[(0, 1), (1, 2)], 0).unwrap();
        assert_eq!(basis.betti, 0);
        assert!(basis.cycles.is_empty());

        // triangle: one 3-cycle, based at the smaller endpoint of the non-tree edge
        let basis = fundamental_cycle_basis(&[0, 1, 2], &[(0, 1), (1, 2), (0, 2)], 0).unwrap();
        assert_eq!(basis.betti, 1);
        let c = &basis.cycles[0];
        assert_eq!(c.base_chart(), 1);
        assert_eq!(c.len(), 3);
        assert_eq!(c.oriented_edges(), &[(1, 0), (0, 2), (2, 1)]);

        // complete graph on 4 charts: betti 3
        let k4_edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let basis = fundamental_cycle_basis(&[0, 1, 2, 3], &k4_edges, 0).unwrap();
        assert_eq!(basis.betti, 3);
        assert_eq!(basis.cycles.len(), 3);
        assert_eq!(basis.spanning_tree_edges, vec![(0, 1), (0, 2), (0, 3)]);

        // disconnected support
        let err = fundamental_cycle_basis(&[0, 1, 2, 3], &[(0, 1), (2, 3)], 0).unwrap_err();
        assert!(matches!(err, GeometryError::Disconnected(2)));

        // root outside support
        let err = fundamental_cycle_basis(&[0, 1], &[(0, 1)], 7).unwrap_err();
        assert!(matches!(err, GeometryError::RootOutsideSupport(7)));
    }

    #[test]
    fn cycle_basis_deep_lca() {
        // two arms meeting at the root plus a rung between their tips:
        //   0 - 1 - 2
        //   0 - 3 - 4, rung (2,4)
        let charts = [0, 1, 2, 3, 4];
        let edges = [(0, 1), (1, 2), (0, 3), (3, 4), (2, 4)];
        let basis = fundamental_cycle_basis(&charts, &edges, 0).unwrap();
        assert_eq!(basis.betti, 1);
        let c = &basis.cycles[0];
        assert_eq!(c.base_chart(), 2);
        assert_eq!(
            c.oriented_edges(),
            &[(2, 1), (1, 0), (0, 3), (3, 4), (4, 2)]
        );
    }

    #[test]
    fn polar_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let k = 5;

        // already orthogonal: polar factor is the input, sigma_min 1
        let q0 = random_orthogonal(&mut rng, k);
        let (q, sigma) = polar_orthogonalize(&q0).unwrap();
        assert!((&q - &q0).amax() <= 1e-12);
        assert!((sigma - 1.0).abs() <= 1e-12);

        // scaled identity
        let (q, sigma) = polar_orthogonalize(&(DMatrix::identity(k, k) * 2.0)).unwrap();
        assert!((&q - DMatrix::identity(k, k)).amax() <= 1e-12);
        assert!((sigma - 2.0).abs() <= 1e-12);

        // rank-deficient input rejected
        let mut singular = DMatrix::identity(k, k);
        singular[(0, 0)] = 0.0;
        assert!(matches!(
            polar_orthogonalize(&singular),
            Err(GeometryError::RankDeficient { .. })
        ));
    }

    #[test]
    fn polar_minimizes_frobenius_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let k = 6;
        // well-conditioned random input: identity plus a small perturbation
        let m = DMatrix::identity(k, k) + gaussian_matrix(&mut rng, k) * 0.3;
        let (q, _) = polar_orthogonalize(&m).unwrap();
        assert!(orthogonality_residual(&q) <= 1e-10);
        let best = (&m - &q).norm();
        for _ in 0..100 {
            let p = random_orthogonal(&mut rng, k);
            let other = (&m - &p).norm();
            assert!(best <= other + 1e-12, "polar beaten: {best} > {other}");
        }
    }
}
