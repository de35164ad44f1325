//! Semantic sections over context atlases.
//!
//! A context atlas is a chart graph with an orthogonal transport map on every
//! edge. A semantic section is a family of nonzero local representatives, one
//! per chart of a connected support subgraph, taken up to per-chart sign and
//! positive scale, that stays compatible under transport. This crate provides:
//!
//! - the atlas data model and its on-disk document format ([`atlas`], [`format`]),
//! - the numerical primitives: defects, alignments, cycle transports,
//!   fundamental cycle bases, polar orthogonalization ([`geometry`]),
//! - synthetic ground-truth atlases with planted sections, holonomy twists and
//!   controlled transport noise ([`synthetic`]),
//! - seeded propagation, sign synchronization, defect pruning and support
//!   extraction ([`discovery`]),
//! - the cycle-aware section taxonomy, deduplication and identity-recovery
//!   comparison ([`certification`]),
//! - end-to-end census / sweep / identity runs and atlas diagnostics
//!   ([`pipeline`]).

pub mod atlas;
pub mod certification;
pub mod discovery;
pub mod format;
pub mod geometry;
pub mod pipeline;
pub mod synthetic;





