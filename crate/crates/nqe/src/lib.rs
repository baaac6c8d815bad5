//! Complex first-order-logic query answering over hyper-relational
//! knowledge graphs.
//!
//! A hyper-relational knowledge graph stores n-ary facts: a main
//! `(subject, relation, object)` triple plus any number of
//! `(attribute: value)` qualifier pairs. This crate answers FOL queries
//! (projection, conjunction, disjunction, negation) over such graphs along
//! two routes that share one query language:
//!
//! * **Exact symbolic execution** ([`executor`]) computes ground-truth answer
//!   sets over the stored facts, and labels generated query datasets
//!   ([`sampler`]).
//! * **A trainable query-embedding model** ([`encoder`], [`train`]) embeds
//!   entities and queries as fuzzy vectors in `[0,1]^d`, implements n-ary
//!   projection with a dual-heterogeneous attention encoder (role-specific
//!   projections plus per-edge-type biases), applies t-norm logic operators
//!   ([`logic`]), and executes compiled step programs of mixed query types in
//!   a single batch.
//!
//! Queries are written in a small s-expression language ([`query`]), compiled
//! to linear [`query::StepProgram`]s, and evaluated either exactly or in
//! fuzzy space. Training and filtered-ranking evaluation (MRR, Hits@K) live
//! in [`train`].
//!
//! The `examples/` directory walks through every major capability; the `nqe`
//! binary exposes the same pipeline as subcommands (`ingest`, `sample`,
//! `answer`, `train`, `eval`, `query`).

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod encoder;
mod error;
pub mod executor;
pub mod logic;
pub mod query;
pub mod sampler;
pub mod store;
pub mod train;

pub use error::{NqeError, Result};
