//! Rate-distortion functions for computing a function of two sources when the
//! decoder holds one of them as side information.
//!
//! The auxiliary variable of the single-letter formula is realized as a
//! hyperedge of the characteristic multi-hypergraph: a subset of source
//! symbols paired with a candidate recovery (one reconstruction per
//! side-information value). The crate provides
//!
//! * [`model`]: problem instances and the JSON problem format,
//! * [`info`]: entropies, conditional mutual information and channels,
//! * [`hypergraph`]: hyperedges, candidate recoveries and the
//!   zero-distortion family,
//! * [`solver`]: alternating minimization of the Lagrangian, distortion
//!   targeting, curve sweeps and the hyperedge mappings,
//! * [`oracle`]: an independent brute-force check for small instances,
//! * [`simulator`]: Monte-Carlo runs of the induced single-letter scheme.
//!
//! All rates are in bits.

pub mod error;
pub mod hypergraph;
pub mod info;
pub mod model;
pub mod oracle;
pub mod simulator;
pub mod solver;

pub use error::{Error, ErrorKind, Result};
pub use hypergraph::{CandidateRecovery, EnumerationCaps, Hyperedge, HyperedgeFamily, MultiHyperedge};
pub use info::{AtomLabel, AuxChannel, DecoderMap};
pub use model::{validate_spec, ProblemSpec, RawSpec};
pub use solver::{AlphabetMode, RDCurve, RDPoint, SolverConfig};
