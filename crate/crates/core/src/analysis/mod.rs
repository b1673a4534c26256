//! Verification layer: the auxiliary refined space with its transfer
//! operators, sampled norm equivalences, and dense reference oracles.

pub mod interp;
pub mod lemmas;
pub mod oracle;
pub mod refine;

pub use interp::{interp_backward, interp_forward, InterpolatorSet, RefinedForms, Variant};
pub use lemmas::{check_lemma_equivalences, LemmaConfig, LemmaReport, RatioSuite};
pub use oracle::{dense_spectrum, direct_solve, mms_errors, OracleReport, Spectrum};
pub use refine::{refine_subdomain, NodeKind, RefinedMesh, RefinementCase};
