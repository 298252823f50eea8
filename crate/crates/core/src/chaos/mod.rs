//! Non-intrusive polynomial chaos: Hermite bases, lognormal inputs, regression
//! fits and moment extraction.

pub mod expansion;
pub mod hermite;
pub mod lognormal;
pub mod multi_index;

pub use expansion::{
    default_sample_count, draw_germs, ks_distance, mc_moments, pc_moments, pc_regression, propagate_prior,
    sample_responses, PCExpansion, SampleSet,
};
pub use hermite::{hermite_all, hermite_eval, HermiteBasis};
pub use lognormal::{lognormal_pc, lognormal_transform, LognormalInput};
pub use multi_index::{multi_index_set, term_count, MultiIndexSet};
