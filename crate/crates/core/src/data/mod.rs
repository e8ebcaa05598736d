//! Synthetic trajectories, windowing, normalization and the on-disk format.

mod dataset;
mod field;
mod generators;
mod window;

pub use dataset::{split_of, Dataset, DatasetManifest, Split, DATASET_FORMAT};
pub use field::{FieldSequence, Trajectory};
pub use generators::{
    advection2d_from, generate_advection2d, generate_heat2d, heat2d_from, heat2d_regimes, AdvectionParams, HeatParams, Mode,
    SpectralField,
};
pub use window::{make_windows, ChannelStats, Window};
