//! Trial data: adoption times, the observed dataset, covariate terms and
//! the normalized weight system.

mod covariate;
mod dataset;
mod io;
mod weights;

pub use covariate::Covariate;
pub use dataset::{AdoptionTime, CellInput, ClusterInput, Dataset, Frame, FrameCell, FrameCluster};
pub use io::{load_dataset, read_dataset, write_dataset, ColumnSchema};
pub use weights::{DerivedWeights, WeightScheme, WeightSystem};
