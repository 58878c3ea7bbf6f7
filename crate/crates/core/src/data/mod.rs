//! Gridded-cube transforms: imputation, normalization, resampling,
//! windowing, date splitting and the synthetic advection generator.

pub mod cube;
pub mod impute;
pub mod normalize;
pub mod resample;
pub mod split;
pub mod synth;
pub mod window;

pub use cube::{date_from_days, days_from_date, days_from_ymd, DatasetCube, STUDY_BBOX};
pub use impute::impute;
pub use normalize::{normalize, NormStats};
pub use resample::downsample_bilinear;
pub use split::{partition, split, SplitSpec};
pub use synth::{synth_advection, SynthConfig};
pub use window::{last_step, make_windows, predictor_windows, WindowedDataset};
