//! Per-region, multi-horizon outage-count forecasting.
//!
//! Daily outage counts and weather observations are joined per region,
//! filtered, smoothed, scaled and compressed with PCA, then fed to a
//! two-block encoder/decoder LSTM whose head emits Poisson rates. Moran's I
//! screens the counts for spatial clustering, and a synthetic generator with
//! known rates backs the recovery tests.

pub mod error;
pub mod frame;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod preprocess;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
pub use frame::{EventFrame, FrameKey, TARGET};
