//! Synthetic option cells, regression panels and raw input datasets with
//! planted ground truth.

mod cells;
mod dataset;
mod panel;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use cells::{gen_quote_cell, GeneratedCell, PlantedCell};
pub use dataset::{
    gen_dataset, DatasetFiles, DatasetSpec, PlantedCellRecord, SyntheticDataset, DGS_TENORS,
    OIS_TENORS,
};
pub use panel::{
    business_days, gen_regression_panel, planted_for_spec, MacroDay, PanelTruth,
    PlantedPanelSpec, Range, RegressorRanges, SyntheticPanel, TABLE2_POOLED, TABLE2_RMSE_BP,
};

use crate::curves::CurveError;
use crate::ingest::IngestError;
use crate::pathrisk::PathRiskError;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid generator settings: {0}")]
    Invalid(String),
    #[error(transparent)]
    PathRisk(#[from] PathRiskError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Stationary AR(1) series with the given mean, marginal standard deviation
/// and persistence.
pub fn gen_ar1_series(
    mean: f64,
    sd: f64,
    persistence: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, SynthError> {
    if !(sd >= 0.0) || !(0.0..1.0).contains(&persistence) {
        return Err(SynthError::Invalid("need sd >= 0 and persistence in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innov = (1.0 - persistence * persistence).sqrt();
    let mut z: f64 = StandardNormal.sample(&mut rng);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(mean + sd * z);
        let e: f64 = StandardNormal.sample(&mut rng);
        z = persistence * z + innov * e;
    }
    Ok(out)
}
