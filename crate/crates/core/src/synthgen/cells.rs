use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::SynthError;
use crate::implied_discount::CellKey;
use crate::ingest::{year_fraction, QuotePair};

/// Ground truth for one synthetic expiry cross-section.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCell {
    pub b_true: f64,
    pub f_true: f64,
    pub strikes: Vec<f64>,
    /// Symmetric around each mid, index points.
    pub half_spread: f64,
    /// Standard deviation of the Gaussian noise on `C - P`, index points.
    pub noise_sd: f64,
    /// Added to the intrinsic value of both legs.
    pub cushion: f64,
    pub seed: u64,
}

impl PlantedCell {
    /// `n` strikes centred on the forward with constant spacing.
    pub fn around_forward(
        b_true: f64,
        f_true: f64,
        n: usize,
        spacing: f64,
        half_spread: f64,
        noise_sd: f64,
        seed: u64,
    ) -> Self {
        let centre = (n as f64 - 1.0) / 2.0;
        Self {
            b_true,
            f_true,
            strikes: (0..n).map(|i| f_true + (i as f64 - centre) * spacing).collect(),
            half_spread,
            noise_sd,
            cushion: 1.0,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(self.b_true > 0.0 && self.b_true <= 1.1) {
            return Err(SynthError::Invalid(format!("b_true {} outside (0, 1.1]", self.b_true)));
        }
        if !(self.f_true > 0.0) {
            return Err(SynthError::Invalid("forward must be positive".into()));
        }
        if self.strikes.iter().any(|k| !(*k > 0.0)) {
            return Err(SynthError::Invalid("strikes must be positive".into()));
        }
        let mut s = self.strikes.clone();
        s.sort_by(f64::total_cmp);
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err(SynthError::Invalid("strikes must be distinct".into()));
        }
        if !(self.half_spread >= 0.0 && self.noise_sd >= 0.0) {
            return Err(SynthError::Invalid("spread and noise must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCell {
    pub pairs: Vec<QuotePair>,
    /// Cushion actually used; larger than requested when needed to keep
    /// every bid non-negative.
    pub cushion: f64,
    pub cushion_raised: bool,
}

const CUSHION_MARGIN: f64 = 0.01;

/// Quote pairs whose synthetic forward is `b (f - K)` plus noise. The put
/// carries intrinsic value plus the cushion; the call is the put plus the
/// synthetic forward.
pub fn gen_quote_cell(p: &PlantedCell, key: CellKey) -> Result<GeneratedCell, SynthError> {
    p.validate()?;
    if key.expiry <= key.date {
        return Err(SynthError::Invalid("expiry must follow the quote date".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let noise = Normal::new(0.0, p.noise_sd).map_err(|e| SynthError::Invalid(e.to_string()))?;
    let g: Vec<f64> = p
        .strikes
        .iter()
        .map(|k| p.b_true * (p.f_true - k) + noise.sample(&mut rng))
        .collect();

    let put_intrinsic = |k: f64| p.b_true * (k - p.f_true).max(0.0);
    // Each leg's mid is intrinsic-like value plus cushion; both must clear the half spread.
    let required = p
        .strikes
        .iter()
        .zip(&g)
        .map(|(&k, &gi)| {
            let put = put_intrinsic(k);
            let call = gi + put;
            p.half_spread - put.min(call)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let (cushion, raised) = if p.cushion >= required {
        (p.cushion, false)
    } else {
        (required + CUSHION_MARGIN, true)
    };

    let tau = year_fraction(key.date, key.expiry);
    let pairs = p
        .strikes
        .iter()
        .zip(&g)
        .map(|(&k, &gi)| {
            let put_mid = put_intrinsic(k) + cushion;
            QuotePair {
                market: key.market,
                date: key.date,
                expiry: key.expiry,
                strike: k,
                call_mid: gi + put_mid,
                put_mid,
                call_spread: 2.0 * p.half_spread,
                put_spread: 2.0 * p.half_spread,
                tau,
            }
        })
        .collect();
    Ok(GeneratedCell {
        pairs,
        cushion,
        cushion_raised: raised,
    })
}
