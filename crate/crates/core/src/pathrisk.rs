//! Path-risk regressor and the support-capital closed forms behind it.
//!
//! With interim P&L `X_t = sigma W_t` per unit notional, the smallest
//! nondecreasing top-up keeping `X + L >= 0` is `L_t = sup_{s<=t} (-X_s)^+`,
//! whose mean is `sigma sqrt(2t/pi)`. Averaging over `[0, T]` gives the
//! `2/3` factor used in the basis-point regressor.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PathRiskError {
    #[error("volatility must be non-negative, got {0}")]
    NegativeVol(f64),
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("need at least one path and one step")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmInputs {
    /// Benchmark rate at the chosen tenor, percent.
    pub rate_pct: f64,
    /// Volatility index level, percent.
    pub vol_pct: f64,
    pub tau: f64,
}

/// `1e4 * (rate/100) * (2/3) * (vol/100) * sqrt(2 tau / pi)`, in bp.
pub fn gbm_term(inputs: GbmInputs) -> Result<f64, PathRiskError> {
    if !(inputs.vol_pct >= 0.0) {
        return Err(PathRiskError::NegativeVol(inputs.vol_pct));
    }
    if !(inputs.tau > 0.0) {
        return Err(PathRiskError::NonPositiveHorizon(inputs.tau));
    }
    Ok(1e4 * (inputs.rate_pct / 100.0) * (2.0 / 3.0) * (inputs.vol_pct / 100.0)
        * (2.0 * inputs.tau / PI).sqrt())
}

/// Expected minimal support capital per unit notional at time `t`.
pub fn expected_support(sigma: f64, t: f64) -> Result<f64, PathRiskError> {
    if !(sigma >= 0.0) {
        return Err(PathRiskError::NegativeVol(sigma));
    }
    if !(t >= 0.0) {
        return Err(PathRiskError::NegativeTime(t));
    }
    Ok(sigma * (2.0 * t / PI).sqrt())
}

/// Time average of [`expected_support`] over `[0, horizon]`.
pub fn avg_commitment(sigma: f64, horizon: f64) -> Result<f64, PathRiskError> {
    if !(horizon > 0.0) {
        return Err(PathRiskError::NonPositiveHorizon(horizon));
    }
    Ok(2.0 / 3.0 * expected_support(sigma, horizon)?)
}

/// Running minimal support for a discretely monitored path starting at 0.
/// `path[i]` is `X` at grid point `i + 1`.
pub fn running_support(path: &[f64]) -> Vec<f64> {
    let mut level = 0.0f64;
    path.iter()
        .map(|x| {
            level = level.max(-x);
            level
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportSimConfig {
    pub sigma: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl SupportSimConfig {
    fn validate(&self) -> Result<(), PathRiskError> {
        if !(self.sigma >= 0.0) {
            return Err(PathRiskError::NegativeVol(self.sigma));
        }
        if !(self.horizon > 0.0) {
            return Err(PathRiskError::NonPositiveHorizon(self.horizon));
        }
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(PathRiskError::EmptyGrid);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportEstimate {
    pub mean_l_at_t: f64,
    pub se_l_at_t: f64,
    pub mean_time_avg_l: f64,
    pub se_time_avg_l: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub rng: &'static str,
}

/// Paths per RNG substream. Fixed so that results never depend on how many
/// threads the blocks are spread over.
pub const PATHS_PER_BLOCK: usize = 2048;
const RNG_NAME: &str = "ChaCha8 (seed_from_u64, stream = block index)";

#[derive(Default, Clone, Copy)]
struct Moments {
    sum_l: f64,
    sum_l2: f64,
    sum_avg: f64,
    sum_avg2: f64,
}

fn simulate_block(cfg: &SupportSimConfig, block: usize) -> Moments {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(block as u64);
    let start = block * PATHS_PER_BLOCK;
    let paths = PATHS_PER_BLOCK.min(cfg.n_paths - start);
    let dt = cfg.horizon / cfg.n_steps as f64;
    let step_sd = cfg.sigma * dt.sqrt();
    let mut m = Moments::default();
    for _ in 0..paths {
        let mut x = 0.0f64;
        let mut l = 0.0f64;
        // Trapezoid over the grid with L_0 = 0.
        let mut area = 0.0f64;
        for step in 0..cfg.n_steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            x += step_sd * z;
            l = l.max(-x);
            area += if step + 1 == cfg.n_steps { 0.5 * l } else { l };
        }
        let avg = area / cfg.n_steps as f64;
        m.sum_l += l;
        m.sum_l2 += l * l;
        m.sum_avg += avg;
        m.sum_avg2 += avg * avg;
    }
    m
}

/// Monte Carlo estimate of the support capital at the horizon and of its
/// time average. Deterministic for a given seed and independent of the
/// rayon pool size.
pub fn mc_support(cfg: &SupportSimConfig) -> Result<SupportEstimate, PathRiskError> {
    cfg.validate()?;
    let blocks = cfg.n_paths.div_ceil(PATHS_PER_BLOCK);
    let per_block: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| simulate_block(cfg, b))
        .collect();
    // Sequential reduction in block order keeps the sum bit-identical.
    let total = per_block.iter().fold(Moments::default(), |acc, m| Moments {
        sum_l: acc.sum_l + m.sum_l,
        sum_l2: acc.sum_l2 + m.sum_l2,
        sum_avg: acc.sum_avg + m.sum_avg,
        sum_avg2: acc.sum_avg2 + m.sum_avg2,
    });
    let n = cfg.n_paths as f64;
    let se = |sum: f64, sum2: f64| {
        if cfg.n_paths < 2 {
            return 0.0;
        }
        let mean = sum / n;
        let var = ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    };
    Ok(SupportEstimate {
        mean_l_at_t: total.sum_l / n,
        se_l_at_t: se(total.sum_l, total.sum_l2),
        mean_time_avg_l: total.sum_avg / n,
        se_time_avg_l: se(total.sum_avg, total.sum_avg2),
        n_paths: cfg.n_paths,
        n_steps: cfg.n_steps,
        seed: cfg.seed,
        rng: RNG_NAME,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub closed_form: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub rel_error: f64,
    pub pass: bool,
}

/// Contents of `pathrisk_check.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCheckReport {
    pub config: SupportSimConfig,
    pub rng: &'static str,
    pub tolerance: f64,
    pub support_at_horizon: CheckLine,
    pub time_avg_support: CheckLine,
    pub pass: bool,
}

/// Compares the simulation with both closed forms at a relative tolerance.
pub fn mc_check(cfg: &SupportSimConfig, tolerance: f64) -> Result<McCheckReport, PathRiskError> {
    let est = mc_support(cfg)?;
    let line = |closed: f64, estimate: f64, se: f64| {
        let rel = if closed == 0.0 {
            estimate.abs()
        } else {
            (estimate - closed).abs() / closed
        };
        CheckLine {
            closed_form: closed,
            estimate,
            std_error: se,
            rel_error: rel,
            pass: rel <= tolerance,
        }
    };
    let at_t = line(
        expected_support(cfg.sigma, cfg.horizon)?,
        est.mean_l_at_t,
        est.se_l_at_t,
    );
    let avg = line(
        avg_commitment(cfg.sigma, cfg.horizon)?,
        est.mean_time_avg_l,
        est.se_time_avg_l,
    );
    Ok(McCheckReport {
        config: *cfg,
        rng: RNG_NAME,
        tolerance,
        pass: at_t.pass && avg.pass,
        support_at_horizon: at_t,
        time_avg_support: avg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gbm_reference_value() {
        let v = gbm_term(GbmInputs {
            rate_pct: 4.0,
            vol_pct: 20.0,
            tau: 1.0,
        })
        .unwrap();
        assert!((v - 42.554).abs() < 5e-4, "{v}");
    }

    #[test]
    fn gbm_zero_vol() {
        for (r, t) in [(4.0, 1.0), (-0.5, 0.1), (10.0, 3.0)] {
            let v = gbm_term(GbmInputs { rate_pct: r, vol_pct: 0.0, tau: t }).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn gbm_rejects_bad_inputs() {
        assert!(gbm_term(GbmInputs { rate_pct: 1.0, vol_pct: -1.0, tau: 1.0 }).is_err());
        assert!(gbm_term(GbmInputs { rate_pct: 1.0, vol_pct: 1.0, tau: 0.0 }).is_err());
    }

    #[test]
    fn closed_forms() {
        assert!((expected_support(0.2, 1.0).unwrap() - 0.159577).abs() < 5e-7);
        assert_eq!(expected_support(0.2, 0.0).unwrap(), 0.0);
        assert_eq!(expected_support(0.0, 3.0).unwrap(), 0.0);
        assert!((avg_commitment(0.2, 1.0).unwrap() - 0.106385).abs() < 5e-7);
        assert!(avg_commitment(0.2, 0.0).is_err());
    }

    #[test]
    fn commitment_is_time_average() {
        // Trapezoid oracle over [0, T] with 10^4 nodes.
        let (sigma, horizon, n) = (0.2, 1.0, 10_000);
        let h = horizon / (n - 1) as f64;
        let f = |t: f64| sigma * (2.0 * t / PI).sqrt();
        let mut integral = 0.5 * (f(0.0) + f(horizon));
        for i in 1..n - 1 {
            integral += f(i as f64 * h);
        }
        integral *= h;
        let avg = avg_commitment(sigma, horizon).unwrap();
        assert!((integral / horizon - avg).abs() < 1e-6);
        assert_eq!(avg, 2.0 / 3.0 * expected_support(sigma, horizon).unwrap());
    }

    #[test]
    fn zero_sigma_simulation() {
        let est = mc_support(&SupportSimConfig {
            sigma: 0.0,
            horizon: 1.0,
            n_paths: 100,
            n_steps: 50,
            seed: 3,
        })
        .unwrap();
        assert_eq!(est.mean_l_at_t, 0.0);
        assert_eq!(est.mean_time_avg_l, 0.0);
        assert_eq!(est.se_l_at_t, 0.0);
    }

    #[test]
    fn running_support_properties() {
        let path = [0.1, -0.2, -0.1, -0.5, 0.3];
        let l = running_support(&path);
        assert_eq!(l, vec![0.0, 0.2, 0.2, 0.5, 0.5]);
        assert!(l.windows(2).all(|w| w[1] >= w[0]));
        assert!(path.iter().zip(&l).all(|(x, l)| x + l >= 0.0));
    }

    #[test]
    fn simulation_is_seeded() {
        let cfg = SupportSimConfig {
            sigma: 0.3,
            horizon: 0.5,
            n_paths: 5000,
            n_steps: 20,
            seed: 11,
        };
        let a = mc_support(&cfg).unwrap();
        let b = mc_support(&cfg).unwrap();
        assert_eq!(a, b);
        let c = mc_support(&SupportSimConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.mean_l_at_t, c.mean_l_at_t);
    }
}
