//! Two-level Gaussian noise on the Hamiltonian weights and reproducible
//! scenario sampling.
//!
//! Each scenario draws a per-Hamiltonian offset `μ_j ~ N(0, σ_j^offset)` and
//! then, for every time step, `ξ_jk ~ N(μ_j, σ_j^time)` independently. Row 0
//! of the noise matrix belongs to the intrinsic Hamiltonian.
//!
//! Randomness comes from ChaCha20 (a counter-based stream cipher generator).
//! Scenario `s` of a set seeded with `seed` reads stream `s` of the generator
//! keyed by `seed`, so scenarios can be generated in any order or in parallel
//! with identical results. Normal variates use the inverse CDF (Wichura's
//! AS241 rational approximation) applied to a 53-bit uniform in `(0, 1)`.

use nalgebra::DMatrix;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const DEFAULT_TIME_OFFSET_RATIO: f64 = 0.1;

/// Standard deviations of the offset and per-step noise, index 0 = intrinsic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_offset: Vec<f64>,
    pub sigma_time: Vec<f64>,
    pub time_offset_ratio: f64,
}

impl NoiseModel {
    /// `sigma_time` defaults to `time_offset_ratio · sigma_offset`.
    pub fn new(sigma_offset: Vec<f64>, sigma_time: Option<Vec<f64>>, time_offset_ratio: f64) -> Result<Self> {
        if sigma_offset.is_empty() {
            return Err(invalid("noise model needs at least the intrinsic entry"));
        }
        if !(time_offset_ratio.is_finite() && time_offset_ratio >= 0.0) {
            return Err(invalid(format!("time/offset ratio must be >= 0, got {time_offset_ratio}")));
        }
        let sigma_time = match sigma_time {
            Some(st) => st,
            None => sigma_offset.iter().map(|s| s * time_offset_ratio).collect(),
        };
        if sigma_time.len() != sigma_offset.len() {
            return Err(invalid("sigma_time and sigma_offset lengths differ"));
        }
        if let Some(bad) = sigma_offset.iter().chain(&sigma_time).find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(invalid(format!("noise standard deviation {bad} must be >= 0")));
        }
        Ok(Self { sigma_offset, sigma_time, time_offset_ratio })
    }

    /// Same offset sd on every control Hamiltonian, `intrinsic` on index 0.
    pub fn uniform(controllers: usize, intrinsic: f64, controls: f64) -> Result<Self> {
        let mut offsets = vec![controls; controllers + 1];
        offsets[0] = intrinsic;
        Self::new(offsets, None, DEFAULT_TIME_OFFSET_RATIO)
    }

    pub fn noiseless(controllers: usize) -> Self {
        Self {
            sigma_offset: vec![0.0; controllers + 1],
            sigma_time: vec![0.0; controllers + 1],
            time_offset_ratio: DEFAULT_TIME_OFFSET_RATIO,
        }
    }

    /// Number of control Hamiltonians (`len - 1`).
    pub fn controllers(&self) -> usize {
        self.sigma_offset.len() - 1
    }
}

/// One noise realization `ξ^s` with its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub xi: DMatrix<f64>,
    pub offsets: Vec<f64>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub seed: u64,
    pub model: NoiseModel,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.probability).collect()
    }

    /// A single all-zero scenario with probability one.
    pub fn deterministic(controllers: usize, steps: usize) -> Self {
        Self {
            scenarios: vec![Scenario {
                xi: DMatrix::zeros(controllers + 1, steps),
                offsets: vec![0.0; controllers + 1],
                probability: 1.0,
            }],
            seed: 0,
            model: NoiseModel::noiseless(controllers),
        }
    }
}

/// Standard normal quantile, Wichura (1988) AS241 `PPND16`; relative accuracy
/// about 1e-16.
pub fn normal_quantile(p: f64) -> f64 {
    const SPLIT1: f64 = 0.425;
    const SPLIT2: f64 = 5.0;
    const CONST1: f64 = 0.180625;
    const CONST2: f64 = 1.6;
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_3e3,
        1.373_169_376_550_946e4,
        4.592_195_393_154_987e4,
        6.726_577_092_700_87e4,
        3.343_057_558_358_813e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_659_7e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_545e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_546,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506e-1,
        2.272_384_498_926_918_4e-2,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_8e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        2.965_605_718_285_048_7e-1,
        2.653_218_952_657_612_4e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_88e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_7e-15,
    ];
    fn poly(coef: &[f64; 8], x: f64) -> f64 {
        coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= SPLIT1 {
        let r = CONST1 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= SPLIT2 {
        r -= CONST2;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= SPLIT2;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

pub(crate) struct NormalStream(ChaCha20Rng);

impl NormalStream {
    pub(crate) fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    /// Uniform on the open interval `(0, 1)` with 53-bit resolution.
    pub(crate) fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub(crate) fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        let z = normal_quantile(self.uniform());
        if sd == 0.0 {
            mean
        } else {
            mean + sd * z
        }
    }
}

fn scenario_from_stream(model: &NoiseModel, offsets: Option<&[f64]>, steps: usize, seed: u64, s: usize, p: f64) -> Scenario {
    let rows = model.sigma_offset.len();
    let mut rng = NormalStream::new(seed, s as u64);
    let offsets: Vec<f64> = match offsets {
        Some(fixed) => fixed.to_vec(),
        None => model.sigma_offset.iter().map(|sd| rng.normal(0.0, *sd)).collect(),
    };
    let mut xi = DMatrix::zeros(rows, steps);
    for j in 0..rows {
        for k in 0..steps {
            xi[(j, k)] = rng.normal(offsets[j], model.sigma_time[j]);
        }
    }
    Scenario { xi, offsets, probability: p }
}

fn build_set(model: &NoiseModel, offsets: Option<&[f64]>, count: usize, steps: usize, seed: u64) -> Result<ScenarioSet> {
    if count == 0 || steps == 0 {
        return Err(invalid("scenario count and time steps must be positive"));
    }
    let p = 1.0 / count as f64;
    let scenarios = (0..count)
        .into_par_iter()
        .map(|s| scenario_from_stream(model, offsets, steps, seed, s, p))
        .collect();
    Ok(ScenarioSet { scenarios, seed, model: model.clone() })
}

/// `count` i.i.d. scenarios on a `steps`-long grid, each with probability `1/count`.
pub fn sample_scenarios(model: &NoiseModel, count: usize, steps: usize, seed: u64) -> Result<ScenarioSet> {
    build_set(model, None, count, steps, seed)
}

/// Like [`sample_scenarios`] but every scenario shares the given offsets `μ_j`.
pub fn fixed_offset_scenarios(
    model: &NoiseModel,
    offsets: &[f64],
    count: usize,
    steps: usize,
    seed: u64,
) -> Result<ScenarioSet> {
    if offsets.len() != model.sigma_offset.len() {
        return Err(invalid(format!(
            "expected {} offsets, got {}",
            model.sigma_offset.len(),
            offsets.len()
        )));
    }
    build_set(model, Some(offsets), count, steps, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn sigma_time_defaults_to_ratio() {
        let m = NoiseModel::new(vec![0.0, 0.05, 0.1], None, 0.1).unwrap();
        assert_eq!(m.sigma_time, vec![0.0, 0.005000000000000001, 0.010000000000000002]);
        assert!(NoiseModel::new(vec![0.0, -0.1], None, 0.1).is_err());
        assert!(NoiseModel::new(vec![0.0, 0.1], Some(vec![0.0]), 0.1).is_err());
    }

    #[test]
    fn quantile_matches_reference() {
        let n = Normal::standard();
        for p in [1e-12, 1e-6, 0.01, 0.2, 0.5, 0.7, 0.975, 1.0 - 1e-9] {
            let want = n.inverse_cdf(p);
            assert!((normal_quantile(p) - want).abs() <= 1e-9 * want.abs().max(1.0), "p={p}");
        }
        assert_eq!(normal_quantile(0.5), 0.0);
    }

    #[test]
    fn zero_sigmas_give_zero_noise() {
        let m = NoiseModel::new(vec![0.0; 3], None, 0.1).unwrap();
        let set = sample_scenarios(&m, 4, 5, 9).unwrap();
        for s in &set.scenarios {
            assert!(s.xi.iter().all(|v| *v == 0.0));
            assert!(s.offsets.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn same_seed_same_set() {
        let m = NoiseModel::uniform(2, 0.01, 0.05).unwrap();
        let a = sample_scenarios(&m, 7, 6, 123).unwrap();
        let b = sample_scenarios(&m, 7, 6, 123).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = sample_scenarios(&m, 7, 6, 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn scenarios_are_prefix_stable() {
        // stream per scenario: a larger set starts with the smaller one
        let m = NoiseModel::uniform(2, 0.0, 0.05).unwrap();
        let small = sample_scenarios(&m, 3, 4, 5).unwrap();
        let large = sample_scenarios(&m, 6, 4, 5).unwrap();
        for s in 0..3 {
            assert_eq!(small.scenarios[s].xi, large.scenarios[s].xi);
        }
    }

    #[test]
    fn probabilities_normalized() {
        let m = NoiseModel::uniform(1, 0.0, 0.05).unwrap();
        let set = sample_scenarios(&m, 7, 2, 1).unwrap();
        let total: f64 = set.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(set.probabilities().iter().all(|p| *p > 0.0));
    }

    #[test]
    fn fixed_offsets_without_time_noise() {
        let m = NoiseModel::new(vec![0.0, 0.05, 0.05], Some(vec![0.0; 3]), 0.1).unwrap();
        let set = fixed_offset_scenarios(&m, &[0.0, 0.5, -0.5], 3, 4, 2).unwrap();
        for s in &set.scenarios {
            assert!(s.xi.row(0).iter().all(|v| *v == 0.0));
            assert!(s.xi.row(1).iter().all(|v| *v == 0.5));
            assert!(s.xi.row(2).iter().all(|v| *v == -0.5));
        }
        assert!(fixed_offset_scenarios(&m, &[0.0, 0.5], 3, 4, 2).is_err());
    }
}
