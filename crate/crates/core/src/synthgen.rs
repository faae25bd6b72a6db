//! Synthetic binary classification data built from two-component normal
//! mixtures whose component membership drives the label.
//!
//! `Z(l, k)` draws from `W1 ~ N(1, 1)` with probability `l` and from
//! `N(delta_mu + k, 1)` otherwise, remembering which component was used (the
//! "origin" flag). The five informative features are:
//!
//! | feature | independent | weakly dependent | strongly dependent |
//! |---------|-------------|------------------|--------------------|
//! | X1      | Z(b, 1)     | Z(b, 1)          | Z(b, 1)            |
//! | X2      | Z(0.1, -5)  | Z(0.1, -5)       | Z(0.1, -5)         |
//! | X3      | Z(0.5, 2)   | Z(0.5, 2)        | Z(0.5, 2)          |
//! | X4      | Z(0.3, 3)   | X2 + X3          | X2 + X3            |
//! | X5      | Z(0.8, -2)  | Z(0.8, -2)       | X3 + 0.5 X1        |
//!
//! Summed features reuse the realizations of their summands. For a summed
//! X4 the origin flag O4 is that of the `Z(0.1, -5)` summand (X2's draw);
//! for a summed X5, O5 is that of the `Z(0.5, 2)` summand (X3's draw).
//! X6..X10 are uniform on `[0, 10]` and carry no signal.
//!
//! The weighted-sum reading of `Z(l, k)` would have no origin event, which
//! the outcome rules need, so the mixture reading is used throughout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, N_ORIGINS};
use crate::error::{Error, Result};

pub const N_FEATURES: usize = 10;
pub const BALANCE_GRID: [f64; 4] = [0.2, 0.5, 0.7, 0.9];
pub const DELTA_MU_GRID: [f64; 4] = [1.0, 3.0, 5.0, 8.0];
pub const NUM_GRID: [usize; 3] = [100, 200, 500];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSpec {
    pub weight: f64,
    pub shift: f64,
    pub delta_mu: f64,
}

impl MixtureSpec {
    pub fn new(weight: f64, shift: f64, delta_mu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Invalid(format!(
                "mixture weight {weight} outside [0, 1]"
            )));
        }
        Ok(MixtureSpec {
            weight,
            shift,
            delta_mu,
        })
    }
}

/// One draw and whether it came from the `W1 ~ N(1, 1)` component.
pub fn sample_mixture<R: Rng + ?Sized>(spec: MixtureSpec, rng: &mut R) -> (f64, bool) {
    let origin = rng.random::<f64>() < spec.weight;
    let mean = if origin {
        1.0
    } else {
        spec.delta_mu + spec.shift
    };
    let value = Normal::new(mean, 1.0).expect("unit variance").sample(rng);
    (value, origin)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    Independent,
    WeaklyDependent,
    StronglyDependent,
}

impl std::str::FromStr for Dependence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Dependence::Independent),
            "weakly_dependent" | "weak" => Ok(Dependence::WeaklyDependent),
            "strongly_dependent" | "strong" => Ok(Dependence::StronglyDependent),
            _ => Err(Error::Invalid(format!(
                "unknown dependence `{s}`; expected one of independent, weakly_dependent, strongly_dependent"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeModel {
    S1,
    S3,
    S5,
}

impl std::str::FromStr for OutcomeModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(OutcomeModel::S1),
            "S3" => Ok(OutcomeModel::S3),
            "S5" => Ok(OutcomeModel::S5),
            _ => Err(Error::Invalid(format!(
                "unknown outcome model `{s}`; expected one of S1, S3, S5"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dependence: Dependence,
    pub model: OutcomeModel,
    pub balance: f64,
    pub delta_mu: f64,
    pub num: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Most imbalanced setting: `b = 0.9`, `delta_mu = 8`.
    pub fn red(model: OutcomeModel, num: usize, seed: u64) -> Self {
        SynthConfig {
            dependence: Dependence::Independent,
            model,
            balance: 0.9,
            delta_mu: 8.0,
            num,
            seed,
        }
    }
}

/// Class 1 iff the origin flags satisfy the model's rule.
pub fn label_outcome(origins: &[bool; N_ORIGINS], model: OutcomeModel) -> usize {
    let [o1, o2, o3, o4, o5] = *origins;
    let positive = match model {
        OutcomeModel::S1 => o1,
        OutcomeModel::S3 => (o1 && o4) || !o2,
        OutcomeModel::S5 => (o1 && !o3) || (!o5 && !o4) || o2,
    };
    usize::from(positive)
}

pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.num < 1 {
        return Err(Error::Invalid("num must be positive".into()));
    }
    let mix = |weight, shift| MixtureSpec::new(weight, shift, cfg.delta_mu);
    let x1_spec = mix(cfg.balance, 1.0)?;
    let x2_spec = mix(0.1, -5.0)?;
    let x3_spec = mix(0.5, 2.0)?;
    let x4_spec = mix(0.3, 3.0)?;
    let x5_spec = mix(0.8, -2.0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Uniform::new_inclusive(0.0, 10.0).expect("valid range");
    let mut features = Vec::with_capacity(cfg.num * N_FEATURES);
    let mut labels = Vec::with_capacity(cfg.num);
    let mut origins = Vec::with_capacity(cfg.num);

    for _ in 0..cfg.num {
        let (x1, o1) = sample_mixture(x1_spec, &mut rng);
        let (x2, o2) = sample_mixture(x2_spec, &mut rng);
        let (x3, o3) = sample_mixture(x3_spec, &mut rng);
        let (x4, o4) = match cfg.dependence {
            Dependence::Independent => sample_mixture(x4_spec, &mut rng),
            _ => (x2 + x3, o2),
        };
        let (x5, o5) = match cfg.dependence {
            Dependence::StronglyDependent => (x3 + 0.5 * x1, o3),
            _ => sample_mixture(x5_spec, &mut rng),
        };
        features.extend_from_slice(&[x1, x2, x3, x4, x5]);
        for _ in 0..5 {
            features.push(noise.sample(&mut rng));
        }
        let flags = [o1, o2, o3, o4, o5];
        labels.push(label_outcome(&flags, cfg.model));
        origins.push(flags);
    }
    Dataset::new(N_FEATURES, features, labels, vec!["0".into(), "1".into()])?.with_origins(origins)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dependence: Dependence, model: OutcomeModel, balance: f64, num: usize) -> SynthConfig {
        SynthConfig {
            dependence,
            model,
            balance,
            delta_mu: 3.0,
            num,
            seed: 11,
        }
    }

    fn positive_rate(ds: &Dataset) -> f64 {
        ds.labels().iter().sum::<usize>() as f64 / ds.n_rows() as f64
    }

    #[test]
    fn degenerate_mixtures() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let spec = MixtureSpec::new(1.0, 7.0, 3.0).unwrap();
        let mut sum = 0.0;
        for _ in 0..n {
            let (v, o) = sample_mixture(spec, &mut rng);
            assert!(o);
            sum += v;
        }
        assert!((sum / n as f64 - 1.0).abs() < 0.02);

        let spec = MixtureSpec::new(0.0, 2.0, 3.0).unwrap();
        let mut sum = 0.0;
        for _ in 0..n {
            let (v, o) = sample_mixture(spec, &mut rng);
            assert!(!o);
            sum += v;
        }
        assert!((sum / n as f64 - 5.0).abs() < 0.02);
    }

    #[test]
    fn origin_rate_matches_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = MixtureSpec::new(0.5, 0.0, 1.0).unwrap();
        let hits = (0..100_000)
            .filter(|_| sample_mixture(spec, &mut rng).1)
            .count();
        assert!((hits as f64 / 1e5 - 0.5).abs() < 0.01);
        assert!(MixtureSpec::new(1.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn outcome_rules() {
        use OutcomeModel::*;
        assert_eq!(label_outcome(&[true, false, false, false, false], S1), 1);
        assert_eq!(label_outcome(&[false, true, true, true, true], S1), 0);
        assert_eq!(label_outcome(&[false, true, false, false, false], S3), 0);
        assert_eq!(label_outcome(&[true, true, false, true, false], S3), 1);
        assert_eq!(label_outcome(&[false, false, true, true, true], S3), 1);
        assert_eq!(label_outcome(&[false, true, true, true, true], S5), 1);
        assert_eq!(label_outcome(&[false, false, true, true, true], S5), 0);
        assert_eq!(label_outcome(&[false, false, true, false, false], S5), 1);
        assert_eq!(label_outcome(&[true, false, false, true, true], S5), 1);
    }

    #[test]
    fn seeded_determinism() {
        let c = cfg(Dependence::StronglyDependent, OutcomeModel::S5, 0.7, 300);
        assert_eq!(generate(&c).unwrap(), generate(&c).unwrap());
        let other = SynthConfig {
            seed: 12,
            ..c.clone()
        };
        assert_ne!(generate(&c).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn dependent_identities_hold_exactly() {
        let ds = generate(&cfg(
            Dependence::WeaklyDependent,
            OutcomeModel::S3,
            0.5,
            500,
        ))
        .unwrap();
        for (row, o) in ds.rows().zip(ds.origins().unwrap()) {
            assert_eq!(row[3] - (row[1] + row[2]), 0.0);
            assert_eq!(o[3], o[1]);
        }
        let ds = generate(&cfg(
            Dependence::StronglyDependent,
            OutcomeModel::S3,
            0.5,
            500,
        ))
        .unwrap();
        for (row, o) in ds.rows().zip(ds.origins().unwrap()) {
            assert_eq!(row[3], row[1] + row[2]);
            assert_eq!(row[4], row[2] + 0.5 * row[0]);
            assert_eq!(o[4], o[2]);
        }
    }

    #[test]
    fn noise_columns_in_range() {
        let ds = generate(&cfg(Dependence::Independent, OutcomeModel::S1, 0.5, 2000)).unwrap();
        for row in ds.rows() {
            assert!(row[5..].iter().all(|v| (0.0..=10.0).contains(v)));
        }
        assert_eq!(ds.n_features(), N_FEATURES);
    }

    #[test]
    fn s1_prior_follows_balance() {
        let ds = generate(&cfg(Dependence::Independent, OutcomeModel::S1, 0.9, 10_000)).unwrap();
        assert!((positive_rate(&ds) - 0.9).abs() < 0.02);
    }

    #[test]
    fn s3_prior_closed_form() {
        let ds = generate(&cfg(
            Dependence::Independent,
            OutcomeModel::S3,
            0.9,
            100_000,
        ))
        .unwrap();
        // P(not O2) + P(O2) P(O1) P(O4)
        assert!((positive_rate(&ds) - (0.9 + 0.1 * 0.9 * 0.3)).abs() < 0.01);
    }

    #[test]
    fn bad_tags_rejected() {
        assert!("S2"
            .parse::<OutcomeModel>()
            .unwrap_err()
            .to_string()
            .contains("S1, S3, S5"));
        assert!("medium".parse::<Dependence>().is_err());
        assert_eq!("s3".parse::<OutcomeModel>().unwrap(), OutcomeModel::S3);
    }
}
