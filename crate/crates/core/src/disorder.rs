//! Coupling ensembles, the interaction catalog, and reproducible disorder samples.
//!
//! The order of `InteractionCatalog::terms` is the numbering `J_1, ..., J_M` used
//! everywhere else (variance budget, sample vectors, Hamiltonian assembly).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::PhiSpec;
use crate::spin_algebra::Axis;

/// Law of a single coupling constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingDistribution {
    Gaussian {
        mean: f64,
        std: f64,
    },
    /// `+value` with probability `prob_plus`, `-value` otherwise.
    TwoPoint {
        value: f64,
        prob_plus: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Constant {
        value: f64,
    },
}

impl CouplingDistribution {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::InvalidDistribution(msg));
        match *self {
            CouplingDistribution::Gaussian { mean, std } => {
                if !mean.is_finite() || !std.is_finite() || std < 0.0 {
                    return bad(format!("gaussian(mean={mean}, std={std})"));
                }
            }
            CouplingDistribution::TwoPoint { value, prob_plus } => {
                if !value.is_finite() || !(0.0..=1.0).contains(&prob_plus) {
                    return bad(format!("two_point(value={value}, prob_plus={prob_plus})"));
                }
            }
            CouplingDistribution::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || lo > hi {
                    return bad(format!("uniform(lo={lo}, hi={hi})"));
                }
            }
            CouplingDistribution::Constant { value } => {
                if !value.is_finite() {
                    return bad(format!("constant(value={value})"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            CouplingDistribution::Gaussian { mean, .. } => mean,
            CouplingDistribution::TwoPoint { value, prob_plus } => value * (2.0 * prob_plus - 1.0),
            CouplingDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            CouplingDistribution::Constant { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            CouplingDistribution::Gaussian { std, .. } => std * std,
            CouplingDistribution::TwoPoint { value, prob_plus } => 4.0 * value * value * prob_plus * (1.0 - prob_plus),
            CouplingDistribution::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            CouplingDistribution::Constant { .. } => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CouplingDistribution::Gaussian { mean, std } => {
                if std == 0.0 {
                    mean
                } else {
                    Normal::new(mean, std).expect("validated").sample(rng)
                }
            }
            CouplingDistribution::TwoPoint { value, prob_plus } => {
                if rng.random::<f64>() < prob_plus {
                    value
                } else {
                    -value
                }
            }
            CouplingDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            CouplingDistribution::Constant { value } => value,
        }
    }
}

/// One `(J_X^p, phi_X^p)` pair. `axis` is absent for composite terms that mix axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerm {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
    pub sites: Vec<usize>,
    pub distribution: CouplingDistribution,
    pub phi: PhiSpec,
}

/// Supports are capped at this many sites.
pub const MAX_SUPPORT: usize = 4;

impl InteractionTerm {
    pub fn validate(&self, n_sites: Option<usize>) -> Result<()> {
        if self.sites.is_empty() {
            return Err(LabError::InvalidSupport("empty support".into()));
        }
        if self.sites.len() > MAX_SUPPORT {
            return Err(LabError::InvalidSupport(format!(
                "support {:?} has more than {MAX_SUPPORT} sites",
                self.sites
            )));
        }
        let mut sorted = self.sites.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(LabError::DuplicateSite(w[0]));
        }
        if let Some(n) = n_sites {
            if let Some(&bad) = self.sites.iter().find(|&&s| s >= n) {
                return Err(LabError::SiteOutOfRange { site: bad, n_sites: n });
            }
        }
        self.distribution.validate()?;
        self.phi.validate_for(self)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionCatalog {
    #[serde(default)]
    pub terms: Vec<InteractionTerm>,
}

impl InteractionCatalog {
    pub fn new(terms: Vec<InteractionTerm>) -> Result<Self> {
        let cat = Self { terms };
        cat.validate(None)?;
        Ok(cat)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn validate(&self, n_sites: Option<usize>) -> Result<()> {
        self.terms.iter().try_for_each(|t| t.validate(n_sites))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("catalog serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cat: Self = toml::from_str(text).map_err(|e| LabError::Config {
            path: "<catalog>".into(),
            message: e.to_string(),
        })?;
        cat.validate(None)?;
        Ok(cat)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            LabError::Config { message, .. } => LabError::Config {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }
}

/// One realization of the coupling vector, aligned with catalog order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSample {
    pub master_seed: u64,
    pub sample_index: u64,
    pub values: Vec<f64>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Counter-based seed for one `(master, sample, term)` triple.
pub fn derive_seed(master_seed: u64, sample_index: u64, term_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ sample_index) ^ term_index)
}

/// Mixes an extra stream label (e.g. the system size) into a master seed.
pub fn sub_seed(master_seed: u64, label: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(label.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn draw_sample(catalog: &InteractionCatalog, master_seed: u64, sample_index: u64) -> DisorderSample {
    let values = catalog
        .terms
        .iter()
        .enumerate()
        .map(|(term_index, term)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, sample_index, term_index as u64));
            term.distribution.sample(&mut rng)
        })
        .collect();
    DisorderSample {
        master_seed,
        sample_index,
        values,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceBudget {
    /// Sum of the per-term variances.
    pub total_variance: f64,
    /// Smallest admissible `sigma^2`, i.e. `total_variance / N`.
    pub sigma_squared: f64,
}

pub fn variance_budget(catalog: &InteractionCatalog, n_sites: usize) -> VarianceBudget {
    let total_variance: f64 = catalog.terms.iter().map(|t| t.distribution.variance()).sum();
    VarianceBudget {
        total_variance,
        sigma_squared: total_variance / n_sites as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PhiSpec;

    fn z_bond(i: usize, j: usize, distribution: CouplingDistribution) -> InteractionTerm {
        InteractionTerm {
            axis: Some(Axis::Z),
            sites: vec![i, j],
            distribution,
            phi: PhiSpec::axis_product(),
        }
    }

    #[test]
    fn constant_distribution_ignores_seed() {
        let cat = InteractionCatalog::new(vec![z_bond(0, 1, CouplingDistribution::Constant { value: 0.7 })]).unwrap();
        for seed in [0, 1, 99, u64::MAX] {
            assert_eq!(draw_sample(&cat, seed, 3).values, vec![0.7]);
        }
    }

    #[test]
    fn two_point_empirical_mean() {
        let d = CouplingDistribution::TwoPoint {
            value: 1.0,
            prob_plus: 0.5,
        };
        let cat = InteractionCatalog::new(vec![z_bond(0, 1, d)]).unwrap();
        let n = 100_000;
        let mean: f64 = (0..n).map(|i| draw_sample(&cat, 7, i).values[0]).sum::<f64>() / n as f64;
        // 3 sigma / sqrt(n) with sigma = 1
        assert!(mean.abs() < 0.02, "mean = {mean}");
    }

    #[test]
    fn draws_are_replayable() {
        let d = CouplingDistribution::Gaussian { mean: 0.0, std: 1.0 };
        let cat = InteractionCatalog::new((0..5).map(|i| z_bond(i, i + 1, d.clone())).collect()).unwrap();
        let a = draw_sample(&cat, 42, 17);
        let b = draw_sample(&cat, 42, 17);
        assert_eq!(a, b);
        assert_ne!(a.values, draw_sample(&cat, 42, 18).values);
        assert_eq!(a.values.len(), 5);
    }

    #[test]
    fn empirical_moments_match_analytic() {
        let dists = [
            CouplingDistribution::Gaussian { mean: 0.3, std: 2.0 },
            CouplingDistribution::TwoPoint {
                value: 1.5,
                prob_plus: 0.3,
            },
            CouplingDistribution::Uniform { lo: -1.0, hi: 3.0 },
        ];
        let n = 20_000u64;
        for d in dists {
            let cat = InteractionCatalog::new(vec![z_bond(0, 1, d.clone())]).unwrap();
            let xs: Vec<f64> = (0..n).map(|i| draw_sample(&cat, 5, i).values[0]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let fourth = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
            let se_mean = (d.variance() / n as f64).sqrt();
            let se_var = ((fourth - var * var) / n as f64).sqrt();
            assert!((mean - d.mean()).abs() < 4.0 * se_mean, "{d:?}: mean {mean}");
            assert!((var - d.variance()).abs() < 4.0 * se_var, "{d:?}: var {var}");
        }
    }

    #[test]
    fn budgets() {
        let g1 = CouplingDistribution::Gaussian { mean: 0.0, std: 1.0 };
        let cat = InteractionCatalog::new(vec![z_bond(0, 1, g1)]).unwrap();
        let b = variance_budget(&cat, 2);
        assert_eq!((b.total_variance, b.sigma_squared), (1.0, 0.5));

        let g2 = CouplingDistribution::Gaussian { mean: 0.0, std: 2.0 };
        let chain = InteractionCatalog::new((0..3).map(|i| z_bond(i, i + 1, g2.clone())).collect()).unwrap();
        let b = variance_budget(&chain, 4);
        assert_eq!((b.total_variance, b.sigma_squared), (12.0, 3.0));

        let tp = CouplingDistribution::TwoPoint {
            value: 1.7,
            prob_plus: 0.5,
        };
        assert!((tp.variance() - 1.7 * 1.7).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(CouplingDistribution::Gaussian { mean: 0.0, std: -1.0 }
            .validate()
            .is_err());
        assert!(CouplingDistribution::TwoPoint {
            value: 1.0,
            prob_plus: 1.5
        }
        .validate()
        .is_err());
        assert!(CouplingDistribution::Uniform { lo: 1.0, hi: 0.0 }.validate().is_err());
        let empty = InteractionTerm {
            axis: Some(Axis::Z),
            sites: vec![],
            distribution: CouplingDistribution::Constant { value: 1.0 },
            phi: PhiSpec::axis_product(),
        };
        assert!(InteractionCatalog::new(vec![empty]).is_err());
        let dup = z_bond(1, 1, CouplingDistribution::Constant { value: 1.0 });
        assert!(matches!(
            InteractionCatalog::new(vec![dup]),
            Err(LabError::DuplicateSite(1))
        ));
    }

    #[test]
    fn catalog_toml_keeps_order() {
        let cat = InteractionCatalog::new(vec![
            z_bond(2, 3, CouplingDistribution::Uniform { lo: -1.0, hi: 1.0 }),
            z_bond(0, 1, CouplingDistribution::Gaussian { mean: 0.0, std: 1.0 }),
            InteractionTerm {
                axis: None,
                sites: vec![1, 2],
                distribution: CouplingDistribution::TwoPoint {
                    value: 1.0,
                    prob_plus: 0.5,
                },
                phi: PhiSpec::exchange(),
            },
        ])
        .unwrap();
        let text = cat.to_toml();
        let back = InteractionCatalog::from_toml(&text).unwrap();
        assert_eq!(back, cat);
        assert_eq!(draw_sample(&back, 9, 4), draw_sample(&cat, 9, 4));
    }
}
