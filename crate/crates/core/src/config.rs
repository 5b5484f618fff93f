//! Study configuration files.
//!
//! A study file is TOML with `[model]`, `[order]`, `[ensemble]`, `[study]` and an
//! optional `[replica]` section. Everything a run depends on lives in this file plus
//! the seed, and the SHA-256 of the file bytes is stamped on every report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::disorder::{CouplingDistribution, InteractionCatalog};
use crate::error::{LabError, Result};
use crate::model::{
    all_pairs, field_catalog, heisenberg_catalog, heisenberg_catalog_per_axis, ising_catalog, OrderOperatorSpec,
};
use crate::spin_algebra::{Axis, ManyBodyOperator, SiteSet, SpinMagnitude, DEFAULT_DIM_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Nearest-neighbour exchange on a chain.
    HeisenbergChain,
    /// Nearest-neighbour exchange on a hypercubic `L^dims` lattice.
    HeisenbergLattice,
    /// Nearest-neighbour `S^z S^z` couplings on a chain.
    IsingChain,
    /// All-to-all `sigma^z sigma^z` couplings with `1/sqrt(N)` scaling.
    Sk,
    /// Decoupled sites, each in its own random field along the order axis.
    IndependentSites,
    /// Terms read from a catalog file; `{n}` in the path is replaced by the size.
    Catalog,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineChoice {
    /// Classical enumeration whenever the Hamiltonian and observables are diagonal.
    #[default]
    Auto,
    Dense,
    Classical,
}

fn default_spin() -> f64 {
    0.5
}

fn default_dims() -> usize {
    1
}

fn default_dim_cap() -> usize {
    DEFAULT_DIM_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    #[serde(default = "default_spin")]
    pub spin: f64,
    pub coupling: CouplingDistribution,
    /// Independent couplings per axis for the exchange families.
    #[serde(default)]
    pub per_axis: bool,
    #[serde(default)]
    pub periodic: bool,
    #[serde(default = "default_dims")]
    pub dims: usize,
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub engine: EngineChoice,
    #[serde(default = "default_dim_cap")]
    pub dim_cap: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderShape {
    #[default]
    Uniform,
    Staggered,
    /// The identity operator, a trivial control.
    Identity,
}

fn default_axis() -> Axis {
    Axis::Z
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderConfig {
    #[serde(default)]
    pub shape: OrderShape,
    #[serde(default = "default_axis")]
    pub axis: Axis,
}

impl Default for OrderConfig {
    fn default() -> Self {
        Self {
            shape: OrderShape::Uniform,
            axis: Axis::Z,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub sizes: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
}

fn default_fd_step() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyParams {
    pub beta: f64,
    pub lambdas: Vec<f64>,
    /// Step of the central differences in the lambda sweep.
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapSupport {
    /// Single sites `{j}`.
    #[default]
    Sites,
    /// The supports of the interaction terms.
    Bonds,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTerm {
    pub power: u32,
    pub coeff: f64,
}

fn default_replicas() -> usize {
    2
}

fn default_pair() -> [usize; 2] {
    [0, 1]
}

fn default_terms() -> Vec<PowerTerm> {
    vec![PowerTerm { power: 1, coeff: 1.0 }]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicaConfig {
    #[serde(default = "default_replicas")]
    pub n_replicas: usize,
    #[serde(default)]
    pub support: OverlapSupport,
    #[serde(default = "default_axis")]
    pub axis: Axis,
    /// Zero-based replica labels of the overlap.
    #[serde(default = "default_pair")]
    pub pair: [usize; 2],
    #[serde(default = "default_terms")]
    pub terms: Vec<PowerTerm>,
}

impl Default for ReplicaConfig {
    fn default() -> Self {
        Self {
            n_replicas: 2,
            support: OverlapSupport::Sites,
            axis: Axis::Z,
            pair: [0, 1],
            terms: default_terms(),
        }
    }
}

impl ReplicaConfig {
    /// Short label used in report rows, e.g. `R01_sites_z_p1`.
    pub fn overlap_id(&self) -> String {
        let support = match self.support {
            OverlapSupport::Sites => "sites",
            OverlapSupport::Bonds => "bonds",
        };
        let powers: Vec<String> = self.terms.iter().map(|t| format!("p{}", t.power)).collect();
        format!(
            "R{}{}_{}_{}_{}",
            self.pair[0],
            self.pair[1],
            support,
            self.axis.name(),
            powers.join("")
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub order: OrderConfig,
    pub ensemble: EnsembleConfig,
    pub study: StudyParams,
    #[serde(default)]
    pub replica: Option<ReplicaConfig>,
    /// Directory that relative catalog paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// A parsed config with the hash of its source bytes.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: StudyConfig,
    pub sha256: String,
}

fn invalid(field: &str, message: impl std::fmt::Display) -> LabError {
    LabError::InvalidParameter(format!("{field}: {message}"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let config: StudyConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = std::fs::read(path).map_err(|source| LabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| LabError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut config = Self::from_toml(&text).map_err(|message| LabError::Config {
            path: path.to_path_buf(),
            message,
        })?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig {
            config,
            sha256: sha256_hex(&bytes),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn spin(&self) -> Result<SpinMagnitude> {
        SpinMagnitude::from_f64(self.model.spin)
    }

    pub fn validate(&self) -> Result<()> {
        self.spin().map_err(|e| invalid("model.spin", e))?;
        self.model
            .coupling
            .validate()
            .map_err(|e| invalid("model.coupling", e))?;
        if self.model.dims == 0 {
            return Err(invalid("model.dims", "must be at least 1"));
        }
        if self.model.family == Family::Catalog && self.model.catalog.is_none() {
            return Err(invalid("model.catalog", "required when family = \"catalog\""));
        }
        let sizes = &self.ensemble.sizes;
        if sizes.is_empty() {
            return Err(invalid("ensemble.sizes", "must not be empty"));
        }
        if sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("ensemble.sizes", "must be positive and strictly ascending"));
        }
        if self.model.family == Family::HeisenbergLattice {
            for &n in sizes {
                lattice_side(n, self.model.dims).map_err(|e| invalid("ensemble.sizes", e))?;
            }
        }
        if self.ensemble.samples < 2 {
            return Err(invalid("ensemble.samples", "must be at least 2"));
        }
        if !(self.study.beta > 0.0 && self.study.beta.is_finite()) {
            return Err(invalid("study.beta", "must be positive and finite"));
        }
        if self.study.lambdas.is_empty() || self.study.lambdas.iter().any(|l| !l.is_finite()) {
            return Err(invalid("study.lambdas", "must be a nonempty list of finite numbers"));
        }
        if !(self.study.fd_step > 0.0 && self.study.fd_step.is_finite()) {
            return Err(invalid("study.fd_step", "must be positive"));
        }
        if let Some(r) = &self.replica {
            if !(2..=3).contains(&r.n_replicas) {
                return Err(invalid("replica.n_replicas", "must be 2 or 3"));
            }
            if r.pair[0] == r.pair[1] || r.pair.iter().any(|&a| a >= r.n_replicas) {
                return Err(invalid("replica.pair", "must name two distinct replicas"));
            }
            if r.terms.is_empty() || r.terms.iter().any(|t| t.power == 0 || !t.coeff.is_finite()) {
                return Err(invalid("replica.terms", "powers must be >= 1 with finite coefficients"));
            }
        }
        Ok(())
    }

    /// Site set used at size `n`.
    pub fn sites(&self, n: usize) -> Result<SiteSet> {
        match self.model.family {
            Family::HeisenbergLattice => {
                let side = lattice_side(n, self.model.dims)?;
                SiteSet::lattice(vec![side; self.model.dims])
            }
            _ => Ok(SiteSet::new(n)),
        }
    }

    fn chain_bonds(&self, sites: &SiteSet) -> Vec<(usize, usize)> {
        sites.nearest_neighbor_bonds(self.model.periodic)
    }

    /// Interaction catalog at size `n`.
    pub fn catalog(&self, n: usize) -> Result<InteractionCatalog> {
        let sites = self.sites(n)?;
        let dist = &self.model.coupling;
        match self.model.family {
            Family::HeisenbergChain | Family::HeisenbergLattice => {
                let bonds = self.chain_bonds(&sites);
                if self.model.per_axis {
                    heisenberg_catalog_per_axis(&bonds, dist)
                } else {
                    heisenberg_catalog(&bonds, dist)
                }
            }
            Family::IsingChain => ising_catalog(&self.chain_bonds(&sites), dist, 1.0),
            Family::Sk => {
                // sigma^z sigma^z = 4 S^z S^z, couplings J / sqrt(N)
                ising_catalog(&all_pairs(n), &scale_distribution(dist, (n as f64).sqrt().recip()), 4.0)
            }
            Family::IndependentSites => field_catalog(n, self.order.axis, dist),
            Family::Catalog => {
                let raw = self.model.catalog.as_ref().expect("validated");
                let templated = raw.to_string_lossy().replace("{n}", &n.to_string());
                let path = self.base_dir.join(templated);
                let catalog = InteractionCatalog::load(&path)?;
                catalog.validate(Some(n))?;
                Ok(catalog)
            }
        }
    }

    pub fn order_spec(&self, n: usize) -> Result<OrderOperatorSpec> {
        Ok(match self.order.shape {
            OrderShape::Uniform => OrderOperatorSpec::uniform(self.order.axis),
            OrderShape::Staggered => OrderOperatorSpec::staggered(self.order.axis),
            OrderShape::Identity => OrderOperatorSpec::custom(ManyBodyOperator::identity(n, self.spin()?.local_dim())?),
        })
    }
}

/// `L` with `L^dims = n`.
fn lattice_side(n: usize, dims: usize) -> Result<usize> {
    let side = (n as f64).powf(1.0 / dims as f64).round() as usize;
    if side.checked_pow(dims as u32) != Some(n) {
        return Err(LabError::InvalidParameter(format!(
            "{n} is not a perfect {dims}-th power"
        )));
    }
    Ok(side)
}

/// Law of `factor * J`.
pub fn scale_distribution(dist: &CouplingDistribution, factor: f64) -> CouplingDistribution {
    match *dist {
        CouplingDistribution::Gaussian { mean, std } => CouplingDistribution::Gaussian {
            mean: mean * factor,
            std: std * factor.abs(),
        },
        CouplingDistribution::TwoPoint { value, prob_plus } => CouplingDistribution::TwoPoint {
            value: value * factor,
            prob_plus,
        },
        CouplingDistribution::Uniform { lo, hi } => {
            let (a, b) = (lo * factor, hi * factor);
            CouplingDistribution::Uniform {
                lo: a.min(b),
                hi: a.max(b),
            }
        }
        CouplingDistribution::Constant { value } => CouplingDistribution::Constant { value: value * factor },
    }
}
