//! Hamiltonians, order operators and perturbed models assembled from a catalog.

use serde::{Deserialize, Serialize};

use crate::disorder::{CouplingDistribution, DisorderSample, InteractionCatalog, InteractionTerm};
use crate::error::{LabError, Result};
use crate::spin_algebra::{
    commutator, operator_norm, spin_matrices, Axis, CMatrix, LocalOperator, ManyBodyOperator, SiteSet, SpinMagnitude,
    C64, DEFAULT_DIM_CAP,
};

/// Slack allowed when checking a computed norm against a declared bound.
const NORM_SLACK: f64 = 1e-10;

/// Dense complex matrix in a text-friendly layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixSpec {
    pub fn to_local(&self) -> Result<LocalOperator> {
        let d = self.re.len();
        let bad = || LabError::DimensionMismatch("custom local matrix is not square".into());
        if self.re.iter().any(|r| r.len() != d) {
            return Err(bad());
        }
        if let Some(im) = &self.im {
            if im.len() != d || im.iter().any(|r| r.len() != d) {
                return Err(bad());
            }
        }
        let m = CMatrix::from_fn(d, d, |i, j| {
            let im = self.im.as_ref().map_or(0.0, |im| im[i][j]);
            C64::new(self.re[i][j], im)
        });
        LocalOperator::new(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiKind {
    /// `prod_{j in X} S_j^p`.
    AxisProduct,
    /// `S_j^p` on a one-site support.
    SingleSite,
    /// `sum_p prod_{j in X} S_j^p`; one coupling shared by all three axes.
    Exchange,
    /// Product of explicit local matrices, one per support site (in support order).
    Custom { factors: Vec<MatrixSpec> },
}

/// The bounded function `phi_X^p`, optionally rescaled, with an optional declared bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiSpec {
    #[serde(flatten)]
    pub kind: PhiKind,
    #[serde(default = "unit_scale", skip_serializing_if = "is_unit")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_phi: Option<f64>,
}

fn unit_scale() -> f64 {
    1.0
}

fn is_unit(x: &f64) -> bool {
    *x == 1.0
}

impl PhiSpec {
    fn of(kind: PhiKind) -> Self {
        Self {
            kind,
            scale: 1.0,
            c_phi: None,
        }
    }

    pub fn axis_product() -> Self {
        Self::of(PhiKind::AxisProduct)
    }

    pub fn single_site() -> Self {
        Self::of(PhiKind::SingleSite)
    }

    pub fn exchange() -> Self {
        Self::of(PhiKind::Exchange)
    }

    pub fn custom(factors: Vec<MatrixSpec>) -> Self {
        Self::of(PhiKind::Custom { factors })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_bound(mut self, c_phi: f64) -> Self {
        self.c_phi = Some(c_phi);
        self
    }

    pub(crate) fn validate_for(&self, term: &InteractionTerm) -> Result<()> {
        if !self.scale.is_finite() {
            return Err(LabError::InvalidParameter(format!("phi scale {}", self.scale)));
        }
        if let Some(c) = self.c_phi {
            if !(c > 0.0) {
                return Err(LabError::InvalidParameter(format!("c_phi must be positive, got {c}")));
            }
        }
        match &self.kind {
            PhiKind::AxisProduct if term.axis.is_none() => {
                Err(LabError::InvalidParameter("axis_product term needs an axis".into()))
            }
            PhiKind::SingleSite if term.axis.is_none() || term.sites.len() != 1 => Err(LabError::InvalidParameter(
                "single_site term needs an axis and exactly one site".into(),
            )),
            PhiKind::Exchange if term.sites.len() < 2 => Err(LabError::InvalidParameter(
                "exchange term needs at least two sites".into(),
            )),
            PhiKind::Custom { factors } if factors.len() != term.sites.len() => {
                Err(LabError::InvalidParameter(format!(
                    "custom term has {} factors for {} sites",
                    factors.len(),
                    term.sites.len()
                )))
            }
            _ => Ok(()),
        }
    }
}

/// A realized `phi`: a real linear combination of site-local products.
#[derive(Clone, Debug)]
pub struct RealizedPhi {
    pub products: Vec<(f64, Vec<(usize, LocalOperator)>)>,
}

impl RealizedPhi {
    pub fn realize(term: &InteractionTerm, spin: SpinMagnitude) -> Result<Self> {
        let sm = spin_matrices(spin);
        let along = |axis: Axis| -> Vec<(usize, LocalOperator)> {
            term.sites.iter().map(|&j| (j, sm.get(axis).clone())).collect()
        };
        let scale = term.phi.scale;
        let products = match &term.phi.kind {
            PhiKind::AxisProduct | PhiKind::SingleSite => {
                let axis = term.axis.expect("validated");
                vec![(scale, along(axis))]
            }
            PhiKind::Exchange => Axis::ALL.iter().map(|&a| (scale, along(a))).collect(),
            PhiKind::Custom { factors } => {
                let mut ops = Vec::with_capacity(factors.len());
                for (&j, f) in term.sites.iter().zip(factors) {
                    let op = f.to_local()?;
                    if op.dim() != spin.local_dim() {
                        return Err(LabError::DimensionMismatch(format!(
                            "custom factor of dim {} for spin {}",
                            op.dim(),
                            spin.value()
                        )));
                    }
                    ops.push((j, op));
                }
                vec![(scale, ops)]
            }
        };
        Ok(Self { products })
    }

    pub fn is_diagonal(&self) -> bool {
        self.products
            .iter()
            .all(|(_, ops)| ops.iter().all(|(_, op)| op.is_diagonal()))
    }

    /// Adds `coupling * phi` to `target`, with every site shifted by `offset`.
    pub fn add_to(&self, target: &mut ManyBodyOperator, coupling: f64, offset: usize) -> Result<()> {
        for (coeff, ops) in &self.products {
            let factors: Vec<(usize, &LocalOperator)> = ops.iter().map(|(j, op)| (j + offset, op)).collect();
            target.add_product(C64::new(coupling * coeff, 0.0), &factors)?;
        }
        Ok(())
    }

    /// Exact spectral norm, computed on the support only.
    pub fn norm(&self, local_dim: usize) -> Result<f64> {
        let mut support: Vec<usize> = self
            .products
            .iter()
            .flat_map(|(_, ops)| ops.iter().map(|(j, _)| *j))
            .collect();
        support.sort_unstable();
        support.dedup();
        let mut local = ManyBodyOperator::zeros(support.len(), local_dim)?;
        for (coeff, ops) in &self.products {
            let factors: Vec<(usize, &LocalOperator)> = ops
                .iter()
                .map(|(j, op)| (support.binary_search(j).expect("in support"), op))
                .collect();
            local.add_product(C64::new(*coeff, 0.0), &factors)?;
        }
        Ok(operator_norm(&local))
    }

    /// Diagonal matrix element for a basis state given as local digits.
    pub fn diagonal_element(&self, digits: &[usize], offset: usize) -> f64 {
        self.products
            .iter()
            .map(|(coeff, ops)| {
                coeff
                    * ops
                        .iter()
                        .map(|(j, op)| {
                            let k = digits[j + offset];
                            op.entries()[(k, k)].re
                        })
                        .product::<f64>()
            })
            .sum()
    }
}

/// A catalog with every `phi` realized for a fixed spin and site set.
#[derive(Clone, Debug)]
pub struct RealizedCatalog {
    pub spin: SpinMagnitude,
    pub sites: SiteSet,
    pub phis: Vec<RealizedPhi>,
    /// Exact norm of each realized `phi`.
    pub norms: Vec<f64>,
    pub dim_cap: usize,
}

impl RealizedCatalog {
    pub fn new(catalog: &InteractionCatalog, spin: SpinMagnitude, sites: &SiteSet) -> Result<Self> {
        catalog.validate(Some(sites.n_sites()))?;
        let mut phis = Vec::with_capacity(catalog.len());
        let mut norms = Vec::with_capacity(catalog.len());
        for term in &catalog.terms {
            let phi = RealizedPhi::realize(term, spin)?;
            let norm = phi.norm(spin.local_dim())?;
            if let Some(bound) = term.phi.c_phi {
                if norm > bound + NORM_SLACK {
                    return Err(LabError::NormBound { norm, bound });
                }
            }
            phis.push(phi);
            norms.push(norm);
        }
        Ok(Self {
            spin,
            sites: sites.clone(),
            phis,
            norms,
            dim_cap: DEFAULT_DIM_CAP,
        })
    }

    pub fn with_dim_cap(mut self, cap: usize) -> Self {
        self.dim_cap = cap;
        self
    }

    pub fn n_sites(&self) -> usize {
        self.sites.n_sites()
    }

    /// `C_phi`: the largest exact norm over all terms.
    pub fn c_phi(&self) -> f64 {
        self.norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_diagonal(&self) -> bool {
        self.phis.iter().all(RealizedPhi::is_diagonal)
    }

    fn check_sample(&self, sample: &DisorderSample) -> Result<()> {
        if sample.values.len() != self.phis.len() {
            return Err(LabError::SampleMismatch {
                expected: self.phis.len(),
                got: sample.values.len(),
            });
        }
        Ok(())
    }

    pub fn hamiltonian(&self, sample: &DisorderSample) -> Result<ManyBodyOperator> {
        self.check_sample(sample)?;
        let mut h = ManyBodyOperator::zeros_capped(self.n_sites(), self.spin.local_dim(), self.dim_cap)?;
        self.add_hamiltonian(&mut h, sample, 0)?;
        Ok(h)
    }

    /// Adds this catalog's Hamiltonian to `target`, shifted by `offset` sites.
    pub fn add_hamiltonian(&self, target: &mut ManyBodyOperator, sample: &DisorderSample, offset: usize) -> Result<()> {
        self.check_sample(sample)?;
        for (phi, &j) in self.phis.iter().zip(&sample.values) {
            phi.add_to(target, j, offset)?;
        }
        Ok(())
    }

    /// Energies of every computational basis state, for diagonal catalogs only.
    pub fn diagonal_energies(&self, sample: &DisorderSample) -> Result<Vec<f64>> {
        self.check_sample(sample)?;
        if !self.is_diagonal() {
            return Err(LabError::NotDiagonal);
        }
        let d = self.spin.local_dim();
        let n = self.n_sites();
        let dim = crate::spin_algebra::checked_dim(d, n, 1 << 26)?;
        let mut out = vec![0.0; dim];
        let mut digits = vec![0usize; n];
        for (state, slot) in out.iter_mut().enumerate() {
            decode_digits(state, d, &mut digits);
            *slot = self
                .phis
                .iter()
                .zip(&sample.values)
                .map(|(phi, &j)| j * phi.diagonal_element(&digits, 0))
                .sum();
        }
        Ok(out)
    }
}

/// Local digits of a basis index, site 0 most significant.
pub fn decode_digits(mut state: usize, local_dim: usize, digits: &mut [usize]) {
    for slot in digits.iter_mut().rev() {
        *slot = state % local_dim;
        state /= local_dim;
    }
}

pub fn build_hamiltonian(
    catalog: &InteractionCatalog,
    sample: &DisorderSample,
    sites: &SiteSet,
    spin: SpinMagnitude,
) -> Result<ManyBodyOperator> {
    RealizedCatalog::new(catalog, spin, sites)?.hamiltonian(sample)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityWeights {
    /// `a_j = 1`.
    Uniform,
    /// `a_j = (-1)^(j_1 + ... + j_d)`.
    Staggered,
    Explicit {
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum OrderKind {
    /// `(1/N) sum_j a_j S_j^axis`.
    SpinDensity {
        axis: Axis,
        weights: DensityWeights,
    },
    Custom(ManyBodyOperator),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderOperatorSpec {
    pub kind: OrderKind,
    pub c_o: Option<f64>,
}

impl OrderOperatorSpec {
    pub fn uniform(axis: Axis) -> Self {
        Self {
            kind: OrderKind::SpinDensity {
                axis,
                weights: DensityWeights::Uniform,
            },
            c_o: None,
        }
    }

    pub fn staggered(axis: Axis) -> Self {
        Self {
            kind: OrderKind::SpinDensity {
                axis,
                weights: DensityWeights::Staggered,
            },
            c_o: None,
        }
    }

    pub fn custom(op: ManyBodyOperator) -> Self {
        Self {
            kind: OrderKind::Custom(op),
            c_o: None,
        }
    }

    pub fn with_bound(mut self, c_o: f64) -> Self {
        self.c_o = Some(c_o);
        self
    }

    pub fn weights(&self, sites: &SiteSet) -> Result<Option<Vec<f64>>> {
        let OrderKind::SpinDensity { weights, .. } = &self.kind else {
            return Ok(None);
        };
        let n = sites.n_sites();
        let a = match weights {
            DensityWeights::Uniform => vec![1.0; n],
            DensityWeights::Staggered => (0..n).map(|j| sites.staggered_sign(j)).collect(),
            DensityWeights::Explicit { values } => {
                if values.len() != n {
                    return Err(LabError::DimensionMismatch(format!(
                        "{} weights for {n} sites",
                        values.len()
                    )));
                }
                values.clone()
            }
        };
        Ok(Some(a))
    }

    /// Diagonal of the order operator in the computational basis, when it is diagonal.
    pub fn diagonal(&self, sites: &SiteSet, spin: SpinMagnitude) -> Result<Option<Vec<f64>>> {
        match &self.kind {
            OrderKind::SpinDensity { axis: Axis::Z, .. } => {
                let a = self.weights(sites)?.expect("density");
                let n = sites.n_sites();
                let d = spin.local_dim();
                let dim = crate::spin_algebra::checked_dim(d, n, 1 << 26)?;
                let mut digits = vec![0; n];
                let mut out = vec![0.0; dim];
                for (state, slot) in out.iter_mut().enumerate() {
                    decode_digits(state, d, &mut digits);
                    *slot = digits.iter().zip(&a).map(|(&k, &w)| w * spin.sz_value(k)).sum::<f64>() / n as f64;
                }
                Ok(Some(out))
            }
            OrderKind::SpinDensity { .. } => Ok(None),
            OrderKind::Custom(op) => Ok(op.real_diagonal()),
        }
    }
}

/// `O_N` for the given spec; fails if the realized norm exceeds `c_o`.
pub fn build_order_operator(
    spec: &OrderOperatorSpec,
    sites: &SiteSet,
    spin: SpinMagnitude,
) -> Result<ManyBodyOperator> {
    let (op, norm) = match &spec.kind {
        OrderKind::SpinDensity { axis, .. } => {
            let a = spec.weights(sites)?.expect("density");
            let n = sites.n_sites();
            let sm = spin_matrices(spin);
            let mut op = ManyBodyOperator::zeros(n, spin.local_dim())?;
            for (j, &w) in a.iter().enumerate() {
                op.add_product(C64::new(w / n as f64, 0.0), &[(j, sm.get(*axis))])?;
            }
            // every axis is unitarily equivalent to z, where the maximum is attained
            // with each spin fully aligned with sign(a_j)
            let norm = spin.value() * a.iter().map(|w| w.abs()).sum::<f64>() / n as f64;
            (op, norm)
        }
        OrderKind::Custom(op) => {
            if op.n_sites() != sites.n_sites() || op.local_dim() != spin.local_dim() {
                return Err(LabError::DimensionMismatch("custom order operator shape".into()));
            }
            if !op.is_hermitian() {
                return Err(LabError::NonHermitian(op.hermiticity_defect()));
            }
            (op.clone(), operator_norm(op))
        }
    };
    if let Some(bound) = spec.c_o {
        if norm > bound + NORM_SLACK {
            return Err(LabError::NormBound { norm, bound });
        }
    }
    Ok(op)
}

/// `H_lambda = h0 - N lambda O_N`.
#[derive(Clone, Debug)]
pub struct PerturbedModel {
    pub h0: ManyBodyOperator,
    pub order_op: ManyBodyOperator,
    pub n_sites: usize,
    pub lambda: f64,
}

impl PerturbedModel {
    pub fn perturb(&self) -> Result<ManyBodyOperator> {
        perturb(self)
    }
}

pub fn perturb(model: &PerturbedModel) -> Result<ManyBodyOperator> {
    if model.lambda == 0.0 {
        return Ok(model.h0.clone());
    }
    model
        .h0
        .add_scaled(-(model.n_sites as f64) * model.lambda, &model.order_op)
}

/// `|| [O, [H, O]] ||`.
pub fn assumption2_norm(h: &ManyBodyOperator, o: &ManyBodyOperator) -> Result<f64> {
    let inner = commutator(h, o)?;
    let outer = commutator(o, &inner)?;
    Ok(operator_norm(&outer))
}

/// One exchange term per bond, sharing a single coupling across x, y and z.
pub fn heisenberg_catalog(bonds: &[(usize, usize)], dist: &CouplingDistribution) -> Result<InteractionCatalog> {
    InteractionCatalog::new(
        bonds
            .iter()
            .map(|&(i, j)| InteractionTerm {
                axis: None,
                sites: vec![i, j],
                distribution: dist.clone(),
                phi: PhiSpec::exchange(),
            })
            .collect(),
    )
}

/// Three terms per bond with independent couplings per axis.
pub fn heisenberg_catalog_per_axis(
    bonds: &[(usize, usize)],
    dist: &CouplingDistribution,
) -> Result<InteractionCatalog> {
    InteractionCatalog::new(
        bonds
            .iter()
            .flat_map(|&(i, j)| {
                Axis::ALL.iter().map(move |&axis| InteractionTerm {
                    axis: Some(axis),
                    sites: vec![i, j],
                    distribution: dist.clone(),
                    phi: PhiSpec::axis_product(),
                })
            })
            .collect(),
    )
}

/// Ising couplings `J_ij * scale * S_i^z S_j^z` on the given bonds.
pub fn ising_catalog(bonds: &[(usize, usize)], dist: &CouplingDistribution, scale: f64) -> Result<InteractionCatalog> {
    InteractionCatalog::new(
        bonds
            .iter()
            .map(|&(i, j)| InteractionTerm {
                axis: Some(Axis::Z),
                sites: vec![i, j],
                distribution: dist.clone(),
                phi: PhiSpec::axis_product().with_scale(scale),
            })
            .collect(),
    )
}

/// All pairs `i < j`.
pub fn all_pairs(n_sites: usize) -> Vec<(usize, usize)> {
    (0..n_sites)
        .flat_map(|i| (i + 1..n_sites).map(move |j| (i, j)))
        .collect()
}

/// Independent single-site fields `h_j S_j^axis`.
pub fn field_catalog(n_sites: usize, axis: Axis, dist: &CouplingDistribution) -> Result<InteractionCatalog> {
    InteractionCatalog::new(
        (0..n_sites)
            .map(|j| InteractionTerm {
                axis: Some(axis),
                sites: vec![j],
                distribution: dist.clone(),
                phi: PhiSpec::single_site(),
            })
            .collect(),
    )
}
