//! Replicated systems sharing one disorder sample, spin overlaps and their statistics.
//!
//! Replica `a` of an `N`-site system occupies sites `a*N .. (a+1)*N` of the
//! replicated lattice, so with replica 0 most significant a joint basis index is
//! `sum_a sigma_a * D^(n-1-a)` with `D = (2S+1)^N`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{OverlapSupport, PowerTerm, ReplicaConfig, StudyConfig};
use crate::disorder::{draw_sample, sub_seed, DisorderSample, InteractionCatalog};
use crate::ensemble::{run_samples, SampleFailure};
use crate::error::{LabError, Result};
use crate::gibbs::{ClassicalGibbs, GibbsState, ObservableMoments};
use crate::model::{decode_digits, RealizedCatalog};
use crate::spin_algebra::{checked_dim, spin_matrices, Axis, ManyBodyOperator, SiteSet, SpinMagnitude, C64};
use crate::stats::{Estimate, VarianceDecomposition};

/// Most replicas on the dense path.
pub const MAX_DENSE_REPLICAS: usize = 3;
/// Most replicated sites on the classical path.
pub const MAX_CLASSICAL_SITES: usize = 24;
/// Invariance tolerance under relabelling replicas.
pub const SWAP_TOL: f64 = 1e-9;

/// `sum_a c_a (R_{pair})^a` with `R = (1/|D|) sum_X S_X^{alpha} S_X^{beta}`.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapSpec {
    pub axis: Axis,
    pub supports: Vec<Vec<usize>>,
    pub pair: (usize, usize),
    pub terms: Vec<PowerTerm>,
}

impl OverlapSpec {
    /// Single-site supports with the plain overlap.
    pub fn single_sites(n_sites: usize, axis: Axis) -> Self {
        Self {
            axis,
            supports: (0..n_sites).map(|j| vec![j]).collect(),
            pair: (0, 1),
            terms: vec![PowerTerm { power: 1, coeff: 1.0 }],
        }
    }

    pub fn from_config(cfg: &ReplicaConfig, catalog: &InteractionCatalog, n_sites: usize) -> Self {
        let supports = match cfg.support {
            OverlapSupport::Sites => (0..n_sites).map(|j| vec![j]).collect(),
            OverlapSupport::Bonds => {
                let mut s: Vec<Vec<usize>> = catalog.terms.iter().map(|t| t.sites.clone()).collect();
                s.dedup();
                s
            }
        };
        Self {
            axis: cfg.axis,
            supports,
            pair: (cfg.pair[0], cfg.pair[1]),
            terms: cfg.terms.clone(),
        }
    }

    pub fn validate(&self, n_sites: usize, n_replicas: usize) -> Result<()> {
        if self.supports.is_empty() {
            return Err(LabError::InvalidSupport("overlap needs at least one support".into()));
        }
        for x in &self.supports {
            if x.is_empty() {
                return Err(LabError::InvalidSupport("empty overlap support".into()));
            }
            for (k, &j) in x.iter().enumerate() {
                if j >= n_sites {
                    return Err(LabError::SiteOutOfRange { site: j, n_sites });
                }
                if x[..k].contains(&j) {
                    return Err(LabError::DuplicateSite(j));
                }
            }
        }
        let (a, b) = self.pair;
        if a == b || a >= n_replicas || b >= n_replicas {
            return Err(LabError::InvalidParameter(format!(
                "overlap pair ({a}, {b}) with {n_replicas} replicas"
            )));
        }
        if self.terms.iter().any(|t| t.power == 0) {
            return Err(LabError::InvalidParameter("overlap powers must be at least 1".into()));
        }
        Ok(())
    }

    /// `max_X ||S_X||^2 = S^(2|X|)`.
    pub fn overlap_bound(&self, spin: SpinMagnitude) -> f64 {
        let largest = self.supports.iter().map(Vec::len).max().unwrap_or(0);
        spin.value().powi(2 * largest as i32)
    }

    /// `sum_a |c_a| * overlap_bound^a`.
    pub fn rsb_bound(&self, spin: SpinMagnitude) -> f64 {
        let b = self.overlap_bound(spin);
        self.terms.iter().map(|t| t.coeff.abs() * b.powi(t.power as i32)).sum()
    }
}

/// The plain overlap operator on the replicated lattice.
pub fn overlap_operator(
    spec: &OverlapSpec,
    sites: &SiteSet,
    n_replicas: usize,
    spin: SpinMagnitude,
    dim_cap: usize,
) -> Result<ManyBodyOperator> {
    let n = sites.n_sites();
    spec.validate(n, n_replicas)?;
    let sm = spin_matrices(spin);
    let op = sm.get(spec.axis);
    let mut r = ManyBodyOperator::zeros_capped(n_replicas * n, spin.local_dim(), dim_cap)?;
    let weight = C64::new(1.0 / spec.supports.len() as f64, 0.0);
    let (a, b) = spec.pair;
    for x in &spec.supports {
        let factors: Vec<(usize, _)> = x
            .iter()
            .map(|&j| (a * n + j, op))
            .chain(x.iter().map(|&j| (b * n + j, op)))
            .collect();
        r.add_product(weight, &factors)?;
    }
    Ok(r)
}

/// `sum_a c_a R^a`.
pub fn rsb_perturbation(
    spec: &OverlapSpec,
    sites: &SiteSet,
    n_replicas: usize,
    spin: SpinMagnitude,
    dim_cap: usize,
) -> Result<ManyBodyOperator> {
    let r = overlap_operator(spec, sites, n_replicas, spin, dim_cap)?;
    let mut total = ManyBodyOperator::zeros_capped(r.n_sites(), r.local_dim(), dim_cap)?;
    let max_power = spec.terms.iter().map(|t| t.power).max().unwrap_or(0);
    let mut power = r.clone();
    for a in 1..=max_power {
        if a > 1 {
            power = power.matmul(&r)?;
        }
        for t in spec.terms.iter().filter(|t| t.power == a && t.coeff != 0.0) {
            total = total.add_scaled(t.coeff, &power)?;
        }
    }
    Ok(total)
}

/// `sum_a H(S^a, J) - N lambda rsb` with the same couplings in every replica.
pub fn build_replica_hamiltonian(
    realized: &RealizedCatalog,
    sample: &DisorderSample,
    n_replicas: usize,
    lambda: f64,
    rsb: &ManyBodyOperator,
) -> Result<ManyBodyOperator> {
    let n = realized.n_sites();
    let mut h = ManyBodyOperator::zeros_capped(n_replicas * n, realized.spin.local_dim(), realized.dim_cap)?;
    for a in 0..n_replicas {
        realized.add_hamiltonian(&mut h, sample, a * n)?;
    }
    if lambda == 0.0 {
        return Ok(h);
    }
    h.add_scaled(-(n as f64) * lambda, rsb)
}

/// Permutation of replica labels: block `a` of a basis state moves to block `perm[a]`.
pub fn replica_permutation(
    n_sites: usize,
    local_dim: usize,
    perm: &[usize],
    dim_cap: usize,
) -> Result<ManyBodyOperator> {
    let n_replicas = perm.len();
    let mut seen = vec![false; n_replicas];
    for &p in perm {
        if p >= n_replicas || seen[p] {
            return Err(LabError::InvalidParameter(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    let block = checked_dim(local_dim, n_sites, dim_cap)?;
    let dim = checked_dim(local_dim, n_replicas * n_sites, dim_cap)?;
    let mut diag = vec![0usize; n_replicas];
    let mut moved = vec![0usize; n_replicas];
    let mut entries = DMatrix::<C64>::zeros(dim, dim);
    for old in 0..dim {
        decode_digits(old, block, &mut diag);
        for (a, &sigma) in diag.iter().enumerate() {
            moved[perm[a]] = sigma;
        }
        let new = moved.iter().fold(0, |acc, &s| acc * block + s);
        entries[(new, old)] = C64::new(1.0, 0.0);
    }
    ManyBodyOperator::from_matrix(n_replicas * n_sites, local_dim, entries)
}

/// `P A P^dagger`.
pub fn conjugate(p: &ManyBodyOperator, a: &ManyBodyOperator) -> Result<ManyBodyOperator> {
    p.matmul(a)?.matmul(&p.adjoint())
}

/// Per-replica energies plus the overlap polynomial on the joint classical space.
#[derive(Clone, Debug)]
pub struct ClassicalReplicas {
    pub n_replicas: usize,
    /// Single-replica state count `D`.
    pub block: usize,
    /// `sum_a c_a R^a` for every joint state.
    pub rsb: Vec<f64>,
}

impl ClassicalReplicas {
    pub fn new(spec: &OverlapSpec, n_sites: usize, n_replicas: usize, spin: SpinMagnitude) -> Result<Self> {
        spec.validate(n_sites, n_replicas)?;
        if spec.axis != Axis::Z {
            return Err(LabError::NotDiagonal);
        }
        let d = spin.local_dim();
        let block = checked_dim(d, n_sites, 1 << MAX_CLASSICAL_SITES)?;
        let joint = checked_dim(d, n_replicas * n_sites, 1 << MAX_CLASSICAL_SITES)?;
        // overlap of two configurations = rows of A dotted, A[sigma, X] = prod_{j in X} s_j
        let mut a = DMatrix::<f64>::zeros(block, spec.supports.len());
        let mut digits = vec![0usize; n_sites];
        for sigma in 0..block {
            decode_digits(sigma, d, &mut digits);
            for (col, x) in spec.supports.iter().enumerate() {
                a[(sigma, col)] = x.iter().map(|&j| spin.sz_value(digits[j])).product();
            }
        }
        let gram = (&a * a.transpose()) / spec.supports.len() as f64;
        let mut blocks = vec![0usize; n_replicas];
        let (p, q) = spec.pair;
        let rsb = (0..joint)
            .map(|state| {
                decode_digits(state, block, &mut blocks);
                let r = gram[(blocks[p], blocks[q])];
                spec.terms.iter().map(|t| t.coeff * r.powi(t.power as i32)).sum()
            })
            .collect();
        Ok(Self { n_replicas, block, rsb })
    }

    /// `sum_a e(sigma_a)` for every joint state.
    pub fn replicated_energies(&self, energies: &[f64]) -> Result<Vec<f64>> {
        if energies.len() != self.block {
            return Err(LabError::DimensionMismatch(format!(
                "{} energies for {} states",
                energies.len(),
                self.block
            )));
        }
        let mut out = energies.to_vec();
        for _ in 1..self.n_replicas {
            out = out.iter().flat_map(|&e| energies.iter().map(move |&f| e + f)).collect();
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicaEngine {
    Dense,
    Classical,
}

#[derive(Clone, Debug)]
enum ReplicaRep {
    Dense { rsb: ManyBodyOperator },
    Classical(ClassicalReplicas),
}

/// A base model at one size, replicated with a shared disorder sample.
#[derive(Clone, Debug)]
pub struct ReplicaSystem {
    pub n: usize,
    pub n_replicas: usize,
    pub beta: f64,
    pub realized: RealizedCatalog,
    pub spec: OverlapSpec,
    pub overlap_id: String,
    pub seed: u64,
    catalog: InteractionCatalog,
    rep: ReplicaRep,
}

/// Observations of the RSB operator in one sample at one field.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaObservation {
    pub moments: ObservableMoments,
    /// Largest change of a tested expectation under replica relabelling (dense path, zero field).
    pub swap_defect: Option<f64>,
}

impl ReplicaSystem {
    pub fn new(cfg: &StudyConfig, n: usize) -> Result<Self> {
        let rcfg = cfg.replica.clone().unwrap_or_default();
        let spin = cfg.spin()?;
        let sites = cfg.sites(n)?;
        let catalog = cfg.catalog(n)?;
        let realized = RealizedCatalog::new(&catalog, spin, &sites)?.with_dim_cap(cfg.model.dim_cap);
        let spec = OverlapSpec::from_config(&rcfg, &catalog, n);
        spec.validate(n, rcfg.n_replicas)?;
        let classical = realized.is_diagonal()
            && spec.axis == Axis::Z
            && rcfg.n_replicas * n <= MAX_CLASSICAL_SITES
            && cfg.model.engine != crate::config::EngineChoice::Dense;
        let rep = if classical {
            ReplicaRep::Classical(ClassicalReplicas::new(&spec, n, rcfg.n_replicas, spin)?)
        } else {
            if cfg.model.engine == crate::config::EngineChoice::Classical {
                return Err(LabError::NotDiagonal);
            }
            if rcfg.n_replicas > MAX_DENSE_REPLICAS {
                return Err(LabError::InvalidParameter(format!(
                    "at most {MAX_DENSE_REPLICAS} dense replicas"
                )));
            }
            ReplicaRep::Dense {
                rsb: rsb_perturbation(&spec, &sites, rcfg.n_replicas, spin, cfg.model.dim_cap)?,
            }
        };
        Ok(Self {
            n,
            n_replicas: rcfg.n_replicas,
            beta: cfg.study.beta,
            realized,
            spec,
            overlap_id: rcfg.overlap_id(),
            seed: sub_seed(cfg.ensemble.seed, n as u64),
            catalog,
            rep,
        })
    }

    pub fn engine(&self) -> ReplicaEngine {
        match self.rep {
            ReplicaRep::Dense { .. } => ReplicaEngine::Dense,
            ReplicaRep::Classical(_) => ReplicaEngine::Classical,
        }
    }

    pub fn sample(&self, index: u64) -> DisorderSample {
        draw_sample(&self.catalog, self.seed, index)
    }

    pub fn rsb_operator(&self) -> Option<&ManyBodyOperator> {
        match &self.rep {
            ReplicaRep::Dense { rsb } => Some(rsb),
            ReplicaRep::Classical(_) => None,
        }
    }

    pub fn evaluate(&self, index: u64, lambdas: &[f64]) -> Result<Vec<ReplicaObservation>> {
        let sample = self.sample(index);
        let scale = self.n as f64;
        match &self.rep {
            ReplicaRep::Classical(c) => {
                let base = c.replicated_energies(&self.realized.diagonal_energies(&sample)?)?;
                lambdas
                    .iter()
                    .map(|&lambda| {
                        let energies: Vec<f64> = if lambda == 0.0 {
                            base.clone()
                        } else {
                            base.iter().zip(&c.rsb).map(|(e, r)| e - scale * lambda * r).collect()
                        };
                        let state = ClassicalGibbs::from_energies(&energies, self.beta, self.n)?;
                        Ok(ReplicaObservation {
                            moments: state.moments(&c.rsb)?,
                            swap_defect: None,
                        })
                    })
                    .collect()
            }
            ReplicaRep::Dense { rsb } => lambdas
                .iter()
                .map(|&lambda| {
                    let h = build_replica_hamiltonian(&self.realized, &sample, self.n_replicas, lambda, rsb)?;
                    let state = GibbsState::from_hamiltonian(&h, self.beta)?;
                    let swap_defect = if lambda == 0.0 {
                        Some(self.swap_defect(&sample, &state, &h)?)
                    } else {
                        None
                    };
                    Ok(ReplicaObservation {
                        moments: state.moments(rsb)?,
                        swap_defect,
                    })
                })
                .collect(),
        }
    }

    /// Observables deliberately not symmetric in the replica labels.
    fn probe_observables(&self, sample: &DisorderSample) -> Result<Vec<ManyBodyOperator>> {
        let n = self.n;
        let spin = self.realized.spin;
        let total = self.n_replicas * n;
        let d = spin.local_dim();
        let sm = spin_matrices(spin);
        let mut out = Vec::new();
        for axis in Axis::ALL {
            let mut f = ManyBodyOperator::zeros_capped(total, d, self.realized.dim_cap)?;
            f.add_product(C64::new(1.0, 0.0), &[(0, sm.get(axis))])?;
            out.push(f);
        }
        let mut energy = ManyBodyOperator::zeros_capped(total, d, self.realized.dim_cap)?;
        self.realized.add_hamiltonian(&mut energy, sample, 0)?;
        out.push(energy);
        let mut cross = ManyBodyOperator::zeros_capped(total, d, self.realized.dim_cap)?;
        cross.add_product(
            C64::new(1.0, 0.0),
            &[(0, sm.get(Axis::Z)), (n + n - 1, sm.get(Axis::X))],
        )?;
        out.push(cross);
        if let ReplicaRep::Dense { rsb } = &self.rep {
            out.push(rsb.clone());
        }
        Ok(out)
    }

    /// Largest `|<f> - <P f P^dagger>|` over probe observables and every replica permutation,
    /// together with `max |P H P^dagger - H|`.
    fn swap_defect(&self, sample: &DisorderSample, state: &GibbsState, h: &ManyBodyOperator) -> Result<f64> {
        let d = self.realized.spin.local_dim();
        let observables = self.probe_observables(sample)?;
        let mut worst: f64 = 0.0;
        for perm in permutations(self.n_replicas).into_iter().skip(1) {
            let p = replica_permutation(self.n, d, &perm, self.realized.dim_cap)?;
            worst = worst.max(conjugate(&p, h)?.max_abs_diff(h)?);
            for f in &observables {
                let moved = conjugate(&p, f)?;
                worst = worst.max((state.expectation(f)? - state.expectation(&moved)?).abs());
            }
        }
        Ok(worst)
    }
}

/// All permutations of `0..n` in lexicographic order, identity first.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for rest in permutations(n - 1) {
            let mut p = vec![first];
            p.extend(rest.into_iter().map(|r| if r >= first { r + 1 } else { r }));
            out.push(p);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RsbPoint {
    pub n: usize,
    pub lambda: f64,
    pub n_replicas: usize,
    pub overlap_id: String,
    pub engine: ReplicaEngine,
    pub samples_used: usize,
    pub decomposition: VarianceDecomposition,
    pub additive: bool,
    /// Gibbs term over total, absent when the total vanishes.
    pub ratio: Option<Estimate>,
    pub swap_defect: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RsbReport {
    pub points: Vec<RsbPoint>,
    pub failures: Vec<SampleFailure>,
}

impl RsbReport {
    pub fn passed(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.additive && p.swap_defect.is_none_or(|d| d <= SWAP_TOL))
    }

    /// Gibbs-to-total ratios of the zero-field points, in size order.
    pub fn ratio_trend(&self) -> Vec<GgRatioPoint> {
        self.points
            .iter()
            .filter(|p| p.lambda == 0.0)
            .map(|p| GgRatioPoint {
                n: p.n,
                ratio: p.ratio,
                offset_from_two_thirds: p.ratio.map(|r| r.value - 2.0 / 3.0),
            })
            .collect()
    }
}

/// Per-size systems with their per-sample, per-field observations.
type Observed = Vec<(ReplicaSystem, Vec<Vec<ReplicaObservation>>)>;

fn observe(cfg: &StudyConfig, lambdas: &[f64]) -> Result<(Observed, Vec<SampleFailure>)> {
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for &n in &cfg.ensemble.sizes {
        let system = ReplicaSystem::new(cfg, n)?;
        let (obs, failed) = run_samples(n, cfg.ensemble.samples, |i| system.evaluate(i, lambdas))?;
        failures.extend(failed);
        out.push((system, obs));
    }
    Ok((out, failures))
}

fn column(obs: &[Vec<ReplicaObservation>], k: usize) -> Vec<ObservableMoments> {
    obs.iter().map(|row| row[k].moments).collect()
}

/// Gibbs and sample parts of the RSB-operator variance at every `(N, lambda)`.
pub fn chatterjee_decomposition(cfg: &StudyConfig) -> Result<RsbReport> {
    let lambdas = &cfg.study.lambdas;
    let (observed, failures) = observe(cfg, lambdas)?;
    let mut points = Vec::new();
    for (system, obs) in &observed {
        for (k, &lambda) in lambdas.iter().enumerate() {
            let moments = column(obs, k);
            let decomposition = VarianceDecomposition::from_moments(&moments);
            let swap_defect = obs.iter().filter_map(|row| row[k].swap_defect).reduce(f64::max);
            points.push(RsbPoint {
                n: system.n,
                lambda,
                n_replicas: system.n_replicas,
                overlap_id: system.overlap_id.clone(),
                engine: system.engine(),
                samples_used: obs.len(),
                additive: decomposition.additive(),
                decomposition,
                ratio: VarianceDecomposition::gibbs_fraction(&moments),
                swap_defect,
            });
        }
    }
    Ok(RsbReport { points, failures })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GgRatioPoint {
    pub n: usize,
    pub ratio: Option<Estimate>,
    /// `ratio - 2/3`.
    pub offset_from_two_thirds: Option<f64>,
}

/// Gibbs-to-total ratio of the bond overlap at zero field, per size, for classical
/// Gaussian Ising models. Reported as a trend; there is no finite-size threshold.
pub fn gg_ratio_trend(cfg: &StudyConfig) -> Result<Vec<GgRatioPoint>> {
    let rcfg = cfg.replica.clone().unwrap_or_default();
    if rcfg.support != OverlapSupport::Bonds {
        return Err(LabError::InvalidParameter(
            "replica.support: the ratio trend uses bond supports".into(),
        ));
    }
    if !matches!(
        cfg.model.coupling,
        crate::disorder::CouplingDistribution::Gaussian { .. }
    ) {
        return Err(LabError::InvalidParameter(
            "model.coupling: the ratio trend needs Gaussian couplings".into(),
        ));
    }
    let mut zero_field = cfg.clone();
    zero_field.study.lambdas = vec![0.0];
    let report = chatterjee_decomposition(&zero_field)?;
    if report.points.iter().any(|p| p.engine != ReplicaEngine::Classical) {
        return Err(LabError::NotDiagonal);
    }
    Ok(report.ratio_trend())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeSize {
    pub n: usize,
    pub at_zero: Estimate,
    /// Linear extrapolation to `lambda -> 0-` from the two smallest negative fields.
    pub left: Estimate,
    pub right: Estimate,
    /// `|left - at_zero|` with the standard error of the difference.
    pub gap_left: Estimate,
    pub gap_right: Estimate,
}

impl ProbeSize {
    /// `g(N)`: the larger one-sided gap.
    pub fn gap(&self) -> f64 {
        self.gap_left.value.max(self.gap_right.value)
    }
}

/// Linear extrapolation in `1/N` from the two largest sizes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitOrders {
    pub sizes: (usize, usize),
    /// Infinite volume first, then `lambda -> 0-` / `lambda -> 0+`.
    pub volume_first_left: Estimate,
    pub volume_first_right: Estimate,
    /// Field switched off first, then infinite volume.
    pub switch_off_first: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub sizes: Vec<ProbeSize>,
    pub orders: Option<LimitOrders>,
    pub overlap_id: String,
    pub n_replicas: usize,
    pub failures: Vec<SampleFailure>,
}

/// The two smallest positive fields, requiring each to appear with both signs.
fn probe_fields(grid: &[f64]) -> Result<(f64, f64)> {
    let bad = |m: &str| Err(LabError::InvalidParameter(format!("study.lambdas: {m}")));
    if !grid.contains(&0.0) {
        return bad("the probe needs the zero field");
    }
    let mut positive: Vec<f64> = grid.iter().copied().filter(|&l| l > 0.0).collect();
    positive.sort_by(f64::total_cmp);
    positive.dedup();
    if positive.len() < 2 {
        return bad("the probe needs two positive fields");
    }
    for &l in grid {
        if !grid.contains(&-l) {
            return bad("the probe grid must be symmetric about zero");
        }
    }
    Ok((positive[0], positive[1]))
}

/// `f(0)` from the line through `(x1, f1)` and `(x2, f2)`.
fn intercept(x1: f64, f1: f64, x2: f64, f2: f64) -> f64 {
    (x2 * f1 - x1 * f2) / (x2 - x1)
}

fn extrapolate_in_volume(n1: usize, a: &Estimate, n2: usize, b: &Estimate) -> Estimate {
    let (x1, x2) = (1.0 / n1 as f64, 1.0 / n2 as f64);
    let w1 = x2 / (x2 - x1);
    let w2 = -x1 / (x2 - x1);
    Estimate {
        value: w1 * a.value + w2 * b.value,
        se: ((w1 * a.se).powi(2) + (w2 * b.se).powi(2)).sqrt(),
    }
}

/// `E<R>` at zero field against its one-sided small-field limits, per size.
pub fn limit_commutativity_probe(cfg: &StudyConfig) -> Result<ProbeReport> {
    let (l1, l2) = probe_fields(&cfg.study.lambdas)?;
    let fields = [0.0, -l1, -l2, l1, l2];
    let (observed, failures) = observe(cfg, &fields)?;
    let mut sizes = Vec::new();
    for (system, obs) in &observed {
        let mean = |k: usize| -> Vec<f64> { obs.iter().map(|row| row[k].moments.mean).collect() };
        let (zero, m1, m2, p1, p2) = (mean(0), mean(1), mean(2), mean(3), mean(4));
        let left: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| intercept(-l1, *a, -l2, *b)).collect();
        let right: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| intercept(l1, *a, l2, *b)).collect();
        let gap = |side: &[f64]| {
            let diff: Vec<f64> = side.iter().zip(&zero).map(|(s, z)| s - z).collect();
            let e = Estimate::of_mean(&diff);
            Estimate {
                value: e.value.abs(),
                se: e.se,
            }
        };
        sizes.push(ProbeSize {
            n: system.n,
            at_zero: Estimate::of_mean(&zero),
            left: Estimate::of_mean(&left),
            right: Estimate::of_mean(&right),
            gap_left: gap(&left),
            gap_right: gap(&right),
        });
    }
    let orders = (sizes.len() >= 2).then(|| {
        let a = &sizes[sizes.len() - 2];
        let b = &sizes[sizes.len() - 1];
        LimitOrders {
            sizes: (a.n, b.n),
            volume_first_left: extrapolate_in_volume(a.n, &a.left, b.n, &b.left),
            volume_first_right: extrapolate_in_volume(a.n, &a.right, b.n, &b.right),
            switch_off_first: extrapolate_in_volume(a.n, &a.at_zero, b.n, &b.at_zero),
        }
    });
    let (overlap_id, n_replicas) = observed
        .first()
        .map(|(s, _)| (s.overlap_id.clone(), s.n_replicas))
        .unwrap_or_default();
    Ok(ProbeReport {
        sizes,
        orders,
        overlap_id,
        n_replicas,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::CouplingDistribution;
    use crate::gibbs::diagonalize;
    use crate::model::{all_pairs, ising_catalog};
    use crate::spin_algebra::{hermitian_eigenvalues, operator_norm};

    const HALF: SpinMagnitude = SpinMagnitude::HALF;

    fn config(family: &str, coupling: &str, sizes: &str, lambdas: &str, replica: &str) -> StudyConfig {
        StudyConfig::from_toml(&format!(
            r#"
[model]
family = "{family}"
coupling = {coupling}

[ensemble]
sizes = {sizes}
samples = 16
seed = 11

[study]
beta = 2.0
lambdas = {lambdas}

[replica]
{replica}
"#
        ))
        .unwrap()
    }

    const GAUSS: &str = r#"{ kind = "gaussian", mean = 0.0, std = 1.0 }"#;
    const ZERO: &str = r#"{ kind = "constant", value = 0.0 }"#;

    fn ising_sample(n: usize, seed: u64) -> (RealizedCatalog, DisorderSample) {
        let dist = CouplingDistribution::Gaussian { mean: 0.0, std: 1.0 };
        let cat = ising_catalog(&all_pairs(n), &dist, 1.0).unwrap();
        let realized = RealizedCatalog::new(&cat, HALF, &SiteSet::new(n)).unwrap();
        (realized, draw_sample(&cat, seed, 0))
    }

    #[test]
    fn replica_spectrum_is_pairwise_sums() {
        let (realized, sample) = ising_sample(3, 1);
        let single = realized.diagonal_energies(&sample).unwrap();
        let zero = ManyBodyOperator::zeros(6, 2).unwrap();
        let h = build_replica_hamiltonian(&realized, &sample, 2, 0.0, &zero).unwrap();
        let diag = h.real_diagonal().unwrap();
        for (s0, e0) in single.iter().enumerate() {
            for (s1, e1) in single.iter().enumerate() {
                assert!((diag[s0 * 8 + s1] - e0 - e1).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn replica_blocks_share_couplings() {
        let (realized, sample) = ising_sample(2, 4);
        let mut first = ManyBodyOperator::zeros(4, 2).unwrap();
        realized.add_hamiltonian(&mut first, &sample, 0).unwrap();
        let mut second = ManyBodyOperator::zeros(4, 2).unwrap();
        realized.add_hamiltonian(&mut second, &sample, 2).unwrap();
        let swap = replica_permutation(2, 2, &[1, 0], 4096).unwrap();
        assert!(conjugate(&swap, &first).unwrap().max_abs_diff(&second).unwrap() < 1e-15);
    }

    #[test]
    fn zero_field_replica_hamiltonian_is_swap_invariant() {
        let dist = CouplingDistribution::Gaussian { mean: 0.0, std: 1.0 };
        let sites = SiteSet::new(3);
        let cat = crate::model::heisenberg_catalog(&sites.nearest_neighbor_bonds(false), &dist).unwrap();
        let realized = RealizedCatalog::new(&cat, HALF, &sites).unwrap();
        let sample = draw_sample(&cat, 3, 0);
        let spec = OverlapSpec::single_sites(3, Axis::X);
        let rsb = rsb_perturbation(&spec, &sites, 2, HALF, 4096).unwrap();
        let h = build_replica_hamiltonian(&realized, &sample, 2, 0.0, &rsb).unwrap();
        let swap = replica_permutation(3, 2, &[1, 0], 4096).unwrap();
        assert!(conjugate(&swap, &h).unwrap().max_abs_diff(&h).unwrap() < 1e-14);
        assert!(conjugate(&swap, &rsb).unwrap().max_abs_diff(&rsb).unwrap() < 1e-14);
    }

    #[test]
    fn aligned_configurations_have_overlap_s_squared() {
        let spec = OverlapSpec::single_sites(2, Axis::Z);
        let r = overlap_operator(&spec, &SiteSet::new(2), 2, HALF, 4096).unwrap();
        let diag = r.real_diagonal().unwrap();
        // both replicas in the same product state
        for sigma in 0..4 {
            assert!((diag[sigma * 4 + sigma] - 0.25).abs() < 1e-15);
        }
        assert!((operator_norm(&r) - spec.overlap_bound(HALF)).abs() < 1e-12);
    }

    #[test]
    fn factorized_state_overlap_is_sum_of_squared_magnetizations() {
        // independent replicas in a site-dependent field
        let sites = SiteSet::new(2);
        let cat =
            crate::model::field_catalog(2, Axis::X, &CouplingDistribution::Uniform { lo: -1.0, hi: 1.0 }).unwrap();
        let realized = RealizedCatalog::new(&cat, HALF, &sites).unwrap();
        let sample = draw_sample(&cat, 9, 0);
        let spec = OverlapSpec::single_sites(2, Axis::X);
        let rsb = rsb_perturbation(&spec, &sites, 2, HALF, 4096).unwrap();
        let h = build_replica_hamiltonian(&realized, &sample, 2, 0.0, &rsb).unwrap();
        let state = GibbsState::from_hamiltonian(&h, 1.3).unwrap();
        let single = GibbsState::from_hamiltonian(&realized.hamiltonian(&sample).unwrap(), 1.3).unwrap();
        let sm = spin_matrices(HALF);
        let expected: f64 = (0..2)
            .map(|j| {
                let mut s = ManyBodyOperator::zeros(2, 2).unwrap();
                s.add_product(C64::new(1.0, 0.0), &[(j, sm.get(Axis::X))]).unwrap();
                single.expectation(&s).unwrap().powi(2)
            })
            .sum::<f64>()
            / 2.0;
        assert!((state.expectation(&rsb).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn rsb_polynomial_cases() {
        let sites = SiteSet::new(2);
        let mut spec = OverlapSpec::single_sites(2, Axis::Y);
        let r = overlap_operator(&spec, &sites, 2, HALF, 4096).unwrap();
        assert!(
            rsb_perturbation(&spec, &sites, 2, HALF, 4096)
                .unwrap()
                .max_abs_diff(&r)
                .unwrap()
                < 1e-15
        );

        spec.terms = vec![PowerTerm { power: 2, coeff: 1.0 }];
        let sq = rsb_perturbation(&spec, &sites, 2, HALF, 4096).unwrap();
        assert!(sq.max_abs_diff(&r.matmul(&r).unwrap()).unwrap() < 1e-15);
        assert!(hermitian_eigenvalues(sq.entries()).iter().all(|&e| e > -1e-14));

        spec.terms = vec![PowerTerm { power: 1, coeff: 0.0 }];
        assert_eq!(
            rsb_perturbation(&spec, &sites, 2, HALF, 4096).unwrap().max_abs_entry(),
            0.0
        );

        spec.terms = vec![PowerTerm { power: 1, coeff: -0.5 }, PowerTerm { power: 3, coeff: 2.0 }];
        let poly = rsb_perturbation(&spec, &sites, 2, HALF, 4096).unwrap();
        assert!(operator_norm(&poly) <= spec.rsb_bound(HALF) + 1e-12);
    }

    #[test]
    fn overlap_spec_rejects_bad_input() {
        let mut spec = OverlapSpec::single_sites(2, Axis::Z);
        spec.pair = (1, 1);
        assert!(spec.validate(2, 2).is_err());
        spec.pair = (0, 2);
        assert!(spec.validate(2, 2).is_err());
        spec.pair = (0, 1);
        spec.supports = vec![];
        assert!(spec.validate(2, 2).is_err());
        spec.supports = vec![vec![0, 0]];
        assert!(spec.validate(2, 2).is_err());
    }

    #[test]
    fn classical_replicas_match_dense_overlap() {
        let sites = SiteSet::new(3);
        let mut spec = OverlapSpec {
            axis: Axis::Z,
            supports: vec![vec![0, 1], vec![1, 2], vec![0, 2]],
            pair: (2, 0),
            terms: vec![PowerTerm { power: 1, coeff: 0.7 }, PowerTerm { power: 2, coeff: -1.1 }],
        };
        for n_replicas in [2, 3] {
            if n_replicas == 2 {
                spec.pair = (1, 0);
            } else {
                spec.pair = (2, 0);
            }
            let dense = rsb_perturbation(&spec, &sites, n_replicas, HALF, 1 << 12).unwrap();
            let classical = ClassicalReplicas::new(&spec, 3, n_replicas, HALF).unwrap();
            let diag = dense.real_diagonal().unwrap();
            let worst = diag
                .iter()
                .zip(&classical.rsb)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-14, "n = {n_replicas}: {worst}");
        }
    }

    #[test]
    fn permutations_are_complete() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        let mut sorted = p.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 6);
    }

    #[test]
    fn dense_replica_study_is_swap_invariant_and_additive() {
        let cfg = config("heisenberg_chain", GAUSS, "[2, 3]", "[0.0, 0.4]", "axis = \"x\"");
        let report = chatterjee_decomposition(&cfg).unwrap();
        assert!(report.passed(), "{report:#?}");
        let zero = report.points.iter().find(|p| p.lambda == 0.0).unwrap();
        assert_eq!(zero.engine, ReplicaEngine::Dense);
        assert!(zero.swap_defect.unwrap() <= SWAP_TOL);
    }

    #[test]
    fn three_dense_replicas_are_permutation_invariant() {
        let mut cfg = config(
            "heisenberg_chain",
            GAUSS,
            "[2]",
            "[0.0]",
            "n_replicas = 3\npair = [1, 2]",
        );
        cfg.ensemble.samples = 3;
        let report = chatterjee_decomposition(&cfg).unwrap();
        assert!(report.points[0].swap_defect.unwrap() <= SWAP_TOL);
    }

    #[test]
    fn classical_and_dense_replica_paths_agree() {
        let mut cfg = config("sk", GAUSS, "[2, 3]", "[0.0, 0.5]", "support = \"bonds\"");
        let classical = chatterjee_decomposition(&cfg).unwrap();
        cfg.model.engine = crate::config::EngineChoice::Dense;
        let dense = chatterjee_decomposition(&cfg).unwrap();
        for (a, b) in classical.points.iter().zip(&dense.points) {
            assert_eq!(a.engine, ReplicaEngine::Classical);
            assert_eq!(b.engine, ReplicaEngine::Dense);
            assert!((a.decomposition.mean.value - b.decomposition.mean.value).abs() < 1e-10);
            assert!((a.decomposition.total.value - b.decomposition.total.value).abs() < 1e-10);
        }
    }

    #[test]
    fn frozen_zero_disorder_gives_vanishing_terms() {
        // uniform ferromagnet in a strong field: one ground state, no disorder
        let mut cfg = config(
            "independent_sites",
            r#"{ kind = "constant", value = -3.0 }"#,
            "[2, 3]",
            "[0.0]",
            "",
        );
        cfg.study.beta = 40.0;
        let report = chatterjee_decomposition(&cfg).unwrap();
        for p in &report.points {
            assert!(p.decomposition.total.value < 1e-20);
            assert!(p.decomposition.gibbs.value < 1e-20);
            assert_eq!(p.decomposition.sample.value, 0.0);
            assert!(p.ratio.is_none());
        }
    }

    #[test]
    fn identity_rsb_operator_has_no_variance() {
        let mut cfg = config(
            "sk",
            GAUSS,
            "[2, 3]",
            "[0.0, 0.5]",
            "terms = [{ power = 1, coeff = 0.0 }]",
        );
        // zero polynomial, then shift by a constant through the classical table
        cfg.ensemble.samples = 4;
        let system = ReplicaSystem::new(&cfg, 3).unwrap();
        let ReplicaRep::Classical(mut c) = system.rep.clone() else {
            panic!()
        };
        c.rsb.iter_mut().for_each(|r| *r += 1.0);
        let state = ClassicalGibbs::from_energies(&vec![0.3; c.rsb.len()], 2.0, 3).unwrap();
        let m = state.moments(&c.rsb).unwrap();
        assert!((m.mean - 1.0).abs() < 1e-14);
        assert!(m.gibbs_variance().abs() < 1e-14);
    }

    #[test]
    fn sk_overlap_variance_is_positive_at_low_temperature() {
        let cfg = config("sk", GAUSS, "[6]", "[0.0]", "");
        let report = chatterjee_decomposition(&cfg).unwrap();
        let p = &report.points[0];
        assert!(p.decomposition.total.value > 0.0);
        assert!(p.additive);
    }

    #[test]
    fn gg_ratio_needs_bond_supports_and_lies_in_unit_interval() {
        let cfg = config("sk", GAUSS, "[4, 6]", "[0.0]", "");
        assert!(gg_ratio_trend(&cfg).is_err());
        let cfg = config("sk", GAUSS, "[4, 6]", "[0.0]", "support = \"bonds\"");
        let trend = gg_ratio_trend(&cfg).unwrap();
        for p in &trend {
            let r = p.ratio.unwrap().value;
            assert!((0.0..=1.0).contains(&r), "{r}");
        }
    }

    #[test]
    fn free_replicas_have_no_gap() {
        let cfg = config(
            "independent_sites",
            ZERO,
            "[2, 4, 6]",
            "[-0.002, -0.001, 0.0, 0.001, 0.002]",
            "",
        );
        let report = limit_commutativity_probe(&cfg).unwrap();
        for s in &report.sizes {
            assert!(s.gap() < 1e-8, "{s:?}");
            assert!(s.at_zero.value.abs() < 1e-15);
        }
        let orders = report.orders.unwrap();
        assert!(orders.volume_first_left.value.abs() < 1e-8);
        assert!(orders.switch_off_first.value.abs() < 1e-15);
    }

    #[test]
    fn probe_needs_symmetric_grid_with_zero() {
        assert!(probe_fields(&[0.1, 0.2, -0.1, -0.2]).is_err());
        assert!(probe_fields(&[0.0, 0.1, 0.2, -0.1]).is_err());
        assert!(probe_fields(&[0.0, 0.1, -0.1]).is_err());
        assert_eq!(probe_fields(&[0.0, 0.3, 0.1, -0.1, -0.3]).unwrap(), (0.1, 0.3));
    }

    #[test]
    fn eigen_decomposition_of_replicas_is_hermitian() {
        let (realized, sample) = ising_sample(2, 2);
        let spec = OverlapSpec::single_sites(2, Axis::X);
        let rsb = rsb_perturbation(&spec, &SiteSet::new(2), 2, HALF, 4096).unwrap();
        let h = build_replica_hamiltonian(&realized, &sample, 2, 0.7, &rsb).unwrap();
        assert!(h.is_hermitian());
        assert_eq!(diagonalize(&h).unwrap().dim(), 16);
    }
}
