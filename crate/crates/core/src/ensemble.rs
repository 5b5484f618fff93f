//! Disorder ensembles over a ladder of system sizes.
//!
//! Each size gets its own seed stream, samples are evaluated in parallel and
//! collected in sample-index order, so every estimate is a deterministic function
//! of the config and the master seed.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EngineChoice, StudyConfig};
use crate::disorder::{draw_sample, sub_seed, variance_budget, DisorderSample, VarianceBudget};
use crate::error::{LabError, Result};
use crate::gibbs::{ClassicalGibbs, GibbsState, ObservableMoments};
use crate::model::{assumption2_norm, build_order_operator, RealizedCatalog};
use crate::spin_algebra::{checked_dim, ManyBodyOperator};
use crate::stats::{log_log_fit, Estimate, VarianceDecomposition};

/// Largest size the classical engine will enumerate.
pub const CLASSICAL_DIM_CAP: usize = 1 << 24;

/// Fitted log-log slope at or below which a variance counts as decaying.
pub const SLOPE_THRESHOLD: f64 = -0.3;

/// Largest fraction of failed samples a size point tolerates.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Dense,
    Classical,
}

#[derive(Clone, Debug)]
enum OrderRep {
    Dense(ManyBodyOperator),
    Classical(Vec<f64>),
}

/// Everything needed to evaluate samples at one system size.
#[derive(Clone, Debug)]
pub struct SizeModel {
    pub n: usize,
    pub beta: f64,
    pub realized: RealizedCatalog,
    pub budget: VarianceBudget,
    /// Seed stream of this size, derived from the master seed.
    pub seed: u64,
    catalog: crate::disorder::InteractionCatalog,
    order: OrderRep,
}

/// Free-energy density and order-operator moments of one sample at one field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointObservation {
    pub psi: f64,
    pub moments: ObservableMoments,
}

impl SizeModel {
    pub fn new(cfg: &StudyConfig, n: usize) -> Result<Self> {
        let spin = cfg.spin()?;
        let sites = cfg.sites(n)?;
        let catalog = cfg.catalog(n)?;
        let realized = RealizedCatalog::new(&catalog, spin, &sites)?.with_dim_cap(cfg.model.dim_cap);
        let budget = variance_budget(&catalog, n);
        let order_spec = cfg.order_spec(n)?;
        let diagonal_order = if realized.is_diagonal() {
            order_spec.diagonal(&sites, spin)?
        } else {
            None
        };
        let order = match (cfg.model.engine, diagonal_order) {
            (EngineChoice::Auto | EngineChoice::Classical, Some(diag)) => {
                checked_dim(spin.local_dim(), n, CLASSICAL_DIM_CAP)?;
                OrderRep::Classical(diag)
            }
            (EngineChoice::Classical, None) => return Err(LabError::NotDiagonal),
            _ => {
                checked_dim(spin.local_dim(), n, cfg.model.dim_cap)?;
                OrderRep::Dense(build_order_operator(&order_spec, &sites, spin)?)
            }
        };
        Ok(Self {
            n,
            beta: cfg.study.beta,
            realized,
            budget,
            seed: sub_seed(cfg.ensemble.seed, n as u64),
            catalog,
            order,
        })
    }

    pub fn engine(&self) -> Engine {
        match self.order {
            OrderRep::Dense(_) => Engine::Dense,
            OrderRep::Classical(_) => Engine::Classical,
        }
    }

    pub fn sample(&self, index: u64) -> DisorderSample {
        draw_sample(&self.catalog, self.seed, index)
    }

    /// `2 beta^2 C_phi^2 sigma^2 / N`.
    pub fn lemma1_bound(&self) -> f64 {
        let c = self.realized.c_phi();
        2.0 * self.beta * self.beta * c * c * self.budget.sigma_squared / self.n as f64
    }

    /// Observations of sample `index` at each field in `lambdas`.
    pub fn evaluate(&self, index: u64, lambdas: &[f64]) -> Result<Vec<PointObservation>> {
        let sample = self.sample(index);
        let scale = self.n as f64;
        match &self.order {
            OrderRep::Classical(o) => {
                let energies = self.realized.diagonal_energies(&sample)?;
                lambdas
                    .iter()
                    .map(|&lambda| {
                        let shifted: Vec<f64> = energies.iter().zip(o).map(|(e, x)| e - scale * lambda * x).collect();
                        let state = ClassicalGibbs::from_energies(&shifted, self.beta, self.n)?;
                        Ok(PointObservation {
                            psi: state.psi(),
                            moments: state.moments(o)?,
                        })
                    })
                    .collect()
            }
            OrderRep::Dense(o) => {
                let h0 = self.realized.hamiltonian(&sample)?;
                lambdas
                    .iter()
                    .map(|&lambda| {
                        let h = h0.add_scaled(-scale * lambda, o)?;
                        let state = GibbsState::from_hamiltonian(&h, self.beta)?;
                        Ok(PointObservation {
                            psi: state.psi(),
                            moments: state.moments(o)?,
                        })
                    })
                    .collect()
            }
        }
    }

    /// `|| [O, [H, O]] ||` for the unperturbed Hamiltonian of sample `index`.
    pub fn assumption2(&self, index: u64) -> Result<f64> {
        match &self.order {
            // diagonal H and O commute
            OrderRep::Classical(_) => Ok(0.0),
            OrderRep::Dense(o) => assumption2_norm(&self.realized.hamiltonian(&self.sample(index))?, o),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleFailure {
    pub n: usize,
    pub sample: u64,
    pub message: String,
}

/// Runs `work` for every sample index, in parallel, keeping index order.
///
/// Failed samples are dropped and reported; more than 1% failures aborts.
pub fn run_samples<T, F>(n: usize, samples: usize, work: F) -> Result<(Vec<T>, Vec<SampleFailure>)>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..samples as u64).into_par_iter().map(&work).collect();
    let mut ok = Vec::with_capacity(samples);
    let mut failures = Vec::new();
    for (index, result) in results.into_iter().enumerate() {
        match result {
            Ok(value) => ok.push(value),
            Err(err) => failures.push(SampleFailure {
                n,
                sample: index as u64,
                message: LabError::SampleFailed {
                    n_sites: n,
                    sample: index as u64,
                    source: Box::new(err),
                }
                .to_string(),
            }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * samples as f64 || ok.len() < 2 {
        return Err(LabError::TooManyFailures {
            n_sites: n,
            failed: failures.len(),
            total: samples,
        });
    }
    Ok((ok, failures))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormStats {
    pub mean: f64,
    pub max: f64,
    pub se: f64,
}

impl NormStats {
    pub fn from_values(values: &[f64]) -> Self {
        let est = Estimate::of_mean(values);
        Self {
            mean: est.value,
            max: values.iter().copied().fold(0.0, f64::max),
            se: est.se,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizePointReport {
    pub n: usize,
    pub lambda: f64,
    pub beta: f64,
    pub samples_used: usize,
    pub engine: Engine,
    pub mean_psi: Estimate,
    pub var_psi: Estimate,
    /// Largest exact term norm of the built catalog.
    pub c_phi: f64,
    pub sigma_squared: f64,
    pub lemma1_bound: f64,
    /// `var_psi <= lemma1_bound + 4 SE`.
    pub bound_held: bool,
    pub order: VarianceDecomposition,
    pub assumption2: Option<NormStats>,
}

fn size_point(model: &SizeModel, lambda: f64, observations: &[PointObservation]) -> SizePointReport {
    let psi: Vec<f64> = observations.iter().map(|o| o.psi).collect();
    let moments: Vec<ObservableMoments> = observations.iter().map(|o| o.moments).collect();
    let var_psi = Estimate::of_variance(&psi);
    let bound = model.lemma1_bound();
    SizePointReport {
        n: model.n,
        lambda,
        beta: model.beta,
        samples_used: observations.len(),
        engine: model.engine(),
        mean_psi: Estimate::of_mean(&psi),
        var_psi,
        c_phi: model.realized.c_phi(),
        sigma_squared: model.budget.sigma_squared,
        lemma1_bound: bound,
        bound_held: var_psi.value <= bound + 4.0 * var_psi.se + 1e-15,
        order: VarianceDecomposition::from_moments(&moments),
        assumption2: None,
    }
}

/// Per-sample observations at every `(N, lambda)` of the config.
fn observe(cfg: &StudyConfig, lambdas: &[f64]) -> Result<(Vec<SizePointReport>, Vec<SampleFailure>)> {
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for &n in &cfg.ensemble.sizes {
        let model = SizeModel::new(cfg, n)?;
        let (obs, failed) = run_samples(n, cfg.ensemble.samples, |i| model.evaluate(i, lambdas))?;
        failures.extend(failed);
        for (k, &lambda) in lambdas.iter().enumerate() {
            let column: Vec<PointObservation> = obs.iter().map(|row| row[k]).collect();
            points.push(size_point(&model, lambda, &column));
        }
    }
    Ok((points, failures))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub points: Vec<SizePointReport>,
    pub failures: Vec<SampleFailure>,
}

impl ConcentrationReport {
    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.bound_held)
    }
}

/// Sample variance of the free-energy density against its analytic bound.
pub fn run_concentration_study(cfg: &StudyConfig) -> Result<ConcentrationReport> {
    let (points, failures) = observe(cfg, &cfg.study.lambdas)?;
    Ok(ConcentrationReport { points, failures })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendVerdict {
    pub quantity: String,
    pub lambda: f64,
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
    pub note: String,
}

/// Log-log slope of a positive quantity against N, judged against [`SLOPE_THRESHOLD`].
pub fn trend_verdict(quantity: &str, lambda: f64, sizes: &[usize], values: &[Estimate]) -> TrendVerdict {
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = values.iter().map(|e| e.value).collect();
    let ses: Vec<f64> = values.iter().map(|e| e.se).collect();
    let policy = "slope threshold is a finite-size policy, not a proven rate";
    if ys.iter().all(|y| y.abs() <= 1e-14) {
        return TrendVerdict {
            quantity: quantity.into(),
            lambda,
            slope: None,
            slope_se: None,
            threshold: SLOPE_THRESHOLD,
            pass: true,
            note: "vanishes at every size".into(),
        };
    }
    match log_log_fit(&xs, &ys, &ses) {
        Some(fit) => TrendVerdict {
            quantity: quantity.into(),
            lambda,
            slope: Some(fit.slope),
            slope_se: Some(fit.slope_se),
            threshold: SLOPE_THRESHOLD,
            pass: fit.slope <= SLOPE_THRESHOLD,
            note: policy.into(),
        },
        None => TrendVerdict {
            quantity: quantity.into(),
            lambda,
            slope: None,
            slope_se: None,
            threshold: SLOPE_THRESHOLD,
            pass: false,
            note: "no fit: needs two sizes with positive values".into(),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoremReport {
    pub points: Vec<SizePointReport>,
    pub verdicts: Vec<TrendVerdict>,
    pub failures: Vec<SampleFailure>,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass) && self.points.iter().all(|p| p.order.additive())
    }
}

/// Total variance of the order operator per `(N, lambda)` and its decay with N.
pub fn run_theorem_study(cfg: &StudyConfig) -> Result<TheoremReport> {
    if cfg.study.lambdas.contains(&0.0) {
        return Err(LabError::InvalidParameter(
            "study.lambdas: the variance-decay study needs nonzero fields".into(),
        ));
    }
    let (points, failures) = observe(cfg, &cfg.study.lambdas)?;
    let verdicts = cfg
        .study
        .lambdas
        .iter()
        .map(|&lambda| {
            let at: Vec<&SizePointReport> = points.iter().filter(|p| p.lambda == lambda).collect();
            let sizes: Vec<usize> = at.iter().map(|p| p.n).collect();
            let totals: Vec<Estimate> = at.iter().map(|p| p.order.total).collect();
            trend_verdict("order_total_variance", lambda, &sizes, &totals)
        })
        .collect();
    Ok(TheoremReport {
        points,
        verdicts,
        failures,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub n: usize,
    pub lambda: f64,
    pub mean_order: Estimate,
    pub mean_psi: Estimate,
    /// Central difference of `E<O>` in lambda.
    pub order_slope_fd: Estimate,
    /// `N beta E(O; O)`.
    pub order_slope_duhamel: Estimate,
    /// Central difference of `E psi` in lambda.
    pub psi_slope_fd: Estimate,
    /// `beta E<O>`.
    pub psi_slope_expected: f64,
    pub response_rel_err: f64,
    pub psi_rel_err: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepShape {
    pub n: usize,
    /// Smallest change of the divided-difference slope of `psi` across the grid,
    /// over samples and the ensemble mean.
    pub min_psi_curvature: f64,
    /// Most negative step of `<O>` along the sorted grid, over samples.
    pub min_order_step: f64,
    pub convex: bool,
    pub monotone: bool,
}

/// Both sides of the standard-deviation bound at one size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GktRow {
    pub n: usize,
    /// `E sqrt(<O^2>)` at zero field.
    pub root_second_moment: Estimate,
    /// Smallest positive field on the grid.
    pub lambda: f64,
    /// `E<O>` at that field.
    pub order: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub shapes: Vec<SweepShape>,
    pub gkt: Vec<GktRow>,
    pub failures: Vec<SampleFailure>,
}

/// Tolerance of the derivative identities in the sweep.
pub const SWEEP_REL_TOL: f64 = 1e-3;
const CONVEXITY_TOL: f64 = 1e-9;
const MONOTONE_TOL: f64 = 1e-10;

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.ok) && self.shapes.iter().all(|s| s.convex && s.monotone)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-12 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Smallest increment of the divided-difference slopes of `ys` on `xs`.
fn min_curvature(xs: &[f64], ys: &[f64]) -> f64 {
    let slopes: Vec<f64> = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
        .collect();
    slopes.windows(2).map(|s| s[1] - s[0]).fold(f64::INFINITY, f64::min)
}

fn min_step(ys: &[f64]) -> f64 {
    ys.windows(2).map(|y| y[1] - y[0]).fold(f64::INFINITY, f64::min)
}

/// `E<O>`, `E psi` and their lambda-derivatives along the grid.
pub fn run_lambda_sweep(cfg: &StudyConfig) -> Result<SweepReport> {
    let mut grid = cfg.study.lambdas.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let h = cfg.study.fd_step;
    let beta = cfg.study.beta;
    // centre, then lambda - h, then lambda + h for every grid point
    let mut fields = grid.clone();
    fields.extend(grid.iter().map(|l| l - h));
    fields.extend(grid.iter().map(|l| l + h));
    let k = grid.len();

    let mut points = Vec::new();
    let mut shapes = Vec::new();
    let mut gkt = Vec::new();
    let mut failures = Vec::new();
    for &n in &cfg.ensemble.sizes {
        let model = SizeModel::new(cfg, n)?;
        let (obs, failed) = run_samples(n, cfg.ensemble.samples, |i| model.evaluate(i, &fields))?;
        failures.extend(failed);
        let column =
            |j: usize, f: &dyn Fn(&PointObservation) -> f64| -> Vec<f64> { obs.iter().map(|row| f(&row[j])).collect() };
        let mut mean_psi_curve = Vec::with_capacity(k);
        for (j, &lambda) in grid.iter().enumerate() {
            let order = column(j, &|o| o.moments.mean);
            let psi = column(j, &|o| o.psi);
            let lo_order = column(k + j, &|o| o.moments.mean);
            let hi_order = column(2 * k + j, &|o| o.moments.mean);
            let lo_psi = column(k + j, &|o| o.psi);
            let hi_psi = column(2 * k + j, &|o| o.psi);
            let order_fd: Vec<f64> = hi_order
                .iter()
                .zip(&lo_order)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            let psi_fd: Vec<f64> = hi_psi.iter().zip(&lo_psi).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let duhamel: Vec<f64> = column(j, &|o| n as f64 * beta * o.moments.truncated_duhamel());
            let mean_order = Estimate::of_mean(&order);
            let order_slope_fd = Estimate::of_mean(&order_fd);
            let order_slope_duhamel = Estimate::of_mean(&duhamel);
            let psi_slope_fd = Estimate::of_mean(&psi_fd);
            let psi_slope_expected = beta * mean_order.value;
            let response_rel_err = rel_err(order_slope_fd.value, order_slope_duhamel.value);
            let psi_rel_err = rel_err(psi_slope_fd.value, psi_slope_expected);
            let mean_psi = Estimate::of_mean(&psi);
            mean_psi_curve.push(mean_psi.value);
            points.push(SweepPoint {
                n,
                lambda,
                mean_order,
                mean_psi,
                order_slope_fd,
                order_slope_duhamel,
                psi_slope_fd,
                psi_slope_expected,
                response_rel_err,
                psi_rel_err,
                ok: response_rel_err <= SWEEP_REL_TOL && psi_rel_err <= SWEEP_REL_TOL,
            });
        }
        let mut min_psi_curvature = min_curvature(&grid, &mean_psi_curve);
        let mut min_order_step = f64::INFINITY;
        for row in &obs {
            let psi: Vec<f64> = row[..k].iter().map(|o| o.psi).collect();
            let order: Vec<f64> = row[..k].iter().map(|o| o.moments.mean).collect();
            min_psi_curvature = min_psi_curvature.min(min_curvature(&grid, &psi));
            min_order_step = min_order_step.min(min_step(&order));
        }
        shapes.push(SweepShape {
            n,
            min_psi_curvature,
            min_order_step,
            convex: !(min_psi_curvature < -CONVEXITY_TOL),
            monotone: !(min_order_step < -MONOTONE_TOL),
        });
        if let (Some(zero), Some(pos)) = (grid.iter().position(|&l| l == 0.0), grid.iter().position(|&l| l > 0.0)) {
            let root: Vec<f64> = column(zero, &|o| o.moments.second.max(0.0).sqrt());
            gkt.push(GktRow {
                n,
                root_second_moment: Estimate::of_mean(&root),
                lambda: grid[pos],
                order: Estimate::of_mean(&column(pos, &|o| o.moments.mean)),
            });
        }
    }
    Ok(SweepReport {
        points,
        shapes,
        gkt,
        failures,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionPoint {
    pub n: usize,
    pub engine: Engine,
    /// `|| [O, [H, O]] ||` over samples.
    pub commutator_norm: NormStats,
    /// `N * max_sample || [O, [H, O]] ||`, bounded when the norm is `O(1/N)`.
    pub scaled_max: f64,
    /// `(lambda, p_N)` for every grid field.
    pub mean_psi: Vec<(f64, Estimate)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsiIncrement {
    pub n_from: usize,
    pub n_to: usize,
    pub lambda: f64,
    /// `|p_{N'} - p_N|` for consecutive ladder sizes.
    pub increment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub points: Vec<AssumptionPoint>,
    pub increments: Vec<PsiIncrement>,
    pub failures: Vec<SampleFailure>,
}

/// Double-commutator norms and the convergence of the mean free-energy density.
pub fn run_assumption_diagnostics(cfg: &StudyConfig) -> Result<AssumptionReport> {
    let lambdas = &cfg.study.lambdas;
    let mut points: Vec<AssumptionPoint> = Vec::new();
    let mut failures = Vec::new();
    for &n in &cfg.ensemble.sizes {
        let model = SizeModel::new(cfg, n)?;
        let (obs, failed) = run_samples(n, cfg.ensemble.samples, |i| {
            Ok((model.assumption2(i)?, model.evaluate(i, lambdas)?))
        })?;
        failures.extend(failed);
        let norms: Vec<f64> = obs.iter().map(|(a, _)| *a).collect();
        let stats = NormStats::from_values(&norms);
        let mean_psi = lambdas
            .iter()
            .enumerate()
            .map(|(k, &lambda)| {
                let psi: Vec<f64> = obs.iter().map(|(_, row)| row[k].psi).collect();
                (lambda, Estimate::of_mean(&psi))
            })
            .collect();
        points.push(AssumptionPoint {
            n,
            engine: model.engine(),
            commutator_norm: stats,
            scaled_max: n as f64 * stats.max,
            mean_psi,
        });
    }
    let mut increments = Vec::new();
    for pair in points.windows(2) {
        for (a, b) in pair[0].mean_psi.iter().zip(&pair[1].mean_psi) {
            increments.push(PsiIncrement {
                n_from: pair[0].n,
                n_to: pair[1].n,
                lambda: a.0,
                increment: (b.1.value - a.1.value).abs(),
            });
        }
    }
    Ok(AssumptionReport {
        points,
        increments,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(family: &str, coupling: &str, sizes: &str, lambdas: &str, extra: &str) -> StudyConfig {
        StudyConfig::from_toml(&format!(
            r#"
[model]
family = "{family}"
coupling = {coupling}
{extra}

[ensemble]
sizes = {sizes}
samples = 12
seed = 5

[study]
beta = 1.0
lambdas = {lambdas}
"#
        ))
        .unwrap()
    }

    const GAUSS: &str = r#"{ kind = "gaussian", mean = 0.0, std = 1.0 }"#;
    const ZERO: &str = r#"{ kind = "constant", value = 0.0 }"#;

    /// `<S^z>` of one spin-1/2 in `-lambda S^z`.
    fn free_spin_magnetization(beta: f64, lambda: f64) -> f64 {
        0.5 * (0.5 * beta * lambda).tanh()
    }

    #[test]
    fn constant_couplings_have_no_psi_variance() {
        let cfg = config(
            "heisenberg_chain",
            r#"{ kind = "constant", value = 1.0 }"#,
            "[2, 3, 4]",
            "[0.3]",
            "",
        );
        let report = run_concentration_study(&cfg).unwrap();
        for p in &report.points {
            assert_eq!(p.var_psi.value, 0.0);
            assert_eq!(p.lemma1_bound, 0.0);
            assert!(p.bound_held);
        }
    }

    #[test]
    fn bound_scales_with_beta_squared() {
        let mut cfg = config("heisenberg_chain", GAUSS, "[2, 4]", "[0.3]", "");
        let one = SizeModel::new(&cfg, 4).unwrap().lemma1_bound();
        cfg.study.beta = 2.0;
        let two = SizeModel::new(&cfg, 4).unwrap().lemma1_bound();
        assert!((two / one - 4.0).abs() < 1e-12);
        // exchange norm 3/4, three bonds of unit variance on four sites
        assert!((one - 2.0 * 0.5625 * 0.75 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn free_spins_have_exact_one_over_n_variance() {
        let cfg = config("independent_sites", ZERO, "[2, 3, 5, 8]", "[0.5]", "");
        let report = run_theorem_study(&cfg).unwrap();
        let m = free_spin_magnetization(1.0, 0.5);
        for p in &report.points {
            let exact = (0.25 - m * m) / p.n as f64;
            assert!((p.order.total.value - exact).abs() < 1e-14);
            assert_eq!(p.order.sample.value, 0.0);
            assert_eq!(p.engine, Engine::Classical);
        }
        let v = &report.verdicts[0];
        assert!((v.slope.unwrap() + 1.0).abs() < 1e-10);
        assert!(report.passed());
    }

    #[test]
    fn identity_order_has_no_variance() {
        let cfg = config("heisenberg_chain", GAUSS, "[2, 3]", "[0.5]", "[order]\n");
        let mut cfg = cfg;
        cfg.order.shape = crate::config::OrderShape::Identity;
        let report = run_theorem_study(&cfg).unwrap();
        for p in &report.points {
            assert!(p.order.total.value.abs() < 1e-14);
        }
        assert!(report.verdicts[0].pass);
        assert!(report.verdicts[0].slope.is_none());
    }

    #[test]
    fn theorem_study_rejects_zero_field() {
        let cfg = config("heisenberg_chain", GAUSS, "[2, 3]", "[0.0, 0.5]", "");
        assert!(run_theorem_study(&cfg).is_err());
    }

    #[test]
    fn sweep_matches_free_spin_closed_form() {
        let cfg = config("independent_sites", ZERO, "[2, 4]", "[-0.5, -0.1, 0.0, 0.2, 0.7]", "");
        let report = run_lambda_sweep(&cfg).unwrap();
        assert!(report.passed());
        for p in &report.points {
            let m = free_spin_magnetization(1.0, p.lambda);
            assert!((p.mean_order.value - m).abs() < 1e-8);
            let psi = (2.0 * (0.5 * p.lambda).cosh()).ln();
            assert!((p.mean_psi.value - psi).abs() < 1e-8);
        }
        assert_eq!(report.gkt.len(), 2);
        assert!((report.gkt[0].root_second_moment.value - 0.5 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sweep_identities_hold_for_disordered_chain() {
        let cfg = config("heisenberg_chain", GAUSS, "[3, 4]", "[-0.4, -0.2, 0.2, 0.4]", "");
        let report = run_lambda_sweep(&cfg).unwrap();
        assert!(report.passed(), "{report:#?}");
        // spin flip maps J to J and lambda to -lambda
        let at = |l: f64| report.points.iter().find(|p| p.n == 4 && p.lambda == l).unwrap();
        assert!((at(0.4).mean_order.value + at(-0.4).mean_order.value).abs() < 1e-12);
    }

    #[test]
    fn ising_commutator_norms_vanish() {
        let cfg = config("ising_chain", GAUSS, "[2, 4]", "[0.5]", "");
        let report = run_assumption_diagnostics(&cfg).unwrap();
        for p in &report.points {
            assert_eq!(p.commutator_norm.max, 0.0);
        }
    }

    #[test]
    fn free_spins_have_constant_pressure() {
        let cfg = config("independent_sites", ZERO, "[2, 3, 4]", "[0.0]", "");
        let report = run_assumption_diagnostics(&cfg).unwrap();
        for p in &report.points {
            assert!((p.mean_psi[0].1.value - 2f64.ln()).abs() < 1e-14);
        }
        assert!(report.increments.iter().all(|i| i.increment < 1e-14));
    }

    #[test]
    fn staggered_density_double_commutator_is_order_one_over_n() {
        let cfg = config("heisenberg_chain", GAUSS, "[2, 4, 6, 8]", "[0.5]", "[order]\n");
        let mut cfg = cfg;
        cfg.order.shape = crate::config::OrderShape::Staggered;
        cfg.ensemble.samples = 4;
        let report = run_assumption_diagnostics(&cfg).unwrap();
        let scaled: Vec<f64> = report.points.iter().map(|p| p.scaled_max).collect();
        assert!(scaled.iter().all(|&s| s > 0.0 && s < 10.0), "{scaled:?}");
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let cfg = config("heisenberg_chain", GAUSS, "[2, 4]", "[0.3]", "");
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_concentration_study(&cfg).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn dense_and_classical_engines_agree() {
        let mut cfg = config("ising_chain", GAUSS, "[2, 3, 5]", "[0.2, 0.6]", "");
        let classical = run_theorem_study(&cfg).unwrap();
        cfg.model.engine = EngineChoice::Dense;
        let dense = run_theorem_study(&cfg).unwrap();
        for (a, b) in classical.points.iter().zip(&dense.points) {
            assert_eq!(a.engine, Engine::Classical);
            assert_eq!(b.engine, Engine::Dense);
            assert!((a.mean_psi.value - b.mean_psi.value).abs() < 1e-10);
            assert!((a.order.total.value - b.order.total.value).abs() < 1e-10);
        }
    }
}
