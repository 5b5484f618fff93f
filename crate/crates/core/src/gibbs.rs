//! Spectral decomposition and everything computed from it: partition functions,
//! Gibbs expectations, Duhamel products and the Harris sandwich. A separate
//! classical path handles Hamiltonians that are diagonal in the computational basis.
//!
//! Duhamel normalization: with `Z(x) = Tr exp(beta (-H + x1 O1 + x2 O2))`,
//!
//! ```text
//! beta^2 (O1, O2) = (1/Z) d^2 Z / dx1 dx2
//!                 = beta^2 sum_{m,n} (O1)_mn (O2)_nm K(E_m, E_n)
//! K(E_m, E_n)     = (w_m - w_n) / (beta (E_n - E_m)),   K(E, E) = w
//! ```
//!
//! in the eigenbasis, with `w` the normalized Boltzmann weights. The kernel is a
//! divided difference of the exponential and is evaluated as
//! `w_lo * (1 - exp(-x)) / x` with `x = beta (E_hi - E_lo) >= 0`.

use nalgebra::DVector;

use crate::error::{LabError, Result};
use crate::spin_algebra::{commutator, CMatrix, ManyBodyOperator, C64};

/// Relative threshold below which two levels use the coincident-energy kernel.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

/// Imaginary parts below `REALITY_TOL * scale` are discarded.
pub const REALITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|e| e.abs()).fold(0.0, f64::max)
    }

    /// `V^dagger o V`.
    pub fn to_eigenbasis(&self, o: &CMatrix) -> Result<CMatrix> {
        if o.nrows() != self.dim() || o.ncols() != self.dim() {
            return Err(LabError::DimensionMismatch(format!(
                "{}x{} operator against a {}-dimensional spectrum",
                o.nrows(),
                o.ncols(),
                self.dim()
            )));
        }
        let real = |m: &CMatrix| m.iter().all(|z| z.im == 0.0);
        if real(o) && real(&self.eigenvectors) {
            let v = self.eigenvectors.map(|z| z.re);
            let product = v.transpose() * o.map(|z| z.re) * &v;
            return Ok(product.map(|x| C64::new(x, 0.0)));
        }
        Ok(self.eigenvectors.adjoint() * o * &self.eigenvectors)
    }
}

/// Eigenvalues ascending; each eigenvector's first largest-magnitude entry is made real positive.
pub fn diagonalize(h: &ManyBodyOperator) -> Result<SpectralDecomposition> {
    if !h.is_hermitian() {
        return Err(LabError::NonHermitian(h.hermiticity_defect()));
    }
    let entries = h.entries();
    // real symmetric input (the common case) takes the cheaper real solver
    let (eigenvalues, eigenvectors) = if entries.iter().all(|z| z.im == 0.0) {
        let eig = entries.map(|z| z.re).symmetric_eigen();
        (eig.eigenvalues, eig.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let eig = entries.clone().symmetric_eigen();
        (eig.eigenvalues, eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]).then(a.cmp(&b)));
    let dim = order.len();
    let mut vectors = CMatrix::zeros(dim, dim);
    let mut values = Vec::with_capacity(dim);
    for (new_col, &old_col) in order.iter().enumerate() {
        values.push(eigenvalues[old_col]);
        let col = eigenvectors.column(old_col);
        let max = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pivot = col
            .iter()
            .find(|z| z.norm() >= max * (1.0 - 1e-9))
            .copied()
            .unwrap_or(C64::new(1.0, 0.0));
        let phase = if pivot.norm() > 0.0 {
            pivot.conj() / pivot.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        vectors.set_column(new_col, &(col * phase));
    }
    Ok(SpectralDecomposition {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Normalized Boltzmann weights and `log Z` by max-shifted log-sum-exp.
pub fn boltzmann(energies: &[f64], beta: f64) -> (f64, Vec<f64>) {
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = energies.iter().map(|&e| (-beta * (e - e_min)).exp()).collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    (-beta * e_min + sum.ln(), weights)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(LabError::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

/// `(1 - e^{-x}) / x` for `x > 0`.
fn relative_exp_decay(x: f64) -> f64 {
    -(-x).exp_m1() / x
}

/// Moments of one observable in one Gibbs state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservableMoments {
    pub mean: f64,
    pub second: f64,
    /// `(O, O)`.
    pub duhamel: f64,
}

impl ObservableMoments {
    /// `<O^2> - <O>^2`.
    pub fn gibbs_variance(&self) -> f64 {
        self.second - self.mean * self.mean
    }

    /// `(O; O) = (O, O) - <O>^2`.
    pub fn truncated_duhamel(&self) -> f64 {
        self.duhamel - self.mean * self.mean
    }
}

#[derive(Clone, Debug)]
pub struct GibbsState {
    pub beta: f64,
    pub decomp: SpectralDecomposition,
    pub log_z: f64,
    pub weights: Vec<f64>,
    pub n_sites: usize,
}

pub fn gibbs_state(decomp: SpectralDecomposition, beta: f64, n_sites: usize) -> Result<GibbsState> {
    check_beta(beta)?;
    let (log_z, weights) = boltzmann(&decomp.eigenvalues, beta);
    Ok(GibbsState {
        beta,
        decomp,
        log_z,
        weights,
        n_sites,
    })
}

impl GibbsState {
    pub fn from_hamiltonian(h: &ManyBodyOperator, beta: f64) -> Result<Self> {
        gibbs_state(diagonalize(h)?, beta, h.n_sites())
    }

    /// `psi_N = log Z / N`.
    pub fn psi(&self) -> f64 {
        self.log_z / self.n_sites as f64
    }

    fn degeneracy_threshold(&self) -> f64 {
        DEGENERACY_THRESHOLD * self.decomp.spectral_radius().max(1.0)
    }

    fn real_part(value: C64, scale: f64) -> Result<f64> {
        let tolerance = REALITY_TOL * scale.max(1.0);
        if value.im.abs() > tolerance {
            return Err(LabError::ImaginaryResidue {
                residue: value.im.abs(),
                tolerance,
            });
        }
        Ok(value.re)
    }

    /// `<o>` for an operator already expressed in the eigenbasis.
    pub fn expectation_eigenbasis(&self, m: &CMatrix) -> Result<f64> {
        let mut acc = C64::new(0.0, 0.0);
        let mut scale = 0.0;
        for (k, &w) in self.weights.iter().enumerate() {
            acc += m[(k, k)] * w;
            scale += w * m[(k, k)].norm();
        }
        Self::real_part(acc, scale)
    }

    pub fn expectation(&self, o: &ManyBodyOperator) -> Result<f64> {
        let m = self.decomp.to_eigenbasis(o.entries())?;
        self.expectation_eigenbasis(&m)
    }

    /// Duhamel kernel `K(E_m, E_n)` (already divided by `Z`).
    pub fn kernel(&self, m: usize, n: usize) -> f64 {
        let (em, en) = (self.decomp.eigenvalues[m], self.decomp.eigenvalues[n]);
        let (lo, gap) = if em <= en { (m, en - em) } else { (n, em - en) };
        let threshold = self.degeneracy_threshold();
        if gap < threshold {
            self.weights[lo] * (1.0 - 0.5 * self.beta * gap)
        } else {
            self.weights[lo] * relative_exp_decay(self.beta * gap)
        }
    }

    /// `(O1, O2)` for operators already in the eigenbasis.
    pub fn duhamel_eigenbasis(&self, m1: &CMatrix, m2: &CMatrix) -> Result<f64> {
        let dim = self.decomp.dim();
        let mut acc = C64::new(0.0, 0.0);
        let mut scale = 0.0;
        for m in 0..dim {
            for n in 0..dim {
                let prod = m1[(m, n)] * m2[(n, m)];
                if prod.re == 0.0 && prod.im == 0.0 {
                    continue;
                }
                let k = self.kernel(m, n);
                acc += prod * k;
                scale += prod.norm() * k;
            }
        }
        Self::real_part(acc, scale)
    }

    pub fn duhamel_pair(&self, o1: &ManyBodyOperator, o2: &ManyBodyOperator) -> Result<f64> {
        let m1 = self.decomp.to_eigenbasis(o1.entries())?;
        let m2 = self.decomp.to_eigenbasis(o2.entries())?;
        self.duhamel_eigenbasis(&m1, &m2)
    }

    /// `(O1; O2) = (O1, O2) - <O1><O2>`.
    pub fn truncated_duhamel_pair(&self, o1: &ManyBodyOperator, o2: &ManyBodyOperator) -> Result<f64> {
        let m1 = self.decomp.to_eigenbasis(o1.entries())?;
        let m2 = self.decomp.to_eigenbasis(o2.entries())?;
        let d = self.duhamel_eigenbasis(&m1, &m2)?;
        Ok(d - self.expectation_eigenbasis(&m1)? * self.expectation_eigenbasis(&m2)?)
    }

    /// `<O>`, `<O^2>` and `(O, O)` from a single basis change.
    pub fn moments(&self, o: &ManyBodyOperator) -> Result<ObservableMoments> {
        let m = self.decomp.to_eigenbasis(o.entries())?;
        let mean = self.expectation_eigenbasis(&m)?;
        let dim = self.decomp.dim();
        let mut second = 0.0;
        let mut duhamel = 0.0;
        for a in 0..dim {
            let mut row = 0.0;
            for b in 0..dim {
                let p = m[(a, b)].norm_sqr();
                if p == 0.0 {
                    continue;
                }
                row += p;
                duhamel += p * self.kernel(a, b);
            }
            second += self.weights[a] * row;
        }
        Ok(ObservableMoments { mean, second, duhamel })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarrisBounds {
    /// `<O^2> - (beta/12) <[O, [H, O]]>`.
    pub lower: f64,
    pub duhamel: f64,
    /// `<O^2>`.
    pub upper: f64,
}

impl HarrisBounds {
    /// Smallest of `duhamel - lower` and `upper - duhamel`.
    pub fn slack(&self) -> f64 {
        (self.duhamel - self.lower).min(self.upper - self.duhamel)
    }
}

/// `h` must be the Hamiltonian the state was built from.
pub fn harris_bounds(state: &GibbsState, h: &ManyBodyOperator, o: &ManyBodyOperator) -> Result<HarrisBounds> {
    if !o.is_hermitian() {
        return Err(LabError::NonHermitian(o.hermiticity_defect()));
    }
    let moments = state.moments(o)?;
    let double = commutator(o, &commutator(h, o)?)?;
    let dc = state.expectation(&double)?;
    Ok(HarrisBounds {
        lower: moments.second - state.beta / 12.0 * dc,
        duhamel: moments.duhamel,
        upper: moments.second,
    })
}

/// Gibbs state of a Hamiltonian diagonal in the computational basis.
#[derive(Clone, Debug)]
pub struct ClassicalGibbs {
    pub beta: f64,
    pub log_z: f64,
    pub weights: Vec<f64>,
    pub n_sites: usize,
}

impl ClassicalGibbs {
    pub fn from_energies(energies: &[f64], beta: f64, n_sites: usize) -> Result<Self> {
        check_beta(beta)?;
        if energies.is_empty() {
            return Err(LabError::InvalidParameter("empty spectrum".into()));
        }
        let (log_z, weights) = boltzmann(energies, beta);
        Ok(Self {
            beta,
            log_z,
            weights,
            n_sites,
        })
    }

    pub fn from_operator(h: &ManyBodyOperator, beta: f64) -> Result<Self> {
        let diag = h.real_diagonal().ok_or(LabError::NotDiagonal)?;
        Self::from_energies(&diag, beta, h.n_sites())
    }

    pub fn psi(&self) -> f64 {
        self.log_z / self.n_sites as f64
    }

    fn check_len(&self, o: &[f64]) -> Result<()> {
        if o.len() != self.weights.len() {
            return Err(LabError::DimensionMismatch(format!(
                "observable of length {} on {} states",
                o.len(),
                self.weights.len()
            )));
        }
        Ok(())
    }

    pub fn expectation(&self, o: &[f64]) -> Result<f64> {
        self.check_len(o)?;
        Ok(self.weights.iter().zip(o).map(|(w, x)| w * x).sum())
    }

    /// For commuting diagonal observables the Duhamel product is `<O1 O2>`.
    pub fn duhamel_pair(&self, o1: &[f64], o2: &[f64]) -> Result<f64> {
        self.check_len(o1)?;
        self.check_len(o2)?;
        Ok(self
            .weights
            .iter()
            .zip(o1.iter().zip(o2))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }

    pub fn truncated_duhamel_pair(&self, o1: &[f64], o2: &[f64]) -> Result<f64> {
        Ok(self.duhamel_pair(o1, o2)? - self.expectation(o1)? * self.expectation(o2)?)
    }

    pub fn moments(&self, o: &[f64]) -> Result<ObservableMoments> {
        self.check_len(o)?;
        let mut mean = 0.0;
        let mut second = 0.0;
        for (w, x) in self.weights.iter().zip(o) {
            mean += w * x;
            second += w * x * x;
        }
        Ok(ObservableMoments {
            mean,
            second,
            duhamel: second,
        })
    }
}

/// Everything the dense path reports, computed by direct weighted sums.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalSummary {
    pub log_z: f64,
    pub psi: f64,
    pub moments: Vec<ObservableMoments>,
}

pub fn classical_fast_path(
    h_diag: &[f64],
    observables: &[&[f64]],
    beta: f64,
    n_sites: usize,
) -> Result<ClassicalSummary> {
    let state = ClassicalGibbs::from_energies(h_diag, beta, n_sites)?;
    let moments = observables
        .iter()
        .map(|o| state.moments(o))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassicalSummary {
        log_z: state.log_z,
        psi: state.psi(),
        moments,
    })
}

/// Dense diagonal vector as an operator, for cross-checks.
pub fn diagonal_operator(n_sites: usize, local_dim: usize, diag: &[f64]) -> Result<ManyBodyOperator> {
    ManyBodyOperator::from_real_diagonal(n_sites, local_dim, diag)
}

/// `log Tr exp(-beta h)` from eigenvalues alone.
pub fn log_partition(h: &ManyBodyOperator, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let vals: DVector<f64> = h.entries().clone().symmetric_eigenvalues();
    let energies: Vec<f64> = vals.iter().copied().collect();
    Ok(boltzmann(&energies, beta).0)
}
