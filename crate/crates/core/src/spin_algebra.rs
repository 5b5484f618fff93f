//! Spin-S matrices, tensor embedding onto N-site systems, and the small amount
//! of operator arithmetic the rest of the crate needs.
//!
//! Basis convention: the local basis vector `k` (0-based) has `S^z = S - k`,
//! so `S^z = diag(S, S-1, ..., -S)`. Site 0 is the leftmost (most significant)
//! tensor factor: a many-body basis index is `sum_j k_j * d^(N-1-j)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Absolute tolerance for algebraic identities on unit-scale matrices.
pub const ALGEBRA_TOL: f64 = 1e-12;

/// Spin magnitude stored as `2S` so half-integers are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpinMagnitude {
    two_s: u32,
}

impl SpinMagnitude {
    pub const HALF: SpinMagnitude = SpinMagnitude { two_s: 1 };
    pub const ONE: SpinMagnitude = SpinMagnitude { two_s: 2 };

    pub fn from_two_s(two_s: u32) -> Self {
        Self { two_s }
    }

    /// Accepts non-negative multiples of 1/2.
    pub fn from_f64(s: f64) -> Result<Self> {
        let doubled = 2.0 * s;
        if !(doubled >= 0.0) || (doubled - doubled.round()).abs() > 1e-12 || doubled > 64.0 {
            return Err(LabError::InvalidParameter(format!(
                "spin magnitude {s} is not a non-negative half integer"
            )));
        }
        Ok(Self {
            two_s: doubled.round() as u32,
        })
    }

    pub fn two_s(self) -> u32 {
        self.two_s
    }

    pub fn value(self) -> f64 {
        self.two_s as f64 / 2.0
    }

    pub fn local_dim(self) -> usize {
        self.two_s as usize + 1
    }

    pub fn casimir(self) -> f64 {
        let s = self.value();
        s * (s + 1.0)
    }

    /// `S^z` eigenvalue of local basis vector `k`.
    pub fn sz_value(self, k: usize) -> f64 {
        self.value() - k as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(LabError::InvalidParameter(format!("unknown axis '{other}'"))),
        }
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `|A - A^dagger|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

fn looks_hermitian(m: &CMatrix) -> bool {
    m.is_square() && hermiticity_defect(m) <= ALGEBRA_TOL * max_abs(m).max(1.0)
}

/// A single-site operator on `C^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    entries: CMatrix,
    hermitian: bool,
}

impl LocalOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(LabError::DimensionMismatch(format!(
                "local operator must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let hermitian = looks_hermitian(&entries);
        Ok(Self { entries, hermitian })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let entries = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            diag.len(),
            diag.iter().map(|&x| C64::new(x, 0.0)),
        ));
        Self {
            entries,
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: CMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.entries[(i, j)] == ZERO))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: &self.entries * C64::new(factor, 0.0),
            hermitian: self.hermitian,
        }
    }

    pub fn matmul(&self, other: &LocalOperator) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(LabError::DimensionMismatch(format!(
                "local dims {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Self::new(&self.entries * &other.entries)
    }
}

/// The three spin matrices for one magnitude.
#[derive(Clone, Debug)]
pub struct SpinMatrices {
    pub x: LocalOperator,
    pub y: LocalOperator,
    pub z: LocalOperator,
}

impl SpinMatrices {
    pub fn get(&self, axis: Axis) -> &LocalOperator {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }
}

/// Standard spin-S matrices built from the ladder operators.
pub fn spin_matrices(s: SpinMagnitude) -> SpinMatrices {
    let d = s.local_dim();
    let sv = s.value();
    let mut sp = CMatrix::zeros(d, d);
    let mut sz = CMatrix::zeros(d, d);
    for k in 0..d {
        let m = s.sz_value(k);
        sz[(k, k)] = C64::new(m, 0.0);
        // S^+ |m> = sqrt(S(S+1) - m(m+1)) |m+1>, and |m+1> is basis vector k-1.
        if k > 0 {
            let amp = (sv * (sv + 1.0) - m * (m + 1.0)).sqrt();
            sp[(k - 1, k)] = C64::new(amp, 0.0);
        }
    }
    let sm = sp.adjoint();
    let x = (&sp + &sm) * C64::new(0.5, 0.0);
    let y = (&sp - &sm) * C64::new(0.0, -0.5);
    SpinMatrices {
        x: LocalOperator {
            entries: x,
            hermitian: true,
        },
        y: LocalOperator {
            entries: y,
            hermitian: true,
        },
        z: LocalOperator {
            entries: sz,
            hermitian: true,
        },
    }
}

/// The vertex set `V_N`, optionally with a hypercubic shape `[1, L_1] x ... x [1, L_d]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteSet {
    n_sites: usize,
    shape: Option<Vec<usize>>,
}

impl SiteSet {
    pub fn new(n_sites: usize) -> Self {
        Self { n_sites, shape: None }
    }

    /// Box lattice with the given side lengths; the last coordinate varies fastest.
    pub fn lattice(shape: Vec<usize>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(LabError::InvalidParameter(format!("invalid lattice shape {shape:?}")));
        }
        Ok(Self {
            n_sites: shape.iter().product(),
            shape: Some(shape),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn shape(&self) -> Option<&[usize]> {
        self.shape.as_deref()
    }

    /// 1-based lattice coordinates; a plain site set is treated as a chain.
    pub fn coords(&self, site: usize) -> Vec<usize> {
        match &self.shape {
            None => vec![site + 1],
            Some(shape) => {
                let mut rem = site;
                let mut out = vec![0; shape.len()];
                for (axis, &len) in shape.iter().enumerate().rev() {
                    out[axis] = rem % len + 1;
                    rem /= len;
                }
                out
            }
        }
    }

    pub fn site_of(&self, coords: &[usize]) -> Option<usize> {
        match &self.shape {
            None => match coords {
                [c] if *c >= 1 && *c <= self.n_sites => Some(c - 1),
                _ => None,
            },
            Some(shape) => {
                if coords.len() != shape.len() {
                    return None;
                }
                let mut idx = 0;
                for (&c, &len) in coords.iter().zip(shape) {
                    if c < 1 || c > len {
                        return None;
                    }
                    idx = idx * len + (c - 1);
                }
                Some(idx)
            }
        }
    }

    /// Nearest-neighbour bonds `{i, j}` with `i < j`, open boundaries unless `periodic`.
    pub fn nearest_neighbor_bonds(&self, periodic: bool) -> Vec<(usize, usize)> {
        let shape: Vec<usize> = self.shape.clone().unwrap_or_else(|| vec![self.n_sites]);
        let mut bonds = Vec::new();
        for site in 0..self.n_sites {
            let c = self.coords(site);
            for axis in 0..shape.len() {
                let len = shape[axis];
                let mut next = c.clone();
                if c[axis] < len {
                    next[axis] += 1;
                } else if periodic && len > 2 {
                    next[axis] = 1;
                } else {
                    continue;
                }
                let other = self.site_of(&next).expect("neighbour inside lattice");
                bonds.push((site.min(other), site.max(other)));
            }
        }
        bonds.sort_unstable();
        bonds.dedup();
        bonds
    }

    /// `(-1)^(j_1 + ... + j_d)` with 1-based coordinates.
    pub fn staggered_sign(&self, site: usize) -> f64 {
        if self.coords(site).iter().sum::<usize>() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Dense operator on `(C^d)^{\otimes N}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManyBodyOperator {
    n_sites: usize,
    local_dim: usize,
    entries: CMatrix,
    hermitian: bool,
}

/// Default cap on the dense Hilbert-space dimension.
pub const DEFAULT_DIM_CAP: usize = 4096;

pub fn checked_dim(local_dim: usize, n_sites: usize, cap: usize) -> Result<usize> {
    let dim = (local_dim as u128).checked_pow(n_sites as u32).unwrap_or(u128::MAX);
    if dim > cap as u128 {
        return Err(LabError::DimensionOverflow { dim, cap });
    }
    Ok(dim as usize)
}

impl ManyBodyOperator {
    pub fn zeros(n_sites: usize, local_dim: usize) -> Result<Self> {
        Self::zeros_capped(n_sites, local_dim, DEFAULT_DIM_CAP)
    }

    pub fn zeros_capped(n_sites: usize, local_dim: usize, cap: usize) -> Result<Self> {
        let dim = checked_dim(local_dim, n_sites, cap)?;
        Ok(Self {
            n_sites,
            local_dim,
            entries: CMatrix::zeros(dim, dim),
            hermitian: true,
        })
    }

    pub fn identity(n_sites: usize, local_dim: usize) -> Result<Self> {
        let dim = checked_dim(local_dim, n_sites, DEFAULT_DIM_CAP)?;
        Ok(Self {
            n_sites,
            local_dim,
            entries: CMatrix::identity(dim, dim),
            hermitian: true,
        })
    }

    pub fn from_matrix(n_sites: usize, local_dim: usize, entries: CMatrix) -> Result<Self> {
        let dim = (local_dim as u128).checked_pow(n_sites as u32);
        if !entries.is_square() || dim != Some(entries.nrows() as u128) {
            return Err(LabError::DimensionMismatch(format!(
                "{}x{} matrix for {n_sites} sites of local dimension {local_dim}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let hermitian = looks_hermitian(&entries);
        Ok(Self {
            n_sites,
            local_dim,
            entries,
            hermitian,
        })
    }

    /// Diagonal operator with the given real diagonal.
    pub fn from_real_diagonal(n_sites: usize, local_dim: usize, diag: &[f64]) -> Result<Self> {
        let m = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            diag.len(),
            diag.iter().map(|&x| C64::new(x, 0.0)),
        ));
        Self::from_matrix(n_sites, local_dim, m)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.entries)
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        for j in 0..n {
            for i in 0..n {
                if i != j && self.entries[(i, j)] != ZERO {
                    return false;
                }
            }
        }
        true
    }

    /// Real parts of the diagonal, if the operator is diagonal with real entries.
    pub fn real_diagonal(&self) -> Option<Vec<f64>> {
        if !self.is_diagonal() {
            return None;
        }
        let diag: Vec<C64> = (0..self.dim()).map(|i| self.entries[(i, i)]).collect();
        if diag.iter().any(|z| z.im != 0.0) {
            return None;
        }
        Some(diag.into_iter().map(|z| z.re).collect())
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.n_sites];
        for j in (0..self.n_sites.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * self.local_dim;
        }
        strides
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.n_sites != other.n_sites || self.local_dim != other.local_dim {
            return Err(LabError::DimensionMismatch(format!(
                "({} sites, d={}) vs ({} sites, d={})",
                self.n_sites, self.local_dim, other.n_sites, other.local_dim
            )));
        }
        Ok(())
    }

    fn with_entries(&self, entries: CMatrix, hermitian: bool) -> Self {
        let out = Self {
            n_sites: self.n_sites,
            local_dim: self.local_dim,
            entries,
            hermitian,
        };
        debug_assert!(!out.hermitian || looks_hermitian(&out.entries));
        out
    }

    /// Adds `coeff * prod_j factor_j` with each factor acting on its own site.
    pub fn add_product(&mut self, coeff: C64, factors: &[(usize, &LocalOperator)]) -> Result<()> {
        let mut seen = vec![false; self.n_sites];
        for &(site, op) in factors {
            if site >= self.n_sites {
                return Err(LabError::SiteOutOfRange {
                    site,
                    n_sites: self.n_sites,
                });
            }
            if seen[site] {
                return Err(LabError::DuplicateSite(site));
            }
            seen[site] = true;
            if op.dim() != self.local_dim {
                return Err(LabError::DimensionMismatch(format!(
                    "local operator of dim {} on sites of dim {}",
                    op.dim(),
                    self.local_dim
                )));
            }
        }
        if coeff == ZERO {
            return Ok(());
        }
        let d = self.local_dim;
        let strides = self.strides();
        let mut cur: Vec<(usize, C64)> = Vec::new();
        let mut next: Vec<(usize, C64)> = Vec::new();
        for col in 0..self.dim() {
            cur.clear();
            cur.push((col, coeff));
            for &(site, op) in factors {
                let stride = strides[site];
                next.clear();
                for &(idx, amp) in &cur {
                    let k = (idx / stride) % d;
                    let base = idx - k * stride;
                    for kp in 0..d {
                        let v = op.entries[(kp, k)];
                        if v != ZERO {
                            next.push((base + kp * stride, amp * v));
                        }
                    }
                }
                std::mem::swap(&mut cur, &mut next);
            }
            for &(row, amp) in &cur {
                self.entries[(row, col)] += amp;
            }
        }
        let product_hermitian = coeff.im == 0.0 && factors.iter().all(|(_, op)| op.hermitian);
        self.hermitian = self.hermitian && product_hermitian;
        debug_assert!(!self.hermitian || looks_hermitian(&self.entries));
        Ok(())
    }

    /// `(1 ⊗ .. ⊗ L_site ⊗ .. ⊗ 1) * self`.
    pub fn apply_local_left(&self, site: usize, op: &LocalOperator) -> Result<CMatrix> {
        if site >= self.n_sites {
            return Err(LabError::SiteOutOfRange {
                site,
                n_sites: self.n_sites,
            });
        }
        if op.dim() != self.local_dim {
            return Err(LabError::DimensionMismatch("local operator dimension".into()));
        }
        let d = self.local_dim;
        let stride = self.strides()[site];
        let dim = self.dim();
        let mut out = CMatrix::zeros(dim, dim);
        for col in 0..dim {
            for row in 0..dim {
                let a = self.entries[(row, col)];
                if a == ZERO {
                    continue;
                }
                let k = (row / stride) % d;
                let base = row - k * stride;
                for kp in 0..d {
                    let v = op.entries[(kp, k)];
                    if v != ZERO {
                        out[(base + kp * stride, col)] += v * a;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self.with_entries(&self.entries + &other.entries, self.hermitian && other.hermitian))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self.with_entries(&self.entries - &other.entries, self.hermitian && other.hermitian))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.with_entries(&self.entries * C64::new(factor, 0.0), self.hermitian)
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self.with_entries(
            &self.entries + &other.entries * C64::new(factor, 0.0),
            self.hermitian && other.hermitian,
        ))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let entries = &self.entries * &other.entries;
        let hermitian = looks_hermitian(&entries);
        Ok(self.with_entries(entries, hermitian))
    }

    pub fn adjoint(&self) -> Self {
        self.with_entries(self.entries.adjoint(), self.hermitian)
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    /// Largest entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(max_abs(&(&self.entries - &other.entries)))
    }

    pub fn max_abs_entry(&self) -> f64 {
        max_abs(&self.entries)
    }
}

/// Tensor-embeds single-site operators at distinct sites, identities elsewhere.
pub fn embed(locals: &[(usize, LocalOperator)], sites: &SiteSet) -> Result<ManyBodyOperator> {
    let local_dim = match locals.first() {
        Some((_, op)) => op.dim(),
        None => {
            return Err(LabError::InvalidParameter(
                "embed needs at least one local operator".into(),
            ))
        }
    };
    let mut out = ManyBodyOperator::zeros(sites.n_sites(), local_dim)?;
    let factors: Vec<(usize, &LocalOperator)> = locals.iter().map(|(s, op)| (*s, op)).collect();
    out.add_product(ONE, &factors)?;
    Ok(out)
}

/// `ab - ba`.
pub fn commutator(a: &ManyBodyOperator, b: &ManyBodyOperator) -> Result<ManyBodyOperator> {
    a.check_same_shape(b)?;
    let entries = &a.entries * &b.entries - &b.entries * &a.entries;
    let hermitian = looks_hermitian(&entries);
    Ok(a.with_entries(entries, hermitian))
}

/// Real eigenvalues of a Hermitian matrix, ascending.
pub(crate) fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut vals: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Spectral norm.
pub fn operator_norm(a: &ManyBodyOperator) -> f64 {
    matrix_norm(&a.entries, a.hermitian)
}

pub(crate) fn matrix_norm(m: &CMatrix, hermitian: bool) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if hermitian || looks_hermitian(m) {
        hermitian_eigenvalues(m).into_iter().map(f64::abs).fold(0.0, f64::max)
    } else {
        let gram = m.adjoint() * m;
        hermitian_eigenvalues(&gram)
            .into_iter()
            .fold(0.0, f64::max)
            .max(0.0)
            .sqrt()
    }
}

/// Single-site rotation `exp(-i angle n.S)`.
pub fn su2_local(s: SpinMagnitude, axis: [f64; 3], angle: f64) -> Result<LocalOperator> {
    let len = axis.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (len - 1.0).abs() > 1e-9 {
        return Err(LabError::NonUnitAxis(len));
    }
    let sm = spin_matrices(s);
    let generator = sm.x.entries() * C64::new(axis[0], 0.0)
        + sm.y.entries() * C64::new(axis[1], 0.0)
        + sm.z.entries() * C64::new(axis[2], 0.0);
    let eig = generator.symmetric_eigen();
    let phases = nalgebra::DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| C64::from_polar(1.0, -angle * l)),
    );
    let u = &eig.eigenvectors * CMatrix::from_diagonal(&phases) * eig.eigenvectors.adjoint();
    Ok(LocalOperator {
        entries: u,
        hermitian: false,
    })
}

/// `U a U^dagger` with `U = ⊗_j exp(-i angle n.S_j)`.
pub fn su2_rotate(a: &ManyBodyOperator, axis: [f64; 3], angle: f64) -> Result<ManyBodyOperator> {
    if !a.hermitian {
        return Err(LabError::NonHermitian(a.hermiticity_defect()));
    }
    let two_s = a.local_dim as u32 - 1;
    let u = su2_local(SpinMagnitude::from_two_s(two_s), axis, angle)?;
    let mut cur = a.clone();
    for site in 0..a.n_sites {
        let left = cur.apply_local_left(site, &u)?;
        // (U (U A)^dagger)^dagger = U A U^dagger
        let tmp = ManyBodyOperator {
            entries: left.adjoint(),
            hermitian: false,
            ..cur.clone()
        };
        let both = tmp.apply_local_left(site, &u)?;
        cur = ManyBodyOperator {
            entries: both.adjoint(),
            hermitian: false,
            ..cur
        };
    }
    // Conjugation preserves Hermiticity up to rounding; symmetrise to keep the flag honest.
    let sym = (&cur.entries + cur.entries.adjoint()) * C64::new(0.5, 0.0);
    Ok(a.with_entries(sym, true))
}
