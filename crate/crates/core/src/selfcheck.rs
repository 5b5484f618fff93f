//! Built-in invariant suite behind `quenchlab verify-algebra`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::gibbs::{harris_bounds, log_partition, GibbsState};
use crate::spin_algebra::{
    commutator, spin_matrices, Axis, CMatrix, ManyBodyOperator, SpinMagnitude, ALGEBRA_TOL, C64,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    /// Worst deviation observed.
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            worst,
            tolerance,
            pass: worst <= tolerance,
        }
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `[S^a, S^b] = i eps_abc S^c`, the Casimir and hermiticity for one spin.
pub fn spin_relations(spin: SpinMagnitude) -> Check {
    let sm = spin_matrices(spin);
    let (x, y, z) = (sm.x.entries(), sm.y.entries(), sm.z.entries());
    let i = C64::new(0.0, 1.0);
    let mut worst: f64 = 0.0;
    for (a, b, c) in [(x, y, z), (y, z, x), (z, x, y)] {
        worst = worst.max(max_abs(&(a * b - b * a - c * i)));
    }
    let dim = spin.local_dim();
    let casimir = x * x + y * y + z * z - CMatrix::identity(dim, dim) * C64::new(spin.casimir(), 0.0);
    worst = worst.max(max_abs(&casimir));
    for m in [x, y, z] {
        worst = worst.max(max_abs(&(m - m.adjoint())));
    }
    Check::new(format!("spin algebra S = {}", spin.value()), worst, ALGEBRA_TOL)
}

/// Operators on different sites commute and same-site ones keep the local algebra.
pub fn embedded_relations(spin: SpinMagnitude, n_sites: usize) -> Result<Check> {
    let sm = spin_matrices(spin);
    let d = spin.local_dim();
    let one = |site: usize, axis: Axis| -> Result<ManyBodyOperator> {
        let mut op = ManyBodyOperator::zeros(n_sites, d)?;
        op.add_product(C64::new(1.0, 0.0), &[(site, sm.get(axis))])?;
        Ok(op)
    };
    let mut worst: f64 = 0.0;
    for i in 0..n_sites {
        for j in 0..n_sites {
            for a in Axis::ALL {
                for b in Axis::ALL {
                    let c = commutator(&one(i, a)?, &one(j, b)?)?;
                    let expected = if i != j || a == b {
                        ManyBodyOperator::zeros(n_sites, d)?
                    } else {
                        let third = Axis::ALL.into_iter().find(|&t| t != a && t != b).expect("three axes");
                        // sign of the permutation (a, b, third)
                        let cyclic = matches!((a, b), (Axis::X, Axis::Y) | (Axis::Y, Axis::Z) | (Axis::Z, Axis::X));
                        let sign = if cyclic { 1.0 } else { -1.0 };
                        let mut e = ManyBodyOperator::zeros(n_sites, d)?;
                        e.add_product(C64::new(0.0, sign), &[(i, sm.get(third))])?;
                        e
                    };
                    worst = worst.max(c.max_abs_diff(&expected)?);
                }
            }
        }
    }
    Ok(Check::new(
        format!("site embedding S = {}, N = {n_sites}", spin.value()),
        worst,
        ALGEBRA_TOL,
    ))
}

/// Dense Hermitian matrix with independent Gaussian entries, on `n_sites` qubits.
pub fn random_hermitian(n_sites: usize, seed: u64, scale: f64) -> Result<ManyBodyOperator> {
    let dim = 1usize << n_sites;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = if i == j { 0.0 } else { StandardNormal.sample(&mut rng) };
            m[(i, j)] = C64::new(re, im) * scale;
            m[(j, i)] = m[(i, j)].conj();
        }
    }
    ManyBodyOperator::from_matrix(n_sites, 2, m)
}

/// First derivative of `log Z(x)` and second derivative of `Z(x) / Z(0)` at `x = 0`,
/// with `Z(x) = Tr exp(-beta (h - x o))`, by Richardson-extrapolated central differences.
pub fn log_partition_derivatives(h: &ManyBodyOperator, o: &ManyBodyOperator, beta: f64) -> Result<(f64, f64)> {
    let lz = |x: f64| -> Result<f64> { log_partition(&h.add_scaled(-x, o)?, beta) };
    let l0 = lz(0.0)?;
    let step = 1e-3;
    let mut first = [0.0; 2];
    let mut second = [0.0; 2];
    for (k, s) in [step, step / 2.0].into_iter().enumerate() {
        let (up, down) = (lz(s)?, lz(-s)?);
        first[k] = (up - down) / (2.0 * s);
        second[k] = ((up - l0).exp_m1() + (down - l0).exp_m1()) / (s * s);
    }
    Ok(((4.0 * first[1] - first[0]) / 3.0, (4.0 * second[1] - second[0]) / 3.0))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// `beta <O>` and `beta^2 (O, O)` against finite differences of the partition function.
pub fn duhamel_identities(pairs: usize, seed: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for k in 0..pairs as u64 {
        let n = 1 + (k % 3) as usize;
        let h = random_hermitian(n, seed ^ (2 * k), 0.5)?;
        let o = random_hermitian(n, seed ^ (2 * k + 1), 0.5)?;
        for beta in [0.5, 1.0, 2.0] {
            let state = GibbsState::from_hamiltonian(&h, beta)?;
            let (d1, d2) = log_partition_derivatives(&h, &o, beta)?;
            worst = worst.max(rel(d1, beta * state.expectation(&o)?));
            worst = worst.max(rel(d2, beta * beta * state.duhamel_pair(&o, &o)?));
        }
    }
    Ok(Check::new(format!("duhamel identities on {pairs} pairs"), worst, 1e-6))
}

/// Harris sandwich on random instances; the reported value is the most negative slack.
pub fn harris_sandwich(instances: usize, seed: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for k in 0..instances as u64 {
        let n = 1 + (k % 3) as usize;
        let h = random_hermitian(n, seed ^ (3 * k), 1.0)?;
        let o = random_hermitian(n, seed ^ (3 * k + 1), 1.0)?;
        let beta = 0.25 + (k % 8) as f64 * 0.5;
        let state = GibbsState::from_hamiltonian(&h, beta)?;
        worst = worst.max(-harris_bounds(&state, &h, &o)?.slack());
    }
    Ok(Check::new(
        format!("harris sandwich on {instances} instances"),
        worst,
        1e-9,
    ))
}

pub fn run_all() -> Result<Vec<Check>> {
    let spins = [SpinMagnitude::HALF, SpinMagnitude::ONE, SpinMagnitude::from_two_s(3)];
    let mut checks: Vec<Check> = spins.iter().map(|&s| spin_relations(s)).collect();
    for s in spins {
        checks.push(embedded_relations(s, 3)?);
    }
    checks.push(duhamel_identities(50, 0x5eed)?);
    checks.push(harris_sandwich(100, 0xbeef)?);
    Ok(checks)
}
