//! Clifford-algebra observables on a maximally entangled state, and the real
//! vectorization of bounded-dimension quantum strategies.
//!
//! A joint state `ψ = Σ_ij Ψ_ij |i⟩|j⟩` on `C^d ⊗ C^d` is stored as the `d×d`
//! matrix `Ψ`. Under this identification `(A ⊗ B)ψ ↔ A Ψ Bᵀ`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest generator count accepted by [`clifford_generators`] (`d = 256`).
pub const CLIFFORD_MAX_N: usize = 16;

/// Tolerance on Hermiticity, `A² = I` and the algebra relations.
pub const OBSERVABLE_TOL: f64 = 1e-12;

/// Tolerance on the norm of setting vectors.
pub const SETTING_NORM_TOL: f64 = 1e-9;

/// Largest imaginary part tolerated in a correlation.
pub const IMAGINARY_TOL: f64 = 1e-12;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

fn kron_all(factors: &[CMatrix]) -> CMatrix {
    factors
        .iter()
        .fold(CMatrix::identity(1, 1), |acc, f| acc.kronecker(f))
}

/// Largest entry modulus.
fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Pairwise anticommuting Hermitian involutions `Γ_1 … Γ_n` on `C^d`,
/// `d = 2^{⌊n/2⌋}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffordSet {
    n: usize,
    d: usize,
    generators: Vec<CMatrix>,
}

/// Worst deviations from the Clifford relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CliffordCheck {
    pub hermitian: f64,
    pub square: f64,
    pub anticommutator: f64,
    pub trace_orthonormality: f64,
}

impl CliffordCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.hermitian <= tol
            && self.square <= tol
            && self.anticommutator <= tol
            && self.trace_orthonormality <= tol
    }
}

impl CliffordSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn generators(&self) -> &[CMatrix] {
        &self.generators
    }

    /// Checks every relation by direct matrix arithmetic.
    pub fn verify(&self) -> CliffordCheck {
        let id = CMatrix::identity(self.d, self.d);
        let mut check = CliffordCheck {
            hermitian: 0.0,
            square: 0.0,
            anticommutator: 0.0,
            trace_orthonormality: 0.0,
        };
        for (i, gi) in self.generators.iter().enumerate() {
            check.hermitian = check.hermitian.max(max_abs(&(gi - gi.adjoint())));
            for (j, gj) in self.generators.iter().enumerate().skip(i) {
                let prod = gi * gj;
                let trace = prod.trace() / self.d as f64;
                let expect = if i == j { ONE } else { ZERO };
                check.trace_orthonormality =
                    check.trace_orthonormality.max((trace - expect).norm());
                if i == j {
                    check.square = check.square.max(max_abs(&(&prod - &id)));
                } else {
                    check.anticommutator = check.anticommutator.max(max_abs(&(&prod + gj * gi)));
                }
            }
        }
        check
    }
}

/// Jordan–Wigner generators: `Z^{⊗(k−1)} ⊗ X ⊗ I…` and `Z^{⊗(k−1)} ⊗ Y ⊗ I…`
/// for each qubit `k`, plus `Z^{⊗⌊n/2⌋}` when `n` is odd.
pub fn clifford_generators(n: usize) -> Result<CliffordSet> {
    if n < 1 {
        return Err(domain("need at least one generator"));
    }
    if n > CLIFFORD_MAX_N {
        return Err(Error::Resource {
            what: "Clifford generator count".into(),
            estimate: n as f64,
            limit: CLIFFORD_MAX_N as f64,
        });
    }
    let qubits = n / 2;
    let d = 1usize << qubits;
    let id2 = CMatrix::identity(2, 2);
    let mut generators = Vec::with_capacity(n);
    for k in 0..qubits {
        for pauli in [pauli_x(), pauli_y()] {
            let factors: Vec<CMatrix> = (0..qubits)
                .map(|q| match q.cmp(&k) {
                    std::cmp::Ordering::Less => pauli_z(),
                    std::cmp::Ordering::Equal => pauli.clone(),
                    std::cmp::Ordering::Greater => id2.clone(),
                })
                .collect();
            generators.push(kron_all(&factors));
        }
    }
    if n % 2 == 1 {
        generators.push(kron_all(&vec![pauli_z(); qubits]));
    }
    Ok(CliffordSet { n, d, generators })
}

/// A Hermitian matrix with `A² = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable(CMatrix);

impl Observable {
    /// Validates Hermiticity and `A² = I` within [`OBSERVABLE_TOL`].
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(argument("observable must be square"));
        }
        let herm = max_abs(&(&matrix - matrix.adjoint()));
        let square =
            max_abs(&(&matrix * &matrix - CMatrix::identity(matrix.nrows(), matrix.nrows())));
        if herm > OBSERVABLE_TOL || square > OBSERVABLE_TOL {
            return Err(argument(format!(
                "not a ±1 observable (Hermitian defect {herm:e}, A² − I defect {square:e})"
            )));
        }
        Ok(Observable(matrix))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn dump(&self) -> MatrixDump {
        MatrixDump::from(&self.0)
    }
}

/// Real and imaginary parts of a complex matrix, row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDump {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CMatrix> for MatrixDump {
    fn from(m: &CMatrix) -> Self {
        let part =
            |f: fn(&Complex64) -> f64| m.row_iter().map(|r| r.iter().map(f).collect()).collect();
        MatrixDump {
            re: part(|z| z.re),
            im: part(|z| z.im),
        }
    }
}

/// A pure state on `C^d ⊗ C^d` with observables linear in the settings:
/// `A(a) = Σ a_i·alice_i`, `B(b) = Σ b_i·bob_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumStrategy {
    d: usize,
    n: usize,
    state: CMatrix,
    alice_basis: Vec<CMatrix>,
    bob_basis: Vec<CMatrix>,
    /// Both bases are known to satisfy the Clifford relations, so unit
    /// settings always give valid observables.
    clifford_bases: bool,
}

impl QuantumStrategy {
    /// A strategy from explicit parts. Observables are validated per call.
    pub fn new(state: CMatrix, alice_basis: Vec<CMatrix>, bob_basis: Vec<CMatrix>) -> Result<Self> {
        let d = state.nrows();
        if !state.is_square() || d == 0 {
            return Err(argument("state must be a non-empty d×d coefficient matrix"));
        }
        let norm = state.norm();
        if (norm - 1.0).abs() > OBSERVABLE_TOL {
            return Err(argument(format!("state norm {norm} is not 1")));
        }
        if alice_basis.len() != bob_basis.len() || alice_basis.is_empty() {
            return Err(argument(
                "Alice and Bob need the same non-zero number of basis operators",
            ));
        }
        if alice_basis
            .iter()
            .chain(&bob_basis)
            .any(|m| m.shape() != (d, d))
        {
            return Err(argument(format!("basis operators must be {d}×{d}")));
        }
        Ok(QuantumStrategy {
            d,
            n: alice_basis.len(),
            state,
            alice_basis,
            bob_basis,
            clifford_bases: false,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn state(&self) -> &CMatrix {
        &self.state
    }

    /// Same strategy with Bob's outcomes flipped.
    pub fn with_bob_negated(mut self) -> Self {
        self.bob_basis.iter_mut().for_each(|b| *b = -b.clone());
        self
    }

    /// Conjugates each party's operators by a unitary and replaces the state.
    /// The Clifford relations survive conjugation, but the result is
    /// revalidated per call like any custom strategy.
    pub fn transformed(
        &self,
        alice_unitary: &CMatrix,
        bob_unitary: &CMatrix,
        state: CMatrix,
    ) -> Result<Self> {
        let conj = |u: &CMatrix, basis: &[CMatrix]| -> Vec<CMatrix> {
            basis.iter().map(|g| u * g * u.adjoint()).collect()
        };
        QuantumStrategy::new(
            state,
            conj(alice_unitary, &self.alice_basis),
            conj(bob_unitary, &self.bob_basis),
        )
    }

    fn combine(&self, basis: &[CMatrix], setting: &[f64]) -> Result<Observable> {
        if setting.len() != self.n {
            return Err(argument(format!(
                "setting has {} components, expected {}",
                setting.len(),
                self.n
            )));
        }
        let norm = setting.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > SETTING_NORM_TOL {
            return Err(argument(format!("setting norm {norm} is not 1")));
        }
        let mut m = CMatrix::zeros(self.d, self.d);
        for (g, &x) in basis.iter().zip(setting) {
            m += g * Complex64::new(x, 0.0);
        }
        if self.clifford_bases {
            Ok(Observable(m))
        } else {
            Observable::new(m)
        }
    }

    pub fn alice_observable(&self, a: &[f64]) -> Result<Observable> {
        self.combine(&self.alice_basis, a)
    }

    pub fn bob_observable(&self, b: &[f64]) -> Result<Observable> {
        self.combine(&self.bob_basis, b)
    }
}

/// Tsirelson's strategy: `A(a) = Σ a_i Γ_i`, `B(b) = Σ b_i Γ_iᵀ` on
/// `ψ = Σ_i |ii⟩/√d`, giving `⟨ψ|A ⊗ B|ψ⟩ = Tr(A Bᵀ)/d = a·b`.
pub fn tsirelson_strategy(n: usize) -> Result<QuantumStrategy> {
    let set = clifford_generators(n)?;
    let d = set.d;
    let state = CMatrix::identity(d, d) / Complex64::new((d as f64).sqrt(), 0.0);
    let bob = set.generators.iter().map(|g| g.transpose()).collect();
    let mut s = QuantumStrategy::new(state, set.generators, bob)?;
    s.clifford_bases = true;
    Ok(s)
}

/// `⟨ψ|A ⊗ B|ψ⟩ = Tr(Ψ† A Ψ Bᵀ)` for validated observables.
pub fn expectation(state: &CMatrix, a: &Observable, b: &Observable) -> Result<f64> {
    let z = (state.adjoint() * a.matrix() * state * b.matrix().transpose()).trace();
    if z.im.abs() > IMAGINARY_TOL {
        return Err(Error::NumericalIntegrity(format!(
            "correlation has imaginary part {:e}",
            z.im
        )));
    }
    if z.re.abs() > 1.0 + 1e-9 {
        return Err(Error::NumericalIntegrity(format!(
            "correlation {} outside [−1, 1]",
            z.re
        )));
    }
    Ok(z.re)
}

/// The correlation `E[αβ|ab]` of `strategy` at settings `a`, `b`.
pub fn correlation(strategy: &QuantumStrategy, a: &[f64], b: &[f64]) -> Result<f64> {
    let alice = strategy.alice_observable(a)?;
    let bob = strategy.bob_observable(b)?;
    expectation(&strategy.state, &alice, &bob)
}

/// Real unit vectors whose inner product equals the correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedVectors {
    pub dim: usize,
    pub alice_vector: Vec<f64>,
    pub bob_vector: Vec<f64>,
}

impl RealizedVectors {
    pub fn dot(&self) -> f64 {
        crate::sphere::dot(&self.alice_vector, &self.bob_vector)
    }
}

/// `[Re; Im]` layout, so `realify(u)·realify(v) = Re⟨u, v⟩`.
fn realify(m: &CMatrix) -> Vec<f64> {
    m.iter()
        .map(|z| z.re)
        .chain(m.iter().map(|z| z.im))
        .collect()
}

/// `(A ⊗ I)ψ` and `(I ⊗ B)ψ` as real vectors in `R^{2d²}`.
///
/// `⟨(A⊗I)ψ, (I⊗B)ψ⟩ = ⟨ψ|A⊗B|ψ⟩` because `A` is Hermitian, and the
/// correlation is real, so the real inner product of the realified vectors is
/// the correlation. Each vector has norm `‖ψ‖ = 1` because `A² = B² = I`.
pub fn vectorize(strategy: &QuantumStrategy, a: &[f64], b: &[f64]) -> Result<RealizedVectors> {
    let alice = strategy.alice_observable(a)?;
    let bob = strategy.bob_observable(b)?;
    let psi = &strategy.state;
    Ok(RealizedVectors {
        dim: 2 * strategy.d * strategy.d,
        alice_vector: realify(&(alice.matrix() * psi)),
        bob_vector: realify(&(psi * bob.matrix().transpose())),
    })
}

/// A Haar-random unitary from the QR factorization of a complex Gaussian
/// matrix, with the phases of `R`'s diagonal folded back into `Q`.
pub fn random_unitary<R: rand::Rng>(d: usize, rng: &mut R) -> CMatrix {
    use rand_distr::StandardNormal;
    let g = CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        let z = r[(j, j)];
        let phase = if z.norm() > 0.0 { z / z.norm() } else { ONE };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

/// A uniformly random unit vector on `C^d ⊗ C^d`, as a coefficient matrix.
pub fn random_state<R: rand::Rng>(d: usize, rng: &mut R) -> CMatrix {
    use rand_distr::StandardNormal;
    let g = CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let n = g.norm();
    g / Complex64::new(n, 0.0)
}
