//! Local Hamiltonians as sums of weighted Pauli strings, plus exact
//! small-system oracles.
//!
//! Each [`LocalTerm`] keeps both its Pauli decomposition and the dense
//! matrix on its support; the relaxation compiler embeds the former, the
//! eigenvalue routines use the latter. The full `2^n` operator is only ever
//! formed inside [`exact_ground_energy`].

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::pauli::{Pauli, PauliString};
use crate::qubits::QubitSet;

/// Largest support handled by [`term_min_eigenvalue`].
pub const DENSE_TERM_LIMIT: usize = 4;
/// Largest system handled by [`exact_ground_energy`].
pub const EXACT_LIMIT: usize = 12;
/// Above this many qubits the oracle switches from dense diagonalization to Lanczos.
const DENSE_ORACLE_LIMIT: usize = 10;
/// Largest support a single term may have at all.
const TERM_SUPPORT_LIMIT: usize = 10;

const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct LocalTerm {
    support: QubitSet,
    strings: Vec<PauliString>,
    matrix: DMatrix<Complex64>,
}

impl LocalTerm {
    /// Groups `strings` into one term acting on the union of their supports.
    pub fn new(strings: Vec<PauliString>) -> Result<Self> {
        let support = strings.iter().fold(QubitSet::EMPTY, |acc, s| acc.union(s.support()));
        if support.len() > TERM_SUPPORT_LIMIT {
            return Err(Error::SupportTooLarge {
                size: support.len(),
                limit: TERM_SUPPORT_LIMIT,
            });
        }
        let dim = 1usize << support.len();
        let mut matrix = DMatrix::<Complex64>::zeros(dim, dim);
        for s in &strings {
            if !s.coefficient.is_finite() {
                return Err(Error::NonFinite(s.coefficient));
            }
            let mono = s.mask().local(support);
            for c in 0..dim {
                let (r, v) = mono.entry(c);
                matrix[(r, c)] += v * s.coefficient;
            }
        }
        let defect = linalg::hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        Ok(LocalTerm {
            support,
            strings,
            matrix,
        })
    }

    pub fn support(&self) -> QubitSet {
        self.support
    }

    pub fn strings(&self) -> &[PauliString] {
        &self.strings
    }

    /// Dense operator on the ordered qubits of the support.
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn is_real(&self) -> bool {
        linalg::is_real(&self.matrix)
    }
}

#[derive(Clone, Debug)]
pub struct LocalHamiltonian {
    n: usize,
    terms: Vec<LocalTerm>,
}

impl LocalHamiltonian {
    pub fn new(n: usize, terms: Vec<LocalTerm>) -> Result<Self> {
        if n == 0 || n > crate::qubits::MAX_QUBITS {
            return Err(Error::TooFewQubits { n, min: 1 });
        }
        for t in &terms {
            if t.support.span() > n {
                return Err(Error::QubitOutOfRange {
                    index: t.support.span() - 1,
                    n,
                });
            }
        }
        Ok(LocalHamiltonian { n, terms })
    }

    /// One term per distinct support; strings sharing a support are summed.
    pub fn from_strings(n: usize, strings: Vec<PauliString>) -> Result<Self> {
        let mut groups: BTreeMap<QubitSet, Vec<PauliString>> = BTreeMap::new();
        for s in strings {
            groups.entry(s.support()).or_default().push(s);
        }
        let terms = groups.into_values().map(LocalTerm::new).collect::<Result<Vec<_>>>()?;
        LocalHamiltonian::new(n, terms)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    pub fn is_real(&self) -> bool {
        self.terms.iter().all(LocalTerm::is_real)
    }

    /// Largest term support size (the locality `k`).
    pub fn locality(&self) -> usize {
        self.terms.iter().map(|t| t.support.len()).max().unwrap_or(0)
    }

    /// `Tr[rho H]` for a pure state given by its amplitudes.
    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        self.apply(psi, &mut out);
        psi.iter().zip(&out).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// `out = H psi` on the full `2^n` space.
    pub fn apply(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let full = QubitSet::full(self.n);
        for o in out.iter_mut() {
            *o = Complex64::new(0.0, 0.0);
        }
        for t in &self.terms {
            for s in &t.strings {
                let mono = s.mask().local(full);
                for (c, amp) in psi.iter().enumerate() {
                    let (r, v) = mono.entry(c);
                    out[r] += v * s.coefficient * amp;
                }
            }
        }
    }

    pub fn dense(&self) -> Result<DMatrix<Complex64>> {
        if self.n > EXACT_LIMIT {
            return Err(Error::SystemTooLarge {
                n: self.n,
                limit: EXACT_LIMIT,
            });
        }
        let dim = 1usize << self.n;
        let full = QubitSet::full(self.n);
        let mut h = DMatrix::<Complex64>::zeros(dim, dim);
        for t in &self.terms {
            for s in &t.strings {
                let mono = s.mask().local(full);
                for c in 0..dim {
                    let (r, v) = mono.entry(c);
                    h[(r, c)] += v * s.coefficient;
                }
            }
        }
        Ok(h)
    }
}

/// Nearest-neighbour XX chain with transverse field:
/// `sum_i J_i (X_i X_{i+1} + Y_i Y_{i+1}) + sum_i B_i Z_i`.
///
/// Coupling and field terms stay separate. Terms whose coefficient is
/// exactly zero are dropped; an open chain ignores `j[n-1]`.
pub fn build_xx(n: usize, j: &[f64], b: &[f64], periodic: bool) -> Result<LocalHamiltonian> {
    if n < 2 {
        return Err(Error::TooFewQubits { n, min: 2 });
    }
    if j.len() != n {
        return Err(Error::LengthMismatch {
            name: "J",
            expected: n,
            got: j.len(),
        });
    }
    if b.len() != n {
        return Err(Error::LengthMismatch {
            name: "B",
            expected: n,
            got: b.len(),
        });
    }
    let bonds = if periodic { n } else { n - 1 };
    let mut terms = Vec::new();
    for (i, &ji) in j.iter().enumerate().take(bonds) {
        if ji == 0.0 {
            continue;
        }
        let k = (i + 1) % n;
        terms.push(LocalTerm::new(vec![
            PauliString::new([(i, Pauli::X), (k, Pauli::X)], ji)?,
            PauliString::new([(i, Pauli::Y), (k, Pauli::Y)], ji)?,
        ])?);
    }
    for (i, &bi) in b.iter().enumerate() {
        if bi == 0.0 {
            continue;
        }
        terms.push(LocalTerm::new(vec![PauliString::new([(i, Pauli::Z)], bi)?])?);
    }
    LocalHamiltonian::new(n, terms)
}

/// Homogeneous XX ring with coupling `j` and field `b` on every site.
pub fn homogeneous_xx(n: usize, j: f64, b: f64) -> Result<LocalHamiltonian> {
    build_xx(n, &vec![j; n], &vec![b; n], true)
}

/// XX ring with `J_i = i mod 3` and uniform field: isolated interacting triplets.
pub fn triplet_xx(n: usize, b: f64) -> Result<LocalHamiltonian> {
    let j: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
    build_xx(n, &j, &vec![b; n], true)
}

/// `sum_{(a,b) in edges} coupling * Z_a Z_b`.
pub fn zz_graph(n: usize, edges: &[(usize, usize)], coupling: f64) -> Result<LocalHamiltonian> {
    let mut terms = Vec::new();
    for &(a, b) in edges {
        for q in [a, b] {
            if q >= n {
                return Err(Error::QubitOutOfRange { index: q, n });
            }
        }
        terms.push(LocalTerm::new(vec![PauliString::new(
            [(a, Pauli::Z), (b, Pauli::Z)],
            coupling,
        )?])?);
    }
    LocalHamiltonian::new(n, terms)
}

/// Minimal eigenvalue of a single term by dense eigendecomposition.
pub fn term_min_eigenvalue(t: &LocalTerm) -> Result<f64> {
    if t.support.len() > DENSE_TERM_LIMIT {
        return Err(Error::SupportTooLarge {
            size: t.support.len(),
            limit: DENSE_TERM_LIMIT,
        });
    }
    Ok(linalg::hermitian_min_eigenvalue(&t.matrix))
}

/// Ground-state energy of the full Hamiltonian.
///
/// Dense diagonalization up to 10 qubits, Lanczos on the implicit operator
/// for 11 and 12.
pub fn exact_ground_energy(h: &LocalHamiltonian) -> Result<f64> {
    if h.n > EXACT_LIMIT {
        return Err(Error::SystemTooLarge {
            n: h.n,
            limit: EXACT_LIMIT,
        });
    }
    if h.n <= DENSE_ORACLE_LIMIT {
        let dense = h.dense()?;
        return Ok(linalg::hermitian_min_eigenvalue(&dense));
    }
    let dim = 1usize << h.n;
    Ok(linalg::lanczos_min_eigenvalue(dim, |v, out| h.apply(v, out), 1e-12))
}
