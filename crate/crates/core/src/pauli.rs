//! Pauli strings and their action as signed permutation matrices.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubits::QubitSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Pauli> {
        match c.to_ascii_uppercase() {
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

/// Bit-mask form of a Pauli operator on global qubits, ignoring the
/// coefficient. `X` sets the x bit, `Z` the z bit and `Y` both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PauliMask {
    pub x: u64,
    pub z: u64,
}

impl PauliMask {
    pub fn support(self) -> QubitSet {
        QubitSet::from_mask(self.x | self.z)
    }

    pub fn y_count(self) -> u32 {
        (self.x & self.z).count_ones()
    }

    pub fn is_identity(self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// True when the matrix is real (even number of `Y` factors). Odd-`Y`
    /// strings are purely imaginary and antisymmetric.
    pub fn is_real(self) -> bool {
        self.y_count().is_multiple_of(2)
    }

    /// Every Pauli operator supported inside `set`, including the identity.
    pub fn all_on(set: QubitSet) -> impl Iterator<Item = PauliMask> {
        set.subsets().flat_map(move |xs| {
            set.subsets().map(move |zs| PauliMask {
                x: xs.mask(),
                z: zs.mask(),
            })
        })
    }

    /// The operator as a signed permutation on the ordered qubits of `frame`.
    pub fn local(self, frame: QubitSet) -> Monomial {
        debug_assert!(self.support().is_subset(frame));
        let k = frame.len();
        let mut flip = 0usize;
        let mut sign = 0usize;
        for q in self.support().iter() {
            let bit = 1usize << (k - 1 - frame.position(q).unwrap_or(0));
            if self.x & (1 << q) != 0 {
                flip |= bit;
            }
            if self.z & (1 << q) != 0 {
                sign |= bit;
            }
        }
        Monomial {
            dim: 1 << k,
            flip,
            sign,
            phase: (self.y_count() % 4) as u8,
        }
    }
}

/// A matrix with exactly one nonzero per column: column `c` maps to row
/// `c ^ flip` with value `i^phase * (-1)^popcount(c & sign)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Monomial {
    pub dim: usize,
    pub flip: usize,
    pub sign: usize,
    pub phase: u8,
}

impl Monomial {
    /// Row index and value of the nonzero in column `col`.
    #[inline]
    pub fn entry(&self, col: usize) -> (usize, Complex64) {
        let base = match self.phase {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        let v = if (col & self.sign).count_ones() % 2 == 1 {
            -base
        } else {
            base
        };
        (col ^ self.flip, v)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for c in 0..self.dim {
            let (r, v) = self.entry(c);
            m[(r, c)] = v;
        }
        m
    }
}

/// A weighted tensor product of single-qubit Pauli matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliString {
    pub site_ops: BTreeMap<usize, Pauli>,
    pub coefficient: f64,
}

impl PauliString {
    pub fn new(ops: impl IntoIterator<Item = (usize, Pauli)>, coefficient: f64) -> Result<Self> {
        if !coefficient.is_finite() {
            return Err(Error::NonFinite(coefficient));
        }
        let mut site_ops = BTreeMap::new();
        for (q, p) in ops {
            if q >= crate::qubits::MAX_QUBITS {
                return Err(Error::QubitOutOfRange {
                    index: q,
                    n: crate::qubits::MAX_QUBITS,
                });
            }
            site_ops.insert(q, p);
        }
        Ok(PauliString { site_ops, coefficient })
    }

    /// Parses compact labels such as `"X0 X1"` or `"Z3"`.
    pub fn parse(label: &str, coefficient: f64) -> Result<Self> {
        let mut ops = Vec::new();
        for tok in label.split_whitespace() {
            let mut chars = tok.chars();
            let p = chars
                .next()
                .and_then(Pauli::from_char)
                .ok_or_else(|| Error::Parse(alloc::format!("bad Pauli factor `{tok}`")))?;
            let q: usize = chars
                .as_str()
                .parse()
                .map_err(|_| Error::Parse(alloc::format!("bad qubit index in `{tok}`")))?;
            ops.push((q, p));
        }
        PauliString::new(ops, coefficient)
    }

    pub fn support(&self) -> QubitSet {
        self.site_ops.keys().copied().collect()
    }

    pub fn mask(&self) -> PauliMask {
        let mut m = PauliMask::default();
        for (&q, &p) in &self.site_ops {
            match p {
                Pauli::X => m.x |= 1 << q,
                Pauli::Z => m.z |= 1 << q,
                Pauli::Y => {
                    m.x |= 1 << q;
                    m.z |= 1 << q;
                }
            }
        }
        m
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.coefficient)?;
        if self.site_ops.is_empty() {
            return f.write_str(" I");
        }
        for (q, p) in &self.site_ops {
            write!(f, " {p:?}{q}")?;
        }
        Ok(())
    }
}
