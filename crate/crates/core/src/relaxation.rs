//! Compiles a Hamiltonian and a constraint set into a block SDP over
//! marginals and extracts a certified lower bound on the ground energy.
//!
//! Each block `S` carries a density matrix `ρ_S`. Marginals are matched in
//! the Pauli basis: for every Pauli operator `P` supported on the overlap
//! of two blocks, `Tr[P ρ_S] = Tr[P ρ_S']`. Matching all Paulis on `R`
//! is the same as matching `Tr_{S∖R} ρ_S` with `Tr_{S'∖R} ρ_S'`.
//!
//! When every term is real the blocks are real symmetric and only Paulis
//! with an even number of `Y` factors are constrained; otherwise blocks are
//! realified as `[[Re, -Im], [Im, Re]]` of twice the dimension.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constraints::{cost, ConstraintSet};
use crate::error::{Error, Result};
use crate::hamiltonian::{term_min_eigenvalue, LocalHamiltonian};
use crate::pauli::{Monomial, PauliMask};
use crate::qubits::QubitSet;
use crate::sdp::{self, LinearConstraint, SdpProblem, SolveStatus, SolverOptions, SparseSym, Tolerances};

/// Largest block handled by [`compile`].
pub const MAX_BLOCK_QUBITS: usize = 8;

const INTERNAL_GAP_FACTOR: f64 = 1e-2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompatMode {
    /// Match marginals on `S ∩ S'` for each pair of blocks.
    #[default]
    PairwiseIntersections,
    /// Match marginals on every `R ⊆ S ∩ S'`.
    AllSubsetIntersections,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationOptions {
    pub compat_mode: CompatMode,
    pub ppt: bool,
    pub tol: Tolerances,
    pub max_iter: usize,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions {
            compat_mode: CompatMode::default(),
            ppt: false,
            tol: Tolerances::default(),
            max_iter: 200,
        }
    }
}

impl RelaxationOptions {
    pub fn validate(&self) -> Result<()> {
        for v in [self.tol.feas, self.tol.gap] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonFinite(v));
            }
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            trace: false,
        }
    }
}

/// What a solver block represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockRole {
    Marginal(QubitSet),
    /// Partial transpose of the marginal on `of`, transposed on `part`.
    PartialTranspose {
        of: QubitSet,
        part: QubitSet,
    },
}

/// A compiled relaxation: the SDP plus what is needed to turn a dual
/// vector into an energy bound.
#[derive(Clone, Debug)]
pub struct CompiledRelaxation {
    pub problem: SdpProblem,
    pub roles: Vec<BlockRole>,
    /// `Tr X_k` for every feasible point.
    pub block_traces: Vec<f64>,
    /// Sum of minimal eigenvalues of terms no block supports.
    pub unsupported_offset: f64,
    pub real: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub beta: f64,
    pub p: u64,
    pub status: SolveStatus,
    pub dual_certified: bool,
    pub unsupported_offset: f64,
    pub primal_value: f64,
    pub iterations: usize,
}

/// Upper-triangle sparse form of a monomial, scaled by `scale`.
/// In complex mode the monomial is realified and halved so that
/// `<A, X> = Re Tr[P ρ]`.
fn monomial_matrix(m: &Monomial, real: bool, scale: f64) -> SparseSym {
    let mut s = SparseSym::new();
    let d = m.dim;
    for c in 0..d {
        let (r, v) = m.entry(c);
        if real {
            if r <= c {
                s.push(r, c, scale * v.re);
            }
        } else {
            let h = 0.5 * scale;
            if r <= c {
                s.push(r, c, h * v.re);
                s.push(r + d, c + d, h * v.re);
            }
            // Lower-left block holds Im, upper-right holds -Im.
            s.push(c, r + d, -h * v.im);
        }
    }
    s.compress();
    s
}

fn embed_dense(m: &DMatrix<Complex64>, real: bool) -> DMatrix<f64> {
    if real {
        return m.map(|v| v.re);
    }
    let d = m.nrows();
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let v = m[(i, j)] * 0.5;
            out[(i, j)] = v.re;
            out[(i + d, j + d)] = v.re;
            out[(i + d, j)] = v.im;
            out[(i, j + d)] = -v.im;
        }
    }
    out
}

fn block_dim(set: QubitSet, real: bool) -> usize {
    let d = 1usize << set.len();
    if real {
        d
    } else {
        2 * d
    }
}

fn trace_row(k: usize, set: QubitSet, real: bool) -> LinearConstraint {
    let id = PauliMask::default().local(set);
    LinearConstraint {
        terms: vec![(k, monomial_matrix(&id, real, 1.0))],
        rhs: 1.0,
    }
}

/// Non-identity Paulis on `set` that can have a nonzero expectation.
fn constrained_paulis(set: QubitSet, real: bool) -> impl Iterator<Item = PauliMask> {
    PauliMask::all_on(set).filter(move |p| !p.is_identity() && (!real || p.is_real()))
}

/// Builds the SDP for `β_C`.
pub fn compile(h: &LocalHamiltonian, c: &ConstraintSet, opts: &RelaxationOptions) -> Result<CompiledRelaxation> {
    opts.validate()?;
    if c.n() != h.n() {
        return Err(Error::DimensionMismatch {
            expected: vec![h.n()],
            got: vec![c.n()],
        });
    }
    if !c.is_simplified() {
        return Err(Error::MalformedProblem(alloc::format!(
            "constraint set {c} is not simplified"
        )));
    }
    let blocks = c.blocks();
    if let Some(big) = blocks.iter().find(|s| s.len() > MAX_BLOCK_QUBITS) {
        return Err(Error::SupportTooLarge {
            size: big.len(),
            limit: MAX_BLOCK_QUBITS,
        });
    }
    let real = h.is_real();

    let mut block_dims: Vec<usize> = blocks.iter().map(|&s| block_dim(s, real)).collect();
    let mut roles: Vec<BlockRole> = blocks.iter().map(|&s| BlockRole::Marginal(s)).collect();
    let trace_scale = if real { 1.0 } else { 2.0 };
    let mut block_traces = vec![trace_scale; blocks.len()];

    // Objective: each term goes to the first block containing its support.
    let mut dense_obj: Vec<DMatrix<f64>> = block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
    let mut offset = 0.0;
    for term in h.terms() {
        match blocks.iter().position(|s| term.support().is_subset(*s)) {
            Some(k) => {
                let frame = blocks[k];
                let dim = 1usize << frame.len();
                let mut local = DMatrix::<Complex64>::zeros(dim, dim);
                for ps in term.strings() {
                    let mono = ps.mask().local(frame);
                    for col in 0..dim {
                        let (r, v) = mono.entry(col);
                        local[(r, col)] += v * ps.coefficient;
                    }
                }
                dense_obj[k] += embed_dense(&local, real);
            }
            None => offset += term_min_eigenvalue(term)?,
        }
    }
    let mut objective: Vec<SparseSym> = dense_obj.iter().map(SparseSym::from_dense).collect();

    let mut constraints: Vec<LinearConstraint> =
        blocks.iter().enumerate().map(|(k, &s)| trace_row(k, s, real)).collect();

    // Compatibility rows. A Pauli on the overlap of several blocks gets a
    // chain of equalities between consecutive holders; any pairwise
    // equality is implied, and the rows stay independent.
    let mut holders: BTreeMap<PauliMask, Vec<usize>> = BTreeMap::new();
    for (k, &s) in blocks.iter().enumerate() {
        if s.len() < 2 {
            continue;
        }
        for other in blocks.iter().filter(|o| **o != s && o.len() >= 2) {
            let overlap = s.intersection(*other);
            if overlap.is_empty() {
                continue;
            }
            for p in constrained_paulis(overlap, real) {
                let list = holders.entry(p).or_default();
                if !list.contains(&k) {
                    list.push(k);
                }
            }
        }
    }
    // `CompatMode` does not change the row space here: a Pauli lies on
    // some `R ⊆ S ∩ S'` exactly when it lies on `S ∩ S'`.
    let _ = opts.compat_mode;
    for (p, list) in &holders {
        let mut list = list.clone();
        list.sort_unstable();
        for w in list.windows(2) {
            let (a, b) = (w[0], w[1]);
            let ma = monomial_matrix(&p.local(blocks[a]), real, 1.0);
            let mb = monomial_matrix(&p.local(blocks[b]), real, -1.0);
            constraints.push(LinearConstraint {
                terms: vec![(a, ma), (b, mb)],
                rhs: 0.0,
            });
        }
    }

    if opts.ppt {
        for (k, &s) in blocks.iter().enumerate() {
            if s.len() < 2 {
                continue;
            }
            let lowest = QubitSet::singleton(s.iter().next().unwrap_or(0));
            for part in s.subsets() {
                // One representative per bipartition: the side holding the lowest qubit.
                if part.is_empty() || part == s || !lowest.is_subset(part) {
                    continue;
                }
                let w = block_dims.len();
                block_dims.push(block_dim(s, real));
                roles.push(BlockRole::PartialTranspose { of: s, part });
                block_traces.push(trace_scale);
                objective.push(SparseSym::new());
                constraints.push(trace_row(w, s, real));
                for p in constrained_paulis(s, real) {
                    let y_in_part = (p.x & p.z & part.mask()).count_ones();
                    let sign = if y_in_part % 2 == 0 { 1.0 } else { -1.0 };
                    let mono = p.local(s);
                    constraints.push(LinearConstraint {
                        terms: vec![
                            (w, monomial_matrix(&mono, real, 1.0)),
                            (k, monomial_matrix(&mono, real, -sign)),
                        ],
                        rhs: 0.0,
                    });
                }
            }
        }
    }

    Ok(CompiledRelaxation {
        problem: SdpProblem {
            block_dims,
            objective,
            constraints,
        },
        roles,
        block_traces,
        unsupported_offset: offset,
        real,
    })
}

impl CompiledRelaxation {
    /// A valid lower bound on `β_C` from any dual vector: `b^T y` plus the
    /// offset, corrected by the negative part of each recomputed slack
    /// block times the fixed block trace. The flag reports whether the
    /// slack passed the PSD check at `eps`.
    pub fn certified_bound(&self, y: &[f64], eps: f64) -> (f64, bool) {
        let mins = sdp::dual_slack_min_eigenvalues(&self.problem, y);
        let correction: f64 = mins.iter().zip(&self.block_traces).map(|(l, t)| t * l.min(0.0)).sum();
        let certified = mins.iter().all(|l| *l >= -eps);
        (
            self.problem.dual_objective(y) + self.unsupported_offset + correction,
            certified,
        )
    }
}

/// `β_C` with its certificate status.
pub fn solve_bound(h: &LocalHamiltonian, c: &ConstraintSet, opts: &RelaxationOptions) -> Result<BoundResult> {
    let compiled = compile(h, c, opts)?;
    // Bounds are compared at ε_gap in energy units, so the solver is asked
    // for two more digits; reaching only ε_gap still counts as optimal.
    let mut solver = opts.solver_options();
    solver.tol.gap *= INTERNAL_GAP_FACTOR;
    let sol = sdp::solve(&compiled.problem, &solver)?;
    let (beta, dual_certified) = compiled.certified_bound(&sol.y, opts.tol.feas);
    let met = (sol.primal_obj - sol.dual_obj).abs() <= opts.tol.gap
        && sol.primal_infeasibility <= opts.tol.feas
        && sol.dual_infeasibility <= opts.tol.feas;
    let status = match sol.status {
        SolveStatus::NearOptimal | SolveStatus::Failed if met => SolveStatus::Optimal,
        s => s,
    };
    Ok(BoundResult {
        beta,
        p: cost(c),
        status,
        dual_certified,
        unsupported_offset: compiled.unsupported_offset,
        primal_value: sol.primal_obj + compiled.unsupported_offset,
        iterations: sol.iterations,
    })
}

pub use crate::sdp::verify_certificate;

/// One nonzero of the partial-trace map: `out[(r, c)] += in[(ri, ci)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub out_row: usize,
    pub out_col: usize,
    pub in_row: usize,
    pub in_col: usize,
}

/// Coefficients of `ρ_S ↦ Tr_{S∖R} ρ_S`. All coefficients are 1.
pub fn partial_trace_map(s: QubitSet, r: QubitSet) -> Result<Vec<TraceEntry>> {
    if !r.is_subset(s) {
        return Err(Error::NotSubset { r, s });
    }
    let k = s.len();
    // Bit position (from the most significant end) of each qubit in S.
    let keep: Vec<usize> = r.iter().map(|q| k - 1 - s.position(q).unwrap_or(0)).collect();
    let drop: Vec<usize> = s
        .difference(r)
        .iter()
        .map(|q| k - 1 - s.position(q).unwrap_or(0))
        .collect();
    let rk = keep.len();
    let compose = |kept: usize, dropped: usize| -> usize {
        let mut idx = 0usize;
        for (i, &bit) in keep.iter().enumerate() {
            if kept >> (rk - 1 - i) & 1 == 1 {
                idx |= 1 << bit;
            }
        }
        for (i, &bit) in drop.iter().enumerate() {
            if dropped >> (drop.len() - 1 - i) & 1 == 1 {
                idx |= 1 << bit;
            }
        }
        idx
    };
    let mut out = Vec::new();
    for a in 0..(1usize << rk) {
        for b in 0..(1usize << rk) {
            for e in 0..(1usize << drop.len()) {
                out.push(TraceEntry {
                    out_row: a,
                    out_col: b,
                    in_row: compose(a, e),
                    in_col: compose(b, e),
                });
            }
        }
    }
    Ok(out)
}

/// Applies [`partial_trace_map`] to a dense matrix on `S`.
pub fn partial_trace(rho: &DMatrix<Complex64>, s: QubitSet, r: QubitSet) -> Result<DMatrix<Complex64>> {
    let dim = 1usize << s.len();
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: vec![dim, dim],
            got: vec![rho.nrows(), rho.ncols()],
        });
    }
    let d = 1usize << r.len();
    let mut out = DMatrix::zeros(d, d);
    for e in partial_trace_map(s, r)? {
        out[(e.out_row, e.out_col)] += rho[(e.in_row, e.in_col)];
    }
    Ok(out)
}
