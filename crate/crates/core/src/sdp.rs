//! Primal–dual interior-point solver for block-diagonal real symmetric SDPs
//!
//! ```text
//!   primal:  min <C, X>   s.t. <A_i, X> = b_i,  X ⪰ 0
//!   dual:    max b^T y    s.t. Z = C - sum_i y_i A_i ⪰ 0
//! ```
//!
//! Infeasible-start path following with Nesterov–Todd scaling and a
//! Mehrotra predictor–corrector step. The Schur complement
//! `M_ij = <A_i, W A_j W>` is formed densely and factored once per
//! iteration.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Sparse symmetric matrix stored as upper-triangle triplets `(i, j, v)`, `i <= j`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseSym {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new() -> Self {
        SparseSym::default()
    }

    /// Adds `v` at `(i, j)` and, implicitly, at `(j, i)`.
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.entries.push((a, b, v));
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut s = SparseSym::new();
        for j in 0..m.ncols() {
            for i in 0..=j {
                s.push(i, j, m[(i, j)]);
            }
        }
        s
    }

    /// Merges duplicate coordinates and drops zeros.
    pub fn compress(&mut self) {
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, v) in &self.entries {
            *merged.entry((i, j)).or_insert(0.0) += v;
        }
        self.entries = merged
            .into_iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect();
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        self.add_to(&mut m, 1.0);
        m
    }

    /// `m += scale * self`.
    pub fn add_to(&self, m: &mut DMatrix<f64>, scale: f64) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += scale * v;
            if i != j {
                m[(j, i)] += scale * v;
            }
        }
    }

    /// Frobenius inner product with a symmetric dense matrix.
    pub fn dot(&self, x: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| {
                if i == j {
                    v * x[(i, i)]
                } else {
                    v * (x[(i, j)] + x[(j, i)])
                }
            })
            .sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum()
    }

    /// `self * w` for dense `w`.
    fn mul_dense(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let d = w.nrows();
        let mut out = DMatrix::zeros(d, w.ncols());
        for &(i, j, v) in &self.entries {
            for c in 0..w.ncols() {
                out[(i, c)] += v * w[(j, c)];
            }
            if i != j {
                for c in 0..w.ncols() {
                    out[(j, c)] += v * w[(i, c)];
                }
            }
        }
        out
    }
}

/// One equality row `sum_k <A_ik, X_k> = b_i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, SparseSym)>,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub objective: Vec<SparseSym>,
    pub constraints: Vec<LinearConstraint>,
}

impl SdpProblem {
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.block_dims.len() {
            return Err(Error::MalformedProblem(format!(
                "{} objective blocks for {} block dimensions",
                self.objective.len(),
                self.block_dims.len()
            )));
        }
        if self.constraints.is_empty() {
            return Err(Error::MalformedProblem("no constraints".into()));
        }
        let check = |k: usize, s: &SparseSym| -> Result<()> {
            let d = *self
                .block_dims
                .get(k)
                .ok_or_else(|| Error::MalformedProblem(format!("block {k} does not exist")))?;
            for &(i, j, v) in &s.entries {
                if i > j || j >= d || !v.is_finite() {
                    return Err(Error::MalformedProblem(format!(
                        "bad entry ({i}, {j}, {v}) in block {k} of size {d}"
                    )));
                }
            }
            Ok(())
        };
        for (k, c) in self.objective.iter().enumerate() {
            check(k, c)?;
        }
        for row in &self.constraints {
            if !row.rhs.is_finite() {
                return Err(Error::MalformedProblem(format!("non-finite rhs {}", row.rhs)));
            }
            for (k, a) in &row.terms {
                check(*k, a)?;
            }
        }
        Ok(())
    }

    /// `A(X)`.
    pub fn apply_a(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.constraints.len(),
            self.constraints
                .iter()
                .map(|row| row.terms.iter().map(|(k, a)| a.dot(&x[*k])).sum()),
        )
    }

    /// `sum_i y_i A_i` per block.
    pub fn apply_at(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        for (row, &yi) in self.constraints.iter().zip(y) {
            for (k, a) in &row.terms {
                a.add_to(&mut out[*k], yi);
            }
        }
        out
    }

    pub fn primal_objective(&self, x: &[DMatrix<f64>]) -> f64 {
        self.objective.iter().zip(x).map(|(c, xk)| c.dot(xk)).sum()
    }

    pub fn dual_objective(&self, y: &[f64]) -> f64 {
        self.constraints.iter().zip(y).map(|(r, yi)| r.rhs * yi).sum()
    }

    /// Dual slack `Z = C - sum_i y_i A_i`, recomputed from `y`.
    pub fn dual_slack(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        let aty = self.apply_at(y);
        self.objective
            .iter()
            .zip(aty)
            .zip(&self.block_dims)
            .map(|((c, a), &d)| c.to_dense(d) - a)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative primal and dual infeasibility, and PSD slack.
    pub feas: f64,
    /// Duality gap, required both relative `|pobj - dobj| / (1 + |pobj| + |dobj|)`
    /// and absolute `|pobj - dobj|`.
    pub gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { feas: 1e-8, gap: 1e-7 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: Tolerances,
    pub max_iter: usize,
    /// Record one [`IterationLog`] per iteration.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: Tolerances::default(),
            max_iter: 200,
            trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    pub mu: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub gap: f64,
    /// `<X, Z>`, nonnegative while both iterates stay positive definite.
    pub complementarity: f64,
    /// `<R_d, X> - y^T r_p`; `primal_obj - dual_obj` equals this plus the
    /// complementarity, so it vanishes on feasible iterates.
    pub infeasibility_term: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub x: Vec<DMatrix<f64>>,
    pub y: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub trace: Vec<IterationLog>,
}

/// True iff `λ_min(m) >= -eps`.
pub fn min_eig_check(m: &DMatrix<f64>, eps: f64) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min() >= -eps
}

/// Per-block smallest eigenvalues of the recomputed dual slack.
pub fn dual_slack_min_eigenvalues(p: &SdpProblem, y: &[f64]) -> Vec<f64> {
    p.dual_slack(y)
        .into_iter()
        .map(|z| {
            if z.nrows() == 0 {
                0.0
            } else {
                SymmetricEigen::new(z).eigenvalues.min()
            }
        })
        .collect()
}

/// Accepts `y` as a certificate iff every block of `C - sum y_i A_i`
/// has smallest eigenvalue at least `-eps`.
pub fn verify_certificate(p: &SdpProblem, y: &[f64], eps: f64) -> bool {
    if y.len() != p.constraints.len() {
        return false;
    }
    p.dual_slack(y).iter().all(|z| min_eig_check(z, eps))
}

/// Rows identical to an earlier row, and whether their right-hand sides agree.
fn duplicate_rows(p: &SdpProblem) -> Result<Vec<bool>> {
    type Key = Vec<(usize, usize, usize, u64)>;
    let keys: Vec<Key> = p
        .constraints
        .iter()
        .map(|row| {
            let mut k: Key = Vec::new();
            for (b, a) in &row.terms {
                let mut a = a.clone();
                a.compress();
                k.extend(a.entries.iter().map(|&(i, j, v)| (*b, i, j, v.to_bits())));
            }
            k.sort_unstable();
            k
        })
        .collect();
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then(a.cmp(&b)));
    let mut dup = vec![false; keys.len()];
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        if keys[a] == keys[b] {
            let first = a.min(b);
            let later = a.max(b);
            if p.constraints[first].rhs != p.constraints[later].rhs {
                return Err(Error::InconsistentRows(first, later));
            }
            dup[later] = true;
        }
    }
    Ok(dup)
}

/// Rows with no nonzero coefficient are either trivially satisfied (`b_i = 0`)
/// or make the problem infeasible.
fn empty_rows(p: &SdpProblem) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(p.constraints.len());
    for (i, row) in p.constraints.iter().enumerate() {
        let empty = row.terms.iter().all(|(_, a)| a.entries.iter().all(|e| e.2 == 0.0));
        if empty && row.rhs != 0.0 {
            return Err(Error::MalformedProblem(format!(
                "row {i} has no coefficients but rhs {}",
                row.rhs
            )));
        }
        out.push(empty);
    }
    Ok(out)
}

/// Per-block lists of the constraint rows touching that block.
struct RowIndex {
    by_block: Vec<Vec<(usize, usize)>>, // (row, term position)
}

impl RowIndex {
    fn new(p: &SdpProblem) -> Self {
        let mut by_block = vec![Vec::new(); p.block_dims.len()];
        for (i, row) in p.constraints.iter().enumerate() {
            for (t, (k, _)) in row.terms.iter().enumerate() {
                by_block[*k].push((i, t));
            }
        }
        RowIndex { by_block }
    }
}

/// `M_ij = sum_k <A_ik, W_k A_jk W_k>`.
fn schur_complement(p: &SdpProblem, rows: &RowIndex, w: &[DMatrix<f64>]) -> DMatrix<f64> {
    let m = p.constraints.len();
    let mut schur = DMatrix::zeros(m, m);
    for (k, list) in rows.by_block.iter().enumerate() {
        let wk = &w[k];
        for (pos_j, &(j, tj)) in list.iter().enumerate() {
            let aj = &p.constraints[j].terms[tj].1;
            if aj.is_empty() {
                continue;
            }
            let waw = wk * aj.mul_dense(wk);
            for &(i, ti) in &list[pos_j..] {
                let v = p.constraints[i].terms[ti].1.dot(&waw);
                schur[(i, j)] += v;
                if i != j {
                    schur[(j, i)] += v;
                }
            }
        }
    }
    schur
}

/// Checks that the rows of `p` are linearly independent, naming the
/// offending rows otherwise.
pub fn check_rank(p: &SdpProblem) -> Result<()> {
    let rows = RowIndex::new(p);
    let eye: Vec<DMatrix<f64>> = p.block_dims.iter().map(|&d| DMatrix::identity(d, d)).collect();
    let gram = schur_complement(p, &rows, &eye);
    let dependent = dependent_rows(&gram);
    if dependent.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient { rows: dependent })
    }
}

/// Indices whose Cholesky pivot collapses when rows are taken in order.
fn dependent_rows(gram: &DMatrix<f64>) -> Vec<usize> {
    let m = gram.nrows();
    let mut l = DMatrix::<f64>::zeros(m, m);
    let mut bad = Vec::new();
    let mut alive = vec![true; m];
    for j in 0..m {
        let mut d = gram[(j, j)];
        for k in 0..j {
            if alive[k] {
                d -= l[(j, k)] * l[(j, k)];
            }
        }
        if d <= 1e-10 * gram[(j, j)].max(1e-300) {
            bad.push(j);
            alive[j] = false;
            continue;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..m {
            let mut s = gram[(i, j)];
            for k in 0..j {
                if alive[k] {
                    s -= l[(i, k)] * l[(j, k)];
                }
            }
            l[(i, j)] = s / d;
        }
    }
    bad
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob_norm(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

/// Lower Cholesky factor, retrying with a tiny diagonal shift.
fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c.l());
    }
    let scale = m.diagonal().amax().max(1e-300);
    let mut shifted = m.clone();
    for i in 0..m.nrows() {
        shifted[(i, i)] += 1e-14 * scale;
    }
    Cholesky::new(shifted).map(|c| c.l())
}

/// Largest step `α` with `L L^T + α D ⪰ 0` given the Cholesky factor `L`.
fn max_step(l: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    if l.nrows() == 0 {
        return f64::INFINITY;
    }
    let Some(linv_d) = l.solve_lower_triangular(d) else {
        return 0.0;
    };
    let Some(t) = l.solve_lower_triangular(&linv_d.transpose()) else {
        return 0.0;
    };
    let lam = SymmetricEigen::new(sym(t)).eigenvalues.min();
    if lam < 0.0 {
        -1.0 / lam
    } else {
        f64::INFINITY
    }
}

/// Nesterov–Todd scaling of one block: `W = G G^T` with `W Z W = X` and
/// `G^{-1} X G^{-T} = G^T Z G = diag(lambda)`.
struct NtBlock {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
    lx: DMatrix<f64>,
    lz: DMatrix<f64>,
}

impl NtBlock {
    fn new(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Self> {
        let lx = cholesky_lower(x)?;
        let lz = cholesky_lower(z)?;
        let svd = (lz.transpose() * &lx).svd(true, true);
        let v = svd.v_t.as_ref()?.transpose();
        let u = svd.u.as_ref()?;
        let lambda = svd.singular_values.clone();
        if lambda.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return None;
        }
        let d = lambda.len();
        let inv_sqrt = DVector::from_iterator(d, lambda.iter().map(|s| 1.0 / s.sqrt()));
        let sqrt = DVector::from_iterator(d, lambda.iter().map(|s| s.sqrt()));
        // G = Lx V Σ^{-1/2}
        let mut g = &lx * &v;
        for (c, s) in inv_sqrt.iter().enumerate() {
            g.column_mut(c).scale_mut(*s);
        }
        // G^{-1} = Σ^{-1/2} U^T Lz^T, using Lz^T Lx = U Σ V^T.
        let mut g_inv = u.transpose() * lz.transpose();
        for (r, s) in inv_sqrt.iter().enumerate() {
            g_inv.row_mut(r).scale_mut(*s);
        }
        let _ = sqrt;
        let w = sym(&g * g.transpose());
        Some(NtBlock {
            g,
            g_inv,
            w,
            lambda,
            lx,
            lz,
        })
    }
}

/// Iterative refinement passes on each Schur complement solve.
const REFINE_STEPS: usize = 2;

/// Iterations without a better merit before the run is stopped.
const STAGNATION_ITERS: usize = 8;

/// `(X, y, Z)`.
type Iterate = (Vec<DMatrix<f64>>, DVector<f64>, Vec<DMatrix<f64>>);

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    dz: Vec<DMatrix<f64>>,
}

/// Solves `min <C,X>` subject to the rows of `p` and `X ⪰ 0`.
pub fn solve(p: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    p.validate()?;
    let dup = duplicate_rows(p)?;
    let empty = empty_rows(p)?;
    if dup.iter().any(|d| *d) || empty.iter().any(|e| *e) {
        // Solve the reduced problem and scatter multipliers back.
        let keep: Vec<usize> = (0..p.constraints.len()).filter(|&i| !dup[i] && !empty[i]).collect();
        let reduced = SdpProblem {
            block_dims: p.block_dims.clone(),
            objective: p.objective.clone(),
            constraints: keep.iter().map(|&i| p.constraints[i].clone()).collect(),
        };
        let mut sol = solve(&reduced, opts)?;
        let mut y = vec![0.0; p.constraints.len()];
        for (k, &i) in keep.iter().enumerate() {
            y[i] = sol.y[k];
        }
        sol.y = y;
        return Ok(sol);
    }
    check_rank(p)?;
    Ipm::new(p, opts).run()
}

struct Ipm<'a> {
    p: &'a SdpProblem,
    opts: &'a SolverOptions,
    rows: RowIndex,
    // Factor of A A^T, used to project primal steps back onto A(dX) = r_p.
    gram: Option<Cholesky<f64, nalgebra::Dyn>>,
    c: Vec<DMatrix<f64>>,
    b: DVector<f64>,
    n_total: f64,
    norm_b: f64,
    norm_c: f64,
}

impl<'a> Ipm<'a> {
    fn new(p: &'a SdpProblem, opts: &'a SolverOptions) -> Self {
        let c: Vec<DMatrix<f64>> = p
            .objective
            .iter()
            .zip(&p.block_dims)
            .map(|(s, &d)| s.to_dense(d))
            .collect();
        let b = DVector::from_iterator(p.constraints.len(), p.constraints.iter().map(|r| r.rhs));
        let norm_b = b.norm();
        let norm_c = frob_norm(&c);
        let rows = RowIndex::new(p);
        let eye: Vec<DMatrix<f64>> = p.block_dims.iter().map(|&d| DMatrix::identity(d, d)).collect();
        let gram = Cholesky::new(schur_complement(p, &rows, &eye));
        Ipm {
            p,
            opts,
            rows,
            gram,
            c,
            b,
            n_total: p.block_dims.iter().sum::<usize>() as f64,
            norm_b,
            norm_c,
        }
    }

    fn initial_point(&self) -> (Vec<DMatrix<f64>>, DVector<f64>, Vec<DMatrix<f64>>) {
        let mut x = Vec::new();
        let mut z = Vec::new();
        for (k, &d) in self.p.block_dims.iter().enumerate() {
            let df = d as f64;
            let mut xi = 10.0f64.max(df.sqrt());
            let mut eta = 10.0f64.max(df.sqrt());
            let mut max_a = 0.0f64;
            for &(i, t) in &self.rows.by_block[k] {
                let a = &self.p.constraints[i].terms[t].1;
                let na = a.frobenius_sq().sqrt();
                max_a = max_a.max(na);
                xi = xi.max(df * (1.0 + self.b[i].abs()) / (1.0 + na));
            }
            let nc = self.c[k].norm();
            eta = eta.max((1.0 + max_a.max(nc)) / df.sqrt());
            x.push(DMatrix::identity(d, d) * xi);
            z.push(DMatrix::identity(d, d) * eta);
        }
        (x, DVector::zeros(self.p.constraints.len()), z)
    }

    /// Newton direction for complementarity right-hand side `rc` (original space).
    fn direction(
        &self,
        nt: &[NtBlock],
        chol: &Cholesky<f64, nalgebra::Dyn>,
        rp: &DVector<f64>,
        rd: &[DMatrix<f64>],
        rc: &[DMatrix<f64>],
    ) -> Direction {
        // M dy = rp - A(Rc) + A(W Rd W)
        let wrdw: Vec<DMatrix<f64>> = nt.iter().zip(rd).map(|(b, r)| &b.w * r * &b.w).collect();
        let rhs = rp - self.p.apply_a(rc) + self.p.apply_a(&wrdw);
        let mut dy = chol.solve(&rhs);
        let mut aty = self.p.apply_at(dy.as_slice());
        // Near the optimum M is badly conditioned; refining against the
        // operator itself keeps A(dX) = r_p and stops primal drift.
        for _ in 0..REFINE_STEPS {
            let wadw: Vec<DMatrix<f64>> = nt.iter().zip(&aty).map(|(b, a)| &b.w * a * &b.w).collect();
            let resid = &rhs - self.p.apply_a(&wadw);
            if resid.norm() <= 1e-15 * (1.0 + rhs.norm()) {
                break;
            }
            dy += chol.solve(&resid);
            aty = self.p.apply_at(dy.as_slice());
        }
        let dz: Vec<DMatrix<f64>> = rd.iter().zip(&aty).map(|(r, a)| r - a).collect();
        let mut dx: Vec<DMatrix<f64>> = nt
            .iter()
            .zip(rc)
            .zip(&dz)
            .map(|((b, r), d)| sym(r - &b.w * d * &b.w))
            .collect();
        // W dZ W loses digits once W is ill-conditioned, and with large
        // multipliers that residual costs objective. Remove it by least squares.
        if let Some(g) = &self.gram {
            let miss = rp - self.p.apply_a(&dx);
            let fix = self.p.apply_at(g.solve(&miss).as_slice());
            for (d, f) in dx.iter_mut().zip(&fix) {
                *d += f;
            }
        }
        Direction { dx, dy, dz }
    }

    fn step_lengths(&self, nt: &[NtBlock], dir: &Direction) -> (f64, f64) {
        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        for (k, b) in nt.iter().enumerate() {
            ap = ap.min(max_step(&b.lx, &dir.dx[k]));
            ad = ad.min(max_step(&b.lz, &dir.dz[k]));
        }
        (ap, ad)
    }

    fn run(&self) -> Result<SdpSolution> {
        let tol = self.opts.tol;
        let (mut x, mut y, mut z) = self.initial_point();
        let mut trace = Vec::new();
        let mut best_dual: Option<(f64, Vec<f64>)> = None;
        let mut status = SolveStatus::Failed;
        let mut iterations = 0;
        let mut stalls = 0;
        // Iterate with the best merit so far; restored if the run ends early.
        let mut best: Option<(f64, usize, Iterate)> = None;

        for iter in 0..=self.opts.max_iter {
            iterations = iter;
            let rp = &self.b - self.p.apply_a(&x);
            let aty = self.p.apply_at(y.as_slice());
            let rd: Vec<DMatrix<f64>> = self.c.iter().zip(&z).zip(&aty).map(|((c, zk), a)| c - zk - a).collect();
            let mu = inner(&x, &z) / self.n_total;
            let pobj = inner(&self.c, &x);
            let dobj = self.b.dot(&y);
            let pinf = rp.norm() / (1.0 + self.norm_b);
            let dinf = frob_norm(&rd) / (1.0 + self.norm_c);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            if self.opts.trace {
                trace.push(IterationLog {
                    iter,
                    mu,
                    primal_infeasibility: pinf,
                    dual_infeasibility: dinf,
                    primal_obj: pobj,
                    dual_obj: dobj,
                    gap,
                    complementarity: inner(&x, &z),
                    infeasibility_term: inner(&rd, &x) - rp.dot(&y),
                });
            }
            if dinf <= tol.feas && best_dual.as_ref().is_none_or(|(v, _)| dobj > *v) {
                best_dual = Some((dobj, y.as_slice().to_vec()));
            }
            let abs_gap = (pobj - dobj).abs();
            let merit = (pinf / tol.feas)
                .max(dinf / tol.feas)
                .max(gap / tol.gap)
                .max(abs_gap / tol.gap);
            if merit.is_finite() && best.as_ref().is_none_or(|b| merit < b.0) {
                best = Some((merit, iter, (x.clone(), y.clone(), z.clone())));
            }
            if best.as_ref().is_some_and(|b| iter >= b.1 + STAGNATION_ITERS) {
                break;
            }
            // The absolute test matters for bounds: a relative gap alone
            // lets the dual objective trail the optimum by a multiple of ε_gap.
            if pinf <= tol.feas && dinf <= tol.feas && gap <= tol.gap && (pobj - dobj).abs() <= tol.gap {
                status = SolveStatus::Optimal;
                break;
            }
            if iter == self.opts.max_iter || !mu.is_finite() {
                break;
            }

            let Some(nt) = x
                .iter()
                .zip(&z)
                .map(|(xk, zk)| NtBlock::new(xk, zk))
                .collect::<Option<Vec<_>>>()
            else {
                break;
            };
            let w: Vec<DMatrix<f64>> = nt.iter().map(|b| b.w.clone()).collect();
            let schur = schur_complement(self.p, &self.rows, &w);
            let chol = match Cholesky::new(schur.clone()) {
                Some(c) => c,
                None => {
                    let mut shifted = schur;
                    let s = shifted.diagonal().amax() * 1e-13;
                    for i in 0..shifted.nrows() {
                        shifted[(i, i)] += s;
                    }
                    match Cholesky::new(shifted) {
                        Some(c) => c,
                        None => break,
                    }
                }
            };

            // Predictor: affine-scaling direction, rc = -X.
            let rc_aff: Vec<DMatrix<f64>> = x.iter().map(|xk| -xk).collect();
            let aff = self.direction(&nt, &chol, &rp, &rd, &rc_aff);
            let (ap, ad) = self.step_lengths(&nt, &aff);
            let ap = ap.min(1.0);
            let ad = ad.min(1.0);
            let mut mu_aff = 0.0;
            for k in 0..x.len() {
                let xa = &x[k] + &aff.dx[k] * ap;
                let za = &z[k] + &aff.dz[k] * ad;
                mu_aff += xa.dot(&za);
            }
            mu_aff /= self.n_total;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // Corrector with second-order term in the scaled space:
            // Λ D + D Λ = 2σμ I − 2Λ² − (ΔX̃ΔZ̃ + ΔZ̃ΔX̃).
            let rc: Vec<DMatrix<f64>> = nt
                .iter()
                .enumerate()
                .map(|(k, b)| {
                    let dxs = &b.g_inv * &aff.dx[k] * b.g_inv.transpose();
                    let dzs = b.g.transpose() * &aff.dz[k] * &b.g;
                    let h = &dxs * &dzs;
                    let d = b.lambda.len();
                    let mut dm = DMatrix::zeros(d, d);
                    for i in 0..d {
                        for j in 0..d {
                            let mut r = -(h[(i, j)] + h[(j, i)]);
                            if i == j {
                                r += 2.0 * sigma * mu - 2.0 * b.lambda[i] * b.lambda[i];
                            }
                            dm[(i, j)] = r / (b.lambda[i] + b.lambda[j]);
                        }
                    }
                    sym(&b.g * dm * b.g.transpose())
                })
                .collect();
            let dir = self.direction(&nt, &chol, &rp, &rd, &rc);
            let (ap, ad) = self.step_lengths(&nt, &dir);
            let gamma = 0.9 + 0.09 * ap.min(ad).min(1.0);
            let ap = (gamma * ap).min(1.0);
            let ad = (gamma * ad).min(1.0);
            if ap < 1e-10 && ad < 1e-10 {
                stalls += 1;
                if stalls >= 3 {
                    break;
                }
            } else {
                stalls = 0;
            }
            for k in 0..x.len() {
                x[k] = sym(&x[k] + &dir.dx[k] * ap);
                z[k] = sym(&z[k] + &dir.dz[k] * ad);
            }
            y += &dir.dy * ad;
        }

        if status != SolveStatus::Optimal {
            if let Some((_, _, (bx, by, bz))) = best {
                x = bx;
                y = by;
                z = bz;
            }
        }
        let pobj = inner(&self.c, &x);
        let mut dobj = self.b.dot(&y);
        let rp = &self.b - self.p.apply_a(&x);
        let aty = self.p.apply_at(y.as_slice());
        let rd: Vec<DMatrix<f64>> = self.c.iter().zip(&z).zip(&aty).map(|((c, zk), a)| c - zk - a).collect();
        let pinf = rp.norm() / (1.0 + self.norm_b);
        let mut dinf = frob_norm(&rd) / (1.0 + self.norm_c);
        let mut y_out = y.as_slice().to_vec();
        let mut gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if status != SolveStatus::Optimal {
            if let Some((v, yb)) = best_dual {
                if dinf > tol.feas || v > dobj {
                    y_out = yb;
                    dobj = v;
                    dinf = tol.feas;
                    gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
                }
            }
            status = if gap <= 1e3 * tol.gap && pinf <= 1e3 * tol.feas && dinf <= 1e3 * tol.feas {
                SolveStatus::NearOptimal
            } else {
                SolveStatus::Failed
            };
        }
        Ok(SdpSolution {
            x,
            y: y_out,
            z,
            primal_obj: pobj,
            dual_obj: dobj,
            gap,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            iterations,
            status,
            trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single(_d: usize, entries: &[(usize, usize, f64)]) -> SparseSym {
        let mut s = SparseSym::new();
        for &(i, j, v) in entries {
            s.push(i, j, v);
        }
        s
    }

    #[test]
    fn trace_minimization_with_pinned_corner() {
        // min Tr X s.t. X_00 = 1 → X = diag(1, 0), value 1.
        let p = SdpProblem {
            block_dims: vec![2],
            objective: vec![single(2, &[(0, 0, 1.0), (1, 1, 1.0)])],
            constraints: vec![LinearConstraint {
                terms: vec![(0, single(2, &[(0, 0, 1.0)]))],
                rhs: 1.0,
            }],
        };
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.primal_obj, 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.x[0][(0, 0)], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[0][(1, 1)], 0.0, epsilon = 1e-6);
        assert!(sol.gap <= 1e-7);
    }

    #[test]
    fn eigenvalue_minimization() {
        let p = SdpProblem {
            block_dims: vec![2],
            objective: vec![single(2, &[(0, 0, 1.0), (1, 1, -1.0)])],
            constraints: vec![LinearConstraint {
                terms: vec![(0, single(2, &[(0, 0, 1.0), (1, 1, 1.0)]))],
                rhs: 1.0,
            }],
        };
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.dual_obj, -1.0, epsilon = 1e-7);
        assert!(verify_certificate(&p, &sol.y, 1e-8));
    }

    #[test]
    fn min_eig_check_examples() {
        assert!(min_eig_check(&DMatrix::identity(3, 3), 1e-9));
        assert!(!min_eig_check(&(-DMatrix::<f64>::identity(3, 3)), 1e-9));
        assert!(min_eig_check(&DMatrix::zeros(3, 3), 1e-9));
    }

    #[test]
    fn zero_multiplier_fails_when_cost_indefinite() {
        let p = SdpProblem {
            block_dims: vec![2],
            objective: vec![single(2, &[(0, 0, 1.0), (1, 1, -1.0)])],
            constraints: vec![LinearConstraint {
                terms: vec![(0, single(2, &[(0, 0, 1.0), (1, 1, 1.0)]))],
                rhs: 1.0,
            }],
        };
        assert!(!verify_certificate(&p, &[0.0], 1e-8));
    }

    #[test]
    fn dependent_rows_are_named() {
        let row = |v: f64| LinearConstraint {
            terms: vec![(0, single(2, &[(0, 0, v)]))],
            rhs: v,
        };
        let mut third = row(1.0);
        third.terms[0].1.push(1, 1, 1.0);
        let p = SdpProblem {
            block_dims: vec![2],
            objective: vec![single(2, &[(0, 0, 1.0)])],
            constraints: vec![row(1.0), third, row(2.0)],
        };
        match solve(&p, &SolverOptions::default()) {
            Err(Error::RankDeficient { rows }) => assert_eq!(rows, vec![2]),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_rows_are_dropped_or_rejected() {
        let row = |rhs: f64| LinearConstraint {
            terms: vec![(0, single(2, &[(0, 0, 1.0), (1, 1, 1.0)]))],
            rhs,
        };
        let p = SdpProblem {
            block_dims: vec![2],
            objective: vec![single(2, &[(0, 0, 1.0), (1, 1, -1.0)])],
            constraints: vec![row(1.0), row(1.0)],
        };
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.y.len(), 2);
        assert_abs_diff_eq!(sol.dual_obj, -1.0, epsilon = 1e-7);
        let bad = SdpProblem {
            constraints: vec![row(1.0), row(2.0)],
            ..p
        };
        assert!(matches!(
            solve(&bad, &SolverOptions::default()),
            Err(Error::InconsistentRows(0, 1))
        ));
    }
}
