"""Reference values for the solver and relaxation tests.

Generates strictly feasible random block SDPs, writes them in the
canonical dump format, and solves them with two independent cvxpy
backends. Also computes the triangle ZZ pair relaxation with explicit
partial traces. Results go to crates/certsearch/tests/fixtures/.

Run from the repository root:  python3 tools/sdp_oracle.py
"""

import json
import pathlib

import cvxpy as cp
import numpy as np

ROOT = pathlib.Path(__file__).resolve().parents[1]
FIX = ROOT / "crates" / "certsearch" / "tests" / "fixtures"


def random_problem(rng):
    k = int(rng.integers(1, 4))
    dims = [int(rng.integers(1, 33)) for _ in range(k)]
    free = sum(d * (d + 1) // 2 for d in dims)
    m = int(rng.integers(1, min(200, free) + 1))
    rows = []
    while len(rows) < m:
        row = []
        for b, d in enumerate(dims):
            if rng.random() < 0.5 and len(dims) > 1:
                continue
            nnz = int(rng.integers(1, max(2, d * d // 6)))
            a = np.zeros((d, d))
            for _ in range(nnz):
                i, j = sorted(rng.integers(0, d, size=2))
                v = round(float(rng.normal()), 3)
                a[i, j] += v
                a[j, i] = a[i, j]
            if np.any(a):
                row.append((b, a))
        if row:
            rows.append(row)
    # Drop rows that are linearly dependent on earlier ones.
    vecs, kept = [], []
    for row in rows:
        v = np.concatenate([
            next((a for b2, a in row if b2 == b), np.zeros((d, d)))[np.triu_indices(d)]
            for b, d in enumerate(dims)
        ])
        trial = np.array(vecs + [v])
        if np.linalg.matrix_rank(trial, tol=1e-9) == len(trial):
            vecs.append(v)
            kept.append(row)
    rows = kept
    x0 = []
    z0 = []
    for d in dims:
        g = rng.normal(size=(d, d))
        x0.append(g @ g.T / d + 0.1 * np.eye(d))
        g = rng.normal(size=(d, d))
        z0.append(g @ g.T / d + 0.1 * np.eye(d))
    y0 = rng.normal(size=len(rows))
    b = np.array([sum(np.sum(a * x0[blk]) for blk, a in row) for row in rows])
    c = [z.copy() for z in z0]
    for yi, row in zip(y0, rows):
        for blk, a in row:
            c[blk] += yi * a
    c = [np.round(cb, 12) for cb in c]
    b = np.round(b, 12)
    return dims, c, rows, b


def fmt(v):
    return repr(float(v))


def write_dump(path, dims, c, rows, b):
    lines = ["sdp-dump 1", f"blocks {len(dims)}", " ".join(str(d) for d in dims)]
    obj = [(blk, i, j, cb[i, j]) for blk, cb in enumerate(c) for j in range(cb.shape[0]) for i in range(j + 1) if cb[i, j] != 0.0]
    lines.append(f"objective {len(obj)}")
    lines += [f"{blk} {i} {j} {fmt(v)}" for blk, i, j, v in obj]
    lines.append(f"constraints {len(rows)}")
    for idx, (row, rhs) in enumerate(zip(rows, b)):
        ents = [(blk, i, j, a[i, j]) for blk, a in row for j in range(a.shape[0]) for i in range(j + 1) if a[i, j] != 0.0]
        lines.append(f"row {idx} {fmt(rhs)} {len(ents)}")
        lines += [f"{blk} {i} {j} {fmt(v)}" for blk, i, j, v in ents]
    path.write_text("\n".join(lines) + "\n")


def solve(dims, c, rows, b, solver):
    xs = [cp.Variable((d, d), symmetric=True) for d in dims]
    cons = [x >> 0 for x in xs]
    for row, rhs in zip(rows, b):
        cons.append(sum(cp.trace(a @ xs[blk]) for blk, a in row) == rhs)
    obj = cp.Minimize(sum(cp.trace(cb @ x) for cb, x in zip(c, xs)))
    prob = cp.Problem(obj, cons)
    if solver == "CVXOPT":
        prob.solve(solver=solver)
        assert prob.status == "optimal", (solver, prob.status)
        return prob.value
    for tol in (1e-9, 1e-8):
        prob.solve(solver=solver, tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol, max_iter=500)
        if prob.status == "optimal":
            return prob.value
    raise AssertionError((solver, prob.status))


def triangle_pairs():
    # Pair marginals on the three edges, matched by explicit partial traces.
    zz = np.diag([1.0, -1.0, -1.0, 1.0])
    rho = {e: cp.Variable((4, 4), symmetric=True) for e in [(0, 1), (1, 2), (0, 2)]}

    def marg(r, keep_first):
        # Basis |ab> with a the lower-indexed qubit.
        if keep_first:
            return cp.bmat([[r[0, 0] + r[1, 1], r[0, 2] + r[1, 3]], [r[2, 0] + r[3, 1], r[2, 2] + r[3, 3]]])
        return cp.bmat([[r[0, 0] + r[2, 2], r[0, 1] + r[2, 3]], [r[1, 0] + r[3, 2], r[1, 1] + r[3, 3]]])

    cons = [r >> 0 for r in rho.values()] + [cp.trace(r) == 1 for r in rho.values()]
    cons += [marg(rho[(0, 1)], True) == marg(rho[(0, 2)], True)]
    cons += [marg(rho[(0, 1)], False) == marg(rho[(1, 2)], True)]
    cons += [marg(rho[(1, 2)], False) == marg(rho[(0, 2)], False)]
    prob = cp.Problem(cp.Minimize(sum(cp.trace(zz @ r) for r in rho.values())), cons)
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11)
    return prob.value


def main():
    rng = np.random.default_rng(20240611)
    out = FIX / "sdp"
    out.mkdir(parents=True, exist_ok=True)
    reference = {}
    for t in range(50):
        dims, c, rows, b = random_problem(rng)
        name = f"random_{t:02d}.sdp"
        write_dump(out / name, dims, c, rows, b)
        # Clarabel at tight tolerances is the reference; CVXOPT at its
        # defaults is an independent cross-check.
        v1 = solve(dims, c, rows, b, "CLARABEL")
        v2 = solve(dims, c, rows, b, "CVXOPT")
        assert abs(v1 - v2) <= 1e-6 * (1 + abs(v1)), (name, v1, v2)
        reference[name] = {"objective": v1, "cross_check": v2, "blocks": dims, "constraints": len(rows)}
        print(name, dims, len(rows), v1, v2)
    (out / "reference.json").write_text(json.dumps(reference, indent=1, sort_keys=True) + "\n")
    tri = triangle_pairs()
    print("triangle pair relaxation", tri)
    (FIX / "triangle.json").write_text(json.dumps({"beta_pairs": tri}, indent=1) + "\n")


if __name__ == "__main__":
    main()
