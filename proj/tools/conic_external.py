#!/usr/bin/env python3
"""External solver adapter: solve an adn-conic text program with cvxpy.

usage: conic_external.py PROGRAM SOLUTION
"""

import math
import sys

import cvxpy as cp
import numpy as np
import scipy.sparse as sp


class Tokens:
    def __init__(self, text):
        self.words = text.split()
        self.pos = 0

    def word(self):
        w = self.words[self.pos]
        self.pos += 1
        return w

    def expect(self, keyword):
        w = self.word()
        if w != keyword:
            raise ValueError(f"expected {keyword!r}, got {w!r}")

    def int(self):
        return int(self.word())

    def real(self):
        return float(self.word())


def read_program(path):
    t = Tokens(open(path).read())
    t.expect("adn-conic")
    t.int()
    t.expect("variables")
    n = t.int()
    t.expect("constant")
    const = t.real()
    c = np.zeros(n)
    t.expect("linear")
    for _ in range(t.int()):
        i = t.int()
        c[i] += t.real()
    d = np.zeros(n)
    t.expect("hessian_diagonal")
    for _ in range(t.int()):
        i = t.int()
        d[i] += t.real()
    low_rank = []
    t.expect("low_rank")
    for _ in range(t.int()):
        low_rank.append([(t.int(), t.real()) for _ in range(t.int())])
    rows, cols, vals, rhs = [], [], [], []
    t.expect("equalities")
    for r in range(t.int()):
        rhs.append(t.real())
        for _ in range(t.int()):
            rows.append(r)
            cols.append(t.int())
            vals.append(t.real())
    cones = []
    t.expect("cones")
    for _ in range(t.int()):
        kind = t.word()
        cones.append((kind, [t.int() for _ in range(t.int())]))
    t.expect("end")
    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), n))
    return n, const, c, d, low_rank, A, np.array(rhs), cones


def fmt(v):
    return repr(float(v)) if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def main(prog_path, sol_path):
    n, const, c, d, low_rank, A, b, cones = read_program(prog_path)
    x = cp.Variable(n)
    obj = c @ x + const
    if np.any(d > 0):
        obj = obj + 0.5 * cp.sum(cp.multiply(d, cp.square(x)))
    for col in low_rank:
        f = np.zeros(n)
        for i, v in col:
            f[i] += v
        obj = obj + 0.5 * cp.square(f @ x)
    cons = []
    eq = None
    if A.shape[0] > 0:
        eq = A @ x == b
        cons.append(eq)
    cone_cons = []
    for kind, idx in cones:
        if kind == "nonneg":
            k = x[idx] >= 0
        elif kind == "soc":
            k = cp.SOC(x[idx[0]], x[idx[1:]])
        else:
            a, bb, w = x[idx[0]], x[idx[1]], x[idx[2:]]
            k = cp.SOC(a + bb, cp.hstack([cp.reshape(a - bb, (1,), order="C"), math.sqrt(2.0) * w]))
        cone_cons.append((kind, idx, k))
        cons.append(k)
    problem = cp.Problem(cp.Minimize(obj), cons)
    solver = cp.CLARABEL if "CLARABEL" in cp.installed_solvers() else None
    try:
        problem.solve(solver=solver)
    except cp.error.SolverError:
        problem.solve()
    status = {
        cp.OPTIMAL: "optimal",
        cp.OPTIMAL_INACCURATE: "optimal",
        cp.INFEASIBLE: "infeasible",
        cp.INFEASIBLE_INACCURATE: "infeasible",
        cp.UNBOUNDED: "unbounded",
        cp.UNBOUNDED_INACCURATE: "unbounded",
    }.get(problem.status, "iter_limit")

    xv = np.zeros(n) if x.value is None else np.asarray(x.value)
    y = np.zeros(A.shape[0])
    if eq is not None and eq.dual_value is not None:
        y = -np.asarray(eq.dual_value)
    z = np.zeros(n)
    for kind, idx, k in cone_cons if status == "optimal" else []:
        dv = k.dual_value
        if dv is None:
            continue
        if kind == "nonneg":
            z[idx] = np.asarray(dv)
        else:
            flat = np.concatenate([np.atleast_1d(np.asarray(part)).ravel() for part in dv])
            if kind == "soc":
                z[idx] = flat
            else:
                z[idx[0]] = flat[0] + flat[1]
                z[idx[1]] = flat[0] - flat[1]
                z[idx[2:]] = math.sqrt(2.0) * flat[2:]
    objective = problem.value if status == "optimal" else (math.inf if status == "infeasible" else -math.inf)

    with open(sol_path, "w") as f:
        f.write("adn-solution 1\n")
        f.write(f"status {status}\n")
        f.write(f"objective {fmt(objective)}\n")
        f.write("iterations 0\n")
        for name, v in (("primal", xv), ("dual_eq", y), ("dual_cone", z)):
            f.write(f"{name} {len(v)}\n")
            for a in v:
                f.write(fmt(a) + "\n")
        f.write("end\n")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
