"""Small vectorised front end for assembling cone programs and solving them with Clarabel.

Affine expressions are kept as lists of (variable index array, coefficient array)
terms plus a constant vector, so whole blocks of identical cones (one per
trajectory segment) are added in a single call.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

import clarabel


class Aff:
    """A vector of n affine expressions in the program's variables."""

    __slots__ = ("n", "terms", "const")
    __array_ufunc__ = None  # make ndarray (op) Aff dispatch to Aff's reflected operators

    def __init__(self, n: int, terms=None, const=None):
        self.n = int(n)
        self.terms = list(terms or [])
        self.const = np.zeros(self.n) if const is None else np.broadcast_to(np.asarray(const, float), (self.n,)).copy()

    @classmethod
    def of(cls, idx) -> "Aff":
        idx = np.asarray(idx, dtype=np.int64).ravel()
        return cls(idx.size, [(idx, np.ones(idx.size))])

    @classmethod
    def constant(cls, value, n: int) -> "Aff":
        return cls(n, const=value)

    def _coerce(self, other) -> "Aff":
        if isinstance(other, Aff):
            if other.n != self.n:
                raise ValueError(f"length mismatch {self.n} vs {other.n}")
            return other
        return Aff(self.n, const=other)

    def __add__(self, other):
        o = self._coerce(other)
        return Aff(self.n, self.terms + o.terms, self.const + o.const)

    __radd__ = __add__

    def __neg__(self):
        return Aff(self.n, [(i, -c) for i, c in self.terms], -self.const)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, k):
        k = np.broadcast_to(np.asarray(k, float), (self.n,))
        return Aff(self.n, [(i, c * k) for i, c in self.terms], self.const * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / np.asarray(k, float))

    def sum(self) -> "Aff":
        """Collapse to a single expression (sum of the n entries)."""
        return Aff(1, [(i, c) for i, c in self.terms], [self.const.sum()])

    def value(self, x: np.ndarray) -> np.ndarray:
        out = self.const.copy()
        if self.n == 1:
            for i, c in self.terms:
                out[0] += float(np.dot(c, x[i]))
        else:
            for i, c in self.terms:
                out += c * x[i]
        return out


class SolverError(RuntimeError):
    def __init__(self, status: str, info: dict | None = None):
        self.status = status
        self.info = dict(info or {})
        self.x = None
        super().__init__(f"cone solver returned status {status}")


class ConeProgram:
    """minimise c^T x subject to affine expressions lying in cones."""

    def __init__(self):
        self.nvar = 0
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._b: list[np.ndarray] = []
        self._cones: list[tuple[object, int]] = []
        self.nrow = 0
        self.c: np.ndarray | None = None
        self.c_const = 0.0

    def var(self, *shape) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        idx = np.arange(self.nvar, self.nvar + n).reshape(shape) if shape else np.array(self.nvar)
        self.nvar += n
        return idx

    # -- cone blocks -----------------------------------------------------------------

    def _emit(self, exprs: list[Aff], k: int, n: int):
        base = self.nrow
        for j, e in enumerate(exprs):
            rows = base + np.arange(n) * k + j
            for idx, coef in e.terms:
                # a summed (n == 1) expression may carry long terms
                self._rows.append(rows if idx.size == n else np.full(idx.size, rows[0]))
                self._cols.append(idx)
                self._vals.append(-coef)
            self._b.append((rows, e.const))
        self.nrow += n * k

    def add_zero(self, e: Aff):
        self._emit([e], 1, e.n)
        self._cones.append((clarabel.ZeroConeT(e.n), 1))

    def add_nonneg(self, e: Aff):
        self._emit([e], 1, e.n)
        self._cones.append((clarabel.NonnegativeConeT(e.n), 1))

    def add_soc(self, exprs: list[Aff]):
        """n cones: exprs[0] >= ||(exprs[1], ..., exprs[k-1])||."""
        n = exprs[0].n
        k = len(exprs)
        self._emit(exprs, k, n)
        self._cones.append((clarabel.SecondOrderConeT(k), n))

    def add_pow(self, x: Aff, y: Aff, z: Aff, alpha: float):
        """n cones: x^alpha * y^(1-alpha) >= |z|, x, y >= 0."""
        self._emit([x, y, z], 3, x.n)
        self._cones.append((clarabel.PowerConeT(float(alpha)), x.n))

    def minimize(self, e: Aff):
        c = np.zeros(self.nvar)
        for idx, coef in e.sum().terms:
            np.add.at(c, idx, coef)
        self.c = c
        self.c_const = float(e.sum().const[0])

    # -- solve -----------------------------------------------------------------------

    def matrices(self):
        rows = np.concatenate(self._rows)
        cols = np.concatenate(self._cols)
        vals = np.concatenate(self._vals)
        A = sp.csc_matrix((vals, (rows, cols)), shape=(self.nrow, self.nvar))
        b = np.zeros(self.nrow)
        for r, const in self._b:
            b[r] += const
        cones = []
        for cone, count in self._cones:
            cones.extend([cone] * count)
        return A, b, cones

    def solve(self, tol: float = 1e-8, max_iter: int = 200, verbose: bool = False):
        A, b, cones = self.matrices()
        P = sp.csc_matrix((self.nvar, self.nvar))
        settings = clarabel.DefaultSettings()
        settings.verbose = verbose
        settings.max_iter = max_iter
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        settings.tol_feas = tol
        settings.tol_ktratio = max(tol, 1e-7)
        solver = clarabel.DefaultSolver(P, self.c, A, b, cones, settings)
        sol = solver.solve()
        status = str(sol.status)
        info = {
            "status": status,
            "iterations": int(sol.iterations),
            "solve_time": float(sol.solve_time),
            "obj_val": float(sol.obj_val) + self.c_const,
        }
        if status not in ("Solved", "AlmostSolved"):
            err = SolverError(status, info)
            err.x = np.asarray(sol.x)
            raise err
        return np.asarray(sol.x), info
