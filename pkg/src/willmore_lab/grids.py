"""Parameter domains and their finite-difference operators.

Two domains are supported: a uniform N x N grid on [-1, 1]^2 restricted to
the closed unit disc, and a latitude-longitude mesh of the 2-sphere with
cell-centred colatitudes and periodic longitude.  Derivative operators are
scipy sparse matrices acting on flattened sample arrays, so they can be
applied to any field and transposed when gradients are pulled back to nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

# fourth-order first-derivative stencils: centred and one-sided (5 points)
_C4 = (np.array([-2, -1, 0, 1, 2]), np.array([1, -8, 0, 8, -1]) / 12.0)
_F4_0 = np.array([-25, 48, -36, 16, -3]) / 12.0
_F4_1 = np.array([-3, -10, 18, -6, 1]) / 12.0
# second-order second-derivative stencils
_C2 = (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0]))
_F2 = np.array([2.0, -5.0, 4.0, -1.0])
# second-order first-derivative stencils (used for the mixed derivative)
_C1 = (np.array([-1, 0, 1]), np.array([-0.5, 0.0, 0.5]))
_F1 = np.array([-1.5, 2.0, -0.5])


def _interval_first4(n: int, h: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i in range(n):
        if 2 <= i <= n - 3:
            offs, w = _C4
            cols_i = i + offs
        elif i < 2:
            w = _F4_0 if i == 0 else _F4_1
            cols_i = np.arange(5)
        else:
            w = -(_F4_0 if i == n - 1 else _F4_1)
            cols_i = (n - 1) - np.arange(5)
        rows.extend([i] * len(w))
        cols.extend(cols_i)
        vals.extend(w)
    return sp.csr_matrix((np.array(vals) / h, (rows, cols)), shape=(n, n))


def _interval_first2(n: int, h: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i in range(n):
        if 1 <= i <= n - 2:
            offs, w = _C1
            cols_i = i + offs
        elif i == 0:
            w, cols_i = _F1, np.arange(3)
        else:
            w, cols_i = -_F1, (n - 1) - np.arange(3)
        rows.extend([i] * len(w))
        cols.extend(cols_i)
        vals.extend(w)
    return sp.csr_matrix((np.array(vals) / h, (rows, cols)), shape=(n, n))


def _interval_second2(n: int, h: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i in range(n):
        if 1 <= i <= n - 2:
            offs, w = _C2
            cols_i = i + offs
        elif i == 0:
            w, cols_i = _F2, np.arange(4)
        else:
            w, cols_i = _F2, (n - 1) - np.arange(4)
        rows.extend([i] * len(w))
        cols.extend(cols_i)
        vals.extend(w)
    return sp.csr_matrix((np.array(vals) / h**2, (rows, cols)), shape=(n, n))


def apply(op: sp.spmatrix, f: np.ndarray) -> np.ndarray:
    """Apply a sparse operator to a field whose first axis indexes samples."""
    f = np.asarray(f)
    flat = f.reshape(f.shape[0], -1)
    return np.asarray(op @ flat).reshape(f.shape)


@dataclass
class DiscGrid:
    """Uniform n x n grid on [-1, 1]^2; axis 0 is x1 and axis 1 is x2."""

    n: int
    kind: str = field(default="disc", init=False)

    def __post_init__(self) -> None:
        if self.n < 8:
            raise ValueError("disc grid needs at least 8 samples per side")
        self.h = 2.0 / (self.n - 1)
        x = np.linspace(-1.0, 1.0, self.n)
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        self.params = np.stack([X1.ravel(), X2.ravel()], axis=-1)
        r = np.hypot(X1, X2).ravel()
        self.radius = r
        self.inside = r <= 1.0 + 1e-12
        # exclude a boundary ring two samples wide from residual norms
        self.interior = r <= 1.0 - 2.0 * self.h
        self.weights = np.where(self.inside, self.h**2, 0.0)
        self._ops: dict = {}

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def size(self) -> int:
        return self.n * self.n

    @property
    def spacing(self) -> float:
        return self.h

    def complex_coordinate(self) -> np.ndarray:
        return self.params[:, 0] + 1j * self.params[:, 1]

    def _kron(self, A: sp.spmatrix, axis: int) -> sp.csr_matrix:
        eye = sp.identity(self.n, format="csr")
        return (sp.kron(A, eye) if axis == 0 else sp.kron(eye, A)).tocsr()

    def d1_op(self, axis: int) -> sp.csr_matrix:
        key = ("d1", axis)
        if key not in self._ops:
            self._ops[key] = self._kron(_interval_first4(self.n, self.h), axis)
        return self._ops[key]

    def d2_op(self, a: int, b: int) -> sp.csr_matrix:
        key = ("d2", min(a, b), max(a, b))
        if key not in self._ops:
            if a == b:
                op = self._kron(_interval_second2(self.n, self.h), a)
            else:
                D = _interval_first2(self.n, self.h)
                op = (self._kron(D, 0) @ self._kron(D, 1)).tocsr()
            self._ops[key] = op
        return self._ops[key]

    def describe(self) -> dict:
        return {"domain": "disc", "n": self.n, "boundary_ring_samples": 2}


@dataclass
class SphereMesh:
    """Latitude-longitude mesh: n_theta cell-centred rows, n_phi = 2 n_theta columns.

    Rows beyond the poles are filled by reflection, (theta, phi) -> (-theta, phi + pi),
    which is exact for geometric (parametrization-independent) fields.
    """

    n_theta: int
    kind: str = field(default="sphere", init=False)

    def __post_init__(self) -> None:
        if self.n_theta < 8:
            raise ValueError("sphere mesh needs at least 8 latitude rows")
        self.n_phi = 2 * self.n_theta
        self.dtheta = np.pi / self.n_theta
        self.dphi = 2 * np.pi / self.n_phi
        th = (np.arange(self.n_theta) + 0.5) * self.dtheta
        ph = np.arange(self.n_phi) * self.dphi
        TH, PH = np.meshgrid(th, ph, indexing="ij")
        self.params = np.stack([TH.ravel(), PH.ravel()], axis=-1)
        self.inside = np.ones(self.size, dtype=bool)
        rows = np.repeat(np.arange(self.n_theta), self.n_phi)
        self.interior = (rows > 0) & (rows < self.n_theta - 1)
        self.weights = np.full(self.size, self.dtheta * self.dphi)
        self._ops: dict = {}

    @property
    def n(self) -> int:
        return self.n_theta

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def size(self) -> int:
        return self.n_theta * self.n_phi

    @property
    def spacing(self) -> float:
        return self.dtheta

    def _node(self, j: np.ndarray, k: np.ndarray) -> np.ndarray:
        """Flat index of (row j, column k) with pole reflection for j outside the mesh."""
        nt, nph = self.n_theta, self.n_phi
        j = np.asarray(j)
        k = np.asarray(k)
        north = j < 0
        south = j >= nt
        jj = np.where(north, -j - 1, np.where(south, 2 * nt - 1 - j, j))
        kk = np.where(north | south, k + nph // 2, k) % nph
        return jj * nph + kk

    def _stencil_op(self, offs_t, offs_p, w, scale) -> sp.csr_matrix:
        J, K = np.divmod(np.arange(self.size), self.n_phi)
        rows, cols, vals = [], [], []
        for ot, op, ww in zip(offs_t, offs_p, w):
            if ww == 0:
                continue
            rows.append(np.arange(self.size))
            cols.append(self._node(J + ot, K + op))
            vals.append(np.full(self.size, ww / scale))
        M = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size),
        )
        M.sum_duplicates()
        return M

    def d1_op(self, axis: int) -> sp.csr_matrix:
        key = ("d1", axis)
        if key not in self._ops:
            offs, w = _C4
            zeros = np.zeros_like(offs)
            if axis == 0:
                op = self._stencil_op(offs, zeros, w, self.dtheta)
            else:
                op = self._stencil_op(zeros, offs, w, self.dphi)
            self._ops[key] = op
        return self._ops[key]

    def d2_op(self, a: int, b: int) -> sp.csr_matrix:
        key = ("d2", min(a, b), max(a, b))
        if key not in self._ops:
            if a == b:
                offs, w = _C2
                zeros = np.zeros_like(offs)
                step = self.dtheta if a == 0 else self.dphi
                if a == 0:
                    op = self._stencil_op(offs, zeros, w, step**2)
                else:
                    op = self._stencil_op(zeros, offs, w, step**2)
            else:
                ot = np.array([-1, -1, 1, 1])
                opp = np.array([-1, 1, -1, 1])
                w = np.array([0.25, -0.25, -0.25, 0.25])
                op = self._stencil_op(ot, opp, w, self.dtheta * self.dphi)
            self._ops[key] = op
        return self._ops[key]

    def describe(self) -> dict:
        return {"domain": "sphere", "n_theta": self.n_theta, "n_phi": self.n_phi, "polar_rows_excluded": 2}


@dataclass
class SquareGrid:
    """Uniform n x n node grid on [-a, a)^2 with spacing 2a/n (the origin is a node).

    Used by the Cauchy-transform solvers: ``inside`` marks the closed unit disc and
    ``interior`` the disc shrunk by four samples.
    """

    n: int
    half_width: float = 2.0
    kind: str = field(default="square", init=False)

    def __post_init__(self) -> None:
        if self.n < 16 or self.n % 2:
            raise ValueError("square grid needs an even number (>= 16) of samples per side")
        a = float(self.half_width)
        self.h = 2.0 * a / self.n
        x = -a + self.h * np.arange(self.n)
        self.axis = x
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        self.params = np.stack([X1.ravel(), X2.ravel()], axis=-1)
        self.radius = np.hypot(X1, X2).ravel()
        self.inside = self.radius <= 1.0 + 1e-12
        self.interior = self.radius <= 1.0 - 4.0 * self.h
        self.weights = np.where(self.inside, self.h**2, 0.0)
        self._ops: dict = {}

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def size(self) -> int:
        return self.n * self.n

    @property
    def spacing(self) -> float:
        return self.h

    def complex_coordinate(self) -> np.ndarray:
        return self.params[:, 0] + 1j * self.params[:, 1]

    _kron = DiscGrid._kron

    def d1_op(self, axis: int) -> sp.csr_matrix:
        key = ("d1", axis)
        if key not in self._ops:
            self._ops[key] = self._kron(_interval_first4(self.n, self.h), axis)
        return self._ops[key]

    def d2_op(self, a: int, b: int) -> sp.csr_matrix:
        key = ("d2", min(a, b), max(a, b))
        if key not in self._ops:
            if a == b:
                op = self._kron(_interval_second2(self.n, self.h), a)
            else:
                D = _interval_first2(self.n, self.h)
                op = (self._kron(D, 0) @ self._kron(D, 1)).tocsr()
            self._ops[key] = op
        return self._ops[key]

    def describe(self) -> dict:
        return {"domain": "square", "n": self.n, "half_width": self.half_width}


def make_grid(domain: str, n: int):
    if domain == "disc":
        return DiscGrid(n)
    if domain == "sphere":
        return SphereMesh(n)
    raise ValueError(f"unknown domain {domain!r}")
