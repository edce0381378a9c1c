"""Exterior algebra over a finite-dimensional inner-product space.

Multivectors are stored densely: a p-vector in dimension m carries C(m, p)
coefficients ordered like ``itertools.combinations(range(m), p)``.  Every
array may carry leading batch axes, so a whole grid of per-sample
multivectors (with a per-sample Gram matrix) is handled by one object.
Coefficients may be complex; all products are complex-bilinear.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

MAX_DIM = 8


class GradeError(ValueError):
    """Raised when an operation is asked for grades it cannot produce."""


@lru_cache(maxsize=None)
def basis(dim: int, grade: int) -> tuple[tuple[int, ...], ...]:
    """Sorted index tuples labelling the basis p-vectors E_I."""
    return tuple(combinations(range(dim), grade))


@lru_cache(maxsize=None)
def _index(dim: int, grade: int) -> dict[tuple[int, ...], int]:
    return {I: k for k, I in enumerate(basis(dim, grade))}


def _perm_sign(seq: tuple[int, ...]) -> int:
    sign = 1
    s = list(seq)
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            if s[i] > s[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def _wedge_table(dim: int, p: int, q: int) -> np.ndarray:
    """T[I, J, K] = sign with E_I ^ E_J = sign E_K (zero when I, J overlap)."""
    out = np.zeros((comb(dim, p), comb(dim, q), comb(dim, p + q)))
    if p + q > dim:
        return out
    idx = _index(dim, p + q)
    for a, I in enumerate(basis(dim, p)):
        for b, J in enumerate(basis(dim, q)):
            if set(I) & set(J):
                continue
            K = tuple(sorted(I + J))
            out[a, b, idx[K]] = _perm_sign(I + J)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _complement_table(dim: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    """For each I: position of its complement and sign of the shuffle (I, I^c)."""
    idx = _index(dim, dim - p)
    pos = np.empty(comb(dim, p), dtype=int)
    sgn = np.empty(comb(dim, p))
    for a, I in enumerate(basis(dim, p)):
        Ic = tuple(k for k in range(dim) if k not in I)
        pos[a] = idx[Ic]
        sgn[a] = _perm_sign(I + Ic)
    return pos, sgn


@lru_cache(maxsize=None)
def _derivation_table(dim: int, p: int) -> np.ndarray:
    """D[K, I, j, k]: coefficient of E_K in A.E_I per unit entry A[j, k].

    A linear map A of the base space acts on p-vectors as the derivation
    A.(v_1 ^ ... ^ v_p) = sum_t v_1 ^ ... ^ A v_t ^ ... ^ v_p.
    """
    C = comb(dim, p)
    out = np.zeros((C, C, dim, dim))
    idx = _index(dim, p)
    for a, I in enumerate(basis(dim, p)):
        for t, k in enumerate(I):
            for j in range(dim):
                new = list(I)
                new[t] = j
                if len(set(new)) < p:
                    continue
                K = tuple(sorted(new))
                out[idx[K], a, j, k] += _perm_sign(tuple(new))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class InnerProduct:
    """Gram matrix of the coordinate basis (possibly batched) and an orientation."""

    gram: np.ndarray
    orientation: int = 1

    def __post_init__(self) -> None:
        G = np.asarray(self.gram, dtype=float)
        if G.ndim < 2 or G.shape[-1] != G.shape[-2]:
            raise ValueError("gram must have trailing shape (m, m)")
        if not 2 <= G.shape[-1] <= MAX_DIM:
            raise ValueError(f"dimension must lie in 2..{MAX_DIM}")
        if not np.allclose(G, np.swapaxes(G, -1, -2), atol=1e-12, rtol=1e-10):
            raise ValueError("gram matrix is not symmetric")
        if np.any(np.linalg.eigvalsh(G) <= 0):
            raise ValueError("gram matrix is not positive definite")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        object.__setattr__(self, "gram", G)

    @property
    def dim(self) -> int:
        return self.gram.shape[-1]

    @classmethod
    def euclidean(cls, dim: int, orientation: int = 1) -> "InnerProduct":
        return cls(np.eye(dim), orientation)

    def compound(self, grade: int) -> np.ndarray:
        """Gram matrix of the basis p-vectors: minors det(G[I, J])."""
        m = self.dim
        if grade == 0:
            return np.ones(self.gram.shape[:-2] + (1, 1))
        B = np.array(basis(m, grade))
        sub = self.gram[..., B[:, None, :, None], B[None, :, None, :]]
        return np.linalg.det(sub)

    def volume_factor(self) -> np.ndarray:
        """sqrt(det G): coordinate volume E_1^...^E_m = sqrt(det G) * (unit volume)."""
        return np.sqrt(np.linalg.det(self.gram))


class MultiVector:
    """A (batched) p-vector with coefficients on sorted basis tuples.

    Grades above the dimension are allowed and denote the zero space
    (no coefficients); they arise from wedges that overflow.
    """

    __array_priority__ = 100

    def __init__(self, dim: int, grade: int, coeffs) -> None:
        if not 2 <= dim <= MAX_DIM:
            raise ValueError(f"dimension must lie in 2..{MAX_DIM}")
        if grade < 0:
            raise GradeError(f"negative grade {grade}")
        c = np.asarray(coeffs)
        if not np.iscomplexobj(c):
            c = c.astype(float)
        if c.ndim == 0:
            c = c.reshape(1)
        if c.shape[-1] != comb(dim, grade):
            raise ValueError(
                f"grade-{grade} multivector in dimension {dim} needs "
                f"{comb(dim, grade)} coefficients, got {c.shape[-1]}"
            )
        self.dim = dim
        self.grade = grade
        self.coeffs = c

    # construction helpers -------------------------------------------------
    @classmethod
    def zeros(cls, dim: int, grade: int, batch: tuple[int, ...] = ()) -> "MultiVector":
        return cls(dim, grade, np.zeros(batch + (comb(dim, grade),)))

    @classmethod
    def scalar(cls, dim: int, value) -> "MultiVector":
        v = np.asarray(value)
        return cls(dim, 0, v[..., None])

    @classmethod
    def vector(cls, components) -> "MultiVector":
        c = np.asarray(components)
        return cls(c.shape[-1], 1, c)

    @classmethod
    def basis_blade(cls, dim: int, indices: tuple[int, ...]) -> "MultiVector":
        """E_{i1} ^ ... ^ E_{ip} for arbitrary (possibly unsorted) indices."""
        p = len(indices)
        out = np.zeros(comb(dim, p))
        if len(set(indices)) == p:
            out[_index(dim, p)[tuple(sorted(indices))]] = _perm_sign(tuple(indices))
        return cls(dim, p, out)

    @classmethod
    def from_dict(cls, dim: int, grade: int, entries: dict) -> "MultiVector":
        mv = cls.zeros(dim, grade)
        for key, val in entries.items():
            mv = mv + val * cls.basis_blade(dim, tuple(key))
        return mv

    # accessors ------------------------------------------------------------
    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-1]

    def component(self, indices: tuple[int, ...]):
        return self.coeffs[..., _index(self.dim, self.grade)[tuple(indices)]]

    def as_dict(self, tol: float = 0.0) -> dict[tuple[int, ...], complex | float]:
        if self.batch_shape:
            raise ValueError("as_dict needs an unbatched multivector")
        return {I: c.item() for I, c in zip(basis(self.dim, self.grade), self.coeffs) if abs(c) > tol}

    @property
    def real(self) -> "MultiVector":
        return MultiVector(self.dim, self.grade, self.coeffs.real)

    @property
    def imag(self) -> "MultiVector":
        return MultiVector(self.dim, self.grade, self.coeffs.imag)

    def conj(self) -> "MultiVector":
        return MultiVector(self.dim, self.grade, np.conj(self.coeffs))

    # arithmetic -----------------------------------------------------------
    def _check(self, other: "MultiVector") -> None:
        if not isinstance(other, MultiVector):
            raise TypeError("expected a MultiVector")
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        if other.grade != self.grade:
            raise GradeError(f"grade mismatch: {self.grade} vs {other.grade}")

    def __add__(self, other: "MultiVector") -> "MultiVector":
        self._check(other)
        return MultiVector(self.dim, self.grade, self.coeffs + other.coeffs)

    def __sub__(self, other: "MultiVector") -> "MultiVector":
        self._check(other)
        return MultiVector(self.dim, self.grade, self.coeffs - other.coeffs)

    def __neg__(self) -> "MultiVector":
        return MultiVector(self.dim, self.grade, -self.coeffs)

    def __mul__(self, s) -> "MultiVector":
        s = np.asarray(s)
        return MultiVector(self.dim, self.grade, self.coeffs * s[..., None])

    __rmul__ = __mul__

    def __truediv__(self, s) -> "MultiVector":
        s = np.asarray(s)
        return MultiVector(self.dim, self.grade, self.coeffs / s[..., None])

    def __repr__(self) -> str:
        return f"MultiVector(dim={self.dim}, grade={self.grade}, batch={self.batch_shape})"

    def allclose(self, other: "MultiVector", atol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.allclose(self.coeffs, other.coeffs, atol=atol, rtol=0))


def _same_dim(a: MultiVector, b: MultiVector) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def _check_ip(a: MultiVector, ip: InnerProduct) -> None:
    if ip.dim != a.dim:
        raise ValueError(f"dimension mismatch: multivector {a.dim} vs inner product {ip.dim}")


def wedge(a: MultiVector, b: MultiVector) -> MultiVector:
    """Exterior product.  Grades above m give the (coefficient-free) zero."""
    _same_dim(a, b)
    m, p, q = a.dim, a.grade, b.grade
    T = _wedge_table(m, p, q)
    coeffs = np.einsum("...i,...j,ijk->...k", a.coeffs, b.coeffs, T)
    return MultiVector(m, p + q, coeffs)


def inner(a: MultiVector, b: MultiVector, ip: InnerProduct) -> np.ndarray:
    """Complex-bilinear scalar product <a, b> induced by the Gram matrix."""
    a._check(b)
    _check_ip(a, ip)
    Gp = ip.compound(a.grade)
    return np.einsum("...i,...ij,...j->...", a.coeffs, Gp, b.coeffs)


def norm(a: MultiVector, ip: InnerProduct) -> np.ndarray:
    return np.sqrt(np.abs(inner(a.conj(), a, ip)))


def hodge_star(a: MultiVector, ip: InnerProduct) -> MultiVector:
    """Metric Hodge star: beta ^ *a = <beta, a> vol for every p-vector beta."""
    _check_ip(a, ip)
    m, p = a.dim, a.grade
    pos, sgn = _complement_table(m, p)
    lowered = np.einsum("...ij,...j->...i", ip.compound(p), a.coeffs)
    scale = ip.orientation / ip.volume_factor()
    out = np.zeros(lowered.shape[:-1] + (comb(m, m - p),), dtype=lowered.dtype)
    out[..., pos] = sgn * lowered * np.asarray(scale)[..., None]
    return MultiVector(m, m - p, out)


def interior_mult(a: MultiVector, b: MultiVector, ip: InnerProduct) -> MultiVector:
    """a ⌞ b, the (p - q)-vector with <a ⌞ b, c> = <a, b ^ c> for all c."""
    _same_dim(a, b)
    _check_ip(a, ip)
    m, p, q = a.dim, a.grade, b.grade
    if p < q:
        raise GradeError(f"interior product needs grade(a) >= grade(b), got {p} < {q}")
    r = p - q
    T = _wedge_table(m, q, r)
    lowered = np.einsum("...ij,...j->...i", ip.compound(p), a.coeffs)
    rhs = np.einsum("...k,...l,ljk->...j", lowered, b.coeffs, T)
    Gr = ip.compound(r)
    Gr = np.broadcast_to(Gr, rhs.shape[:-1] + Gr.shape[-2:])
    coeffs = np.linalg.solve(Gr, rhs[..., None])[..., 0]
    return MultiVector(m, r, coeffs)


def bullet(a: MultiVector, b: MultiVector, ip: InnerProduct) -> MultiVector:
    """Contraction a • b of a p-vector with a q-vector (q >= 1), grade p + q - 2.

    Defined on vectors by a • v = a ⌞ v and extended to b = v ^ c (v a vector,
    c an s-vector) by a • (v ^ c) = (a • v) ^ c + (-1)^(r s) (a • c) ^ v with
    r = 1 the grade of v.
    """
    _same_dim(a, b)
    _check_ip(a, ip)
    m, p, q = a.dim, a.grade, b.grade
    if q == 0:
        raise GradeError("contraction with a scalar is undefined")
    if p == 0 or p + q - 2 < 0 or p + q - 2 > m:
        raise GradeError(f"contraction of grades {p} and {q} underflows")
    if q == 1:
        return interior_mult(a, b, ip)
    out = None
    for k, I in enumerate(basis(m, q)):
        part = _bullet_blade(a, I, ip)
        term = part * b.coeffs[..., k]
        out = term if out is None else out + term
    return out


def _bullet_blade(a: MultiVector, I: tuple[int, ...], ip: InnerProduct) -> MultiVector:
    m = a.dim
    v = MultiVector.basis_blade(m, I[:1])
    if len(I) == 1:
        return interior_mult(a, v, ip)
    c = MultiVector.basis_blade(m, I[1:])
    s = len(I) - 1
    first = wedge(interior_mult(a, v, ip), c)
    second = wedge(_bullet_blade(a, I[1:], ip), v)
    return first + second * ((-1) ** s)


def derivation_matrix(A: np.ndarray, grade: int) -> np.ndarray:
    """Matrix of the derivation induced on p-vectors by the (batched) map A."""
    A = np.asarray(A)
    m = A.shape[-1]
    if grade == 0:
        return np.zeros(A.shape[:-2] + (1, 1), dtype=A.dtype)
    D = _derivation_table(m, grade)
    return np.einsum("KIjk,...jk->...KI", D, A)


def project_normal_contraction(n: MultiVector, w: MultiVector, ip: InnerProduct) -> MultiVector:
    """(-1)^(m-1) n ⌞ (n ⌞ w): projection of a vector onto the space spanned by n."""
    if w.grade != 1:
        raise GradeError("projection acts on vectors")
    m = n.dim
    inner_part = interior_mult(n, w, ip)
    return interior_mult(n, inner_part, ip) * ((-1) ** (m - 1))
