"""Discrete immersions into an ambient chart, their geometry and energies.

An :class:`Immersion` stores, for every sample of a parameter grid, the chart
coordinates of the surface point together with first and second parameter
derivatives.  Built-in surfaces carry closed-form derivatives; sampled input
gets fourth-order (first) and second-order (second) finite differences.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import grids as _grids
from .ambient import AmbientManifold, euclidean, inner_h, make_ambient, riem_apply
from .exterior import InnerProduct, MultiVector, derivation_matrix, hodge_star, wedge


class ImmersionError(ValueError):
    """The sampled map is not an immersion or violates a declared property."""


class SchemaError(ValueError):
    """An immersion file does not follow the expected JSON layout."""


TOL_CONF_EXACT = 1e-8
TOL_CONF_FILE = 1e-3
MIN_SINGULAR_RATIO = 1e-6


@dataclass
class Immersion:
    grid: object
    phi: np.ndarray  # (P, m)
    d1: np.ndarray  # (P, 2, m)
    d2: np.ndarray  # (P, 2, 2, m)
    ambient: AmbientManifold
    conformal: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict)
    derivatives: str = "exact"
    tol_conf: float = TOL_CONF_EXACT

    def __post_init__(self) -> None:
        P = self.grid.size
        m = self.ambient.dim
        self.phi = np.asarray(self.phi, dtype=float).reshape(P, m)
        self.d1 = np.asarray(self.d1, dtype=float).reshape(P, 2, m)
        self.d2 = np.asarray(self.d2, dtype=float).reshape(P, 2, 2, m)
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.d1)) and np.all(np.isfinite(self.d2))):
            raise ImmersionError("non-finite samples")
        self.check_immersion()
        if self.conformal:
            defect = self.conformality_defect()
            if np.max(defect[self.grid.inside]) > self.tol_conf:
                raise ImmersionError(
                    f"declared conformal but defect {np.max(defect[self.grid.inside]):.2e} exceeds {self.tol_conf:.1e}"
                )

    @property
    def dim(self) -> int:
        return self.ambient.dim

    @property
    def size(self) -> int:
        return self.grid.size

    def metric_at_samples(self) -> np.ndarray:
        return self.ambient.metric(self.phi)

    def first_fundamental_form(self) -> np.ndarray:
        h = self.metric_at_samples()
        return np.einsum("pij,pai,pbj->pab", h, self.d1, self.d1)

    def check_immersion(self) -> None:
        g = self.first_fundamental_form()[self.grid.inside]
        ev = np.linalg.eigvalsh(g)
        if np.any(ev[:, 0] <= 0):
            raise ImmersionError("dPhi has rank < 2 at some sample")
        ratio = np.sqrt(ev[:, 0] / ev[:, 1])
        if np.min(ratio) < MIN_SINGULAR_RATIO:
            raise ImmersionError(f"immersion condition fails: singular-value ratio {np.min(ratio):.2e}")

    def conformality_defect(self) -> np.ndarray:
        """|<Phi_1, Phi_2>| + ||Phi_1| - |Phi_2||, relative to |Phi_1|."""
        g = self.first_fundamental_form()
        a = np.sqrt(g[:, 0, 0])
        b = np.sqrt(g[:, 1, 1])
        return (np.abs(g[:, 0, 1]) / a + np.abs(a - b)) / a

    def with_phi(self, phi: np.ndarray, name: str | None = None) -> "Immersion":
        """A sampled immersion with the same grid and ambient and FD derivatives."""
        return from_samples(self.grid, phi, self.ambient, conformal=False, name=name or self.name)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "derivatives": self.derivatives,
            "conformal": self.conformal,
            **self.grid.describe(),
            "ambient": self.ambient.describe(),
        }


def fd_derivatives(grid, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference first and second parameter derivatives of sampled phi."""
    phi = np.asarray(phi, dtype=float)
    d1 = np.stack([_grids.apply(grid.d1_op(a), phi) for a in range(2)], axis=1)
    d2 = np.empty(phi.shape[:1] + (2, 2) + phi.shape[1:])
    for a in range(2):
        for b in range(a, 2):
            v = _grids.apply(grid.d2_op(a, b), phi)
            d2[:, a, b] = v
            d2[:, b, a] = v
    return d1, d2


def from_samples(grid, phi, ambient: AmbientManifold, conformal: bool = False, name: str = "sampled", tol_conf: float = TOL_CONF_FILE) -> Immersion:
    phi = np.asarray(phi, dtype=float).reshape(grid.size, ambient.dim)
    d1, d2 = fd_derivatives(grid, phi)
    return Immersion(grid, phi, d1, d2, ambient, conformal=conformal, name=name, derivatives="fd", tol_conf=tol_conf)


# ---------------------------------------------------------------------------
# geometry


@dataclass
class GeometryField:
    h: np.ndarray  # (P, m, m) ambient metric at the samples
    christoffel: np.ndarray  # (P, m, m, m)
    riemann: np.ndarray  # (P, m, m, m, m)
    g: np.ndarray  # (P, 2, 2)
    lam: np.ndarray  # (P,) log |Phi_1|_h
    frame_coeffs: np.ndarray  # (P, 2, 2): e_a = E[a, i] Phi_i
    e: np.ndarray  # (P, 2, m)
    normals: np.ndarray  # (P, m - 2, m)
    n: MultiVector  # (m - 2)-vector *_h(e1 ^ e2)
    hessian: np.ndarray  # (P, 2, 2, m) covariant D_{Phi_i} Phi_j
    sff: np.ndarray  # (P, 2, 2, m) II(e_a, e_b)
    H: np.ndarray  # (P, m)
    H0: np.ndarray  # (P, m) complex
    Kg: np.ndarray
    Kbar: np.ndarray
    dvol: np.ndarray  # (P,) quadrature weights including the area element

    @property
    def ip(self) -> InnerProduct:
        return InnerProduct(self.h)

    def project_normal(self, V: np.ndarray) -> np.ndarray:
        """Gram-Schmidt projection of (complex) vectors onto the normal space."""
        out = V.copy()
        for a in range(2):
            ea = self.e[:, a]
            out = out - inner_h(self.h, V, ea)[..., None] * ea
        return out

    def project_tangent(self, V: np.ndarray) -> np.ndarray:
        return V - self.project_normal(V)

    def sff_norm2(self) -> np.ndarray:
        return sum(inner_h(self.h, self.sff[:, a, b], self.sff[:, a, b]) for a in range(2) for b in range(2))


def geometry(imm: Immersion) -> GeometryField:
    """Pointwise geometry of ``imm``, cached on the immersion until its arrays are replaced."""
    key = (id(imm.phi), id(imm.d1), id(imm.d2), id(imm.ambient))
    cached = imm.__dict__.get("_geometry")
    if cached is not None and cached[0] == key:
        return cached[1]
    geo = _compute_geometry(imm)
    imm.__dict__["_geometry"] = (key, geo)
    return geo


def _compute_geometry(imm: Immersion) -> GeometryField:
    amb = imm.ambient
    phi, d1, d2 = imm.phi, imm.d1, imm.d2
    m = amb.dim
    h = amb.metric(phi)
    G = amb.christoffel(phi)
    R = amb.riemann(phi)
    g = np.einsum("pij,pai,pbj->pab", h, d1, d1)
    lam = 0.5 * np.log(g[:, 0, 0])
    # orthonormal tangent frame by Gram-Schmidt in the order (Phi_1, Phi_2)
    E = np.zeros(g.shape)
    E[:, 0, 0] = 1.0 / np.sqrt(g[:, 0, 0])
    c = g[:, 0, 1] / g[:, 0, 0]
    norm2 = np.sqrt(g[:, 1, 1] - c * g[:, 0, 1])
    E[:, 1, 0] = -c / norm2
    E[:, 1, 1] = 1.0 / norm2
    e = np.einsum("pai,pik->pak", E, d1)
    hess = d2 + np.einsum("pkab,pia,pjb->pijk", G, d1, d1)
    tang = np.einsum("pij,paj,pqi->pqa", h, e, hess.reshape(-1, 4, m)).reshape(-1, 2, 2, 2)
    hess_n = hess - np.einsum("pija,pak->pijk", tang, e)
    sff = np.einsum("pai,pbj,pijk->pabk", E, E, hess_n)
    H = 0.5 * (sff[:, 0, 0] + sff[:, 1, 1])
    H0 = 0.5 * (sff[:, 0, 0] - sff[:, 1, 1] - 2j * sff[:, 0, 1])
    ip = InnerProduct(h)
    nvec = hodge_star(wedge(MultiVector(m, 1, e[:, 0]), MultiVector(m, 1, e[:, 1])), ip)
    normals = _normal_frame(h, e)
    Kbar = inner_h(h, riem_apply(R, e[:, 0], e[:, 1], e[:, 1]), e[:, 0])
    Kg = Kbar + inner_h(h, sff[:, 0, 0], sff[:, 1, 1]) - inner_h(h, sff[:, 0, 1], sff[:, 0, 1])
    dvol = np.sqrt(np.linalg.det(g)) * imm.grid.weights
    return GeometryField(h, G, R, g, lam, E, e, normals, nvec, hess, sff, H, H0, Kg, Kbar, dvol)


def _normal_frame(h: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Orthonormal normal frame completing (e1, e2), oriented so e1^e2^n1^... is positive."""
    P, _, m = e.shape
    basis = list(e.transpose(1, 0, 2))
    normals = []
    candidates = np.broadcast_to(np.eye(m), (P, m, m)).copy()
    for _ in range(m - 2):
        # project every coordinate vector and keep the longest residual per sample
        res = candidates.copy()
        for b in basis:
            res = res - np.einsum("pij,pci,pj->pc", h, candidates, b)[..., None] * b[:, None, :]
        lens = np.einsum("pij,pci,pcj->pc", h, res, res)
        pick = np.argmax(lens, axis=1)
        v = res[np.arange(P), pick]
        v = v / np.sqrt(inner_h(h, v, v))[:, None]
        normals.append(v)
        basis.append(v)
    frame = np.stack(basis, axis=1)
    sign = np.sign(np.linalg.det(frame))
    normals[-1] = normals[-1] * sign[:, None]
    return np.stack(normals, axis=1)


# ---------------------------------------------------------------------------
# complex-coordinate calculus on conformal immersions


class ConformalCalculus:
    """z = x1 + i x2 derivatives and covariant derivatives along a conformal immersion."""

    def __init__(self, imm: Immersion, geo: GeometryField | None = None, strict: bool = True) -> None:
        # strict=False keeps only the coordinate (not complex) operations meaningful
        if strict and not imm.conformal:
            raise ImmersionError("complex-coordinate objects need a conformal immersion")
        self.imm = imm
        self.geo = geometry(imm) if geo is None else geo
        self.grid = imm.grid
        self.m = imm.dim
        self.pz = 0.5 * (imm.d1[:, 0] - 1j * imm.d1[:, 1])
        self.pzb = np.conj(self.pz)
        g = self.geo
        self.e2l = np.exp(2 * g.lam)
        self.ez = np.exp(-g.lam)[:, None] * self.pz
        self.ezb = np.conj(self.ez)
        self.H = g.H
        self.H0 = g.H0
        self.h = g.h
        self.G = g.christoffel
        self.R = g.riemann

    # scalar/array partial derivatives ---------------------------------------
    def d(self, f: np.ndarray, axis: int) -> np.ndarray:
        return _grids.apply(self.grid.d1_op(axis), f)

    def dd(self, f: np.ndarray, a: int, b: int) -> np.ndarray:
        return _grids.apply(self.grid.d2_op(a, b), f)

    def dz(self, f: np.ndarray) -> np.ndarray:
        return 0.5 * (self.d(f, 0) - 1j * self.d(f, 1))

    def dzb(self, f: np.ndarray) -> np.ndarray:
        return 0.5 * (self.d(f, 0) + 1j * self.d(f, 1))

    # covariant derivatives -----------------------------------------------------
    def gamma_along(self, X: np.ndarray) -> np.ndarray:
        """Matrix A with A V = Gamma(X, V), X a (complex) direction field."""
        return np.einsum("pkab,pa->pkb", self.G, X)

    def cov(self, V: np.ndarray, axis: int) -> np.ndarray:
        """D_{d_i Phi} V for a (complex) vector field sampled on the grid."""
        A = self.gamma_along(self.imm.d1[:, axis])
        return self.d(V, axis) + np.einsum("pkb,pb->pk", A, V)

    def Dz(self, V: np.ndarray) -> np.ndarray:
        return 0.5 * (self.cov(V, 0) - 1j * self.cov(V, 1))

    def Dzb(self, V: np.ndarray) -> np.ndarray:
        return 0.5 * (self.cov(V, 0) + 1j * self.cov(V, 1))

    def cov_mv(self, a: MultiVector, axis: int) -> MultiVector:
        """Covariant derivative of a multivector field: Gamma acts as a derivation."""
        A = self.gamma_along(self.imm.d1[:, axis])
        Dm = derivation_matrix(A, a.grade)
        coeffs = self.d(a.coeffs, axis) + np.einsum("pKI,pI->pK", Dm, a.coeffs)
        return MultiVector(a.dim, a.grade, coeffs)

    def Dz_mv(self, a: MultiVector) -> MultiVector:
        return (self.cov_mv(a, 0) - 1j * self.cov_mv(a, 1)) * 0.5

    def Dzb_mv(self, a: MultiVector) -> MultiVector:
        return (self.cov_mv(a, 0) + 1j * self.cov_mv(a, 1)) * 0.5

    # algebra -------------------------------------------------------------------
    def inner(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Complex-bilinear extension of h."""
        return inner_h(self.h, X, Y)

    def pin(self, V: np.ndarray) -> np.ndarray:
        return self.geo.project_normal(V)

    def riem(self, X, Y, Z) -> np.ndarray:
        return riem_apply(self.R, X, Y, Z)

    def vec(self, V: np.ndarray) -> MultiVector:
        return MultiVector(self.m, 1, V)

    @cached_property
    def ip(self) -> InnerProduct:
        return InnerProduct(self.h)


def complex_objects(imm: Immersion) -> dict:
    """e_z, e_zbar and the bilinear pairings used as sanity anchors."""
    cc = ConformalCalculus(imm)
    return {
        "ez": cc.ez,
        "ezb": cc.ezb,
        "ez_ez": cc.inner(cc.ez, cc.ez),
        "ez_ezb": cc.inner(cc.ez, cc.ezb),
        "calculus": cc,
    }


def wp_pairing(imm: Immersion, f: np.ndarray, geo: GeometryField | None = None) -> np.ndarray:
    """Im[(q, h0)_WP] = e^{-2 lambda} Im(f conj(H0)) as a normal vector field."""
    if not imm.conformal:
        raise ImmersionError("the Weil-Petersson pairing needs a conformal immersion")
    geo = geometry(imm) if geo is None else geo
    f = np.asarray(f)
    return np.exp(-2 * geo.lam)[:, None] * np.imag(f[:, None] * np.conj(geo.H0))


# ---------------------------------------------------------------------------
# energies


@dataclass
class EnergyReport:
    W: float
    F: float
    W_conf: float
    A: float
    F1: float
    L: float
    W_K: float
    total_gauss: float
    gauss_bonnet_defect: float | None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def energy_densities(geo: GeometryField) -> dict[str, np.ndarray]:
    H2 = inner_h(geo.h, geo.H, geo.H)
    II2 = geo.sff_norm2()
    return {
        "W": H2,
        "F": 0.5 * II2,
        "W_conf": H2 + geo.Kbar,
        "A": np.ones_like(H2),
        "F1": 0.5 * II2 + 1.0,
        "L": 0.25 * II2 - 0.5 * geo.Kbar + 1.0,
        "W_K": 0.25 * II2 - 0.5 * geo.Kbar,
        "K": geo.Kg,
    }


def energies(imm: Immersion, geo: GeometryField | None = None) -> EnergyReport:
    geo = geometry(imm) if geo is None else geo
    w = geo.dvol * imm.grid.inside
    dens = energy_densities(geo)
    tot = {k: float(np.sum(v * w)) for k, v in dens.items()}
    gb = abs(tot["K"] - 4 * np.pi) if imm.grid.kind == "sphere" else None
    return EnergyReport(tot["W"], tot["F"], tot["W_conf"], tot["A"], tot["F1"], tot["L"], tot["W_K"], tot["K"], gb)


def export_geometry_csv(imm: Immersion, path: str | Path, geo: GeometryField | None = None) -> None:
    geo = geometry(imm) if geo is None else geo
    m = imm.dim
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        head = ["u1", "u2"] + [f"phi{k}" for k in range(m)] + [f"H{k}" for k in range(m)]
        head += ["lambda", "Kg", "Kbar", "dvol"]
        wr.writerow(head)
        for i in range(imm.size):
            if not imm.grid.inside[i]:
                continue
            row = list(imm.grid.params[i]) + list(imm.phi[i]) + list(geo.H[i])
            row += [geo.lam[i], geo.Kg[i], geo.Kbar[i], geo.dvol[i]]
            wr.writerow([f"{v:.17g}" for v in row])


# ---------------------------------------------------------------------------
# built-in surfaces: each returns (phi, d1, d2) in R^3 or R^4 coordinates


def _stack_derivs(parts):
    phi = np.stack([p[0] for p in parts], axis=-1)
    d1 = np.stack([np.stack(p[1], axis=-1) for p in parts], axis=-1)
    d2 = np.stack([np.stack([np.stack(row, axis=-1) for row in p[2]], axis=-2) for p in parts], axis=-1)
    return phi, d1, d2


def _sphere_patch(u1, u2, radius=1.0):
    q = 1 + u1**2 + u2**2
    iq = 1 / q
    diq = [-2 * u1 / q**2, -2 * u2 / q**2]
    u = [u1, u2]
    ddiq = [[-2 * (i == j) / q**2 + 8 * u[i] * u[j] / q**3 for j in range(2)] for i in range(2)]
    parts = []
    for k in range(2):
        f = 2 * radius * u[k] * iq
        df = [2 * radius * ((k == j) * iq + u[k] * diq[j]) for j in range(2)]
        ddf = [[2 * radius * ((k == a) * diq[b] + (k == b) * diq[a] + u[k] * ddiq[a][b]) for b in range(2)] for a in range(2)]
        parts.append((f, df, ddf))
    f3 = radius * (2 * iq - 1)
    parts.append((f3, [2 * radius * diq[j] for j in range(2)], [[2 * radius * ddiq[a][b] for b in range(2)] for a in range(2)]))
    return _stack_derivs(parts)


def _enneper(u, v):
    zero = np.zeros_like(u)
    p1 = (u - u**3 / 3 + u * v**2, [1 - u**2 + v**2, 2 * u * v], [[-2 * u, 2 * v], [2 * v, 2 * u]])
    p2 = (v - v**3 / 3 + v * u**2, [2 * u * v, 1 - v**2 + u**2], [[2 * v, 2 * u], [2 * u, -2 * v]])
    p3 = (u**2 - v**2, [2 * u, -2 * v], [[2 + zero, zero], [zero, -2 + zero]])
    return _stack_derivs([p1, p2, p3])


def _catenoid(u, v):
    ch, sh = np.cosh(u), np.sinh(u)
    c, s = np.cos(v), np.sin(v)
    zero = np.zeros_like(u)
    p1 = (ch * c, [sh * c, -ch * s], [[ch * c, -sh * s], [-sh * s, -ch * c]])
    p2 = (ch * s, [sh * s, ch * c], [[ch * s, sh * c], [sh * c, -ch * s]])
    p3 = (u, [1 + zero, zero], [[zero, zero], [zero, zero]])
    return _stack_derivs([p1, p2, p3])


def _cylinder(u, v):
    c, s = np.cos(v), np.sin(v)
    zero = np.zeros_like(u)
    p1 = (c, [zero, -s], [[zero, zero], [zero, -c]])
    p2 = (s, [zero, c], [[zero, zero], [zero, -s]])
    p3 = (u, [1 + zero, zero], [[zero, zero], [zero, zero]])
    return _stack_derivs([p1, p2, p3])


def _plane(u, v):
    zero = np.zeros_like(u)
    one = np.ones_like(u)
    z2 = [[zero, zero], [zero, zero]]
    return _stack_derivs([(u, [one, zero], z2), (v, [zero, one], z2), (zero, [zero, zero], z2)])


def _graph(u, v, eps=0.1):
    zero = np.zeros_like(u)
    one = np.ones_like(u)
    z2 = [[zero, zero], [zero, zero]]
    return _stack_derivs(
        [
            (u, [one, zero], z2),
            (v, [zero, one], z2),
            (eps * (u**2 - v**2), [2 * eps * u, -2 * eps * v], [[2 * eps + zero, zero], [zero, -2 * eps + zero]]),
        ]
    )


def _torus(w, ph, R=2.0, r=1.0):
    """Conformal torus coordinates: |Phi_w| = |Phi_phi| = R + r cos v(w)."""
    if not R > r > 0:
        raise ValueError("torus needs R > r > 0")
    k = np.sqrt(R * R - r * r)
    arg = w * k / (2 * r)
    if np.any(np.abs(arg) >= np.pi / 2):
        raise ValueError("torus patch exceeds the range of the conformal coordinate")
    v = 2 * np.arctan(np.sqrt((R + r) / (R - r)) * np.tan(arg))
    rho = R + r * np.cos(v)
    v1 = rho / r
    v2 = -np.sin(v) * v1
    cv, sv, cp, sp_ = np.cos(v), np.sin(v), np.cos(ph), np.sin(ph)
    # partial derivatives in (v, phi)
    X = [rho * cp, rho * sp_, r * sv]
    Xv = [-r * sv * cp, -r * sv * sp_, r * cv]
    Xvv = [-r * cv * cp, -r * cv * sp_, -r * sv]
    Xp = [-rho * sp_, rho * cp, np.zeros_like(w)]
    Xpp = [-rho * cp, -rho * sp_, np.zeros_like(w)]
    Xvp = [r * sv * sp_, -r * sv * cp, np.zeros_like(w)]
    parts = []
    for k3 in range(3):
        dw = Xv[k3] * v1
        dww = Xvv[k3] * v1**2 + Xv[k3] * v2
        dwp = Xvp[k3] * v1
        parts.append((X[k3], [dw, Xp[k3]], [[dww, dwp], [dwp, Xpp[k3]]]))
    return _stack_derivs(parts)


def _clifford(u, v):
    s = 1 / np.sqrt(2)
    zero = np.zeros_like(u)
    cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
    return _stack_derivs(
        [
            (s * cu, [-s * su, zero], [[-s * cu, zero], [zero, zero]]),
            (s * su, [s * cu, zero], [[-s * su, zero], [zero, zero]]),
            (s * cv, [zero, -s * sv], [[zero, zero], [zero, -s * cv]]),
            (s * sv, [zero, s * cv], [[zero, zero], [zero, -s * sv]]),
        ]
    )


def _sphere_mesh(th, ph, axes=(1.0, 1.0, 1.0)):
    a, b, c = axes
    st, ct, sp_, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    return _stack_derivs(
        [
            (a * st * cp, [a * ct * cp, -a * st * sp_], [[-a * st * cp, -a * ct * sp_], [-a * ct * sp_, -a * st * cp]]),
            (b * st * sp_, [b * ct * sp_, b * st * cp], [[-b * st * sp_, b * ct * cp], [b * ct * cp, -b * st * sp_]]),
            (c * ct, [-c * st, np.zeros_like(th)], [[-c * ct, np.zeros_like(th)], [np.zeros_like(th), np.zeros_like(th)]]),
        ]
    )


_DISC_BUILTINS = {
    "sphere": (_sphere_patch, {"radius": 1.0}, True),
    "enneper": (_enneper, {}, True),
    "catenoid": (_catenoid, {}, True),
    "cylinder": (_cylinder, {}, True),
    "plane": (_plane, {}, True),
    "torus": (_torus, {"R": 2.0, "r": 1.0}, True),
    "clifford": (_clifford, {}, True),
    "graph": (_graph, {"eps": 0.1}, False),
}

_SPHERE_BUILTINS = ("sphere", "ellipsoid")


def _invert(phi, d1, d2, center):
    """Compose with the inversion y -> c + (y - c)/|y - c|^2 (a conformal map)."""
    y = phi - center
    s = np.sum(y * y, axis=-1)[..., None]
    m = phi.shape[-1]
    eye = np.eye(m)
    F = center + y / s
    DF = eye / s[..., None] - 2 * y[..., :, None] * y[..., None, :] / s[..., None] ** 2  # [k, a]
    yy = y
    # d_a d_b F^k = -2 (d_ka y_b + d_kb y_a + y_k d_ab)/s^2 + 8 y_k y_a y_b / s^3
    s2 = (s**2)[..., None, None]
    D2F = (
        -2
        * (
            eye[:, :, None] * yy[..., None, None, :]
            + eye[:, None, :] * yy[..., None, :, None]
            + yy[..., :, None, None] * eye[None, :, :]
        )
        / s2
        + 8 * yy[..., :, None, None] * yy[..., None, :, None] * yy[..., None, None, :] / (s**3)[..., None, None]
    )
    nd1 = np.einsum("...ka,...ia->...ik", DF, d1)
    nd2 = np.einsum("...kab,...ia,...jb->...ijk", D2F, d1, d1) + np.einsum("...ka,...ija->...ijk", DF, d2)
    return F, nd1, nd2


def builtin(
    name: str,
    n: int = 64,
    ambient: AmbientManifold | None = None,
    domain: str | None = None,
    derivatives: str = "exact",
    scale: float = 1.0,
    shrink: float = 1.0,
    shift=None,
    invert=None,
    offset=None,
    grid=None,
    **params,
) -> Immersion:
    """Construct a built-in immersion.

    Disc patches take parameter-domain ``scale`` and ``offset`` (u = offset +
    scale * x), then an ambient similarity ``shrink * Phi + shift`` and an
    optional inversion about the point ``invert``.  Sphere meshes support the
    round sphere (``radius``) and the ellipsoid (``axes``).
    """
    ambient = euclidean(3 if name != "clifford" else 4) if ambient is None else ambient
    m = ambient.dim
    if grid is not None:
        # an explicit planar grid (for example the square solver grid) replaces the disc
        domain = "disc" if grid.kind != "sphere" else "sphere"
    else:
        domain = domain or ("sphere" if name == "ellipsoid" else "disc")
        grid = _grids.make_grid(domain, n)
    if domain == "disc":
        if name not in _DISC_BUILTINS:
            raise ValueError(f"unknown disc immersion {name!r}")
        fn, defaults, conformal = _DISC_BUILTINS[name]
        kw = {**defaults, **params}
        unknown = set(kw) - set(defaults)
        if unknown:
            raise ValueError(f"unknown parameters for {name!r}: {sorted(unknown)}")
        off = np.zeros(2) if offset is None else np.asarray(offset, dtype=float)
        u1 = off[0] + scale * grid.params[:, 0]
        u2 = off[1] + scale * grid.params[:, 1]
        phi, d1, d2 = fn(u1, u2, **kw)
        d1 = d1 * scale
        d2 = d2 * scale**2
    else:
        if name not in _SPHERE_BUILTINS:
            raise ValueError(f"unknown sphere-mesh immersion {name!r}")
        if name == "sphere":
            radius = float(params.pop("radius", 1.0))
            axes = (radius,) * 3
        else:
            axes = tuple(float(a) for a in params.pop("axes", (1.0, 1.0, 1.3)))
        if params:
            raise ValueError(f"unknown parameters for {name!r}: {sorted(params)}")
        kw = {"axes": list(axes)}
        conformal = False
        phi, d1, d2 = _sphere_mesh(grid.params[:, 0], grid.params[:, 1], axes)
    k = phi.shape[-1]
    if k > m:
        raise ValueError(f"{name!r} lives in dimension {k} but the ambient has dimension {m}")
    if k < m:
        pad = [(0, 0)] * (phi.ndim - 1) + [(0, m - k)]
        phi = np.pad(phi, pad)
        d1 = np.pad(d1, [(0, 0), (0, 0), (0, m - k)])
        d2 = np.pad(d2, [(0, 0), (0, 0), (0, 0), (0, m - k)])
    t = np.zeros(m) if shift is None else np.asarray(shift, dtype=float)
    phi = shrink * phi + t
    d1 = shrink * d1
    d2 = shrink * d2
    if invert is not None:
        phi, d1, d2 = _invert(phi, d1, d2, np.asarray(invert, dtype=float))
    record = {**kw, "scale": scale, "shrink": shrink}
    if shift is not None:
        record["shift"] = list(map(float, t))
    if invert is not None:
        record["invert"] = list(map(float, invert))
    if offset is not None:
        record["offset"] = list(map(float, off))
    if derivatives == "fd":
        d1, d2 = fd_derivatives(grid, phi)
    elif derivatives != "exact":
        raise ValueError("derivatives must be 'exact' or 'fd'")
    tol = TOL_CONF_EXACT if derivatives == "exact" else TOL_CONF_FILE
    return Immersion(grid, phi, d1, d2, ambient, conformal=conformal, name=name, params=record, derivatives=derivatives, tol_conf=tol)


# ---------------------------------------------------------------------------
# loading


def parse_spec(text: str) -> tuple[str, dict]:
    """Parse ``name:key=value,key=value`` (values parsed as JSON when possible)."""
    name, _, rest = text.partition(":")
    params: dict = {}
    if rest:
        for item in _split_top(rest):
            if "=" not in item:
                raise SchemaError(f"expected key=value in {item!r}")
            k, v = item.split("=", 1)
            try:
                params[k.strip()] = json.loads(v)
            except json.JSONDecodeError:
                params[k.strip()] = v.strip()
    return name.strip(), params


def _split_top(s: str) -> list[str]:
    out, depth, cur = [], 0, ""
    for ch in s:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    if cur:
        out.append(cur)
    return out


_ALIASES = {"r": "radius"}


def load_immersion(source, ambient: AmbientManifold | None = None) -> Immersion:
    """Load an immersion from a JSON file path, a spec string or a dict."""
    if isinstance(source, (str, Path)) and Path(str(source)).suffix == ".json" and Path(str(source)).exists():
        text = Path(source).read_text()
        data = json.loads(text)
        return immersion_from_json(data, ambient)
    if isinstance(source, str):
        name, params = parse_spec(source)
    else:
        params = dict(source)
        name = params.pop("name")
    params = {_ALIASES.get(k, k): v for k, v in params.items()}
    if "ambient" in params:
        amb = params.pop("ambient")
        ambient = make_ambient(amb) if isinstance(amb, dict) else ambient
    return builtin(name, ambient=ambient, **params)


def immersion_from_json(data: dict, ambient: AmbientManifold | None = None) -> Immersion:
    required = {"domain", "n", "ambient_dim", "phi"}
    if not isinstance(data, dict) or not required <= set(data):
        raise SchemaError(f"immersion file needs keys {sorted(required)}")
    extra = set(data) - required - {"conformal", "ambient"}
    if extra:
        raise SchemaError(f"unknown keys {sorted(extra)}")
    domain, n, m = data["domain"], int(data["n"]), int(data["ambient_dim"])
    grid = _grids.make_grid(domain, n)
    phi = np.asarray(data["phi"], dtype=float)
    if phi.shape not in ((grid.size, m), grid.shape + (m,)):
        raise SchemaError(f"phi must have shape {grid.shape + (m,)} or {(grid.size, m)}, got {phi.shape}")
    if ambient is None:
        ambient = make_ambient(data["ambient"]) if "ambient" in data else euclidean(m)
    if ambient.dim != m:
        raise SchemaError("ambient_dim does not match the ambient")
    return from_samples(grid, phi.reshape(grid.size, m), ambient, conformal=bool(data.get("conformal", False)), name="file")


def immersion_to_json(imm: Immersion) -> dict:
    return {
        "domain": imm.grid.kind,
        "n": imm.grid.n,
        "ambient_dim": imm.dim,
        "phi": imm.phi.reshape(imm.grid.shape + (imm.dim,)).tolist(),
        "conformal": imm.conformal,
    }
