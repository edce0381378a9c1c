"""First-variation checks and area-constrained descent on sphere meshes.

The discrete energies are quadratures over a latitude-longitude mesh with
finite-difference parameter derivatives of the node positions.  Because the
finite-difference operators are linear, the gradient with respect to node
positions is assembled exactly as

    dE/dPhi = w * de/dPhi + sum_a D_a^T (w * de/d(d_a Phi)) + sum_ab D_ab^T (w * de/d(d_ab Phi)),

where the pointwise partials with respect to the derivative slots come from
complex-step differentiation of the energy density (the ambient metric is held
fixed there), and the explicit dependence on the ambient point uses centred
differences.  Descent runs L-BFGS in the lumped L2 metric with Armijo
backtracking and a chart-scaling projection onto the area constraint.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from . import grids as _grids
from .ambient import AmbientManifold, curvature_terms
from .immersion import ConformalCalculus, Immersion, _sphere_mesh, energies, from_samples, geometry
from .residuals import ResidualReport, _star_wedge, ambient_variation_term, check_willmore_el

log = logging.getLogger(__name__)

ENERGY_KEYS = ("W", "F", "A", "W_K", "F1", "L", "W_conf")
CS_STEP = 1e-30
FD_STEPS = (1e-3, 5e-4)
# discretization-error alarm: diameter collapse with W well below 4 pi
ALARM_DIAM_FRACTION = 0.1
ALARM_W_FRACTION = 0.95


class FlowError(RuntimeError):
    pass


class LineSearchError(FlowError):
    pass


class MeshDegeneracyError(FlowError):
    def __init__(self, message: str, dump: str | None = None) -> None:
        super().__init__(message if dump is None else f"{message} (state written to {dump})")
        self.dump = dump


# ---------------------------------------------------------------------------
# pointwise energy densities (complex-step safe: no abs, conj or real parts)


def _densities(h, G, Rl, d1, d2) -> dict[str, np.ndarray]:
    """Energy densities per unit parameter area (already multiplied by sqrt|g|).

    Leading batch axes are allowed on every argument; ``h``, ``G`` and ``Rl``
    may all be None for the Euclidean metric.  Internally the sample axes are
    moved last so the small tensor contractions run over long contiguous arrays.
    """
    x = np.moveaxis(d1, (-2, -1), (0, 1))  # (2, m, *batch)
    hs = np.moveaxis(d2, (-3, -2, -1), (0, 1, 2))  # (2, 2, m, *batch)
    if h is None:
        low = x
    else:
        hT = np.moveaxis(h, (-2, -1), (0, 1))
        GT = np.moveaxis(G, (-3, -2, -1), (0, 1, 2))
        hs = hs + np.einsum("kab...,ia...,jb...->ijk...", GT, x, x)
        low = np.einsum("ij...,aj...->ai...", hT, x)
    g = np.einsum("ak...,bk...->ab...", low, x)
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    ginv = np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]]) / det
    # normal part of the Hessian: remove d_k g^kl h(d_l, hess_ij)
    proj = np.einsum("lk...,ijk...->ijl...", low, hs)
    coef = np.einsum("ijl...,lq...->ijq...", proj, ginv)
    hn = hs - np.einsum("ijq...,qk...->ijk...", coef, x)
    hn_low = hn if h is None else np.einsum("kn...,ijn...->ijk...", hT, hn)
    # II2 = g^ik g^jl <hn_ij, hn_kl>, H2 = |(1/2) g^ij hn_ij|^2
    A = np.einsum("ik...,ijm...->kjm...", ginv, hn_low)
    B = np.einsum("jl...,klm...->kjm...", ginv, hn)
    II2 = np.einsum("kjm...,kjm...->...", A, B)
    Hv = 0.5 * np.einsum("ij...,ijm...->m...", ginv, hn)
    Hl = Hv if h is None else np.einsum("kn...,n...->k...", hT, Hv)
    H2 = np.einsum("m...,m...->...", Hl, Hv)
    sq = np.sqrt(det)
    if Rl is None:
        Kbar = 0.0
    else:
        u, v = d1[..., 0, :], d1[..., 1, :]
        Kbar = np.einsum("...wlab,...w,...l,...a,...b->...", Rl, u, v, u, v) / det
    return {
        "W": H2 * sq,
        "F": 0.5 * II2 * sq,
        "A": sq,
        "W_K": (0.25 * II2 - 0.5 * Kbar) * sq,
        "F1": (0.5 * II2 + 1.0) * sq,
        "L": (0.25 * II2 - 0.5 * Kbar + 1.0) * sq,
        "W_conf": (H2 + Kbar) * sq,
    }


def _is_flat(amb: AmbientManifold) -> bool:
    return amb.name == "euclidean"


class DiscreteEnergy:
    """Energies of node positions on a fixed sphere mesh, with exact discrete gradients."""

    def __init__(self, grid, ambient: AmbientManifold) -> None:
        self.grid = grid
        self.ambient = ambient
        self.m = ambient.dim
        self.D1 = [grid.d1_op(a) for a in range(2)]
        self.D2 = {(a, b): grid.d2_op(a, b) for a in range(2) for b in range(a, 2)}
        self.w = grid.weights * grid.inside

    def derivatives(self, phi: np.ndarray):
        d1 = np.stack([_grids.apply(D, phi) for D in self.D1], axis=1)
        d2 = np.empty((phi.shape[0], 2, 2, self.m))
        for (a, b), D in self.D2.items():
            d2[:, a, b] = d2[:, b, a] = _grids.apply(D, phi)
        return d1, d2

    def _ambient(self, phi):
        amb = self.ambient
        if _is_flat(amb):
            return None, None, None
        return amb.metric(phi), amb.christoffel(phi), amb.riemann_lower(phi)

    def values(self, phi: np.ndarray) -> dict[str, float]:
        d1, d2 = self.derivatives(phi)
        dens = _densities(*self._ambient(phi), d1, d2)
        return {k: float(np.sum(v * self.w)) for k, v in dens.items()}

    def gradients(self, phi: np.ndarray, keys=("W", "A")) -> tuple[dict[str, float], dict[str, np.ndarray]]:
        """Energies and their node gradients (P, m) for the requested keys."""
        P, m = phi.shape
        d1, d2 = self.derivatives(phi)
        h, G, Rl = self._ambient(phi)
        base = _densities(h, G, Rl, d1, d2)
        vals = {k: float(np.sum(base[k] * self.w)) for k in keys}
        grads = {k: np.zeros((P, m)) for k in keys}
        # all complex-step directions in one batched evaluation: 2m first-derivative
        # slots followed by 3m second-derivative slots (mixed slots perturb both entries)
        pairs = list(self.D2)
        nb = 2 * m + len(pairs) * m
        c1 = np.broadcast_to(d1, (nb,) + d1.shape).astype(complex)
        c2 = np.broadcast_to(d2, (nb,) + d2.shape).astype(complex)
        ops = []
        idx = 0
        for a in range(2):
            for k in range(m):
                c1[idx, :, a, k] += 1j * CS_STEP
                ops.append((self.D1[a], k))
                idx += 1
        for a, b in pairs:
            for k in range(m):
                c2[idx, :, a, b, k] += 1j * CS_STEP
                if a != b:
                    c2[idx, :, b, a, k] += 1j * CS_STEP
                ops.append((self.D2[(a, b)], k))
                idx += 1
        dens = _densities(h, G, Rl, c1, c2)
        for key in keys:
            parts = dens[key].imag / CS_STEP * self.w
            for (D, k), part in zip(ops, parts):
                grads[key][:, k] += D.T @ part
        if not _is_flat(self.ambient):
            step = 1e-6 * self.ambient.fd_scale
            for k in range(m):
                e = np.zeros(m)
                e[k] = step
                up = _densities(*self._ambient(phi + e), d1, d2)
                dn = _densities(*self._ambient(phi - e), d1, d2)
                for key in keys:
                    grads[key][:, k] += (up[key] - dn[key]) / (2 * step) * self.w
        return vals, grads

    def fd_gradient(self, phi: np.ndarray, key: str, step: float = 1e-6) -> np.ndarray:
        """Brute-force centred-difference gradient (small meshes only)."""
        out = np.zeros_like(phi)
        for i in range(phi.shape[0]):
            for k in range(phi.shape[1]):
                p = phi.copy()
                p[i, k] += step
                up = self.values(p)[key]
                p[i, k] -= 2 * step
                out[i, k] = (up - self.values(p)[key]) / (2 * step)
        return out


# ---------------------------------------------------------------------------
# first variations


@dataclass
class VariationField:
    """Perturbation field with its parameter derivatives on the mesh samples."""

    w: np.ndarray  # (P, m)
    d1: np.ndarray  # (P, 2, m)
    d2: np.ndarray  # (P, 2, 2, m)


def random_variation(grid, m: int, seed: int = 0, n_modes: int = 6, max_freq: float = 3.0, amplitude: float = 1.0) -> VariationField:
    """Band-limited random field on the sphere mesh with a pole factor (1 - x3^2)^2.

    Each component is a sum of plane waves cos(k . x + c) evaluated at the unit
    sphere point x(theta, phi), so the field is smooth on the sphere and vanishes
    to fourth order at the mesh poles.
    """
    if grid.kind != "sphere":
        raise ValueError("random variations are defined on sphere meshes")
    rng = np.random.default_rng(seed)
    th, ph = grid.params[:, 0], grid.params[:, 1]
    st, ct, sp_, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    x = np.stack([st * cp, st * sp_, ct], -1)
    dx = np.stack([np.stack([ct * cp, ct * sp_, -st], -1), np.stack([-st * sp_, st * cp, 0 * st], -1)], 1)
    ddx = np.empty((x.shape[0], 2, 2, 3))
    ddx[:, 0, 0] = -x
    ddx[:, 0, 1] = ddx[:, 1, 0] = np.stack([-ct * sp_, ct * cp, 0 * st], -1)
    ddx[:, 1, 1] = np.stack([-st * cp, -st * sp_, 0 * st], -1)
    # pole factor q = (1 - x3^2)^2 as a function of x
    s = 1 - x[:, 2] ** 2
    q = s**2
    dq_dx = np.zeros_like(x)
    dq_dx[:, 2] = -4 * s * x[:, 2]
    ddq_dx = np.zeros((x.shape[0], 3, 3))
    ddq_dx[:, 2, 2] = -4 * s + 8 * x[:, 2] ** 2
    w = np.zeros((x.shape[0], m))
    d1 = np.zeros((x.shape[0], 2, m))
    d2 = np.zeros((x.shape[0], 2, 2, m))
    for comp in range(m):
        f = np.zeros(x.shape[0])
        df = np.zeros_like(x)
        ddf = np.zeros((x.shape[0], 3, 3))
        for _ in range(n_modes):
            k = rng.uniform(-max_freq, max_freq, size=3)
            c = rng.uniform(0, 2 * np.pi)
            a = rng.normal() / n_modes
            arg = x @ k + c
            f += a * np.cos(arg)
            df += -a * np.sin(arg)[:, None] * k
            ddf += -a * np.cos(arg)[:, None, None] * np.outer(k, k)
        # F(x) = q f: gradient and hessian in x
        G = dq_dx * f[:, None] + q[:, None] * df
        Hs = ddq_dx * f[:, None, None] + q[:, None, None] * ddf
        Hs += dq_dx[:, :, None] * df[:, None, :] + df[:, :, None] * dq_dx[:, None, :]
        w[:, comp] = q * f
        d1[:, :, comp] = np.einsum("pi,pai->pa", G, dx)
        d2[:, :, :, comp] = np.einsum("pij,pai,pbj->pab", Hs, dx, dx) + np.einsum("pi,pabi->pab", G, ddx)
    return VariationField(amplitude * w, amplitude * d1, amplitude * d2)


def normal_bump(imm: Immersion, amplitude: float = 1.0) -> VariationField:
    """w = q n for the round sphere mesh in R^3 (unit outward normal times the pole factor)."""
    if imm.dim != 3:
        raise ValueError("normal_bump is defined for sphere meshes in R^3")
    th, ph = imm.grid.params[:, 0], imm.grid.params[:, 1]
    st, ct = np.sin(th), np.cos(th)
    q = st**4
    x = np.stack([st * np.cos(ph), st * np.sin(ph), ct], -1)
    _, dx, ddx = _sphere_mesh(th, ph)
    dq = np.stack([4 * st**3 * ct, 0 * st], -1)
    ddq = np.zeros((len(th), 2, 2))
    ddq[:, 0, 0] = 12 * st**2 * ct**2 - 4 * st**4
    w = q[:, None] * x
    d1 = dq[:, :, None] * x[:, None, :] + q[:, None, None] * dx
    d2 = ddq[..., None] * x[:, None, None, :] + q[:, None, None, None] * ddx
    d2 = d2 + dq[:, :, None, None] * dx[:, None, :, :] + dq[:, None, :, None] * dx[:, :, None, :]
    return VariationField(amplitude * w, amplitude * d1, amplitude * d2)


def _perturbed(imm: Immersion, var: VariationField, t: float) -> Immersion:
    amb = imm.ambient
    if _is_flat(amb):
        if imm.derivatives == "exact":
            return Immersion(
                imm.grid, imm.phi + t * var.w, imm.d1 + t * var.d1, imm.d2 + t * var.d2, amb, name=imm.name, derivatives="exact"
            )
        return from_samples(imm.grid, imm.phi + t * var.w, amb, name=imm.name)
    return from_samples(imm.grid, amb.exp_map(imm.phi, t * var.w), amb, name=imm.name)


def _cov_field(imm: Immersion, var: VariationField, geo) -> list[np.ndarray]:
    """D_i w = d_i w + Gamma(Phi_i, w) using the supplied parameter derivatives."""
    return [var.d1[:, i] + np.einsum("pkab,pa,pb->pk", geo.christoffel, imm.d1[:, i], var.w) for i in range(2)]


def analytic_pairings(imm: Immersion, var: VariationField, star_coefficient: float = 0.5) -> dict[str, tuple[float, float]]:
    """Integrated-by-parts first variations of A, W and F paired with w.

    Returns key -> (value, integral of the absolute pointwise integrand).
    ``star_coefficient`` weights the Hodge-star term of the W pairing.
    """
    geo = geometry(imm)
    cc = ConformalCalculus(imm, geo, strict=False)
    g = geo.g
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
    sq = np.sqrt(det)
    ginv = np.linalg.inv(g)
    dvol = geo.dvol * imm.grid.inside
    h = geo.h
    ip = cc.ip

    def dot(a, b):
        return np.einsum("pij,pi,pj->p", h, a, b)

    Dw = _cov_field(imm, var, geo)
    DH = [cc.cov(geo.H, i) for i in range(2)]
    pDH = [cc.pin(v) for v in DH]
    Dn = [cc.cov_mv(geo.n, 0), cc.cov_mv(geo.n, 1)]
    up = [Dn[0] * ginv[:, k, 0] + Dn[1] * ginv[:, k, 1] for k in range(2)]
    star = [up[1] * (-sq), up[0] * sq]
    SW = [_star_wedge(ip, star[i], geo.H) for i in range(2)]
    terms = [0.0, 0.0, 0.0]
    for i in range(2):
        for j in range(2):
            c = ginv[:, i, j]
            terms[0] = terms[0] + c * 0.5 * dot(DH[i], Dw[j])
            terms[1] = terms[1] - c * 1.5 * dot(pDH[i], Dw[j])
            terms[2] = terms[2] + c * star_coefficient * dot(SW[i], Dw[j])
    Rt, Rp, _ = curvature_terms(h, geo.riemann, geo.e[:, 0], geo.e[:, 1], geo.H)
    terms.append(dot(-Rt + Rp, var.w))
    parts = {"A": [-2 * dot(geo.H, var.w)], "W": terms, "F": [2 * t for t in terms]}
    if not _is_flat(imm.ambient):
        # F = 2W - 4 pi + int Kbar: the last integral varies by -<(DR) + 2 frak_R + 2 Kbar H, w>
        parts["F"].append(-dot(ambient_variation_term(cc), var.w))
    # the scale sums the absolute integrals of the separate terms, so that cancellation
    # at critical points (round spheres) is measured against the size of the pieces
    return {
        key: (float(np.sum(sum(ts) * dvol)), float(sum(np.sum(np.abs(t) * dvol) for t in ts)))
        for key, ts in parts.items()
    }


@dataclass
class VariationReport:
    functional: str
    analytic: float
    scale: float
    fd: dict  # t -> centred difference
    richardson: float
    rel_error: float
    passed: bool
    tol: float

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["fd"] = {f"{t:g}": v for t, v in self.fd.items()}
        return out


def first_variation_check(
    imm: Immersion,
    var: VariationField,
    functional: str = "W",
    steps=FD_STEPS,
    tol: float = 1e-3,
    star_coefficient: float = 0.5,
) -> VariationReport:
    """Centred differences of E(Exp(t w)) against the integrated-by-parts pairing.

    The relative error divides by max(|pairing|, sum of the absolute integrals of
    the separate terms of the pairing), so critical points, where the pairing
    itself vanishes, are measured on the scale of the individual contributions.
    """
    if functional not in ("A", "W", "F"):
        raise ValueError("functional must be 'A', 'W' or 'F'")
    t1, t2 = sorted(steps, reverse=True)
    fd = {}
    for t in (t1, t2):
        try:
            ep = getattr(energies(_perturbed(imm, var, t)), functional)
            em = getattr(energies(_perturbed(imm, var, -t)), functional)
        except ValueError as exc:
            raise FlowError(f"perturbation at t={t:g} breaks the immersion: {exc}") from exc
        fd[t] = (ep - em) / (2 * t)
    ratio = (t1 / t2) ** 2
    rich = (ratio * fd[t2] - fd[t1]) / (ratio - 1)
    val, absint = analytic_pairings(imm, var, star_coefficient)[functional]
    scale = max(abs(val), absint)
    if scale == 0.0:
        err = abs(rich)
    else:
        err = abs(rich - val) / scale
    return VariationReport(functional, val, scale, fd, float(rich), float(err), bool(err < tol), tol)


# ---------------------------------------------------------------------------
# diagnostics


def diameter(phi: np.ndarray, max_points: int | None = None) -> float:
    """Largest pairwise chart distance between nodes.

    Only convex-hull vertices can realize the maximum; ``max_points`` thins them
    (a cheaper estimate used along flow traces).
    """
    pts = np.asarray(phi, dtype=float)
    try:
        verts = pts[ConvexHull(pts).vertices] if pts.shape[1] <= 3 else pts
    except Exception:  # degenerate hulls (flat or collinear point sets)
        verts = pts
    if max_points is not None and len(verts) > max_points:
        verts = verts[:: int(np.ceil(len(verts) / max_points))]
    return float(np.max(pdist(verts)))


@dataclass
class MonotonicityReport:
    area: float
    diam: float
    diam_bounds: tuple
    ratio: float
    history: list = field(default_factory=list)
    max_ratio: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def monotonicity_diagnostic(imm: Immersion, trace: list | None = None) -> MonotonicityReport:
    """Area over squared diameter, with chart-to-metric distance bounds."""
    A = energies(imm).A
    d = diameter(imm.phi)
    ev = np.linalg.eigvalsh(imm.metric_at_samples())
    lo, hi = np.sqrt(np.min(ev)), np.sqrt(np.max(ev))
    hist = [row["area_over_diam2"] for row in trace] if trace else []
    ratio = A / d**2
    return MonotonicityReport(A, d, (d * lo, d * hi), ratio, hist, max(hist + [ratio]))


@dataclass
class LowerBoundReport:
    alarms: list
    initial_diam: float

    @property
    def ok(self) -> bool:
        return not self.alarms

    def as_dict(self) -> dict:
        return {"alarms": self.alarms, "initial_diam": self.initial_diam, "ok": self.ok}


def lower_bound_probe(trace: list[dict]) -> LowerBoundReport:
    """Flag states whose diameter collapsed while W dropped well below 4 pi."""
    if not trace:
        return LowerBoundReport([], float("nan"))
    d0 = trace[0]["diam"]
    alarms = [
        {"step": row["step"], "diam": row["diam"], "W": row["W"]}
        for row in trace
        if row["diam"] < ALARM_DIAM_FRACTION * d0 and row["W"] < 4 * np.pi * ALARM_W_FRACTION
    ]
    return LowerBoundReport(alarms, d0)


# ---------------------------------------------------------------------------
# descent

_FUNCTIONALS = {"f1": ("F1", False), "wk": ("W_K", True), "f": ("F", True)}


@dataclass
class FlowState:
    imm: Immersion
    step: int
    trace: list
    functional: str
    constraint: float | None
    multiplier: float
    mu: float
    grad_norm: float
    status: str
    terminal: ResidualReport | None = None
    diagnostics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        last = self.trace[-1] if self.trace else {}
        return {
            "functional": self.functional,
            "steps": self.step,
            "status": self.status,
            "constraint_area": self.constraint,
            "multiplier": self.multiplier,
            "dE_dA": self.mu,
            "grad_norm": self.grad_norm,
            "final": last,
            "monotone": monotone(self.trace),
            "terminal_residual": None if self.terminal is None else self.terminal.as_dict(),
            "diagnostics": self.diagnostics,
        }


def monotone(trace: list[dict]) -> bool:
    e = [row["energy"] for row in trace]
    return all(b <= a for a, b in zip(e[:-1], e[1:]))


def write_trace_csv(trace: list[dict], path: str | Path) -> None:
    if not trace:
        Path(path).write_text("")
        return
    keys = list(trace[0])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(keys)
        for row in trace:
            wr.writerow([f"{row[k]:.17g}" if isinstance(row[k], float) else row[k] for k in keys])


def _singular_ratio(energy: DiscreteEnergy, phi: np.ndarray) -> np.ndarray:
    d1, _ = energy.derivatives(phi)
    g = np.einsum("pij,pai,pbj->pab", energy.ambient.metric(phi), d1, d1)
    ev = np.linalg.eigvalsh(g)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.sqrt(np.clip(ev[:, 0], 0, None) / ev[:, 1])


class SobolevMetric:
    """Inner product (eps M + K) M^-1 (eps M + K) on node displacements.

    M is the lumped mass (area element times quadrature weight) and K the
    stiffness built from compact forward differences, which unlike the centred
    stencils has no sawtooth null space.  With eps = 4 pi / A this behaves like
    the second-order Sobolev metric of a unit sphere rescaled to the surface.
    """

    def __init__(self, energy: DiscreteEnergy, phi: np.ndarray) -> None:
        grid = energy.grid
        d1, _ = energy.derivatives(phi)
        h = energy.ambient.metric(phi)
        g = np.einsum("pij,pai,pbj->pab", h, d1, d1)
        det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
        sq = np.sqrt(det)
        self.M = sq * energy.w
        zero = np.zeros(2, dtype=int)
        fwd = np.array([0, 1])
        w = np.array([-1.0, 1.0])
        Dt = grid._stencil_op(fwd, zero, w, grid.dtheta)
        Dp = grid._stencil_op(zero, fwd, w, grid.dphi)
        kt = g[:, 1, 1] / sq * energy.w
        kp = g[:, 0, 0] / sq * energy.w
        K = Dt.T @ sp.diags(kt) @ Dt + Dp.T @ sp.diags(kp) @ Dp
        eps = 4 * np.pi / float(np.sum(self.M))
        self.A = (eps * sp.diags(self.M) + K).tocsc()
        self.lu = spla.splu(self.A)
        self.h = h
        self.hinv = np.linalg.inv(h)

    def apply_inverse(self, dual: np.ndarray) -> np.ndarray:
        """Map a nodal gradient (dual vector) to a displacement."""
        x = self.lu.solve(np.einsum("pij,pj->pi", self.hinv, dual))
        return self.lu.solve(self.M[:, None] * x)

    def l2_dual_to_primal(self, dual: np.ndarray) -> np.ndarray:
        return np.einsum("pij,pj->pi", self.hinv, dual) / self.M[:, None]


class NormalProjector:
    """Pointwise projection onto the normal space of the current node surface."""

    def __init__(self, energy: DiscreteEnergy, phi: np.ndarray) -> None:
        d1, _ = energy.derivatives(phi)
        h = energy.ambient.metric(phi)
        low = np.einsum("pij,paj->pai", h, d1)
        g = np.einsum("pai,pbi->pab", low, d1)
        self.d1, self.low, self.ginv = d1, low, np.linalg.inv(g)

    def vector(self, v: np.ndarray) -> np.ndarray:
        c = np.einsum("pab,pbi,pi->pa", self.ginv, self.low, v)
        return v - np.einsum("pa,pai->pi", c, self.d1)

    def covector(self, w: np.ndarray) -> np.ndarray:
        c = np.einsum("pab,pbi,pi->pa", self.ginv, self.d1, w)
        return w - np.einsum("pa,pai->pi", c, self.low)


def descend(
    initial: Immersion,
    functional: str = "wk",
    area: float | None = None,
    max_steps: int = 2000,
    tol_g: float = 1e-6,
    memory: int = 12,
    c1: float = 1e-4,
    max_backtracks: int = 40,
    degeneracy_floor: float = 0.05,
    area_rtol: float = 1e-10,
    dump_path: str | Path | None = None,
    target: tuple[str, float] | None = None,
    refresh_every: int = 25,
    ftol: float = 1e-7,
    ftol_window: int = 10,
) -> FlowState:
    """Preconditioned L-BFGS descent with Armijo backtracking.

    ``functional`` is ``"f1"`` (unconstrained F + A), ``"wk"`` or ``"f"``; the
    last two keep the area at ``area`` (default: the initial area) by scaling
    the chart about the node centroid after every trial step.  Gradients are
    the L2 gradients of the discrete energy restricted to normal displacements
    (tangential node motion only reparametrizes the surface and would let the
    nodes drift into configurations that exploit discretization error); search
    directions use the ``SobolevMetric`` as the initial inverse Hessian,
    rebuilt every ``refresh_every`` accepted steps.  The stopping test uses the lumped L2 norm
    of the constrained gradient.  ``target`` optionally stops early once
    trace[key] <= value.

    Besides the gradient test the loop stops with status ``"stagnated"`` once
    the energy has dropped by less than ``ftol * |E|`` over the last
    ``ftol_window`` accepted steps (``ftol=0`` disables the test).  On sphere
    meshes the gradient floor is set by the discretization, and long runs past
    that point only find lat-long artifacts that lower the discrete energy.
    """
    fkey = functional.lower()
    if fkey not in _FUNCTIONALS:
        raise ValueError(f"functional must be one of {sorted(_FUNCTIONALS)}")
    key, constrained = _FUNCTIONALS[fkey]
    if initial.grid.kind != "sphere":
        raise FlowError("descent runs on closed sphere meshes")
    energy = DiscreteEnergy(initial.grid, initial.ambient)
    phi = initial.phi.copy()
    if constrained and area is None:
        area = energy.values(phi)["A"]
    if not constrained:
        area = None
    ratio0 = _singular_ratio(energy, phi)
    d0 = diameter(phi)

    def project(p):
        if area is None:
            return p
        c = p.mean(axis=0)
        s = 1.0
        for _ in range(60):
            q = c + s * (p - c)
            A = energy.values(q)["A"]
            if abs(A - area) <= area_rtol * area:
                return q
            s *= np.sqrt(area / A)
        raise FlowError("area projection did not converge")

    def check_mesh(p, step):
        r = _singular_ratio(energy, p)
        bad = (not np.all(np.isfinite(p))) or np.any(~np.isfinite(r)) or np.min(r / ratio0) < degeneracy_floor
        if bad:
            dump = None
            if dump_path is not None:
                np.savez(dump_path, phi=p, step=step)
                dump = str(dump_path)
            raise MeshDegeneracyError(f"mesh degenerated at step {step}", dump)

    def evaluate(p, metric):
        """Objective, constrained dual gradient, L2 multiplier dE/dA and L2 gradient norm."""
        vals, grads = energy.gradients(p, keys=(key, "A"))
        normal = NormalProjector(energy, p)
        gE, gA = normal.covector(grads[key]), normal.covector(grads["A"])
        if not constrained:
            l2 = metric.l2_dual_to_primal(gE)
            return vals[key], gE, 0.0, float(np.sqrt(np.sum(gE * l2))), normal
        # multiplier in the L2 metric (reported), projection in the search metric
        pA = metric.l2_dual_to_primal(gA)
        mu = float(np.sum(gE * pA) / np.sum(gA * pA))
        sA = metric.apply_inverse(gA)
        nu = float(np.sum(gE * sA) / np.sum(gA * sA))
        gT = gE - nu * gA
        resid = gE - mu * gA
        return vals[key], gT, mu, float(np.sqrt(np.sum(resid * metric.l2_dual_to_primal(resid)))), normal

    def record(step, p, E, gnorm, mu):
        vals = energy.values(p)
        d = diameter(p, max_points=1500)
        return {
            "step": step,
            "energy": E,
            "W": vals["W"],
            "F": vals["F"],
            "A": vals["A"],
            "W_K": vals["W_K"],
            "F1": vals["F1"],
            "grad_norm": gnorm,
            "mu": mu,
            "multiplier": -2 * mu,
            "diam": d,
            "area_over_diam2": vals["A"] / d**2,
        }

    phi = project(phi)
    check_mesh(phi, 0)
    metric = SobolevMetric(energy, phi)
    E, gT, mu, gnorm, normal = evaluate(phi, metric)
    trace = [record(0, phi, E, gnorm, mu)]
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    status = "max_steps"
    step = 0
    since_refresh = 0
    while step < max_steps:
        if gnorm < tol_g:
            status = "converged"
            break
        if target is not None and trace[-1][target[0]] <= target[1]:
            status = "target_reached"
            break
        if ftol > 0 and len(trace) > ftol_window:
            drop = trace[-1 - ftol_window]["energy"] - trace[-1]["energy"]
            if drop <= ftol * abs(trace[-1]["energy"]):
                status = "stagnated"
                break
        # two-loop recursion: S holds displacements, Y dual gradient differences
        q = gT.copy()
        hist = []
        for s_, y_ in reversed(list(zip(S, Y))):
            rho = 1.0 / float(np.sum(y_ * s_))
            a = rho * float(np.sum(s_ * q))
            hist.append((a, rho, s_, y_))
            q = q - a * y_
        r = metric.apply_inverse(q)
        if S:
            Py = metric.apply_inverse(Y[-1])
            r = r * float(np.sum(S[-1] * Y[-1])) / float(np.sum(Y[-1] * Py))
        else:
            # first step moves nodes by at most 1% of the diameter
            r = r * min(1.0, 1e-2 * d0 / max(float(np.max(np.abs(r))), 1e-300))
        for a, rho, s_, y_ in reversed(hist):
            b = rho * float(np.sum(y_ * r))
            r = r + (a - b) * s_
        p = -normal.vector(r)
        slope = float(np.sum(gT * p))
        if slope >= 0:
            S.clear()
            Y.clear()
            p = -normal.vector(metric.apply_inverse(gT))
            p *= min(1.0, 1e-2 * d0 / max(float(np.max(np.abs(p))), 1e-300))
            slope = float(np.sum(gT * p))
        t = 1.0
        for _ in range(max_backtracks):
            trial = project(phi + t * p)
            try:
                with np.errstate(all="ignore"):
                    Et = energy.values(trial)[key]
            except (ValueError, np.linalg.LinAlgError):
                Et = np.inf
            if np.isfinite(Et) and Et <= E + c1 * t * slope and Et < E:
                break
            t *= 0.5
        else:
            if S:
                # retry from the preconditioned steepest descent before giving up
                S.clear()
                Y.clear()
                continue
            check_mesh(phi, step)
            if gnorm < 1e3 * tol_g:
                status = "stalled_near_tolerance"
                break
            raise LineSearchError(f"line search failed at step {step} (grad norm {gnorm:.3e})")
        step += 1
        since_refresh += 1
        check_mesh(trial, step)
        if since_refresh >= refresh_every:
            metric = SobolevMetric(energy, trial)
            S.clear()
            Y.clear()
            since_refresh = 0
        E_new, g_new, mu, gnorm, normal = evaluate(trial, metric)
        s_vec = trial - phi
        y_vec = g_new - gT
        sy = float(np.sum(s_vec * y_vec))
        if sy > 1e-12 * np.sqrt(float(np.sum(s_vec**2)) * float(np.sum(y_vec**2))):
            S.append(s_vec)
            Y.append(y_vec)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
        phi, E, gT = trial, E_new, g_new
        trace.append(record(step, phi, E, gnorm, mu))
    imm = from_samples(initial.grid, phi, initial.ambient, name=f"{initial.name}-flow")
    mult = -2 * mu
    try:
        terminal = check_willmore_el(imm, mode="area_constrained" if constrained else "free", multiplier=mult, threshold=np.inf)
    except ValueError as exc:
        log.warning("terminal residual unavailable: %s", exc)
        terminal = None
    state = FlowState(imm, step, trace, key, area, mult, mu, float(gnorm), status, terminal)
    mono = monotonicity_diagnostic(imm, trace)
    state.diagnostics = {"monotonicity": mono.as_dict(), "lower_bound": lower_bound_probe(trace).as_dict()}
    return state
