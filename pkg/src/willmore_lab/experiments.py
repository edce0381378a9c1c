"""Small geodesic spheres and the curvature-threshold scan.

A geodesic sphere of radius rho about p, tangent to a 3-dimensional subspace S
of T_pM, is meshed in direction space (a latitude-longitude mesh of the unit
sphere of S) and each node is shot along its geodesic.  Energies of the
resulting immersion use finite-difference parameter derivatives.  For small
rho the energies behave like

    W ~ 4 pi - (2 pi / 3) R_p(S) rho^2,   F ~ same,   A ~ 4 pi rho^2,

where R_p(S) is the sum of sectional curvatures over ordered pairs of an
orthonormal frame of S.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ambient import AmbientManifold, inner_h
from .grids import SphereMesh
from .immersion import energies, from_samples


class ExperimentError(ValueError):
    pass


MIN_RADII = 4
# removing the largest radius may move c2 by at most this fraction
FIT_STABILITY = 0.25


@dataclass
class QuadraticFit:
    c0: float
    c2: float
    residual: float  # max |data - fit|

    def as_dict(self) -> dict:
        return {"c0": self.c0, "c2": self.c2, "residual": self.residual}


def fit_quadratic(rho, values) -> QuadraticFit:
    """Least-squares fit of values ~ c0 + c2 rho^2."""
    rho = np.asarray(rho, dtype=float)
    y = np.asarray(values, dtype=float)
    A = np.stack([np.ones_like(rho), rho**2], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.max(np.abs(A @ coef - y)))
    return QuadraticFit(float(coef[0]), float(coef[1]), res)


@dataclass
class SphereFamilyReport:
    ambient: dict
    base_point: list
    subspace: list
    radii: list
    W: list
    F: list
    A: list
    fit_W: QuadraticFit
    fit_F: QuadraticFit
    fit_A: QuadraticFit
    R_p: float
    target_c0: float = 4 * np.pi
    target_c2: float = 0.0
    target_area_c2: float = 4 * np.pi
    rel_err_c2_W: float = 0.0
    rel_err_c2_F: float = 0.0
    rel_err_area: float = 0.0
    c2_without_largest: float = 0.0
    fit_stable: bool = True
    n_theta: int = 0
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        for key in ("fit_W", "fit_F", "fit_A"):
            out[key] = getattr(self, key).as_dict()
        return out

    def rows(self) -> list[dict]:
        return [
            {"rho": r, "W": w, "F": f, "A": a, "A_over_rho2": a / r**2, "W_plus_A": w + a}
            for r, w, f, a in zip(self.radii, self.W, self.F, self.A)
        ]


def orthonormalize(amb: AmbientManifold, p, S) -> np.ndarray:
    """Gram-Schmidt of three vectors with respect to h(p)."""
    p = np.asarray(p, dtype=float)
    S = np.asarray(S, dtype=float)
    if S.shape != (3, amb.dim):
        raise ExperimentError("the subspace must be given by three vectors")
    h = amb.metric(p)
    out = []
    for v in S:
        for b in out:
            v = v - inner_h(h, v, b) * b
        nv = np.sqrt(inner_h(h, v, v))
        if nv < 1e-10:
            raise ExperimentError("subspace vectors are linearly dependent")
        out.append(v / nv)
    return np.array(out)


def geodesic_sphere(amb: AmbientManifold, p, S, rho: float, n_theta: int):
    """Immersion of the geodesic sphere of radius rho tangent to span(S) at p."""
    grid = SphereMesh(n_theta)
    th, ph = grid.params[:, 0], grid.params[:, 1]
    u = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)
    v = rho * u @ S
    base = np.broadcast_to(np.asarray(p, dtype=float), v.shape)
    pts = amb.exp_map(base, v)
    return from_samples(grid, pts, amb, name=f"geodesic_sphere(rho={rho:g})")


def geodesic_sphere_family(amb: AmbientManifold, p=None, S_basis=None, radii=(0.15, 0.1, 0.075, 0.05), n_theta: int = 96) -> SphereFamilyReport:
    if amb.dim < 3:
        raise ExperimentError("geodesic spheres need an ambient of dimension >= 3")
    p = np.zeros(amb.dim) if p is None else np.asarray(p, dtype=float)
    if S_basis is None:
        S_basis = np.eye(amb.dim)[:3]
    S = orthonormalize(amb, p, S_basis)
    radii = sorted((float(r) for r in radii), reverse=True)
    if len(radii) < MIN_RADII or len(set(radii)) != len(radii):
        raise ExperimentError(f"need at least {MIN_RADII} distinct radii")
    if radii[-1] <= 0:
        raise ExperimentError("radii must be positive")
    if np.isfinite(amb.chart_radius) and np.linalg.norm(p) + 2 * radii[0] >= amb.chart_radius:
        raise ExperimentError("largest sphere does not fit in the chart")
    W, F, A = [], [], []
    for rho in radii:
        rep = energies(geodesic_sphere(amb, p, S, rho, n_theta))
        W.append(rep.W)
        F.append(rep.F)
        A.append(rep.A)
    rho = np.array(radii)
    fW, fF, fA = fit_quadratic(rho, W), fit_quadratic(rho, F), fit_quadratic(rho, A)
    R = amb.r_p_of_S(p, S)
    target = -(2 * np.pi / 3) * R
    scale_c2 = max(abs(target), 1.0)
    reduced = fit_quadratic(rho[1:], W[1:]).c2
    stable = abs(reduced - fW.c2) <= FIT_STABILITY * max(abs(fW.c2), 1.0)
    return SphereFamilyReport(
        ambient=amb.describe(),
        base_point=p.tolist(),
        subspace=S.tolist(),
        radii=radii,
        W=W,
        F=F,
        A=A,
        fit_W=fW,
        fit_F=fF,
        fit_A=fA,
        R_p=R,
        target_c2=target,
        rel_err_c2_W=abs(fW.c2 - target) / scale_c2,
        rel_err_c2_F=abs(fF.c2 - target) / scale_c2,
        rel_err_area=abs(A[-1] / radii[-1] ** 2 - 4 * np.pi) / (4 * np.pi),
        c2_without_largest=reduced,
        fit_stable=bool(stable),
        n_theta=n_theta,
    )


@dataclass
class ThresholdReport:
    max_R: float
    argmax_point: list
    argmax_subspace: list
    exceeds: bool
    samples: int
    min_W_plus_A: float | None = None
    below_4pi: bool | None = None
    family: SphereFamilyReport | None = None

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["family"] = None if self.family is None else self.family.as_dict()
        return out


def threshold_diagnostic(
    amb: AmbientManifold,
    points=None,
    n_subspaces: int = 8,
    seed: int = 0,
    radii=(0.15, 0.1, 0.075, 0.05),
    n_theta: int = 48,
    threshold: float = 6.0,
) -> ThresholdReport:
    """Scan R_p(S) over sampled points and random 3-planes; probe W + A past the threshold."""
    if amb.dim < 3:
        raise ExperimentError("the scan needs an ambient of dimension >= 3")
    rng = np.random.default_rng(seed)
    pts = np.zeros((1, amb.dim)) if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    amb.check_chart(pts)
    best = (-np.inf, None, None)
    count = 0
    for p in pts:
        frames = [np.eye(amb.dim)[:3]] + [rng.normal(size=(3, amb.dim)) for _ in range(n_subspaces)]
        for raw in frames:
            S = orthonormalize(amb, p, raw)
            R = amb.r_p_of_S(p, S)
            count += 1
            if R > best[0]:
                best = (R, p, S)
    R, p, S = best
    rep = ThresholdReport(float(R), p.tolist(), S.tolist(), bool(R > threshold + 1e-9), count)
    if rep.exceeds:
        fam = geodesic_sphere_family(amb, p, S, radii, n_theta)
        wa = [w + a for w, a in zip(fam.W, fam.A)]
        rep.family = fam
        rep.min_W_plus_A = float(min(wa))
        rep.below_4pi = bool(rep.min_W_plus_A < 4 * np.pi)
    return rep
