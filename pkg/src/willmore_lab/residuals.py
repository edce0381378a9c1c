"""Residual checks: both sides of each identity evaluated independently.

Every check evaluates a pointwise residual field on a discrete immersion and
reports its sup and L2 norms over the interior samples (disc grids drop a
boundary ring two samples wide, sphere meshes drop the two polar rows).
:func:`refine` repeats a check over a list of resolutions and estimates the
convergence order from successive norm ratios.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .ambient import curvature_terms, frak_r, inner_h
from .exterior import InnerProduct, MultiVector, hodge_star, inner, project_normal_contraction, wedge
from .immersion import ConformalCalculus, Immersion, ImmersionError, geometry

ZERO_TOL = 1e-8
ORDER_IDENTITY = 1.8


class CheckError(ValueError):
    """A residual check was requested on data it does not apply to."""


@dataclass
class ResidualReport:
    name: str
    sup_norm: float
    l2_norm: float
    per_refinement: list = field(default_factory=list)  # (N, sup, l2)
    estimated_order: float | None = None
    successive_orders: list = field(default_factory=list)
    expected_order: float | None = None
    zero_tol: float = ZERO_TOL
    passed: bool | None = None
    components: dict = field(default_factory=dict)
    notes: str = ""

    def as_dict(self) -> dict:
        d = asdict(self)
        d["per_refinement"] = [list(t) for t in self.per_refinement]
        return d


# ---------------------------------------------------------------------------
# pointwise helpers


def _vnorm(h: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Hermitian h-norm of (complex) vector fields; extra axes are summed."""
    V = np.asarray(V)
    if V.ndim == 2:
        return np.sqrt(np.abs(inner_h(h, np.conj(V), V)))
    flat = V.reshape(V.shape[0], -1, V.shape[-1])
    tot = sum(np.abs(inner_h(h, np.conj(flat[:, k]), flat[:, k])) for k in range(flat.shape[1]))
    return np.sqrt(tot)


def _mvnorm(ip: InnerProduct, a: MultiVector) -> np.ndarray:
    return np.sqrt(np.abs(inner(a.conj(), a, ip)))


def _star_wedge(ip: InnerProduct, a: MultiVector, V: np.ndarray) -> np.ndarray:
    """Coefficients of *_h(a ^ V) for a multivector field a and vector field V."""
    return hodge_star(wedge(a, MultiVector(a.dim, 1, V)), ip).coeffs


def _norms(imm: Immersion, pointwise: np.ndarray) -> tuple[float, float]:
    mask = imm.grid.interior
    r = np.abs(pointwise[mask])
    sup = float(np.max(r)) if r.size else 0.0
    l2 = float(np.sqrt(np.sum(r**2 * imm.grid.weights[mask])))
    return sup, l2


def _require(imm: Immersion, *, conformal: bool = True, codim1: bool = False) -> ConformalCalculus:
    if codim1 and imm.dim != 3:
        raise CheckError("this identity is stated for surfaces in a 3-manifold")
    if conformal and not imm.conformal:
        raise CheckError("this identity needs a conformal immersion")
    return ConformalCalculus(imm)


def rm_term(cc: ConformalCalculus) -> np.ndarray:
    """8 Re(<Riem(e_zbar, e_z) e_z, H> e_zbar), real vector field."""
    c = cc.inner(cc.riem(cc.ezb, cc.ez, cc.ez), cc.H)
    return 8 * np.real(c[:, None] * cc.ezb)


def curvature_fields(cc: ConformalCalculus):
    g = cc.geo
    return curvature_terms(g.h, g.riemann, g.e[:, 0], g.e[:, 1], g.H)


def A_tilde(cc: ConformalCalculus, X: np.ndarray) -> np.ndarray:
    sff = cc.geo.sff
    out = np.zeros_like(X)
    for a in range(2):
        for b in range(2):
            out = out + cc.inner(sff[:, a, b], X)[:, None] * sff[:, a, b]
    return out


def normal_laplacian(cc: ConformalCalculus, V: np.ndarray) -> np.ndarray:
    """e^{-2 lambda} pi_n sum_i D_i pi_n D_i V on a conformal immersion."""
    tot = sum(cc.cov(cc.pin(cc.cov(V, i)), i) for i in range(2))
    return np.exp(-2 * cc.geo.lam)[:, None] * cc.pin(tot)


def conservative_lhs(cc: ConformalCalculus) -> np.ndarray:
    """4 e^{-2 lambda} Re(D_zbar[pi_n(D_z H) + <H, H0> d_zbar Phi])."""
    inside = cc.pin(cc.Dz(cc.H)) + cc.inner(cc.H, cc.H0)[:, None] * cc.pzb
    return 4 * np.exp(-2 * cc.geo.lam)[:, None] * np.real(cc.Dzb(inside))


def divergence_bracket(cc: ConformalCalculus) -> np.ndarray:
    """D*[DH - 3 pi_n(DH) + *_h(D_perp n ^ H)] with D* = D_1 + D_2."""
    n = cc.geo.n
    Dn = [cc.cov_mv(n, 0), cc.cov_mv(n, 1)]
    Dperp = [-Dn[1], Dn[0]]
    ip = cc.ip
    out = 0.0
    for i in range(2):
        DH = cc.cov(cc.H, i)
        B = DH - 3 * cc.pin(DH) + _star_wedge(ip, Dperp[i], cc.H)
        out = out + cc.cov(B, i)
    return out


# ---------------------------------------------------------------------------
# individual identities (pointwise residual fields)


def _res_normal_divergence(imm: Immersion, **_) -> dict:
    cc = _require(imm, codim1=True)
    g = cc.geo
    n = g.normals[:, 0]
    Hs = cc.inner(g.H, n)
    Dn = [cc.cov(n, 0), cc.cov(n, 1)]
    Dperp = [-Dn[1], Dn[0]]
    nmv = MultiVector(3, 1, n)
    res = []
    for i in range(2):
        rhs = Dn[i] + _star_wedge(cc.ip, nmv, Dperp[i])
        res.append(-2 * Hs[:, None] * imm.d1[:, i] - rhs)
    return {"normal_divergence": _vnorm(g.h, np.stack(res, axis=1))}


def _res_dzbar_dz_phi(imm: Immersion, **_) -> dict:
    cc = _require(imm)
    r = cc.Dzb(cc.pz) - 0.5 * cc.e2l[:, None] * cc.H
    return {"dzbar_dz_phi": _vnorm(cc.h, r)}


def _res_hopf(imm: Immersion, **_) -> dict:
    cc = _require(imm)
    r = cc.Dz(np.exp(-2 * cc.geo.lam)[:, None] * cc.pz) - 0.5 * cc.H0
    return {"hopf": _vnorm(cc.h, r)}


def _res_codazzi(imm: Immersion, **_) -> dict:
    cc = _require(imm)
    HH0 = cc.inner(cc.H, cc.H0)
    lhs = cc.dzb(cc.e2l * HH0) / cc.e2l
    rhs = (
        cc.inner(cc.H, cc.Dz(cc.H))
        + cc.inner(cc.H0, cc.Dzb(cc.H))
        + 2 * cc.inner(cc.riem(cc.ezb, cc.ez, cc.pz), cc.H)
    )
    return {"codazzi": np.abs(lhs - rhs)}


def build_X(cc: ConformalCalculus) -> np.ndarray:
    return -2j * cc.inner(cc.H, cc.H0)[:, None] * cc.pzb - 2j * cc.pin(cc.Dz(cc.H))


def _sys12(cc: ConformalCalculus, Y: np.ndarray) -> dict:
    r1 = np.imag(cc.inner(cc.ezb, Y))
    b = wedge(cc.vec(cc.ezb), cc.vec(Y + 2j * cc.Dz(cc.H)))
    r2 = _mvnorm(cc.ip, b.imag)
    return {"sys1": np.abs(r1), "sys2": r2}


def _res_x_system(imm: Immersion, **_) -> dict:
    cc = _require(imm)
    return _sys12(cc, build_X(cc))


def _res_complex_normal(imm: Immersion, **_) -> dict:
    """pi_T(D_z H) - i *_h(D_z n ^ H) + 2 <H, H0> d_zbar Phi = 0."""
    cc = _require(imm)
    DzH = cc.Dz(cc.H)
    Dzn = cc.Dz_mv(cc.geo.n)
    r = cc.geo.project_tangent(DzH) - 1j * _star_wedge(cc.ip, Dzn, cc.H) + 2 * cc.inner(cc.H, cc.H0)[:, None] * cc.pzb
    return {"complex_normal": _vnorm(cc.h, r)}


def _res_codim1_conservative(imm: Immersion, *, laplacian_sign: float = 1.0, **_) -> dict:
    cc = _require(imm, codim1=True)
    g = cc.geo
    n = g.normals[:, 0]
    Hs = cc.inner(g.H, n)
    lap = cc.dd(Hs, 0, 0) + cc.dd(Hs, 1, 1)
    # sign fixed by D*(grad H n) = e^{2 lambda} Delta_g H n + grad H . Dn, i.e.
    # e^{2 lambda} Delta_g = d11 + d22 in conformal coordinates
    delta_g = laplacian_sign * lap / cc.e2l
    _, Rperp, Kbar = curvature_fields(cc)
    e2l = cc.e2l[:, None]
    lhs = (
        -2 * e2l * delta_g[:, None] * n
        - 4 * e2l * (Hs * (Hs**2 - (g.Kg - Kbar)))[:, None] * n
        + 2 * e2l * Rperp
    )
    Dn = [cc.cov(n, 0), cc.cov(n, 1)]
    Dperp = [-Dn[1], Dn[0]]
    nmv = MultiVector(3, 1, n)
    rhs = 0.0
    for i in range(2):
        V = -2 * cc.d(Hs, i)[:, None] * n + Hs[:, None] * Dn[i] - Hs[:, None] * _star_wedge(cc.ip, nmv, Dperp[i])
        rhs = rhs + cc.cov(V, i)
    return {"codim1_conservative": _vnorm(g.h, lhs - rhs)}


def _res_conservative(imm: Immersion, *, curvature_sign: float = 1.0, **_) -> dict:
    cc = _require(imm)
    H = cc.H
    H2 = cc.inner(H, H)
    lhs = conservative_lhs(cc)
    rhs = normal_laplacian(cc, H) + A_tilde(cc, H) - 2 * H2[:, None] * H + curvature_sign * rm_term(cc)
    return {"conservative": _vnorm(cc.h, lhs - rhs)}


def _res_rperp(imm: Immersion, **_) -> dict:
    """R_perp + 8 Re(<Riem(e_zbar, e_z) e_z, H> e_zbar) = 0 (pointwise algebra)."""
    cc = _require(imm)
    _, Rperp, _ = curvature_fields(cc)
    return {"rperp": _vnorm(cc.h, Rperp + rm_term(cc))}


def ambient_variation_term(cc: ConformalCalculus) -> np.ndarray:
    """(DR) + 2 frak_R + 2 Kbar H: the Euler-Lagrange contribution of the integral of Kbar."""
    g = cc.geo
    frak = frak_r(g.h, g.riemann, g.e[:, 0], g.e[:, 1], g.sff)
    DR = cc.imm.ambient.d_riemann_term(cc.imm.phi, g.e[:, 0], g.e[:, 1])
    return DR + 2 * frak + 2 * g.Kbar[:, None] * g.H


def willmore_residual(
    imm: Immersion,
    mode: str = "free",
    f: np.ndarray | None = None,
    multiplier: float = 0.0,
    form: str = "complex",
    cc: ConformalCalculus | None = None,
    functional: str = "W",
) -> np.ndarray:
    """Vector residual of the (constrained) Willmore equation in conservative form.

    ``functional="W_conf"`` switches to the conformal Willmore functional, which
    adds the variation of the integrated ambient sectional curvature.
    """
    cc = _require(imm) if cc is None else cc
    Rtilde, Rperp, _ = curvature_fields(cc)
    if form == "complex":
        res = conservative_lhs(cc) - Rtilde - rm_term(cc)
    elif form == "real":
        res = -0.5 * np.exp(-2 * cc.geo.lam)[:, None] * divergence_bracket(cc) - Rtilde + Rperp
    else:
        raise ValueError("form must be 'complex' or 'real'")
    if functional == "W_conf":
        res = res - ambient_variation_term(cc)
    elif functional != "W":
        raise ValueError("functional must be 'W' or 'W_conf'")
    if mode == "free":
        return res
    if mode == "conformal_constrained":
        if f is None:
            raise CheckError("conformal_constrained mode needs f")
        f = np.asarray(f, dtype=complex)
        holo = np.abs(cc.dzb(f))[imm.grid.interior]
        scale = 1.0 + np.max(np.abs(f[imm.grid.interior]))
        if np.max(holo) > 1e-3 * scale:
            raise CheckError(f"f is not holomorphic: max |d_zbar f| = {np.max(holo):.2e}")
        return res - np.exp(-2 * cc.geo.lam)[:, None] * np.imag(f[:, None] * np.conj(cc.H0))
    if mode == "area_constrained":
        return res - multiplier * cc.H
    raise ValueError(f"unknown mode {mode!r}")


def willmore_operator_general(imm: Immersion) -> np.ndarray:
    """1/2 D*_g B - R~(H) + R_perp in arbitrary (not necessarily conformal) coordinates.

    B_i = D_i H - 3 pi_n(D_i H) + *_h((*_g Dn)_i ^ H) with the surface Hodge star
    (*_g a)_i = -sqrt|g| eps_ij g^jk a_k and D*_g B = -|g|^{-1/2} D_j(sqrt|g| g^ij B_i).
    On conformal charts this reduces to the real form of ``willmore_residual``.
    """
    cc = ConformalCalculus(imm, strict=False)
    geo = cc.geo
    g = geo.g
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
    sq = np.sqrt(det)
    ginv = np.empty_like(g)
    ginv[:, 0, 0] = g[:, 1, 1] / det
    ginv[:, 1, 1] = g[:, 0, 0] / det
    ginv[:, 0, 1] = ginv[:, 1, 0] = -g[:, 0, 1] / det
    Dn = [cc.cov_mv(geo.n, 0), cc.cov_mv(geo.n, 1)]
    up = [Dn[0] * ginv[:, k, 0] + Dn[1] * ginv[:, k, 1] for k in range(2)]
    star = [up[1] * (-sq), up[0] * sq]
    ip = cc.ip
    B = []
    for i in range(2):
        DH = cc.cov(geo.H, i)
        B.append(DH - 3 * cc.pin(DH) + _star_wedge(ip, star[i], geo.H))
    div = 0.0
    for j in range(2):
        flux = sum((sq * ginv[:, i, j])[:, None] * B[i] for i in range(2))
        div = div + cc.cov(flux, j)
    Rtilde, Rperp, _ = curvature_terms(geo.h, geo.riemann, geo.e[:, 0], geo.e[:, 1], geo.H)
    return -0.5 * div / sq[:, None] - Rtilde + Rperp


def _res_willmore_general(imm: Immersion, *, multiplier: float = 0.0, **_) -> dict:
    res = willmore_operator_general(imm) - multiplier * geometry(imm).H
    return {"residual": _vnorm(imm.metric_at_samples(), res)}


def _res_willmore(imm: Immersion, *, mode: str = "free", f=None, multiplier: float = 0.0, form: str = "complex", functional: str = "W", **_) -> dict:
    cc = _require(imm)
    r = willmore_residual(imm, mode, f, multiplier, form, cc, functional)
    return {"willmore": _vnorm(cc.h, r)}


def F_residual(imm: Immersion, cc: ConformalCalculus | None = None) -> np.ndarray:
    cc = _require(imm) if cc is None else cc
    g = cc.geo
    Rtilde, Rperp, _ = curvature_fields(cc)
    lhs = -np.exp(-2 * g.lam)[:, None] * divergence_bracket(cc)
    rhs = 2 * Rtilde - 2 * Rperp + ambient_variation_term(cc)
    return lhs - rhs


def _res_F(imm: Immersion, **_) -> dict:
    cc = _require(imm)
    return {"F_el": _vnorm(cc.h, F_residual(imm, cc))}


def _res_conservation(imm: Immersion, *, f=None, Y=None, **_) -> dict:
    cc = _require(imm)
    X = build_X(cc)
    if Y is None:
        if f is None:
            Y = X
            f = np.zeros(imm.size, dtype=complex)
        else:
            f = np.asarray(f, dtype=complex)
            Y = np.exp(-cc.geo.lam)[:, None] * f[:, None] * cc.ezb + X
    out = _sys12(cc, Y)
    Rtilde, _, _ = curvature_fields(cc)
    c = cc.inner(cc.riem(cc.ezb, cc.ez, cc.ez), cc.H)
    rhs = -cc.e2l[:, None] * (0.5 * Rtilde + 4 * np.real(c[:, None] * cc.ezb))
    if f is not None:
        rhs = rhs + np.imag(cc.dzb(f)[:, None] * np.exp(-cc.geo.lam)[:, None] * cc.ezb)
    out["sys3"] = _vnorm(cc.h, np.imag(cc.Dzb(Y)) - rhs)
    return out


def _res_cmc(imm: Immersion, *, probe_seed: int = 0, **_) -> dict:
    amb = imm.ambient
    rng = np.random.default_rng(probe_seed)
    pts = imm.phi[rng.choice(imm.size, size=min(16, imm.size), replace=False)]
    K, defect = amb.constant_curvature_defect(pts, rng)
    if defect > 1e-6 * (1 + abs(K)):
        raise CheckError("ambient is not of constant curvature")
    cc = _require(imm)
    parallel = _vnorm(cc.h, cc.pin(cc.Dz(cc.H)))
    q = cc.e2l * cc.inner(cc.H, cc.H0)
    holo = np.abs(cc.dzb(q))
    f = 2j * q
    # conformal Willmore functional; the holomorphy of f is reported separately
    res = willmore_residual(imm, "free", cc=cc, functional="W_conf")
    res = res - np.exp(-2 * cc.geo.lam)[:, None] * np.imag(f[:, None] * np.conj(cc.H0))
    return {"parallel_H": parallel, "holomorphy": holo, "constrained_el": _vnorm(cc.h, res)}


_CHECKS: dict[str, Callable[..., dict]] = {
    "normal_divergence": _res_normal_divergence,
    "dzbar_dz_phi": _res_dzbar_dz_phi,
    "hopf": _res_hopf,
    "codazzi": _res_codazzi,
    "x_system": _res_x_system,
    "complex_normal": _res_complex_normal,
    "codim1_conservative": _res_codim1_conservative,
    "conservative": _res_conservative,
    "rperp": _res_rperp,
    "willmore": _res_willmore,
    "willmore_general": _res_willmore_general,
    "F_el": _res_F,
    "conservation": _res_conservation,
    "cmc": _res_cmc,
}

# identity suite: checks that must converge on every conformal built-in
IDENTITY_SUITE = ("normal_divergence", "dzbar_dz_phi", "hopf", "codazzi", "x_system", "codim1_conservative", "conservative")
CODIM1_ONLY = {"normal_divergence", "codim1_conservative"}


def available_checks() -> tuple[str, ...]:
    return tuple(_CHECKS)


def evaluate(check: str, imm: Immersion, **opts) -> dict[str, tuple[float, float]]:
    """Component name -> (sup, l2) for one check on one immersion."""
    if check not in _CHECKS:
        raise KeyError(f"unknown check {check!r}; choose from {sorted(_CHECKS)}")
    fields = _CHECKS[check](imm, **opts)
    return {k: _norms(imm, v) for k, v in fields.items()}


def _orders(values: list[float]) -> list[float]:
    out = []
    for a, b in zip(values[:-1], values[1:]):
        out.append(float(np.log2(a / b)) if a > 0 and b > 0 else float("inf"))
    return out


def run_check(
    check: str,
    immersions: list[Immersion] | Immersion,
    *,
    expected_order: float | None = ORDER_IDENTITY,
    zero_tol: float = ZERO_TOL,
    threshold: float | None = None,
    **opts,
) -> ResidualReport:
    """Evaluate a check on one immersion or a refinement sequence of them."""
    if isinstance(immersions, Immersion):
        immersions = [immersions]
    ns = [imm.grid.n for imm in immersions]
    if any(b <= a for a, b in zip(ns[:-1], ns[1:])):
        raise ValueError("refinement levels must be strictly increasing")
    per_level = [evaluate(check, imm, **opts) for imm in immersions]
    comps = list(per_level[0])
    components = {}
    worst_orders: list[float] | None = None
    worst_est = None
    for c in comps:
        sups = [lvl[c][0] for lvl in per_level]
        l2s = [lvl[c][1] for lvl in per_level]
        entry = {"sup": sups, "l2": l2s}
        if len(sups) >= 3:
            orders = _orders(sups)
            est = float(np.log2(sups[0] / sups[-1]) / (len(sups) - 1)) if sups[0] > 0 and sups[-1] > 0 else float("inf")
            exact_zero = max(sups) < zero_tol
            entry.update(successive_orders=orders, estimated_order=est, exact_zero=exact_zero)
            if not exact_zero and (worst_est is None or est < worst_est):
                worst_est, worst_orders = est, orders
        components[c] = entry
    sup_final = max(lvl[c][0] for c in comps for lvl in per_level[-1:])
    l2_final = max(lvl[c][1] for c in comps for lvl in per_level[-1:])
    per_ref = [(n, max(lvl[c][0] for c in comps), max(lvl[c][1] for c in comps)) for n, lvl in zip(ns, per_level)]
    rep = ResidualReport(
        name=check,
        sup_norm=sup_final,
        l2_norm=l2_final,
        per_refinement=per_ref,
        expected_order=expected_order if len(ns) >= 3 else None,
        zero_tol=zero_tol,
        components=components,
        notes=_notes(immersions[0]),
    )
    if len(ns) >= 3:
        all_zero = all(components[c]["exact_zero"] for c in comps)
        rep.estimated_order = worst_est
        rep.successive_orders = worst_orders or []
        if all_zero:
            rep.passed = True
        elif expected_order is not None:
            rep.passed = bool(worst_est >= expected_order)
    else:
        limit = zero_tol if threshold is None else threshold
        rep.passed = bool(sup_final < limit)
    return rep


def refine(check: str, builder: Callable[[int], Immersion], levels=(32, 64, 128, 256), **kw) -> ResidualReport:
    return run_check(check, [builder(n) for n in levels], **kw)


def _notes(imm: Immersion) -> str:
    if imm.grid.kind == "disc":
        return "norms over disc samples with r <= 1 - 2h (boundary ring of two samples excluded)"
    return "norms exclude the two polar rows of the sphere mesh"


# ---------------------------------------------------------------------------
# public wrappers mirroring the individual identities


def check_codim1_divergence(imm, **kw) -> ResidualReport:
    return run_check("normal_divergence", imm, **kw)


def check_conservative_codim1(imm, **kw) -> ResidualReport:
    return run_check("codim1_conservative", imm, **kw)


def check_conservative_general(imm, **kw) -> ResidualReport:
    return run_check("conservative", imm, **kw)


def check_codazzi_mainardi(imm, **kw) -> ResidualReport:
    return run_check("codazzi", imm, **kw)


def check_sysx(imm, **kw) -> ResidualReport:
    return run_check("x_system", imm, **kw)


def check_willmore_el(imm, mode: str = "free", **kw) -> ResidualReport:
    """Willmore EL residual; non-conformal immersions use the coordinate form.

    The coordinate form supports the free and area-constrained modes only.
    """
    first = imm[0] if isinstance(imm, (list, tuple)) else imm
    if not first.conformal:
        if mode not in ("free", "area_constrained"):
            raise CheckError(f"mode {mode!r} needs a conformal immersion")
        kw.pop("form", None)
        return run_check("willmore_general", imm, **kw)
    return run_check("willmore", imm, mode=mode, **kw)


def check_conservation_system(imm, Y=None, **kw) -> ResidualReport:
    return run_check("conservation", imm, Y=Y, **kw)


def check_cmc_conformal_willmore(imm, **kw) -> ResidualReport:
    kw.setdefault("expected_order", 1.5)
    return run_check("cmc", imm, **kw)


def check_F_el(imm, **kw) -> ResidualReport:
    return run_check("F_el", imm, **kw)


def projection_agreement(imm: Immersion) -> float:
    """Max difference between Gram-Schmidt and contraction normal projections."""
    geo = geometry(imm)
    ip = InnerProduct(geo.h)
    rng = np.random.default_rng(0)
    w = rng.normal(size=imm.phi.shape)
    a = geo.project_normal(w)
    b = project_normal_contraction(geo.n, MultiVector(imm.dim, 1, w), ip).coeffs
    return float(np.max(np.abs(a - b)))


__all__ = [
    "ResidualReport",
    "CheckError",
    "IDENTITY_SUITE",
    "available_checks",
    "evaluate",
    "run_check",
    "refine",
    "willmore_residual",
    "F_residual",
    "projection_agreement",
    "ImmersionError",
]
