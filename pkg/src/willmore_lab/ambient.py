"""Riemannian ambient manifolds described in a single coordinate chart.

Index conventions used throughout the package (all arrays may carry leading
batch axes):

* ``metric(x)[..., i, j] = h_ij``
* ``metric_d1(x)[..., l, i, j] = d_l h_ij``
* ``metric_d2(x)[..., k, l, i, j] = d_k d_l h_ij``
* ``christoffel(x)[..., k, a, b] = Gamma^k_ab``
* ``riemann(x)[..., k, l, a, b] = R^k_lab`` with
  Riem(d_a, d_b) d_l = R^k_lab d_k and
  Riem(X, Y)Z = D_X D_Y Z - D_Y D_X Z - D_[X,Y] Z.

With this convention the sectional curvature of a plane spanned by an
orthonormal pair (u, v) is <Riem(u, v)v, u>, which equals +1 on the unit
sphere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class ChartError(ValueError):
    """A point or a geodesic left the domain of the coordinate chart."""


class FrameError(ValueError):
    """A supplied frame is not orthonormal or a vector is not normal."""


ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CurvaturePack:
    point: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray


def _fd_weights_first() -> tuple[np.ndarray, np.ndarray]:
    # fourth-order centred first derivative
    return np.array([-2, -1, 1, 2]), np.array([1, -8, 8, -1]) / 12.0


class AmbientManifold:
    """Metric field on a chart with closed-form or finite-difference derivatives."""

    def __init__(
        self,
        dim: int,
        metric: ArrayFn,
        metric_d1: ArrayFn | None = None,
        metric_d2: ArrayFn | None = None,
        chart_radius: float = np.inf,
        name: str = "custom",
        params: dict | None = None,
        fd_scale: float = 1.0,
        constant_curvature: float | None = None,
    ) -> None:
        if not 2 <= dim <= 8:
            raise ValueError("ambient dimension must lie in 2..8")
        self.dim = dim
        self._metric = metric
        self._d1 = metric_d1
        self._d2 = metric_d2
        self.chart_radius = float(chart_radius)
        self.name = name
        self.params = dict(params or {})
        # length scale used for finite-difference steps
        self.fd_scale = float(fd_scale if np.isfinite(fd_scale) else 1.0)
        self.constant_curvature = constant_curvature

    # ------------------------------------------------------------------ metric
    def _as_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"points must have trailing dimension {self.dim}")
        return x

    def check_chart(self, x) -> None:
        x = self._as_points(x)
        if np.any(~np.isfinite(x)):
            raise ChartError("non-finite chart coordinates")
        if np.isfinite(self.chart_radius) and np.any(np.linalg.norm(x, axis=-1) >= self.chart_radius):
            raise ChartError(f"point outside chart of radius {self.chart_radius}")

    def metric(self, x) -> np.ndarray:
        x = self._as_points(x)
        return self._metric(x)

    @property
    def fd_step(self) -> float:
        return 1e-4 * self.fd_scale

    def _fd(self, fn: ArrayFn, x: np.ndarray, step: float) -> np.ndarray:
        """Fourth-order centred derivative of fn; derivative axis placed before fn's value axes."""
        offs, wts = _fd_weights_first()
        out = []
        for l in range(self.dim):
            e = np.zeros(self.dim)
            e[l] = step
            acc = sum(w * fn(x + o * e) for o, w in zip(offs, wts))
            out.append(acc / step)
        base = np.stack(out, axis=0)
        nb = x.ndim - 1
        # move the derivative axis behind the batch axes
        return np.moveaxis(base, 0, nb)

    def metric_d1(self, x) -> np.ndarray:
        x = self._as_points(x)
        if self._d1 is not None:
            return self._d1(x)
        return self._fd(self._metric, x, self.fd_step)

    def metric_d2(self, x) -> np.ndarray:
        x = self._as_points(x)
        if self._d2 is not None:
            return self._d2(x)
        if self._d1 is not None:
            return self._fd(self._d1, x, self.fd_step)
        return self._fd(lambda y: self._fd(self._metric, y, self.fd_step), x, 1e2 * self.fd_step)

    # --------------------------------------------------------------- curvature
    def christoffel(self, x) -> np.ndarray:
        x = self._as_points(x)
        h = self.metric(x)
        _check_spd(h)
        if self.flat:
            return np.zeros(x.shape + (self.dim, self.dim))
        dh = self.metric_d1(x)
        hinv = np.linalg.inv(h)
        # bracket[l, a, b] = d_a h_bl + d_b h_al - d_l h_ab
        bracket = np.einsum("...alb->...lab", dh) + np.einsum("...bla->...lab", dh) - dh
        return 0.5 * np.einsum("...kl,...lab->...kab", hinv, bracket)

    def christoffel_d1(self, x) -> np.ndarray:
        """d_c Gamma^k_ab, indexed [..., c, k, a, b]."""
        x = self._as_points(x)
        h = self.metric(x)
        dh = self.metric_d1(x)
        d2h = self.metric_d2(x)
        hinv = np.linalg.inv(h)
        bracket = np.einsum("...alb->...lab", dh) + np.einsum("...bla->...lab", dh) - dh
        dbracket = (
            np.einsum("...calb->...clab", d2h)
            + np.einsum("...cbla->...clab", d2h)
            - d2h
        )
        dhinv = -np.einsum("...kp,...cpq,...ql->...ckl", hinv, dh, hinv)
        return 0.5 * (
            np.einsum("...ckl,...lab->...ckab", dhinv, bracket)
            + np.einsum("...kl,...clab->...ckab", hinv, dbracket)
        )

    @property
    def flat(self) -> bool:
        return self.name == "euclidean"

    def riemann(self, x) -> np.ndarray:
        """R^k_lab with Riem(d_a, d_b) d_l = R^k_lab d_k.

        Constant-curvature ambients use R^k_lab = K (delta^k_a h_lb - delta^k_b h_la);
        everything else goes through ``riemann_from_christoffel``.
        """
        x = self._as_points(x)
        K = self.constant_curvature
        if K is None:
            return self.riemann_from_christoffel(x)
        h = self.metric(x)
        eye = np.eye(self.dim)
        return K * (np.einsum("ka,...lb->...klab", eye, h) - np.einsum("kb,...la->...klab", eye, h))

    def riemann_from_christoffel(self, x) -> np.ndarray:
        """Coordinate formula d_a Gamma - d_b Gamma + Gamma Gamma - Gamma Gamma."""
        x = self._as_points(x)
        G = self.christoffel(x)
        dG = self.christoffel_d1(x)
        # d_a Gamma^k_bl - d_b Gamma^k_al
        t1 = np.einsum("...akbl->...klab", dG) - np.einsum("...bkal->...klab", dG)
        t2 = np.einsum("...kap,...pbl->...klab", G, G) - np.einsum("...kbp,...pal->...klab", G, G)
        return t1 + t2

    def riemann_lower(self, x) -> np.ndarray:
        """Rm[..., w, l, a, b] = <Riem(d_a, d_b) d_l, d_w>."""
        x = self._as_points(x)
        return np.einsum("...wk,...klab->...wlab", self.metric(x), self.riemann(x))

    def curvature(self, x) -> CurvaturePack:
        x = self._as_points(x)
        R = self.riemann(x)
        ric = np.einsum("...klkb->...lb", R)
        scal = np.einsum("...lb,...lb->...", np.linalg.inv(self.metric(x)), ric)
        return CurvaturePack(x, self.christoffel(x), R, ric, scal)

    # ------------------------------------------------------ pointwise algebra
    def sectional(self, x, u, v) -> np.ndarray:
        """Sectional curvature of span(u, v); u, v need not be orthonormal."""
        x = self._as_points(x)
        h = self.metric(x)
        R = self.riemann(x)
        num = inner_h(h, riem_apply(R, u, v, v), u)
        den = inner_h(h, u, u) * inner_h(h, v, v) - inner_h(h, u, v) ** 2
        return num / den

    def curvature_endomorphisms(self, x, e1, e2, H, *, tol: float = 1e-10):
        """Return (R~(H), R_perp, Kbar) on the tangent plane span(e1, e2)."""
        x = self._as_points(x)
        h = self.metric(x)
        _check_orthonormal(h, [e1, e2], tol)
        scale = 1.0 + np.sqrt(np.abs(inner_h(h, H, H)))
        if np.any(np.abs(inner_h(h, H, e1)) > 1e-8 * scale) or np.any(np.abs(inner_h(h, H, e2)) > 1e-8 * scale):
            raise FrameError("H is not normal to the tangent plane")
        R = self.riemann(x)
        return curvature_terms(h, R, e1, e2, H)

    def frak_R_and_DR(self, x, e1, e2, sff, *, tol: float = 1e-10):
        """Return (frak R, (DR)) for the tangent plane span(e1, e2).

        ``sff[..., i, j, :]`` holds the normal vectors II(e_i, e_j).
        """
        x = self._as_points(x)
        h = self.metric(x)
        _check_orthonormal(h, [e1, e2], tol)
        R = self.riemann(x)
        frak = frak_r(h, R, e1, e2, sff)
        return frak, self.d_riemann_term(x, e1, e2)

    def covariant_d_riemann(self, x, step: float | None = None) -> np.ndarray:
        """(nabla_c Rm)[..., c, w, l, a, b] with Rm lowered as in riemann_lower."""
        x = self._as_points(x)
        step = 1e-3 * self.fd_scale if step is None else step
        dRm = self._fd(self.riemann_lower, x, step)
        Rm = self.riemann_lower(x)
        G = self.christoffel(x)
        corr = (
            np.einsum("...pcw,...plab->...cwlab", G, Rm)
            + np.einsum("...pcl,...wpab->...cwlab", G, Rm)
            + np.einsum("...pca,...wlpb->...cwlab", G, Rm)
            + np.einsum("...pcb,...wlap->...cwlab", G, Rm)
        )
        return dRm - corr

    def d_riemann_term(self, x, e1, e2) -> np.ndarray:
        """(DR) = sum_i <(D_{E_i} Riem)(e1, e2) e1, e2> E_i as a vector."""
        x = self._as_points(x)
        dRm = self.covariant_d_riemann(x)
        form = np.einsum("...cwlab,...w,...l,...a,...b->...c", dRm, e2, e1, e1, e2)
        return np.einsum("...ac,...c->...a", np.linalg.inv(self.metric(x)), form)

    def r_p_of_S(self, p, S, *, tol: float = 1e-10) -> float:
        """Sum of sectional curvatures over the six ordered pairs of a 3-frame."""
        p = self._as_points(p)
        S = np.asarray(S, dtype=float)
        if S.shape != (3, self.dim):
            raise ValueError("S must be three vectors of the ambient dimension")
        h = self.metric(p)
        _check_orthonormal(h, list(S), tol)
        R = self.riemann(p)
        total = 0.0
        for i in range(3):
            for j in range(3):
                if i != j:
                    total += float(inner_h(h, riem_apply(R, S[i], S[j], S[j]), S[i]))
        return total

    def constant_curvature_defect(self, points, rng: np.random.Generator, n_vectors: int = 4):
        """Best-fit constant K and the residual of <Riem(X,Y)W,Z> - K[...]."""
        pts = self._as_points(points)
        h = self.metric(pts)
        R = self.riemann(pts)
        X, Y, W, Z = (rng.normal(size=pts.shape[:-1] + (n_vectors, self.dim)) for _ in range(4))
        lhs = np.einsum("...wlab,...na,...nb,...nl,...nw->...n", np.einsum("...wk,...klab->...wlab", h, R), X, Y, W, Z)
        shape = np.einsum("...ij,...ni,...nj->...n", h, X, Z) * np.einsum("...ij,...ni,...nj->...n", h, Y, W) - np.einsum(
            "...ij,...ni,...nj->...n", h, X, W
        ) * np.einsum("...ij,...ni,...nj->...n", h, Y, Z)
        K = float(np.sum(lhs * shape) / np.sum(shape * shape))
        return K, float(np.max(np.abs(lhs - K * shape)))

    # ---------------------------------------------------------------- geodesics
    def exp_map(
        self, p, v, *, tol: float = 1e-12, max_halvings: int = 40, max_steps: int = 4000, return_steps: bool = False
    ):
        """Geodesic shooting from (p, v) over unit time with step-doubling RK4.

        Raises :class:`ChartError` when the geodesic leaves the chart, when its
        coordinates blow up (an unbounded chart such as the stereographic one
        sends the antipode to infinity) or when the step budget runs out.
        """
        p = self._as_points(p)
        v = np.asarray(v, dtype=float)
        p, v = np.broadcast_arrays(p, v)
        if np.all(v == 0):
            return (p.copy(), 0) if return_steps else p.copy()
        self.check_chart(p)

        def rhs(state):
            x, u = state
            G = self.christoffel(x)
            return u, -np.einsum("...kab,...a,...b->...k", G, u, u)

        def rk4(state, dt):
            k1 = rhs(state)
            s2 = (state[0] + 0.5 * dt * k1[0], state[1] + 0.5 * dt * k1[1])
            k2 = rhs(s2)
            s3 = (state[0] + 0.5 * dt * k2[0], state[1] + 0.5 * dt * k2[1])
            k3 = rhs(s3)
            s4 = (state[0] + dt * k3[0], state[1] + dt * k3[1])
            k4 = rhs(s4)
            return (
                state[0] + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
                state[1] + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
            )

        scale = 1.0 + float(np.max(np.abs(p))) + float(np.max(np.abs(v)))
        t, dt = 0.0, 1.0 / 16
        state = (p.astype(float), v.astype(float))
        steps = 0
        while t < 1.0 - 1e-15:
            dt = min(dt, 1.0 - t)
            if dt < 2.0 ** (-max_halvings):
                raise ChartError("geodesic step size underflow")
            full = rk4(state, dt)
            half = rk4(rk4(state, 0.5 * dt), 0.5 * dt)
            err = max(np.max(np.abs(full[0] - half[0])), np.max(np.abs(full[1] - half[1]))) / 15.0
            if not np.isfinite(err) or err > tol * scale:
                dt *= 0.5
                continue
            # Richardson-corrected accepted step
            state = (half[0] + (half[0] - full[0]) / 15.0, half[1] + (half[1] - full[1]) / 15.0)
            t += dt
            steps += 1
            self.check_chart(state[0])
            if np.max(np.abs(state[0])) > 1e6 * scale:
                raise ChartError("geodesic coordinates blew up: the geodesic leaves the chart")
            if steps > max_steps:
                raise ChartError(f"geodesic needed more than {max_steps} steps")
            if err < 0.01 * tol * scale:
                dt *= 2.0
        return (state[0], steps) if return_steps else state[0]

    def exp_map_fixed(self, p, v, n_steps: int) -> np.ndarray:
        """Plain RK4 with a fixed number of steps (for convergence-order studies)."""
        p = self._as_points(p)
        v = np.asarray(v, dtype=float)
        x, u = np.broadcast_arrays(p, v)
        x, u = x.astype(float), u.astype(float)
        dt = 1.0 / n_steps

        def acc(y, w):
            return -np.einsum("...kab,...a,...b->...k", self.christoffel(y), w, w)

        for _ in range(n_steps):
            k1x, k1u = u, acc(x, u)
            k2x, k2u = u + 0.5 * dt * k1u, acc(x + 0.5 * dt * k1x, u + 0.5 * dt * k1u)
            k3x, k3u = u + 0.5 * dt * k2u, acc(x + 0.5 * dt * k2x, u + 0.5 * dt * k2u)
            k4x, k4u = u + dt * k3u, acc(x + dt * k3x, u + dt * k3u)
            x = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
            u = u + dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        return x

    def describe(self) -> dict:
        return {"kind": self.name, "dim": self.dim, **self.params}


# ---------------------------------------------------------------------------
# pointwise tensor algebra shared with the immersion and residual modules


def inner_h(h: np.ndarray, X, Y) -> np.ndarray:
    """Complex-bilinear metric pairing h(X, Y)."""
    return np.einsum("...ij,...i,...j->...", h, X, Y)


def riem_apply(R: np.ndarray, X, Y, Z) -> np.ndarray:
    """The vector Riem(X, Y)Z."""
    return np.einsum("...klab,...a,...b,...l->...k", R, X, Y, Z)


def curvature_terms(h: np.ndarray, R: np.ndarray, e1, e2, H):
    """(R~(H), R_perp, Kbar) from a metric, a Riemann tensor and an orthonormal pair."""
    e1 = np.asarray(e1)
    e2 = np.asarray(e2)
    S = riem_apply(R, H, e1, e1) + riem_apply(R, H, e2, e2)
    Rtilde = -(S - inner_h(h, S, e1)[..., None] * e1 - inner_h(h, S, e2)[..., None] * e2)
    T = riem_apply(R, e1, e2, H)
    a = inner_h(h, T, e1)[..., None]
    b = inner_h(h, T, e2)[..., None]
    Rperp = a * e2 - b * e1
    Kbar = inner_h(h, riem_apply(R, e1, e2, e2), e1)
    return Rtilde, Rperp, Kbar


def frak_r(h: np.ndarray, R: np.ndarray, e1, e2, sff) -> np.ndarray:
    frames = (np.asarray(e1), np.asarray(e2))
    out = 0.0
    for j in range(2):
        c1 = inner_h(h, riem_apply(R, sff[..., 0, j, :], e2, e1), e2)
        c2 = inner_h(h, riem_apply(R, e1, sff[..., 1, j, :], e1), e2)
        out = out + (c1 + c2)[..., None] * frames[j]
    return out


def _check_spd(h: np.ndarray) -> None:
    if np.any(~np.isfinite(h)) or np.any(np.linalg.eigvalsh(h) <= 0):
        raise ChartError("metric is not positive definite at the queried point")


def _check_orthonormal(h: np.ndarray, vecs: list, tol: float) -> None:
    k = len(vecs)
    for i in range(k):
        for j in range(k):
            target = 1.0 if i == j else 0.0
            if np.any(np.abs(inner_h(h, vecs[i], vecs[j]) - target) > tol):
                raise FrameError("frame is not orthonormal within tolerance")


# ---------------------------------------------------------------------------
# built-in ambients


class ConformallyFlat(AmbientManifold):
    """Metric h = phi(x) * identity with closed-form derivatives of phi."""

    def __init__(self, dim, phi, dphi, ddphi, **kw) -> None:
        eye = np.eye(dim)

        def metric(x):
            return phi(x)[..., None, None] * eye

        def d1(x):
            return dphi(x)[..., :, None, None] * eye

        def d2(x):
            return ddphi(x)[..., :, :, None, None] * eye

        super().__init__(dim, metric, d1, d2, **kw)
        self.phi = phi
        self.dphi = dphi
        self.ddphi = ddphi


def euclidean(dim: int = 3) -> AmbientManifold:
    return ConformallyFlat(
        dim,
        lambda x: np.ones(x.shape[:-1]),
        lambda x: np.zeros(x.shape),
        lambda x: np.zeros(x.shape + (x.shape[-1],)),
        name="euclidean",
        params={},
        constant_curvature=0.0,
    )


def round_sphere(dim: int = 3, radius: float = 1.0) -> AmbientManifold:
    """Round sphere of the given radius in stereographic coordinates."""
    r2 = radius**2
    r4 = r2**2
    eye = np.eye(dim)

    def phi(x):
        s = r2 + np.sum(x * x, axis=-1)
        return 4 * r4 / s**2

    def dphi(x):
        s = r2 + np.sum(x * x, axis=-1)
        return -16 * r4 * x / s[..., None] ** 3

    def ddphi(x):
        s = (r2 + np.sum(x * x, axis=-1))[..., None, None]
        return -16 * r4 * eye / s**3 + 96 * r4 * x[..., :, None] * x[..., None, :] / s**4

    return ConformallyFlat(
        dim,
        phi,
        dphi,
        ddphi,
        name="sphere",
        params={"radius": radius},
        chart_radius=np.inf,
        fd_scale=radius,
        constant_curvature=1.0 / r2,
    )


def poincare_ball(dim: int = 3) -> AmbientManifold:
    """Hyperbolic space of curvature -1 in the Poincare ball chart."""
    eye = np.eye(dim)

    def phi(x):
        s = 1 - np.sum(x * x, axis=-1)
        return 4 / s**2

    def dphi(x):
        s = 1 - np.sum(x * x, axis=-1)
        return 16 * x / s[..., None] ** 3

    def ddphi(x):
        s = (1 - np.sum(x * x, axis=-1))[..., None, None]
        return 16 * eye / s**3 + 96 * x[..., :, None] * x[..., None, :] / s**4

    return ConformallyFlat(
        dim, phi, dphi, ddphi, name="hyperbolic", params={}, chart_radius=1.0, fd_scale=0.1, constant_curvature=-1.0
    )


def perturbed_euclidean(
    dim: int = 3,
    eps: float = 0.1,
    center=None,
    width: float = 0.7,
    mode: str = "conformal",
    seed: int = 0,
) -> AmbientManifold:
    """Euclidean metric plus a Gaussian bump s(x) = exp(-|x - c|^2 / (2 w^2)).

    ``mode="conformal"`` gives h = (1 + eps s) delta, so parametrizations that
    are conformal in Euclidean space stay conformal while the curvature is
    nonconstant.  ``mode="anisotropic"`` gives h = delta + eps s A for a fixed
    symmetric matrix A and leaves all metric derivatives to the
    finite-difference fallback.
    """
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    if c.shape != (dim,):
        raise ValueError("center must have the ambient dimension")
    w2 = width**2
    eye = np.eye(dim)

    def bump(x):
        d = x - c
        return np.exp(-np.sum(d * d, axis=-1) / (2 * w2))

    params = {"eps": eps, "center": c.tolist(), "width": width, "mode": mode}
    if mode == "conformal":

        def phi(x):
            return 1 + eps * bump(x)

        def dphi(x):
            return -eps * bump(x)[..., None] * (x - c) / w2

        def ddphi(x):
            d = x - c
            b = bump(x)[..., None, None]
            return eps * b * (d[..., :, None] * d[..., None, :] / w2**2 - eye / w2)

        return ConformallyFlat(dim, phi, dphi, ddphi, name="perturbed", params=params, fd_scale=1.0)
    if mode == "anisotropic":
        rng = np.random.default_rng(seed)
        B = rng.normal(size=(dim, dim))
        A = 0.5 * (B + B.T)
        A /= np.max(np.abs(np.linalg.eigvalsh(A)))
        params["seed"] = seed

        def metric(x):
            return eye + eps * bump(x)[..., None, None] * A

        return AmbientManifold(dim, metric, name="perturbed", params=params, fd_scale=1.0)
    raise ValueError(f"unknown perturbation mode {mode!r}")


def make_ambient(spec: dict) -> AmbientManifold:
    """Build a built-in ambient from a JSON-style description."""
    spec = dict(spec)
    kind = spec.pop("kind", "euclidean")
    dim = int(spec.pop("dim", 3))
    if kind == "euclidean":
        _no_extra(spec, kind)
        return euclidean(dim)
    if kind == "sphere":
        radius = float(spec.pop("radius", 1.0))
        _no_extra(spec, kind)
        return round_sphere(dim, radius)
    if kind == "hyperbolic":
        _no_extra(spec, kind)
        return poincare_ball(dim)
    if kind == "perturbed":
        kw = {k: spec.pop(k) for k in ("eps", "center", "width", "mode", "seed") if k in spec}
        _no_extra(spec, kind)
        return perturbed_euclidean(dim, **kw)
    raise ValueError(f"unknown ambient kind {kind!r}")


def _no_extra(spec: dict, kind: str) -> None:
    if spec:
        raise ValueError(f"unknown keys for ambient {kind!r}: {sorted(spec)}")
