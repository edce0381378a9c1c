"""Perturbed Cauchy-Riemann solvers on the unit disc and the L, S, R potentials.

The whole-plane stage inverts d_z + gamma by a fixed point built on the Cauchy
transform U = K * F with K(z) = 1/(pi zbar), evaluated by FFT on a zero-padded
square grid covering [-2, 2]^2.  The disc stage subtracts an anti-holomorphic
(or gamma-perturbed) correction so that Im U vanishes on the unit circle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .ambient import AmbientManifold, euclidean
from .exterior import InnerProduct, MultiVector, bullet, derivation_matrix, hodge_star, inner, interior_mult, wedge
from .grids import SquareGrid, apply
from .immersion import ConformalCalculus, Immersion, builtin

TOL_FP = 1e-10
MAX_ITER = 200
NONCONTRACTION_STREAK = 3
# a-priori contraction contract: kernel_norm * sup|gamma| must stay below this
CONTRACTION_LIMIT = 0.5
SUPPORT_TOL = 1e-12
COEFF_CUTOFF = 1e-13
# smooth cutoffs: data extension (Y) and chain extension (L, S, R right-hand sides)
WIDE_CUTOFF = (1.2, 1.9)
CHAIN_CUTOFF = (1.05, 1.35)
EVAL_RADIUS = 1.4  # reflection reaches radius 1 - 2 * 0.4 = 0.2


class DzSolveError(RuntimeError):
    """A solver stage failed (non-contraction, non-convergence, bad support)."""


@dataclass
class ComplexField:
    """Complex samples on a :class:`SquareGrid`; ``values`` is (P,) or (P, k)."""

    grid: SquareGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape[0] != self.grid.size:
            raise ValueError("field does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def disc_mask(self) -> np.ndarray:
        return self.grid.inside

    @property
    def ncomp(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def as_matrix(self) -> np.ndarray:
        return self.values.reshape(self.grid.size, -1)


@dataclass
class GammaField:
    """gamma^j_k samples, (P, k, k), compactly supported inside the radius-2 disc."""

    grid: SquareGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=complex)
        outside = self.grid.radius >= 2.0 - 1e-12
        if np.any(np.abs(self.values[outside]) > SUPPORT_TOL):
            raise DzSolveError("gamma must be supported inside the radius-2 disc")

    @property
    def eps(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @classmethod
    def zero(cls, grid: SquareGrid, k: int) -> "GammaField":
        return cls(grid, np.zeros((grid.size, k, k), dtype=complex))


@dataclass
class SolveInfo:
    iterations: int = 0
    ratios: list = field(default_factory=list)
    contraction_ratio: float | None = None
    kernel_norm: float = 0.0
    gamma_sup: float = 0.0
    boundary_modes: int = 0

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "contraction_ratio": self.contraction_ratio,
            "ratios": [float(r) for r in self.ratios],
            "kernel_norm": self.kernel_norm,
            "gamma_sup": self.gamma_sup,
            "boundary_modes": self.boundary_modes,
        }


# ---------------------------------------------------------------------------
# kernel and convolution


def smooth_cutoff(r: np.ndarray, r0: float, r1: float) -> np.ndarray:
    """C-infinity radial cutoff: 1 for r <= r0, 0 for r >= r1."""
    t = np.clip((np.asarray(r) - r0) / (r1 - r0), 0.0, 1.0)

    def psi(s):
        return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

    return psi(1 - t) / (psi(1 - t) + psi(t))


def _prim(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Antiderivative in x and y of x / (x^2 + y^2)."""
    r2 = x * x + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(r2 > 0, 0.5 * y * np.log(r2), 0.0)
        atan_term = np.where(x != 0, x * np.arctan(y / np.where(x != 0, x, 1.0)), 0.0)
    return log_term - y + atan_term


def _rect(F, x0, x1, y0, y1):
    return F(x1, y1) - F(x0, y1) - F(x1, y0) + F(x0, y0)


def cell_kernel(offsets_x: np.ndarray, offsets_y: np.ndarray, h: float) -> np.ndarray:
    """Integral of 1/(pi zbar) over the h-cell centred at each offset (exact)."""
    x0, x1 = offsets_x - h / 2, offsets_x + h / 2
    y0, y1 = offsets_y - h / 2, offsets_y + h / 2
    re = _rect(_prim, x0, x1, y0, y1)
    im = _rect(lambda a, b: _prim(b, a), x0, x1, y0, y1)
    return (re + 1j * im) / np.pi


class CauchyTransform:
    """FFT evaluation of (1/(pi zbar)) * F on a square grid with zero padding x2."""

    def __init__(self, grid: SquareGrid) -> None:
        self.grid = grid
        n, h = grid.n, grid.h
        k = np.arange(2 * n)
        k = np.where(k < n, k, k - 2 * n)
        OX, OY = np.meshgrid(k * h, k * h, indexing="ij")
        K = cell_kernel(OX, OY, h)
        K[0, 0] = 0.0  # the centred cell integrates to zero by symmetry
        self._khat = np.fft.fft2(K)
        # sup over the grid of the kernel mass felt from the radius-2 support
        self.kernel_norm = float(np.sum(np.abs(K[np.hypot(OX, OY) <= 2.0])))

    def __call__(self, F: np.ndarray) -> np.ndarray:
        n = self.grid.n
        F = np.asarray(F, dtype=complex)
        flat = F.reshape(n, n, -1)
        pad = np.zeros((2 * n, 2 * n, flat.shape[-1]), dtype=complex)
        pad[:n, :n] = flat
        out = np.fft.ifft2(np.fft.fft2(pad, axes=(0, 1)) * self._khat[..., None], axes=(0, 1))[:n, :n]
        return out.reshape(F.shape)


_TRANSFORMS: dict[tuple[int, float], CauchyTransform] = {}


def transform_for(grid: SquareGrid) -> CauchyTransform:
    key = (grid.n, grid.half_width)
    if key not in _TRANSFORMS:
        _TRANSFORMS[key] = CauchyTransform(grid)
    return _TRANSFORMS[key]


def _check_support(grid: SquareGrid, values: np.ndarray) -> None:
    ring = grid.radius >= grid.half_width - 2 * grid.h
    scale = max(1.0, float(np.max(np.abs(values))))
    if np.any(np.abs(values[ring]) > 1e-10 * scale):
        raise DzSolveError("data touches the padding boundary; extend it with compact support in the radius-2 disc")


def cauchy_convolve(Y: ComplexField) -> ComplexField:
    """(1/(pi zbar)) * Y, so that d_z of the result equals Y."""
    _check_support(Y.grid, Y.values)
    return ComplexField(Y.grid, transform_for(Y.grid)(Y.values))


def _apply_gamma(gamma: GammaField, U: np.ndarray) -> np.ndarray:
    mat = U.reshape(U.shape[0], -1)
    return np.einsum("pjk,pk->pj", gamma.values, mat).reshape(U.shape)


def _fixed_point(step, U0: np.ndarray, info: SolveInfo, tol: float, max_iter: int) -> np.ndarray:
    U = U0
    prev = None
    streak = 0
    for it in range(1, max_iter + 1):
        Unew = step(U)
        diff = float(np.max(np.abs(Unew - U)))
        if prev is not None and prev > 0:
            ratio = diff / prev
            info.ratios.append(ratio)
            streak = streak + 1 if ratio >= 1.0 else 0
            if streak >= NONCONTRACTION_STREAK:
                info.iterations = it
                raise DzSolveError(
                    f"gamma too large: iteration is not contracting (ratio {ratio:.3g} "
                    f"for {NONCONTRACTION_STREAK} successive iterates)"
                )
        prev = diff
        U = Unew
        if diff <= tol * max(1.0, float(np.max(np.abs(U)))):
            info.iterations = it
            tail = [r for r in info.ratios[-5:] if r > 0]
            info.contraction_ratio = float(np.median(tail)) if tail else 0.0
            return U
    info.iterations = max_iter
    raise DzSolveError(f"fixed point did not converge in {max_iter} iterations")


def check_contract(T: CauchyTransform, gamma: GammaField) -> float:
    """Raise unless kernel_norm * sup|gamma| < CONTRACTION_LIMIT; returns the bound."""
    bound = T.kernel_norm * gamma.eps
    if bound >= CONTRACTION_LIMIT:
        raise DzSolveError(
            f"gamma too large: kernel norm {T.kernel_norm:.3f} x sup|gamma| {gamma.eps:.3g} = {bound:.3g} "
            f">= {CONTRACTION_LIMIT}"
        )
    return bound


def solve_dz(
    Y: ComplexField,
    gamma: GammaField | None = None,
    *,
    tol: float = TOL_FP,
    max_iter: int = MAX_ITER,
    initial: np.ndarray | None = None,
    enforce_contract: bool = True,
) -> tuple[ComplexField, SolveInfo]:
    """Whole-plane solve of d_z U + gamma U = Y by the Cauchy-transform fixed point."""
    grid = Y.grid
    T = transform_for(grid)
    _check_support(grid, Y.values)
    info = SolveInfo(kernel_norm=T.kernel_norm, gamma_sup=0.0 if gamma is None else gamma.eps)
    if gamma is not None and enforce_contract:
        check_contract(T, gamma)
    if gamma is None or gamma.eps == 0.0:
        info.iterations = 1
        info.contraction_ratio = 0.0
        return ComplexField(grid, T(Y.values)), info
    U0 = T(Y.values) if initial is None else np.asarray(initial, dtype=complex)
    U = _fixed_point(lambda U: T(Y.values - _apply_gamma(gamma, U)), U0, info, tol, max_iter)
    return ComplexField(grid, U), info


# ---------------------------------------------------------------------------
# disc stage


def boundary_coefficients(grid: SquareGrid, values: np.ndarray, n_points: int | None = None) -> np.ndarray:
    """Fourier coefficients g_n of a real function sampled on the grid, traced on |z| = 1."""
    n_points = 4 * grid.n if n_points is None else n_points
    theta = 2 * np.pi * np.arange(n_points) / n_points
    x, y = np.cos(theta), np.sin(theta)
    vals = np.asarray(values, dtype=float).reshape(grid.n, grid.n, -1)
    trace = np.empty((n_points, vals.shape[-1]))
    for c in range(vals.shape[-1]):
        try:
            spline = RectBivariateSpline(grid.axis, grid.axis, vals[..., c], kx=3, ky=3)
        except Exception as exc:  # pragma: no cover - scipy raises several types
            raise DzSolveError(f"boundary interpolation failed: {exc}") from exc
        trace[:, c] = spline.ev(x, y)
    if not np.all(np.isfinite(trace)):
        raise DzSolveError("boundary interpolation produced non-finite values")
    return np.fft.fft(trace, axis=0) / n_points  # g_n at index n (negative n wrap)


# radial reflection weights: f(1 + s) ~ sum_j a_j f(1 - b_j s) matches f and three derivatives
_REFLECT_B = np.array([0.5, 1.0, 1.5, 2.0])
_REFLECT_A = np.linalg.solve(np.vander(-_REFLECT_B, 4, increasing=True).T, np.ones(4))


def _horner(c: np.ndarray, zb: np.ndarray) -> np.ndarray:
    acc = np.zeros((zb.size, c.shape[1]), dtype=complex)
    for j in range(c.shape[0] - 1, -1, -1):
        acc = acc * zb[:, None] + c[j]
    return acc


def antiholomorphic_extension(grid: SquareGrid, coeffs: np.ndarray, radius: float = EVAL_RADIUS) -> tuple[np.ndarray, int]:
    """V = i g_0 + sum_k 2 i g_{-k} zbar^k, whose imaginary part on |z| = 1 is the traced function.

    The series is summed on the closed disc only.  Between the unit circle and
    ``radius`` the field is continued by a radial reflection that matches three
    derivatives, so no power of |z| > 1 ever multiplies truncation noise.
    """
    n_points, k = coeffs.shape
    half = n_points // 2
    scale = float(np.max(np.abs(coeffs))) or 1.0
    neg = coeffs[(-np.arange(half)) % n_points]  # g_0, g_-1, g_-2, ...
    big = np.nonzero(np.max(np.abs(neg), axis=1) > COEFF_CUTOFF * scale)[0]
    K = int(big[-1]) + 1 if big.size else 1
    c = 2j * neg[:K]
    c[0] = 1j * neg[0].real
    z = grid.complex_coordinate()
    r = grid.radius
    V = np.zeros((grid.size, k), dtype=complex)
    inside = r <= 1.0
    V[inside] = _horner(c, np.conj(z[inside]))
    ring = (r > 1.0) & (r <= radius)
    if np.any(ring):
        u = z[ring] / r[ring]
        s_ = r[ring] - 1.0
        acc = 0.0
        for a, b in zip(_REFLECT_A, _REFLECT_B):
            acc = acc + a * _horner(c, np.conj(u * (1.0 - b * s_)))
        V[ring] = acc
    return V, K


def dirichlet_correct(
    Ut: ComplexField,
    gamma: GammaField | None = None,
    *,
    tol: float = TOL_FP,
    max_iter: int = MAX_ITER,
    enforce_contract: bool = True,
) -> tuple[ComplexField, SolveInfo]:
    """U = Ut - V with d_z V + gamma V = 0 on the disc and Im V = Im Ut on the circle."""
    grid = Ut.grid
    mat = Ut.as_matrix()
    info = SolveInfo(gamma_sup=0.0 if gamma is None else gamma.eps)
    g = boundary_coefficients(grid, mat.imag)
    V, K = antiholomorphic_extension(grid, g)
    info.boundary_modes = K
    if gamma is not None and gamma.eps > 0.0:
        T = transform_for(grid)
        info.kernel_norm = T.kernel_norm
        if enforce_contract:
            check_contract(T, gamma)
        chi = smooth_cutoff(grid.radius, *CHAIN_CUTOFF)[:, None]

        def step(W):
            part = T(-chi * _apply_gamma(gamma, W))
            gb = boundary_coefficients(grid, (mat - part).imag)
            hol, k_used = antiholomorphic_extension(grid, gb)
            info.boundary_modes = max(info.boundary_modes, k_used)
            return part + hol

        V = _fixed_point(step, V, info, tol, max_iter)
    else:
        info.iterations = 1
        info.contraction_ratio = 0.0
    U = mat - V
    outside = grid.radius > EVAL_RADIUS
    U[outside] = 0.0
    return ComplexField(grid, U.reshape(Ut.values.shape)), info


def solve_disc(Y: ComplexField, gamma: GammaField | None = None, **kw) -> tuple[ComplexField, dict]:
    """Both stages: D_z U = Y on the disc with Im U = 0 on the unit circle."""
    Ut, i1 = solve_dz(Y, gamma, **kw)
    U, i2 = dirichlet_correct(Ut, gamma, **kw)
    return U, {"whole_plane": i1.as_dict(), "disc": i2.as_dict()}


# ---------------------------------------------------------------------------
# diagnostics on the solver grid


def dz_field(grid: SquareGrid, F: np.ndarray) -> np.ndarray:
    d0 = apply(grid.d1_op(0), F)
    d1 = apply(grid.d1_op(1), F)
    return 0.5 * (d0 - 1j * d1)


def boundary_imag_sup(U: ComplexField) -> float:
    g = boundary_coefficients(U.grid, U.as_matrix().imag)
    trace = np.fft.ifft(g * g.shape[0], axis=0)
    return float(np.max(np.abs(trace.real)))


def interior_sup(grid: SquareGrid, F: np.ndarray) -> float:
    F = np.asarray(F).reshape(grid.size, -1)
    return float(np.max(np.abs(F[grid.interior])))


def analytic_case(M: int = 256, gamma_scale: float = 0.0, seed: int = 0, enforce_contract: bool = True) -> dict:
    """Y = 1 on the disc (smoothly cut off); for gamma = 0 the solution is U = 2 x1."""
    grid = SquareGrid(M)
    chi = smooth_cutoff(grid.radius, *WIDE_CUTOFF)
    Y = ComplexField(grid, chi.astype(complex))
    gamma = None
    if gamma_scale:
        gamma = bump_gamma(grid, gamma_scale, k=1, seed=seed)
    U, info = solve_disc(Y, gamma, enforce_contract=enforce_contract)
    res = dz_field(grid, U.values)
    if gamma is not None:
        res = res + _apply_gamma(gamma, U.values[:, None])[:, 0]
    out = {
        "M": M,
        "gamma_sup": 0.0 if gamma is None else gamma.eps,
        "residual_dz_interior": interior_sup(grid, res - Y.values),
        "boundary_imag_sup": boundary_imag_sup(U),
        "solver": info,
    }
    if gamma is None:
        exact = 2 * grid.params[:, 0]
        out["sup_error_vs_2x1"] = float(np.max(np.abs(U.values - exact)[grid.inside]))
    return out


def bump_gamma(grid: SquareGrid, scale: float, k: int = 1, seed: int = 0, identity: bool = True) -> GammaField:
    """gamma = scale * bump(z) * A with A = Id or a fixed random unit-sup matrix."""
    bump = smooth_cutoff(grid.radius, 0.0, 1.8)
    if identity:
        A = np.eye(k, dtype=complex)
    else:
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        A = A / np.max(np.abs(A))
    return GammaField(grid, scale * bump[:, None, None] * A[None])


# ---------------------------------------------------------------------------
# potentials L, S, R


@dataclass
class PotentialReport:
    M: int
    ambient: str
    immersion: str
    rs_eq1: float
    rs_eq2: float
    rs_prime_eq1: float
    rs_prime_eq2: float
    h_recovery_error: float
    dzL_residual: float
    dzS_residual: float
    dzR_residual: float
    boundary_imag: dict
    solver: dict
    gamma_sup: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class _FrameOps:
    """Covariant derivatives of vector and 2-vector fields on the solver grid."""

    def __init__(self, imm: Immersion, cc: ConformalCalculus) -> None:
        self.imm, self.cc = imm, cc
        self.grid = imm.grid
        self.A = [cc.gamma_along(imm.d1[:, i]) for i in range(2)]
        self.A2 = [derivation_matrix(a, 2) for a in self.A]
        R = cc.R
        self.curv = np.einsum("pklab,pa,pb->pkl", R, imm.d1[:, 0], imm.d1[:, 1])

    def d(self, F, i):
        return apply(self.grid.d1_op(i), F)

    def cov(self, F: np.ndarray, i: int, grade: int) -> np.ndarray:
        A = self.A[i] if grade == 1 else self.A2[i]
        return self.d(F, i) + np.einsum("pab,pb->pa", A, F)

    def Dz(self, F, grade):
        return 0.5 * (self.cov(F, 0, grade) - 1j * self.cov(F, 1, grade))

    def lap(self, F, grade):
        return sum(self.cov(self.cov(F, i, grade), i, grade) for i in range(2))

    def bracket(self, F, grade):
        M = self.curv if grade == 1 else derivation_matrix(self.curv, 2)
        return np.einsum("pab,pb->pa", M, F)


def potential_chain(imm: Immersion, *, tol: float = TOL_FP) -> tuple[dict, dict]:
    """Solve for L, S, R on the solver grid; returns fields and solver records."""
    grid = imm.grid
    m = imm.dim
    cc = ConformalCalculus(imm)
    ops = _FrameOps(imm, cc)
    chi_wide = smooth_cutoff(grid.radius, *WIDE_CUTOFF)
    chi = smooth_cutoff(grid.radius, *CHAIN_CUTOFF)
    # gamma^j_k = Gamma^j_{kl} d_z Phi^l, cut off inside the radius-2 disc
    gam = np.einsum("pjkl,pl->pjk", cc.G, cc.pz) * chi_wide[:, None, None]
    gamma1 = GammaField(grid, gam)
    gamma2 = GammaField(grid, derivation_matrix(gam, 2))
    X = -2j * cc.inner(cc.H, cc.H0)[:, None] * cc.pzb - 2j * cc.pin(cc.Dz(cc.H))
    Y = X * chi_wide[:, None]
    L, info_L = solve_disc(ComplexField(grid, Y), gamma1, tol=tol)
    Lv = L.values
    rhs_S = cc.inner(cc.pz, np.conj(Lv)) * chi
    S, info_S = solve_disc(ComplexField(grid, rhs_S), None, tol=tol)
    pz = MultiVector(m, 1, cc.pz)
    rhs_R = (wedge(pz, MultiVector(m, 1, np.conj(Lv))) - wedge(pz, MultiVector(m, 1, cc.H)) * 2j).coeffs
    rhs_R = rhs_R * chi[:, None]
    R, info_R = solve_disc(ComplexField(grid, rhs_R), gamma2, tol=tol)
    fields = {"cc": cc, "ops": ops, "Y": Y, "L": Lv, "S": S.values, "R": R.values, "rhs_S": rhs_S, "rhs_R": rhs_R, "gamma": gamma1}
    return fields, {"L": info_L, "S": info_S, "R": info_R}


def _bullet_field(ip: InnerProduct, n: MultiVector, F: np.ndarray) -> MultiVector:
    return bullet(n, MultiVector(n.dim, 2, F), ip)


def potential_residuals(imm: Immersion, fields: dict) -> dict:
    """Interior defects of the first-order (R, S) system, its second-order Laplace form and the H recovery."""
    grid = imm.grid
    cc: ConformalCalculus = fields["cc"]
    ops: _FrameOps = fields["ops"]
    m = imm.dim
    ip = cc.ip
    n = cc.geo.n
    sn = hodge_star(n, ip)  # 2-vector *_h n
    Lv, Sv, Rv = fields["L"], fields["S"], fields["R"]
    sign = (-1) ** (m + 1)

    DzR = ops.Dz(Rv, 2)
    dzS = dz_field(grid, Sv)
    eq1 = DzR - sign * hodge_star(_bullet_field(ip, n, 1j * DzR), ip).coeffs - (1j * dzS)[:, None] * sn.coeffs
    eq2 = dzS - inner(MultiVector(m, 2, -1j * DzR), sn, ip)

    # Laplace-type system for (Re R, Re S), remainders from their explicit expressions
    ReR, ImR = Rv.real, Rv.imag
    ReS, ImS = Sv.real, Sv.imag
    Dn = [cc.cov_mv(n, i) for i in range(2)]
    Dsn = [cc.cov_mv(sn, i).coeffs for i in range(2)]
    D_ReR = [ops.cov(ReR, i, 2) for i in range(2)]
    D_ImR = [ops.cov(ImR, i, 2) for i in range(2)]
    lap_ReR = ops.lap(ReR, 2)
    lap_ImR = ops.lap(ImR, 2)
    dRe = [ops.d(ReS, i) for i in range(2)]
    dIm = [ops.d(ImS, i) for i in range(2)]
    lapImS = sum(apply(grid.d2_op(i, i), ImS) for i in range(2))
    sgn_m = (-1) ** m

    def bul(a: MultiVector, F):
        return _bullet_field(ip, a, F).coeffs

    def star_grade(v, grade):
        return hodge_star(MultiVector(m, grade, v), ip).coeffs

    g_bul = m - 2  # grade of n . (2-vector)
    main_R = sgn_m * star_grade(bul(Dn[1], D_ReR[0]) - bul(Dn[0], D_ReR[1]), g_bul) + (
        dRe[1][:, None] * Dsn[0] - dRe[0][:, None] * Dsn[1]
    )
    F_tilde = sgn_m * star_grade(
        bul(n, lap_ImR - ops.bracket(ReR, 2)) + bul(Dn[0], D_ImR[0]) + bul(Dn[1], D_ImR[1]), g_bul
    ) - (lapImS[:, None] * sn.coeffs + dIm[0][:, None] * Dsn[0] + dIm[1][:, None] * Dsn[1]) - ops.bracket(ImR, 2)
    prs1 = lap_ReR - main_R - F_tilde

    def ip2(a, b):
        return inner(MultiVector(m, 2, a), MultiVector(m, 2, b), ip)

    lapReS = sum(apply(grid.d2_op(i, i), ReS) for i in range(2))
    main_S = ip2(D_ReR[0], Dsn[1]) - ip2(D_ReR[1], Dsn[0])
    G_tilde = (
        ops.d(ip2(D_ImR[0], sn.coeffs), 0)
        + ops.d(ip2(D_ImR[1], sn.coeffs), 1)
        - ip2(ops.bracket(ReR, 2), sn.coeffs)
    )
    prs2 = lapReS - main_S - G_tilde

    # H recovery
    pzb = MultiVector(m, 1, cc.pzb)
    contr = interior_mult(MultiVector(m, 2, DzR), pzb, ip).coeffs
    e2l = cc.e2l
    ImL = Lv.imag
    H_rec = (
        -np.imag(contr)
        - 0.5 * e2l[:, None] * ImL
        - np.real((dzS)[:, None] * (1j * cc.pzb))
        + np.real(cc.inner(cc.pz, ImL)[:, None] * cc.pzb)
    ) / e2l[:, None]

    # the three defining equations on the disc
    dzL = ops.Dz(Lv, 1) - fields["Y"]
    dzSres = dzS - fields["rhs_S"]
    dzRres = DzR - fields["rhs_R"]
    return {
        "rs_eq1": interior_sup(grid, eq1),
        "rs_eq2": interior_sup(grid, eq2),
        "rs_prime_eq1": interior_sup(grid, prs1),
        "rs_prime_eq2": interior_sup(grid, prs2),
        "h_recovery_error": interior_sup(grid, H_rec - cc.H),
        "dzL_residual": interior_sup(grid, dzL),
        "dzS_residual": interior_sup(grid, dzSres),
        "dzR_residual": interior_sup(grid, dzRres),
        "boundary_imag": {
            "L": boundary_imag_sup(ComplexField(grid, Lv)),
            "S": boundary_imag_sup(ComplexField(grid, Sv)),
            "R": boundary_imag_sup(ComplexField(grid, Rv)),
        },
    }


def potentials_immersion(
    M: int,
    name: str = "sphere",
    ambient: AmbientManifold | None = None,
    **params,
) -> Immersion:
    grid = SquareGrid(M)
    params.setdefault("scale", 0.6)
    return builtin(name, ambient=ambient or euclidean(3), grid=grid, **params)


def build_potentials(imm: Immersion, *, tol: float = TOL_FP) -> tuple[dict, PotentialReport]:
    """L, S, R for a conformal immersion sampled on a :class:`SquareGrid`."""
    if not isinstance(imm.grid, SquareGrid):
        raise DzSolveError("potentials are built on the square solver grid")
    if not imm.conformal:
        raise DzSolveError("potentials need a conformal immersion")
    fields, infos = potential_chain(imm, tol=tol)
    res = potential_residuals(imm, fields)
    solver = {k: {"whole_plane": v["whole_plane"], "disc": v["disc"]} for k, v in infos.items()}
    report = PotentialReport(
        M=imm.grid.n,
        ambient=imm.ambient.name,
        immersion=imm.name,
        solver=solver,
        gamma_sup=fields["gamma"].eps,
        **res,
    )
    return {"L": fields["L"], "S": fields["S"], "R": fields["R"]}, report


__all__ = [
    "ComplexField",
    "GammaField",
    "DzSolveError",
    "SolveInfo",
    "CauchyTransform",
    "cauchy_convolve",
    "solve_dz",
    "dirichlet_correct",
    "solve_disc",
    "analytic_case",
    "bump_gamma",
    "smooth_cutoff",
    "build_potentials",
    "potentials_immersion",
    "PotentialReport",
]
