"""Blasius similarity profile and its stream-coordinate form.

Solves f''' + f f'' = 0, f(0) = f'(0) = 0, f'(inf) = 1 by shooting on the
wall curvature f''(0) with a fixed-step RK4 integrator, fits the far-field
constants of 1 - f', and maps the profile onto the stream coordinate
psi = sqrt(2) f(z), where wbar(psi) = f'(z)^2 solves

    sqrt(wbar) wbar'' + (psi/2) wbar' = 0,  wbar(0) = 0, wbar(inf) = 1.

The energy weights rho(psi) = exp(int_0^psi s / (2 sqrt(wbar)) ds) and
A = rho / sqrt(wbar) are tabulated alongside.  Near the wall wbar vanishes
linearly (wbar ~ sqrt(2) b0 psi), so every division by sqrt(wbar) on the
first cells uses that linearization instead of an epsilon floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfcx

from .errors import NoBracket, NonMonotone, OutOfRange, StepTooLarge, Underflow

SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# shooting solver


def _rk4_end_slope(s: float, z_max: float, step: float) -> float:
    """f'(z_max) for wall curvature f''(0) = s (values only, no tabulation)."""
    n = int(round(z_max / step))
    h = z_max / n
    f, fp, fpp = 0.0, 0.0, s
    for _ in range(n):
        k1f, k1p, k1pp = fp, fpp, -f * fpp
        f2, p2, pp2 = f + 0.5 * h * k1f, fp + 0.5 * h * k1p, fpp + 0.5 * h * k1pp
        k2f, k2p, k2pp = p2, pp2, -f2 * pp2
        f3, p3, pp3 = f + 0.5 * h * k2f, fp + 0.5 * h * k2p, fpp + 0.5 * h * k2pp
        k3f, k3p, k3pp = p3, pp3, -f3 * pp3
        f4, p4, pp4 = f + h * k3f, fp + h * k3p, fpp + h * k3pp
        k4f, k4p, k4pp = p4, pp4, -f4 * pp4
        f += (h / 6.0) * (k1f + 2.0 * k2f + 2.0 * k3f + k4f)
        fp += (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        fpp += (h / 6.0) * (k1pp + 2.0 * k2pp + 2.0 * k3pp + k4pp)
    return fp


def _rk4_tabulate(s: float, z_max: float, step: float):
    """Integrate and tabulate (z, f, f', f'') on the uniform grid."""
    n = int(round(z_max / step))
    h = z_max / n
    z = np.linspace(0.0, z_max, n + 1)
    f = np.empty(n + 1)
    fp = np.empty(n + 1)
    fpp = np.empty(n + 1)
    f[0], fp[0], fpp[0] = 0.0, 0.0, s
    a, b, c = 0.0, 0.0, s
    for i in range(n):
        k1f, k1p, k1pp = b, c, -a * c
        a2, b2, c2 = a + 0.5 * h * k1f, b + 0.5 * h * k1p, c + 0.5 * h * k1pp
        k2f, k2p, k2pp = b2, c2, -a2 * c2
        a3, b3, c3 = a + 0.5 * h * k2f, b + 0.5 * h * k2p, c + 0.5 * h * k2pp
        k3f, k3p, k3pp = b3, c3, -a3 * c3
        a4, b4, c4 = a + h * k3f, b + h * k3p, c + h * k3pp
        k4f, k4p, k4pp = b4, c4, -a4 * c4
        a += (h / 6.0) * (k1f + 2.0 * k2f + 2.0 * k3f + k4f)
        b += (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        c += (h / 6.0) * (k1pp + 2.0 * k2pp + 2.0 * k3pp + k4pp)
        f[i + 1], fp[i + 1], fpp[i + 1] = a, b, c
    return z, f, fp, fpp


@dataclass
class FarFieldFit:
    """Least-squares far-field constants of 1 - f'.

    Model: log(1 - f') = log(n1) - log_coeff * log(z) - z^2/2 - n2 * z.
    log_coeff should come out near 1; residual is the RMS misfit.
    """

    n1: float
    n2: float
    log_coeff: float
    residual: float


@dataclass
class BlasiusProfile:
    """Tabulated similarity solution on a uniform z grid."""

    z_grid: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    fpp: np.ndarray
    b0: float
    z_max: float
    n1: float = np.nan
    n2: float = np.nan
    # suffix integrals of f'': one_minus_fp[i] = 1 - f'(z_i) evaluated without
    # cancellation (f'' stays relatively accurate long after 1 - fp is noise)
    one_minus_fp: np.ndarray = field(default=None, repr=False)

    @property
    def step(self) -> float:
        return self.z_grid[1] - self.z_grid[0]

    def validate(self, tail_tol: float = 1e-3, shoot_tol: float = 1e-10) -> None:
        z, f, fp, fpp = self.z_grid, self.f, self.fp, self.fpp
        if not (f[0] == 0.0 and fp[0] == 0.0):
            raise StepTooLarge("boundary data f(0)=f'(0)=0 not imposed")
        if self.b0 <= 0 or fpp[0] != self.b0:
            raise StepTooLarge("wall curvature b0 must be positive and stored")
        if np.any(fpp <= 0.0):
            raise StepTooLarge("f'' must stay positive on the grid")
        # fp increases strictly until its increments drop below double-precision
        # resolution near 1; beyond that only monotone non-decreasing is checkable
        resolved = (1.0 - fp[:-1]) > 100 * np.finfo(float).eps
        dfp = np.diff(fp)
        if np.any(dfp[resolved] <= 0.0) or np.any(dfp < 0.0):
            raise StepTooLarge("f' must be increasing on the grid")
        if not (1.0 - tail_tol <= fp[-1] <= 1.0 + 10 * shoot_tol):
            raise StepTooLarge("f'(z_max) not within [1 - tail_tol, 1]")

    def ode_residual(self) -> float:
        """max |f''' + f f''| with f''' from centered differences of f''."""
        h = self.step
        fppp = (self.fpp[2:] - self.fpp[:-2]) / (2.0 * h)
        return float(np.max(np.abs(fppp + self.f[1:-1] * self.fpp[1:-1])))

    # -- cubic Hermite evaluation (each tabulated field carries its own
    #    derivative: f' = fp, fp' = fpp, fpp' = -f fpp), O(step^4) accurate

    def _hermite(self, y: np.ndarray, dy: np.ndarray, z):
        z = np.asarray(z, dtype=float)
        h = self.step
        i = np.clip((z / h).astype(int), 0, len(self.z_grid) - 2)
        t = (z - self.z_grid[i]) / h
        h00 = (1 + 2 * t) * (1 - t) ** 2
        h10 = t * (1 - t) ** 2
        h01 = t * t * (3 - 2 * t)
        h11 = t * t * (t - 1)
        return h00 * y[i] + h * h10 * dy[i] + h01 * y[i + 1] + h * h11 * dy[i + 1]

    def f_at(self, z):
        z = np.asarray(z, dtype=float)
        inside = self._hermite(self.f, self.fp, np.minimum(z, self.z_max))
        # beyond z_max the profile is linear to machine precision: f' = 1
        return np.where(z <= self.z_max, inside, self.f[-1] + (z - self.z_max))

    def fp_at(self, z):
        z = np.asarray(z, dtype=float)
        inside = self._hermite(self.fp, self.fpp, np.minimum(z, self.z_max))
        return np.where(z <= self.z_max, inside, 1.0)

    def fpp_at(self, z):
        z = np.asarray(z, dtype=float)
        inside = self._hermite(self.fpp, -self.f * self.fpp, np.minimum(z, self.z_max))
        return np.where(z <= self.z_max, inside, 0.0)

    def fppp_at(self, z):
        return -self.f_at(z) * self.fpp_at(z)


def _tail_integral(profile_f_end: float, fpp_end: float) -> float:
    """int_{z_max}^inf f'' dz with f extended linearly (f' = 1 there).

    f''(z) = f''(z_max) exp(-a t - t^2 / 2), t = z - z_max, a = f(z_max),
    which integrates to f''(z_max) sqrt(pi/2) erfcx(a / sqrt 2).
    """
    a = profile_f_end
    return fpp_end * np.sqrt(np.pi / 2.0) * erfcx(a / SQRT2)


def solve_blasius(
    z_max: float = 10.0,
    step: float = 1e-3,
    shoot_tol: float = 1e-10,
    bracket: tuple[float, float] = (0.1, 1.0),
    residual_tol: float = 1e-6,
    max_iters: int = 100,
    fit_window: tuple[float, float] | None = None,
) -> BlasiusProfile:
    """Shoot on f''(0) so that |f'(z_max) - 1| < shoot_tol.

    Bisection establishes a tight bracket, a secant iteration finishes.  The
    end slope is strictly increasing in the shooting parameter; this is
    asserted on every evaluation.
    """
    if z_max < 8.0:
        raise NoBracket(f"z_max={z_max} too small; need z_max >= 8")
    if int(round(z_max / step)) < 400:
        raise StepTooLarge("need at least 400 grid points")
    if shoot_tol <= 0:
        raise ValueError("shoot_tol must be positive")

    evaluations: list[tuple[float, float]] = []

    def g(s: float) -> float:
        val = _rk4_end_slope(s, z_max, step) - 1.0
        for s_prev, g_prev in evaluations:
            if (s - s_prev) * (val - g_prev) <= 0.0 and s != s_prev:
                raise NonMonotone("end slope not strictly increasing in f''(0)")
        evaluations.append((s, val))
        return val

    lo, hi = bracket
    glo, ghi = g(lo), g(hi)
    if not (glo < 0.0 < ghi):
        raise NoBracket(
            f"bracket {bracket} does not straddle f'(z_max)=1 "
            f"(g={glo:.3e}, {ghi:.3e}); widen the bracket"
        )

    # a few bisections to tame the bracket, then secant
    for _ in range(8):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) < shoot_tol:
            lo = hi = mid
            break
        if gm < 0.0:
            lo, glo = mid, gm
        else:
            hi, ghi = mid, gm

    s0, s1, g0, g1 = lo, hi, glo, ghi
    s_root, g_root = s1, g1
    for _ in range(max_iters):
        if abs(g_root) < shoot_tol:
            break
        if g1 == g0:
            raise NoBracket("secant stalled: flat end-slope response")
        s_new = s1 - g1 * (s1 - s0) / (g1 - g0)
        if not (bracket[0] <= s_new <= bracket[1]):
            s_new = 0.5 * (lo + hi)
        g_new = g(s_new)
        if g_new < 0.0:
            lo = max(lo, s_new)
        else:
            hi = min(hi, s_new)
        s0, g0, s1, g1 = s1, g1, s_new, g_new
        s_root, g_root = s_new, g_new
    if abs(g_root) >= shoot_tol:
        raise NoBracket(f"shooting did not converge below {shoot_tol}")

    z, f, fp, fpp = _rk4_tabulate(s_root, z_max, step)
    profile = BlasiusProfile(z_grid=z, f=f, fp=fp, fpp=fpp, b0=s_root, z_max=z_max)

    # cancellation-free 1 - f': suffix trapezoid of f'' plus the analytic tail
    tail = _tail_integral(f[-1], fpp[-1])
    cells = 0.5 * (fpp[1:] + fpp[:-1]) * np.diff(z)
    suffix = np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])
    profile.one_minus_fp = suffix + tail

    res = profile.ode_residual()
    if res > residual_tol:
        raise StepTooLarge(f"ODE residual {res:.3e} exceeds {residual_tol:.3e}")
    profile.validate(shoot_tol=shoot_tol)

    window = fit_window if fit_window is not None else (0.6 * z_max, 0.8 * z_max)
    fit = fit_far_field(profile, window)
    profile.n1, profile.n2 = fit.n1, fit.n2
    return profile


def fit_far_field(
    profile: BlasiusProfile,
    fit_window: tuple[float, float],
    underflow_floor: float = 1e-13,
) -> FarFieldFit:
    """Fit log(1 - f') + z^2/2 against {-log z, -z, 1} on the window.

    Uses the cancellation-free tabulation of 1 - f'.  The floor marks where
    1 - f' drops below the certified accuracy of the tabulated solution.
    """
    lo, hi = fit_window
    if not (0.6 * profile.z_max - 1e-12 <= lo < hi <= 0.95 * profile.z_max + 1e-12):
        raise OutOfRange("fit window must lie inside [0.6, 0.95] * z_max")
    mask = (profile.z_grid >= lo) & (profile.z_grid <= hi)
    z = profile.z_grid[mask]
    s = profile.one_minus_fp[mask]
    if np.any(s <= underflow_floor):
        raise Underflow("1 - f' below the underflow floor inside the window")
    y = np.log(s) + 0.5 * z**2
    basis = np.column_stack([-np.log(z), -z, np.ones_like(z)])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    resid = float(np.sqrt(np.mean((basis @ coef - y) ** 2)))
    return FarFieldFit(n1=float(np.exp(coef[2])), n2=float(coef[1]),
                       log_coeff=float(coef[0]), residual=resid)


def one_minus_fp_at(profile: BlasiusProfile, z) -> np.ndarray:
    """1 - f'(z) off-grid, log-linear between the tabulated suffix integrals."""
    z = np.asarray(z, dtype=float)
    logs = np.log(profile.one_minus_fp)
    return np.exp(np.interp(z, profile.z_grid, logs))


# ---------------------------------------------------------------------------
# stream-coordinate profile


@dataclass
class SelfSimilarProfile:
    """wbar and the energy weights tabulated on a psi grid.

    a_weight[0] stores the cell average of the integrable near-wall form
    A ~ rho / sqrt(sqrt(2) b0 psi) over the first cell, never the pointwise
    infinity; all A-weighted integrands used here vanish at the wall.
    """

    psi_grid: np.ndarray
    wbar: np.ndarray
    wbar_p: np.ndarray
    wbar_pp: np.ndarray
    rho: np.ndarray
    log_rho: np.ndarray
    a_weight: np.ndarray
    psi_max: float
    b0: float
    source: BlasiusProfile | None = field(default=None, repr=False)

    def validate(self, tail_tol: float = 1e-3, residual_tol: float = 1e-6) -> None:
        # strict increase is checkable only while increments of wbar resolve
        # in double precision; past that the tail saturates at 1 - O(ulp)
        resolved = (1.0 - self.wbar[:-1]) > 100 * np.finfo(float).eps
        dw = np.diff(self.wbar)
        if self.wbar[0] != 0.0 or np.any(dw[resolved] <= 0.0) or np.any(dw < 0.0):
            raise NonMonotone("wbar must start at 0 and increase strictly")
        if not (1.0 - tail_tol <= self.wbar[-1] <= 1.0):
            raise OutOfRange("wbar(psi_max) not within [1 - tail_tol, 1]")
        if abs(self.wbar_p[0] - SQRT2 * self.b0) > 1e-8:
            raise StepTooLarge("wall slope wbar_p(0) != sqrt(2) b0")
        if self.rho[0] != 1.0 or np.any(np.diff(self.rho) <= 0.0):
            raise NonMonotone("rho must start at 1 and increase strictly")
        if not np.all(np.isfinite(self.a_weight)):
            raise StepTooLarge("a_weight contains non-finite entries")
        res = self.stationarity_residual()
        if res > residual_tol:
            raise StepTooLarge(f"wbar residual {res:.3e} exceeds {residual_tol:.3e}")

    def stationarity_residual(self) -> float:
        """max interior |sqrt(wbar) wbar_pp + (psi/2) wbar_p| on the tabulation."""
        r = (np.sqrt(self.wbar[1:-1]) * self.wbar_pp[1:-1]
             + 0.5 * self.psi_grid[1:-1] * self.wbar_p[1:-1])
        return float(np.max(np.abs(r)))


def z_of_psi(profile: BlasiusProfile, psi) -> np.ndarray:
    """Invert psi = sqrt(2) f(z) (strictly monotone) by Newton on Hermite f."""
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < -1e-15):
        raise OutOfRange("psi must be nonnegative")
    psi_table = SQRT2 * profile.f
    if np.any(np.diff(psi_table) <= 0.0):
        raise NonMonotone("tabulated psi(z) is not strictly increasing")
    z = np.interp(psi, psi_table, profile.z_grid)
    beyond = psi > psi_table[-1]
    # three Newton sweeps from the piecewise-linear seed reach round-off
    for _ in range(3):
        fz = profile.f_at(z)
        fpz = profile.fp_at(z)
        z = np.maximum(z - (SQRT2 * fz - psi) / (SQRT2 * np.maximum(fpz, 1e-300)), 0.0)
    z = np.where(beyond, profile.z_max + (psi - psi_table[-1]) / SQRT2, z)
    return z


def wbar_of_psi(profile: BlasiusProfile, psi) -> np.ndarray:
    return profile.fp_at(z_of_psi(profile, psi)) ** 2


def wbar_p_of_psi(profile: BlasiusProfile, psi) -> np.ndarray:
    return SQRT2 * profile.fpp_at(z_of_psi(profile, psi))


def wbar_pp_of_psi(profile: BlasiusProfile, psi) -> np.ndarray:
    """wbar'' = -f f'' / f' with the analytic zero limit at the wall."""
    z = z_of_psi(profile, psi)
    f, fp, fpp = profile.f_at(z), profile.fp_at(z), profile.fpp_at(z)
    out = np.zeros_like(np.asarray(z, dtype=float))
    nz = fp > 0.0
    out[nz] = -f[nz] * fpp[nz] / fp[nz]
    return out


def psi_max_for_tail(profile: BlasiusProfile, tail_tol: float,
                     stretch: float = 1.0) -> float:
    """Smallest psi_max with 1 - wbar(psi_max / stretch) <= tail_tol.

    stretch > 1 budgets for initial data whose layer is thicker than the
    steady profile by that factor.
    """
    one_minus_wbar = self_similar_gap(profile)
    idx = np.searchsorted(-one_minus_wbar, -tail_tol)
    if idx >= len(profile.z_grid):
        raise OutOfRange("tail_tol not reachable within z_max")
    return float(stretch * SQRT2 * profile.f[idx])


def self_similar_gap(profile: BlasiusProfile) -> np.ndarray:
    """1 - wbar on the z grid, evaluated without cancellation."""
    s = profile.one_minus_fp
    return s * (1.0 + profile.fp)


def build_self_similar(profile: BlasiusProfile, psi_grid: np.ndarray,
                       tail_tol: float = 1e-3) -> SelfSimilarProfile:
    """Tabulate wbar, its derivatives, and the weights on the given psi grid."""
    psi = np.asarray(psi_grid, dtype=float)
    if psi[0] != 0.0 or np.any(np.diff(psi) <= 0.0):
        raise NonMonotone("psi grid must start at 0 and increase strictly")
    if psi[-1] > SQRT2 * profile.f[-1] + 1e-12:
        raise OutOfRange("psi_max exceeds sqrt(2) f(z_max)")

    z = z_of_psi(profile, psi)
    fp = profile.fp_at(z)
    fpp = profile.fpp_at(z)
    wbar = fp**2
    wbar[0] = 0.0
    # the saturated tail (1 - wbar below ~100 ulp) may wiggle at round-off
    # level; monotonize it so downstream interpolation stays monotone
    wbar = np.minimum(np.maximum.accumulate(wbar), 1.0)
    wbar_p = SQRT2 * fpp
    wbar_pp = np.zeros_like(psi)
    wbar_pp[1:] = -profile.f_at(z[1:]) * fpp[1:] / fp[1:]

    b0 = profile.b0
    slope = SQRT2 * b0
    # log rho by trapezoid of s / (2 sqrt(wbar)); the first two cells use the
    # wall linearization wbar ~ slope * s, whose integral is exact
    integrand = np.zeros_like(psi)
    integrand[1:] = psi[1:] / (2.0 * np.sqrt(wbar[1:]))
    log_rho = np.zeros_like(psi)
    two = min(2, len(psi) - 1)
    log_rho[two] = psi[two] ** 1.5 / (3.0 * np.sqrt(slope))
    if two == 2:
        log_rho[1] = psi[1] ** 1.5 / (3.0 * np.sqrt(slope))
    cells = 0.5 * (integrand[two:-1] + integrand[two + 1:]) * np.diff(psi[two:])
    log_rho[two + 1:] = log_rho[two] + np.cumsum(cells)
    rho = np.exp(log_rho)

    a_weight = np.empty_like(psi)
    a_weight[1:] = rho[1:] / np.sqrt(wbar[1:])
    a_weight[0] = 2.0 / np.sqrt(slope * psi[1])  # first-cell average of the
    # integrable form rho / sqrt(slope * s); rho(0) = 1

    ss = SelfSimilarProfile(
        psi_grid=psi, wbar=wbar, wbar_p=wbar_p, wbar_pp=wbar_pp,
        rho=rho, log_rho=log_rho, a_weight=a_weight,
        psi_max=float(psi[-1]), b0=b0, source=profile,
    )
    ss.validate(tail_tol=tail_tol)
    return ss


def weights_at(ss: SelfSimilarProfile, psi):
    """Interpolated (rho, A) at psi in [0, psi_max].

    At the wall A is reported through the first-cell average of its
    integrable form, never as a pointwise infinity.
    """
    scalar = np.isscalar(psi)
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    if np.any(psi < 0.0) or np.any(psi > ss.psi_max * (1 + 1e-12)):
        raise OutOfRange("psi outside [0, psi_max]")
    rho = np.exp(np.interp(psi, ss.psi_grid, ss.log_rho))
    slope = SQRT2 * ss.b0
    wall = psi < ss.psi_grid[min(2, len(ss.psi_grid) - 1)]
    wbar = np.interp(psi, ss.psi_grid, ss.wbar)
    wbar = np.where(wall, slope * psi, wbar)
    a = np.empty_like(psi)
    pos = psi > 0.0
    a[pos] = rho[pos] / np.sqrt(wbar[pos])
    a[~pos] = ss.a_weight[0]
    if scalar:
        return float(rho[0]), float(a[0])
    return rho, a
