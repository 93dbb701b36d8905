"""Semi-implicit marching of omega_xi = sqrt(omega) omega_psipsi + (psi/2) omega_psi.

The degenerate coefficient sqrt(omega) is frozen at the current level
(Picard lag), giving one tridiagonal solve per step; an optional corrector
re-solves with the coefficient at the theta-weighted level, which restores
second order for Crank-Nicolson.  Advection is discretized centrally and
folded into the implicit matrix; rows where that breaks the M-matrix sign
pattern fall back to first-order upwind, so diagonal dominance holds
whenever omega >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .blasius import SelfSimilarProfile, wbar_of_psi
from .errors import ConfigError, GuardViolation, SolveFailed
from .grid import OmegaField, PsiGrid, d1, d2

DXI_MAX = 0.5  # accuracy-motivated; the scheme is implicitly stable

_THETA = {"BackwardEuler": 1.0, "CrankNicolson": 0.5}


@dataclass
class GuardFlags:
    """Which structural monitors run each step, and whether failure is fatal."""

    envelope: bool = True
    wall_slope: bool = True
    concavity: bool = False
    bounds: bool = True
    fatal: bool = True
    # relative widening of the initial [k1, k2] envelope; scheme noise on an
    # equilibrium run measures ~4e-5 at J=512, so 1e-3 separates noise from
    # genuine violations
    envelope_slack: float = 1e-3
    wall_slope_floor: float = 0.0
    concavity_tol_scale: float = 1e-8


@dataclass
class MarchConfig:
    d_shift: float = 1.0
    xi_end: float = 2.0
    dxi: float = 1e-2
    scheme: str = "CrankNicolson"
    picard_tol: float = 1e-9
    max_picard: int = 1
    guards: GuardFlags = field(default_factory=GuardFlags)

    def validate(self) -> None:
        if self.d_shift < 1.0:
            raise ConfigError("d_shift must be >= 1")
        if self.dxi <= 0 or self.dxi > DXI_MAX:
            raise ConfigError(f"dxi must lie in (0, {DXI_MAX}]")
        if self.xi_end <= np.log(self.d_shift):
            raise ConfigError("xi_end must exceed ln(d_shift)")
        if self.scheme not in _THETA:
            raise ConfigError(f"unknown scheme {self.scheme!r}")


@dataclass
class GuardRecord:
    xi: float
    k1: float
    k2: float
    wall_slope: float
    max_p: float


@dataclass
class Trajectory:
    snapshots: list[OmegaField]
    guard_log: list[GuardRecord]
    config: MarchConfig | None = None


def _operator_rows(values: np.ndarray, grid: PsiGrid):
    """Stencil rows of L = a d2 + (psi/2) d1 with a = sqrt(max(omega, 0)).

    Central advection is replaced by upwind on rows where the lower
    coefficient would turn negative, preserving sign pattern A, C >= 0 and
    B = -(A + C).
    """
    a = np.sqrt(np.maximum(values[1:-1], 0.0))
    psi = grid.nodes[1:-1]
    hm, hp = grid.h[:-1], grid.h[1:]
    lower = a * 2.0 / (hm * (hm + hp)) - 0.5 * psi * hp / (hm * (hm + hp))
    upper = a * 2.0 / (hp * (hm + hp)) + 0.5 * psi * hm / (hp * (hm + hp))
    bad = lower < 0.0
    if np.any(bad):
        lower = np.where(bad, a * 2.0 / (hm * (hm + hp)), lower)
        upper = np.where(bad, a * 2.0 / (hp * (hm + hp)) + 0.5 * psi / hp, upper)
    diag = -(lower + upper)
    return lower, diag, upper


def _solve_theta(field_vals, grid, dxi, theta, coeff_vals):
    """One theta-scheme solve with the frozen coefficient field coeff_vals."""
    lower, diag, upper = _operator_rows(coeff_vals, grid)
    v = field_vals
    rhs_interior = v[1:-1] + (1.0 - theta) * dxi * (
        lower * v[:-2] + diag * v[1:-1] + upper * v[2:]
    )
    n = len(v)
    ab = np.zeros((3, n))
    ab[1, 0] = 1.0
    ab[1, -1] = 1.0
    ab[1, 1:-1] = 1.0 - theta * dxi * diag
    ab[0, 2:] = -theta * dxi * upper
    ab[2, :-2] = -theta * dxi * lower
    rhs = np.empty(n)
    rhs[0] = 0.0
    rhs[-1] = 1.0
    rhs[1:-1] = rhs_interior
    if not np.all(np.isfinite(ab)):
        raise SolveFailed("non-finite entries in the marching matrix")
    out = solve_banded((1, 1), ab, rhs)
    if not np.all(np.isfinite(out)):
        raise SolveFailed("tridiagonal solve produced non-finite values")
    return out


def step(field: OmegaField, dxi: float, scheme: str = "CrankNicolson",
         picard_tol: float = 1e-9, max_picard: int = 1) -> OmegaField:
    """Advance one step; dxi = 0 returns an identical copy."""
    if dxi < 0 or dxi > DXI_MAX:
        raise ConfigError(f"dxi must lie in [0, {DXI_MAX}]")
    if dxi == 0.0:
        return field.clone()
    theta = _THETA[scheme]
    v = field.values
    new = _solve_theta(v, field.grid, dxi, theta, v)
    for _ in range(max_picard):
        # corrector: coefficient at the theta-weighted level
        mid = theta * new + (1.0 - theta) * v
        resid = _picard_residual(v, new, field.grid, dxi, theta, mid)
        if resid <= picard_tol:
            break
        new = _solve_theta(v, field.grid, dxi, theta, mid)
    new[0], new[-1] = 0.0, 1.0
    return OmegaField(field.grid, new, field.xi + dxi, field.d_shift)


def _picard_residual(v_old, v_new, grid, dxi, theta, coeff_vals) -> float:
    lower, diag, upper = _operator_rows(coeff_vals, grid)

    def apply(v):
        return lower * v[:-2] + diag * v[1:-1] + upper * v[2:]

    r = (v_new[1:-1] - v_old[1:-1]) / dxi - theta * apply(v_new) \
        - (1.0 - theta) * apply(v_old)
    return float(np.max(np.abs(r)))


# ---------------------------------------------------------------------------
# structural monitors


def check_comparison(field: OmegaField, ss: SelfSimilarProfile,
                     envelope: tuple[float, float] | None = None,
                     slack: float = 1e-6):
    """(k1_obs, k2_obs, pass): extremes of omega / wbar over interior nodes.

    The near-wall node ratio is the slope ratio by construction (both fields
    vanish linearly at the wall).  If an envelope (k1, k2) from the initial
    data is supplied, pass requires the observed range to stay inside it
    widened by the relative slack.
    """
    ratio = field.values[1:-1] / ss.wbar[1:-1]
    k1_obs = float(np.min(ratio))
    k2_obs = float(np.max(ratio))
    if envelope is None:
        return k1_obs, k2_obs, True
    k1, k2 = envelope
    ok = (k1_obs >= k1 - slack * max(abs(k1), 1.0)
          and k2_obs <= k2 + slack * max(abs(k2), 1.0))
    return k1_obs, k2_obs, bool(ok)


def check_concavity(field: OmegaField, tol: float | None = None):
    """(max_p, pass) with p = sqrt(omega) d2(omega) on interior nodes.

    Discrete p cannot be exactly <= 0; the default tolerance separates
    scheme noise from a genuine violation.
    """
    p = np.sqrt(np.maximum(field.values, 0.0)) * d2(field.values, field.grid)
    p_int = p[1:-1]
    max_p = float(np.max(p_int))
    scale = float(np.max(np.abs(p_int)))
    if tol is None:
        tol = 1e-8 * max(scale, 1.0)
    return max_p, bool(max_p <= tol)


def wall_slope(field: OmegaField) -> float:
    return float(d1(field.values, field.grid)[0])


def initial_from_similarity(ss: SelfSimilarProfile, grid: PsiGrid,
                            s_shift: float, d_shift: float) -> OmegaField:
    """Initial data wbar(psi / tau0), tau0 = sqrt(s_shift / d_shift).

    This is the stream-coordinate image of the shifted similarity velocity
    profile evaluated at x = 0, and marches as an exact solution.
    """
    if ss.source is None:
        raise ConfigError("self-similar profile lacks its source tabulation")
    if not np.array_equal(grid.nodes, ss.psi_grid):
        raise ConfigError("grid does not match the self-similar tabulation")
    tau0 = np.sqrt(s_shift / d_shift)
    vals = wbar_of_psi(ss.source, ss.psi_grid / tau0)
    vals[0], vals[-1] = 0.0, 1.0
    return OmegaField(grid, vals, float(np.log(d_shift)), d_shift)


def exact_similarity_tau(s_shift: float, d_shift: float, xi: float) -> float:
    """tau(xi) = sqrt((x + s) / (x + d)) with x = e^xi - d."""
    x = np.exp(xi) - d_shift
    return float(np.sqrt((x + s_shift) / (x + d_shift)))


def march(initial: OmegaField, config: MarchConfig, output_xis,
          ss: SelfSimilarProfile) -> Trajectory:
    """Run steps to xi_end, recording snapshots at the requested stations.

    Snapshots are linear ξ-interpolants between the bracketing steps.  Guard
    failures raise GuardViolation carrying the partial trajectory when
    guards are fatal; otherwise they are only logged.
    """
    config.validate()
    output_xis = np.asarray(sorted(output_xis), dtype=float)
    if len(output_xis) == 0:
        raise ConfigError("need at least one output station")
    if output_xis[0] <= initial.xi or output_xis[-1] > config.xi_end + 1e-12:
        raise ConfigError("output stations must lie in (xi0, xi_end]")
    if not np.array_equal(initial.grid.nodes, ss.psi_grid):
        raise ConfigError("field grid and self-similar tabulation differ")

    flags = config.guards
    k1_init, k2_init, _ = check_comparison(initial, ss)
    traj = Trajectory(snapshots=[], guard_log=[], config=config)

    def monitor(fld: OmegaField) -> None:
        k1o, k2o, env_ok = check_comparison(
            fld, ss, (k1_init, k2_init), flags.envelope_slack)
        slope = wall_slope(fld)
        max_p, conc_ok = check_concavity(fld)
        traj.guard_log.append(GuardRecord(fld.xi, k1o, k2o, slope, max_p))
        failures = []
        if flags.envelope and not env_ok:
            failures.append(f"comparison envelope [{k1_init:.3g}, {k2_init:.3g}]")
        if flags.wall_slope and slope <= flags.wall_slope_floor:
            failures.append(f"wall slope {slope:.3e}")
        if flags.concavity and not conc_ok:
            failures.append(f"concavity max p = {max_p:.3e}")
        if flags.bounds:
            # the far-field condition omega -> 1 keeps the ceiling at least 1
            # even when the initial envelope has k2 < 1
            ceiling = max(k2_init, 1.0) * float(np.max(ss.wbar))
            if np.min(fld.values) < -1e-10 or np.max(fld.values) > ceiling + 1e-9:
                failures.append("omega left [0, max(k2,1) max wbar]")
        if failures and flags.fatal:
            raise GuardViolation(
                f"guard failure at xi={fld.xi:.4f}: " + "; ".join(failures),
                trajectory=traj,
            )

    monitor(initial)
    current = initial
    next_out = 0
    while current.xi < config.xi_end - 1e-12:
        dxi = min(config.dxi, config.xi_end - current.xi)
        new = step(current, dxi, config.scheme, config.picard_tol,
                   config.max_picard)
        monitor(new)
        while next_out < len(output_xis) and output_xis[next_out] <= new.xi + 1e-12:
            xi_star = output_xis[next_out]
            lam = (xi_star - current.xi) / (new.xi - current.xi)
            vals = (1.0 - lam) * current.values + lam * new.values
            traj.snapshots.append(
                OmegaField(current.grid, vals, xi_star, current.d_shift))
            next_out += 1
        current = new
    return traj
