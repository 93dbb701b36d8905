"""Discrete form of the linearized operator and its principal eigenvalue.

The operator acting on perturbations of the steady profile is, in weighted
form,

    T(v) = -(rho v')' - (wbar''/(2 sqrt(wbar))) A v,   A = rho / sqrt(wbar),

a symmetric pencil against the mass A.  Assembly is finite-volume: flux
coefficients rho at cell faces keep the stiffness exactly symmetric, which
the inverse-iteration convergence argument needs.  The reaction coefficient
-wbar''/(2 sqrt(wbar)) is assembled through the stationarity identity
wbar'' = -psi wbar' / (2 sqrt(wbar)), i.e. as psi wbar' A / (4 wbar),
which removes the wall 0/0 (and is nonnegative since wbar'' <= 0).

Dirichlet v = 0 at both artificial boundaries.  (A zero-flux outer
condition admits a spurious near-zero mode localized at psi_max, because
the mass weight A ~ e^(psi^2/4) keeps growing while the reaction potential
decays; matching the compactly-supported admissible class removes it.  The
expected principal mode carries rho-weighted boundary density below 1e-6
at the default psi_max, so the Dirichlet truncation bias is negligible.)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .blasius import SelfSimilarProfile
from .errors import BadProfile, NoConvergence, ZeroVector
from .grid import PsiGrid, d1, d2


@dataclass
class OperatorMatrices:
    """Symmetric tridiagonal stiffness and diagonal mass on nodes 1..J-1."""

    diag: np.ndarray
    off: np.ndarray
    mass: np.ndarray
    grid: PsiGrid
    reaction: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return len(self.diag)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.off * v[1:]
        out[1:] += self.off * v[:-1]
        return out


@dataclass
class EigenResult:
    lambda1: float
    eigvec: np.ndarray       # full-grid vector, node 0 included (zero there)
    rq: float
    iters: int
    refine_history: list[tuple[int, float]] = field(default_factory=list)


def tail_weight_ratio(ss: SelfSimilarProfile) -> float:
    """rho-weighted boundary density of the expected principal mode.

    ratio = rho(L) (L wbar'(L))^2 / int A (psi wbar')^2 dpsi; assembly
    requires it to be < 1e-6 so the natural outer condition is harmless.
    """
    psi, v = ss.psi_grid, ss.psi_grid * ss.wbar_p
    dens = ss.a_weight * v**2
    dens[0] = 0.0
    norm = np.trapezoid(dens, psi)
    return float(ss.rho[-1] * v[-1] ** 2 / norm)


def assemble(ss: SelfSimilarProfile, tail_ratio_max: float = 1e-6) -> OperatorMatrices:
    """Finite-volume assembly of (stiffness, mass) on the interior nodes."""
    psi = ss.psi_grid
    grid = PsiGrid(psi)
    h = grid.h
    rho_face = np.exp(0.5 * (ss.log_rho[:-1] + ss.log_rho[1:]))  # faces j+1/2
    flux = rho_face / h

    if tail_weight_ratio(ss) > tail_ratio_max:
        raise BadProfile(
            "psi_max too small: rho-weighted tail ratio "
            f"{tail_weight_ratio(ss):.2e} exceeds {tail_ratio_max:.0e}")

    # unknowns are nodes 1..J-1; both boundary nodes are Dirichlet
    q = psi[1:-1] * ss.wbar_p[1:-1] * ss.a_weight[1:-1] / (4.0 * ss.wbar[1:-1])
    w = grid.widths[1:-1]
    diag = flux[:-1] + flux[1:] + q * w
    off = -flux[1:-1]
    mass = ss.a_weight[1:-1] * w
    mats = OperatorMatrices(diag=diag, off=off, mass=mass, grid=grid, reaction=q)
    if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(off))
            and np.all(np.isfinite(mass)) and np.all(mass > 0.0)):
        raise BadProfile("assembled coefficients are not finite and positive")
    return mats


def _interior(v: np.ndarray, mats: OperatorMatrices) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if len(v) == mats.n:
        return v
    if len(v) == mats.n + 2:
        scale = 1e-9 * max(1.0, float(np.max(np.abs(v))))
        if abs(v[0]) > scale or abs(v[-1]) > scale:
            raise ZeroVector("test vector must vanish at both boundary nodes")
        return v[1:-1]
    raise ZeroVector("test vector length does not match the operator")


def rayleigh(mats: OperatorMatrices, v) -> float:
    """Quadratic-form ratio (v' K v) / (v' M v)."""
    vi = _interior(v, mats)
    denom = float(vi @ (mats.mass * vi))
    if denom == 0.0:
        raise ZeroVector("test vector is identically zero")
    return float(vi @ mats.matvec(vi)) / denom


def coercivity_gap(mats: OperatorMatrices, v) -> float:
    """F(v) - 1; nonnegative (up to discretization) for admissible v."""
    return rayleigh(mats, v) - 1.0


def principal_eigen(mats: OperatorMatrices, tol: float = 1e-12,
                    shift: float = 0.5, max_iters: int = 500) -> EigenResult:
    """Shifted inverse power iteration on the pencil (K, M).

    The default shift 0.5 sits below the expected unit eigenvalue and above
    zero, so the principal pair dominates the iteration.  Convergence is on
    successive Rayleigh quotients; the eigenvector is mass-normalized and
    sign-fixed positive.
    """
    if tol < 1e-12:
        raise ValueError("tol must be >= 1e-12")
    n = mats.n
    ab = np.zeros((3, n))
    ab[1] = mats.diag - shift * mats.mass
    ab[0, 1:] = mats.off
    ab[2, :-1] = mats.off
    v = np.sqrt(mats.mass)
    v /= np.sqrt(v @ (mats.mass * v))
    rq_prev = np.inf
    iters = 0
    for iters in range(1, max_iters + 1):
        x = solve_banded((1, 1), ab, mats.mass * v)
        nrm = np.sqrt(x @ (mats.mass * x))
        if not np.isfinite(nrm) or nrm == 0.0:
            raise NoConvergence("inverse iteration produced a degenerate vector")
        v = x / nrm
        rq = rayleigh(mats, v)
        if abs(rq - rq_prev) < tol:
            rq_prev = rq
            break
        rq_prev = rq
    else:
        raise NoConvergence(f"no convergence after {max_iters} iterations")
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    full = np.concatenate([[0.0], v, [0.0]])
    return EigenResult(lambda1=float(rq_prev), eigvec=full, rq=float(rq_prev),
                       iters=iters)


def second_eigen(mats: OperatorMatrices, first: EigenResult,
                 tol: float = 1e-12, shift: float = 0.5,
                 max_iters: int = 500) -> EigenResult:
    """Deflated inverse iteration: M-orthogonal to the principal vector."""
    n = mats.n
    v1 = first.eigvec[1:-1]
    v1 = v1 / np.sqrt(v1 @ (mats.mass * v1))
    ab = np.zeros((3, n))
    ab[1] = mats.diag - shift * mats.mass
    ab[0, 1:] = mats.off
    ab[2, :-1] = mats.off
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v -= (v1 @ (mats.mass * v)) * v1
    v /= np.sqrt(v @ (mats.mass * v))
    rq_prev = np.inf
    for iters in range(1, max_iters + 1):
        x = solve_banded((1, 1), ab, mats.mass * v)
        x -= (v1 @ (mats.mass * x)) * v1
        nrm = np.sqrt(x @ (mats.mass * x))
        if nrm == 0.0:
            raise NoConvergence("deflated iteration collapsed")
        v = x / nrm
        rq = rayleigh(mats, v)
        if abs(rq - rq_prev) < tol:
            rq_prev = rq
            break
        rq_prev = rq
    else:
        raise NoConvergence(f"no convergence after {max_iters} iterations")
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return EigenResult(lambda1=float(rq_prev),
                       eigvec=np.concatenate([[0.0], v, [0.0]]),
                       rq=float(rq_prev), iters=iters)


def apply_operator(ss: SelfSimilarProfile, v: np.ndarray) -> np.ndarray:
    """Pointwise finite-difference action of the unweighted operator.

    L(v) = -(psi/2) v' - sqrt(wbar) v'' - (wbar''/(2 sqrt(wbar))) v, with the
    reaction coefficient in its identity form psi wbar' / (4 wbar) (times -1
    gives the stated sign: wbar''/(2 sqrt(wbar)) = -psi wbar'/(4 wbar)).
    """
    grid = PsiGrid(ss.psi_grid)
    psi = ss.psi_grid
    out = np.zeros_like(psi)
    vp = d1(v, grid)
    vpp = d2(v, grid)
    react = np.zeros_like(psi)
    react[1:] = psi[1:] * ss.wbar_p[1:] / (4.0 * ss.wbar[1:])
    out = -0.5 * psi * vp - np.sqrt(ss.wbar) * vpp + react * v
    return out


def check_hardy(ss: SelfSimilarProfile, v) -> tuple[float, float, float]:
    """(lhs, rhs, ratio) for the weighted wall-to-gradient inequality.

    lhs = int (1 + psi)^2 (rho / wbar^2) v^2, rhs = int rho v'^2; v must
    vanish at the wall and on the last five nodes.  The wall integrand limit
    (v'(0))^2 / (sqrt(2) b0)^2 replaces the 0/0 at psi = 0.
    """
    v = np.asarray(v, dtype=float)
    psi = ss.psi_grid
    if abs(v[0]) > 1e-14 * max(1.0, np.max(np.abs(v))):
        raise ZeroVector("v must vanish at the wall")
    if np.any(v[-5:] != 0.0):
        raise ZeroVector("v must vanish on the last five nodes")
    grid = PsiGrid(psi)
    integrand = np.empty_like(psi)
    integrand[1:] = (1.0 + psi[1:]) ** 2 * ss.rho[1:] / ss.wbar[1:] ** 2 \
        * v[1:] ** 2
    slope = v[1] / psi[1]
    integrand[0] = slope**2 / (np.sqrt(2.0) * ss.b0) ** 2
    lhs = float(np.trapezoid(integrand, psi))
    vp = d1(v, grid)
    rhs = float(np.trapezoid(ss.rho * vp**2, psi))
    if rhs == 0.0:
        raise ZeroVector("v has zero gradient energy")
    return lhs, rhs, lhs / rhs


def principal_eigen_refined(blasius_profile, psi_max: float, js,
                            tol: float = 1e-12, stretch: float = 8.0,
                            shift: float = 0.5) -> EigenResult:
    """Principal pair at the finest J with a (J, lambda1) refinement history."""
    from .blasius import build_self_similar
    from .grid import make_grid

    history = []
    result = None
    for J in sorted(js):
        grid = make_grid(psi_max, J, stretch)
        ss = build_self_similar(blasius_profile, grid.nodes)
        mats = assemble(ss)
        result = principal_eigen(mats, tol=tol, shift=shift)
        history.append((J, result.lambda1))
    result.refine_history = history
    return result
