"""Computational psi grid, field storage, and discrete operators.

The production grid is geometrically stretched toward the wall because the
diffusion coefficient sqrt(omega) degenerates like psi^(1/2) there; local
spacing then scales with psi and the nonuniform 3-point stencils stay
second order in the refinement sense.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonMonotone, NonMonotoneStream


@dataclass
class PsiGrid:
    """Strictly increasing nodes psi_0 = 0 < ... < psi_J = psi_max."""

    nodes: np.ndarray
    h: np.ndarray = field(init=False, repr=False)        # spacings, len J
    widths: np.ndarray = field(init=False, repr=False)   # dual cell widths, len J+1

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim != 1 or len(self.nodes) < 4:
            raise NonMonotone("grid needs at least 4 nodes")
        self.h = np.diff(self.nodes)
        if np.any(self.h <= 0.0):
            raise NonMonotone("grid nodes must be strictly increasing")
        w = np.empty_like(self.nodes)
        w[1:-1] = 0.5 * (self.nodes[2:] - self.nodes[:-2])
        w[0] = 0.5 * self.h[0]
        w[-1] = 0.5 * self.h[-1]
        self.widths = w

    @property
    def J(self) -> int:
        return len(self.nodes) - 1

    @property
    def psi_max(self) -> float:
        return float(self.nodes[-1])


def make_grid(psi_max: float, J: int, stretch: float = 8.0) -> PsiGrid:
    """Wall-clustered grid psi_j = psi_max (e^(stretch j/J) - 1)/(e^stretch - 1)."""
    if J < 64:
        raise ConfigError("need J >= 64")
    if psi_max <= 0 or stretch <= 0:
        raise ConfigError("psi_max and stretch must be positive")
    t = np.linspace(0.0, 1.0, J + 1)
    nodes = psi_max * np.expm1(stretch * t) / np.expm1(stretch)
    nodes[0], nodes[-1] = 0.0, psi_max
    grid = PsiGrid(nodes)
    if grid.h[0] > psi_max / 1e4:
        raise ConfigError(
            f"first spacing {grid.h[0]:.3e} exceeds psi_max/1e4; increase stretch"
        )
    return grid


def d1(values, grid: PsiGrid) -> np.ndarray:
    """First derivative, nonuniform 3-point stencil, one-sided at the ends."""
    v = np.asarray(values, dtype=float)
    assert v.shape == grid.nodes.shape
    hm, hp = grid.h[:-1], grid.h[1:]
    out = np.empty_like(v)
    out[1:-1] = (-hp / (hm * (hm + hp)) * v[:-2]
                 + (hp - hm) / (hm * hp) * v[1:-1]
                 + hm / (hp * (hm + hp)) * v[2:])
    h0, h1 = grid.h[0], grid.h[1]
    out[0] = (-(2 * h0 + h1) / (h0 * (h0 + h1)) * v[0]
              + (h0 + h1) / (h0 * h1) * v[1]
              - h0 / (h1 * (h0 + h1)) * v[2])
    ha, hb = grid.h[-1], grid.h[-2]
    out[-1] = ((2 * ha + hb) / (ha * (ha + hb)) * v[-1]
               - (ha + hb) / (ha * hb) * v[-2]
               + ha / (hb * (ha + hb)) * v[-3])
    return out


def d2(values, grid: PsiGrid) -> np.ndarray:
    """Second derivative, 3-point stencil exact on quadratics."""
    v = np.asarray(values, dtype=float)
    assert v.shape == grid.nodes.shape
    hm, hp = grid.h[:-1], grid.h[1:]
    out = np.empty_like(v)
    out[1:-1] = 2.0 * (v[:-2] / (hm * (hm + hp))
                       - v[1:-1] / (hm * hp)
                       + v[2:] / (hp * (hm + hp)))
    h0, h1 = grid.h[0], grid.h[1]
    out[0] = 2.0 * (v[0] / (h0 * (h0 + h1)) - v[1] / (h0 * h1)
                    + v[2] / (h1 * (h0 + h1)))
    ha, hb = grid.h[-1], grid.h[-2]
    out[-1] = 2.0 * (v[-1] / (ha * (ha + hb)) - v[-2] / (ha * hb)
                     + v[-3] / (hb * (ha + hb)))
    return out


def weighted_norm(values, weight, grid: PsiGrid, kind: str = "L2") -> float:
    """L2: sqrt of the trapezoid quadrature of weight * values^2.

    Linf ignores the weight (the sup norms measured here are unweighted).
    Weighted endpoint products are evaluated as 0 whenever the field vanishes
    there, so an integrable wall weight never produces inf * 0.
    """
    v = np.asarray(values, dtype=float)
    if kind == "Linf":
        return float(np.max(np.abs(v)))
    if kind != "L2":
        raise ValueError(f"unknown norm kind {kind!r}")
    w = np.asarray(weight, dtype=float)
    if np.any(w < 0.0):
        raise ValueError("weight must be nonnegative")
    integrand = np.where(v == 0.0, 0.0, w * v * v)
    return float(np.sqrt(np.trapezoid(integrand, grid.nodes)))


@dataclass
class OmegaField:
    """omega on a PsiGrid at streamwise position xi = ln(x + d_shift)."""

    grid: PsiGrid
    values: np.ndarray
    xi: float
    d_shift: float

    def validate(self) -> None:
        v = self.values
        if abs(v[0]) > 1e-14:
            raise NonMonotone("omega(0) must be 0")
        if abs(v[-1] - 1.0) > 1e-12:
            raise NonMonotone("omega(psi_max) must be 1")

    @property
    def x(self) -> float:
        return float(np.exp(self.xi) - self.d_shift)

    def clone(self) -> "OmegaField":
        return OmegaField(self.grid, self.values.copy(), self.xi, self.d_shift)


@dataclass
class InitialProfile:
    """Tabulated inflow velocity u0(y), outer flow normalized to 1."""

    y_samples: np.ndarray
    u_samples: np.ndarray
    decay_eps: float = 0.1

    def validate(self, tail_tol: float = 1e-3) -> None:
        y, u = np.asarray(self.y_samples), np.asarray(self.u_samples)
        if y[0] != 0.0 or np.any(np.diff(y) <= 0.0):
            raise NonMonotoneStream("y samples must start at 0 and increase")
        if u[0] != 0.0:
            raise NonMonotoneStream("u0(0) must be 0")
        if np.any(u[1:] <= 0.0):
            raise NonMonotoneStream("u0 must be positive for y > 0")
        if abs(u[-1] - 1.0) > tail_tol:
            raise NonMonotoneStream("u0 must reach 1 within tail tolerance")


def load_initial_csv(path) -> InitialProfile:
    """Read an initial profile from CSV with header y,u0."""
    ys, us = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [c.strip() for c in header[:2]] != ["y", "u0"]:
            raise ConfigError(f"expected header y,u0 in {path}")
        for row in reader:
            ys.append(float(row[0]))
            us.append(float(row[1]))
    return InitialProfile(np.asarray(ys), np.asarray(us))


def ingest_initial(profile: InitialProfile, d_shift: float,
                   grid: PsiGrid) -> OmegaField:
    """Map u0(y) to omega0 on the psi grid.

    psi(y) = int_0^y u0 / sqrt(d_shift) dy' by cumulative trapezoid, then
    omega0(psi_j) = u0(y(psi_j))^2 by monotone inverse interpolation; beyond
    the last sample the profile is extended by u0 = 1 exactly.  Monotone
    cubic (PCHIP) interpolation keeps the ingested field C1 in psi; linear
    interpolation would plant slope kinks that the wall-clustered grid's
    second differences amplify into spurious convexity.
    """
    from scipy.interpolate import PchipInterpolator

    profile.validate()
    if d_shift <= 0:
        raise ConfigError("d_shift must be positive")
    y = np.asarray(profile.y_samples, dtype=float)
    u = np.asarray(profile.u_samples, dtype=float)
    integrand = u / np.sqrt(d_shift)
    psi_y = np.concatenate([[0.0],
                            np.cumsum(0.5 * (integrand[1:] + integrand[:-1])
                                      * np.diff(y))])
    if np.any(np.diff(psi_y) <= 0.0):
        raise NonMonotoneStream("psi(y) is not strictly increasing")

    nodes = grid.nodes
    inside = nodes <= psi_y[-1]
    y_of_psi = PchipInterpolator(psi_y, y)(nodes[inside])
    omega = np.ones_like(nodes)
    omega[inside] = PchipInterpolator(y, u)(y_of_psi) ** 2
    omega[0] = 0.0
    omega[-1] = 1.0
    return OmegaField(grid=grid, values=omega, xi=float(np.log(d_shift)),
                      d_shift=d_shift)
