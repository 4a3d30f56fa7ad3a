"""Shared data types: distribution specs, grid densities, sampling, quadrature moments.

Wealths live on [0, infinity). A GridDensity stores node values rho(k*dx) on the
uniform grid over [0, x_max]; all quadrature (mass, moments, CDF) uses the
trapezoid rule, whose weights are dx/2 at the two boundary nodes and dx inside.
A node sitting exactly on an interior jump of the density carries the average of
the one-sided limits, which makes the quadrature mass of the standard examples
exact and keeps moment errors at O(dx^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

# Seeds are plain 64-bit unsigned ints; identical seed + config means
# bit-identical output everywhere in this package.
RngSeed = int

TAIL_TOLERANCE = 1e-6
JUMP_ALIGN_TOL = 1e-9  # relative tolerance for "node sits on a jump point"


class TailMassTooLarge(ValueError):
    """The spec puts more than the allowed mass beyond x_max."""


class UnsupportedSpec(TypeError):
    """The operation cannot represent the given distribution."""


# ---------------------------------------------------------------------------
# Distribution specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gamma:
    """Gamma law with the given shape and rate, density on [0, infinity)."""

    shape: float
    rate: float = 1.0

    def __post_init__(self) -> None:
        if not (self.shape > 0 and math.isfinite(self.shape)):
            raise ValueError(f"shape must be positive, got {self.shape}")
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be positive, got {self.rate}")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def var(self) -> float:
        return self.shape / self.rate**2

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            logpdf = (
                special.xlogy(self.shape - 1.0, x)
                - self.rate * x
                + self.shape * math.log(self.rate)
                - special.gammaln(self.shape)
            )
        out = np.exp(logpdf)
        return np.where(x < 0, 0.0, out)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        return special.gammaincinv(self.shape, np.asarray(u, dtype=float)) / self.rate

    def tail_mass(self, x_max: float) -> float:
        return float(special.gammaincc(self.shape, self.rate * x_max))

    def grid_values(self, xs: np.ndarray) -> np.ndarray:
        return self.pdf(xs)

    def label(self) -> str:
        return f"gamma({self.shape:g},{self.rate:g})"


@dataclass(frozen=True)
class Exponential:
    """Exponential law with the given rate."""

    rate: float = 1.0

    def __post_init__(self) -> None:
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be positive, got {self.rate}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def var(self) -> float:
        return 1.0 / self.rate**2

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, self.rate * np.exp(-self.rate * x))

    def ppf(self, u: np.ndarray) -> np.ndarray:
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def tail_mass(self, x_max: float) -> float:
        return float(math.exp(-self.rate * x_max))

    def grid_values(self, xs: np.ndarray) -> np.ndarray:
        return self.pdf(xs)

    def label(self) -> str:
        return f"exponential({self.rate:g})"


@dataclass(frozen=True)
class Uniform:
    """Uniform law on [lo, hi], 0 <= lo < hi."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (0 <= self.lo < self.hi and math.isfinite(self.hi)):
            raise ValueError(f"need 0 <= lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def var(self) -> float:
        return (self.hi - self.lo) ** 2 / 12.0

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, 1.0 / (self.hi - self.lo), 0.0)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * np.asarray(u, dtype=float)

    def tail_mass(self, x_max: float) -> float:
        if x_max >= self.hi:
            return 0.0
        return (self.hi - max(x_max, self.lo)) / (self.hi - self.lo)

    def grid_values(self, xs: np.ndarray) -> np.ndarray:
        v = self.pdf(xs)
        h = 1.0 / (self.hi - self.lo)
        dx = xs[1] - xs[0]
        # jump nodes take the average of the one-sided limits
        for edge, level in ((self.lo, 0.5 * h if self.lo > 0 else h), (self.hi, 0.5 * h)):
            k = int(round(edge / dx))
            if 0 <= k < len(xs) and abs(xs[k] - edge) <= JUMP_ALIGN_TOL * max(1.0, edge):
                v = v.copy()
                v[k] = level
        return v

    def label(self) -> str:
        return f"uniform({self.lo:g},{self.hi:g})"


@dataclass(frozen=True)
class TwoAtom:
    """Two-point law: mass p at x0 and 1-p at x1."""

    p: float
    x0: float
    x1: float

    def __post_init__(self) -> None:
        if not 0 <= self.p <= 1:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.x0 < 0 or self.x1 < 0:
            raise ValueError("atoms must be nonnegative")

    @property
    def mean(self) -> float:
        return self.p * self.x0 + (1 - self.p) * self.x1

    @property
    def var(self) -> float:
        return self.p * (1 - self.p) * (self.x1 - self.x0) ** 2

    def ppf(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        lo, hi = (self.x0, self.x1) if self.x0 <= self.x1 else (self.x1, self.x0)
        p_lo = self.p if self.x0 <= self.x1 else 1 - self.p
        return np.where(u < p_lo, lo, hi)

    def tail_mass(self, x_max: float) -> float:
        t = 0.0
        if self.x0 > x_max:
            t += self.p
        if self.x1 > x_max:
            t += 1 - self.p
        return t

    def label(self) -> str:
        return f"two_atom({self.p:g},{self.x0:g},{self.x1:g})"


@dataclass(frozen=True)
class Table:
    """Piecewise-linear density through (x, density) points, normalized on construction."""

    points: Tuple[Tuple[float, float], ...]

    def __init__(self, points: Sequence[Sequence[float]]):
        pts = tuple((float(x), float(y)) for x, y in points)
        if len(pts) < 2:
            raise ValueError("need at least two table points")
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        if np.any(xs < 0):
            raise ValueError("support points must be nonnegative")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("x values must be strictly increasing")
        if np.any(ys < 0):
            raise ValueError("densities must be nonnegative")
        mass = float(np.trapezoid(ys, xs))
        if mass <= 0:
            raise ValueError("table has zero mass")
        object.__setattr__(self, "points", tuple(zip(xs.tolist(), (ys / mass).tolist())))

    def _arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        xs = np.array([p[0] for p in self.points])
        ys = np.array([p[1] for p in self.points])
        return xs, ys

    @property
    def mean(self) -> float:
        xs, ys = self._arrays()
        return float(np.trapezoid(xs * ys, xs))

    @property
    def var(self) -> float:
        xs, ys = self._arrays()
        return float(np.trapezoid(xs * xs * ys, xs)) - self.mean**2

    def pdf(self, x: np.ndarray) -> np.ndarray:
        xs, ys = self._arrays()
        return np.interp(np.asarray(x, dtype=float), xs, ys, left=0.0, right=0.0)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        xs, ys = self._arrays()
        cum = np.concatenate([[0.0], np.cumsum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2.0)])
        cum /= cum[-1]
        keep = np.concatenate([[True], np.diff(cum) > 0])  # drop flat CDF runs
        return np.interp(np.asarray(u, dtype=float), cum[keep], xs[keep])

    def tail_mass(self, x_max: float) -> float:
        xs, ys = self._arrays()
        if xs[-1] <= x_max:
            return 0.0
        cut = max(x_max, xs[0])
        y_cut = float(np.interp(cut, xs, ys))
        sel = xs > cut
        tx = np.concatenate([[cut], xs[sel]])
        ty = np.concatenate([[y_cut], ys[sel]])
        return float(np.trapezoid(ty, tx))

    def grid_values(self, xs: np.ndarray) -> np.ndarray:
        v = self.pdf(xs)
        tx, ty = self._arrays()
        dx = xs[1] - xs[0]
        # a support edge with positive density is a jump against the zero outside
        for edge, level in ((tx[0], ty[0]), (tx[-1], ty[-1])):
            if level <= 0 or edge == 0:
                continue
            k = int(round(edge / dx))
            if 0 <= k < len(xs) and abs(xs[k] - edge) <= JUMP_ALIGN_TOL * max(1.0, edge):
                v = v.copy()
                v[k] = 0.5 * level
        return v

    def label(self) -> str:
        return f"table({len(self.points)} pts)"


DistributionSpec = Union[Gamma, Exponential, Uniform, TwoAtom, Table]

#: spec kinds that have a density on [0, x_max] representable by node values
_GRIDDABLE = (Gamma, Exponential, Uniform, Table)


def spec_label(spec: DistributionSpec) -> str:
    """Short human-readable tag, e.g. 'gamma(5,1)'."""
    return spec.label()


# ---------------------------------------------------------------------------
# Grids and grid densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid over [0, x_max] with step dx; x_max/dx must be an integer >= 16."""

    x_max: float
    dx: float

    def __post_init__(self) -> None:
        if not (self.x_max > 0 and math.isfinite(self.x_max)):
            raise ValueError(f"x_max must be positive, got {self.x_max}")
        if not (self.dx > 0 and math.isfinite(self.dx)):
            raise ValueError(f"dx must be positive, got {self.dx}")
        m = round(self.x_max / self.dx)
        if abs(m * self.dx - self.x_max) > 1e-9 * max(1.0, self.x_max):
            raise ValueError(f"x_max/dx = {self.x_max / self.dx} is not an integer")
        if m < 16:
            raise ValueError(f"grid needs at least 16 cells, got {m}")

    @property
    def n_cells(self) -> int:
        return round(self.x_max / self.dx)

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.n_cells + 1)

    def weights(self) -> np.ndarray:
        w = np.full(self.n_cells + 1, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w


@dataclass(frozen=True)
class GridDensity:
    """Nonnegative node values on a GridSpec; values[k] approximates rho(k*dx)."""

    grid: GridSpec
    values: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_cells + 1,):
            raise ValueError(
                f"expected {self.grid.n_cells + 1} node values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("node values must be finite")
        if np.any(v < 0):
            raise ValueError("node values must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def mass(self) -> float:
        return float(self.grid.weights() @ self.values)


def default_grid(spec: DistributionSpec, dx: float) -> GridSpec:
    """Grid reaching mean + 20 std, rounded up to a multiple of dx (at least 16 cells)."""
    reach = spec.mean + 20.0 * math.sqrt(spec.var)
    m = max(16, int(math.ceil(reach / dx - 1e-12)))
    return GridSpec(x_max=m * dx, dx=dx)


def make_grid_density(spec: DistributionSpec, grid: GridSpec) -> GridDensity:
    """Sample the spec's density at the grid nodes and renormalize to mass exactly 1.

    Raises UnsupportedSpec for TwoAtom (atoms are not grid densities) and for
    Gamma with shape < 1 (unbounded at 0); raises TailMassTooLarge when the mass
    beyond x_max exceeds 1e-6. The truncated tail mass is kept as metadata.
    """
    if isinstance(spec, TwoAtom):
        raise UnsupportedSpec("TwoAtom has no density; use sample() instead")
    if not isinstance(spec, _GRIDDABLE):
        raise UnsupportedSpec(f"cannot grid {type(spec).__name__}")
    if isinstance(spec, Gamma) and spec.shape < 1:
        raise UnsupportedSpec(
            f"gamma density with shape {spec.shape} < 1 is unbounded at 0"
        )
    tail = spec.tail_mass(grid.x_max)
    if tail > TAIL_TOLERANCE:
        raise TailMassTooLarge(
            f"mass {tail:.3g} beyond x_max={grid.x_max:g} exceeds {TAIL_TOLERANCE:g}"
        )
    v = np.array(spec.grid_values(grid.nodes()), dtype=float)
    mass = float(grid.weights() @ v)
    if mass <= 0:
        raise UnsupportedSpec("spec has no mass on the grid")
    return GridDensity(grid=grid, values=v / mass, tail_mass=tail)


def near_dirac(grid: GridSpec, mu: float) -> GridDensity:
    """Discrete point mass: the two-node hat on the cell whose midpoint is nearest mu.

    This is an exact fixed point of the pair-averaging gain operator on the grid
    (a single-node spike is not: its self-convolution aliases onto even indices
    and doubles the quadrature mass).
    """
    m = grid.n_cells
    k = int(round(mu / grid.dx - 0.5))
    k = min(max(k, 1), m - 2)  # both hat nodes must carry interior weight dx
    v = np.zeros(m + 1)
    v[k] = v[k + 1] = 1.0 / (2.0 * grid.dx)
    v /= float(grid.weights() @ v)
    return GridDensity(grid=grid, values=v)


# ---------------------------------------------------------------------------
# Wealth vectors and sampling
# ---------------------------------------------------------------------------


@dataclass
class WealthVector:
    """State of the N-agent system: nonnegative wealths whose sum exchanges conserve."""

    wealths: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.wealths, dtype=float)
        if w.ndim != 1 or w.size < 2:
            raise ValueError("need a 1-d vector with at least 2 agents")
        if not np.all(np.isfinite(w)):
            raise ValueError("wealths must be finite")
        if np.any(w < 0):
            raise ValueError("wealths must be nonnegative")
        self.wealths = w

    @property
    def n_agents(self) -> int:
        return self.wealths.size


def sample(spec: DistributionSpec, n: int, seed: RngSeed) -> WealthVector:
    """n i.i.d. draws from the spec by inverse-CDF transform; deterministic per seed."""
    if n < 2:
        raise ValueError(f"need at least 2 draws, got {n}")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    return WealthVector(spec.ppf(u))


class CdfTable(NamedTuple):
    """Piecewise-linear CDF: f[k] = integral of the density up to x[k]."""

    x: np.ndarray
    f: np.ndarray


def cdf(d: GridDensity) -> CdfTable:
    """Trapezoid cumulative of the node values; F(0) = 0, F(x_max) = quadrature mass."""
    v = d.values
    dx = d.grid.dx
    f = np.concatenate([[0.0], np.cumsum(0.5 * dx * (v[1:] + v[:-1]))])
    return CdfTable(x=d.grid.nodes(), f=f)


def grid_ppf(d: GridDensity, u: np.ndarray) -> np.ndarray:
    """Inverse of the piecewise-linear CDF of d, evaluated at probabilities u."""
    table = cdf(d)
    f = table.f / table.f[-1]
    keep = np.concatenate([[True], np.diff(f) > 0])  # drop flat runs for interp
    return np.interp(np.asarray(u, dtype=float), f[keep], table.x[keep])


def sample_density(d: GridDensity, n: int, seed: RngSeed) -> np.ndarray:
    """n i.i.d. draws from the piecewise-linear law defined by d."""
    rng = np.random.default_rng(seed)
    return grid_ppf(d, rng.random(n))


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------


def moments(d: GridDensity) -> Tuple[float, float, float]:
    """Quadrature (mass, mean, variance) of a grid density."""
    xs = d.grid.nodes()
    wv = d.grid.weights() * d.values
    mass = float(wv.sum())
    mean = float(wv @ xs)
    variance = float(wv @ (xs * xs)) - mean**2
    return mass, mean, variance


def sample_moments(w: WealthVector) -> Tuple[float, float]:
    """Arithmetic mean and population variance (divisor N) of a wealth vector."""
    arr = w.wealths
    mean = float(arr.mean())
    return mean, float(arr.var())
