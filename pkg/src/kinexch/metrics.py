"""Inequality diagnostics: Gini index, its dissipation rate, W1 distance,
log-concavity checks, and the piecewise log-linear envelope with its bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy import special

from .core import (
    GridDensity,
    RngSeed,
    WealthVector,
    cdf,
    grid_ppf,
    moments,
)

QUADRATURE3D = "quadrature3d"
MONTECARLO = "montecarlo"

#: O(M^3) triple quadrature is allowed up to this many cells
QUADRATURE3D_MAX_CELLS = 512

#: node counts as populated if above this fraction of the peak
LOG_FLOOR_RATIO = 1e-12


class ZeroMean(ValueError):
    """Gini-type functionals are undefined at zero mean."""


class SupportExceeded(ValueError):
    """Empirical wealths reach beyond the grid's x_max."""


class GridTooLarge(ValueError):
    """Triple quadrature refused beyond the cell cap."""


class NotLogConcave(ValueError):
    """Envelope extraction requires a log-concave input."""


class CrossingNotFound(RuntimeError):
    """A flank never descends to peak/e inside the (extended) grid."""


def _as_array(w: Union[WealthVector, np.ndarray]) -> np.ndarray:
    if isinstance(w, WealthVector):
        return w.wealths
    return np.asarray(w, dtype=float)


# ---------------------------------------------------------------------------
# Gini index
# ---------------------------------------------------------------------------


def gini_density(d: GridDensity) -> float:
    """Gini index of a grid density via the CDF identity E|X-Y| = 2 int F(1-F).

    The integral of F(1-F) is evaluated exactly for the piecewise-linear CDF of
    the trapezoid rule, cell by cell, so this equals the double-integral form of
    the index up to rounding.
    """
    mass, mean, _ = moments(d)
    if mean <= 1e-12:
        raise ZeroMean(f"quadrature mean {mean:.3g} is not positive")
    f = cdf(d).f
    fl, fr = f[:-1], f[1:]
    # exact per-cell integral of F(1-F) for linear F
    cell = 0.5 * (fl + fr) - (fl * fl + fl * fr + fr * fr) / 3.0
    return float(d.grid.dx * cell.sum() / mean)


def gini_sample(w: Union[WealthVector, np.ndarray]) -> float:
    """Gini index of a wealth vector: sum |w_i - w_j| over all N^2 ordered pairs,
    divided by 2 N^2 mean. Sorted O(N log N) evaluation."""
    arr = _as_array(w)
    mean = float(arr.mean())
    if mean <= 0:
        raise ZeroMean("sample mean is not positive")
    s = np.sort(arr)
    n = s.size
    ranks = 2.0 * np.arange(n) - (n - 1.0)
    return float((ranks @ s) / (n * n * mean))


def gamma_gini_closed_form(shape: float) -> float:
    """Gini index of a gamma law with the given shape (rate-invariant)."""
    if shape <= 0:
        raise ValueError(f"shape must be positive, got {shape}")
    log_g = (
        (1.0 - 2.0 * shape) * math.log(2.0)
        + special.gammaln(2.0 * shape)
        - math.log(shape)
        - 2.0 * special.gammaln(shape)
    )
    return float(math.exp(log_g))


# ---------------------------------------------------------------------------
# Wasserstein-1 distance (empirical vs grid density)
# ---------------------------------------------------------------------------


def w1(emp: Union[WealthVector, np.ndarray], d: GridDensity) -> float:
    """Exact integral of |F_emp - F_d| over the merged breakpoint set."""
    s = np.sort(_as_array(emp))
    if s.size and s[-1] > d.grid.x_max:
        raise SupportExceeded(
            f"wealth {s[-1]:.6g} exceeds the grid x_max {d.grid.x_max:g}"
        )
    table = cdf(d)
    xs = np.union1d(table.x, s)
    fd = np.interp(xs, table.x, table.f)
    fe = np.searchsorted(s, xs, side="right") / s.size
    # per interval the grid CDF is linear and the empirical CDF constant,
    # so g = fd - fe is linear; integrate |g| exactly, splitting sign changes
    gl = fd[:-1] - fe[:-1]
    gr = fd[1:] - fe[:-1]
    h = np.diff(xs)
    denom = np.abs(gl) + np.abs(gr)
    same_sign = gl * gr >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        crossing = h * (gl * gl + gr * gr) / (2.0 * denom)
    piece = np.where(same_sign, 0.5 * denom * h, crossing)
    piece = np.where(denom == 0, 0.0, piece)
    return float(piece.sum())


# ---------------------------------------------------------------------------
# Gini dissipation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GiniDissipation:
    """Nonnegative decay rate of the Gini index along the flow."""

    value: float
    estimator: str
    std_err: Optional[float] = None


def _psi(v: np.ndarray, w: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pointwise dissipation integrand, nonnegative by the triangle inequality."""
    return 0.5 * (np.abs(v - y) + np.abs(w - y)) - np.abs(0.5 * (v + w) - y)


def gini_dissipation(
    d: GridDensity,
    estimator: str = QUADRATURE3D,
    mc_samples: int = 10**6,
    seed: RngSeed = 0,
) -> GiniDissipation:
    """Triple integral of the dissipation integrand against d x d x d, over mean.

    quadrature3d: exact triple quadrature in the trapezoid weights, O(M^3),
    refused above QUADRATURE3D_MAX_CELLS cells. montecarlo: i.i.d. triples via
    the inverse CDF, with a standard error.
    """
    _, mean, _ = moments(d)
    if mean <= 1e-12:
        raise ZeroMean(f"quadrature mean {mean:.3g} is not positive")
    if estimator == QUADRATURE3D:
        m = d.grid.n_cells
        if m > QUADRATURE3D_MAX_CELLS:
            raise GridTooLarge(
                f"{m} cells exceeds the quadrature3d cap {QUADRATURE3D_MAX_CELLS}"
            )
        xs = d.grid.nodes()
        omega = d.grid.weights() * d.values
        pair = omega[:, None] * omega[None, :]
        dist = np.abs(xs[:, None] - xs[None, :])
        total = 0.0
        for i in range(xs.size):
            # psi with v fixed at xs[i]; rows index w, columns index y
            half = 0.5 * (dist[i][None, :] + dist)
            mid = np.abs(0.5 * (xs[i] + xs)[:, None] - xs[None, :])
            total += omega[i] * float((pair * (half - mid)).sum())
        return GiniDissipation(value=total / mean, estimator=QUADRATURE3D)
    if estimator == MONTECARLO:
        if mc_samples < 2:
            raise ValueError("need at least 2 Monte Carlo triples")
        rng = np.random.default_rng(seed)
        chunk = 2**20
        done = 0
        acc = 0.0
        acc2 = 0.0
        while done < mc_samples:
            take = min(chunk, mc_samples - done)
            u = rng.random((3, take))
            v, w, y = grid_ppf(d, u)
            p = _psi(v, w, y)
            acc += float(p.sum())
            acc2 += float((p * p).sum())
            done += take
        est = acc / mc_samples
        var = max(acc2 / mc_samples - est * est, 0.0)
        std_err = math.sqrt(var / mc_samples) / mean
        return GiniDissipation(
            value=est / mean, estimator=MONTECARLO, std_err=std_err
        )
    raise ValueError(f"estimator must be '{QUADRATURE3D}' or '{MONTECARLO}'")


def gini_dissipation_sample(w: Union[WealthVector, np.ndarray]) -> float:
    """Dissipation of the empirical law of a wealth vector (exact triple mean).

    The N^3 triple sum decomposes exactly: the two |v-y|-type terms reduce to
    N times the ordered-pair absolute-difference sum, the midpoint term to
    N^2 evaluations of A(p) = sum_k |p - w_k| via sorted prefix sums.
    """
    arr = _as_array(w)
    n = arr.size
    mean = float(arr.mean())
    if mean <= 0:
        raise ZeroMean("sample mean is not positive")
    s = np.sort(arr)
    prefix = np.concatenate([[0.0], np.cumsum(s)])
    total = prefix[-1]
    ranks = 2.0 * np.arange(n) - (n - 1.0)
    pair_abs = 2.0 * float(ranks @ s)  # sum over ordered pairs of |w_i - w_j|

    def abs_sum(points: np.ndarray) -> float:
        r = np.searchsorted(s, points)
        return float((points * (2.0 * r - n) - 2.0 * prefix[r] + total).sum())

    mid_term = 0.0
    rows = max(1, (2**22) // max(n, 1))  # bound the midpoint buffer
    for start in range(0, n, rows):
        block = 0.5 * (arr[start : start + rows, None] + arr[None, :])
        mid_term += abs_sum(block.ravel())
    return (n * pair_abs - mid_term) / (n**3 * mean)


# ---------------------------------------------------------------------------
# Log-concavity and the envelope
# ---------------------------------------------------------------------------


def _log_concavity_violation_values(v: np.ndarray) -> float:
    """Largest positive centered second difference of log v over populated nodes."""
    floor = LOG_FLOOR_RATIO * float(v.max())
    ok = v > floor
    mask = ok[2:] & ok[1:-1] & ok[:-2]
    if not mask.any():
        return 0.0
    with np.errstate(divide="ignore"):
        lg = np.log(np.maximum(v, floor))
    d2 = lg[2:] - 2.0 * lg[1:-1] + lg[:-2]
    worst = float(d2[mask].max())
    return max(worst, 0.0)


def log_concavity_violation(d: GridDensity) -> float:
    """0 means log-concave at grid resolution; positive values measure the defect.

    Interior nodes whose value (or a neighbor's) is below 1e-12 of the peak are
    ignored, so empty tail regions do not register.
    """
    return _log_concavity_violation_values(d.values)


@dataclass(frozen=True)
class Envelope:
    """Piecewise log-linear majorant of a log-concave density.

    rho_star is the peak value at c; a < c < b are where the (interpolated)
    density equals rho_star/e. The majorant is exponential left of a with the
    chord slope through (a, c), the constant rho_star on (a, b), and exponential
    right of b; its value at a and b is rho_star/e by construction.
    """

    rho_star: float
    c: float
    a: float
    b: float
    mollify_width: Optional[float]
    nodes: np.ndarray
    node_values: np.ndarray

    def q_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        left = self.rho_star * np.exp(-(x - self.c) / (self.a - self.c))
        right = self.rho_star * np.exp(-(x - self.c) / (self.b - self.c))
        out = np.full_like(x, self.rho_star)
        out = np.where(x <= self.a, left, out)
        out = np.where(x >= self.b, right, out)
        return out


def _mollify(
    xs: np.ndarray, v: np.ndarray, dx: float, width: float
) -> "tuple[np.ndarray, np.ndarray]":
    """Convolve with a discrete normal kernel, extending the axis by 6 widths."""
    pad = int(math.ceil(6.0 * width / dx))
    xs_ext = xs[0] + dx * np.arange(-pad, xs.size + pad)
    v_ext = np.concatenate([np.zeros(pad), v, np.zeros(pad)])
    karg = dx * np.arange(-pad, pad + 1)
    kernel = np.exp(-0.5 * (karg / width) ** 2)
    kernel /= kernel.sum()
    return xs_ext, np.convolve(v_ext, kernel, mode="same")


def _interp_crossing(x_lo: float, x_hi: float, f_lo: float, f_hi: float, target: float) -> float:
    """60 bisection iterations on the linear interpolant between two nodes."""
    rising = f_hi >= f_lo

    def below(x: float) -> bool:
        f = f_lo + (f_hi - f_lo) * (x - x_lo) / (x_hi - x_lo)
        return f < target

    lo, hi = x_lo, x_hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if below(mid) == rising:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_envelope(d: GridDensity, mollify_width: Optional[float] = None) -> Envelope:
    """Extract the exponential-plateau-exponential majorant of a log-concave density.

    If the density touches zero at grid resolution (or a width is given), it is
    first convolved with a narrow normal kernel, default width 2*dx, on an axis
    extended by 6 widths on both sides (the left extension may reach below 0).
    A positive value at the first node counts as touching zero: the density
    jumps to zero at the support boundary, so the left flank only exists after
    smoothing (a monotone decreasing density has its peak at that node).
    """
    viol = log_concavity_violation(d)
    if viol > 1e-6:
        raise NotLogConcave(f"log-concavity violation {viol:.3g} exceeds 1e-6")
    dx = d.grid.dx
    xs = d.grid.nodes()
    v = d.values
    width: Optional[float] = mollify_width
    floor = LOG_FLOOR_RATIO * v.max()
    if width is None and (v.min() < floor or v[0] > floor):
        width = 2.0 * dx
    if width is not None:
        if width <= 0:
            raise ValueError(f"mollify width must be positive, got {width}")
        xs, v = _mollify(xs, v, dx, width)
    k = int(np.argmax(v))  # ties break leftmost
    rho_star = float(v[k])
    c = float(xs[k])
    target = rho_star / math.e
    below_left = np.flatnonzero(v[: k + 1] < target)
    if below_left.size == 0:
        raise CrossingNotFound("left flank never descends to peak/e")
    i = int(below_left[-1])
    a = _interp_crossing(xs[i], xs[i + 1], v[i], v[i + 1], target)
    below_right = np.flatnonzero(v[k:] < target)
    if below_right.size == 0:
        raise CrossingNotFound("right flank never descends to peak/e")
    j = k + int(below_right[0])
    b = _interp_crossing(xs[j - 1], xs[j], v[j - 1], v[j], target)
    env = Envelope(
        rho_star=rho_star,
        c=c,
        a=a,
        b=b,
        mollify_width=width,
        nodes=xs,
        node_values=v,
    )
    slack = env.q_at(xs) - v
    if slack.min() < -1e-9 * rho_star:
        raise RuntimeError(
            f"majorant fails by {-slack.min():.3g} (input not log-concave enough)"
        )
    return env


class EnvelopeBounds(NamedTuple):
    """Explicit width-based bounds extracted from an envelope."""

    g_upper: float
    h_lower: float
    ratio_constant: float


def envelope_bounds(e: Envelope, mu: float) -> EnvelopeBounds:
    """Upper bound for the Gini index, lower bound for its dissipation, and the
    envelope-independent ratio constant 24(e+1)^3 (1+3e+e^2/3)."""
    if mu <= 0:
        raise ZeroMean(f"mean must be positive, got {mu}")
    width = e.b - e.a
    ee = math.e
    front = 1.0 + 3.0 * ee + ee * ee / 3.0
    tail = 24.0 * (ee + 1.0) ** 3
    return EnvelopeBounds(
        g_upper=front * width,
        h_lower=width / tail,
        ratio_constant=tail * front,
    )
