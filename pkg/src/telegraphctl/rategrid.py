"""Joint Bayesian inference of the hidden state and the transition rates on
a discrete grid.

The generalized distribution p(alpha, r21, r10, r_repump) lives on a dense
array of shape (3, n21, n10, nr). Each bin update propagates every rate
cell's state slice with that cell's linearized rate-equation step, multiplies
by the count likelihood (which depends on alpha only; rate information
enters purely through the propagation coupling), and renormalizes the whole
grid. Likelihoods are computed in the log domain and the grid is
renormalized every bin, so thousands of multiplicative updates cannot
underflow.

Rates are estimated in the open-loop weak-repumping regime (no continuous
depumping), so the grid spans (r21, r10, r_repump) only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AllZeroError,
    CapExceededError,
    GuardViolatedError,
    ZeroMeanError,
)
from .filtering import GUARD_LIMIT, exact_step_matrix
from .model import Belief, PhotonCountModel, TraceRecord, TransitionRates, normalize

RATE_NAMES = ("r21", "r10", "r_repump")

DEFAULT_RATE_MIN = 2.0
DEFAULT_RATE_MAX = 150.0
DEFAULT_RATE_POINTS = 25


@dataclass(frozen=True)
class GridAxis:
    """Linearly spaced rate values in 1/s. A single-point axis (min == max)
    gives the degenerate grid that reduces to the plain filter."""

    min: float
    max: float
    n_points: int

    def __post_init__(self):
        if self.min < 0.0 or not math.isfinite(self.min):
            raise ValueError("axis min must be finite and >= 0")
        if self.n_points < 1:
            raise ValueError("axis needs at least one point")
        if self.n_points == 1:
            if self.max != self.min:
                raise ValueError("a single-point axis requires min == max")
        elif not self.max > self.min:
            raise ValueError("axis max must exceed min")

    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.n_points)


def default_axis() -> GridAxis:
    return GridAxis(DEFAULT_RATE_MIN, DEFAULT_RATE_MAX, DEFAULT_RATE_POINTS)


@dataclass(frozen=True)
class GridSpec:
    r21: GridAxis = field(default_factory=default_axis)
    r10: GridAxis = field(default_factory=default_axis)
    r_repump: GridAxis = field(default_factory=default_axis)
    max_cells: int = 2_000_000

    def __post_init__(self):
        if self.n_cells > self.max_cells:
            raise CapExceededError(
                f"grid would hold {self.n_cells} cells, cap is {self.max_cells}"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.r21.n_points, self.r10.n_points, self.r_repump.n_points)

    @property
    def n_cells(self) -> int:
        n21, n10, nr = (
            self.r21.n_points,
            self.r10.n_points,
            self.r_repump.n_points,
        )
        return 3 * n21 * n10 * nr

    def axis(self, name: str) -> GridAxis:
        if name not in RATE_NAMES:
            raise ValueError(f"unknown rate axis {name!r}")
        return getattr(self, name)

    def max_guard_load(self, dt: float) -> float:
        return (
            max(
                2.0 * self.r_repump.max,
                self.r10.max + self.r_repump.max,
                self.r21.max,
            )
            * dt
        )


@dataclass
class RateGrid:
    """Joint probability over (alpha, r21, r10, r_repump); sums to one."""

    spec: GridSpec
    joint: np.ndarray

    def copy(self) -> "RateGrid":
        return RateGrid(self.spec, self.joint.copy())

    def total(self) -> float:
        return float(self.joint.sum())


@dataclass(frozen=True)
class RatePosterior:
    """Marginal summary for one rate: expectation and rms spread (1/s)."""

    mean: float
    rms: float


@dataclass(frozen=True)
class RateMarginals:
    r21: RatePosterior
    r10: RatePosterior
    r_repump: RatePosterior

    def as_dict(self) -> dict[str, RatePosterior]:
        return {"r21": self.r21, "r10": self.r10, "r_repump": self.r_repump}


def init_flat(spec: GridSpec, initial_states: Belief) -> RateGrid:
    """Flat (no knowledge) prior over the rate cells, with the given state
    probabilities on every cell."""
    n_rate_cells = spec.shape[0] * spec.shape[1] * spec.shape[2]
    joint = np.empty((3,) + spec.shape)
    for alpha, p in enumerate(initial_states.as_tuple()):
        joint[alpha] = p / n_rate_cells
    return RateGrid(spec, joint)


class _LinearPropagator:
    """Per-cell linearized step, vectorized over the whole grid."""

    def __init__(self, spec: GridSpec, dt: float):
        load = spec.max_guard_load(dt)
        if not load < GUARD_LIMIT:
            raise GuardViolatedError(
                f"grid cell exceeds the linearization guard: max rate * dt = "
                f"{load:.3g} >= {GUARD_LIMIT}; shrink dt or use the exact mode"
            )
        v21, v10, vr = (spec.axis(n).values() for n in RATE_NAMES)
        r21, r10, rr = np.meshgrid(v21, v10, vr, indexing="ij")
        a = dt * 2.0 * rr
        b = dt * r10
        c = dt * rr
        d = dt * r21
        self.a, self.b, self.c, self.d = a, b, c, d
        self.k00 = 1.0 - a
        self.k11 = 1.0 - (b + c)
        self.k22 = 1.0 - d

    def apply(self, joint: np.ndarray, out: np.ndarray) -> None:
        j0, j1, j2 = joint[0], joint[1], joint[2]
        np.multiply(self.k00, j0, out=out[0])
        out[0] += self.b * j1
        np.multiply(self.k11, j1, out=out[1])
        out[1] += self.a * j0
        out[1] += self.d * j2
        np.multiply(self.k22, j2, out=out[2])
        out[2] += self.c * j1


class _ExactPropagator:
    """Per-cell matrix-exponential step; valid for any dt."""

    def __init__(self, spec: GridSpec, dt: float):
        v21, v10, vr = (spec.axis(n).values() for n in RATE_NAMES)
        shape = spec.shape
        self.p = np.empty((3, 3) + shape)
        for i, r21 in enumerate(v21):
            for j, r10 in enumerate(v10):
                for k, rr in enumerate(vr):
                    rates = TransitionRates(r21, r10, rr)
                    self.p[:, :, i, j, k] = exact_step_matrix(rates, dt)

    def apply(self, joint: np.ndarray, out: np.ndarray) -> None:
        np.einsum("ijabc,jabc->iabc", self.p, joint, out=out)
        np.maximum(out, 0.0, out=out)


_PROPAGATOR_CACHE: dict[tuple, object] = {}


def _propagator(spec: GridSpec, dt: float, method: str):
    key = (spec, dt, method)
    prop = _PROPAGATOR_CACHE.get(key)
    if prop is None:
        if len(_PROPAGATOR_CACHE) > 16:
            _PROPAGATOR_CACHE.clear()
        cls = _LinearPropagator if method == "linear" else _ExactPropagator
        prop = cls(spec, dt)
        _PROPAGATOR_CACHE[key] = prop
    return prop


def _bayes_weights(model: PhotonCountModel, n: int) -> np.ndarray:
    logl = np.array([model.log_likelihood(n, a) for a in range(3)])
    m = logl.max()
    if m == -math.inf:
        raise AllZeroError(f"count {n} has zero likelihood in every state")
    return np.exp(logl - m)


def update(
    grid: RateGrid,
    n: int,
    model: PhotonCountModel,
    dt: float,
    method: str = "linear",
) -> RateGrid:
    """One generalized Bayes step: per-cell prior propagation over dt, then
    reweighting by p(n | alpha), then renormalization of the whole grid."""
    if method not in ("linear", "exact"):
        raise ValueError("method must be 'linear' or 'exact'")
    out = np.empty_like(grid.joint)
    if dt == 0.0:
        np.copyto(out, grid.joint)
    else:
        _propagator(grid.spec, dt, method).apply(grid.joint, out)
    weights = _bayes_weights(model, n)
    out *= weights[:, None, None, None]
    total = out.sum()
    if total <= 0.0:
        raise AllZeroError("grid mass underflowed to zero")
    out /= total
    return RateGrid(grid.spec, out)


def marginal_states(grid: RateGrid) -> Belief:
    """State probabilities, summed over all rate cells."""
    return normalize(grid.joint.sum(axis=(1, 2, 3)))


def _axis_marginal(grid: RateGrid, name: str) -> tuple[np.ndarray, np.ndarray]:
    axis_index = RATE_NAMES.index(name) + 1  # axis 0 is alpha
    sum_axes = tuple(i for i in range(4) if i != axis_index)
    marg = grid.joint.sum(axis=sum_axes)
    total = marg.sum()
    if total <= 0.0:
        raise AllZeroError("grid mass is zero")
    return grid.spec.axis(name).values(), marg / total


def marginal_rates(grid: RateGrid) -> RateMarginals:
    """Expectation and rms of each rate's 1-D marginal."""
    out = {}
    for name in RATE_NAMES:
        values, marg = _axis_marginal(grid, name)
        mean = float(np.dot(values, marg))
        var = float(np.dot(values * values, marg)) - mean * mean
        out[name] = RatePosterior(mean, math.sqrt(max(var, 0.0)))
    return RateMarginals(**out)


def stopping_check(grid: RateGrid, threshold: float = 0.10) -> bool:
    """True when every rate marginal has rms/mean at or below threshold."""
    for name, post in marginal_rates(grid).as_dict().items():
        if post.mean == 0.0:
            if post.rms > 0.0:
                raise ZeroMeanError(f"{name} marginal has zero mean but rms > 0")
            continue  # a point mass at zero rate is perfectly known
        if post.rms / post.mean > threshold:
            return False
    return True


@dataclass
class EstimationResult:
    """Outcome of streaming a trace through the grid estimator."""

    n_bins: int
    stop_bin: Optional[int]  # first bin index where the stopping rule fired
    marginals_at_stop: Optional[RateMarginals]
    states_at_stop: Optional[Belief]
    final_marginals: RateMarginals
    final_states: Belief
    rms_history: list[tuple[int, float, float, float]]
    snapshots: list[tuple[int, dict[str, tuple[np.ndarray, np.ndarray]]]]
    final_grid: Optional[RateGrid] = None

    @property
    def converged(self) -> bool:
        return self.stop_bin is not None

    def reported_marginals(self) -> RateMarginals:
        """Marginals at the stopping point when it fired, else at the end of
        the data (acquisition would have continued)."""
        return self.marginals_at_stop if self.converged else self.final_marginals


def run_estimation(
    records: Sequence[TraceRecord],
    spec: GridSpec,
    model: PhotonCountModel,
    dt: float,
    initial_states: Belief = Belief(0.0, 0.0, 1.0),
    stop_threshold: float = 0.10,
    stop_at_trigger: bool = False,
    history_every: int = 100,
    snapshot_every: Optional[int] = None,
    method: Optional[str] = None,
    keep_grid: bool = False,
) -> EstimationResult:
    """Stream a recorded trace through the grid update.

    The stopping rule is evaluated after every bin. With stop_at_trigger the
    acquisition truncates there (the experimental protocol); otherwise the
    full trace is consumed and the trigger bin is only recorded, which keeps
    the final posterior comparable across seeds.

    method defaults to the linearized step whenever every grid cell
    satisfies the validity guard for dt, and to the exact matrix-exponential
    step otherwise.
    """
    if any(rec.pulse for rec in records):
        raise ValueError("rate estimation expects open-loop traces without pulses")
    if method is None:
        method = "linear" if spec.max_guard_load(dt) < GUARD_LIMIT else "exact"
    prop = _propagator(spec, dt, method)
    joint = init_flat(spec, initial_states).joint
    buf = np.empty_like(joint)
    grid = RateGrid(spec, joint)
    stop_bin = None
    marginals_at_stop = None
    states_at_stop = None
    rms_history = []
    snapshots = []
    n_seen = 0
    for rec in records:
        prop.apply(joint, buf)
        weights = _bayes_weights(model, rec.photon_count)
        buf *= weights[:, None, None, None]
        total = buf.sum()
        if total <= 0.0:
            raise AllZeroError("grid mass underflowed to zero")
        buf /= total
        joint, buf = buf, joint
        grid.joint = joint
        n_seen += 1
        if stop_bin is None and stopping_check(grid, stop_threshold):
            stop_bin = rec.bin_index
            marginals_at_stop = marginal_rates(grid)
            states_at_stop = marginal_states(grid)
            if stop_at_trigger:
                break
        if history_every and n_seen % history_every == 0:
            m = marginal_rates(grid)
            rms_history.append((rec.bin_index, m.r21.rms, m.r10.rms, m.r_repump.rms))
        if snapshot_every and n_seen % snapshot_every == 0:
            snapshots.append(
                (rec.bin_index, {n: _axis_marginal(grid, n) for n in RATE_NAMES})
            )
    final_marginals = marginal_rates(grid)
    final_states = marginal_states(grid)
    return EstimationResult(
        n_bins=n_seen,
        stop_bin=stop_bin,
        marginals_at_stop=marginals_at_stop,
        states_at_stop=states_at_stop,
        final_marginals=final_marginals,
        final_states=final_states,
        rms_history=rms_history,
        snapshots=snapshots,
        final_grid=grid.copy() if keep_grid else None,
    )
