"""Per-bin belief updates: Bayes posterior from counts, linearized
rate-equation prior propagation, and pulse-conditioned belief transforms.

Propagation applies I + dt*G with the generator G built in generator().
Continuous depumping is deliberately absent from G (in the belief model it
acts through pulses only) while the simulator supports it, which keeps the
mismatch testable. The linearization is valid while
max(2*Rr, R10+Rr, R21) * dt < 0.5; outside that region callers must use
the exact matrix-exponential mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import AllZeroError, GuardViolatedError, NotStochasticError
from .model import (
    Belief,
    PhotonCountModel,
    Pulse,
    TraceRecord,
    TransitionRates,
    log_likelihoods,
    normalize,
)

GUARD_LIMIT = 0.5


def generator(rates: TransitionRates) -> np.ndarray:
    """Rate-equation generator G acting on column vectors (p0, p1, p2).

    Column sums are exactly zero; continuous depumping is not part of the
    belief propagation model.
    """
    r21, r10, rr = rates.r21, rates.r10, rates.r_repump
    return np.array(
        [
            [-2.0 * rr, r10, 0.0],
            [2.0 * rr, -r10 - rr, r21],
            [0.0, rr, -r21],
        ]
    )


def guard_load(rates: TransitionRates, dt: float) -> float:
    """Linearization load; must stay below GUARD_LIMIT."""
    return max(2.0 * rates.r_repump, rates.r10 + rates.r_repump, rates.r21) * dt


def check_guard(rates: TransitionRates, dt: float) -> None:
    load = guard_load(rates, dt)
    if not load < GUARD_LIMIT:
        raise GuardViolatedError(
            f"linearized propagation invalid: max rate * dt = {load:.3g} >= {GUARD_LIMIT}"
        )


def _pin_column(col: list[float], pin: int) -> list[float]:
    # Nudge entry ``pin`` by a few ulp until the float column sum is exactly 1.
    for _ in range(4):
        total = math.fsum(col)
        if total == 1.0:
            break
        col[pin] -= total - 1.0
    return [0.0 if abs(x) == 0.0 else x for x in col]


def step_matrix(rates: TransitionRates, dt: float) -> np.ndarray:
    """Linearized one-step transition matrix I + dt*G.

    Columns are pinned to sum to exactly 1.0 in floating point; entries are
    non-negative whenever the validity guard holds.
    """
    check_guard(rates, dt)
    a = 2.0 * rates.r_repump * dt
    b = rates.r10 * dt
    c = rates.r_repump * dt
    d = rates.r21 * dt
    col0 = _pin_column([1.0 - a, a, 0.0], 0)
    col1 = _pin_column([b, 1.0 - (b + c), c], 1)
    col2 = _pin_column([0.0, d, 1.0 - d], 2)
    return np.array([col0, col1, col2]).T


def exact_step_matrix(rates: TransitionRates, dt: float) -> np.ndarray:
    """exp(dt*G): exact propagation over one bin, valid for any dt >= 0."""
    if dt < 0.0:
        raise ValueError("dt must be >= 0")
    m = expm(dt * generator(rates))
    # expm may round theoretically-zero corners to tiny negatives
    return np.maximum(m, 0.0)


@dataclass(frozen=True)
class FilterConfig:
    photon_model: PhotonCountModel
    rates: TransitionRates
    bin_time: float
    initial_belief: Belief = Belief(0.0, 0.0, 1.0)
    propagation: str = "linear"  # or "exact"
    # Per-atom transition probabilities used to fold recorded pulses into the
    # belief; only needed when traces carry pulse events.
    repump_t: Optional[float] = None
    depump_t: Optional[float] = None

    def __post_init__(self):
        if self.propagation not in ("linear", "exact"):
            raise ValueError("propagation must be 'linear' or 'exact'")
        if self.propagation == "linear":
            check_guard(self.rates, self.bin_time)


def posterior_from_log_likelihoods(
    prior: Belief, logl: Sequence[float]
) -> Belief:
    """Bayes update from per-state log-likelihoods, in the log domain so
    extreme counts cannot underflow unless the posterior is genuinely
    all-zero. Equal log-likelihoods reproduce the prior up to roundoff; a
    delta prior is an exact fixed point for any observation."""
    scores = []
    for lp, pa in zip(logl, prior.as_tuple()):
        if pa <= 0.0 or lp == -math.inf:
            scores.append(-math.inf)
        else:
            scores.append(lp + math.log(pa))
    m = max(scores)
    if m == -math.inf:
        raise AllZeroError("observation has zero likelihood under every supported state")
    return normalize(tuple(0.0 if s == -math.inf else math.exp(s - m) for s in scores))


def posterior_update(prior: Belief, n: int, model: PhotonCountModel) -> Belief:
    """Bayes update: posterior proportional to p(n | alpha) * prior."""
    return posterior_from_log_likelihoods(prior, log_likelihoods(model, n))


def propagate_prior(
    posterior: Belief, rates: TransitionRates, dt: float, method: str = "linear"
) -> Belief:
    """Advance a belief by dt with the rate-equation model.

    method="linear" is the per-bin linearized step (guard enforced);
    method="exact" uses the matrix exponential and serves as the oracle.
    """
    if dt < 0.0:
        raise ValueError("dt must be >= 0")
    if dt == 0.0:
        return posterior
    if method == "linear":
        m = step_matrix(rates, dt)
    elif method == "exact":
        m = exact_step_matrix(rates, dt)
    else:
        raise ValueError(f"unknown propagation method {method!r}")
    p = m @ np.asarray(posterior.as_tuple())
    return normalize(p)


def apply_pulse_to_belief(belief: Belief, matrix: np.ndarray) -> Belief:
    """Multiply the belief by a column-stochastic pulse matrix."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3):
        raise NotStochasticError(f"expected a 3x3 matrix, got shape {m.shape}")
    if np.any(m < -1e-12):
        raise NotStochasticError("matrix has negative entries")
    colsums = m.sum(axis=0)
    if np.max(np.abs(colsums - 1.0)) > 1e-9:
        raise NotStochasticError(f"column sums deviate from 1: {colsums}")
    out = m @ np.asarray(belief.as_tuple())
    return normalize(np.maximum(out, 0.0))  # tolerated -1e-12-scale entries


def run_filter(records: Sequence[TraceRecord], config: FilterConfig) -> list[Belief]:
    """Posterior belief per bin for a recorded trace.

    Per bin: propagate the previous belief, apply the Bayes update with the
    recorded count, and finally fold in the recorded pulse (if any) so the
    next prior reflects it. The returned sequence holds the post-measurement
    posteriors (before the pulse), which is what occupancy statistics and
    the controller act on.
    """
    posteriors: list[Belief] = []
    belief = config.initial_belief
    for rec in records:
        prior = propagate_prior(belief, config.rates, config.bin_time, config.propagation)
        post = posterior_update(prior, rec.photon_count, config.photon_model)
        posteriors.append(post)
        belief = _fold_pulse(post, rec.pulse, config)
    return posteriors


def _fold_pulse(post: Belief, pulse: Pulse, config: FilterConfig) -> Belief:
    if pulse == Pulse.NONE:
        return post
    # Imported here: control builds on this module's primitives.
    from .control import pulse_matrix

    t = config.repump_t if pulse == Pulse.REPUMP else config.depump_t
    if t is None:
        raise ValueError(
            "trace carries pulse events but FilterConfig does not define the "
            "matching transition probability"
        )
    return apply_pulse_to_belief(post, pulse_matrix(t, pulse))


def trace_log_likelihood(records: Sequence[TraceRecord], config: FilterConfig) -> float:
    """Total predictive log-likelihood sum_i log p(n_i | n_<i) under the
    filter model; higher for the model that generated the data."""
    total = 0.0
    belief = config.initial_belief
    for rec in records:
        prior = propagate_prior(belief, config.rates, config.bin_time, config.propagation)
        logl = log_likelihoods(config.photon_model, rec.photon_count)
        terms = [
            lp + math.log(pa)
            for lp, pa in zip(logl, prior.as_tuple())
            if pa > 0.0 and lp > -math.inf
        ]
        if not terms:
            return -math.inf
        m = max(terms)
        total += m + math.log(math.fsum(math.exp(t - m) for t in terms))
        post = posterior_update(prior, rec.photon_count, config.photon_model)
        belief = _fold_pulse(post, rec.pulse, config)
    return total
