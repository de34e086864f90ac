"""Possibility particle filter and a standard bootstrap particle filter.

Both filters are generic over a linear-Gaussian transition model and a
log-likelihood callable; they differ in weight semantics:

* The possibility filter keeps weights in (0, 1] with max exactly 1 after
  every step.  Weights are running products of per-scan possibility
  factors (likelihood, and optionally the transition possibility of the
  drawn move), resampling uses the discrete water pouring of the
  normalised weights and carries the resampled weights forward, and the
  point estimate is a maximum-possibility particle.
* The standard filter is a plain SIR bootstrap: probability weights that
  sum to 1, systematic resampling every scan, and the weighted-mean
  (MMSE) point estimate.

All weight arithmetic runs in the log domain and is normalised against
the per-scan peak, so sharply peaked likelihoods cannot underflow.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .possq import (
    GaussianPossibility,
    WaterPouredDensity,
    sample_discrete,
    water_pour_continuous,
    water_pour_discrete,
)


class AllWeightsZero(RuntimeError):
    """Every particle weight underflowed to zero; the filter has collapsed."""


@dataclass
class ParticleSet:
    """Weighted particles: states (n, d) and weights (n,).

    Possibility convention: weights in [0, 1] with max exactly 1.
    Probability convention (standard filter): weights sum to 1.
    """

    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if self.states.shape[0] != self.weights.shape[0]:
            raise ValueError("states and weights disagree on particle count")

    @property
    def count(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class FilterStepRecord:
    """Per-scan output: the point estimate and the peak weight behind it.

    For the possibility filter the estimate is a particle of that scan's
    predicted set and ``peak_weight`` is the pre-normalisation peak; for
    the standard filter the estimate is the weighted mean and
    ``peak_weight`` the largest normalised weight.
    """

    scan_index: int
    estimate: np.ndarray
    peak_weight: float


@dataclass(frozen=True)
class PossibilityPFOptions:
    """Policy knobs of the possibility particle filter.

    proposal
        "density": draw moves from the Gaussian density with the
        transition's mean and (inflated) spread.  "max-entropy": draw from
        the water-poured density of the transition possibility.  Support
        placement does not change the sup-based weight semantics, so both
        are valid; "density" concentrates support where weights are
        non-negligible and is the practical default.
    transition_weighting
        "ignorance": treat the one-scan move as fully possible (vacuous
        transition possibility; weights accumulate likelihood factors
        only).  "gaussian": multiply by the Gaussian transition
        possibility of the drawn move, as in the textbook recursion.
    proposal_inflation
        Spread multiplier for the proposal only; widens support without
        touching weights.
    map_peak_cut
        Log-width of the near-peak set used for the point estimate.  The
        estimate is the member of {w >= exp(-cut) * max} closest to that
        set's weighted barycentre (still an actual particle).  0 reduces
        to the raw arg-max particle.
    """

    proposal: str = "density"
    transition_weighting: str = "ignorance"
    proposal_inflation: float = 1.5
    map_peak_cut: float = 0.5

    def __post_init__(self):
        if self.proposal not in ("density", "max-entropy"):
            raise ValueError(f"unknown proposal {self.proposal!r}")
        if self.transition_weighting not in ("ignorance", "gaussian"):
            raise ValueError(f"unknown transition weighting {self.transition_weighting!r}")
        if self.proposal_inflation <= 0:
            raise ValueError("proposal inflation must be positive")
        if self.map_peak_cut < 0:
            raise ValueError("map peak cut must be nonnegative")


TEXTBOOK_OPTIONS = PossibilityPFOptions(
    proposal="max-entropy",
    transition_weighting="gaussian",
    proposal_inflation=1.0,
    map_peak_cut=0.0,
)


class LinearGaussianTransition:
    """Transition whose possibility is Gaussian with mean A x + b, fixed spread.

    The heavy pieces (Cholesky factors, the water-poured proposal) are
    cached and shared across per-scan copies created with
    :meth:`with_offset`.
    """

    def __init__(self, matrix, spread, offset=None):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.spread = np.atleast_2d(np.asarray(spread, dtype=float))
        d = self.matrix.shape[0]
        self.offset = np.zeros(d) if offset is None else np.atleast_1d(np.asarray(offset, dtype=float))
        self.chol = np.linalg.cholesky(self.spread)
        self._cache: dict = {}

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def with_offset(self, offset) -> "LinearGaussianTransition":
        """Same model with a different deterministic offset; caches shared."""
        clone = copy.copy(self)
        clone.offset = np.atleast_1d(np.asarray(offset, dtype=float))
        return clone

    def possibility(self, x) -> GaussianPossibility:
        """Transition possibility of the next state given one current state."""
        return GaussianPossibility(self.matrix @ np.asarray(x, dtype=float) + self.offset, self.spread)

    def means(self, states: np.ndarray) -> np.ndarray:
        return states @ self.matrix.T + self.offset

    def _proposal_chol(self, inflation: float) -> np.ndarray:
        key = ("chol", inflation)
        if key not in self._cache:
            self._cache[key] = np.linalg.cholesky(self.spread * inflation)
        return self._cache[key]

    def _proposal_pour(self, inflation: float) -> WaterPouredDensity:
        key = ("pour", inflation)
        if key not in self._cache:
            centred = GaussianPossibility(np.zeros(self.dim), self.spread * inflation)
            self._cache[key] = water_pour_continuous(centred)
        return self._cache[key]

    def propose(self, states: np.ndarray, rng: np.random.Generator, options: PossibilityPFOptions) -> np.ndarray:
        """Draw one successor support point per particle."""
        means = self.means(states)
        n = states.shape[0]
        if options.proposal == "max-entropy":
            moves = self._proposal_pour(options.proposal_inflation).sample(rng, n)
        else:
            moves = rng.standard_normal((n, self.dim)) @ self._proposal_chol(options.proposal_inflation).T
        return means + moves

    def log_possibility_of_move(self, proposed: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Log Gaussian transition possibility of each drawn move."""
        dev = np.linalg.solve(self.chol, (proposed - self.means(states)).T)
        return -0.5 * np.einsum("ij,ij->j", dev, dev)

    def sample_model(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Probabilistic propagation through the un-inflated Gaussian model."""
        noise = rng.standard_normal((states.shape[0], self.dim)) @ self.chol.T
        return self.means(states) + noise


def _log_weights(weights: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(weights)


def peak_set_representative(states: np.ndarray, norm_log_weights: np.ndarray, cut: float) -> int:
    """Index of the maximum-possibility representative particle.

    With ``cut == 0`` this is the first arg-max of the weights.  Otherwise
    the near-peak set {log w >= -cut} is collapsed to its single most
    central member: the particle closest to the set's weighted barycentre.
    """
    if cut <= 0.0:
        return int(np.argmax(norm_log_weights))
    selected = np.flatnonzero(norm_log_weights >= -cut)
    if selected.shape[0] == 1:
        return int(selected[0])
    sub = states[selected]
    wsub = np.exp(norm_log_weights[selected])
    barycentre = (wsub[:, None] * sub).sum(axis=0) / wsub.sum()
    return int(selected[np.argmin(np.linalg.norm(sub - barycentre, axis=1))])


def possibility_pf_init(
    prior: GaussianPossibility,
    n: int,
    rng: np.random.Generator,
    options: PossibilityPFOptions = PossibilityPFOptions(),
) -> ParticleSet:
    """Draw initial support points and weight them by the prior possibility.

    Weights are the prior possibility values at the samples, divided by
    their maximum (max weight exactly 1).
    """
    if n < 1:
        raise ValueError("particle count must be at least 1")
    if options.proposal == "max-entropy":
        states = water_pour_continuous(prior).sample(rng, n)
    else:
        states = prior.mean + rng.standard_normal((n, prior.dim)) @ prior.chol.T
    log_w = prior.log_eval(states)
    log_w = log_w - log_w.max()
    return ParticleSet(states, np.exp(log_w))


def possibility_pf_predict_update(
    ps: ParticleSet,
    transition: LinearGaussianTransition,
    log_likelihood,
    z,
    rng: np.random.Generator,
    options: PossibilityPFOptions = PossibilityPFOptions(),
) -> tuple[np.ndarray, np.ndarray]:
    """Propagate support and accumulate weights; returns (predicted, raw log weights)."""
    predicted = transition.propose(ps.states, rng, options)
    log_w = _log_weights(ps.weights)
    if options.transition_weighting == "gaussian":
        log_w = log_w + transition.log_possibility_of_move(predicted, ps.states)
    log_w = log_w + log_likelihood(predicted, z)
    return predicted, log_w


def possibility_pf_resample(
    predicted: np.ndarray,
    norm_weights: np.ndarray,
    rng: np.random.Generator,
) -> ParticleSet:
    """Water-poured resampling; carries the resampled weights, max renormalised to 1."""
    pour = water_pour_discrete(norm_weights)
    idx = sample_discrete(pour, rng, predicted.shape[0])
    carried = norm_weights[idx]
    return ParticleSet(predicted[idx], carried / carried.max())


def possibility_pf_step(
    ps: ParticleSet,
    transition: LinearGaussianTransition,
    log_likelihood,
    z,
    rng: np.random.Generator,
    scan_index: int,
    options: PossibilityPFOptions = PossibilityPFOptions(),
) -> tuple[ParticleSet, FilterStepRecord]:
    """One prediction/update/resampling cycle of the possibility filter.

    Raises :class:`AllWeightsZero` when the peak weight is no longer a
    positive finite number (filter collapse; callers report the run as
    divergent).
    """
    predicted, log_w = possibility_pf_predict_update(ps, transition, log_likelihood, z, rng, options)
    peak = log_w.max()
    if not np.isfinite(peak):
        raise AllWeightsZero(f"peak log-weight {peak} at scan {scan_index}")
    norm_log_w = log_w - peak
    j = peak_set_representative(predicted, norm_log_w, options.map_peak_cut)
    record = FilterStepRecord(
        scan_index=scan_index,
        estimate=predicted[j].copy(),
        peak_weight=float(np.exp(peak)),
    )
    new_ps = possibility_pf_resample(predicted, np.exp(norm_log_w), rng)
    return new_ps, record


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling indices for probability weights summing to 1."""
    n = weights.shape[0]
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions, side="right")


def standard_pf_init(prior: GaussianPossibility, n: int, rng: np.random.Generator) -> ParticleSet:
    """Bootstrap initialisation: Gaussian prior samples, uniform weights."""
    if n < 1:
        raise ValueError("particle count must be at least 1")
    states = prior.mean + rng.standard_normal((n, prior.dim)) @ prior.chol.T
    return ParticleSet(states, np.full(n, 1.0 / n))


def standard_pf_step(
    ps: ParticleSet,
    transition_sampler,
    log_likelihood,
    z,
    rng: np.random.Generator,
    scan_index: int,
) -> tuple[ParticleSet, FilterStepRecord]:
    """One SIR cycle: propagate, weight, MMSE estimate, systematic resampling."""
    states = transition_sampler(ps.states, rng)
    log_w = _log_weights(ps.weights) + log_likelihood(states, z)
    peak = log_w.max()
    if not np.isfinite(peak):
        raise AllWeightsZero(f"peak log-weight {peak} at scan {scan_index}")
    w = np.exp(log_w - peak)
    w /= w.sum()
    record = FilterStepRecord(
        scan_index=scan_index,
        estimate=w @ states,
        peak_weight=float(w.max()),
    )
    idx = systematic_resample(w, rng)
    n = states.shape[0]
    return ParticleSet(states[idx], np.full(n, 1.0 / n)), record
