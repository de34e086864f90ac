"""Bearings-only target-motion-analysis problem definition.

Relative-state constant-velocity dynamics, the bearing measurement and its
likelihood, measurement-based prior construction, and the recursive
Cramer-Rao position bound used as the benchmark reference curve.

State vectors are ordered (x, vx, y, vy) with x east and y north, in SI
units (metres, seconds, radians).  Bearings are measured clockwise from
north: h(state) = atan2(x, y).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .possq import GaussianPossibility


class AtOrigin(ValueError):
    """Bearing is undefined at zero horizontal range."""


def wrap_angle(angle):
    """Wrap angles into (-pi, pi]."""
    a = np.asarray(angle, dtype=float)
    wrapped = -((-a + np.pi) % (2.0 * np.pi) - np.pi)
    return float(wrapped) if np.isscalar(angle) or wrapped.ndim == 0 else wrapped


def transition_matrix(T: float) -> np.ndarray:
    """Constant-velocity transition matrix, block diagonal per axis."""
    if T <= 0:
        raise ValueError("sampling interval must be positive")
    F = np.eye(4)
    F[0, 1] = T
    F[2, 3] = T
    return F


def observer_input(xo_next: np.ndarray, xo: np.ndarray, T: float) -> np.ndarray:
    """Deterministic input absorbing observer acceleration between scans.

    U = xo_next - F @ xo; zero while the observer keeps constant velocity,
    and confined to the velocity components for an impulsive course change.
    """
    return np.asarray(xo_next, dtype=float) - transition_matrix(T) @ np.asarray(xo, dtype=float)


def process_noise_matrix(T: float, q: float) -> np.ndarray:
    """White-acceleration process noise matrix, intensity q in m^2/s^3."""
    if T <= 0:
        raise ValueError("sampling interval must be positive")
    if q <= 0:
        raise ValueError("process noise intensity must be positive for filtering")
    block = q * np.array([[T**3 / 3.0, T**2 / 2.0], [T**2 / 2.0, T]])
    Q = np.zeros((4, 4))
    Q[:2, :2] = block
    Q[2:, 2:] = block
    return Q


def bearing(state) -> float:
    """Bearing of a relative state, radians clockwise from north, in (-pi, pi]."""
    s = np.asarray(state, dtype=float)
    x, y = (s[0], s[1]) if s.shape[0] == 2 else (s[0], s[2])
    if x == 0.0 and y == 0.0:
        raise AtOrigin("bearing undefined at zero range")
    return float(np.arctan2(x, y))


def bearings_of(states: np.ndarray) -> np.ndarray:
    """Vectorised bearing for an (n, 4) array of relative states."""
    x, y = states[:, 0], states[:, 2]
    if np.any((x == 0.0) & (y == 0.0)):
        raise AtOrigin("bearing undefined at zero range")
    return np.arctan2(x, y)


def transition_possibility(x_prev, F: np.ndarray, U: np.ndarray, Q: np.ndarray) -> GaussianPossibility:
    """One-scan transition model as a Gaussian possibility.

    Mean F @ x_prev - U, spread Q.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    return GaussianPossibility(F @ x_prev - np.asarray(U, dtype=float), Q)


def bearing_log_likelihood(states: np.ndarray, z: float, sigma: float) -> np.ndarray:
    """Log of the Gaussian-shaped bearing likelihood, residual wrapped to (-pi, pi]."""
    res = wrap_angle(z - bearings_of(np.atleast_2d(states)))
    return -0.5 * (res / sigma) ** 2


def bearing_likelihood(state, z: float, sigma: float) -> float:
    """Bearing likelihood in (0, 1]; peak 1 when the measurement matches exactly."""
    if sigma <= 0:
        raise ValueError("bearing noise sigma must be positive")
    res = wrap_angle(z - bearing(state))
    return float(np.exp(-0.5 * (res / sigma) ** 2))


@dataclass(frozen=True)
class DynamicsConfig:
    """Sampling interval and process-noise intensity of the CV model."""

    T: float
    q: float

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("sampling interval must be positive")
        if self.q < 0:
            raise ValueError("process noise intensity must be nonnegative")


class ObserverTrajectory:
    """Known observer states per scan, piecewise constant velocity.

    Positions must integrate each scan's own velocity over the sampling
    interval (impulsive velocity changes at scan boundaries are allowed).
    """

    def __init__(self, states: np.ndarray, T: float):
        states = np.asarray(states, dtype=float)
        if states.ndim != 2 or states.shape[1] != 4:
            raise ValueError("observer states must have shape (scans, 4)")
        if states.shape[0] < 2:
            raise ValueError("observer trajectory needs at least 2 scans")
        gaps_x = states[1:, 0] - states[:-1, 0] - T * states[:-1, 1]
        gaps_y = states[1:, 2] - states[:-1, 2] - T * states[:-1, 3]
        scale = max(1.0, np.abs(states[:, [0, 2]]).max())
        if np.abs(gaps_x).max() > 1e-9 * scale or np.abs(gaps_y).max() > 1e-9 * scale:
            raise ValueError("observer positions inconsistent with piecewise-CV motion")
        self.states = states
        self.T = float(T)

    def __len__(self) -> int:
        return self.states.shape[0]

    def velocity(self, scan: int) -> tuple[float, float]:
        return float(self.states[scan, 1]), float(self.states[scan, 3])


def init_prior(
    z1: float,
    observer_vel: tuple[float, float],
    range_mean: float = 10e3,
    range_sigma: float = 3.5e3,
    sigma: float = np.deg2rad(1.0),
    vel_sigma: tuple[float, float] = (2.6, 2.6),
    covariance_form: str = "consistent",
) -> GaussianPossibility:
    """Prior over the relative state built from the first bearing measurement.

    Mean: target placed at range ``range_mean`` along the measured bearing,
    relative velocity equal to minus the observer velocity.  The position
    covariance orients the range variance along the line of sight and the
    cross-range variance range_mean^2 * sigma^2 perpendicular to it
    (``covariance_form="consistent"``); ``"swapped"`` swaps the two
    position variances while keeping the same cross term.
    """
    if min(range_mean, range_sigma, sigma, vel_sigma[0], vel_sigma[1]) <= 0:
        raise ValueError("prior scale parameters must be positive")
    if covariance_form not in ("consistent", "swapped"):
        raise ValueError(f"unknown covariance form {covariance_form!r}")

    s, c = np.sin(z1), np.cos(z1)
    mean = np.array([range_mean * s, -observer_vel[0], range_mean * c, -observer_vel[1]])

    range_var = range_sigma**2
    cross_var = (range_mean * sigma) ** 2
    if covariance_form == "consistent":
        var_x = range_var * s * s + cross_var * c * c
        var_y = range_var * c * c + cross_var * s * s
    else:
        var_x = range_var * c * c + cross_var * s * s
        var_y = range_var * s * s + cross_var * c * c
    cov_xy = (range_var - cross_var) * s * c

    P = np.diag([var_x, vel_sigma[0] ** 2, var_y, vel_sigma[1] ** 2])
    P[0, 2] = P[2, 0] = cov_xy
    return GaussianPossibility(mean, P)


def bearing_jacobian(rel_state: np.ndarray) -> np.ndarray:
    """Gradient of the bearing w.r.t. the relative state at a given point."""
    x, y = rel_state[0], rel_state[2]
    r_sq = x * x + y * y
    if r_sq == 0.0:
        raise AtOrigin("bearing gradient undefined at zero range")
    return np.array([y / r_sq, 0.0, -x / r_sq, 0.0])


@dataclass
class CrlbResult:
    """Per-scan bound matrices and the RMS position bound curve."""

    bounds: np.ndarray          # (scans, 4, 4)
    position_bound: np.ndarray  # (scans,) metres
    singular_scans: list[int]


def crlb_curve(
    true_relative: np.ndarray,
    T: float,
    q: float,
    sigma: float,
    prior: GaussianPossibility,
) -> CrlbResult:
    """Recursive Cramer-Rao bound along a known relative trajectory.

    Information recursion J_k = [F J_{k-1}^-1 F' + Q]^-1 + H_k' H_k / sigma^2
    with H_k the bearing gradient at the true relative state; J_1 is the
    inverse prior spread.  A singular information matrix is reported, not
    raised; the scan keeps a pseudo-inverse bound.
    """
    F = transition_matrix(T)
    Q = process_noise_matrix(T, q) if q > 0 else np.zeros((4, 4))
    scans = true_relative.shape[0]
    J = np.linalg.inv(prior.spread)
    bounds = np.empty((scans, 4, 4))
    singular: list[int] = []
    bounds[0] = prior.spread
    for k in range(1, scans):
        try:
            pred_cov = F @ np.linalg.inv(J) @ F.T + Q
            J = np.linalg.inv(pred_cov)
        except np.linalg.LinAlgError:
            singular.append(k)
            J = np.linalg.pinv(F @ np.linalg.pinv(J) @ F.T + Q)
        H = bearing_jacobian(true_relative[k])
        J = J + np.outer(H, H) / sigma**2
        try:
            bounds[k] = np.linalg.inv(J)
        except np.linalg.LinAlgError:
            singular.append(k)
            bounds[k] = np.linalg.pinv(J)
    position_bound = np.sqrt(bounds[:, 0, 0] + bounds[:, 2, 2])
    return CrlbResult(bounds=bounds, position_bound=position_bound, singular_scans=singular)
