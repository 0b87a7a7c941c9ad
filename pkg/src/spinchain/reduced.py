"""Four-dimensional reduced dynamics of the controlled three-spin transfer.

With one y-control on the middle spin of a linear three-spin chain, the
transfer I_1x -> 4 I_1y I_2y I_3z closes on the expectation values

    x1 = <I_1x>, x2 = <2 I_1y I_2z>, x3 = <2 I_1y I_2x>, x4 = <4 I_1y I_2y I_3z>

which obey xdot = pi * A(u, k) x with an antisymmetric generator.  Time is
dimensionless (units of 1/J12) and u is the dimensionless control; the
physical rf amplitude in Hz is u * J12 / 2 (the factor 1/2 follows from the
2-normalisation of the bilinear product operators).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .core import ControlChannel, ShapedPulse, SpinSystem, build_operator, evolve_pulse
from .core import ProductOperatorSpec, segment_propagators

X0 = np.array([1.0, 0.0, 0.0, 0.0])
TARGET = np.array([0.0, 0.0, 0.0, 1.0])


def generator(u: float, k: float) -> np.ndarray:
    """The antisymmetric matrix A(u, k); the flow is xdot = pi * A x."""
    return np.array(
        [
            [0.0, -1.0, 0.0, 0.0],
            [1.0, 0.0, -u, 0.0],
            [0.0, u, 0.0, -k],
            [0.0, 0.0, k, 0.0],
        ]
    )


def reduced_rhs(x, u: float, k: float) -> np.ndarray:
    """Time derivative of the reduced state (scaled time, units of 1/J12)."""
    return np.pi * generator(u, k) @ np.asarray(x, dtype=float)


def physical_amplitude(u, j12: float):
    """Convert the dimensionless control of the reduced model to Hz."""
    return np.asarray(u, dtype=float) * j12 / 2.0


def integrate_reduced(u, k: float, T: float, x0=X0, return_path: bool = False):
    """Integrate the reduced flow under a piecewise-constant control.

    u is sampled on a uniform grid of N segments covering [0, T] (scaled
    time); each segment is propagated by the exact rotation expm(pi A dt),
    so the integration conserves the norm to machine precision.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if T <= 0.0:
        raise ValueError("duration must be positive")
    dt = T / len(u)
    x = np.asarray(x0, dtype=float).copy()
    path = [x.copy()]
    for uj in u:
        x = expm(np.pi * generator(uj, k) * dt) @ x
        if return_path:
            path.append(x.copy())
    if return_path:
        return x, np.array(path)
    return x


@dataclass(frozen=True)
class PolarState:
    """(r1, r2, r3) sphere coordinates with the phase angle theta.

    theta is None when x2 = x3 = 0 (the angle is undefined on the r2 = 0
    circle; endpoint values must come from the shooting solver instead).
    """

    r1: float
    r2: float
    r3: float
    theta: float | None


def to_polar(x) -> PolarState:
    x1, x2, x3, x4 = np.asarray(x, dtype=float)
    r2 = float(np.hypot(x2, x3))
    theta = float(np.arctan2(x3, x2)) if r2 > 0.0 else None
    return PolarState(float(x1), r2, float(x4), theta)


def from_polar(p: PolarState) -> np.ndarray:
    theta = 0.0 if p.theta is None else p.theta
    return np.array([p.r1, p.r2 * np.cos(theta), p.r2 * np.sin(theta), p.r3])


_REDUCED_LABELS = ("xee", "yze", "yxe", "yyz")
_REDUCED_COEFFS = (1.0, 2.0, 2.0, 4.0)


def reduced_basis_operators(n: int = 3) -> list:
    """The four subspace operators embedded in an n-spin system (n >= 3)."""
    ops = []
    for labels, coeff in zip(_REDUCED_LABELS, _REDUCED_COEFFS):
        full = tuple(labels) + ("e",) * (n - 3)
        ops.append(build_operator(ProductOperatorSpec(full, coeff), n))
    return ops


def full_state_expectations(rho: np.ndarray, ops) -> np.ndarray:
    """Project a full density operator onto the reduced coordinates."""
    return np.array([np.trace(op @ rho).real / np.trace(op @ op).real for op in ops])


def reduced_full_equivalence(k: float, u, T: float, j12: float = 88.05) -> float:
    """Max deviation between the reduced flow and the exact 8x8 simulation.

    The same piecewise-constant control drives both models (physical
    amplitude u * J12 / 2 on the spin-2 y channel of a linear chain with
    J23 = k * J12); expectation values are compared after every segment.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    _, path = integrate_reduced(u, k, T, return_path=True)

    system = SpinSystem.chain([j12, k * j12])
    pulse = ShapedPulse(
        (ControlChannel(2, "y"),), dt=T / len(u) / j12, amplitudes=physical_amplitude(u, j12)
    )
    ops = reduced_basis_operators()
    rho = ops[0].copy()  # I_1x
    dev = np.abs(full_state_expectations(rho, ops) - path[0]).max()
    for j, U in enumerate(segment_propagators(system, pulse)):
        rho = U @ rho @ U.conj().T
        dev = max(dev, np.abs(full_state_expectations(rho, ops) - path[j + 1]).max())
    return float(dev)


def write_trajectory_csv(path, times, states) -> None:
    """Dump a reduced trajectory as CSV (t, x1..x4, r1..r3, theta)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x1", "x2", "x3", "x4", "r1", "r2", "r3", "theta"])
        for t, x in zip(times, states):
            p = to_polar(x)
            w.writerow(
                [t, *x, p.r1, p.r2, p.r3, "" if p.theta is None else p.theta]
            )
