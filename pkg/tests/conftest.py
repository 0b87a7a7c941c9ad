"""Shared systems, optimization sweeps, and analytic solutions.

The expensive objects (duration sweeps, shooting solutions, sampled analytic
pulses) are computed once per session and shared between test modules.
"""

from __future__ import annotations

import numpy as np
import pytest

from spinchain.analytic import (
    analytic_pulse_four_spin,
    analytic_pulse_three_spin,
    shoot_three_spin,
)
from spinchain.core import ProductOperatorSpec, SpinSystem
from spinchain.grape import GrapeConfig, TransferProblem, control_mask_presets, top_curve

# grid step for all duration sweeps (seconds)
GRID_STEP = 2e-4

# the benchmark chains: nearest-neighbour couplings in Hz
CHAINS = {
    "n3-equal": [88.05, 88.05],
    "n3-uneven": [46.0, 73.1],
    "n4-equal": [88.05, 88.05, 88.05],
    "n4-uneven": [46.0, 19.3, 18.1],
    "n5-equal": [88.05, 88.05, 88.05, 88.05],
    "n6-equal": [88.05, 88.05, 88.05, 88.05, 88.05],
}

# sweep windows bracketing each chain's minimum transfer time
SWEEP_WINDOWS = {
    "n3-equal": (0.0094, 0.0102),
    "n3-uneven": (0.0150, 0.0160),
    "n4-equal": (0.0134, 0.0142),
    "n4-uneven": (0.0524, 0.0544),
    "n5-equal": (0.0172, 0.0182),
    "n6-equal": (0.0210, 0.0222),
}


def chain_system(key: str) -> SpinSystem:
    return SpinSystem.chain(CHAINS[key])


def transfer_problem(system: SpinSystem, mask: str) -> TransferProblem:
    n = system.n
    return TransferProblem(
        system,
        ProductOperatorSpec.single(n, 1, "x"),
        ProductOperatorSpec.transfer_target(n),
        control_mask_presets(n, mask),
    )


def sweep_grid(key: str) -> np.ndarray:
    lo, hi = SWEEP_WINDOWS[key]
    return np.arange(lo, hi + GRID_STEP / 2, GRID_STEP)


_SWEEP_CACHE: dict = {}


def duration_sweep(key: str, mask: str = "interior-y", reverse: bool = False):
    """Cached best-fidelity-versus-duration sweep for one benchmark chain.

    Masks naming the same channel set (e.g. the interior-y channels of a
    3-spin chain are exactly the spin-2 y channel) share one sweep.
    """
    system = chain_system(key)
    cache_key = (key, control_mask_presets(system.n, mask), reverse)
    if cache_key not in _SWEEP_CACHE:
        problem = transfer_problem(system, mask)
        if reverse:
            problem = problem.reversed()
        iterations = 200 if system.n >= 5 else 300
        config = GrapeConfig(segments=64, restarts=5, seed=0, max_iterations=iterations)
        _SWEEP_CACHE[cache_key] = top_curve(problem, sweep_grid(key), config)
    return _SWEEP_CACHE[cache_key]


@pytest.fixture(scope="session")
def shooting_equal():
    """Shortest extremal for the equal-coupling 3-spin chain (k = 1)."""
    return shoot_three_spin(1.0)


@pytest.fixture(scope="session")
def shooting_uneven():
    """Shortest extremal for the 46/73.1 Hz 3-spin chain (k = 1.59)."""
    return shoot_three_spin(73.1 / 46.0)


@pytest.fixture(scope="session")
def pulse3_equal():
    return analytic_pulse_three_spin(88.05, 88.05, 4e-5)


@pytest.fixture(scope="session")
def pulse3_uneven():
    return analytic_pulse_three_spin(46.0, 73.1, 4e-5)


@pytest.fixture(scope="session")
def four_spin_equal():
    """(pulse, split) for the equal-coupling 4-spin chain."""
    return analytic_pulse_four_spin(88.05, 88.05, 88.05, 4e-5)


@pytest.fixture(scope="session")
def four_spin_uneven():
    """(pulse, split) for the 46/19.3/18.1 Hz 4-spin chain."""
    return analytic_pulse_four_spin(46.0, 19.3, 18.1, 8e-5)
