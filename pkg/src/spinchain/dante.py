"""Broadband conversion of shaped pulses into hard-pulse/delay trains.

A single-channel shaped pulse is replaced by short hard pulses of fixed flip
angle at the times where the shaped pulse has accumulated that much nutation,
separated by free-evolution delays.  A simultaneous refocusing pi pulse on
all spins sits at the midpoint of every delay, so resonance offsets are
refocused delay-by-delay while every IzIz coupling term is preserved (both
coupled spins are inverted).  Refocusing phases follow the MLEV-4 cycle
(x, x, -x, -x); hard-pulse phases advance by pi per preceding pi block to
track the toggling frame.  If the number of pi blocks would be odd, one more
is appended at the end so their ideal composite is the identity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import ShapedPulse, SpinSystem, build_operator, transfer_fidelity
from .sequences import Delay, EventSequence, HardPulse, PiBlock, simulate_sequence

MLEV4_PHASES = (0.0, 0.0, np.pi, np.pi)


@dataclass(frozen=True)
class DanteSequence:
    """Hard-pulse realization of a shaped pulse with refocusing blocks."""

    sequence: EventSequence
    spin: int
    flip_per_pulse: float
    rf_amplitude: float
    pi_amplitude: float | None
    flip_angles: tuple

    @property
    def hard_pulses(self) -> tuple:
        return tuple(e for e in self.sequence.events if isinstance(e, HardPulse))

    @property
    def pi_blocks(self) -> tuple:
        return tuple(e for e in self.sequence.events if isinstance(e, PiBlock))

    def total_flip_angle(self) -> float:
        return float(sum(self.flip_angles))


def dante_convert(
    pulse: ShapedPulse,
    flip_per_pulse: float,
    rf_amplitude: float,
    pi_amplitude: float | None = None,
) -> DanteSequence:
    """Convert a single-channel shaped pulse into a DANTE train.

    flip_per_pulse is in radians; the final hard pulse absorbs any
    remainder.  Hard pulses are realized at rf_amplitude (Hz); pi blocks are
    ideal when pi_amplitude is None.  Negative shaped-pulse amplitudes map
    to phase-inverted hard pulses.
    """
    if len(pulse.channels) != 1:
        raise ValueError("DANTE conversion applies to single-channel pulses")
    total = pulse.total_flip_angle()
    if flip_per_pulse <= 0.0 or flip_per_pulse > total + 1e-12:
        raise ValueError(f"flip per pulse must lie in (0, {total:.6f}] rad")
    channel = pulse.channels[0]
    base_phase = 0.0 if channel.axis == "x" else np.pi / 2

    count = max(int(np.ceil(total / flip_per_pulse - 1e-6)), 1)
    flips = [flip_per_pulse] * (count - 1) + [total - (count - 1) * flip_per_pulse]

    # invert the accumulated-nutation curve at each pulse's midpoint angle
    amp = pulse.amplitudes[:, 0]
    accumulated = np.concatenate([[0.0], np.cumsum(2.0 * np.pi * np.abs(amp) * pulse.dt)])
    grid = np.arange(pulse.segment_count + 1) * pulse.dt
    midpoints = []
    signs = []
    acc = 0.0
    for f in flips:
        t_mid = float(np.interp(acc + f / 2.0, accumulated, grid))
        midpoints.append(t_mid)
        j = min(int(t_mid / pulse.dt), pulse.segment_count - 1)
        signs.append(1.0 if amp[j] >= 0.0 else -1.0)
        acc += f

    delays = np.diff([0.0] + midpoints + [pulse.duration])
    n_blocks = count + 1 if (count + 1) % 2 == 0 else count + 2

    events = []
    block_index = 0
    for i, d in enumerate(delays):
        events.append(Delay(d / 2.0))
        events.append(PiBlock(MLEV4_PHASES[block_index % 4], pi_amplitude))
        block_index += 1
        events.append(Delay(d / 2.0))
        if i < count:
            phase = base_phase + block_index * np.pi
            if signs[i] < 0.0:
                phase += np.pi
            events.append(HardPulse(channel.spin, phase % (2.0 * np.pi), flips[i], rf_amplitude))
    if block_index < n_blocks:
        events.append(PiBlock(MLEV4_PHASES[block_index % 4], pi_amplitude))
        block_index += 1

    seq = EventSequence(
        tuple(events),
        annotations={
            "dante": {
                "flip_per_pulse": flip_per_pulse,
                "rf_amplitude": rf_amplitude,
                "pi_amplitude": pi_amplitude,
                "phase_cycle": "mlev4",
            }
        },
    )
    return DanteSequence(seq, channel.spin, flip_per_pulse, rf_amplitude, pi_amplitude, tuple(flips))


@dataclass(frozen=True)
class OffsetProfile:
    offsets: np.ndarray
    fidelities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=float))
        object.__setattr__(self, "fidelities", np.asarray(self.fidelities, dtype=float))
        if self.offsets.shape != self.fidelities.shape:
            raise ValueError("profile length must match offsets length")


def offset_profile(
    seq,
    system: SpinSystem,
    initial,
    target,
    offset_spin: int,
    offset_range: float,
    steps: int,
) -> OffsetProfile:
    """Transfer fidelity versus resonance offset of one spin.

    seq may be an EventSequence or DanteSequence; the offset acts during all
    finite-duration events (hard pulses included).
    """
    if isinstance(seq, DanteSequence):
        seq = seq.sequence
    if steps < 3:
        raise ValueError("need at least 3 offset steps")
    if not 1 <= offset_spin <= system.n:
        raise ValueError(f"offset spin {offset_spin} out of range")
    rho0 = build_operator(initial, system.n) if not isinstance(initial, np.ndarray) else initial
    targ = build_operator(target, system.n) if not isinstance(target, np.ndarray) else target
    offsets = np.linspace(-offset_range, offset_range, steps)
    fids = np.empty(steps)
    for i, dv in enumerate(offsets):
        shifted = system.with_offset(offset_spin, dv)
        final = simulate_sequence(seq, shifted, rho0)
        fids[i] = transfer_fidelity(final, targ, rho0)
    return OffsetProfile(offsets, fids)


def write_profile_csv(path, profile: OffsetProfile) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["offset_hz", "fidelity"])
        for o, f in zip(profile.offsets, profile.fidelities):
            w.writerow([o, f])
