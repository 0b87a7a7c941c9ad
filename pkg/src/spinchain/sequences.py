"""Event sequences, the conventional transfer baseline, and pulse file I/O.

An EventSequence is an ordered list of Delay, HardPulse and ShapedBlock
events; it is the common carrier for conventional, analytic and DANTE
sequences.  Hard pulses are ideal (instantaneous) unless an rf amplitude is
attached, in which case they are simulated as finite rotations during which
the drift Hamiltonian stays active.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .core import (
    ControlChannel,
    ShapedPulse,
    SpinSystem,
    build_operator,
    control_hamiltonian,
    drift_hamiltonian,
    evolve_pulse,
    hermitian_expm,
    propagate,
    rotation_operator,
    transfer_fidelity,
    ProductOperatorSpec,
)

PULSE_SCHEMA = 1


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if self.duration < 0.0:
            raise ValueError("delay must be non-negative")


@dataclass(frozen=True)
class HardPulse:
    """Single-spin rotation; ideal unless amplitude (Hz) is given.

    phase is the rotation-axis angle in the xy-plane (0 = x, pi/2 = y);
    flip_angle is in radians.  A finite pulse lasts flip/(2 pi amplitude).
    """

    spin: int
    phase: float
    flip_angle: float
    amplitude: float | None = None

    @property
    def duration(self) -> float:
        if self.amplitude is None:
            return 0.0
        return abs(self.flip_angle) / (2.0 * np.pi * self.amplitude)


@dataclass(frozen=True)
class PiBlock:
    """Simultaneous refocusing pi pulse on all spins with a common phase."""

    phase: float
    amplitude: float | None = None

    @property
    def duration(self) -> float:
        if self.amplitude is None:
            return 0.0
        return 0.5 / self.amplitude


@dataclass(frozen=True)
class ShapedBlock:
    pulse: ShapedPulse

    @property
    def duration(self) -> float:
        return self.pulse.duration


@dataclass(frozen=True)
class EventSequence:
    events: tuple
    annotations: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def total_duration(self) -> float:
        return float(sum(e.duration for e in self.events))


def conventional_sequence(system: SpinSystem) -> EventSequence:
    """The n-1 step INEPT cascade for a linear chain.

    Free evolution of 1/(2 J_{l,l+1}) alternating with hard pi/2 y-pulses on
    spin l+1 (no pulse after the final delay); total time sum 1/(2J).
    """
    events = []
    for l in range(system.n - 1):
        J = system.couplings[l, l + 1]
        if J <= 0.0:
            raise ValueError(f"chain coupling J{l + 1},{l + 2} must be positive")
        events.append(Delay(0.5 / J))
        if l < system.n - 2:
            events.append(HardPulse(spin=l + 2, phase=np.pi / 2, flip_angle=np.pi / 2))
    return EventSequence(tuple(events))


def conventional_duration(system: SpinSystem) -> float:
    return float(sum(0.5 / system.couplings[l, l + 1] for l in range(system.n - 1)))


def scaled_conventional_sequence(system: SpinSystem, total_duration: float) -> EventSequence:
    """Conventional cascade compressed to a shorter total time.

    The n-1 delays are chosen to maximise the product of the per-step
    transfer amplitudes prod_l sin(pi J_l d_l) subject to sum d_l = t; for
    t >= sum 1/(2J) the full-transfer delays are returned.
    """
    Js = np.array([system.couplings[l, l + 1] for l in range(system.n - 1)])
    full = 0.5 / Js
    if total_duration >= full.sum():
        d = full
    else:
        m = len(Js)

        def neg_amp(w):
            d = total_duration * np.exp(w) / np.exp(w).sum()
            return -np.prod(np.sin(np.pi * Js * d))

        res = minimize(neg_amp, np.zeros(m), method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
        d = total_duration * np.exp(res.x) / np.exp(res.x).sum()
    events = []
    for l, dl in enumerate(d):
        events.append(Delay(float(dl)))
        if l < system.n - 2:
            events.append(HardPulse(spin=l + 2, phase=np.pi / 2, flip_angle=np.pi / 2))
    return EventSequence(tuple(events))


def _finite_rotation(system: SpinSystem, spins, phases, flip_angles, amplitude: float) -> np.ndarray:
    """Propagator of simultaneous finite rotations with the drift active."""
    duration = max(abs(f) for f in flip_angles) / (2.0 * np.pi * amplitude)
    H = drift_hamiltonian(system)
    for spin, phase, flip in zip(spins, phases, flip_angles):
        nu = flip / (2.0 * np.pi * duration)
        gen = np.cos(phase) * control_hamiltonian(ControlChannel(spin, "x"), system.n) + np.sin(
            phase
        ) * control_hamiltonian(ControlChannel(spin, "y"), system.n)
        H = H + nu * gen / (2.0 * np.pi) * 2.0 * np.pi  # nu in Hz times 2 pi I_axis
    return hermitian_expm(H, duration)


def event_propagator(event, system: SpinSystem) -> np.ndarray:
    """Unitary implementing one event (drift active during finite events)."""
    n = system.n
    if isinstance(event, Delay):
        return hermitian_expm(drift_hamiltonian(system), event.duration)
    if isinstance(event, HardPulse):
        if event.spin > n:
            raise ValueError(f"hard pulse spin {event.spin} out of range")
        if event.amplitude is None:
            return rotation_operator(n, event.spin, event.phase, event.flip_angle)
        return _finite_rotation(system, [event.spin], [event.phase], [event.flip_angle], event.amplitude)
    if isinstance(event, PiBlock):
        if event.amplitude is None:
            U = np.eye(system.dim, dtype=complex)
            for spin in range(1, n + 1):
                U = rotation_operator(n, spin, event.phase, np.pi) @ U
            return U
        return _finite_rotation(
            system, list(range(1, n + 1)), [event.phase] * n, [np.pi] * n, event.amplitude
        )
    if isinstance(event, ShapedBlock):
        U = np.eye(system.dim, dtype=complex)
        from .core import segment_propagators

        for Uj in segment_propagators(system, event.pulse):
            U = Uj @ U
        return U
    raise TypeError(f"unknown event type {type(event).__name__}")


def simulate_sequence(seq: EventSequence, system: SpinSystem, initial: np.ndarray) -> np.ndarray:
    """Apply every event of the sequence to a density operator."""
    rho = np.array(initial)
    for event in seq.events:
        if isinstance(event, ShapedBlock):
            rho = evolve_pulse(rho, system, event.pulse)
        else:
            U = event_propagator(event, system)
            rho = U @ rho @ U.conj().T
    return rho


def sequence_fidelity(seq: EventSequence, system: SpinSystem, initial, target) -> float:
    final = simulate_sequence(seq, system, initial)
    return transfer_fidelity(final, target, initial)


# --------------------------------------------------------------------------
# pulse file I/O


def _pulse_to_dict(pulse: ShapedPulse) -> dict:
    return {
        "type": "shaped_pulse",
        "channels": [{"spin": c.spin, "axis": c.axis} for c in pulse.channels],
        "dt": pulse.dt,
        "amplitudes": pulse.amplitudes.tolist(),
    }


def _pulse_from_dict(d: dict) -> ShapedPulse:
    channels = tuple(ControlChannel(c["spin"], c["axis"]) for c in d["channels"])
    return ShapedPulse(channels, d["dt"], np.array(d["amplitudes"]))


def _event_to_dict(event) -> dict:
    if isinstance(event, Delay):
        return {"type": "delay", "duration": event.duration}
    if isinstance(event, HardPulse):
        return {
            "type": "hard_pulse",
            "spin": event.spin,
            "phase": event.phase,
            "flip_angle": event.flip_angle,
            "amplitude": event.amplitude,
        }
    if isinstance(event, PiBlock):
        return {"type": "pi_block", "phase": event.phase, "amplitude": event.amplitude}
    if isinstance(event, ShapedBlock):
        return {"type": "shaped_block", "pulse": _pulse_to_dict(event.pulse)}
    raise TypeError(f"unknown event type {type(event).__name__}")


def _event_from_dict(d: dict):
    t = d["type"]
    if t == "delay":
        return Delay(d["duration"])
    if t == "hard_pulse":
        return HardPulse(d["spin"], d["phase"], d["flip_angle"], d.get("amplitude"))
    if t == "pi_block":
        return PiBlock(d["phase"], d.get("amplitude"))
    if t == "shaped_block":
        return ShapedBlock(_pulse_from_dict(d["pulse"]))
    raise ValueError(f"unknown event type {t!r}")


class PulseFileError(ValueError):
    pass


def write_pulse(obj, path, fmt: str = "json") -> None:
    """Write a ShapedPulse or EventSequence to disk.

    The json format round-trips losslessly; csv-shape writes per-segment
    rows (t_start, then amplitude (Hz) / phase (deg) per spin) and applies
    to ShapedPulse only.
    """
    path = Path(path)
    if fmt == "json":
        if isinstance(obj, ShapedPulse):
            doc = {"schema": PULSE_SCHEMA, **_pulse_to_dict(obj)}
        elif isinstance(obj, EventSequence):
            doc = {
                "schema": PULSE_SCHEMA,
                "type": "event_sequence",
                "events": [_event_to_dict(e) for e in obj.events],
                "annotations": obj.annotations,
            }
        else:
            raise TypeError(f"cannot serialise {type(obj).__name__}")
        path.write_text(json.dumps(doc, indent=2) + "\n")
    elif fmt == "csv-shape":
        if not isinstance(obj, ShapedPulse):
            raise TypeError("csv-shape format applies to ShapedPulse only")
        spins = sorted(set(c.spin for c in obj.channels))
        idx = {(c.spin, c.axis): i for i, c in enumerate(obj.channels)}
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            header = ["t_start"]
            for s in spins:
                header += [f"spin{s}_amplitude_hz", f"spin{s}_phase_deg"]
            w.writerow(header)
            for j in range(obj.segment_count):
                row = [j * obj.dt]
                for s in spins:
                    ux = obj.amplitudes[j, idx[(s, "x")]] if (s, "x") in idx else 0.0
                    uy = obj.amplitudes[j, idx[(s, "y")]] if (s, "y") in idx else 0.0
                    row += [float(np.hypot(ux, uy)), float(np.degrees(np.arctan2(uy, ux)))]
                w.writerow(row)
    else:
        raise ValueError(f"unknown pulse format {fmt!r}")


def read_pulse(path, fmt: str = "json"):
    """Read a pulse file written by write_pulse."""
    path = Path(path)
    if fmt == "json":
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise PulseFileError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from exc
        if doc.get("schema") != PULSE_SCHEMA:
            raise PulseFileError(f"{path}: unsupported schema {doc.get('schema')!r}")
        try:
            if doc["type"] == "shaped_pulse":
                return _pulse_from_dict(doc)
            if doc["type"] == "event_sequence":
                return EventSequence(
                    tuple(_event_from_dict(e) for e in doc["events"]),
                    doc.get("annotations", {}),
                )
        except (KeyError, ValueError) as exc:
            raise PulseFileError(f"{path}: invalid pulse document: {exc}") from exc
        raise PulseFileError(f"{path}: unknown document type {doc.get('type')!r}")
    if fmt == "csv-shape":
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or not rows[0] or rows[0][0] != "t_start":
            raise PulseFileError(f"{path}: missing csv-shape header")
        spins = []
        for name in rows[0][1::2]:
            if not (name.startswith("spin") and name.endswith("_amplitude_hz")):
                raise PulseFileError(f"{path}: unexpected column {name!r}")
            spins.append(int(name[4:].split("_")[0]))
        data = []
        for i, row in enumerate(rows[1:], start=2):
            try:
                data.append([float(v) for v in row])
            except ValueError as exc:
                raise PulseFileError(f"{path}: line {i}: {exc}") from exc
        data = np.array(data)
        if data.shape[0] < 2:
            raise PulseFileError(f"{path}: need at least two rows to infer dt")
        dt = data[1, 0] - data[0, 0]
        channels, cols = [], []
        for si, s in enumerate(spins):
            amp = data[:, 1 + 2 * si]
            ph = np.radians(data[:, 2 + 2 * si])
            channels += [ControlChannel(s, "x"), ControlChannel(s, "y")]
            cols += [amp * np.cos(ph), amp * np.sin(ph)]
        return ShapedPulse(tuple(channels), dt, np.column_stack(cols))
    raise ValueError(f"unknown pulse format {fmt!r}")
