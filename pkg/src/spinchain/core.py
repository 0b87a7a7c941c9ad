"""Exact product-operator algebra and time evolution for small spin-1/2 systems.

States are deviation density operators represented as dense complex matrices
of dimension 2^n (n <= 6).  All Hamiltonians are in angular-frequency units
(rad/s); couplings, offsets and rf amplitudes entering the public API are in
Hz.  Rotation convention: propagators are U = exp(-i H t), so a +y pulse with
flip angle pi/2 maps I_z -> I_x.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IDENTITY = "e"
AXES = ("x", "y", "z")

_PAULI_HALF = {
    "x": np.array([[0.0, 0.5], [0.5, 0.0]], dtype=complex),
    "y": np.array([[0.0, -0.5j], [0.5j, 0.0]], dtype=complex),
    "z": np.array([[0.5, 0.0], [0.0, -0.5]], dtype=complex),
    IDENTITY: np.eye(2, dtype=complex),
}

MIN_SPINS = 2
MAX_SPINS = 6


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SpinSystem:
    """A system of n weakly coupled spins-1/2.

    couplings[k, l] is J_kl in Hz (symmetric, zero diagonal); offsets[l] is
    the resonance offset of spin l+1 in Hz (zero by default).
    """

    n: int
    couplings: np.ndarray
    offsets: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        if not MIN_SPINS <= self.n <= MAX_SPINS:
            raise ValueError(f"spin count must be in {MIN_SPINS}..{MAX_SPINS}, got {self.n}")
        J = np.asarray(self.couplings, dtype=float)
        if J.shape != (self.n, self.n):
            raise ValueError(f"couplings must be {self.n}x{self.n}, got {J.shape}")
        if not np.allclose(J, J.T, atol=0.0):
            raise ValueError("coupling matrix must be symmetric")
        if np.any(np.diag(J) != 0.0):
            raise ValueError("coupling matrix must have zero diagonal")
        off = np.zeros(self.n) if self.offsets is None else np.asarray(self.offsets, dtype=float)
        if off.shape != (self.n,):
            raise ValueError(f"offsets must have length {self.n}")
        object.__setattr__(self, "couplings", _readonly(J))
        object.__setattr__(self, "offsets", _readonly(off))

    @property
    def dim(self) -> int:
        return 2**self.n

    @classmethod
    def chain(cls, chain_couplings, offsets=None) -> "SpinSystem":
        """Linear chain with nearest-neighbour couplings only."""
        chain_couplings = list(chain_couplings)
        n = len(chain_couplings) + 1
        J = np.zeros((n, n))
        for l, j in enumerate(chain_couplings):
            J[l, l + 1] = J[l + 1, l] = j
        return cls(n, J, offsets)

    def with_offset(self, spin: int, offset_hz: float) -> "SpinSystem":
        """Copy with the offset of one spin (1-based) replaced."""
        off = np.array(self.offsets)
        off[spin - 1] = offset_hz
        return SpinSystem(self.n, self.couplings, off)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "couplings": self.couplings.tolist(),
            "offsets": self.offsets.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpinSystem":
        return cls(int(d["n"]), d["couplings"], d.get("offsets"))


def load_spin_system(path) -> SpinSystem:
    """Read a spin-system JSON file ({"n":..., "couplings":..., "offsets":...})."""
    with open(path) as fh:
        return SpinSystem.from_dict(json.load(fh))


def save_spin_system(system: SpinSystem, path) -> None:
    Path(path).write_text(json.dumps(system.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class ProductOperatorSpec:
    """Tensor product of Pauli-halved matrices, e.g. 4 I_1y I_2y I_3z.

    labels uses 'x', 'y', 'z' and 'e' (identity); coefficient is the scalar
    prefactor (typically 2^(q-1) for q non-identity factors).
    """

    labels: tuple
    coefficient: float = 1.0

    def __post_init__(self):
        labels = tuple(self.labels)
        for lab in labels:
            if lab not in _PAULI_HALF:
                raise ValueError(f"unknown operator label {lab!r}")
        if all(lab == IDENTITY for lab in labels):
            raise ValueError("product operator must contain a non-identity factor")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def single(cls, n: int, spin: int, axis: str, coefficient: float = 1.0):
        """I_{spin,axis} on an n-spin system (spin is 1-based)."""
        labels = [IDENTITY] * n
        labels[spin - 1] = axis
        return cls(tuple(labels), coefficient)

    @classmethod
    def transfer_target(cls, n: int) -> "ProductOperatorSpec":
        """The multi-spin target 2^(n-1) I_1y ... I_(n-1)y I_nz."""
        return cls(tuple(["y"] * (n - 1) + ["z"]), float(2 ** (n - 1)))


def build_operator(spec: ProductOperatorSpec, n: int) -> np.ndarray:
    """Dense matrix of a product operator on n spins."""
    if len(spec.labels) != n:
        raise ValueError(f"expected {n} labels, got {len(spec.labels)}")
    out = np.array([[1.0 + 0.0j]])
    for lab in spec.labels:
        out = np.kron(out, _PAULI_HALF[lab])
    return spec.coefficient * out


@dataclass(frozen=True)
class ControlChannel:
    """One rf control: (spin index 1..n, axis 'x' or 'y')."""

    spin: int
    axis: str

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ValueError(f"control axis must be 'x' or 'y', got {self.axis!r}")
        if self.spin < 1:
            raise ValueError("spin index is 1-based")


@dataclass(frozen=True)
class ShapedPulse:
    """Piecewise-constant multi-channel pulse on a uniform time grid.

    amplitudes has shape (N, len(channels)) in Hz; dt is the segment
    duration in seconds.
    """

    channels: tuple
    dt: float
    amplitudes: np.ndarray

    def __post_init__(self):
        channels = tuple(self.channels)
        if len(set((c.spin, c.axis) for c in channels)) != len(channels):
            raise ValueError("duplicate control channels")
        amp = np.asarray(self.amplitudes, dtype=float)
        if amp.ndim == 1:
            amp = amp[:, None]
        if amp.shape[1] != len(channels):
            raise ValueError(f"amplitudes must have {len(channels)} columns, got {amp.shape[1]}")
        if amp.shape[0] < 1 or self.dt <= 0.0:
            raise ValueError("pulse must have at least one segment of positive duration")
        if not np.all(np.isfinite(amp)):
            raise ValueError("pulse amplitudes must be finite")
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "amplitudes", _readonly(amp))

    @property
    def segment_count(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def duration(self) -> float:
        return self.segment_count * self.dt

    def total_flip_angle(self) -> float:
        """Accumulated flip angle sum_c int 2*pi*|u_c| dt, in radians."""
        return float(2.0 * np.pi * self.dt * np.abs(self.amplitudes).sum())

    def max_amplitude(self) -> float:
        return float(np.abs(self.amplitudes).max())


def drift_hamiltonian(system: SpinSystem) -> np.ndarray:
    """H_d = 2 pi sum_{k<l} J_kl I_kz I_lz + 2 pi sum_l nu_l I_lz, in rad/s."""
    n = system.n
    H = np.zeros((system.dim, system.dim), dtype=complex)
    for k in range(n):
        for l in range(k + 1, n):
            if system.couplings[k, l] != 0.0:
                labels = [IDENTITY] * n
                labels[k] = "z"
                labels[l] = "z"
                H += (2.0 * np.pi * system.couplings[k, l]) * build_operator(
                    ProductOperatorSpec(tuple(labels)), n
                )
    for l in range(n):
        if system.offsets[l] != 0.0:
            H += (2.0 * np.pi * system.offsets[l]) * build_operator(
                ProductOperatorSpec.single(n, l + 1, "z"), n
            )
    return H


def control_hamiltonian(channel: ControlChannel, n: int) -> np.ndarray:
    """H_c = 2 pi I_{spin,axis}; multiply by the amplitude in Hz to get rad/s."""
    if channel.spin > n:
        raise ValueError(f"channel spin {channel.spin} out of range for {n} spins")
    return 2.0 * np.pi * build_operator(ProductOperatorSpec.single(n, channel.spin, channel.axis), n)


def hermitian_expm(H: np.ndarray, t: float) -> np.ndarray:
    """U = exp(-i H t) for Hermitian H via eigendecomposition."""
    w, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * w * t)) @ V.conj().T


def _check_hermitian(H: np.ndarray, tol: float = 1e-9) -> None:
    if np.abs(H - H.conj().T).max() > tol:
        raise ValueError("Hamiltonian must be Hermitian")


def propagate(state: np.ndarray, H: np.ndarray, t: float) -> np.ndarray:
    """Evolve a density operator: rho -> U rho U^dagger with U = exp(-i H t)."""
    if t < 0.0:
        raise ValueError("propagation time must be non-negative")
    _check_hermitian(H)
    if t == 0.0:
        return np.array(state)
    U = hermitian_expm(H, t)
    return U @ state @ U.conj().T


def rotation_operator(n: int, spin: int, phase: float, flip_angle: float) -> np.ndarray:
    """Ideal rotation exp(-i flip (cos(phase) I_x + sin(phase) I_y)) on one spin."""
    gen = np.cos(phase) * build_operator(ProductOperatorSpec.single(n, spin, "x"), n) + np.sin(
        phase
    ) * build_operator(ProductOperatorSpec.single(n, spin, "y"), n)
    return hermitian_expm(gen, flip_angle)


def segment_hamiltonians(system: SpinSystem, pulse: ShapedPulse) -> np.ndarray:
    """Stack of per-segment Hamiltonians H_d + sum_c u_c H_c, shape (N, dim, dim)."""
    for ch in pulse.channels:
        if ch.spin > system.n:
            raise ValueError(f"channel spin {ch.spin} out of range for {system.n} spins")
    Hd = drift_hamiltonian(system)
    Hc = np.stack([control_hamiltonian(ch, system.n) for ch in pulse.channels])
    return Hd[None, :, :] + np.einsum("jc,cab->jab", pulse.amplitudes, Hc)


def segment_propagators(system: SpinSystem, pulse: ShapedPulse) -> np.ndarray:
    """Exact propagators exp(-i H_j dt) for every pulse segment."""
    H = segment_hamiltonians(system, pulse)
    w, V = np.linalg.eigh(H)
    phases = np.exp(-1j * w * pulse.dt)
    return np.einsum("jab,jb,jcb->jac", V, phases, V.conj())


def evolve_pulse(state: np.ndarray, system: SpinSystem, pulse: ShapedPulse) -> np.ndarray:
    """Propagate a state through all pulse segments (exact per segment)."""
    rho = np.array(state)
    for U in segment_propagators(system, pulse):
        rho = U @ rho @ U.conj().T
    return rho


def transfer_fidelity(final: np.ndarray, target: np.ndarray, initial: np.ndarray) -> float:
    """Frobenius-normalised real overlap Re Tr(target^dag final) / (|target| |initial|).

    Equals 1 exactly when the initial operator was fully rotated onto the
    target (both norms taken as Frobenius norms).
    """
    nt = np.linalg.norm(target)
    ni = np.linalg.norm(initial)
    if nt == 0.0 or ni == 0.0:
        raise ValueError("target and initial operators must be nonzero")
    return float(np.trace(target.conj().T @ final).real / (nt * ni))


def expectation(operator: np.ndarray, state: np.ndarray) -> float:
    """Normalised expectation Tr(O rho) / Tr(O^2) (real part)."""
    return float(np.trace(operator @ state).real / np.trace(operator @ operator).real)
