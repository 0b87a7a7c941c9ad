"""Shooting-based time-optimal controls for three-spin chains, and the
split construction for four-spin chains.

The boundary-value problem lives on the reduced sphere (r1, r2, r3) with the
phase angle theta as the single degree of freedom.  We work in "shooting
time" sigma = pi * t * J12 (t in seconds, so sigma = pi * tau with tau in
units of 1/J12), where the extremal equations take their cleanest form:

    theta'' = ((k^2 - 1)/2) * sin(2 theta)
    r1' = -cos(theta) r2
    r2' =  cos(theta) r1 - k sin(theta) r3
    r3' =  k sin(theta) r2

with the conserved first integral E = theta'^2/2 + ((k^2-1)/4) cos(2 theta).
Along extremals the reduced-model control is u = 2 theta'(sigma), i.e. a
physical rf amplitude of J12 * theta'(sigma) in Hz.  A transfer leg starts
at r = (cos alpha, sin alpha, 0) and ends at (0, cos beta, sin beta); for
alpha = 0 the free shooting parameter is theta'(0) with theta(0) = 0, for
alpha > 0 it is theta(0) with theta'(0) = sin(theta(0)) / tan(alpha).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize, minimize_scalar

from .core import (
    ControlChannel,
    ProductOperatorSpec,
    ShapedPulse,
    build_operator,
)
from .sequences import HardPulse

SCAN_RTOL = 1e-6
REFINE_RTOL = 1e-10
FINAL_RTOL = 1e-12
RESIDUAL_TOL = 1e-6


class ShootingError(RuntimeError):
    """No feasible extremal found within the search bracket."""


def _rhs(sigma, y, k):
    th, thd, r1, r2, r3 = y
    return (
        thd,
        0.5 * (k * k - 1.0) * np.sin(2.0 * th),
        -np.cos(th) * r2,
        np.cos(th) * r1 - k * np.sin(th) * r3,
        k * np.sin(th) * r2,
    )


def integrate_euler_lagrange(theta0, theta_dot0, k, sigma_max, alpha=0.0, rtol=FINAL_RTOL):
    """Integrate the extremal equations; returns the dense solve_ivp result.

    State vector: (theta, theta', r1, r2, r3) over sigma in [0, sigma_max].
    """
    if sigma_max <= 0.0:
        raise ValueError("sigma_max must be positive")
    y0 = [theta0, theta_dot0, np.cos(alpha), np.sin(alpha), 0.0]
    return solve_ivp(
        _rhs,
        [0.0, sigma_max],
        y0,
        args=(k,),
        method="DOP853" if rtol < 1e-9 else "RK45",
        rtol=rtol,
        atol=rtol * 1e-2,
        dense_output=True,
    )


def first_integral(theta, theta_dot, k):
    """E = theta'^2/2 + ((k^2-1)/4) cos(2 theta), conserved on extremals."""
    theta = np.asarray(theta, dtype=float)
    theta_dot = np.asarray(theta_dot, dtype=float)
    return theta_dot**2 / 2.0 + (k * k - 1.0) / 4.0 * np.cos(2.0 * theta)


@dataclass
class ShootingSolution:
    """One feasible extremal leg of the transfer.

    Durations: sigma_end is in shooting time; duration = sigma_end/pi is in
    units of 1/J_ref; the pulse lasts sigma_end/(pi*J_ref) seconds, where
    J_ref is the coupling the leg's time unit is built from.
    """

    k: float
    alpha: float
    beta: float
    theta0: float
    theta_dot0: float
    sigma_end: float
    residual: float
    times: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    theta_end: float
    r_end: np.ndarray
    scan_log: list = field(default_factory=list, repr=False)
    _dense: object = field(default=None, repr=False, compare=False)

    @property
    def duration(self) -> float:
        """Leg duration in scaled time (units of 1/J_ref)."""
        return self.sigma_end / np.pi

    def physical_duration(self, j_ref: float) -> float:
        return self.sigma_end / (np.pi * j_ref)

    def state(self, sigma):
        """(theta, theta', r1, r2, r3) at the given shooting time(s)."""
        return self._dense.sol(sigma)

    def control_samples(self, n_segments: int) -> np.ndarray:
        """Midpoint-sampled theta'(sigma): the control in J_ref units of Hz."""
        mids = (np.arange(n_segments) + 0.5) * self.sigma_end / n_segments
        return self._dense.sol(mids)[1]

    def first_integral_drift(self) -> float:
        """Max |E(sigma) - E(0)| over a dense sample of the trajectory."""
        E = first_integral(self.theta, self.theta_dot, self.k)
        return float(np.abs(E - E[0]).max())


def _closest_approach(param, k, alpha, beta, sigma_max, rtol):
    """Min distance of r(sigma) to the target, and where it occurs."""
    if alpha == 0.0:
        theta0, theta_dot0 = 0.0, param
    else:
        theta0 = param
        theta_dot0 = np.sin(theta0) / np.tan(alpha)
    sol = integrate_euler_lagrange(theta0, theta_dot0, k, sigma_max, alpha, rtol)
    target = np.array([0.0, np.cos(beta), np.sin(beta)])

    def dist(s):
        return float(np.linalg.norm(sol.sol(s)[2:] - target))

    grid = np.linspace(1e-6, sigma_max, 700)
    d = np.linalg.norm(sol.sol(grid)[2:] - target[:, None], axis=0)
    i = int(np.argmin(d))
    res = minimize_scalar(
        dist,
        bounds=(grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x), float(res.fun), sol


def _finish(param, k, alpha, beta, sigma_max, scan_log):
    sigma_end, residual, sol = _closest_approach(param, k, alpha, beta, sigma_max, FINAL_RTOL)
    if alpha == 0.0:
        theta0, theta_dot0 = 0.0, param
    else:
        theta0, theta_dot0 = param, np.sin(param) / np.tan(alpha)
    times = np.linspace(0.0, sigma_end, 801)
    states = sol.sol(times)
    end = sol.sol(sigma_end)
    return ShootingSolution(
        k=k,
        alpha=alpha,
        beta=beta,
        theta0=theta0,
        theta_dot0=theta_dot0,
        sigma_end=sigma_end,
        residual=residual,
        times=times,
        theta=states[0],
        theta_dot=states[1],
        theta_end=float(end[0]),
        r_end=end[2:],
        scan_log=scan_log,
        _dense=sol,
    )


def shoot_three_spin(
    k: float,
    alpha: float = 0.0,
    beta: float = np.pi / 2,
    sigma_max: float = 7.0,
    residual_tol: float = RESIDUAL_TOL,
    guess: float | None = None,
) -> ShootingSolution:
    """Find the shortest feasible extremal from (cos a, sin a, 0) to (0, cos b, sin b).

    Scans the free shooting parameter, keeps interior local minima of the
    closest-approach residual, golden-refines each, and returns the feasible
    dip of minimal duration.  `guess` skips the scan and refines locally
    around a known parameter (used for warm-started parameter sweeps).
    """
    if not 0.0 <= alpha <= np.pi / 2 or not 0.0 <= beta <= np.pi / 2:
        raise ValueError("boundary angles must lie in [0, pi/2]")
    if k <= 0.0:
        raise ValueError("coupling ratio k must be positive")

    def resid(p, rtol=REFINE_RTOL):
        return _closest_approach(p, k, alpha, beta, sigma_max, rtol)[1]

    if guess is not None:
        lo, hi = guess - 0.15, guess + 0.15
        if alpha > 0.0:
            lo, hi = max(lo, 1e-6), min(hi, np.pi / 2 - 1e-6)
        res = minimize_scalar(resid, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        if res.fun < residual_tol:
            return _finish(float(res.x), k, alpha, beta, sigma_max, [])
        # fall through to the full scan

    if alpha == 0.0:
        grid = np.arange(-0.1, 3.2, 0.02)
    else:
        grid = np.arange(0.01, np.pi / 2 - 0.005, 0.02)
    scan = []
    for p in grid:
        sigma, residual, _ = _closest_approach(p, k, alpha, beta, sigma_max, SCAN_RTOL)
        scan.append((p, residual, sigma))

    candidates = []
    for i in range(1, len(scan) - 1):
        if scan[i][1] < scan[i - 1][1] and scan[i][1] < scan[i + 1][1] and scan[i][1] < 0.3:
            res = minimize_scalar(
                resid,
                bracket=(grid[i - 1], grid[i], grid[i + 1]),
                method="golden",
                options={"xtol": 1e-12},
            )
            if res.fun < residual_tol:
                candidates.append(float(res.x))

    solutions = [_finish(p, k, alpha, beta, sigma_max, scan) for p in candidates]
    solutions = [s for s in solutions if s.residual < residual_tol]
    if not solutions:
        raise ShootingError(
            f"no feasible extremal for k={k}, alpha={alpha}, beta={beta} "
            f"within parameter bracket [{grid[0]:.3f}, {grid[-1]:.3f}]"
        )
    return min(solutions, key=lambda s: s.sigma_end)


def write_shooting_log_csv(path, solution: ShootingSolution) -> None:
    """Dump the parameter scan (candidate, closest-approach time, residual)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "sigma_at_closest", "residual"])
        for p, r, s in solution.scan_log:
            w.writerow([p, s, r])


def analytic_pulse_three_spin(j12: float, j23: float, dt: float) -> ShapedPulse:
    """Sampled time-optimal pulse (spin-2 y channel) for a linear 3-spin chain.

    Duration is the shooting solution's sigma_end/(pi*j12); dt must resolve
    the shape with at least 200 segments.
    """
    if j12 <= 0.0 or j23 <= 0.0:
        raise ValueError("couplings must be positive")
    sol = shoot_three_spin(j23 / j12)
    t_p = sol.physical_duration(j12)
    n = int(round(t_p / dt))
    if n < 200:
        raise ValueError(f"dt={dt} gives only {n} segments; need at least 200")
    amplitudes = j12 * sol.control_samples(n)
    return ShapedPulse((ControlChannel(2, "y"),), t_p / n, amplitudes)


@dataclass
class FourSpinSplit:
    """Decomposition of the 4-spin transfer into two 3-spin legs.

    The first leg steers (1,0,0) -> (0, cos gamma, sin gamma) on spins 1-3
    (time unit 1/J12, control on spin 2); hard pulses on spins 2 and 3 then
    map the state onto the second leg's subspace, which is the same reduced
    model on spins 2-4 (time unit 1/J23, control on spin 3) steering
    (cos gamma, sin gamma, 0) -> (0, 0, 1).
    """

    gamma: float
    first_leg: ShootingSolution
    second_leg: ShootingSolution
    connecting_pulses: tuple
    connecting_overlap: float
    total_duration: float


_FIRST_LEG_LABELS = ("xeee", "yzee", "yxee", "yyze")
_SECOND_LEG_LABELS = ("yxee", "yyze", "yyxe", "yyyz")
_LEG_COEFFS = (1.0, 2.0, 2.0, 4.0)


def _subspace_operator(coords, labels):
    rho = np.zeros((16, 16), dtype=complex)
    for c, lab, coeff in zip(coords, labels, _LEG_COEFFS):
        if c != 0.0:
            rho += c * build_operator(ProductOperatorSpec(tuple(lab), coeff), 4)
    return rho


def _rotation_pair(params):
    from .core import rotation_operator

    ph2, fl2, ph3, fl3 = params
    return rotation_operator(4, 2, ph2, fl2) @ rotation_operator(4, 3, ph3, fl3)


def fit_connecting_pulses(first_leg: ShootingSolution, second_leg: ShootingSolution, gamma: float):
    """Hard pulses on spins 2 and 3 joining the two legs.

    Fits (phase, flip) per spin by maximizing the normalized overlap between
    the rotated first-leg end state and the second leg's required initial
    state; the analytic guess (y-rotations by pi/2 - theta_f and theta_0')
    is refined by Nelder-Mead.
    """
    thf = first_leg.theta_end
    r1f, r2f, r3f = first_leg.r_end
    rho_before = _subspace_operator(
        (r1f, r2f * np.cos(thf), r2f * np.sin(thf), r3f), _FIRST_LEG_LABELS
    )
    th0 = second_leg.theta0
    rho_req = _subspace_operator(
        (np.cos(gamma), np.sin(gamma) * np.cos(th0), np.sin(gamma) * np.sin(th0), 0.0),
        _SECOND_LEG_LABELS,
    )
    nrm = np.linalg.norm(rho_before) * np.linalg.norm(rho_req)

    def neg_overlap(params):
        U = _rotation_pair(params)
        return -np.trace(rho_req.conj().T @ U @ rho_before @ U.conj().T).real / nrm

    guess = [np.pi / 2, np.pi / 2 - thf, np.pi / 2, th0]
    res = minimize(
        neg_overlap, guess, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14}
    )
    overlap = -res.fun
    if overlap < 1.0 - 1e-6:
        raise ShootingError(f"connecting-pulse fit stalled at overlap {overlap:.8f}")
    ph2, fl2, ph3, fl3 = res.x
    # snap phases that only wandered off the y-axis by optimizer jitter
    ph2, ph3 = (np.pi / 2 if abs(p - np.pi / 2) < 1e-4 else float(p) for p in (ph2, ph3))
    return (HardPulse(2, float(ph2), float(fl2)), HardPulse(3, float(ph3), float(fl3))), float(
        overlap
    )


def optimize_gamma(j12: float, j23: float, j34: float, xatol: float = 1e-4) -> FourSpinSplit:
    """Minimize the total two-leg duration over the split angle gamma."""
    k1, k2 = j23 / j12, j34 / j23
    cache = {}

    def legs(gamma, guesses=None):
        key = round(gamma, 12)
        if key not in cache:
            g1, g2 = guesses or (None, None)
            a = shoot_three_spin(k1, 0.0, gamma, guess=g1)
            b = shoot_three_spin(k2, gamma, np.pi / 2, guess=g2)
            cache[key] = (a, b)
        return cache[key]

    coarse = np.linspace(0.0, np.pi / 2 * 0.97, 9)
    totals = []
    for g in coarse:
        a, b = legs(g)
        totals.append(a.physical_duration(j12) + b.physical_duration(j23))
    i = int(np.argmin(totals))
    lo = coarse[max(i - 1, 0)]
    hi = coarse[min(i + 1, len(coarse) - 1)]
    warm = [legs(coarse[i])]

    def total(gamma):
        near = warm[-1]
        p1 = near[0].theta_dot0
        p2 = near[1].theta0 if near[1].alpha > 0.0 else near[1].theta_dot0
        g2 = p2 if gamma > 1e-9 else None
        a, b = legs(gamma, (p1, g2))
        warm[-1] = (a, b)
        return a.physical_duration(j12) + b.physical_duration(j23)

    res = minimize_scalar(total, bounds=(lo, hi), method="bounded", options={"xatol": xatol})
    gamma = float(res.x)
    a, b = legs(gamma)
    pulses, overlap = fit_connecting_pulses(a, b, gamma)
    return FourSpinSplit(
        gamma=gamma,
        first_leg=a,
        second_leg=b,
        connecting_pulses=pulses,
        connecting_overlap=overlap,
        total_duration=a.physical_duration(j12) + b.physical_duration(j23),
    )


def analytic_pulse_four_spin(j12: float, j23: float, j34: float, dt: float):
    """Two-channel sampled pulse (spin-2 y, spin-3 y) for a linear 4-spin chain.

    Returns (pulse, split).  The connecting hard pulses are realized as one
    extra grid segment with the rotation spread over dt; phases fitted to be
    in the xy-plane are decomposed onto the y (and, if needed, x) channels.
    """
    if min(j12, j23, j34) <= 0.0:
        raise ValueError("couplings must be positive")
    split = optimize_gamma(j12, j23, j34)
    t1 = split.first_leg.physical_duration(j12)
    t2 = split.second_leg.physical_duration(j23)
    n1 = max(int(round(t1 / dt)), 1)
    n2 = max(int(round(t2 / dt)), 1)
    u1 = j12 * split.first_leg.control_samples(n1)
    u2 = j23 * split.second_leg.control_samples(n2)

    channels = [ControlChannel(2, "y"), ControlChannel(3, "y")]
    need_x = any(abs(np.cos(p.phase) * p.flip_angle) > 1e-9 for p in split.connecting_pulses)
    if need_x:
        channels += [ControlChannel(2, "x"), ControlChannel(3, "x")]
    amp = np.zeros((n1 + 1 + n2, len(channels)))
    amp[:n1, 0] = u1
    amp[n1 + 1 :, 1] = u2
    for p in split.connecting_pulses:
        col_y = 0 if p.spin == 2 else 1
        amp[n1, col_y] = np.sin(p.phase) * p.flip_angle / (2.0 * np.pi * dt)
        if need_x:
            amp[n1, col_y + 2] = np.cos(p.phase) * p.flip_angle / (2.0 * np.pi * dt)
    return ShapedPulse(tuple(channels), dt, amp), split
