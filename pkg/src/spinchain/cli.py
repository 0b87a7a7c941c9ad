"""Command-line front end.

Subcommands cover simulation of pulse files, the conventional baseline,
the analytic 3- and 4-spin pulses, gradient optimization and duration
sweeps, DANTE conversion and offset profiles, and plotting.  All results
are written into --out as CSV/JSON plus a manifest.json; outputs are
deterministic for a fixed seed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import ShootingError, analytic_pulse_four_spin, analytic_pulse_three_spin
from .core import (
    ProductOperatorSpec,
    build_operator,
    evolve_pulse,
    load_spin_system,
    transfer_fidelity,
)
from .dante import DanteSequence, dante_convert, offset_profile, write_profile_csv
from .grape import (
    GrapeConfig,
    TOPCurve,
    TOPPoint,
    TransferProblem,
    control_mask_presets,
    grape_optimize,
    top_curve,
    write_top_csv,
)
from .plotting import plot_profile, plot_pulse, plot_top_curve
from .sequences import (
    EventSequence,
    PulseFileError,
    conventional_sequence,
    read_pulse,
    sequence_fidelity,
    simulate_sequence,
    write_pulse,
)
from .core import ShapedPulse

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


def _parse_grid(text):
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}; expected start:stop:step") from exc
    if step <= 0.0 or stop < start:
        raise ConfigError(f"bad grid {text!r}")
    return list(np.arange(start, stop + step / 2, step))


def _transfer_endpoints(n):
    return ProductOperatorSpec.single(n, 1, "x"), ProductOperatorSpec.transfer_target(n)


def _manifest(out, command, args, outputs, seed, wall):
    doc = {
        "command": command,
        "parameters": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "seed": seed,
        "versions": {
            "spinchain": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "outputs": sorted(str(o) for o in outputs),
        "wall_time_s": round(wall, 3),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _write_result(out, payload):
    path = out / "result.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def cmd_simulate(args, out):
    system = load_spin_system(args.system)
    obj = read_pulse(args.pulse)
    initial, target = _transfer_endpoints(system.n)
    rho0 = build_operator(initial, system.n)
    targ = build_operator(target, system.n)
    if isinstance(obj, EventSequence):
        final = simulate_sequence(obj, system, rho0)
    else:
        final = evolve_pulse(rho0, system, obj)
    fid = transfer_fidelity(final, targ, rho0)
    return [_write_result(out, {"fidelity": fid})], EXIT_OK


def cmd_conventional(args, out):
    system = load_spin_system(args.system)
    seq = conventional_sequence(system)
    initial, target = _transfer_endpoints(system.n)
    rho0 = build_operator(initial, system.n)
    fid = sequence_fidelity(seq, system, rho0, build_operator(target, system.n))
    seq_path = out / "sequence.json"
    write_pulse(seq, seq_path)
    res = _write_result(out, {"duration_s": seq.total_duration, "fidelity": fid})
    return [seq_path, res], EXIT_OK


def _emit_pulse(out, pulse, fid, extra=None):
    files = []
    for name, fmt in (("pulse.json", "json"), ("pulse.csv", "csv-shape")):
        path = out / name
        write_pulse(pulse, path, fmt)
        files.append(path)
    svg = out / "pulse.svg"
    plot_pulse(pulse, svg)
    files.append(svg)
    payload = {"duration_s": pulse.duration, "fidelity": fid}
    payload.update(extra or {})
    files.append(_write_result(out, payload))
    return files


def cmd_analytic3(args, out):
    system = load_spin_system(args.system)
    if system.n != 3:
        raise ConfigError("analytic3 needs a 3-spin system")
    j12, j23 = system.couplings[0, 1], system.couplings[1, 2]
    pulse = analytic_pulse_three_spin(j12, j23, args.dt)
    initial, target = _transfer_endpoints(3)
    rho0 = build_operator(initial, 3)
    fid = transfer_fidelity(
        evolve_pulse(rho0, system, pulse), build_operator(target, 3), rho0
    )
    return _emit_pulse(out, pulse, fid), EXIT_OK


def cmd_analytic4(args, out):
    system = load_spin_system(args.system)
    if system.n != 4:
        raise ConfigError("analytic4 needs a 4-spin system")
    j12, j23, j34 = (system.couplings[i, i + 1] for i in range(3))
    pulse, split = analytic_pulse_four_spin(j12, j23, j34, args.dt)
    initial, target = _transfer_endpoints(4)
    rho0 = build_operator(initial, 4)
    fid = transfer_fidelity(
        evolve_pulse(rho0, system, pulse), build_operator(target, 4), rho0
    )
    extra = {
        "gamma_rad": split.gamma,
        "leg_durations_s": [
            split.first_leg.physical_duration(j12),
            split.second_leg.physical_duration(j23),
        ],
        "connecting_flips_deg": [np.degrees(p.flip_angle) for p in split.connecting_pulses],
    }
    return _emit_pulse(out, pulse, fid, extra), EXIT_OK


def _problem(system, mask, reverse=False):
    initial, target = _transfer_endpoints(system.n)
    channels = control_mask_presets(system.n, mask)
    prob = TransferProblem(system, initial, target, channels)
    return prob.reversed() if reverse else prob


def cmd_grape(args, out):
    system = load_spin_system(args.system)
    prob = _problem(system, args.mask, args.reverse)
    config = GrapeConfig(segments=args.segments, restarts=args.restarts, seed=args.seed)
    result = grape_optimize(prob, args.tp, config)
    files = _emit_pulse(out, result.pulse, result.fidelity, {"converged": result.converged})
    return files, EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_top(args, out):
    system = load_spin_system(args.system)
    prob = _problem(system, args.mask, args.reverse)
    config = GrapeConfig(segments=args.segments, restarts=args.restarts, seed=args.seed)
    grid = _parse_grid(args.t_grid)
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            fut = [
                pool.submit(
                    grape_optimize,
                    prob,
                    t,
                    GrapeConfig(
                        segments=args.segments,
                        restarts=args.restarts,
                        seed=args.seed + 7919 * i,
                    ),
                )
                for i, t in enumerate(grid)
            ]
            curve = TOPCurve(
                [TOPPoint(t, f.result().fidelity, args.restarts) for t, f in zip(grid, fut)]
            )
    else:
        curve = top_curve(prob, grid, config)
    csv_path = out / "top.csv"
    write_top_csv(csv_path, curve)
    svg = out / "top.svg"
    plot_top_curve(curve, svg)
    crossing = curve.crossing_time()
    res = _write_result(out, {"crossing_s": crossing})
    return [csv_path, svg, res], EXIT_OK if crossing is not None else EXIT_NONCONVERGED


def cmd_dante(args, out):
    pulse = read_pulse(args.pulse)
    if not isinstance(pulse, ShapedPulse):
        raise ConfigError("dante needs a shaped-pulse file")
    seq = dante_convert(
        pulse, np.radians(args.flip_per_pulse), args.rf_amp, args.pi_amp
    )
    seq_path = out / "dante.json"
    write_pulse(seq.sequence, seq_path)
    res = _write_result(
        out,
        {
            "hard_pulses": len(seq.hard_pulses),
            "flip_angles_deg": [np.degrees(f) for f in seq.flip_angles],
            "pi_blocks": len(seq.pi_blocks),
        },
    )
    return [seq_path, res], EXIT_OK


def cmd_profile(args, out):
    system = load_spin_system(args.system)
    obj = read_pulse(args.pulse)
    if isinstance(obj, ShapedPulse):
        from .sequences import ShapedBlock

        obj = EventSequence((ShapedBlock(obj),))
    initial, target = _transfer_endpoints(system.n)
    prof = offset_profile(
        obj, system, initial, target, args.offset_spin, args.offset_range, args.steps
    )
    csv_path = out / "profile.csv"
    write_profile_csv(csv_path, prof)
    svg = out / "profile.svg"
    plot_profile(prof, svg)
    return [csv_path, svg], EXIT_OK


def cmd_plot(args, out):
    import csv as _csv

    path = Path(args.result)
    svg = out / (path.stem + ".svg")
    if args.kind == "pulse":
        pulse = read_pulse(path)
        plot_pulse(pulse, svg)
    elif args.kind == "topcurve":
        with path.open(newline="") as fh:
            rows = list(_csv.DictReader(fh))
        curve = TOPCurve([TOPPoint(float(r["t_p"]), float(r["fidelity"]), 0) for r in rows])
        plot_top_curve(curve, svg)
    elif args.kind == "profile":
        with path.open(newline="") as fh:
            rows = list(_csv.DictReader(fh))
        from .dante import OffsetProfile

        prof = OffsetProfile(
            [float(r["offset_hz"]) for r in rows], [float(r["fidelity"]) for r in rows]
        )
        plot_profile(prof, svg)
    else:
        raise ConfigError(f"unknown plot kind {args.kind!r}")
    return [svg], EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spinchain", description="Coherence-transfer pulse toolkit for Ising spin chains"
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, system=True):
        if system:
            p.add_argument("--system", required=True, help="spin-system JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("simulate", help="simulate a pulse or sequence file")
    common(p)
    p.add_argument("--pulse", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("conventional", help="delay/hard-pulse cascade baseline")
    common(p)
    p.set_defaults(func=cmd_conventional)

    p = sub.add_parser("analytic3", help="shooting-derived 3-spin pulse")
    common(p)
    p.add_argument("--dt", type=float, default=2e-5)
    p.set_defaults(func=cmd_analytic3)

    p = sub.add_parser("analytic4", help="split-construction 4-spin pulse")
    common(p)
    p.add_argument("--dt", type=float, default=2e-5)
    p.set_defaults(func=cmd_analytic4)

    for name, fn in (("grape", cmd_grape), ("top", cmd_top)):
        p = sub.add_parser(name, help=f"gradient optimization ({name})")
        common(p)
        p.add_argument("--mask", default="interior-y")
        p.add_argument("--segments", type=int, default=None)
        p.add_argument("--restarts", type=int, default=5)
        p.add_argument("--reverse", action="store_true", help="optimize the reversed transfer")
        if name == "grape":
            p.add_argument("--tp", type=float, required=True, help="pulse duration (s)")
        else:
            p.add_argument("--t-grid", required=True, help="start:stop:step in seconds")
        p.set_defaults(func=fn)

    p = sub.add_parser("dante", help="convert a shaped pulse to a hard-pulse train")
    common(p, system=False)
    p.add_argument("--pulse", required=True)
    p.add_argument("--flip-per-pulse", type=float, default=45.0, help="degrees")
    p.add_argument("--rf-amp", type=float, required=True, help="Hz")
    p.add_argument("--pi-amp", type=float, default=None, help="Hz (ideal if omitted)")
    p.set_defaults(func=cmd_dante)

    p = sub.add_parser("profile", help="offset profile of a pulse or sequence")
    common(p)
    p.add_argument("--pulse", required=True)
    p.add_argument("--offset-spin", type=int, default=2)
    p.add_argument("--offset-range", type=float, default=1000.0, help="Hz")
    p.add_argument("--steps", type=int, default=81)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("plot", help="render a result file as SVG")
    common(p, system=False)
    p.add_argument("--result", required=True)
    p.add_argument("--kind", required=True, choices=["pulse", "topcurve", "profile"])
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_IO
    start = time.perf_counter()
    try:
        outputs, status = args.func(args, out)
    except (ConfigError, PulseFileError, ValueError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShootingError as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except FileNotFoundError as exc:
        # a referenced input file that does not exist is a configuration error
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    _manifest(out, args.command, args, outputs, args.seed, time.perf_counter() - start)
    return status


if __name__ == "__main__":
    sys.exit(main())
