"""Command-line front end: ``mmtsim <command> [--config run.json] [--out DIR]``.

Each command writes ``<command>.csv`` with the data and ``<command>.json``
with the fully resolved configuration plus derived quantities. Exit codes:
0 success, 1 invalid input, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from mmtsim import array, circuit, config, design, dynamics, magnetics, modulation, resonator
from mmtsim.errors import NUMERICAL_ERRORS, DecodeAmbiguousError, MMTError

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
COMMANDS = (
    "torque-curve", "resonance", "impedance", "sweep", "eigenmodes",
    "optimize-drs", "dcfield", "modulate", "design",
)


def _fmt(x) -> str:
    return format(float(x), ".12g")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _sidecar(cfg, command, flags, derived) -> str:
    doc = {"command": command, "flags": flags, "config": cfg.model_dump(mode="json"), "derived": derived}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _single_rotor(cfg):
    model, curve = config.resonator_model(cfg)
    table = curve if cfg.drive.torque_law == "grid_table" else None
    return model, curve, table


# commands -------------------------------------------------------------------
# Each returns {filename: text} and a one-line summary.


def cmd_torque_curve(cfg, args):
    grid, dipole = config.torque_curves(cfg)
    fit = resonator.fit_stiffness(grid)
    rows = zip(grid[:, 0], grid[:, 1], dipole[:, 1])
    derived = {"kappa1": fit.kappa1, "kappa3": fit.kappa3, "fit_residual": fit.residual}
    files = {"torque-curve.csv": _csv(["theta_rad", "tau_grid_Nm", "tau_dipole_Nm"], rows)}
    return files, derived, f"kappa1={fit.kappa1:.6g} kappa3={fit.kappa3:.6g}"


def cmd_resonance(cfg, args):
    model, _, _ = _single_rotor(cfg)
    th = np.radians(np.arange(0.0, cfg.magnets.fit_range_deg + 1e-9, 1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", resonator.BackboneValidityWarning)
        w = resonator.backbone_frequency(model, th)
    rows = zip(th, np.atleast_1d(w) / (2 * np.pi))
    f0 = model.omega0 / (2 * np.pi)
    derived = {
        "kappa1": model.kappa1, "kappa3": model.kappa3, "inertia": model.inertia,
        "rotor_moment": model.rotor_moment, "f0_hz": f0, "f_backbone_max_hz": float(np.atleast_1d(w)[-1] / (2 * np.pi)),
    }
    files = {"resonance.csv": _csv(["theta_max_rad", "f_backbone_hz"], rows)}
    return files, derived, f"f0={f0:.4f} Hz"


def cmd_impedance(cfg, args):
    model, _, _ = _single_rotor(cfg)
    cp = config.circuit_params(cfg, model.rotor_moment)
    s = cfg.sweep
    f = np.linspace(min(s.f_start_hz, s.f_stop_hz), max(s.f_start_hz, s.f_stop_hz), s.n_points)
    w = 2 * np.pi * f
    z = circuit.total_impedance(w, cp, model).z_total
    h = circuit.displacement_transfer(w, cp, model)
    p = circuit.average_power(w, cp, model)
    rows = zip(f, z.real, z.imag, np.abs(z), np.abs(h), p)
    wc = circuit.coupled_resonance(cp, model)
    derived = {
        "gamma0": cp.gamma0, "omega0": model.omega0, "omega_coupled": wc,
        "coupled_shift_fraction": wc / model.omega0 - 1,
        "p_avg_at_resonance_W": circuit.average_power_at_resonance(cp, model),
    }
    files = {"impedance.csv": _csv(["freq_hz", "z_re_ohm", "z_im_ohm", "z_abs_ohm", "theta_per_volt_abs", "p_avg_W"], rows)}
    return files, derived, f"coupled shift={derived['coupled_shift_fraction']:.4%}"


def cmd_sweep(cfg, args):
    model, _, table = _single_rotor(cfg)
    s, d = cfg.sweep, cfg.drive
    cp = config.circuit_params(cfg, model.rotor_moment, s.v_rms)
    result = dynamics.frequency_sweep(
        model, cp, s.f_start_hz, s.f_stop_hz, s.n_points, s.direction, s.v_rms,
        d.torque_law, table, d.small_angle, s.carryover, d.steps_per_period, s.max_periods,
        r_x=cfg.circuit.receiver_distance,
    )
    peak = result.peak()
    derived = {
        "f0_hz": model.omega0 / (2 * np.pi), "peak_freq_hz": peak.freq, "peak_b_rx_rms_T": peak.b_rx_rms,
        "peak_theta_max_rad": peak.theta_max, "unconverged_points": int(sum(not p.converged for p in result.points)),
    }
    return {f"sweep_{s.direction}.csv": result.to_csv()}, derived, f"{s.direction} peak at {peak.freq:.4g} Hz"


def cmd_eigenmodes(cfg, args):
    ac = config.array_config(cfg)
    K = array.build_stiffness_matrix(ac, cfg.array.neighbor_depth)
    modes = array.eigenmodes(K, ac.inertias)
    n = ac.n_rotors
    ip = modes.in_phase_index
    rows = [
        [k, modes.frequencies[k] / (2 * np.pi), int(k == ip), array.mode_uniformity(modes.shapes[:, k]), *modes.shapes[:, k]]
        for k in range(n)
    ]
    header = ["mode", "freq_hz", "in_phase", "uniformity"] + [f"shape_{j}" for j in range(n)]
    derived = {"in_phase_index": ip, "in_phase_freq_hz": modes.frequencies[ip] / (2 * np.pi),
               "in_phase_uniformity": array.mode_uniformity(modes.shapes[:, ip])}
    return {"eigenmodes.csv": _csv(header, rows)}, derived, f"in-phase mode {ip} at {derived['in_phase_freq_hz']:.5g} Hz"


def cmd_optimize_drs(cfg, args):
    a = cfg.array
    ac = config.array_config(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", array.BoundaryOptimumWarning)
        opt = array.optimize_stator_distance(ac, a.d_rs_range, a.neighbor_depth)
    grid = np.linspace(*a.d_rs_range, 41)
    rows = [[d, array.in_phase_uniformity(config.array_config(cfg, d), a.neighbor_depth)] for d in grid]
    derived = {"d_rs_opt_m": opt.d_rs, "uniformity_opt": opt.uniformity, "interior": opt.interior,
               "endpoint_uniformity": list(opt.endpoint_values), "warnings": [str(w.message) for w in caught]}
    return {"optimize-drs.csv": _csv(["d_rs_m", "uniformity"], rows)}, derived, f"d_rs*={opt.d_rs * 1e3:.4f} mm"


def cmd_dcfield(cfg, args):
    a = cfg.array
    ac = config.array_config(cfg)
    gam = np.linspace(0, 2 * np.pi, a.n_gamma, endpoint=False)
    single = array.dc_field_pattern(ac, a.dc_radius, gam)
    pair = array.dc_field_pattern(array.opposed_modules(ac, a.module_separation), a.dc_radius, gam)
    rows = zip(np.degrees(gam), single[:, 1], pair[:, 1])
    peak_s, peak_p = np.max(np.abs(single[:, 1])), np.max(np.abs(pair[:, 1]))
    derived = {"single_peak_T": peak_s, "opposed_peak_T": peak_p, "cancellation_ratio": peak_p / peak_s}
    return {"dcfield.csv": _csv(["gamma_deg", "b_single_T", "b_opposed_T"], rows)}, derived, f"opposed/single={peak_p / peak_s:.3g}"


def cmd_modulate(cfg, args):
    model, _, table = _single_rotor(cfg)
    m = cfg.modulation
    cp = config.circuit_params(cfg, model.rotor_moment, m.v_on)
    bits = modulation.BitStream.from_string(m.bits, m.bitrate)
    carrier = None if m.carrier_hz is None else 2 * np.pi * m.carrier_hz
    result, series = modulation.transmit(
        bits, model, cp, m.v_on, carrier, cfg.drive.torque_law, table, m.noise_rms, args.seed,
        cfg.drive.steps_per_period,
    )
    header = list(dynamics.TIMESERIES_COLUMNS) + ["envelope_T"]
    ts = series.to_csv().splitlines()
    lines = [",".join(header)] + [f"{row},{_fmt(e)}" for row, e in zip(ts[1:], result.envelope)]
    derived = {"sent": str(bits), "decoded": "".join(map(str, result.decoded)), "errors": result.errors,
               "threshold_T": result.threshold, "carrier_hz": (carrier or model.omega0) / (2 * np.pi)}
    files = {"modulate.csv": "\n".join(lines) + "\n", "modulate_demod.json": result.to_json() + "\n"}
    return files, derived, f"decoded {derived['decoded']} errors={result.errors}"


def cmd_design(cfg, args):
    d, mg = cfg.design, cfg.magnets
    anchor = d.anchor_hz
    if anchor is None and d.anchor == "grid":
        grid_cfg = cfg.model_copy(update={"magnets": mg.model_copy(update={"torque_source": "grid"})})
        anchor = config.resonator_model(grid_cfg)[0].omega0 / (2 * np.pi)
    res = design.design_rotor(
        d.target_hz, d.family, stator=mg.stator.build(role="stator"), d_rs=mg.d_rs,
        length=mg.rotor.dimensions[-1], br=mg.rotor.residual_flux_density,
        reference_side=mg.rotor.dimensions[0], d_rs_range=d.d_rs_range, size_range=d.size_range,
        n_samples=d.n_samples, anchor_hz=anchor,
    )
    rows = [["d_rs", x, f] for x, f in res.drs_data] + [["size", x, f] for x, f in res.size_data]
    derived = {
        "family": res.family, "target_hz": res.target_hz, "recommended_size_m": res.recommended_size,
        "drs_law": {"prefactor": res.drs_law.prefactor, "exponent": res.drs_law.exponent},
        "size_law": {"prefactor": res.size_law.prefactor, "exponent": res.size_law.exponent},
        "anchor_hz": anchor, "anchor_scale": res.scale,
    }
    files = {"design.csv": _csv(["series", "x_m", "f_hz"], rows)}
    return files, derived, f"{res.family} size {res.recommended_size * 1e3:.3f} mm for {res.target_hz:g} Hz"


HANDLERS = {
    "torque-curve": cmd_torque_curve, "resonance": cmd_resonance, "impedance": cmd_impedance,
    "sweep": cmd_sweep, "eigenmodes": cmd_eigenmodes, "optimize-drs": cmd_optimize_drs,
    "dcfield": cmd_dcfield, "modulate": cmd_modulate, "design": cmd_design,
}


# plumbing -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmtsim", description="Magneto-mechanical transmitter simulator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration (defaults if omitted)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, default=0, help="seed for noise studies")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "sweep":
            p.add_argument("--direction", choices=["up", "down"])
        elif name == "modulate":
            p.add_argument("--bits", help="ASCII 0/1 bit string")
        elif name == "design":
            p.add_argument("--target-hz", type=float)
            p.add_argument("--family", choices=["cuboid", "cylinder"])
            p.add_argument("--anchor-hz", type=float)
    return ap


def _overrides(args) -> dict:
    """Command-line flags as ``{(section, key): value}``."""
    pairs = {
        ("sweep", "direction"): getattr(args, "direction", None),
        ("modulation", "bits"): getattr(args, "bits", None),
        ("design", "target_hz"): getattr(args, "target_hz", None),
        ("design", "family"): getattr(args, "family", None),
        ("design", "anchor_hz"): getattr(args, "anchor_hz", None),
    }
    return {k: v for k, v in pairs.items() if v is not None}


def resolve_config(args) -> config.RunConfig:
    raw = json.loads(args.config.read_text()) if args.config is not None else {}
    if not isinstance(raw, dict):
        raise ValueError("configuration must be a JSON object")
    for (section, key), value in _overrides(args).items():
        raw.setdefault(section, {})
        if isinstance(raw[section], dict):
            raw[section][key] = value
    return config.RunConfig.model_validate(raw)


def _report_validation(exc: ValidationError, stream):
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        print(f"config error at {path}: {err['msg']}", file=stream)


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ValidationError as exc:
        _report_validation(exc, stderr)
        return EXIT_INPUT
    except json.JSONDecodeError as exc:
        print(f"config error at <root>: invalid JSON ({exc})", file=stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"config error at <root>: {exc}", file=stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"cannot read config: {exc}", file=stderr)
        return EXIT_IO

    try:
        files, derived, summary = HANDLERS[args.command](cfg, args)
    except NUMERICAL_ERRORS + (DecodeAmbiguousError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERICAL
    except (MMTError, ValueError) as exc:
        print(f"input error: {exc}", file=stderr)
        return EXIT_INPUT

    flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in ("config", "out")}
    files[f"{args.command}.json"] = _sidecar(cfg, args.command, flags, derived)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(files.items()):
            (args.out / name).write_text(text)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=stderr)
        return EXIT_IO
    print(f"{args.command}: {summary}", file=stdout)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
