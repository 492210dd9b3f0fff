"""Command line entry point: nullwave run | sweep | report | check-tensor | verify-background | config-reference."""

import argparse
import json
import sys
from pathlib import Path

from .background import SampleGrid, verify_coefficient_conditions, verify_weak_wave
from .coeffs import CoeffTensor, decompose_null, verify_null_on_cone
from .errors import ConfigError, IoError, NullwaveError
from .runs import PRESETS, RunConfig, config_reference, report, run, sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ASSERT = 0, 2, 3, 4


def load_config(arg, overrides=()):
    """A config file path, or a preset name when no such file exists; `key=value` overrides are applied last."""
    p = Path(arg)
    if p.exists():
        cfg = RunConfig.load(p)
    elif arg in PRESETS:
        cfg = RunConfig.from_preset(arg)
    else:
        raise IoError(f"no config file or preset named '{arg}'")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not key=value", key=item)
        k, v = item.split("=", 1)
        cfg = cfg.with_value(k.strip(), v.strip())
    return cfg


def _cmd_run(args):
    cfg = load_config(args.config, args.set)
    m = run(cfg, args.out)
    d = m.data
    print(f"run {d['run_id']}: {d['status']}" + (f" (t* = {d['t_star']:.6g})" if d.get("t_star") else ""))
    print(f"manifest: {m.path}")
    fit = d.get("diagnostics", {}).get("fits", {}).get("E", {})
    if "exponent" in fit:
        print(f"E decay exponent: {fit['exponent']:.4f} over {fit['window']}")
    if not d["expectation_met"] and d["expect"] == "global":
        print(f"error: expected global existence but status is {d['status']}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_sweep(args):
    cfg = load_config(args.config, args.set)
    vals = [v.strip() for v in args.values.split(",") if v.strip()]
    rep = sweep(cfg, args.axis, vals, args.out, args.workers)
    for x, r in zip(rep.values, rep.runs):
        if r["ok"]:
            print(f"{rep.axis} = {x}: {r['data']['status']} -> {r['manifest']}")
        else:
            print(f"{rep.axis} = {x}: error {r['error']}")
    for name, c in rep.comparisons.items():
        print(f"{name}: {json.dumps(c)}")
    if args.json:
        Path(args.json).write_text(json.dumps(rep.as_dict(), indent=2, default=str))
    return EXIT_OK if all(r["ok"] for r in rep.runs) else EXIT_NUMERICAL


def _manifest_paths(paths):
    out = []
    for p in map(Path, paths):
        if (p / "manifest.json").exists() or p.name == "manifest.json":
            out.append(p)
        elif p.is_dir():
            found = sorted(p.glob("*/manifest.json"))
            if not found:
                raise IoError(f"no manifest.json under {p}")
            out += found
        else:
            raise IoError(f"missing path {p}")
    return out


def _cmd_report(args):
    path, failures = report(_manifest_paths(args.paths), args.out)
    print(f"report: {path}")
    for f in failures:
        print(f"FAIL {f}")
    if args.assert_ and failures:
        return EXIT_ASSERT
    return EXIT_OK


def _cmd_check_tensor(args):
    try:
        t = CoeffTensor.parse(" ".join(args.tensor))
    except ValueError as e:
        raise ConfigError(str(e), key="tensor") from None
    dec = decompose_null(t)
    print(t.to_text())
    print(f"Q0 coefficient: {dec.q0_coefficient:.12g}")
    print(f"antisymmetric (Q_ab) part norm: {float((dec.qab_coefficients ** 2).sum()) ** 0.5:.12g}")
    print(f"non-null residual norm: {dec.residual_norm:.3e}")
    print(f"max |A(xi, xi)| on sampled null cone: {verify_null_on_cone(t):.3e}")
    print("null form: yes" if dec.is_null else "null form: no")
    return EXIT_OK if dec.is_null else 1


def _cmd_verify_background(args):
    cfg = load_config(args.config, args.set)
    spec = cfg.background()
    ww = spec.weak_wave
    grid = SampleGrid.covering(ww, args.t_max, args.r_max, args.nt, args.nr)
    rep = verify_weak_wave(spec, grid)
    print(f"weak-wave constants: delta={ww.delta} alpha={ww.alpha} t0={ww.t0} R1={ww.R1} C0={ww.C0}")
    for c in rep.conditions:
        print(f"  condition {c.name}: worst ratio {c.ratio:.4g} at (t, r) = {c.location} {'ok' if c.passed else 'FAIL'}")
    ok = rep.passed
    if spec.has_l or spec.has_h:
        crep = verify_coefficient_conditions(spec, grid)
        for c in crep.conditions:
            print(f"  {c.name}: worst ratio {c.ratio:.4g} {'ok' if c.passed else 'FAIL'}")
        ok = ok and crep.passed
    print("background verified" if ok else "background verification failed")
    return EXIT_OK if ok else EXIT_ASSERT


def _cmd_config_reference(args):
    sys.stdout.write(config_reference())
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="nullwave", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def with_config(p):
        p.add_argument("config", help="config file, or a preset name")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")

    p = sub.add_parser("run", help="evolve one configuration and write its run directory")
    with_config(p)
    p.add_argument("--out", default=None, help="output root (default: run.output_dir)")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="one run per value of a config key")
    with_config(p)
    p.add_argument("--axis", required=True, help="config key, e.g. h or problem.epsilon")
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--json", default=None, help="write the sweep summary here")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("report", help="tables across run directories")
    p.add_argument("paths", nargs="+", help="run directories, manifests, or an output root")
    p.add_argument("--out", default=None)
    p.add_argument("--assert", dest="assert_", action="store_true", help="exit 4 if any acceptance check fails")
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("check-tensor", help="null-form decomposition of a coefficient tensor")
    p.add_argument("tensor", nargs="+", help="preset (q0, e00, qab:01, -2*q0) or 16 reals")
    p.set_defaults(fn=_cmd_check_tensor)

    p = sub.add_parser("verify-background", help="check the weak-wave conditions of a configured background")
    with_config(p)
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--nt", type=int, default=201)
    p.add_argument("--nr", type=int, default=201)
    p.set_defaults(fn=_cmd_verify_background)

    p = sub.add_parser("config-reference", help="print the table of config keys")
    p.set_defaults(fn=_cmd_config_reference)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except IoError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NullwaveError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
