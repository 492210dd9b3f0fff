"""Run configuration, presets, single runs, sweeps and report bundles.

Config files are flat `key = value` lines grouped under `[section]` headers.
Keys may also be written dotted (`grid.h = 0.02`) anywhere. A `preset` key
in `[run]` loads the preset's values first; the file overrides them.
"""

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import dyadic_extract, fit_decay, pointwise_decay_scan
from .background import BackgroundSpec, WeakWaveParams, foliation_radius
from .coeffs import CoeffTensor
from .energetics import (MultiplierSpec, energy_series, identity_residual_energy, identity_residual_pweighted,
                         series_hardy_checks)
from .errors import BlowupDetected, ConfigError, InsufficientData, IoError, NullwaveError, WindowError
from .grid import build_grid, slice as leaf, write_slices_csv
from .profiles import make_radial_profile
from .solver import InitialData, ProblemSpec, SchemeOptions, evolve, evolve_commuted, picard_solve


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    kind: str
    default: object
    doc: str
    required: bool = False

    @property
    def dotted(self):
        return f"{self.section}.{self.name}"


SECTIONS = ("run", "problem", "data", "background", "grid", "scheme", "diagnostics")

SCHEMA = [
    Key("run", "preset", "str", "custom", "freewave | nullform | john_blowup | stability | linear_mode | picard | custom"),
    Key("run", "output_dir", "str", "out", "root directory; each run writes out/<run-id>/"),
    Key("run", "seed", "int", 0, "seed for randomised checks"),
    Key("run", "expect", "str", "global", "global | blowup | any; a global run that blows up exits with code 3"),
    Key("run", "theorem", "int", 2, "1 or 2: which decay theorem supplies the target exponent in reports"),
    Key("problem", "A", "tensor", "zero", "quadratic form A: q0, e00, qab:<a><b>, sums like 2*q0 + qab:01, or 16 reals"),
    Key("problem", "B", "tensor", "zero", "background coupling form B, same syntax as A"),
    Key("problem", "cubic", "float", 0.0, "coefficient of the cubic null term (phi_t^2 - phi_r^2) phi_t"),
    Key("problem", "epsilon", "float", None, "data amplitude epsilon", True),
    Key("problem", "alpha", "float", None, "decay parameter alpha (weak-wave constant and Morawetz multiplier)", True),
    Key("problem", "ell", "int", 0, "spherical-harmonic degree (ell > 0 only for linear problems)"),
    Key("data", "phi0", "str", "bump", "profile of phi(0): bump | gaussian | zero"),
    Key("data", "phi1", "str", "zero", "profile of d_t phi(0): bump | gaussian | zero"),
    Key("data", "amp0", "float", 1.0, "amplitude of the phi0 profile (multiplied by epsilon)"),
    Key("data", "amp1", "float", 1.0, "amplitude of the phi1 profile (multiplied by epsilon)"),
    Key("data", "R0", "float", 2.0, "support radius of bump data"),
    Key("data", "power", "int", 6, "bump exponent p in (1 - (r/R0)^2)^p"),
    Key("data", "width", "float", 1.0, "gaussian data width"),
    Key("background", "family", "str", "none", "none | free_wave | static_profile | custom_table"),
    Key("background", "profile", "str", "gauss", "free_wave null profile: gauss | compact"),
    Key("background", "amp", "float", 0.0, "background amplitude"),
    Key("background", "width", "float", 1.0, "background profile width"),
    Key("background", "center", "float", 0.0, "background profile centre"),
    Key("background", "power", "int", 4, "exponent of the compact null profile"),
    Key("background", "path", "str", "", "CSV table for custom_table (t,r,phi,dphi_dt,dphi_dr)"),
    Key("background", "delta", "float", 0.1, "weak-wave constant delta"),
    Key("background", "t0", "float", 2.0, "weak-wave constant t0"),
    Key("background", "R1", "float", 1.0, "weak-wave constant R1 (<= t0)"),
    Key("background", "C0", "float", 1.0, "weak-wave constant C0"),
    Key("background", "l_family", "str", "none", "first-order coefficient family: none | lcond1 | lcond2"),
    Key("background", "l_condition", "str", "lcond1", "condition the L coefficients are checked against"),
    Key("background", "l_scale", "float", 1.0, "scale of the L coefficients"),
    Key("background", "h_family", "str", "none", "quasilinear-type coefficient family: none | h00"),
    Key("background", "h_scale", "float", 1.0, "scale of the h coefficients"),
    Key("grid", "T", "float", None, "final time", True),
    Key("grid", "h", "float", None, "lattice step in u and v", True),
    Key("grid", "R", "float_or_auto", None, "foliation radius; auto = t0 + R0"),
    Key("grid", "margin", "float", 2.0, "extra v beyond (T + R)/2 before the truncation surface v_cut"),
    Key("scheme", "ceiling", "float_or_auto", None, "blowup ceiling; auto = 1e6 max(eps, eps sup data)"),
    Key("scheme", "corrector_passes", "int", 1, "fixed to 1"),
    Key("scheme", "on_blowup", "str", "record", "record | raise"),
    Key("scheme", "mode", "str", "evolve", "evolve | picard"),
    Key("scheme", "picard_iterations", "int", 6, "maximum Picard iterations"),
    Key("diagnostics", "stride", "float", 1.0, "spacing of diagnostic leaves"),
    Key("diagnostics", "p_list", "floats", [1.0, 1.5], "p values for the weighted identity"),
    Key("diagnostics", "checks", "bool", True, "run lemma checks, fits and identities"),
    Key("diagnostics", "fit_window", "floats", [10.0, 180.0], "decay fit window (tau_min, tau_max)"),
    Key("diagnostics", "decay_threshold", "float", -1.0, "report --assert requires fitted E exponent <= this"),
    Key("diagnostics", "gamma", "float", 2.0, "dyadic block ratio"),
    Key("diagnostics", "commuted", "int", 0, "number of commuted companions d_t^k phi to evolve (0-2)"),
    Key("diagnostics", "identity_taus", "floats", [2.0, 8.0], "leaves for the identity residuals"),
    Key("diagnostics", "slice_stride", "float", 10.0, "spacing of leaves exported to slices/"),
    Key("diagnostics", "field_stride", "int", 0, "row stride of the exported field (0 = no export)"),
]
KEYS = {k.dotted: k for k in SCHEMA}

PRESETS = {
    "custom": {},
    "freewave": {
        "problem.epsilon": 1e-3, "problem.alpha": 0.25, "grid.T": 50.0, "grid.h": 0.05, "grid.margin": 27.0,
        "diagnostics.fit_window": [10.0, 45.0],
    },
    "nullform": {
        "problem.A": "q0", "problem.B": "q0", "problem.epsilon": 1e-3, "problem.alpha": 0.25,
        "background.family": "free_wave", "background.amp": 0.1, "grid.T": 200.0, "grid.h": 0.02,
    },
    "john_blowup": {
        "run.expect": "blowup", "problem.A": "e00", "problem.epsilon": 5.0, "problem.alpha": 0.25,
        "data.phi0": "zero", "data.phi1": "bump", "grid.T": 200.0, "grid.h": 0.02, "diagnostics.checks": False,
    },
    "stability": {
        "run.theorem": 1, "problem.A": "q0", "problem.B": "-2*q0", "problem.epsilon": 1e-3, "problem.alpha": 0.25,
        "background.family": "free_wave", "background.amp": 0.05, "background.delta": 0.5,
        "background.t0": 4.0, "background.R1": 4.0, "background.C0": 0.125, "grid.T": 200.0, "grid.h": 0.02,
    },
    "linear_mode": {
        "problem.epsilon": 1e-3, "problem.alpha": 0.25, "problem.ell": 1, "grid.T": 50.0, "grid.h": 0.05,
        "diagnostics.fit_window": [10.0, 45.0],
    },
    "picard": {
        "problem.A": "q0", "problem.B": "q0", "problem.epsilon": 1e-3, "problem.alpha": 0.25,
        "background.family": "free_wave", "background.amp": 0.1, "grid.T": 200.0, "grid.h": 0.02,
        "scheme.mode": "picard",
    },
}


def _parse_value(key, text, line=None):
    k = KEYS[key]
    t = text.strip()
    try:
        if k.kind == "str":
            return t
        if k.kind == "tensor":
            CoeffTensor.parse(t)
            return t
        if k.kind == "float":
            return float(t)
        if k.kind == "int":
            return int(t)
        if k.kind == "bool":
            low = t.lower()
            if low in ("on", "true", "yes", "1"):
                return True
            if low in ("off", "false", "no", "0"):
                return False
            raise ValueError(t)
        if k.kind == "float_or_auto":
            return None if t.lower() in ("auto", "none", "") else float(t)
        if k.kind == "floats":
            return [float(x) for x in t.replace(",", " ").split()]
    except ValueError as e:
        raise ConfigError(f"bad value '{t}' for {key}: {e}", key=k.name, line=line) from None
    raise ConfigError(f"unknown kind for {key}", key=k.name, line=line)


def _format_value(key, val):
    k = KEYS[key]
    if val is None:
        return "auto"
    if k.kind == "bool":
        return "on" if val else "off"
    if k.kind == "floats":
        return ", ".join(repr(float(x)) for x in val)
    if k.kind in ("float", "float_or_auto"):
        return repr(float(val))
    return str(val)


def _resolve_key(section, name, line):
    if "." in name:
        section, name = name.split(".", 1)
    dotted = f"{section}.{name}"
    if section not in SECTIONS:
        raise ConfigError(f"unknown section '{section}'", key=name, line=line)
    if dotted not in KEYS:
        raise ConfigError(f"unknown key '{name}' in [{section}]", key=name, line=line)
    return dotted


def _defaults(preset, line=None):
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset '{preset}'", key="preset", line=line)
    vals = {k.dotted: (list(k.default) if isinstance(k.default, list) else k.default) for k in SCHEMA}
    vals.update({k: (list(v) if isinstance(v, list) else v) for k, v in PRESETS[preset].items()})
    vals["run.preset"] = preset
    return vals


@dataclass
class RunConfig:
    values: dict

    def __post_init__(self):
        for k in SCHEMA:
            if k.required and self.values.get(k.dotted) is None:
                raise ConfigError(f"missing required key '{k.name}' in [{k.section}]", key=k.name)

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def from_preset(cls, name, **overrides):
        vals = _defaults(name)
        for k, v in overrides.items():
            dotted = k.replace("__", ".")
            if dotted not in KEYS:
                raise ConfigError(f"unknown key '{k}'", key=k)
            vals[dotted] = v
        return cls(vals)

    @classmethod
    def parse(cls, text):
        entries = []
        section = "run"
        for lineno, raw in enumerate(text.splitlines(), 1):
            s = raw.split("#", 1)[0].strip()
            if not s:
                continue
            if s.startswith("["):
                if not s.endswith("]"):
                    raise ConfigError(f"malformed section header '{s}'", line=lineno)
                section = s[1:-1].strip()
                if section not in SECTIONS:
                    raise ConfigError(f"unknown section '{section}'", key=section, line=lineno)
                continue
            if "=" not in s:
                raise ConfigError(f"expected 'key = value', got '{s}'", line=lineno)
            name, val = (x.strip() for x in s.split("=", 1))
            entries.append((_resolve_key(section, name, lineno), val, lineno))
        preset, pline = "custom", None
        for key, val, lineno in entries:
            if key == "run.preset":
                preset, pline = val, lineno
        vals = _defaults(preset, pline)
        seen = {}
        for key, val, lineno in entries:
            if key in seen:
                raise ConfigError(f"duplicate key '{key}' (first on line {seen[key]})", key=KEYS[key].name, line=lineno)
            seen[key] = lineno
            vals[key] = _parse_value(key, val, lineno)
        return cls(vals)

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise IoError(f"cannot read config {path}: {e}") from None
        return cls.parse(text)

    def serialize(self):
        out = io.StringIO()
        for sec in SECTIONS:
            out.write(f"[{sec}]\n")
            for k in SCHEMA:
                if k.section == sec:
                    out.write(f"{k.name} = {_format_value(k.dotted, self.values[k.dotted])}\n")
            out.write("\n")
        return out.getvalue()

    def with_value(self, key, val):
        dotted = resolve_axis(key)
        vals = dict(self.values)
        vals[dotted] = _parse_value(dotted, val) if isinstance(val, str) else val
        return RunConfig(vals)

    def run_id(self):
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:12]

    # builders

    def weak_wave(self):
        v = self.values
        return WeakWaveParams(v["background.delta"], v["problem.alpha"], v["background.t0"], v["background.R1"],
                              v["background.C0"])

    def background(self):
        v = self.values
        params = {"profile": v["background.profile"], "amp": v["background.amp"], "width": v["background.width"],
                  "center": v["background.center"], "power": v["background.power"]}
        if v["background.family"] == "custom_table":
            params = {"path": v["background.path"]}
        try:
            return BackgroundSpec(v["background.family"], params, self.weak_wave(), v["background.l_family"],
                                  {"scale": v["background.l_scale"]}, v["background.l_condition"],
                                  v["background.h_family"], {"scale": v["background.h_scale"]})
        except (ValueError, OSError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e), key="family") from None

    def _profile(self, kind, amp):
        v = self.values
        ell = v["problem.ell"]
        try:
            if kind == "bump":
                return make_radial_profile("bump", ell, R0=v["data.R0"], amp=amp, power=v["data.power"])
            if kind == "gaussian":
                return make_radial_profile("gaussian", ell, width=v["data.width"], amp=amp)
            return make_radial_profile(kind, ell)
        except ValueError as e:
            raise ConfigError(str(e), key="phi0") from None

    def problem(self):
        v = self.values
        phi0 = self._profile(v["data.phi0"], v["data.amp0"])
        phi1 = self._profile(v["data.phi1"], v["data.amp1"])
        compact = all(k in ("bump", "zero", "none") for k in (v["data.phi0"], v["data.phi1"]))
        data = InitialData(phi0, phi1, v["data.R0"] if compact else None)
        return ProblemSpec(CoeffTensor.parse(v["problem.A"]), CoeffTensor.parse(v["problem.B"]), self.background(),
                           v["problem.cubic"], data, v["problem.epsilon"], v["problem.ell"])

    def radius(self):
        R = self.values["grid.R"]
        return foliation_radius(self.weak_wave(), self.values["data.R0"]) if R is None else R

    def grid(self):
        v = self.values
        compact = all(k in ("bump", "zero", "none") for k in (v["data.phi0"], v["data.phi1"]))
        return build_grid(v["grid.T"], self.radius(), v["grid.h"], v["problem.ell"], v["grid.margin"],
                          R0=v["data.R0"] if compact else None)

    def scheme(self):
        v = self.values
        return SchemeOptions(v["scheme.ceiling"], v["scheme.corrector_passes"], v["scheme.on_blowup"])


def resolve_axis(axis):
    """Dotted key for an axis name ('h' -> 'grid.h'); the short name must be unambiguous."""
    if axis in KEYS:
        return axis
    hits = [k.dotted for k in SCHEMA if k.name == axis]
    if len(hits) != 1:
        raise ConfigError(f"axis '{axis}' matches {hits or 'no key'}", key=axis)
    return hits[0]


def config_reference():
    """Markdown table of every config key."""
    lines = ["| key | default | description |", "|---|---|---|"]
    for k in SCHEMA:
        d = "required" if k.required else _format_value(k.dotted, k.default)
        doc = k.doc.replace("|", "\\|")
        lines.append(f"| `{k.dotted}` | `{d}` | {doc} |")
    return "\n".join(lines) + "\n"


# single run


def _sha256(path):
    hsh = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            hsh.update(chunk)
    return hsh.hexdigest()


def _atomic_json(path, obj):
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
    os.replace(tmp, path)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not serialisable: {type(o)}")


def _finite(x):
    return None if x is None or not np.isfinite(x) else float(x)


def target_exponent(theorem, alpha):
    """Energy decay rate -(1 + alpha/2) stated for the class; theorem 1 uses the same form with its alpha."""
    return -(1.0 + 0.5 * alpha)


def _diagnostics(cfg, field, out, files):
    v = cfg.values
    alpha = v["problem.alpha"]
    diag = {}
    commuted = []
    if v["diagnostics.commuted"] and field.completed and field.problem.is_linear:
        lower = []
        for k in range(1, min(v["diagnostics.commuted"], 2) + 1):
            c = evolve_commuted(field.problem, field, k, lower)
            commuted.append(c)
            lower = [c]
    try:
        series = energy_series(field, alpha=alpha, stride=v["diagnostics.stride"], commuted=commuted or None)
    except NullwaveError as e:
        diag["series_error"] = str(e)
        return diag
    series.meta["run_id"] = cfg.run_id()
    series.write(out / "energy.csv", out / "energy.json")
    files += ["energy.csv", "energy.json"]
    diag["series"] = {"n_leaves": len(series.taus), "tau_max": float(series.taus[-1])}

    slice_taus = [t for t in series.taus if abs(t / v["diagnostics.slice_stride"] - round(t / v["diagnostics.slice_stride"])) < 1e-9]
    write_slices_csv([leaf(field, t) for t in slice_taus], out / "slices" / "slices.csv")
    files.append("slices/slices.csv")

    if not v["diagnostics.checks"]:
        return diag

    rep = series_hardy_checks(field, series, MultiplierSpec.morawetz(alpha))
    fails = rep.failures()
    diag["lemma_checks"] = {"passed": rep.passed, "n_entries": len(rep.entries), "truncated": rep.truncated,
                            "failures": [e.as_dict() for e in fails[:20]],
                            "worst_ratio": _worst_ratios(rep)}

    win = tuple(v["diagnostics.fit_window"])
    fits = {}
    for q in ("E", "g1", "g1p2a", "D2a_F_cum_tail"):
        try:
            fits[q] = fit_decay(series, q, win).as_dict()
        except InsufficientData as e:
            fits[q] = {"error": str(e)}
    diag["fits"] = fits
    diag["target_exponent"] = target_exponent(v["run.theorem"], alpha)
    diag["decay_threshold"] = v["diagnostics.decay_threshold"]

    try:
        cert = dyadic_extract(series, "gbar2a", v["diagnostics.gamma"])
        diag["dyadic"] = {"passed": all(c.passed for c in cert), "blocks": [c.as_dict() for c in cert]}
    except WindowError as e:
        diag["dyadic"] = {"error": str(e)}

    t1, t2 = v["diagnostics.identity_taus"]
    ids = {}
    if t2 <= series.taus[-1]:
        for name, X in (("energy_T", MultiplierSpec.T()), ("energy_morawetz", MultiplierSpec.morawetz(alpha))):
            ids[name] = identity_residual_energy(field, t1, t2, X).as_dict()
        for p in v["diagnostics.p_list"]:
            ids[f"pweighted_p{p:g}"] = identity_residual_pweighted(field, t1, t2, p).as_dict()
    diag["identities"] = ids

    if field.completed:
        pw = pointwise_decay_scan(field, alpha, commuted[:1] or None)
        diag["pointwise"] = pw.as_dict()
    return diag


def _worst_ratios(rep):
    worst = {}
    for e in rep.entries:
        name = e.name.split(":", 1)[-1]
        q = e.lhs / e.bound if e.bound > 0 else (0.0 if e.lhs <= e.tolerance else math.inf)
        worst[name] = max(worst.get(name, 0.0), q)
    return worst


@dataclass
class RunManifest:
    data: dict
    path: Path = None

    @property
    def status(self):
        return self.data["status"]

    def __getitem__(self, key):
        return self.data[key]


def run(config, out_root=None):
    """Evolve, run diagnostics and write out/<run-id>/{manifest.json, energy.csv, slices/, fields/, report.md}."""
    cfg = config
    v = cfg.values
    start = time.time()
    run_id = cfg.run_id()
    out = Path(out_root if out_root is not None else v["run.output_dir"]) / run_id
    (out / "slices").mkdir(parents=True, exist_ok=True)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.serialize())
    files = ["config.txt"]
    manifest = {
        "run_id": run_id,
        "preset": v["run.preset"],
        "config": cfg.serialize(),
        "code_version": __version__,
        "expect": v["run.expect"],
    }
    problem = cfg.problem()
    grid = cfg.grid()
    scheme = cfg.scheme()
    manifest["grid"] = grid.as_dict()
    manifest["grid_sha256"] = hashlib.sha256(json.dumps(grid.as_dict(), sort_keys=True).encode()).hexdigest()
    field_ = None
    try:
        if v["scheme.mode"] == "picard":
            rep = picard_solve(problem, grid, v["scheme.picard_iterations"], tol=0.0, scheme=scheme,
                               raise_on_failure=False)
            field_ = rep.field
            manifest["picard"] = {"history": rep.history, "ratios": [_finite(x) for x in rep.ratios()]}
        elif v["scheme.mode"] == "evolve":
            field_ = evolve(problem, grid, scheme)
        else:
            raise ConfigError(f"unknown mode '{v['scheme.mode']}'", key="mode")
        manifest["status"] = field_.status
        manifest["t_star"] = field_.t_star
        manifest["location"] = list(field_.location) if field_.location else None
    except BlowupDetected as e:
        manifest["status"] = "blowup_detected"
        manifest["t_star"] = e.t_star
        manifest["location"] = list(e.location)
    except NullwaveError as e:
        if isinstance(e, ConfigError):
            raise
        manifest["status"] = "failed"
        manifest["error"] = f"{type(e).__name__}: {e}"

    if field_ is not None:
        manifest["field_sha256"] = field_.content_hash()
        manifest["n_done"] = field_.n_done
        if v["diagnostics.field_stride"] > 0:
            field_.export(out / "fields" / "field.csv", out / "fields" / "field.json", v["diagnostics.field_stride"])
            files += ["fields/field.csv", "fields/field.json"]
        try:
            manifest["diagnostics"] = _diagnostics(cfg, field_, out, files)
        except NullwaveError as e:
            manifest["diagnostics"] = {"error": f"{type(e).__name__}: {e}"}

    manifest["expectation_met"] = _expectation_met(manifest)
    (out / "report.md").write_text(run_report_markdown(manifest))
    files.append("report.md")
    manifest["files"] = {f: {"sha256": _sha256(out / f), "bytes": (out / f).stat().st_size} for f in files}
    manifest["wall_time_s"] = round(time.time() - start, 3)
    manifest["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    _atomic_json(out / "manifest.json", manifest)
    return RunManifest(manifest, out / "manifest.json")


def _expectation_met(m):
    exp = m.get("expect", "any")
    if exp == "global":
        return m.get("status") == "completed"
    if exp == "blowup":
        return m.get("status") == "blowup_detected"
    return True


def _fmt(x, spec=".4g"):
    if x is None:
        return "-"
    if isinstance(x, float):
        return format(x, spec)
    return str(x)


def run_report_markdown(m):
    lines = [f"# Run {m['run_id']} ({m['preset']})", ""]
    lines.append(f"- status: {m.get('status')} (expected {m.get('expect')})")
    if m.get("t_star") is not None:
        lines.append(f"- t*: {m['t_star']:.6g} at (u, v) = {m.get('location')}")
    g = m.get("grid", {})
    lines.append(f"- grid: h = {g.get('h')}, T = {g.get('T')}, R = {g.get('R')}, v_cut = {g.get('v_max')}")
    if "picard" in m:
        lines.append(f"- Picard sup-differences: {', '.join(f'{x:.3e}' for x in m['picard']['history'])}")
    d = m.get("diagnostics", {})
    if "fits" in d:
        lines += ["", "## Decay fits", "", "| quantity | window | exponent | r2 |", "|---|---|---|---|"]
        for q, f in d["fits"].items():
            if "error" in f:
                lines.append(f"| {q} | - | {f['error']} | - |")
            else:
                lines.append(f"| {q} | {f['window']} | {f['exponent']:.4f} | {f['r2']:.4f} |")
        lines.append("")
        lines.append(f"Target exponent (declared theorem): {d['target_exponent']:.4f}; "
                     f"assert threshold: {d['decay_threshold']}")
    if "lemma_checks" in d:
        lc = d["lemma_checks"]
        lines += ["", "## Lemma checks", "", f"passed: {lc['passed']} over {lc['n_entries']} entries "
                  f"(truncated flux flag: {lc['truncated']})", "", "| check | worst lhs/bound |", "|---|---|"]
        for k, q in lc["worst_ratio"].items():
            lines.append(f"| {k} | {q:.4g} |")
    if d.get("identities"):
        lines += ["", "## Identity residuals", "", "| identity | residual | largest term |", "|---|---|---|"]
        for k, r in d["identities"].items():
            big = max(abs(x) for x in r["terms"].values()) if r["terms"] else 0.0
            lines.append(f"| {k} | {r['residual']:.3e} | {big:.3e} |")
    if "pointwise" in d:
        pw = d["pointwise"]
        lines += ["", "## Pointwise constants", "", f"- sup |phi|(1+r) = {pw['C_phi']:.4g} at (t, r) = {pw['loc_phi']}",
                  f"- sup derivative bound = {pw['C_dphi']:.4g} at (t, r) = {pw['loc_dphi']}"]
    if "dyadic" in d and "passed" in d["dyadic"]:
        lines += ["", f"Dyadic certificates passed: {d['dyadic']['passed']} ({len(d['dyadic']['blocks'])} blocks)"]
    return "\n".join(lines) + "\n"


# sweeps


def _run_one(args):
    cfg_text, out_root = args
    cfg = RunConfig.parse(cfg_text)
    try:
        m = run(cfg, out_root)
        return {"ok": True, "manifest": str(m.path), "data": dict(m.data, _dir=str(m.path.parent))}
    except Exception as e:
        return {"ok": False, "error": f"{type(e).__name__}: {e}"}


def observed_orders(hs, errs):
    """log2-type orders log(e_i / e_{i+1}) / log(h_i / h_{i+1}) and the least-squares slope."""
    hs = np.asarray(hs, float)
    e = np.asarray(errs, float)
    pair = [float(np.log(e[i] / e[i + 1]) / np.log(hs[i] / hs[i + 1])) if e[i + 1] > 0 and e[i] > 0 else math.inf
            for i in range(len(e) - 1)]
    ok = e > 0
    slope = float(np.polyfit(np.log(hs[ok]), np.log(e[ok]), 1)[0]) if np.sum(ok) >= 2 else math.nan
    return pair, slope


@dataclass
class SweepReport:
    axis: str
    values: list
    runs: list
    comparisons: dict = field(default_factory=dict)

    def as_dict(self):
        return {"axis": self.axis, "values": self.values, "runs": [
            {k: r[k] for k in r if k != "data"} | {"status": r.get("data", {}).get("status")} for r in self.runs],
            "comparisons": self.comparisons}


def sweep(base, axis, values, out_root=None, workers=None):
    """One run per axis value (bounded process pool); failures are recorded per run."""
    key = resolve_axis(axis)
    values = [_parse_value(key, v) if isinstance(v, str) else v for v in values]
    if not values:
        return SweepReport(key, [], [])
    cfgs = [base.with_value(key, x) for x in values]
    jobs = [(c.serialize(), out_root) for c in cfgs]
    workers = workers or min(len(jobs), os.cpu_count() or 1, 4)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    rep = SweepReport(key, values, results)
    rep.comparisons = _compare(key, values, results)
    return rep


def _compare(key, values, results):
    ok = [(x, r["data"]) for x, r in zip(values, results) if r["ok"]]
    comp = {}
    if key == "grid.h" and len(ok) >= 2:
        ok.sort(key=lambda p: -p[0])
        hs = [p[0] for p in ok]
        names = set.intersection(*[set(p[1].get("diagnostics", {}).get("identities", {})) for p in ok])
        for name in sorted(names):
            errs = [p[1]["diagnostics"]["identities"][name]["residual"] for p in ok]
            pair, slope = observed_orders(hs, errs)
            comp[f"order_{name}"] = {"h": hs, "residuals": errs, "pairwise": pair, "fit": slope}
    if key == "problem.epsilon" and len(ok) >= 2:
        ok.sort(key=lambda p: p[0])
        e_small, e_big = ok[0], ok[-1]
        ratio = _amplitude_ratio(e_small[1], e_big[1])
        comp["epsilon_scaling"] = {"epsilons": [e_small[0], e_big[0]], "E_ratio": ratio,
                                   "expected": (e_big[0] / e_small[0]) ** 2}
    return comp


def _amplitude_ratio(m_small, m_big):
    """Median ratio of E over the fit window between two runs on the same leaves."""
    a = _series_from_manifest(m_small)
    b = _series_from_manifest(m_big)
    if a is None or b is None:
        return None
    lo, hi = _fit_window(m_small)
    m = (a["tau"] >= lo) & (a["tau"] <= hi) & (a["E"] > 0) & (b["E"] > 0)
    if not np.any(m):
        return None
    return float(np.median(b["E"][m] / a["E"][m]))


def _fit_window(m):
    for line in m["config"].splitlines():
        if line.startswith("fit_window"):
            vals = [float(x) for x in line.split("=", 1)[1].replace(",", " ").split()]
            return vals[0], vals[1]
    return 10.0, math.inf


def _series_from_manifest(m):
    d = m.get("_dir")
    if d is None:
        return None
    p = Path(d) / "energy.csv"
    if not p.exists():
        return None
    return np.genfromtxt(p, delimiter=",", names=True)


# reports over several runs


def load_manifest(path):
    """Load manifest.json (or a run directory) and verify its file inventory."""
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    if not p.exists():
        raise IoError(f"missing manifest {p}")
    try:
        m = json.loads(p.read_text())
    except (OSError, ValueError) as e:
        raise IoError(f"unreadable manifest {p}: {e}") from None
    d = p.parent
    for f, info in m.get("files", {}).items():
        fp = d / f
        if not fp.exists():
            raise IoError(f"missing file {fp} listed in {p}")
        if _sha256(fp) != info["sha256"]:
            raise IoError(f"stale file {fp}: content hash differs from {p}")
    m["_dir"] = str(d)
    return m


def assert_failures(m):
    """Acceptance failures of one run for `report --assert`."""
    out = []
    if not m.get("expectation_met", True):
        out.append(f"{m['run_id']}: status {m.get('status')} but expected {m.get('expect')}")
    d = m.get("diagnostics", {})
    lc = d.get("lemma_checks")
    if lc is not None and not lc["passed"]:
        out.append(f"{m['run_id']}: lemma checks failed ({len(lc['failures'])} shown)")
    fit = d.get("fits", {}).get("E")
    if m.get("expect") == "global" and fit and "exponent" in fit and fit["exponent"] > d.get("decay_threshold", -1.0):
        out.append(f"{m['run_id']}: E exponent {fit['exponent']:.3f} > {d.get('decay_threshold')}")
    dy = d.get("dyadic", {})
    if dy.get("passed") is False:
        out.append(f"{m['run_id']}: dyadic certificates failed")
    return out


def report(paths, out_dir=None):
    """Markdown + CSV bundle across runs; returns (markdown path, failures)."""
    if not paths:
        raise IoError("report needs at least one manifest")
    ms = [load_manifest(p) for p in paths]
    out = Path(out_dir) if out_dir else Path(ms[0]["_dir"]).parent / "report"
    out.mkdir(parents=True, exist_ok=True)

    decay_rows = []
    for m in ms:
        d = m.get("diagnostics", {})
        for q, f in d.get("fits", {}).items():
            if "exponent" in f:
                tgt = d.get("target_exponent")
                decay_rows.append([m["run_id"], m["preset"], q, f"{f['window'][0]:g}-{f['window'][1]:g}",
                                   f"{f['exponent']:.6g}", f"{tgt:.6g}", f"{tgt - f['exponent']:.6g}"])
    id_rows = []
    for m in ms:
        for name, r in m.get("diagnostics", {}).get("identities", {}).items():
            id_rows.append([m["run_id"], m["preset"], m["grid"]["h"], name, f"{r['residual']:.6e}"])
    lemma_rows = []
    for m in ms:
        lc = m.get("diagnostics", {}).get("lemma_checks")
        if lc:
            for k, q in lc["worst_ratio"].items():
                lemma_rows.append([m["run_id"], m["preset"], k, f"{q:.6g}", lc["passed"]])

    def write_csv(name, header, rows):
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    write_csv("decay.csv", ["run", "preset", "quantity", "window", "exponent", "target", "margin"], decay_rows)
    write_csv("identities.csv", ["run", "preset", "h", "identity", "residual"], id_rows)
    write_csv("lemmas.csv", ["run", "preset", "check", "worst_ratio", "passed"], lemma_rows)

    md = ["# nullwave report", "", "## Runs", "", "| run | preset | status | expected | t* | wall time (s) |",
          "|---|---|---|---|---|---|"]
    for m in ms:
        md.append(f"| {m['run_id']} | {m['preset']} | {m.get('status')} | {m.get('expect')} | "
                  f"{_fmt(m.get('t_star'))} | {m.get('wall_time_s')} |")
    if decay_rows:
        md += ["", "## Decay", "", "| run | preset | quantity | window | exponent | target | margin |",
               "|---|---|---|---|---|---|---|"]
        md += ["| " + " | ".join(str(x) for x in r) + " |" for r in decay_rows]
    conv = _convergence_table(ms)
    if conv:
        md += ["", "## Identity residual convergence", "", "| preset | identity | h values | residuals | orders |",
               "|---|---|---|---|---|"]
        md += conv
    elif id_rows:
        md += ["", "## Identity residuals", "", "| run | preset | h | identity | residual |", "|---|---|---|---|---|"]
        md += ["| " + " | ".join(str(x) for x in r) + " |" for r in id_rows]
    if lemma_rows:
        md += ["", "## Lemma checks", "", "| run | preset | check | worst lhs/bound | all passed |",
               "|---|---|---|---|---|"]
        md += ["| " + " | ".join(str(x) for x in r) + " |" for r in lemma_rows]
    glob = [m for m in ms if m.get("status") == "completed"]
    blow = [m for m in ms if m.get("status") == "blowup_detected"]
    if glob and blow:
        md += ["", "## Global existence vs blowup", "", "| run | preset | A | status | t* | E exponent |",
               "|---|---|---|---|---|---|"]
        for m in glob + blow:
            a = next((ln.split("=", 1)[1].strip() for ln in m["config"].splitlines() if ln.startswith("A =")), "?")
            fit = m.get("diagnostics", {}).get("fits", {}).get("E", {})
            md.append(f"| {m['run_id']} | {m['preset']} | {a} | {m['status']} | {_fmt(m.get('t_star'))} | "
                      f"{_fmt(fit.get('exponent'))} |")
    for m in ms:
        if m["preset"] == "freewave" and m.get("diagnostics", {}).get("identities"):
            r = m["diagnostics"]["identities"].get("energy_T")
            if r:
                md += ["", f"Free wave {m['run_id']}: conservation residual {r['residual']:.3e} "
                       f"(flux scale {max(abs(x) for x in r['terms'].values()):.3e})"]
            e_after = _energy_after_exit(m)
            if e_after is not None:
                md.append(f"Free wave {m['run_id']}: max E after the pulse leaves the disc = {e_after:.3e}")
    failures = [f for m in ms for f in assert_failures(m)]
    md += ["", "## Assertions", ""]
    md += [f"- FAIL {f}" for f in failures] or ["- all assertions pass"]
    path = out / "report.md"
    path.write_text("\n".join(md) + "\n")
    return path, failures


def _energy_after_exit(m):
    s = _series_from_manifest(m)
    if s is None:
        return None
    R, R0 = m["grid"]["R"], 2.0
    for line in m["config"].splitlines():
        if line.startswith("R0 ="):
            R0 = float(line.split("=", 1)[1])
    mask = s["tau"] >= R + R0 + 1
    return float(np.max(s["E"][mask])) if np.any(mask) else None


def _convergence_table(ms):
    groups = {}
    for m in ms:
        ids = m.get("diagnostics", {}).get("identities", {})
        for name, r in ids.items():
            groups.setdefault((m["preset"], name), []).append((m["grid"]["h"], r["residual"]))
    rows = []
    for (preset, name), pts in sorted(groups.items()):
        hs = sorted({p[0] for p in pts}, reverse=True)
        if len(hs) < 2:
            continue
        pts = sorted(pts, key=lambda p: -p[0])
        pair, _ = observed_orders([p[0] for p in pts], [p[1] for p in pts])
        rows.append(f"| {preset} | {name} | {', '.join(f'{p[0]:g}' for p in pts)} | "
                    f"{', '.join(f'{p[1]:.3e}' for p in pts)} | {', '.join(f'{o:.2f}' for o in pair)} |")
    return rows
