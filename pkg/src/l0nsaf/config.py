"""Experiment configuration files and built-in presets.

A config is an INI file with one ``[experiment]`` section (signal, schedule,
ensemble) and one ``[algo:<name>]`` section per filter instance::

    [experiment]
    L = 100
    input = ar1
    flip_at = 0.5
    trials = 20

    [algo:proposed-unknown]
    mode = vss_unknown
    gamma = 0.99
    rho = 1e-4
    r = 1.8
    reset = on
"""

import configparser
from dataclasses import fields, replace
from pathlib import Path

from .engine import FIXED, VSS_KNOWN, VSS_UNKNOWN, AlgoConfig, ResetConfig
from .harness import SignalSpec, TrialSpec


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        loc = f"line {line}: " if line else ""
        super().__init__(loc + message)


_SIGNAL_TYPES = {
    "L": int, "K": int, "input": str, "system": str, "snr_db": float, "N": int,
    "M": int, "T": int, "flip_at": float, "snr_change_at": float,
    "snr_change_db": float, "doubletalk": "pair", "near_end_db": float,
    "unit_norm_system": bool, "far_end_file": str, "near_end_file": str,
    "ir_file": str,
}
_RUN_TYPES = {"trials": int, "seed": int, "p0": float}
_ALGO_TYPES = {
    "mode": str, "rho": float, "theta": float, "gamma": float, "r": float,
    "delta": "delta", "mu": float, "noise_var": float, "mu_max": float,
}
_RESET_TYPES = {"reset": bool, "reset_vt": int, "reset_vd": int,
                "reset_epsilon": float, "reset_phi": float}
EXPERIMENT_KEYS = {**_SIGNAL_TYPES, **_RUN_TYPES}
ALGO_KEYS = {**_ALGO_TYPES, **_RESET_TYPES}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(key, raw, kind):
    raw = raw.strip()
    if raw.lower() in ("", "none") and kind not in (str, bool):
        return None
    try:
        if kind is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        if kind == "pair":
            a, b = (float(s) for s in raw.split(","))
            return (a, b)
        if kind == "delta":
            return raw if raw in ("auto", "power") else float(raw)
        if kind is str:
            return None if raw.lower() == "none" else raw
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}", field=key) from None


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _line_of(text, section, key):
    """Best-effort line number of ``key`` inside ``[section]``."""
    cur = None
    for k, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
        elif cur == section and s.split("=", 1)[0].strip() == key:
            return k
    return None


def _algo_from_items(name, items, L):
    kw = {}
    reset = {}
    for key, raw in items.items():
        if key in _ALGO_TYPES:
            val = _convert(key, raw, _ALGO_TYPES[key])
            if val is not None:
                kw[key] = val
        elif key in _RESET_TYPES:
            reset[key] = _convert(key, raw, _RESET_TYPES[key])
        else:
            raise ConfigError(f"unknown key {key!r} in [algo:{name}]", field=key)
    if reset.pop("reset", False):
        rkw = {k[len("reset_"):]: v for k, v in reset.items() if v is not None}
        vt = rkw.pop("vt", 3 * L)
        vd = rkw.pop("vd", int(round(0.75 * vt)))
        kw["reset"] = _checked(ResetConfig, "reset", vt=vt, vd=vd, **rkw)
    return _checked(AlgoConfig, name, name=name, **kw)


def _checked(cls, where, **kw):
    try:
        return cls(**kw)
    except ValueError as exc:
        raise ConfigError(f"[{where}] {exc}", field=_field_in(str(exc), kw)) from None


def _field_in(message, kw):
    for key in kw:
        if message.startswith(key) or f" {key} " in f" {message} ":
            return key
    return None


def parse_config(text, source="<config>"):
    """Build a :class:`TrialSpec` from INI text."""
    if not text.strip():
        raise ConfigError(f"{source}: empty configuration")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (L, K, N, M, T)
    try:
        cp.read_string(text, source=source)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"{source}: malformed line", line=line) from None
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc.message}", line=getattr(exc, "lineno", None)) from None

    if not cp.has_section("experiment"):
        raise ConfigError(f"{source}: missing [experiment] section", field="experiment")
    try:
        return _spec_from_parser(cp)
    except ConfigError as exc:
        if exc.line is None and exc.field is not None:
            for sec in cp.sections():
                ln = _line_of(text, sec, exc.field)
                if ln is not None:
                    raise ConfigError(str(exc), field=exc.field, line=ln) from None
        raise


def _spec_from_parser(cp):
    exp = cp["experiment"]
    sig_kw, run_kw = {}, {}
    for key, raw in exp.items():
        if key not in EXPERIMENT_KEYS:
            raise ConfigError(f"unknown key {key!r} in [experiment]", field=key)
        val = _convert(key, raw, EXPERIMENT_KEYS[key])
        if val is None:
            continue
        (sig_kw if key in _SIGNAL_TYPES else run_kw)[key] = val
    signal = _checked(SignalSpec, "experiment", **sig_kw)
    algos = []
    for sec in cp.sections():
        if sec == "experiment":
            continue
        if not sec.startswith("algo:") or not sec[5:].strip():
            raise ConfigError(f"unknown section [{sec}]", field=sec)
        algos.append(_algo_from_items(sec[5:].strip(), dict(cp[sec]), signal.L))
    if not algos:
        raise ConfigError("no [algo:<name>] sections", field="algo")
    return _checked(TrialSpec, "experiment", algos=tuple(algos), signal=signal, **run_kw)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    return parse_config(text, source=str(path))


def serialize(spec):
    """INI text that :func:`parse_config` turns back into ``spec``."""
    out = ["[experiment]"]
    for f in fields(SignalSpec):
        out.append(f"{f.name} = {_format(getattr(spec.signal, f.name))}")
    for key in _RUN_TYPES:
        out.append(f"{key} = {_format(getattr(spec, key))}")
    for a in spec.algos:
        out += ["", f"[algo:{a.name}]"]
        for key in _ALGO_TYPES:
            out.append(f"{key} = {_format(getattr(a, key))}")
        out.append(f"reset = {_format(a.reset is not None)}")
        if a.reset is not None:
            for key in ("vt", "vd", "epsilon", "phi"):
                out.append(f"reset_{key} = {_format(getattr(a.reset, key))}")
    return "\n".join(out) + "\n"


def save_config(spec, path):
    path = Path(path)
    try:
        path.write_text(serialize(spec))
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def apply_overrides(spec, overrides):
    """Apply ``key=value`` strings.

    Bare keys and ``experiment.<key>`` target the experiment section;
    ``<algo name>.<key>`` targets one algorithm and ``*.<key>`` all of them.
    """
    text = serialize(spec)
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value", field=item)
        lhs, value = (s.strip() for s in item.split("=", 1))
        target, _, key = lhs.rpartition(".")
        target = target or "experiment"
        if target == "experiment":
            if key not in EXPERIMENT_KEYS:
                raise ConfigError(f"unknown experiment key {key!r}", field=key)
            cp["experiment"][key] = value
            continue
        if key not in ALGO_KEYS:
            raise ConfigError(f"unknown algorithm key {key!r}", field=key)
        names = spec.names if target == "*" else [target]
        for name in names:
            sec = f"algo:{name}"
            if not cp.has_section(sec):
                raise ConfigError(f"no algorithm named {name!r}", field=lhs)
            cp[sec][key] = value
            # a changed L or vt must not leave a stale derived vd behind
            if key == "reset_vt":
                cp[sec].pop("reset_vd", None)
    if any(o.split("=", 1)[0].strip() in ("L", "experiment.L") for o in overrides):
        for sec in cp.sections():
            if sec.startswith("algo:"):
                cp[sec].pop("reset_vt", None)
                cp[sec].pop("reset_vd", None)
    return _spec_from_parser(cp)


# ---------------------------------------------------------------- presets

def _trio(fixed, known, unknown, reset=True, delta=0.01):
    """L0-NSAF baseline plus both proposed variants from table rows.

    ``fixed`` is (mu, rho, theta); ``known``/``unknown`` are
    (gamma, rho, theta, r).
    """
    mu, rho0, th0 = fixed
    rc = "on" if reset else "off"
    algos = {
        "l0-nsaf": dict(mode=FIXED, mu=mu, rho=rho0, theta=th0, delta=delta),
        "proposed-known": dict(mode=VSS_KNOWN, gamma=known[0], rho=known[1],
                               theta=known[2], r=known[3], delta=delta, reset=rc),
        "proposed-unknown": dict(mode=VSS_UNKNOWN, gamma=unknown[0], rho=unknown[1],
                                 theta=unknown[2], r=unknown[3], delta=delta, reset=rc),
    }
    return algos


_SYSID = dict(L=100, K=4, snr_db=30.0, T=80000, trials=20, seed=0)
_ROWS = {
    "fig7a": ((0.17, 1e-5, 5), (0.99, 4e-5, 5, 1.4), (0.99, 1e-4, 5, 1.8)),
    "fig7b": ((0.1, 1e-5, 5), (0.99, 4e-4, 5, 1.0), (0.99, 4e-4, 5, 1.4)),
    "fig8a": ((0.17, 1e-5, 5), (0.99, 1e-4, 5, 1.4), (0.99, 1e-4, 5, 2.5)),
    "fig8b": ((0.1, 1e-5, 5), (0.99, 1e-4, 5, 1.0), (0.99, 1e-4, 5, 1.8)),
    "fig9a": ((0.17, 1e-5, 5), (0.992, 4e-5, 5, 1.4), (0.99, 1e-4, 5, 1.8)),
    "fig9b": ((0.1, 1e-5, 5), (0.992, 4e-4, 5, 1.0), (0.99, 4e-4, 5, 1.4)),
    "fig10a": ((0.17, 1e-5, 5), (0.992, 1e-4, 5, 1.4), (0.99, 1e-5, 5, 2.5)),
    "fig10b": ((0.17, 1e-5, 5), (0.992, 4e-4, 5, 1.0), (0.98, 1e-4, 5, 1.8)),
    "fig14": ((0.35, 1e-6, 2), (0.85, 1e-6, 2, 4.0), (0.96, 1e-6, 2, 11.0)),
    "fig15": ((0.35, 1e-6, 2), (0.85, 1e-6, 2, 4.0), (0.96, 1e-6, 2, 11.0)),
}


def _preset_sections(name):
    row = _ROWS[name]
    fig, sub = name[:-1], name[-1]
    if fig in ("fig7", "fig8", "fig9", "fig10"):
        n = 2 if sub == "a" else 4
        exp = dict(_SYSID, N=n, M=8 * n + 1, input="ar1" if fig in ("fig7", "fig9") else "ar2")
        if fig in ("fig7", "fig8"):
            exp["flip_at"] = 0.5
        else:
            exp.update(snr_change_at=0.5, snr_change_db=20.0)
        return exp, _trio(*row)
    exp = dict(L=128, input="speech", system="echo", N=4, M=33, snr_db=30.0, T=80000,
               flip_at=0.5, trials=1, seed=0)
    if name == "fig15":
        exp["doubletalk"] = (0.375, 0.75)
    return exp, _trio(*row, delta="auto")


PRESETS = tuple(_ROWS)


def preset_text(name):
    if name not in _ROWS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}",
                          field="preset")
    exp, algos = _preset_sections(name)
    out = ["[experiment]"] + [f"{k} = {_format(v)}" for k, v in exp.items()]
    for aname, kw in algos.items():
        out += ["", f"[algo:{aname}]"] + [f"{k} = {_format(v)}" for k, v in kw.items()]
    return "\n".join(out) + "\n"


def preset(name):
    return parse_config(preset_text(name), source=f"preset:{name}")


def with_signal(spec, **kw):
    return replace(spec, signal=replace(spec.signal, **kw))
