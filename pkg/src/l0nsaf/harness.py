"""Trials, Monte-Carlo ensembles, misalignment metrics and result files."""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, field, replace
import json
import math
from pathlib import Path
import time

import numpy as np

from . import signals
from .engine import VSS_KNOWN, AlgoConfig
from .filterbank import make_bank
from .stream import prepare, run_filter

FLOOR_DB = -320.0


def misalignment_db(w0, w):
    """``10 log10(||w0 - w||^2 / ||w0||^2)``, floored at -320 dB."""
    w0 = np.asarray(w0, dtype=float)
    w = np.asarray(w, dtype=float)
    ref = float(w0 @ w0)
    if ref == 0.0:
        raise ValueError("reference system has zero norm")
    diff = w0 - w
    num = float(diff @ diff)
    if num == 0.0:
        return FLOOR_DB
    return max(FLOOR_DB, 10.0 * math.log10(num / ref))


def ratio_to_db(ratio):
    ratio = np.asarray(ratio, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(ratio)
    return np.maximum(out, FLOOR_DB)


@dataclass(frozen=True)
class SignalSpec:
    """What one trial feeds the filters.

    ``input`` is ``ar1``, ``ar2``, ``white``, ``speech`` (synthetic) or
    ``file`` (``far_end_file``). ``system`` is ``sparse`` (``K`` taps),
    ``echo`` (synthetic echo path) or ``file`` (``ir_file``). Event positions
    are fractions of ``T``.
    """

    L: int = 100
    K: int = 4
    input: str = "ar1"
    system: str = "sparse"
    snr_db: float = 30.0
    N: int = 4
    M: int = 33
    T: int = 80000
    flip_at: float | None = None
    snr_change_at: float | None = None
    snr_change_db: float | None = None
    doubletalk: tuple | None = None
    near_end_db: float = 0.0
    unit_norm_system: bool = False
    far_end_file: str | None = None
    near_end_file: str | None = None
    ir_file: str | None = None

    def __post_init__(self):
        if self.input not in ("ar1", "ar2", "white", "speech", "file"):
            raise ValueError(f"unknown input kind {self.input!r}")
        if self.system not in ("sparse", "echo", "file"):
            raise ValueError(f"unknown system kind {self.system!r}")
        if self.L < 1 or self.T < self.N or self.N < 1:
            raise ValueError("need L >= 1, N >= 1 and T >= N")
        if (self.snr_change_at is None) != (self.snr_change_db is None):
            raise ValueError("snr_change_at and snr_change_db go together")
        for name in ("flip_at", "snr_change_at"):
            f = getattr(self, name)
            if f is not None and not 0 <= f < 1:
                raise ValueError(f"{name} must be a fraction in [0, 1)")
        if self.doubletalk is not None:
            a, b = self.doubletalk
            if not 0 <= a <= b <= 1:
                raise ValueError("doubletalk must be (start, end) fractions with start <= end")
        if self.input == "file" and not self.far_end_file:
            raise ValueError("input = file needs far_end_file")
        if self.system == "file" and not self.ir_file:
            raise ValueError("system = file needs ir_file")


@dataclass(frozen=True)
class TrialSpec:
    algos: tuple
    signal: SignalSpec = field(default_factory=SignalSpec)
    trials: int = 1
    seed: int = 0
    p0: float = 1.0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.algos:
            raise ValueError("at least one algorithm is required")
        names = [a.name for a in self.algos]
        if len(set(names)) != len(names) or not all(names):
            raise ValueError("algorithms need unique, non-empty names")

    @property
    def names(self):
        return [a.name for a in self.algos]


@dataclass
class TrialData:
    x: np.ndarray
    d: np.ndarray
    system: signals.SparseSystem
    noise: signals.NoiseSpec
    schedule: signals.Schedule


@dataclass
class ExperimentResult:
    misalignment_db: dict
    mu: dict = field(default_factory=dict)
    p: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def algorithms(self):
        return list(self.misalignment_db)

    @property
    def n_iter(self):
        return len(next(iter(self.misalignment_db.values()), []))


def _input_signal(sig, seed):
    if sig.input == "file":
        x, _rate = signals.load_audio(sig.far_end_file)
        if x.size < sig.T:
            x = np.resize(x, sig.T)
        return x[: sig.T]
    if sig.input == "speech":
        return signals.pseudo_speech(sig.T, seed)
    return signals.INPUTS[sig.input](sig.T, seed)


def _system(sig, seed):
    if sig.system == "file":
        h = signals.load_ir(sig.ir_file)
        if h.length != sig.L:
            raise ValueError(f"{sig.ir_file}: {h.length} taps but L = {sig.L}")
    elif sig.system == "echo":
        h = signals.synthetic_echo_path(sig.L, seed)
    else:
        h = signals.gen_sparse_system(sig.L, sig.K, seed)
    if sig.unit_norm_system:
        c = h.coeffs / np.linalg.norm(h.coeffs)
        h = signals.SparseSystem(c, h.support, h.seed)
    return h


def _near_end(sig, seed, echo_power):
    if sig.near_end_file:
        ne, _rate = signals.load_audio(sig.near_end_file)
        ne = np.resize(ne, sig.T)
    else:
        ne = signals.pseudo_speech(sig.T, seed, stream=signals.STREAM_NEAR_END)
    active = ne[np.abs(ne) > 1e-3]
    p = float(np.mean(active**2)) if active.size else float(np.mean(ne**2))
    if p > 0:
        ne = ne * math.sqrt(echo_power * 10 ** (sig.near_end_db / 10) / p)
    return ne


def make_trial_data(sig, seed):
    """Generate input, system, noise and desired signal for one trial seed."""
    T = sig.T
    x = _input_signal(sig, seed)
    h = _system(sig, seed)
    noise = signals.calibrate_noise(x, h, sig.snr_db)
    eta = noise.generate(T, seed)
    kw = {}
    if sig.flip_at is not None:
        kw["flip_at"] = int(sig.flip_at * T)
    if sig.snr_change_at is not None:
        kw["snr_change"] = (int(sig.snr_change_at * T), sig.snr_change_db)
    if sig.doubletalk is not None:
        a, b = sig.doubletalk
        y = signals.system_output(x, h)
        ne = _near_end(sig, seed, float(np.mean(y * y)))
        kw["doubletalk"] = (int(a * T), int(b * T), ne)
    sched = signals.Schedule(T, **kw)
    d = signals.synthesize_desired(x, h, eta, sched, base_snr_db=sig.snr_db)
    return TrialData(x=x, d=d, system=h, noise=noise, schedule=sched)


def resolve_config(cfg, noise):
    """Fill a missing known-variance ``noise_var`` from the calibrated noise."""
    if cfg.mode == VSS_KNOWN and cfg.noise_var is None:
        return replace(cfg, noise_var=noise.sigma_eta_sq)
    return cfg


def run_trial(spec, trial_index):
    """Run every algorithm of ``spec`` on trial ``trial_index``.

    Returns ``{name: StreamResult}``. Seeds are ``spec.seed + trial_index``.
    """
    seed = spec.seed + trial_index
    sig = spec.signal
    data = make_trial_data(sig, seed)
    bank = make_bank(sig.N, sig.M if sig.N > 1 else 1)
    prep = prepare(bank, data.x, data.d, sig.L)
    sign = data.schedule.sign()
    out = {}
    for cfg in spec.algos:
        out[cfg.name] = run_filter(prep, resolve_config(cfg, data.noise), data.system.coeffs,
                                   sign, p0=spec.p0)
    return out


def _trial_job(args):
    spec, i = args
    return run_trial(spec, i)


def run_monte_carlo(spec, parallel=1, keep_trials=False):
    """Ensemble average over ``spec.trials`` trials.

    Misalignment is averaged as a linear ratio and converted to dB afterwards.
    Reduction happens in trial order, so results do not depend on
    ``parallel``.
    """
    t0 = time.perf_counter()
    jobs = [(spec, i) for i in range(spec.trials)]
    if parallel > 1 and spec.trials > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            per_trial = list(ex.map(_trial_job, jobs))
    else:
        per_trial = [_trial_job(j) for j in jobs]

    mis, mu, p, resets = {}, {}, {}, {}
    for name in spec.names:
        mis[name] = ratio_to_db(np.mean([r[name].misalignment for r in per_trial], axis=0))
        mu[name] = np.mean([r[name].mu for r in per_trial], axis=0)
        p[name] = np.mean([r[name].p for r in per_trial], axis=0)
        resets[name] = [r[name].reset_frames.tolist() for r in per_trial]
    meta = {
        "seed": spec.seed,
        "trials": spec.trials,
        "signal": asdict(spec.signal),
        "algorithms": [config_dict(a) for a in spec.algos],
        "resets": resets,
        "wall_time_s": time.perf_counter() - t0,
    }
    result = ExperimentResult(misalignment_db=mis, mu=mu, p=p, meta=meta)
    if keep_trials:
        result.meta["per_trial"] = per_trial
    return result


def config_dict(cfg):
    d = asdict(cfg)
    return d


def steady_state_db(trace_db, fraction=0.1):
    """Mean level (dB of the mean linear ratio) over the last ``fraction`` of a trace."""
    trace_db = np.asarray(trace_db, dtype=float)
    n = max(1, int(round(fraction * trace_db.size)))
    return float(ratio_to_db(np.mean(10 ** (trace_db[-n:] / 10))))


def window_db(trace_db, start, stop):
    seg = np.asarray(trace_db, dtype=float)[start:stop]
    return float(ratio_to_db(np.mean(10 ** (seg / 10))))


# ---------------------------------------------------------------- files


def emit_csv(result, path):
    path = Path(path)
    extra = bool(result.mu) and bool(result.p)
    header = ["iter", "algorithm", "misalignment_db"] + (["mu", "p"] if extra else [])
    try:
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            for name, trace in result.misalignment_db.items():
                for k, val in enumerate(trace):
                    row = [k, name, repr(float(val))]
                    if extra:
                        row += [repr(float(result.mu[name][k])), repr(float(result.p[name][k]))]
                    wr.writerow(row)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def read_csv(path):
    path = Path(path)
    mis, mu, p = {}, {}, {}
    with path.open(newline="") as fh:
        rd = csv.DictReader(fh)
        has_extra = rd.fieldnames is not None and "mu" in rd.fieldnames
        for row in rd:
            name = row["algorithm"]
            mis.setdefault(name, []).append(float(row["misalignment_db"]))
            if has_extra:
                mu.setdefault(name, []).append(float(row["mu"]))
                p.setdefault(name, []).append(float(row["p"]))
    arr = lambda d: {k: np.array(v) for k, v in d.items()}  # noqa: E731
    return ExperimentResult(misalignment_db=arr(mis), mu=arr(mu), p=arr(p))


def emit_trials_csv(per_trial, path):
    """Raw per-trial dump: the CSV schema plus a leading ``trial`` column."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["trial", "iter", "algorithm", "misalignment_db", "mu", "p"])
        for i, res in enumerate(per_trial):
            for name, r in res.items():
                db = ratio_to_db(r.misalignment)
                for k in range(db.size):
                    wr.writerow([i, k, name, repr(float(db[k])), repr(float(r.mu[k])),
                                 repr(float(r.p[k]))])


def emit_plot_data(result, path, stride=1):
    """JSON with one series per algorithm, decimated by ``stride`` for plotting."""
    path = Path(path)
    payload = {
        "iterations": list(range(0, result.n_iter, stride)),
        "series": {
            name: {
                "misalignment_db": [float(v) for v in trace[::stride]],
                "mu": [float(v) for v in result.mu.get(name, [])[::stride]],
                "p": [float(v) for v in result.p.get(name, [])[::stride]],
            }
            for name, trace in result.misalignment_db.items()
        },
        "meta": {k: v for k, v in result.meta.items() if k != "per_trial"},
    }
    try:
        path.write_text(json.dumps(payload, default=_json_default))
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    return str(o)


# ---------------------------------------------------------------- MSD bound


@dataclass
class BoundCheck:
    empirical: np.ndarray  # ensemble MSD per decimated instant
    tracked: np.ndarray  # ensemble mean of p
    start: int
    coverage: float  # fraction of instants past ``start`` with empirical <= tracked

    def passed(self, required=0.95):
        return self.coverage >= required


def msd_bound_check(trials=200, seed=0, L=32, N=4, M=None, T=4000, snr_db=30.0,
                    mu=0.5, rho=0.0, theta=5.0, K=4, start=None):
    """Compare the ensemble MSD with the tracked known-variance bound.

    White input, fixed step size, unit-norm sparse system so that the initial
    MSD equals ``p(0) = 1``. ``start`` defaults to ``5 L / N`` instants.
    """
    sig = SignalSpec(L=L, K=K, input="white", snr_db=snr_db, N=N,
                     M=M or (8 * N + 1 if N > 1 else 1), T=T, unit_norm_system=True)
    cfg = AlgoConfig(mode="fixed", mu=mu, rho=rho, theta=theta, name="fixed")
    bank = make_bank(sig.N, sig.M)
    emp = None
    trk = None
    for i in range(trials):
        data = make_trial_data(sig, seed + i)
        prep = prepare(bank, data.x, data.d, L)
        c = replace(cfg, noise_var=data.noise.sigma_eta_sq)
        res = run_filter(prep, c, data.system.coeffs)
        # unit-norm truth: the misalignment ratio is the squared deviation
        emp = res.misalignment if emp is None else emp + res.misalignment
        trk = res.p if trk is None else trk + res.p
    emp /= trials
    trk /= trials
    start = int(5 * L / N) if start is None else start
    tail = slice(start + 1, None)
    coverage = float(np.mean(emp[tail] <= trk[tail]))
    return BoundCheck(empirical=emp, tracked=trk, start=start, coverage=coverage)
