"""Run configured filters over whole signals.

:func:`run_filter` is the fast path (one kernel call per filter).
:func:`run_reference` replays the same protocol sample by sample through the
public per-step API and exists to cross-check the kernel.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal

from . import engine
from ._kernels import run_stream
from .filterbank import AnalysisState, analyze, analyze_push


@dataclass(frozen=True)
class Prepared:
    """Subband decomposition of one (x, d) pair, shared by every filter in a trial."""

    Xrev: np.ndarray
    Dsub: np.ndarray
    xrev: np.ndarray
    d: np.ndarray
    x: np.ndarray
    xnorm: np.ndarray
    L: int
    N: int

    @property
    def n_frames(self):
        return self.d.size // self.N


@dataclass
class StreamResult:
    misalignment: np.ndarray  # linear ratio per decimated instant
    mu: np.ndarray
    p: np.ndarray
    resets: np.ndarray
    w: np.ndarray

    @property
    def reset_frames(self):
        return np.flatnonzero(self.resets)


def prepare(bank, x, d, L):
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    N = bank.n_subbands
    X, D = analyze(bank, x, d)
    pad = np.zeros((N, L - 1))
    Xrev = np.ascontiguousarray(np.concatenate([pad, X], axis=1)[:, ::-1])
    xrev = np.ascontiguousarray(np.concatenate([np.zeros(L - 1), x])[::-1])
    # ||[x(t), ..., x(t-L+1)]|| via a running window sum
    c = np.concatenate([[0.0], np.cumsum(x * x)])
    t = np.arange(x.size)
    xnorm = np.sqrt(np.maximum(c[t + 1] - c[np.maximum(t + 1 - L, 0)], 0.0))
    return Prepared(Xrev=Xrev, Dsub=np.ascontiguousarray(D), xrev=xrev, d=d, x=x,
                    xnorm=xnorm, L=L, N=N)


def input_power(x, gamma):
    """Exponentially weighted running mean of ``x**2``."""
    return signal.lfilter([1.0 - gamma], [1.0, -gamma], np.asarray(x, dtype=float) ** 2)


def _delta_frames(cfg, x, N):
    n_frames = x.size // N
    if cfg.delta == "power":
        return np.full(n_frames, float(np.mean(x * x)))
    if cfg.delta_auto:
        return np.ascontiguousarray(input_power(x, cfg.gamma)[N - 1 : n_frames * N : N])
    return np.full(n_frames, cfg.delta_value())


def _sign_frames(sign, T, N):
    n_frames = T // N
    if sign is None:
        return np.ones(n_frames)
    sign = np.asarray(sign, dtype=float)
    if sign.size == T:
        return np.ascontiguousarray(sign[N - 1 : n_frames * N : N])
    if sign.size == n_frames:
        return sign
    raise ValueError("sign must have one entry per sample or per decimated instant")


def run_filter(prep, cfg, truth, sign=None, p0=1.0):
    """Run ``cfg`` over a prepared decomposition.

    ``truth`` is the reference system used for misalignment; ``sign`` (per
    sample or per decimated instant) flips it for non-stationary schedules.
    """
    truth = np.ascontiguousarray(truth, dtype=float)
    if truth.size != prep.L:
        raise ValueError(f"truth has {truth.size} taps, filter has {prep.L}")
    cfg.require_ready()
    N, L = prep.N, prep.L
    rc = cfg.reset
    use_reset = rc is not None
    if rc is None:
        rc = engine.ResetConfig.default(L)
    noise_var_sub = (cfg.noise_var or 0.0) / N
    out = run_stream(
        prep.Xrev, prep.Dsub, prep.xrev, prep.d, prep.xnorm,
        _delta_frames(cfg, prep.x, N), truth, _sign_frames(sign, prep.d.size, N),
        L, N, engine.MODE_CODES[cfg.mode], float(cfg.mu or 0.0), float(cfg.rho),
        float(cfg.theta), float(cfg.gamma), float(cfg.r), float(noise_var_sub),
        float(cfg.mu_max), cfg.msd_case, use_reset, rc.vt, rc.vd, float(rc.epsilon),
        float(rc.phi), rc.period(N), float(p0),
    )
    return StreamResult(*out)


def run_reference(bank, cfg, x, d, L, truth, sign=None, p0=1.0):
    """Sample-by-sample replay through :func:`engine.adapt_step`."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    truth = np.asarray(truth, dtype=float)
    N = bank.n_subbands
    T = x.size
    sgn = _sign_frames(sign, T, N)
    deltas = _delta_frames(cfg, x, N)
    ast = AnalysisState.for_bank(bank, L)
    state = engine.FilterState.initial(L, N, p0)
    rc = cfg.reset
    rs = engine.ResetState.for_config(rc) if rc is not None else None
    line = np.zeros(L)
    mis, mus, ps, resets = [], [], [], []
    for t in range(T):
        line[1:] = line[:-1]
        line[0] = x[t]
        if rs is not None:
            rs.push(d[t] - line @ state.w, np.sqrt(line @ line), rc.epsilon)
        frame = analyze_push(ast, bank, x[t], d[t])
        if frame is None:
            continue
        tau = frame.tau
        decision = engine.NO_RESET
        if rs is not None:
            decision = engine.check_reset(rs, rc, state.mu, tau, N)
        state = engine.adapt_step(state, frame, cfg, decision, delta=deltas[tau])
        diff = sgn[tau] * truth - state.w
        mis.append(diff @ diff / (truth @ truth))
        mus.append(state.mu)
        ps.append(state.p)
        resets.append(decision == engine.RESET)
    return StreamResult(np.array(mis), np.array(mus), np.array(ps),
                        np.array(resets, dtype=np.int8), state.w)
