"""Variable step-size L0-constrained NSAF: step sizes, MSD tracking, reset.

The ``_*`` functions are the numeric cores shared with the streaming kernel
in :mod:`l0nsaf._kernels`; the public functions wrap them with validation and
operate on :class:`~l0nsaf.filterbank.SubbandFrame` objects.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from ._jit import njit
from .sparsity import _attractor_parts, attractor_decomposition

FIXED = "fixed"
VSS_KNOWN = "vss_known"
VSS_UNKNOWN = "vss_unknown"
MODES = (FIXED, VSS_KNOWN, VSS_UNKNOWN)
MODE_CODES = {FIXED: 0, VSS_KNOWN: 1, VSS_UNKNOWN: 2}

# Saturation for per-subband ratios and for p. Near-silent frames with a
# vanishing delta would otherwise overflow to inf and then produce 0 * inf.
RATIO_CAP = 1e300
P_CAP = 1e300

NO_RESET = "none"
RESET = "reset"


@dataclass(frozen=True)
class ResetConfig:
    vt: int
    vd: int
    epsilon: float = 1e-6
    phi: float = 1e-3

    def __post_init__(self):
        if not (self.vt > self.vd > 0):
            raise ValueError(f"need vt > vd > 0, got vt={self.vt}, vd={self.vd}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.phi > 0:
            raise ValueError("phi must be > 0")

    @classmethod
    def default(cls, L, **kw):
        vt = 3 * L
        return cls(vt=vt, vd=int(round(0.75 * vt)), **kw)

    def period(self, N):
        """Decimated steps between checks."""
        return max(1, -(-self.vt // N))


@dataclass(frozen=True)
class AlgoConfig:
    """Parameters of one filter instance.

    ``noise_var`` is the fullband noise variance; each subband sees
    ``noise_var / N``. ``vss_known`` needs it before running (the harness
    fills it from the calibrated noise when left as ``None``). In ``fixed``
    mode it selects the known-variance MSD tracker when given, the
    moving-average tracker otherwise. ``delta`` may be
    the string ``"auto"`` to track the input power with forgetting ``gamma``,
    or ``"power"`` for the mean input power over the whole run.
    """

    mode: str = VSS_UNKNOWN
    rho: float = 1e-4
    theta: float = 5.0
    gamma: float = 0.99
    r: float = 1.0
    delta: float | str = 0.01
    mu: float | None = None
    noise_var: float | None = None
    mu_max: float = 1.0
    reset: ResetConfig | None = None
    name: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.rho >= 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if not self.theta > 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.r >= 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if isinstance(self.delta, str):
            if self.delta not in ("auto", "power"):
                raise ValueError(f"delta must be a number, 'auto' or 'power', got {self.delta!r}")
        elif not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not self.mu_max > 0:
            raise ValueError(f"mu_max must be > 0, got {self.mu_max}")
        if self.mode == FIXED:
            if self.mu is None or not 0 < self.mu < 2:
                raise ValueError(f"fixed mode needs 0 < mu < 2, got {self.mu}")
            if self.mu > self.mu_max:
                raise ValueError(f"mu {self.mu} exceeds mu_max {self.mu_max}")
        if self.noise_var is not None and not self.noise_var >= 0:
            raise ValueError(f"noise_var must be >= 0, got {self.noise_var}")

    @property
    def msd_case(self):
        if self.mode == VSS_KNOWN or (self.mode == FIXED and self.noise_var is not None):
            return 1
        return 2

    @property
    def delta_auto(self):
        return isinstance(self.delta, str)

    def require_ready(self):
        if self.mode == VSS_KNOWN and self.noise_var is None:
            raise ValueError(f"{self.name or 'vss_known'}: noise_var is not set")

    def delta_value(self):
        return 0.0 if self.delta_auto else float(self.delta)


@dataclass
class FilterState:
    w: np.ndarray
    p: float = 1.0
    alpha: float = 0.0
    v: np.ndarray = None
    mu: float = 0.0
    tau: int = 0

    @classmethod
    def initial(cls, L, N, p0=1.0):
        return cls(w=np.zeros(L), p=float(p0), alpha=0.0, v=np.zeros(N), mu=0.0, tau=0)

    def copy(self):
        return replace(self, w=self.w.copy(), v=self.v.copy())

    def snapshot(self):
        """Plain-text record of the state, one ``key=value`` per line."""
        ws = " ".join(repr(float(c)) for c in self.w)
        vs = " ".join(repr(float(c)) for c in self.v)
        return (
            f"tau={self.tau}\nmu={self.mu!r}\np={self.p!r}\nalpha={self.alpha!r}\n"
            f"v={vs}\nw={ws}\n"
        )

    @classmethod
    def from_snapshot(cls, text):
        kv = dict(line.split("=", 1) for line in text.strip().splitlines())
        return cls(
            w=np.array([float(c) for c in kv["w"].split()]),
            p=float(kv["p"]),
            alpha=float(kv["alpha"]),
            v=np.array([float(c) for c in kv["v"].split()]),
            mu=float(kv["mu"]),
            tau=int(kv["tau"]),
        )


# ---------------------------------------------------------------- cores


@njit
def _errors(X, dsub, w):
    return dsub - np.dot(X, w)


@njit
def _noise_term(sq, delta, noise_var_sub):
    total = 0.0
    for m in range(sq.shape[0]):
        den = sq[m] + delta
        if den > 0.0:
            total += min(noise_var_sub / den, RATIO_CAP)
    return total


@njit
def _step_known(p, noise_term, rho, alpha, N, L, r, mu_max):
    num = N * p
    den = num + r * L * (noise_term + rho * rho * alpha)
    if den <= 0.0 or num <= 0.0:
        return 0.0
    return min(max(num / den, 0.0), mu_max)


@njit
def _step_unknown(p, v_sum, rho, alpha, N, L, r, mu_max):
    num = N * p
    den = r * L * (v_sum + rho * rho * alpha)
    if den <= 0.0 or num <= 0.0:
        return 0.0
    return min(max(num / den, 0.0), mu_max)


@njit
def _msd_next(case, p, mu, kappa, noise_term, v_sum, alpha, N, L, r):
    if case == 1:
        pbar = p + (mu * mu - 2.0 * mu) * N * p / (r * L) + mu * mu * noise_term + kappa * kappa * alpha
    else:
        pbar = p - 2.0 * mu * N * p / (r * L) + mu * mu * v_sum + kappa * kappa * alpha
    return min(max(0.0, pbar), P_CAP)


@njit
def _v_next(v, gamma, e, sq, delta):
    out = gamma * v
    for m in range(v.shape[0]):
        den = sq[m] + delta
        if den > 0.0:
            out[m] += (1.0 - gamma) * min(e[m] * e[m] / den, RATIO_CAP)
    return out


@njit
def _weights_next(w, X, e, sq, mu, kappa, s, g, delta):
    grad = np.zeros_like(w)
    for m in range(X.shape[0]):
        den = sq[m] + delta
        if den > 0.0:
            # split the normaliser so a zero regressor never meets an inf coefficient
            root = math.sqrt(den)
            grad += (e[m] / root) * (X[m] / root)
    return w + mu * grad - kappa * (s * w + g)


@njit
def _trimmed_power(values, keep):
    """Mean square of the ``keep`` smallest entries."""
    low = np.sort(values)[:keep]
    return np.mean(low * low)


# ---------------------------------------------------------------- public ops


def _frame_arrays(frame, L=None):
    X = frame.regressors
    if L is not None and X.shape[1] != L:
        raise ValueError(f"regressor length {X.shape[1]} != weight length {L}")
    return X, frame.desired, frame.sq_norms


def subband_errors(frame, w):
    w = np.asarray(w, dtype=float)
    X, d, _ = _frame_arrays(frame, w.size)
    return _errors(X, d, w)


def _delta(cfg, delta):
    return cfg.delta_value() if delta is None else float(delta)


def noise_term(frame, noise_var, delta):
    """``sum_m (noise_var / N) / (||x_m||^2 + delta)``."""
    N = frame.sq_norms.size
    return _noise_term(frame.sq_norms, float(delta), float(noise_var) / N)


def step_size_known_variance(p, frame, cfg, alpha, N, L, delta=None):
    if p < 0:
        raise ValueError("p must be >= 0")
    nt = noise_term(frame, cfg.noise_var, _delta(cfg, delta))
    return _step_known(float(p), nt, cfg.rho, float(alpha), N, L, cfg.r, cfg.mu_max)


def step_size_unknown_variance(p, v, cfg, alpha, N, L):
    if p < 0:
        raise ValueError("p must be >= 0")
    return _step_unknown(float(p), float(np.sum(v)), cfg.rho, float(alpha), N, L, cfg.r, cfg.mu_max)


def msd_update(p, mu, kappa, frame, alpha, v, cfg, N, L, delta=None):
    """One step of the MSD upper-bound recursion, clipped at zero."""
    nt = noise_term(frame, cfg.noise_var, _delta(cfg, delta)) if cfg.msd_case == 1 else 0.0
    return _msd_next(cfg.msd_case, float(p), float(mu), float(kappa), nt,
                     float(np.sum(v)), float(alpha), N, L, cfg.r)


def alpha_update(alpha_prev, gamma, dec, w):
    a = dec.apply(np.asarray(w, dtype=float))
    return gamma * alpha_prev + (1.0 - gamma) * float(np.sum(a * a))


def v_update(v_prev, gamma, e_m, sq_norm, delta):
    v_prev = np.atleast_1d(np.asarray(v_prev, dtype=float))
    out = _v_next(v_prev.copy(), gamma, np.atleast_1d(np.asarray(e_m, dtype=float)),
                  np.atleast_1d(np.asarray(sq_norm, dtype=float)), float(delta))
    return out if out.size > 1 else float(out[0])


def weight_update(w, frame, errs, mu, kappa, theta, delta):
    w = np.asarray(w, dtype=float)
    X, _, sq = _frame_arrays(frame, w.size)
    s, g = _attractor_parts(w, float(theta))
    return _weights_next(w, X, np.asarray(errs, dtype=float), sq, float(mu), float(kappa), s, g,
                         float(delta))


def stability_check(mu, N, L, r, case):
    """Strict contraction test of the MSD recursion's homogeneous part."""
    if case == 1:
        factor = 1.0 + (mu * mu - 2.0 * mu) * N / (r * L)
    elif case == 2:
        factor = 1.0 - 2.0 * mu * N / (r * L)
    else:
        raise ValueError(f"case must be 1 or 2, got {case}")
    return abs(factor) < 1.0


def reset_state(state):
    """Reinitialised copy: zero weights and averages, ``p = 1``."""
    return replace(state, w=np.zeros_like(state.w), alpha=0.0, v=np.zeros_like(state.v), p=1.0)


@dataclass
class ResetState:
    """Ring of normalised fullband error magnitudes plus the trimmed-mean baseline."""

    vt: int
    ratios: np.ndarray = field(repr=False, default=None)
    filled: int = 0
    pos: int = 0
    z_old: float = 0.0
    armed: bool = False

    @classmethod
    def for_config(cls, cfg):
        return cls(vt=cfg.vt, ratios=np.zeros(cfg.vt))

    def push(self, err, xnorm, epsilon):
        self.ratios[self.pos] = abs(err) / (xnorm + epsilon)
        self.pos = (self.pos + 1) % self.vt
        self.filled = min(self.filled + 1, self.vt)


def reset_push_and_check(rs, cfg, fullband_err, fullband_regressor_norm, mu, tau, N):
    """Record one fullband sample; at check instants compare trimmed means.

    ``fullband_err`` / ``fullband_regressor_norm`` may be scalars or arrays
    covering the fullband samples since the previous call. Returns
    :data:`RESET` or :data:`NO_RESET`.
    """
    errs = np.atleast_1d(fullband_err)
    norms = np.atleast_1d(fullband_regressor_norm)
    for e, xn in zip(errs, norms):
        rs.push(e, xn, cfg.epsilon)
    return check_reset(rs, cfg, mu, tau, N)


def check_reset(rs, cfg, mu, tau, N):
    if tau % cfg.period(N) or rs.filled < rs.vt:
        return NO_RESET
    if mu <= 0:
        return NO_RESET
    z_new = float(_trimmed_power(rs.ratios, cfg.vt - cfg.vd))
    fire = rs.armed and (z_new - rs.z_old) / math.sqrt(mu) > cfg.phi
    rs.z_old = z_new
    rs.armed = True
    return RESET if fire else NO_RESET


def adapt_step(state, frame, cfg, reset_decision=NO_RESET, delta=None):
    """Advance one decimated instant; returns a new :class:`FilterState`.

    ``delta`` overrides ``cfg.delta`` (needed when it is ``"auto"`` or ``"power"``).
    """
    cfg.require_ready()
    L = state.w.size
    N = frame.sq_norms.size
    delta = _delta(cfg, delta)
    e = subband_errors(frame, state.w)
    v = state.v
    if cfg.msd_case == 2:
        v = _v_next(state.v.copy(), cfg.gamma, e, frame.sq_norms, delta)
    dec = attractor_decomposition(state.w, cfg.theta)
    if cfg.mode == FIXED:
        mu = cfg.mu
    elif cfg.mode == VSS_KNOWN:
        mu = step_size_known_variance(state.p, frame, cfg, state.alpha, N, L, delta)
    else:
        mu = step_size_unknown_variance(state.p, v, cfg, state.alpha, N, L)
    kappa = mu * cfg.rho
    if reset_decision == RESET:
        out = reset_state(replace(state, v=v))
        out.mu = mu
        out.tau = state.tau + 1
        return out
    w = _weights_next(state.w, frame.regressors, e, frame.sq_norms, mu, kappa,
                      dec.s_diag, dec.g_vec, delta)
    p = msd_update(state.p, mu, kappa, frame, state.alpha, v, cfg, N, L, delta)
    alpha = alpha_update(state.alpha, cfg.gamma, dec, state.w)
    return FilterState(w=w, p=p, alpha=alpha, v=v, mu=mu, tau=state.tau + 1)
