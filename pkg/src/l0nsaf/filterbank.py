"""Cosine-modulated analysis banks and critically decimated subband framing."""

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import optimize, signal

# Kaiser beta of 2.5 puts the first sidelobe near -39 dB.
KAISER_BETA = 2.5


@dataclass(frozen=True)
class PrototypeFilter:
    """Linear-phase lowpass; ``cutoff`` is the half-power edge in rad/sample."""

    coeffs: np.ndarray
    cutoff: float

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("prototype needs at least one tap")
        if not np.all(np.isfinite(c)):
            raise ValueError("prototype coefficients must be finite")
        if np.max(np.abs(c - c[::-1])) > 1e-12:
            raise ValueError("prototype must be symmetric (linear phase)")
        object.__setattr__(self, "coeffs", c)

    @property
    def length(self):
        return self.coeffs.size


@dataclass(frozen=True)
class FilterBank:
    filters: np.ndarray  # (N, M)
    prototype: PrototypeFilter | None = None

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.filters, dtype=float))
        if self.prototype is not None and h.shape[1] != self.prototype.length:
            raise ValueError(
                f"filters have length {h.shape[1]}, prototype has {self.prototype.length}"
            )
        object.__setattr__(self, "filters", h)

    @property
    def n_subbands(self):
        return self.filters.shape[0]

    @property
    def length(self):
        return self.filters.shape[1]

    def save(self, path):
        write_bank(self, path)


def _validate_nm(N, M):
    if int(N) != N or int(M) != M or N < 1 or M < 1:
        raise ValueError(f"need integer N >= 1 and M >= 1, got N={N}, M={M}")
    if N == 1 and M != 1:
        raise ValueError("a single-band bank is a passthrough and requires M = 1")
    if N > 1 and M < 2 * N:
        raise ValueError(f"M={M} is too short for {N} subbands")


def design_prototype(N, M, beta=KAISER_BETA):
    """Kaiser-windowed lowpass for an ``N``-band pseudo-QMF bank.

    The band edge is ``pi/(2N)``; the windowed-sinc cutoff is tuned around it
    to minimise the power-complementarity ripple of the modulated bank. The
    taps are then scaled so the modulated filters have total energy 1 (each
    ``1/N``): white noise of variance ``s`` leaves every subband with
    variance ``s / N``.
    """
    _validate_nm(N, M)
    if N == 1:
        return PrototypeFilter(coeffs=np.ones(1), cutoff=np.pi)
    h = _tuned_taps(int(N), int(M), float(beta))
    energy = np.sum(_modulated(h, N) ** 2)
    return PrototypeFilter(coeffs=h / np.sqrt(energy), cutoff=np.pi / (2 * N))


@lru_cache(maxsize=64)
def _tuned_taps(N, M, beta):
    def taps(scale):
        h = signal.firwin(M, min(scale / (2 * N), 0.999), window=("kaiser", beta))
        return 0.5 * (h + h[::-1])

    def ripple(scale):
        power = np.sum(np.abs(_responses(_modulated(taps(scale), N))) ** 2, axis=0)
        return np.log(power.max() / power.min())

    # firwin takes the cutoff as a fraction of Nyquist; search near the band edge
    best = optimize.minimize_scalar(ripple, bounds=(0.8, 1.6), method="bounded",
                                    options={"xatol": 1e-7})
    return taps(best.x)


_RESPONSE_GRID = np.linspace(0.0, np.pi, 1025)[1:-1]


def _responses(h):
    n = np.arange(h.shape[1])
    return h @ np.exp(-1j * np.outer(n, _RESPONSE_GRID))


def _modulated(p, N):
    M = p.size
    i = np.arange(M) - (M - 1) / 2.0
    m = np.arange(N)[:, None]
    phase = np.where(m % 2 == 0, np.pi / 4, -np.pi / 4)
    return 2.0 * p[None, :] * np.cos((np.pi / N) * (m + 0.5) * i[None, :] + phase)


def modulate(prototype, N):
    """Pseudo-QMF cosine modulation of ``prototype`` into ``N`` bands."""
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    if N == 1:
        return FilterBank(filters=np.ones((1, 1)), prototype=PrototypeFilter(np.ones(1), np.pi))
    return FilterBank(filters=_modulated(prototype.coeffs, N), prototype=prototype)


def make_bank(N, M=None):
    """Design and modulate in one call; ``M`` defaults to ``8N + 1``."""
    if M is None:
        M = 1 if N == 1 else 8 * N + 1
    return modulate(design_prototype(N, M), N)


def write_bank(bank, path):
    path = Path(path)
    lines = [f"{bank.n_subbands} {bank.length}"]
    lines += [" ".join(repr(float(c)) for c in row) for row in bank.filters]
    path.write_text("\n".join(lines) + "\n")


def read_bank(path):
    """Load a bank written by :func:`write_bank` (the prototype is not stored)."""
    path = Path(path)
    rows = [ln.split() for ln in path.read_text().splitlines() if ln.strip()]
    if not rows:
        raise ValueError(f"{path}: empty bank file")
    try:
        N, M = int(rows[0][0]), int(rows[0][1])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}:1: header must be 'N M'") from exc
    if len(rows) - 1 != N:
        raise ValueError(f"{path}: header declares {N} filters, found {len(rows) - 1}")
    h = np.empty((N, M))
    for k, row in enumerate(rows[1:]):
        if len(row) != M:
            raise ValueError(f"{path}:{k + 2}: expected {M} coefficients, got {len(row)}")
        try:
            h[k] = [float(v) for v in row]
        except ValueError as exc:
            raise ValueError(f"{path}:{k + 2}: {exc}") from exc
    return FilterBank(filters=h)


def magnitude_response(h, n_points=4096):
    """|H(e^jw)| on ``n_points`` frequencies in [0, pi]."""
    w, H = signal.freqz(h, worN=n_points)
    return w, np.abs(H)


def bank_diagnostics(bank, n_points=4096):
    """Spectral summary used by the ``bankinfo`` command."""
    N = bank.n_subbands
    w, _ = magnitude_response(bank.filters[0], n_points)
    power = np.zeros_like(w)
    for h in bank.filters:
        power += magnitude_response(h, n_points)[1] ** 2
    interior = (w > 0) & (w < np.pi)
    ripple_db = 10 * np.log10(power[interior].max() / power[interior].min())
    out = {"N": N, "M": bank.length, "power_ripple_db": float(ripple_db)}
    if N > 1 and bank.prototype is not None:
        pw, pmag = magnitude_response(bank.prototype.coeffs, n_points)
        pmag = pmag / pmag[0]
        stop = pw >= min(np.pi / N + 0.2 * np.pi, np.pi)
        out["stopband_atten_db"] = float(-20 * np.log10(pmag[stop].max()))
        out["half_power_gain_db"] = float(
            20 * np.log10(np.interp(np.pi / (2 * N), pw, pmag))
        )
    return out


@dataclass(frozen=True)
class SubbandFrame:
    regressors: np.ndarray  # (N, L): x_m(tau) newest first
    desired: np.ndarray  # (N,)
    sq_norms: np.ndarray  # (N,)
    tau: int

    @classmethod
    def from_arrays(cls, regressors, desired, tau=0):
        X = np.ascontiguousarray(np.atleast_2d(regressors), dtype=float)
        d = np.atleast_1d(np.asarray(desired, dtype=float))
        return cls(regressors=X, desired=d, sq_norms=np.sum(X * X, axis=1), tau=tau)


@dataclass
class AnalysisState:
    """Per-sample delay lines for streaming analysis."""

    n_subbands: int
    filter_len: int
    taps: int
    input_delay_line: np.ndarray = field(repr=False)
    desired_delay_line: np.ndarray = field(repr=False)
    subband_input_histories: np.ndarray = field(repr=False)
    sample_counter: int = 0
    frame_counter: int = 0

    @classmethod
    def for_bank(cls, bank, L):
        if L < 1:
            raise ValueError(f"L must be >= 1, got {L}")
        N, M = bank.n_subbands, bank.length
        return cls(
            n_subbands=N,
            filter_len=M,
            taps=L,
            input_delay_line=np.zeros(M),
            desired_delay_line=np.zeros(M),
            subband_input_histories=np.zeros((N, L)),
        )


def analyze_push(state, bank, x_sample, d_sample, L=None):
    """Feed one fullband sample pair; return a frame every ``N``-th call.

    Regressors hold the last ``L`` subband-filtered input samples (newest
    first), desired entries the current subband-filtered desired sample.
    """
    if L is not None and L != state.taps:
        raise ValueError(f"state was built for L={state.taps}, got L={L}")
    xs, ds = state.input_delay_line, state.desired_delay_line
    xs[1:] = xs[:-1]
    xs[0] = x_sample
    ds[1:] = ds[:-1]
    ds[0] = d_sample
    hist = state.subband_input_histories
    hist[:, 1:] = hist[:, :-1]
    hist[:, 0] = bank.filters @ xs
    state.sample_counter += 1
    if state.sample_counter % state.n_subbands:
        return None
    frame = SubbandFrame.from_arrays(hist.copy(), bank.filters @ ds, tau=state.frame_counter)
    state.frame_counter += 1
    return frame


def analyze(bank, x, d):
    """Full-rate subband signals ``(X, D)``, each of shape ``(N, T)``."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if x.shape != d.shape or x.ndim != 1:
        raise ValueError("x and d must be 1-D and of equal length")
    X = np.stack([signal.lfilter(h, 1.0, x) for h in bank.filters])
    D = np.stack([signal.lfilter(h, 1.0, d) for h in bank.filters])
    return X, D


def iter_frames(bank, x, d, L):
    """Batch equivalent of repeated :func:`analyze_push` calls."""
    N = bank.n_subbands
    X, D = analyze(bank, x, d)
    T = X.shape[1]
    padded = np.concatenate([np.zeros((N, L - 1)), X], axis=1)
    for tau in range(T // N):
        t = tau * N + N - 1
        reg = padded[:, t : t + L][:, ::-1]
        yield SubbandFrame.from_arrays(reg, D[:, t], tau=tau)


def frame_count(T, N):
    return T // N
