"""Stimuli: AR inputs, sparse systems, calibrated noise, schedules, file I/O."""

from dataclasses import dataclass
from pathlib import Path
import wave

import numpy as np
from scipy import signal

AR1_COEFFS = (0.95,)
AR2_COEFFS = (-0.1, -0.8)

# independent RNG streams within one trial
STREAM_INPUT = 0
STREAM_SYSTEM = 1
STREAM_NOISE = 2
STREAM_NEAR_END = 3


def rng_for(seed, stream):
    return np.random.default_rng([int(seed), int(stream)])


def ar_process(drive, coeffs):
    """``x(t) = sum_k a_k x(t-k) + z(t)`` with zero initial conditions."""
    a = np.concatenate([[1.0], -np.asarray(coeffs, dtype=float)])
    return signal.lfilter([1.0], a, np.asarray(drive, dtype=float))


def gen_ar1(T, seed):
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    return ar_process(rng_for(seed, STREAM_INPUT).standard_normal(T), AR1_COEFFS)


def gen_ar2(T, seed):
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    return ar_process(rng_for(seed, STREAM_INPUT).standard_normal(T), AR2_COEFFS)


def gen_white(T, seed):
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    return rng_for(seed, STREAM_INPUT).standard_normal(T)


INPUTS = {"ar1": gen_ar1, "ar2": gen_ar2, "white": gen_white}


def ar_variance(coeffs):
    """Stationary variance of a unit-drive AR(p) process via Yule-Walker."""
    a = np.asarray(coeffs, dtype=float)
    p = a.size
    # unknowns r_0..r_p; r_k - sum_j a_j r_|k-j| = [k == 0]
    A = np.zeros((p + 1, p + 1))
    b = np.zeros(p + 1)
    b[0] = 1.0
    for k in range(p + 1):
        A[k, k] += 1.0
        for j in range(1, p + 1):
            A[k, abs(k - j)] -= a[j - 1]
    return float(np.linalg.solve(A, b)[0])


@dataclass(frozen=True)
class SparseSystem:
    coeffs: np.ndarray
    support: np.ndarray
    seed: int | None = None

    @property
    def length(self):
        return self.coeffs.size

    def flipped(self):
        return SparseSystem(-self.coeffs, self.support, self.seed)


def gen_sparse_system(L, K, seed):
    """``K`` N(0, 1) taps at distinct uniform positions, zeros elsewhere."""
    if not 1 <= K <= L:
        raise ValueError(f"need 1 <= K <= L, got K={K}, L={L}")
    rng = rng_for(seed, STREAM_SYSTEM)
    support = np.sort(rng.choice(L, size=K, replace=False))
    h = np.zeros(L)
    vals = rng.standard_normal(K)
    # a draw of exactly 0.0 would break the K-nonzeros contract
    vals[vals == 0.0] = np.finfo(float).tiny
    h[support] = vals
    return SparseSystem(h, support, seed)


def system_output(x, w0):
    """Clean output ``y(t) = x(t)^T w0`` with zero history."""
    h = w0.coeffs if isinstance(w0, SparseSystem) else np.asarray(w0, dtype=float)
    return signal.lfilter(h, 1.0, np.asarray(x, dtype=float))


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    sigma_eta_sq: float

    def generate(self, T, seed):
        return np.sqrt(self.sigma_eta_sq) * rng_for(seed, STREAM_NOISE).standard_normal(T)


def calibrate_noise(x, w0, snr_db):
    y = system_output(x, w0)
    power = float(np.mean(y * y))
    if power == 0.0:
        raise ValueError("clean system output is identically zero")
    return NoiseSpec(snr_db=float(snr_db), sigma_eta_sq=power / 10 ** (snr_db / 10))


@dataclass(frozen=True)
class Schedule:
    total_samples: int
    flip_at: int | None = None
    snr_change: tuple | None = None  # (sample index, new SNR in dB)
    doubletalk: tuple | None = None  # (start, end, near-end signal or None)

    def __post_init__(self):
        T = self.total_samples
        if T < 1:
            raise ValueError("total_samples must be >= 1")
        events = []
        if self.flip_at is not None:
            events.append(self.flip_at)
        if self.snr_change is not None:
            events.append(self.snr_change[0])
        if self.doubletalk is not None:
            s, e = self.doubletalk[:2]
            if e < s:
                raise ValueError("double-talk end precedes start")
            events += [s, max(e - 1, s)]
        for k in events:
            if not 0 <= k < T:
                raise ValueError(f"event index {k} outside [0, {T})")

    def sign(self):
        s = np.ones(self.total_samples)
        if self.flip_at is not None:
            s[self.flip_at :] = -1.0
        return s

    @classmethod
    def scaled_doubletalk(cls, T, near_end=None, **kw):
        """Double-talk over the same fraction of the run as a 1.5e5-3e5 of 4e5 schedule."""
        return cls(T, doubletalk=(int(0.375 * T), int(0.75 * T), near_end), **kw)


def synthesize_desired(x, w0, noise, schedule, near_end=None, base_snr_db=None):
    """``d(t) = x(t)^T w0(t) + eta(t) + near_end(t)`` per the schedule.

    ``w0(t)`` switches to ``-w0`` at ``flip_at``. After an SNR change the
    noise is rescaled by the amplitude ratio implied by ``base_snr_db`` and the
    new SNR. ``near_end`` (or the signal stored in the schedule) is added on the
    double-talk interval.
    """
    x = np.asarray(x, dtype=float)
    T = x.size
    if schedule.total_samples != T:
        raise ValueError("schedule length differs from input length")
    d = system_output(x, w0) * schedule.sign()
    if noise is not None:
        eta = np.array(noise, dtype=float)
        if eta.size != T:
            raise ValueError("noise length differs from input length")
        if schedule.snr_change is not None:
            if base_snr_db is None:
                raise ValueError("an SNR change needs base_snr_db")
            at, new_snr = schedule.snr_change
            eta[at:] *= 10 ** ((base_snr_db - new_snr) / 20)
        d = d + eta
    if schedule.doubletalk is not None:
        start, end, sig = schedule.doubletalk
        if near_end is not None:
            sig = near_end
        if sig is not None:
            sig = np.asarray(sig, dtype=float)
            if sig.size == T:
                seg = sig[start:end]
            else:
                seg = np.resize(sig, end - start)
            d = d.copy()
            d[start:end] += seg
    return d


def load_ir(path):
    """Impulse response from a text file holding one coefficient per line."""
    path = Path(path)
    lines = path.read_text().splitlines()
    vals = []
    for k, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vals.append(float(line))
        except ValueError:
            raise ValueError(f"{path}:{k}: not a number: {line!r}") from None
    if not vals:
        raise ValueError(f"{path}: no coefficients found")
    h = np.array(vals)
    return SparseSystem(h, np.flatnonzero(h), None)


def save_ir(h, path):
    h = h.coeffs if isinstance(h, SparseSystem) else np.asarray(h, dtype=float)
    Path(path).write_text("".join(f"{c!r}\n" for c in map(float, h)))


def load_audio(path):
    """Mono 16-bit PCM WAV scaled to [-1, 1); returns ``(samples, rate)``."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise ValueError(f"{path}: expected mono, got {wf.getnchannels()} channels")
            if wf.getsampwidth() != 2:
                raise ValueError(f"{path}: expected 16-bit samples, got {8 * wf.getsampwidth()}-bit")
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise ValueError(f"{path}: not a PCM RIFF/WAVE file ({exc})") from exc
    if len(raw) % 2:
        raise ValueError(f"{path}: truncated sample at byte {len(raw) - 1}")
    pcm = np.frombuffer(raw, dtype="<i2")
    if pcm.size == 0:
        raise ValueError(f"{path}: no samples")
    return pcm.astype(float) / 32768.0, rate


def save_audio(x, path, rate=8000):
    pcm = np.clip(np.round(np.asarray(x, dtype=float) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())


def synthetic_echo_path(L, seed, n_taps=None, decay=None):
    """Sparse, exponentially decaying echo path with a short bulk delay.

    Stand-in for measured network echo paths: a cluster of active taps after a
    delay of ``L // 8`` samples, everything else exactly zero.
    """
    rng = rng_for(seed, STREAM_SYSTEM)
    n_taps = n_taps or max(4, L // 8)
    decay = decay or n_taps / 4
    start = L // 8
    n_taps = min(n_taps, L - start)
    h = np.zeros(L)
    k = np.arange(n_taps)
    h[start : start + n_taps] = rng.standard_normal(n_taps) * np.exp(-k / decay)
    h /= np.linalg.norm(h)
    return SparseSystem(h, np.flatnonzero(h), seed)


def pseudo_speech(T, seed, stream=STREAM_INPUT, floor_db=-50.0):
    """Speech-like test signal: syllabic-rate modulated AR(2) noise with pauses.

    Pauses sit at ``floor_db`` rather than exact zero so that running power
    estimates stay positive. Peak amplitude is below 1.
    """
    rng = rng_for(seed, stream)
    # formant-ish resonance plus spectral tilt
    z = rng.standard_normal(T)
    x = ar_process(z, (1.3, -0.6))
    x = signal.lfilter([1.0], [1.0, -0.7], x)
    # syllables of ~50-250 ms at 8 kHz, separated by pauses
    env = np.empty(T)
    pos = 0
    floor = 10 ** (floor_db / 20)
    while pos < T:
        on = int(rng.integers(400, 2000))
        off = int(rng.integers(200, 1600))
        seg = np.sin(np.linspace(0, np.pi, on)) ** 2 * rng.uniform(0.3, 1.0)
        env[pos : pos + on] = seg[: max(0, min(on, T - pos))]
        pos += on
        env[pos : pos + off] = 0.0
        pos += off
    x = x * np.maximum(env, floor)
    return 0.9 * x / np.max(np.abs(x))
