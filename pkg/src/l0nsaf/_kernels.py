"""Whole-stream adaptation loop.

One call runs a filter over a precomputed subband decomposition, including the
fullband error bookkeeping the reset detector needs. Compiled with numba when
available; see :mod:`l0nsaf._jit` for the fallback switch.
"""

import math

import numpy as np

from ._jit import njit
from .engine import (
    _errors,
    _msd_next,
    _noise_term,
    _step_known,
    _step_unknown,
    _trimmed_power,
    _v_next,
    _weights_next,
)
from .sparsity import _attractor_parts


@njit
def run_stream(
    Xrev, Dsub, xrev, d, xnorm, delta_frames, truth, sign,
    L, N, mode, mu_fixed, rho, theta, gamma, r, noise_var_sub, mu_max, msd_case,
    use_reset, vt, vd, eps, phi, period, p0,
):
    """Adapt over ``T // N`` decimated instants.

    ``Xrev``/``xrev`` are time-reversed, zero-padded subband/fullband inputs so
    that every regressor is a contiguous slice. Returns the per-instant
    misalignment ratio, step size, MSD estimate, reset flags and final weights.
    """
    T = d.shape[0]
    n_frames = T // N
    w = np.zeros(L)
    v = np.zeros(N)
    p = p0
    alpha = 0.0
    mu_prev = 0.0
    ring = np.zeros(vt)
    filled = 0
    pos = 0
    z_old = 0.0
    armed = False
    truth_sq = np.sum(truth * truth)

    mis = np.empty(n_frames)
    mu_tr = np.empty(n_frames)
    p_tr = np.empty(n_frames)
    resets = np.zeros(n_frames, dtype=np.int8)

    for tau in range(n_frames):
        t_end = tau * N + N - 1
        if use_reset:
            for t in range(tau * N, t_end + 1):
                a = T - 1 - t
                ef = d[t] - np.dot(xrev[a:a + L], w)
                ring[pos] = abs(ef) / (xnorm[t] + eps)
                pos = (pos + 1) % vt
                if filled < vt:
                    filled += 1

        a = T - 1 - t_end
        X = Xrev[:, a:a + L].copy()
        dsub = Dsub[:, t_end].copy()
        sq = np.sum(X * X, axis=1)
        delta = delta_frames[tau]

        e = _errors(X, dsub, w)
        if msd_case == 2:
            v = _v_next(v, gamma, e, sq, delta)
        s, g = _attractor_parts(w, theta)
        nt = 0.0
        if msd_case == 1 or mode == 1:
            nt = _noise_term(sq, delta, noise_var_sub)
        if mode == 0:
            mu = mu_fixed
        elif mode == 1:
            mu = _step_known(p, nt, rho, alpha, N, L, r, mu_max)
        else:
            mu = _step_unknown(p, np.sum(v), rho, alpha, N, L, r, mu_max)
        kappa = mu * rho

        fire = False
        if use_reset and tau % period == 0 and filled >= vt and mu_prev > 0.0:
            z_new = _trimmed_power(ring, vt - vd)
            fire = armed and (z_new - z_old) / math.sqrt(mu_prev) > phi
            z_old = z_new
            armed = True

        if fire:
            w = np.zeros(L)
            alpha = 0.0
            v = np.zeros(N)
            p = 1.0
            resets[tau] = 1
        else:
            w_next = _weights_next(w, X, e, sq, mu, kappa, s, g, delta)
            p = _msd_next(msd_case, p, mu, kappa, nt, np.sum(v), alpha, N, L, r)
            att = s * w + g
            alpha = gamma * alpha + (1.0 - gamma) * np.sum(att * att)
            w = w_next
        mu_prev = mu

        diff = sign[tau] * truth - w
        mis[tau] = np.sum(diff * diff) / truth_sq
        mu_tr[tau] = mu
        p_tr[tau] = p

    return mis, mu_tr, p_tr, resets, w
