"""L0-norm surrogate and the zero attractor used by the sparse update."""

from dataclasses import dataclass

import numpy as np

from ._jit import njit


@dataclass(frozen=True)
class AttractorParams:
    theta: float
    alpha_approx: float = 5.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if not self.alpha_approx > 0:
            raise ValueError(f"alpha_approx must be > 0, got {self.alpha_approx}")


@dataclass(frozen=True)
class AttractorDecomposition:
    """Diagonal ``s_diag`` and offset ``g_vec`` with ``f(w) = s_diag * w + g_vec``."""

    s_diag: np.ndarray
    g_vec: np.ndarray

    def apply(self, w):
        return self.s_diag * w + self.g_vec


@njit
def _attractor_parts(w, theta):
    edge = 1.0 / theta
    t2 = theta * theta
    pos = (w > 0.0) & (w <= edge)
    neg = (w < 0.0) & (w >= -edge)
    s = np.where(pos | neg, -t2, 0.0)
    g = np.where(pos, theta, np.where(neg, -theta, 0.0))
    return s, g


@njit
def _attractor_f(w, theta):
    edge = 1.0 / theta
    t2 = theta * theta
    pos = (w > 0.0) & (w <= edge)
    neg = (w < 0.0) & (w >= -edge)
    return np.where(pos, -t2 * w + theta, np.where(neg, -t2 * w - theta, 0.0))


def _check_theta(theta):
    if not theta > 0:
        raise ValueError(f"theta must be > 0, got {theta}")


def l0_norm_approx(w, alpha_approx):
    """Smooth count of nonzero taps, ``sum(1 - exp(-alpha * |w|))``.

    Diagnostic only; the adaptive update never calls it.
    """
    if not alpha_approx > 0:
        raise ValueError(f"alpha_approx must be > 0, got {alpha_approx}")
    w = np.asarray(w, dtype=float)
    return float(np.sum(-np.expm1(-alpha_approx * np.abs(w))))


def zero_attractor_f(w, theta):
    """Piecewise-linear zero attractor.

    Nonzero only for ``0 < |w_j| <= 1/theta``, where it equals
    ``-theta**2 * w_j + theta * sign(w_j)``.

    Parameters
    ----------
    w : array_like
        Filter taps.
    theta : float
        Attraction range control; taps beyond ``1/theta`` are left alone.

    Returns
    -------
    numpy.ndarray
    """
    _check_theta(theta)
    return _attractor_f(np.ascontiguousarray(w, dtype=np.float64), float(theta))


def attractor_decomposition(w, theta):
    _check_theta(theta)
    s, g = _attractor_parts(np.ascontiguousarray(w, dtype=np.float64), float(theta))
    return AttractorDecomposition(s_diag=s, g_vec=g)
