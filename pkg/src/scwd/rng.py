"""Counter-based random streams that other languages can reproduce exactly.

Raw bits come from Philox4x64-10 (Salmon et al., SC'11) as implemented by
``numpy.random.Philox``: 128-bit key = ``seed`` (low word first, high
word 0), 256-bit counter = ``stream << 128``. numpy bumps the counter
before producing each block of four 64-bit outputs, so the first block is
the Philox of counter ``(stream << 128) + 1``.

Uniforms are ``((x >> 11) + 0.5) * 2**-53``, strictly inside (0, 1).
Normals use Acklam's rational inverse-CDF followed by one Halley step
against ``erfc``, which keeps the absolute error far below 1.2e-9.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erfc

_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def raw_stream(seed: int, stream: int, n: int) -> np.ndarray:
    """First ``n`` raw uint64 outputs of stream ``stream`` under ``seed``."""
    gen = np.random.Philox(key=int(seed) & (2**64 - 1), counter=int(stream) << 128)
    return gen.random_raw(n)


def uniforms(seed: int, stream: int, n: int) -> np.ndarray:
    bits = raw_stream(seed, stream, n)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _poly(coeffs, x):
    out = np.full_like(x, coeffs[0])
    for c in coeffs[1:]:
        out = out * x + c
    return out


def inverse_normal_cdf(p) -> np.ndarray:
    """Standard normal quantile for p in (0, 1).

    Evaluated on min(p, 1 - p) and mirrored, since 1 - p is exact for
    p >= 0.5 while Phi(x) - p would lose digits in the upper tail.
    """
    p = np.asarray(p, dtype=np.float64)
    upper = p > 0.5
    pp = np.where(upper, 1.0 - p, p)
    x = np.empty_like(pp)

    low = pp < _P_LOW
    q = np.sqrt(-2.0 * np.log(pp[low]))
    x[low] = _poly(_C, q) / (_poly(_D, q) * q + 1.0)
    q = pp[~low] - 0.5
    r = q * q
    x[~low] = _poly(_A, r) * q / (_poly(_B, r) * r + 1.0)

    # One Halley step.
    e = 0.5 * erfc(-x / np.sqrt(2.0)) - pp
    u = e * np.sqrt(2.0 * np.pi) * np.exp(x * x / 2.0)
    x = x - u / (1.0 + x * u / 2.0)
    return np.where(upper, -x, x)


def normals(seed: int, stream: int, n: int) -> np.ndarray:
    return inverse_normal_cdf(uniforms(seed, stream, n))
