"""
Standard-normal helpers for the truncated-Gaussian corrections of TrueSkill.

Both correction pairs are written in terms of the scaled complementary error
function ``erfcx(z) = exp(z**2) * erfc(z)``, which keeps the pdf/cdf ratios
finite far into the tails where a direct ratio would be 0/0.
"""
import math
from typing import Tuple

from scipy import special

from src.exceptions import InvalidConfigError

SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def probit(p: float) -> float:
    """Inverse standard-normal CDF"""
    return float(special.ndtri(p))


def draw_margin_abs(p_draw: float, beta: float) -> float:
    """
        Draw margin in performance-difference units for a two-player match.
    """
    if not 0.0 <= p_draw < 1.0:
        raise InvalidConfigError(f"p_draw must lie in [0, 1), got {p_draw}")
    if p_draw == 0.0:
        return 0.0
    return probit((p_draw + 1.0) / 2.0) * SQRT2 * beta


def vw_win(t: float, eps: float) -> Tuple[float, float]:
    """
        Mean and variance corrections for a one-sided truncation d > eps,
        with d ~ N(t, 1).

        v = phi(x) / Phi(x) with x = t - eps equals sqrt(2/pi) / erfcx(-x/sqrt(2)).
    """
    x = t - eps
    denom = float(special.erfcx(-x / SQRT2))
    if math.isinf(denom):
        # Certain win, the truncation carries no information
        return 0.0, 0.0
    v = SQRT_2_OVER_PI / denom
    w = v * (v + x)
    # Clamp the rounding noise left by the cancellation in v + x
    w = min(max(w, 0.0), 1.0 - 1e-15)
    return v, w


def _vw_draw_nonnegative(t: float, eps: float) -> Tuple[float, float]:
    # a < b are the truncation bounds seen from the mean: a = -eps - t, b = eps - t.
    # Every term is scaled by exp(b**2 / 2); r = exp(-(a**2 - b**2) / 2) = exp(-2 eps t) <= 1.
    a = -eps - t
    b = eps - t
    r = math.exp(-2.0 * eps * t)
    denom = 0.5 * (float(special.erfcx(-b / SQRT2)) - r * float(special.erfcx(-a / SQRT2)))
    if denom <= 0.0 or not math.isfinite(denom):
        # Band collapsed numerically: all posterior mass sits at d = 0
        return -t, 1.0 - 1e-15
    v = (r - 1.0) / (SQRT_2PI * denom)
    w = v * v + (b - a * r) / (SQRT_2PI * denom)
    w = min(max(w, 1e-300), 1.0 - 1e-15)
    return v, w


def vw_draw(t: float, eps: float) -> Tuple[float, float]:
    """
        Mean and variance corrections for the two-sided truncation |d| <= eps,
        with d ~ N(t, 1). v is odd in t and w is even, so the computation always
        runs on |t|.
    """
    if t >= 0.0:
        return _vw_draw_nonnegative(t, eps)
    v, w = _vw_draw_nonnegative(-t, eps)
    return -v, w
