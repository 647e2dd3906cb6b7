"""Bahadur slopes of the two-hypothesis signed Wald and min-p tests.

Inputs are population quantities: the standardized effects
``z_j = theta_j / sd_j`` ordered as ``z_max >= z_min`` and the correlation
``rho`` of the two estimators. The slope of a test is the almost-sure limit
of ``-2 log(p_n) / n``; the ratio of two slopes approximates the inverse
ratio of the sample sizes they need for the same power at small levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateCorrelation, InputError, NullAlternative


@dataclass(frozen=True)
class BahadurPoint:
    """Population standardized effects and correlation.

    Examples
    --------
    >>> BahadurPoint.from_ratio(2.0, 0.5, rho=0.0)
    BahadurPoint(z_max=2.0, z_min=1.0, rho=0.0)
    """

    z_max: float
    z_min: float
    rho: float

    def __post_init__(self):
        for name in ("z_max", "z_min", "rho"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InputError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.z_min > self.z_max:
            raise InputError("z_min must not exceed z_max")
        if not abs(self.rho) < 1:
            raise DegenerateCorrelation("rho must lie strictly inside (-1, 1)")

    @classmethod
    def from_ratio(cls, z_max: float, s: float, rho: float) -> BahadurPoint:
        """Point with ``z_min = s * z_max``; ``s`` must lie in ``[-1, 1]``."""
        if not -1 <= s <= 1:
            raise InputError("s must lie in [-1, 1]")
        return cls(z_max, s * z_max, rho)


def slope_sw(pt: BahadurPoint) -> float:
    """Bahadur slope of the (unweighted, two-hypothesis) signed Wald test."""
    zmax, zmin, rho = pt.z_max, pt.z_min, pt.rho
    if zmax < 0:
        return 0.0
    if zmin <= rho * zmax:
        return zmax * zmax
    return ((zmax - zmin) ** 2 + 2.0 * (1.0 - rho) * zmin * zmax) / (1.0 - rho * rho)


def slope_minp(pt: BahadurPoint) -> float:
    """Bahadur slope of the min-p test, ``z_max**2`` (zero under the null)."""
    return pt.z_max * pt.z_max if pt.z_max >= 0 else 0.0


def efficiency_ratio(pt: BahadurPoint) -> float:
    """``slope_sw / slope_minp`` for ``z_max > 0``.

    With ``s = z_min / z_max`` the ratio is evaluated as
    ``(1 - s)**2 / ((1 - rho)(1 + rho)) + 2 s / (1 + rho)`` so that it is
    exactly ``2 / (1 + rho)`` at ``s = 1`` and exactly 1 on the branch
    ``s <= rho``.

    Raises
    ------
    NullAlternative
        If ``z_max <= 0``.
    """
    if not pt.z_max > 0:
        raise NullAlternative("the efficiency ratio needs z_max > 0")
    rho = pt.rho
    s = pt.z_min / pt.z_max
    if s <= rho:
        return 1.0
    return (1.0 - s) ** 2 / ((1.0 - rho) * (1.0 + rho)) + 2.0 * s / (1.0 + rho)


def ratio_grid(rhos, s_values, z_max: float = 1.0) -> list[dict]:
    """Rows ``{rho, s, slope_sw, slope_minp, ratio, ratio_cap}`` over a grid."""
    rows = []
    for rho in np.atleast_1d(np.asarray(rhos, dtype=float)):
        for s in np.atleast_1d(np.asarray(s_values, dtype=float)):
            pt = BahadurPoint.from_ratio(z_max, float(s), float(rho))
            rows.append(
                {
                    "rho": float(rho),
                    "s": float(s),
                    "slope_sw": slope_sw(pt),
                    "slope_minp": slope_minp(pt),
                    "ratio": efficiency_ratio(pt),
                    "ratio_cap": 2.0 / (1.0 + float(rho)),
                }
            )
    return rows
