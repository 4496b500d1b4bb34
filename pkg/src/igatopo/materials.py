"""Effective thermal conductivity laws kappa_eff(v) and their derivatives.

All laws are isotropic; conductivities are in W/mK and the relative density
``v`` is dimensionless. Values outside ``[v_min, v_max]`` are clamped and a
warning is logged, so line searches that overshoot a bound by round-off do
not abort a run.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KAPPA_COPPER",
    "KAPPA_PDMS",
    "KAPPA_IRON",
    "KAPPA_INSULATOR",
    "KAPPA_SENSOR",
    "MaterialLaw",
    "kappa_eff",
    "dkappa_dv",
    "make_law",
    "constant",
    "LAW_KINDS",
]

log = logging.getLogger(__name__)

KAPPA_COPPER = 398.0
KAPPA_PDMS = 0.27
KAPPA_IRON = 67.0
KAPPA_INSULATOR = 1e-4
KAPPA_SENSOR = 130.0

TCOH_COEFFS = (0.4231, 0.1236, 0.0933, 0.0902, 0.0899, 0.0899, 0.0899)
GYROID_COEFFS = (0.5934, 0.1119, 0.0631, 0.0583, 0.0578, 0.0577, 0.0577)
CUSNPB_COEFFS = (9.34008e-1, -2.81400e1, 7.08923e-2, 1.14783e-3)

LAW_KINDS = ("emt", "maxwell", "porous_cu", "cusnpb", "tcoh", "gyroid", "constant")


@dataclass(frozen=True)
class MaterialLaw:
    """Closed-form conductivity law.

    Parameters
    ----------
    kind : str
        One of :data:`LAW_KINDS`.
    params : dict
        ``kappa_m`` and ``kappa_i`` for the micromechanics laws, ``kappa_m``
        plus ``a, b, c, d`` or ``coeffs`` for the fitted laws, ``kappa`` for
        a constant material.
    v_min, v_max : float
        Admissible density interval (box bounds for the optimizer).
    """

    kind: str
    params: dict = field(default_factory=dict)
    v_min: float = 0.0
    v_max: float = 1.0

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise ValueError(f"unknown material law {self.kind!r}; expected one of {LAW_KINDS}")
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def _clamp(self, v):
        v = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("relative density is not finite")
        lo, hi = self.v_min, self.v_max
        if np.any(v < lo - 1e-12) or np.any(v > hi + 1e-12):
            log.warning(
                "%s: density outside [%g, %g] (min %.6g, max %.6g), clamped", self.kind, lo, hi, v.min(), v.max()
            )
        return np.clip(v, lo, hi)

    def kappa(self, v):
        """Effective conductivity at density ``v`` (scalar or array)."""
        v = self._clamp(v)
        return _VALUE[self.kind](self.params, v)

    def dkappa(self, v):
        """Derivative ``d kappa_eff / d v``."""
        v = self._clamp(v)
        return _DERIV[self.kind](self.params, v)

    @property
    def kappa_range(self) -> tuple[float, float]:
        vv = np.linspace(self.v_min, self.v_max, 2001)
        k = self.kappa(vv)
        return float(k.min()), float(k.max())


def _emt(p, v):
    km, ki = p["kappa_m"], p["kappa_i"]
    tau = (3 * v - 1) * ki + (3 * (1 - v) - 1) * km
    return 0.25 * (tau + np.sqrt(tau * tau + 8 * ki * km))


def _demt(p, v):
    km, ki = p["kappa_m"], p["kappa_i"]
    tau = (3 * v - 1) * ki + (3 * (1 - v) - 1) * km
    dtau = 3 * ki - 3 * km
    return 0.25 * dtau * (1 + tau / np.sqrt(tau * tau + 8 * ki * km))


def _maxwell(p, v):
    km, kp = p["kappa_m"], p["kappa_i"]
    return km * (2 * km + kp - 2 * v * (km - kp)) / (2 * km + kp + v * (km - kp))


def _dmaxwell(p, v):
    km, kp = p["kappa_m"], p["kappa_i"]
    d = km - kp
    num = 2 * km + kp - 2 * v * d
    den = 2 * km + kp + v * d
    return km * (-2 * d * den - num * d) / den**2


def _porous(p, v):
    return p["kappa_m"] * (1 - v) / (1 + v)


def _dporous(p, v):
    return -2 * p["kappa_m"] / (1 + v) ** 2


def _cusnpb(p, v):
    a, b, c, d = p.get("coeffs", CUSNPB_COEFFS)
    return p["kappa_m"] * (a * np.exp(b * v) + c * np.exp(d * v))


def _dcusnpb(p, v):
    a, b, c, d = p.get("coeffs", CUSNPB_COEFFS)
    return p["kappa_m"] * (a * b * np.exp(b * v) + c * d * np.exp(d * v))


def _poly(p, v):
    # sum_{i=1}^{n} C_i v^i
    C = np.asarray(p["coeffs"], dtype=float)
    return p["kappa_m"] * v * np.polynomial.polynomial.polyval(v, C)


def _dpoly(p, v):
    C = np.asarray(p["coeffs"], dtype=float)
    D = C * np.arange(1, C.size + 1)
    return p["kappa_m"] * np.polynomial.polynomial.polyval(v, D)


def _const(p, v):
    return np.full_like(v, p["kappa"], dtype=float)


def _dconst(p, v):
    return np.zeros_like(v, dtype=float)


_VALUE = {
    "emt": _emt,
    "maxwell": _maxwell,
    "porous_cu": _porous,
    "cusnpb": _cusnpb,
    "tcoh": _poly,
    "gyroid": _poly,
    "constant": _const,
}
_DERIV = {
    "emt": _demt,
    "maxwell": _dmaxwell,
    "porous_cu": _dporous,
    "cusnpb": _dcusnpb,
    "tcoh": _dpoly,
    "gyroid": _dpoly,
    "constant": _dconst,
}


def make_law(kind: str, **overrides) -> MaterialLaw:
    """Law with the default constituents and density interval of ``kind``.

    ``overrides`` may replace any parameter or ``v_min`` / ``v_max``.
    """
    kind = kind.lower()
    defaults = {
        "emt": ({"kappa_m": KAPPA_COPPER, "kappa_i": KAPPA_PDMS}, 0.0, 1.0),
        "maxwell": ({"kappa_m": KAPPA_COPPER, "kappa_i": KAPPA_PDMS}, 0.0, 1.0),
        "porous_cu": ({"kappa_m": KAPPA_COPPER}, 0.0, 0.7),
        "cusnpb": ({"kappa_m": KAPPA_COPPER, "coeffs": CUSNPB_COEFFS}, 0.0, 0.3),
        "tcoh": ({"kappa_m": KAPPA_COPPER, "coeffs": TCOH_COEFFS}, 0.2, 0.8),
        "gyroid": ({"kappa_m": KAPPA_COPPER, "coeffs": GYROID_COEFFS}, 0.2, 0.9),
        "constant": ({"kappa": KAPPA_IRON}, 0.0, 1.0),
    }
    if kind not in defaults:
        raise ValueError(f"unknown material law {kind!r}; expected one of {LAW_KINDS}")
    params, lo, hi = defaults[kind]
    params = dict(params)
    lo = overrides.pop("v_min", lo)
    hi = overrides.pop("v_max", hi)
    params.update(overrides)
    return MaterialLaw(kind, params, float(lo), float(hi))


def constant(kappa: float) -> MaterialLaw:
    if not kappa > 0:
        raise ValueError("conductivity must be positive")
    return MaterialLaw("constant", {"kappa": float(kappa)})


def kappa_eff(law: MaterialLaw, v):
    return law.kappa(v)


def dkappa_dv(law: MaterialLaw, v):
    return law.dkappa(v)
