"""Closed-form rates and the elementary bounds shared by both matching engines.

All rates are in bits per channel use (log base 2).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from icbounds.net_model import AttenuationModel, SeparationParams

LN2 = math.log(2.0)


class HypothesisError(ValueError):
    """The two-user bound was requested where INR_ji < SNR_j, so it does not hold."""


def per_link_rate(inr: float) -> float:
    """Interference-alignment rate ``0.5 * log2(1 + 2 * inr)``."""
    if inr < 0:
        raise ValueError(f"INR must be nonnegative, got {inr}")
    return 0.5 * math.log1p(2.0 * inr) / LN2


def link_rates(gains: np.ndarray) -> np.ndarray:
    """Elementwise :func:`per_link_rate` over a gain matrix."""
    gains = np.asarray(gains, dtype=float)
    if np.any(gains < 0):
        raise ValueError("gains must be nonnegative")
    return 0.5 * np.log1p(2.0 * gains) / LN2


def single_user_bound(snr: float) -> float:
    return math.log1p(snr) / LN2


def two_user_bottleneck_bound(snr_i: float, snr_j: float, inr_ji: float) -> float:
    """Upper bound ``log2(1 + INR_ji + SNR_i)`` on ``R_i + R_j``.

    Only valid when transmitter ``j`` is heard at receiver ``i`` at least as
    strongly as at its own receiver (``inr_ji >= snr_j``); otherwise
    :class:`HypothesisError` is raised.
    """
    if not inr_ji >= snr_j:
        raise HypothesisError(f"INR_ji={inr_ji!r} < SNR_j={snr_j!r}: two-user bound does not apply")
    return math.log1p(inr_ji + snr_i) / LN2


def is_epsilon_bottleneck(snr_i: float, snr_j: float, inr_ji: float, epsilon: float) -> bool:
    if inr_ji < snr_j:
        return False
    return math.log2(1.0 + inr_ji + snr_i) <= math.log2(1.0 + 2.0 * snr_i) + epsilon


def _to_nats(u: float, units: str) -> float:
    if units == "nats":
        return u
    if units == "bits":
        return u * LN2
    raise ValueError(f"units must be 'nats' or 'bits', got {units!r}")


def tail_bound(u: float, sep: SeparationParams, atten: AttenuationModel, units: str = "nats") -> float:
    """Analytic bound on ``P(S_ii >= u)`` under deterministic fading.

    ``C_sep * (3 C_dec)**(D_sep/alpha) * exp(-2u * D_sep/alpha)`` with ``u`` in
    nats, from ``SNR >= e^{2u}/3  =>  d <= (3 C_dec)^{1/alpha} e^{-2u/alpha}``.
    Pass ``units="bits"`` when ``u`` is a threshold on rates measured in bits;
    it is converted before evaluation.  The bound may exceed one.
    """
    if u < 1:
        raise ValueError(f"threshold must be >= 1, got {u}")
    u = _to_nats(u, units)
    ratio = sep.d_sep / atten.alpha
    return sep.c_sep * (3.0 * atten.c_dec) ** ratio * math.exp(-2.0 * u * ratio)


def tail_bound_fading(
    u: float,
    sep: SeparationParams,
    atten: AttenuationModel,
    fading_mean: float,
    units: str = "nats",
) -> float:
    """Two-term bound on ``P(S_ii >= u)`` with i.i.d. fading of the given mean.

    ``sqrt(3) E[M] e^{-u} + C_sep (sqrt(3) C_dec)**(D_sep/alpha) e^{-u D_sep/alpha}``
    (Markov on the multiplier plus separation on the distance), ``u`` in nats.
    """
    if u < 1:
        raise ValueError(f"threshold must be >= 1, got {u}")
    u = _to_nats(u, units)
    ratio = sep.d_sep / atten.alpha
    markov = math.sqrt(3.0) * fading_mean * math.exp(-u)
    geometric = sep.c_sep * (atten.c_dec * math.sqrt(3.0)) ** ratio * math.exp(-u * ratio)
    return markov + geometric


@dataclass
class BoundsReport:
    """Bounds on sum capacity for one network instance.

    ``contributions`` are ``(label, value)`` with ``label`` a tuple of link
    indices: a pair ``(j, i)`` for a matched two-user bound and ``(i,)`` for a
    single-link term.  They sum to ``upper`` (or to ``lower`` for the
    lower-bound-only ``"ia"`` report, whose ``upper`` is ``None``).
    """

    lower: float
    upper: float | None
    method: str
    parameters: dict[str, Any] = field(default_factory=dict)
    contributions: list[tuple[tuple[int, ...], float]] = field(default_factory=list)
    certificate: list[tuple[int, int]] = field(default_factory=list)
    sweep: list[dict[str, Any]] = field(default_factory=list)

    def __post_init__(self):
        if self.method not in ("ia", "box", "snr_categories", "single_user"):
            raise ValueError(f"unknown method {self.method!r}")

    def check(self) -> None:
        """Raise AssertionError if the report's own invariants fail."""
        total = math.fsum(v for _, v in self.contributions)
        target = self.lower if self.upper is None else self.upper
        assert abs(total - target) <= 1e-9 * max(1.0, abs(target)), (total, target)
        if self.upper is not None:
            assert self.lower <= self.upper, (self.lower, self.upper)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "lower": self.lower,
            "upper": self.upper,
            "parameters": self.parameters,
            "contributions": [
                {"links": list(label), "value": value} for label, value in sorted(self.contributions)
            ],
            "certificate": [list(p) for p in sorted(self.certificate)],
            "sweep": self.sweep,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _snr_vector(network_or_snr) -> np.ndarray:
    snr = getattr(network_or_snr, "snr", network_or_snr)
    return np.asarray(snr, dtype=float).reshape(-1)


def lower_bound_ia(network_or_snr) -> BoundsReport:
    """Achievable sum rate ``sum_i 0.5 * log2(1 + 2 SNR_i)`` by interference alignment.

    Accepts a :class:`~icbounds.net_model.NetworkInstance` or a bare SNR vector.
    """
    terms = [((i,), per_link_rate(s)) for i, s in enumerate(_snr_vector(network_or_snr))]
    return BoundsReport(
        lower=math.fsum(v for _, v in terms),
        upper=None,
        method="ia",
        contributions=terms,
    )


def single_user_report(network_or_snr) -> BoundsReport:
    """Upper bound with every link on its own: ``sum_i log2(1 + SNR_i)``."""
    snr = _snr_vector(network_or_snr)
    terms = [((i,), single_user_bound(s)) for i, s in enumerate(snr)]
    return BoundsReport(
        lower=lower_bound_ia(snr).lower,
        upper=math.fsum(v for _, v in terms),
        method="single_user",
        contributions=terms,
    )
