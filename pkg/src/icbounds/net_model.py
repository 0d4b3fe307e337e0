"""Random network generation: domains, node placement, attenuation and fading.

A network has ``K`` transmitter/receiver pairs.  ``gains[i, j]`` is the
received power of transmitter ``i`` at receiver ``j`` (noise normalised to
one), so the diagonal holds the SNRs and the off-diagonal entries the INRs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from icbounds.seeding import derive_rng

QuantileFn = Callable[[np.ndarray], np.ndarray]

_MONOTONE_GRID = np.linspace(0.0, 1.0, 1025)


class ConfigurationError(ValueError):
    """Invalid network or experiment configuration."""


class UnsupportedDomainError(ConfigurationError):
    """Operation needs closed-form quantities the domain does not provide."""


def unit_ball_volume(dimension: int) -> float:
    return math.pi ** (dimension / 2) / math.gamma(dimension / 2 + 1)


@dataclass(frozen=True)
class SeparationParams:
    """Constants with P(d(T, R) <= s) <= c_sep * s**d_sep for all s."""

    c_sep: float
    d_sep: float

    def __post_init__(self):
        for name in ("c_sep", "d_sep"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be finite and positive, got {value}")


def _check_quantile(fn: QuantileFn, label: str) -> None:
    values = np.asarray(fn(_MONOTONE_GRID), dtype=float)
    if values.shape != _MONOTONE_GRID.shape or not np.all(np.isfinite(values)):
        raise ConfigurationError(f"quantile function {label} must map [0,1] to finite reals")
    if np.any(np.diff(values) < 0):
        raise ConfigurationError(f"quantile function {label} is not nondecreasing on [0,1]")


@dataclass(frozen=True, eq=False)
class Domain:
    """Spatial region that transmitters and receivers are drawn from.

    ``unit_cube`` is ``[0,1]^D``; ``unit_ball`` is the radius-one ball centred
    at ``(1, ..., 1)`` so that it sits inside ``[0,2]^D``.  ``product_quantile``
    draws each coordinate independently through its quantile function, with
    separate marginals for receivers and transmitters.
    """

    kind: str
    dimension: int
    volume: float
    bounding_side: float
    rx_quantiles: tuple[QuantileFn, ...] | None = None
    tx_quantiles: tuple[QuantileFn, ...] | None = None
    separation: SeparationParams | None = None
    description: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("unit_cube", "unit_ball", "product_quantile"):
            raise ConfigurationError(f"unknown domain kind {self.kind!r}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ConfigurationError(f"dimension must be a positive integer, got {self.dimension}")
        if not (self.volume > 0 and self.bounding_side > 0):
            raise ConfigurationError("volume and bounding_side must be positive")
        has_q = self.rx_quantiles is not None or self.tx_quantiles is not None
        if (self.kind == "product_quantile") != has_q:
            raise ConfigurationError("quantile functions are required for, and only for, product_quantile")
        if has_q:
            for role, fns in (("rx", self.rx_quantiles), ("tx", self.tx_quantiles)):
                if fns is None or len(fns) != self.dimension:
                    raise ConfigurationError(f"need {self.dimension} {role} quantile functions")
                for axis, fn in enumerate(fns):
                    _check_quantile(fn, f"{role}[{axis}]")
                    lo, hi = float(fn(np.array([0.0]))[0]), float(fn(np.array([1.0]))[0])
                    if lo < 0 or hi > self.bounding_side:
                        raise ConfigurationError(
                            f"{role}[{axis}] support [{lo}, {hi}] not inside [0, {self.bounding_side}]"
                        )

    @classmethod
    def unit_cube(cls, dimension: int) -> Domain:
        return cls("unit_cube", dimension, 1.0, 1.0, description={"kind": "unit_cube", "dimension": dimension})

    @classmethod
    def unit_ball(cls, dimension: int) -> Domain:
        return cls(
            "unit_ball",
            dimension,
            unit_ball_volume(dimension),
            2.0,
            description={"kind": "unit_ball", "dimension": dimension},
        )

    @classmethod
    def product_quantile(
        cls,
        rx_quantiles: Sequence[QuantileFn],
        tx_quantiles: Sequence[QuantileFn],
        bounding_side: float | None = None,
        separation: SeparationParams | None = None,
        description: dict | None = None,
    ) -> Domain:
        rx_quantiles, tx_quantiles = tuple(rx_quantiles), tuple(tx_quantiles)
        ends = [float(fn(np.array([1.0]))[0]) for fn in rx_quantiles + tx_quantiles]
        side = bounding_side if bounding_side is not None else max(max(ends), 1e-12)
        # volume of the bounding box of the supports; only used for reporting
        lengths = [
            float(np.ptp(np.asarray(fn(np.array([0.0, 1.0])), dtype=float))) or 1.0
            for fn in rx_quantiles
        ]
        return cls(
            "product_quantile",
            len(rx_quantiles),
            float(np.prod(lengths)),
            side,
            rx_quantiles,
            tx_quantiles,
            separation,
            description,
        )

    @property
    def centre(self) -> np.ndarray:
        return np.full(self.dimension, 1.0)

    def sample(self, rng: np.random.Generator, n: int, role: str) -> np.ndarray:
        """``n`` i.i.d. points for ``role`` ('tx' or 'rx') as an (n, D) array."""
        D = self.dimension
        if self.kind == "unit_cube":
            return rng.random((n, D))
        if self.kind == "unit_ball":
            direction = rng.standard_normal((n, D))
            norms = np.linalg.norm(direction, axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            radius = rng.random((n, 1)) ** (1.0 / D)
            return self.centre + direction / norms * radius
        fns = self.rx_quantiles if role == "rx" else self.tx_quantiles
        uniforms = rng.random((n, D))
        points = np.empty_like(uniforms)
        for axis, fn in enumerate(fns):
            points[:, axis] = np.asarray(fn(uniforms[:, axis]), dtype=float)
            order = np.argsort(uniforms[:, axis], kind="stable")
            if np.any(np.diff(points[order, axis]) < 0):
                raise ConfigurationError(f"non-monotone sample from {role} quantile function {axis}")
        return points

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.kind == "unit_ball":
            return np.linalg.norm(points - self.centre, axis=1) <= 1.0
        return np.all((points >= 0) & (points <= self.bounding_side), axis=1)

    def cube_inside(self, lower: np.ndarray, side: float) -> np.ndarray:
        """Whether each axis-aligned cube ``[lower, lower + side)`` lies inside the domain.

        ``lower`` has shape (n, D).  For ``product_quantile`` the grid lives in
        quantile coordinates, so every grid cell is inside.
        """
        lower = np.atleast_2d(np.asarray(lower, dtype=float))
        if self.kind == "unit_ball":
            far = np.maximum(np.abs(lower - self.centre), np.abs(lower + side - self.centre))
            return np.sqrt(np.sum(far**2, axis=1)) <= 1.0 + 1e-12
        if self.kind == "unit_cube":
            return np.all((lower >= -1e-12) & (lower + side <= 1.0 + 1e-12), axis=1)
        return np.ones(len(lower), dtype=bool)

    def cube_intersects(self, lower: np.ndarray, side: float) -> np.ndarray:
        lower = np.atleast_2d(np.asarray(lower, dtype=float))
        if self.kind == "unit_ball":
            near = np.clip(self.centre, lower, lower + side) - self.centre
            return np.sqrt(np.sum(near**2, axis=1)) < 1.0
        if self.kind == "unit_cube":
            return np.all((lower < 1.0) & (lower + side > 0.0), axis=1)
        return np.ones(len(lower), dtype=bool)

    def to_dict(self) -> dict:
        if self.description is not None:
            return dict(self.description)
        return {"kind": self.kind, "dimension": self.dimension}


@dataclass(frozen=True)
class AttenuationModel:
    """Path loss ``f(d) = min(P0, c_dec * d**-alpha)``."""

    alpha: float
    c_dec: float = 1.0
    near_field_cap: float = 1e6

    def __post_init__(self):
        if not (self.alpha > 0 and self.c_dec > 0 and self.near_field_cap > 0):
            raise ConfigurationError("alpha, c_dec and near_field_cap must be positive")

    def __call__(self, distance):
        d = np.asarray(distance, dtype=float)
        with np.errstate(divide="ignore"):
            power = self.c_dec * np.power(d, -self.alpha)
        out = np.minimum(self.near_field_cap, power)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FadingModel:
    """Multiplicative fading on every link.

    ``iid_multiplier`` draws independent multipliers per (i, j).  Supported
    distributions: ``uniform`` on ``(low, high]`` (default ``(0, 2]``) and
    ``exponential`` with the given mean.
    """

    kind: str = "deterministic"
    distribution: str = "uniform"
    params: tuple[float, ...] = (0.0, 2.0)

    def __post_init__(self):
        if self.kind not in ("deterministic", "iid_multiplier"):
            raise ConfigurationError(f"unknown fading kind {self.kind!r}")
        if self.kind == "iid_multiplier":
            if self.distribution == "uniform":
                low, high = self.params
                if not 0 <= low < high:
                    raise ConfigurationError("uniform fading needs 0 <= low < high")
            elif self.distribution == "exponential":
                if not self.params[0] > 0:
                    raise ConfigurationError("exponential fading needs a positive mean")
            else:
                raise ConfigurationError(f"unknown fading distribution {self.distribution!r}")

    @classmethod
    def deterministic(cls) -> FadingModel:
        return cls()

    @classmethod
    def uniform(cls, low: float = 0.0, high: float = 2.0) -> FadingModel:
        return cls("iid_multiplier", "uniform", (float(low), float(high)))

    @property
    def is_random(self) -> bool:
        return self.kind == "iid_multiplier"

    @property
    def mean(self) -> float:
        if not self.is_random:
            return 1.0
        if self.distribution == "uniform":
            return 0.5 * (self.params[0] + self.params[1])
        return float(self.params[0])

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if not self.is_random:
            return np.ones(shape)
        if self.distribution == "uniform":
            low, high = self.params
            # (low, high] keeps multipliers strictly positive when low = 0
            return high - (high - low) * rng.random(shape)
        return rng.exponential(self.params[0], shape)

    def to_dict(self) -> dict:
        if not self.is_random:
            return {"kind": "deterministic"}
        return {"kind": self.kind, "distribution": self.distribution, "params": list(self.params)}


@dataclass(frozen=True)
class NetworkConfig:
    domain: Domain
    attenuation: AttenuationModel
    fading: FadingModel = field(default_factory=FadingModel)
    k: int = 0

    def __post_init__(self):
        if self.k < 0:
            raise ConfigurationError(f"k must be nonnegative, got {self.k}")
        if self.attenuation.alpha < self.domain.dimension:
            raise ConfigurationError(
                f"decay exponent alpha={self.attenuation.alpha} is below dimension {self.domain.dimension}"
            )

    def with_k(self, k: int) -> NetworkConfig:
        return NetworkConfig(self.domain, self.attenuation, self.fading, int(k))

    def to_dict(self) -> dict:
        a = self.attenuation
        return {
            "domain": self.domain.to_dict(),
            "attenuation": {"alpha": a.alpha, "c_dec": a.c_dec, "near_field_cap": a.near_field_cap},
            "fading": self.fading.to_dict(),
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, data: dict) -> NetworkConfig:
        domain = domain_from_dict(data.get("domain", {"kind": "unit_cube", "dimension": 2}))
        att = data.get("attenuation", {})
        attenuation = AttenuationModel(
            float(att.get("alpha", 4.0)),
            float(att.get("c_dec", 1.0)),
            float(att.get("near_field_cap", 1e6)),
        )
        fad = data.get("fading", {"kind": "deterministic"})
        if fad.get("kind", "deterministic") == "deterministic":
            fading = FadingModel()
        else:
            fading = FadingModel(
                "iid_multiplier",
                fad.get("distribution", "uniform"),
                tuple(float(p) for p in fad.get("params", (0.0, 2.0))),
            )
        return cls(domain, attenuation, fading, int(data.get("k", 0)))


def _scipy_quantile(entry: dict) -> QuantileFn:
    from scipy import stats

    dist = getattr(stats, entry["dist"])(*entry.get("args", ()), **entry.get("kwargs", {}))
    return dist.ppf


def domain_from_dict(data: dict) -> Domain:
    """Build a domain from a config mapping.

    Quantile marginals are given as scipy.stats distributions, e.g.
    ``{"dist": "beta", "args": [2, 2]}``; the separation override as
    ``{"c_sep": ..., "d_sep": ...}``.
    """
    kind = data.get("kind", "unit_cube")
    if kind == "unit_cube":
        return Domain.unit_cube(int(data.get("dimension", 2)))
    if kind == "unit_ball":
        return Domain.unit_ball(int(data.get("dimension", 2)))
    if kind == "product_quantile":
        sep = data.get("separation")
        return Domain.product_quantile(
            [_scipy_quantile(e) for e in data["rx_quantiles"]],
            [_scipy_quantile(e) for e in data["tx_quantiles"]],
            data.get("bounding_side"),
            SeparationParams(float(sep["c_sep"]), float(sep["d_sep"])) if sep else None,
            description=dict(data),
        )
    raise ConfigurationError(f"unknown domain kind {kind!r}")


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    k: int
    tx_positions: np.ndarray
    rx_positions: np.ndarray
    gains: np.ndarray
    fading_multipliers: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("tx_positions", "rx_positions", "gains", "fading_multipliers"):
            value = getattr(self, name)
            if value is not None:
                value = np.array(value, dtype=float)
                value.setflags(write=False)
                object.__setattr__(self, name, value)
        if self.gains.shape != (self.k, self.k):
            raise ValueError(f"gains must be {self.k}x{self.k}, got {self.gains.shape}")
        if len(self.tx_positions) != self.k or len(self.rx_positions) != self.k:
            raise ValueError("position lists must have k entries")

    @property
    def dimension(self) -> int:
        return self.tx_positions.shape[1] if self.tx_positions.ndim == 2 else 0

    @property
    def snr(self) -> np.ndarray:
        return np.diagonal(self.gains)

    def equals(self, other: NetworkInstance) -> bool:
        """Field-for-field, bit-for-bit comparison."""
        same = self.k == other.k and self.seed == other.seed
        for name in ("tx_positions", "rx_positions", "gains"):
            same = same and np.array_equal(getattr(self, name), getattr(other, name))
        a, b = self.fading_multipliers, other.fading_multipliers
        return same and ((a is None and b is None) or (a is not None and b is not None and np.array_equal(a, b)))

    def permuted(self, order: Sequence[int]) -> NetworkInstance:
        order = np.asarray(order)
        fm = None if self.fading_multipliers is None else self.fading_multipliers[np.ix_(order, order)]
        return NetworkInstance(
            self.k,
            self.tx_positions[order],
            self.rx_positions[order],
            self.gains[np.ix_(order, order)],
            fm,
            self.seed,
        )

    def to_json(self) -> str:
        return network_to_json(self)


def compute_gains(
    tx: np.ndarray,
    rx: np.ndarray,
    attenuation: AttenuationModel,
    fading: FadingModel | None = None,
    seed: int | np.random.Generator = 0,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Gain matrix ``gains[i, j] = M_ij * f(d(T_i, R_j))`` and the multipliers.

    Multipliers are ``None`` for deterministic fading.  ``seed`` is either a
    64-bit seed (the fading stream is derived from it) or a generator.
    """
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if len(tx) != len(rx):
        raise ValueError("tx and rx position lists must have equal length")
    k = len(tx)
    if k == 0:
        return np.zeros((0, 0)), None
    gains = np.asarray(attenuation(cdist(tx, rx)), dtype=float)
    if fading is None or not fading.is_random:
        return gains, None
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(seed, "fading")
    multipliers = fading.sample(rng, (k, k))
    return multipliers * gains, multipliers


def sample_positions(config: NetworkConfig, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Transmitter and receiver positions of :func:`sample_network`, without gains."""
    rng = derive_rng(seed, "positions")
    tx = config.domain.sample(rng, config.k, "tx")
    rx = config.domain.sample(rng, config.k, "rx")
    return tx, rx


def sample_network(config: NetworkConfig, seed: int) -> NetworkInstance:
    """Draw an IID network: ``k`` transmitters and ``k`` receivers, independently."""
    domain, k = config.domain, config.k
    tx, rx = sample_positions(config, seed)
    gains, multipliers = compute_gains(tx, rx, config.attenuation, config.fading, seed)
    if k == 0:
        tx = rx = np.zeros((0, domain.dimension))
    return NetworkInstance(k, tx, rx, gains, multipliers, int(seed))


def derive_separation_params(domain: Domain) -> SeparationParams:
    """Separation constants from a bounded density: ``C_sep = C * V_D``, ``D_sep = D``.

    ``C`` is the uniform density ``1 / volume``.  Product-quantile domains
    need an explicit override on the domain.
    """
    if domain.kind in ("unit_cube", "unit_ball"):
        return SeparationParams(unit_ball_volume(domain.dimension) / domain.volume, float(domain.dimension))
    if domain.separation is not None:
        return domain.separation
    raise UnsupportedDomainError("product_quantile domains need a separation override")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fmt_matrix(rows: np.ndarray) -> str:
    return "[" + ", ".join("[" + ", ".join(_fmt(v) for v in row) + "]" for row in rows) + "]"


def network_to_json(network: NetworkInstance) -> str:
    """JSON with reals printed to 17 significant digits (exact round trip)."""
    parts = [
        f'"k": {network.k}',
        f'"dimension": {network.dimension}',
        f'"tx": {_fmt_matrix(network.tx_positions)}',
        f'"rx": {_fmt_matrix(network.rx_positions)}',
        f'"gains": {_fmt_matrix(network.gains)}',
        f'"seed": {network.seed}',
    ]
    if network.fading_multipliers is not None:
        parts.append(f'"fading_multipliers": {_fmt_matrix(network.fading_multipliers)}')
    return "{" + ", ".join(parts) + "}"


def network_from_json(text: str | dict[str, Any]) -> NetworkInstance:
    data = json.loads(text) if isinstance(text, str) else text
    k, dim = int(data["k"]), int(data["dimension"])
    fm = data.get("fading_multipliers")
    return NetworkInstance(
        k,
        np.array(data["tx"], dtype=float).reshape(k, dim),
        np.array(data["rx"], dtype=float).reshape(k, dim),
        np.array(data["gains"], dtype=float).reshape(k, k),
        None if fm is None else np.array(fm, dtype=float).reshape(k, k),
        int(data["seed"]),
    )
