"""Instance files, generated instances, and experiment descriptions.

Markets and experiment specs are stored as JSON with named fields; the
exact grammar is documented in the README.  Parsing distinguishes syntax
problems (ParseError, with line and column) from semantic ones
(ConfigError, naming the offending field).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .market import ContinuationSpec, Market
from .policies import PolicyKind

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "ParseError",
    "demo_market",
    "experiment_from_dict",
    "load_experiment",
    "load_market",
    "market_from_dict",
    "market_to_dict",
    "random_market",
    "save_market",
    "visibility_profile",
]

VISIBILITY_PROFILES = ("harmonic", "equal")

QUALITY_RANGE = (0.01, 1.0)
APPEAL_RANGE = (0.01, 10.0)


class ParseError(ValueError):
    """A file could not be read as JSON."""


class ConfigError(ValueError):
    """A parsed document violates the schema; the message names the field."""


def _load_json(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def _require(doc: dict, field: str, kind, context: str):
    if field not in doc:
        raise ConfigError(f"{context}: missing field '{field}'")
    value = doc[field]
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is list and isinstance(value, list):
        return value
    if kind is str and isinstance(value, str):
        return value
    if kind is dict and isinstance(value, dict):
        return value
    raise ConfigError(f"{context}: field '{field}' must be a {kind.__name__}")


def _vector(doc: dict, field: str, context: str) -> np.ndarray:
    raw = _require(doc, field, list, context)
    try:
        return np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{context}: field '{field}' must be a list of numbers") from None


def _continuation_from_dict(doc, context: str) -> ContinuationSpec:
    if doc is None:
        return ContinuationSpec.none()
    if not isinstance(doc, dict):
        raise ConfigError(f"{context}: field 'continuation' must be an object")
    kind = _require(doc, "kind", str, f"{context}.continuation")
    try:
        if kind == "none":
            return ContinuationSpec.none()
        if kind == "polynomial":
            rho = _require(doc, "rho", float, f"{context}.continuation")
            r = _require(doc, "r", float, f"{context}.continuation")
            return ContinuationSpec.polynomial(rho, r)
        if kind == "explicit":
            values = _vector(doc, "values", f"{context}.continuation")
            return ContinuationSpec.explicit(values)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{context}.continuation: {exc}") from None
    raise ConfigError(
        f"{context}.continuation: field 'kind' must be one of none, polynomial, explicit"
    )


def market_from_dict(doc: dict, context: str = "market") -> Market:
    quality = _vector(doc, "quality", context)
    appeal = _vector(doc, "appeal", context)
    visibility = _vector(doc, "visibility", context)
    if "n" in doc:
        n = _require(doc, "n", int, context)
        if n != quality.shape[0]:
            raise ConfigError(
                f"{context}: field 'n' is {n} but 'quality' has {quality.shape[0]} entries"
            )
    cont = _continuation_from_dict(doc.get("continuation"), context)
    try:
        return Market(
            quality=quality,
            appeal=appeal,
            visibility=visibility,
            continuation=cont,
            reduced=bool(doc.get("reduced", False)),
            allow_unsorted_visibility=bool(doc.get("allow_unsorted_visibility", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from None


def market_to_dict(market: Market) -> dict:
    cont: dict = {"kind": market.continuation.kind}
    if market.continuation.kind == "polynomial":
        cont["rho"] = market.continuation.rho
        cont["r"] = market.continuation.r
    elif market.continuation.kind == "explicit":
        cont["values"] = [float(c) for c in market.continuation.values]
    doc = {
        "n": market.n,
        "quality": [float(q) for q in market.quality],
        "appeal": [float(a) for a in market.appeal],
        "visibility": [float(v) for v in market.visibility],
        "continuation": cont,
    }
    if market.reduced:
        doc["reduced"] = True
    if market.allow_unsorted_visibility:
        doc["allow_unsorted_visibility"] = True
    return doc


def load_market(path) -> Market:
    return market_from_dict(_load_json(path), context=str(path))


def save_market(market: Market, path) -> None:
    Path(path).write_text(
        json.dumps(market_to_dict(market), indent=2) + "\n", encoding="utf-8"
    )


def demo_market(continuation: ContinuationSpec | None = None) -> Market:
    """Three-product instance used in documentation, checks and tests."""
    return Market(
        quality=np.array([0.9, 0.2, 0.6]),
        appeal=np.array([0.9, 0.1, 0.3]),
        visibility=np.array([0.8, 0.5, 0.1]),
        continuation=continuation or ContinuationSpec.none(),
    )


def _minmax_map(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Affinely map a vector onto [lo, hi]; a constant vector maps to the midpoint.

    Clipped afterwards: the float arithmetic can overshoot the endpoints by
    an ulp, which must not leak past range validation downstream.
    """
    span = float(x.max() - x.min())
    if span == 0.0:
        return np.full_like(x, 0.5 * (lo + hi))
    return np.clip(lo + (x - x.min()) * (hi - lo) / span, lo, hi)


def visibility_profile(name: str, n: int) -> np.ndarray:
    """Named visibility vectors: 'harmonic' is 1/position, 'equal' is flat."""
    if n < 1:
        raise ValueError(f"need at least one position, got n={n}")
    if name == "harmonic":
        return 1.0 / np.arange(1, n + 1, dtype=float)
    if name == "equal":
        return np.ones(n, dtype=float)
    raise ConfigError(
        f"unknown visibility profile {name!r}; expected one of {', '.join(VISIBILITY_PROFILES)}"
    )


def gaussian_quality_appeal(
    n: int,
    rng: np.random.Generator,
    mean_quality: float = 0.5,
    sd_quality: float = 0.2,
    mean_appeal: float = 0.5,
    sd_appeal: float = 0.2,
    quality_range: tuple[float, float] = QUALITY_RANGE,
    appeal_range: tuple[float, float] = APPEAL_RANGE,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian quality/appeal draws, min-max normalized into target ranges.

    Defaults put qualities in [0.01, 1] and appeals in [0.01, 10]; the
    ranges are overridable (e.g. appeals normalized into (0, 1) to mimic
    listening-market experiments).  Normalization is rejection-free so the
    draw count is fixed and reproducible.
    """
    if n < 1:
        raise ValueError(f"need at least one product, got n={n}")
    q_lo, q_hi = quality_range
    a_lo, a_hi = appeal_range
    if not 0.0 < q_lo <= q_hi <= 1.0:
        raise ValueError(f"quality_range must satisfy 0 < lo <= hi <= 1, got {quality_range}")
    if not 0.0 < a_lo <= a_hi:
        raise ValueError(f"appeal_range must satisfy 0 < lo <= hi, got {appeal_range}")
    q = _minmax_map(rng.normal(mean_quality, sd_quality, n), q_lo, q_hi)
    a = _minmax_map(rng.normal(mean_appeal, sd_appeal, n), a_lo, a_hi)
    return q, a


def random_market(
    rng: np.random.Generator,
    n_min: int = 1,
    n_max: int = 20,
    continuation: str = "polynomial",
    rho_range: tuple[float, float] = (0.0, 1.0),
    r_range: tuple[float, float] = (0.0, 3.0),
) -> Market:
    """Random instance for property sweeps and the verification suite.

    Qualities are uniform on [0.01, 1], appeals uniform on (0, 10],
    visibilities are sorted uniform draws.  ``continuation`` picks the spec
    family: "polynomial" (rho, r uniform in the given ranges), "explicit"
    (a random fraction of the decline probability 1 - q_i) or "none".
    """
    n = int(rng.integers(n_min, n_max + 1))
    quality = rng.uniform(0.01, 1.0, n)
    appeal = rng.uniform(0.01, 10.0, n)
    visibility = np.sort(rng.uniform(0.05, 1.0, n))[::-1]
    if continuation == "polynomial":
        spec = ContinuationSpec.polynomial(
            rho=float(rng.uniform(*rho_range)), r=float(rng.uniform(*r_range))
        )
    elif continuation == "explicit":
        spec = ContinuationSpec.explicit(rng.uniform(0.0, 0.95, n) * (1.0 - quality))
    elif continuation == "none":
        spec = ContinuationSpec.none()
    else:
        raise ValueError(f"unknown continuation family {continuation!r}")
    return Market(quality=quality, appeal=appeal, visibility=visibility, continuation=spec)


@dataclass(frozen=True)
class ExperimentSpec:
    """Parsed experiment description: base instance plus the sweep grid."""

    market: Market  # base instance, no continuation attached
    sweep: tuple[tuple[float, float], ...]  # (rho, r) cells
    policies: tuple[PolicyKind, ...]
    steps: int
    rerank_period: int
    replications: int
    base_seed: int
    social_influence: bool = True
    max_session_tries: int = 10_000
    trajectory_interval: int | None = None
    output_dir: str | None = None


def _instance_from_dict(doc: dict, base_seed: int) -> tuple[np.ndarray, np.ndarray]:
    if "explicit" in doc:
        sub = _require(doc, "explicit", dict, "instance")
        return (
            _vector(sub, "quality", "instance.explicit"),
            _vector(sub, "appeal", "instance.explicit"),
        )
    if "gaussian" in doc:
        sub = _require(doc, "gaussian", dict, "instance")
        n = _require(sub, "n", int, "instance.gaussian")
        if n < 1:
            raise ConfigError("instance.gaussian: field 'n' must be >= 1")
        seed = sub.get("seed", base_seed)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("instance.gaussian: field 'seed' must be a non-negative integer")

        def _range(field, default):
            raw = sub.get(field)
            if raw is None:
                return default
            if (
                not isinstance(raw, list)
                or len(raw) != 2
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw)
            ):
                raise ConfigError(
                    f"instance.gaussian: field '{field}' must be a [low, high] pair"
                )
            return float(raw[0]), float(raw[1])

        rng = np.random.default_rng(np.random.SeedSequence([seed]))
        try:
            return gaussian_quality_appeal(
                n,
                rng,
                mean_quality=float(sub.get("mean_quality", 0.5)),
                sd_quality=float(sub.get("sd_quality", 0.2)),
                mean_appeal=float(sub.get("mean_appeal", 0.5)),
                sd_appeal=float(sub.get("sd_appeal", 0.2)),
                quality_range=_range("quality_range", QUALITY_RANGE),
                appeal_range=_range("appeal_range", APPEAL_RANGE),
            )
        except ValueError as exc:
            raise ConfigError(f"instance.gaussian: {exc}") from None
    raise ConfigError("instance: must contain 'explicit' or 'gaussian'")


def _visibility_from_dict(doc: dict, n: int) -> np.ndarray:
    if "explicit" in doc:
        vec = _vector(doc, "explicit", "visibility")
        if vec.shape[0] != n:
            raise ConfigError(
                f"visibility.explicit: expected {n} entries, got {vec.shape[0]}"
            )
        return vec
    if "profile" in doc:
        return visibility_profile(_require(doc, "profile", str, "visibility"), n)
    raise ConfigError("visibility: must contain 'explicit' or 'profile'")


def experiment_from_dict(doc: dict) -> ExperimentSpec:
    base_seed = _require(doc, "base_seed", int, "experiment")
    if base_seed < 0:
        raise ConfigError("experiment: field 'base_seed' must be >= 0")
    quality, appeal = _instance_from_dict(
        _require(doc, "instance", dict, "experiment"), base_seed
    )
    visibility = _visibility_from_dict(
        _require(doc, "visibility", dict, "experiment"), quality.shape[0]
    )
    sweep_raw = _require(doc, "sweep", list, "experiment")
    if not sweep_raw:
        raise ConfigError("experiment: field 'sweep' must not be empty")
    sweep = []
    for i, cell in enumerate(sweep_raw):
        if not isinstance(cell, dict):
            raise ConfigError(f"sweep[{i}]: must be an object with 'rho' and 'r'")
        rho = _require(cell, "rho", float, f"sweep[{i}]")
        r = _require(cell, "r", float, f"sweep[{i}]")
        try:
            ContinuationSpec.polynomial(rho, r)
        except ValueError as exc:
            raise ConfigError(f"sweep[{i}]: {exc}") from None
        sweep.append((rho, r))
    policies_raw = _require(doc, "policies", list, "experiment")
    if not policies_raw:
        raise ConfigError("experiment: field 'policies' must not be empty")
    try:
        policies = tuple(PolicyKind.parse(str(p)) for p in policies_raw)
    except ValueError as exc:
        raise ConfigError(f"experiment: policies: {exc}") from None
    steps = _require(doc, "steps", int, "experiment")
    rerank_period = doc.get("rerank_period", 50)
    replications = doc.get("replications", 1)
    for name, value in (
        ("steps", steps),
        ("rerank_period", rerank_period),
        ("replications", replications),
    ):
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ConfigError(f"experiment: field '{name}' must be an integer >= 1")
    trajectory_interval = doc.get("trajectory_interval")
    if trajectory_interval is not None and (
        not isinstance(trajectory_interval, int) or trajectory_interval < 1
    ):
        raise ConfigError("experiment: field 'trajectory_interval' must be an integer >= 1")
    max_tries = doc.get("max_session_tries", 10_000)
    if not isinstance(max_tries, int) or max_tries < 1:
        raise ConfigError("experiment: field 'max_session_tries' must be an integer >= 1")
    output_dir = doc.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigError("experiment: field 'output_dir' must be a string")
    try:
        market = Market(quality=quality, appeal=appeal, visibility=visibility)
    except ValueError as exc:
        raise ConfigError(f"experiment: instance: {exc}") from None
    return ExperimentSpec(
        market=market,
        sweep=tuple(sweep),
        policies=policies,
        steps=steps,
        rerank_period=rerank_period,
        replications=replications,
        base_seed=base_seed,
        social_influence=bool(doc.get("social_influence", True)),
        max_session_tries=max_tries,
        trajectory_interval=trajectory_interval,
        output_dir=output_dir,
    )


def load_experiment(path) -> ExperimentSpec:
    return experiment_from_dict(_load_json(path))
