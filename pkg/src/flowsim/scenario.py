"""Scenario files: flat key=value configs that drive the command line.

Lines read `key = value`; `#` and `;` start comments.  Repeated keys build
lists (atom, gamma_knot, label, output_time, lambda, query, k, x0, check),
e.g. `atom = 0.5:2.0` adds the jump size 0.5 with weight 2.0.  Unknown and
duplicated scalar keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .measures import BranchingMechanism, ImmigrationFunction, JumpMeasure, PowerPart
from .cbi import CbiParams
from .fv import FvParams
from .scaling import ScalingFamily

__all__ = ["ConfigError", "Scenario", "parse_scenario", "load_scenario"]


class ConfigError(ValueError):
    """Configuration problem; messages carry line/field context."""


LIST_KEYS = frozenset(
    {"atom", "gamma_knot", "label", "output_time", "lambda", "query", "k", "x0", "check"}
)
SCALAR_KEYS = frozenset(
    {
        "kind",
        "sigma",
        "b",
        "power",
        "horizon",
        "dt",
        "eps",
        "replicas",
        "drift_replicas",
        "seed",
        "out",
        "window",
        "pmax",
        "delta",
        "grid",
        "property_cases",
        "extra",
    }
)
KINDS = ("cbi", "fv", "scaling")


def _parse_lines(text, source):
    """Raw key -> list of (context, value-string), in file order."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].split(";", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source} line {lineno}: expected key = value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in LIST_KEYS and key not in SCALAR_KEYS:
            raise ConfigError(f"{source} line {lineno}: unknown key {key!r}")
        if not value:
            raise ConfigError(f"{source} line {lineno}: key {key!r} has no value")
        entry = (f"{source} line {lineno}", value)
        if key in SCALAR_KEYS and key in raw:
            raise ConfigError(f"{source} line {lineno}: duplicate key {key!r} (first at {raw[key][0][0]})")
        raw.setdefault(key, []).append(entry)
    return raw


def _apply_overrides(raw, overrides):
    """--set entries replace the file's value(s) for that key; repeated
    --set of a list key accumulates."""
    cleared = set()
    for i, item in enumerate(overrides, start=1):
        where = f"--set #{i}"
        if "=" not in item:
            raise ConfigError(f"{where}: expected key=value, got {item!r}")
        key, _, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if key not in LIST_KEYS and key not in SCALAR_KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if not value:
            raise ConfigError(f"{where}: key {key!r} has no value")
        if key not in cleared:
            raw.pop(key, None)
            cleared.add(key)
        elif key in SCALAR_KEYS:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        raw.setdefault(key, []).append((where, value))
    return raw


def _float(key, where, s):
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"{where}: {key} expects a number, got {s!r}") from None


def _int(key, where, s):
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"{where}: {key} expects an integer, got {s!r}") from None


def _floats(key, where, s, n):
    parts = s.split(":")
    if len(parts) != n:
        raise ConfigError(f"{where}: {key} expects {n} colon-separated numbers, got {s!r}")
    return tuple(_float(key, where, p) for p in parts)


@dataclass(frozen=True)
class Scenario:
    kind: str
    sigma: float = 0.0
    b: float = 0.0
    atoms: tuple = ()
    power: tuple | None = None
    gamma_knots: tuple = ()
    labels: tuple = ()
    horizon: float = 1.0
    dt: float = 1e-3
    eps: float | None = None
    replicas: int = 1
    drift_replicas: int | None = None
    seed: int = 0
    x0: tuple | None = None
    output_times: tuple = ()
    checks: tuple = ()
    out: str | None = None
    window: float | None = None
    ks: tuple = ()
    lambdas: tuple = (0.5, 1.0, 2.0)
    queries: tuple = (0.25, 0.5, 0.75)
    pmax: int = 3
    delta: float = 1e-2
    grid: int = 1025
    property_cases: int = 1_000_000
    extra: float = 0.0
    source: str = field(default="<memory>", compare=False)


def parse_scenario(text, overrides=(), source="<config>"):
    """Parse config text plus --set overrides into a validated Scenario."""
    raw = _apply_overrides(_parse_lines(text, source), list(overrides))

    def take(key):
        return raw.pop(key)[0] if key in raw else None

    def need(key):
        got = take(key)
        if got is None:
            raise ConfigError(f"{source}: missing required key {key!r}")
        return got

    def take_list(key, parse):
        return tuple(parse(key, where, value) for where, value in raw.pop(key, ()))

    kind_at, kind = need("kind")
    if kind not in KINDS:
        raise ConfigError(f"{kind_at}: kind must be one of {', '.join(KINDS)}, got {kind!r}")

    fields = {"kind": kind, "source": source}
    for key, conv in (("sigma", _float), ("b", _float), ("horizon", _float), ("dt", _float),
                      ("window", _float), ("delta", _float), ("extra", _float)):
        got = take(key)
        if got is not None:
            fields[key] = conv(key, got[0], got[1])
    for key in ("replicas", "drift_replicas", "seed", "pmax", "grid", "property_cases"):
        got = take(key)
        if got is not None:
            fields[key] = _int(key, got[0], got[1])
    got = take("eps")
    if got is not None and got[1] != "auto":
        fields["eps"] = _float("eps", got[0], got[1])
    got = take("out")
    if got is not None:
        fields["out"] = got[1]
    got = take("power")
    if got is not None:
        fields["power"] = _floats("power", got[0], got[1], 3)

    fields["atoms"] = take_list("atom", lambda k, w, s: _floats(k, w, s, 2))
    fields["gamma_knots"] = take_list("gamma_knot", lambda k, w, s: _floats(k, w, s, 2))
    fields["labels"] = take_list("label", _float)
    fields["x0"] = take_list("x0", _float) or None
    if "output_time" in raw:
        fields["output_times"] = take_list("output_time", _float)
    if "lambda" in raw:
        fields["lambdas"] = take_list("lambda", _float)
    if "query" in raw:
        fields["queries"] = take_list("query", _float)
    fields["ks"] = take_list("k", _int)
    fields["checks"] = take_list("check", lambda k, w, s: s)

    for key in ("dt", "horizon", "replicas", "seed"):
        if key not in fields:
            raise ConfigError(f"{source}: missing required key {key!r}")
    assert not raw, f"unconsumed keys {sorted(raw)}"
    sc = Scenario(**fields)
    _validate(sc)
    return sc


def load_scenario(path, overrides=()):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from None
    return parse_scenario(text, overrides, source=str(path))


def _validate(sc: Scenario):
    src = sc.source
    if sc.dt <= 0:
        raise ConfigError(f"{src}: dt must be positive")
    if sc.horizon <= 0:
        raise ConfigError(f"{src}: horizon must be positive")
    if sc.replicas < 1:
        raise ConfigError(f"{src}: replicas must be at least 1")
    if sc.drift_replicas is not None and sc.drift_replicas < 1:
        raise ConfigError(f"{src}: drift_replicas must be at least 1")
    if not sc.labels:
        raise ConfigError(f"{src}: missing required key 'label'")
    if any(b <= a for a, b in zip(sc.labels, sc.labels[1:])):
        raise ConfigError(f"{src}: labels must strictly increase")
    if sc.labels[0] < 0:
        raise ConfigError(f"{src}: labels must be nonnegative")
    if sc.kind == "fv" and sc.labels[-1] > 1:
        raise ConfigError(f"{src}: fv labels must lie in [0, 1]")
    if sc.eps is not None and sc.eps <= 0:
        raise ConfigError(f"{src}: eps must be positive or 'auto'")
    if sc.x0 is not None:
        x0 = sc.x0 if len(sc.x0) > 1 else sc.x0 * len(sc.labels)
        if len(x0) != len(sc.labels):
            raise ConfigError(f"{src}: x0 needs one value per label (or a single value)")
        if any(b < a for a, b in zip(x0, x0[1:])) or x0[0] < 0:
            raise ConfigError(f"{src}: x0 values must be nonnegative and nondecreasing")
        if sc.kind == "fv" and x0[-1] > 1:
            raise ConfigError(f"{src}: fv x0 values must lie in [0, 1]")
    for t in sc.output_times:
        if t < 0 or t > sc.horizon:
            raise ConfigError(f"{src}: output_time {t} outside [0, horizon]")
    if sc.kind == "scaling":
        if sc.window is None:
            raise ConfigError(f"{src}: missing required key 'window'")
        if not sc.ks:
            raise ConfigError(f"{src}: missing required key 'k'")
        if any(k < 1 for k in sc.ks) or any(b <= a for a, b in zip(sc.ks, sc.ks[1:])):
            raise ConfigError(f"{src}: k values must be positive and strictly increasing")
    elif sc.ks or sc.window is not None:
        raise ConfigError(f"{src}: 'window' and 'k' apply only to scaling scenarios")
    try:
        build_params(sc)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{src}: invalid parameters: {exc}") from None


def _measure(sc: Scenario, unit):
    power = PowerPart(*sc.power) if sc.power is not None else None
    return JumpMeasure(atoms=sc.atoms, power=power, unit_interval=unit)


def _immigration(sc: Scenario, unit):
    if sc.gamma_knots:
        return ImmigrationFunction(sc.gamma_knots, unit_interval=unit)
    return ImmigrationFunction.constant(0.0, unit_interval=unit)


def build_params(sc: Scenario):
    """Scenario -> model parameter object for its kind."""
    if sc.kind == "fv":
        return FvParams(sc.sigma, sc.b, _immigration(sc, True), _measure(sc, True))
    mech = BranchingMechanism(sc.sigma, sc.b, _measure(sc, False))
    limit = CbiParams(mech, _immigration(sc, False))
    if sc.kind == "cbi":
        return limit
    return ScalingFamily(limit, sc.window, sc.ks)


def initial_values(sc: Scenario):
    """Start vector for the scenario labels; default is the identity."""
    if sc.x0 is None:
        return None
    return sc.x0 if len(sc.x0) > 1 else sc.x0 * len(sc.labels)


def output_times(sc: Scenario):
    return sc.output_times if sc.output_times else (sc.horizon,)
