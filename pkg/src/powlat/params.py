"""Scenario parameters shared by the queue model, the optimizer and the simulator.

Everything is stored in SI units: bits, seconds, bits per second. Block sizes
are always counted in transactions; use :func:`block_bits` for the physical
size of a block.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

PER_MINER = "per-miner"
AGGREGATE = "aggregate"
SERVICE_RATE_MODES = (PER_MINER, AGGREGATE)

# reference scenario sizes
HEADER_BITS = 20_000.0
TX_BITS = 5_000.0
CAPACITY_BPS = 5e6
QUEUE_SIZE = 10


class InvalidParameterError(ValueError):
    """Raised when a scenario violates one or more bounds.

    ``violations`` lists every ``(field, message)`` pair that failed.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(f"{name}: {why}" for name, why in self.violations)
        super().__init__(f"invalid-parameter: {msg}")


@dataclass(frozen=True)
class ScenarioParams:
    mu: float = 0.1
    lam: float = 0.25
    miners: int = 1
    queue_size: int = QUEUE_SIZE
    block_size_tx: int = 1
    timer: float = 100.0
    header_bits: float = HEADER_BITS
    tx_bits: float = TX_BITS
    capacity_bps: float = CAPACITY_BPS
    fork_valid_tx: int = 0
    service_rate_mode: str = AGGREGATE

    @property
    def service_rate(self) -> float:
        """Rate of the exponential block-mining time seen by the queue."""
        if self.service_rate_mode == PER_MINER:
            return self.lam
        return self.miners * self.lam

    def replace(self, **changes) -> "ScenarioParams":
        return validate_params(dataclasses.replace(self, **changes))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        return d


def validate_params(raw: ScenarioParams) -> ScenarioParams:
    """Check every invariant of ``raw`` and return a normalized copy.

    All violations are collected before raising, so the error names every
    offending field at once.
    """
    bad = []

    def check(ok, name, why):
        if not ok:
            bad.append((name, why))

    def finite_positive(name, value):
        check(isinstance(value, (int, float)) and value > 0 and not math.isnan(value),
              name, f"must be > 0 (got {value!r})")

    finite_positive("mu", raw.mu)
    finite_positive("lambda", raw.lam)
    finite_positive("capacity_bps", raw.capacity_bps)
    finite_positive("timer", raw.timer)
    check(raw.header_bits >= 0, "header_bits", f"must be >= 0 (got {raw.header_bits!r})")
    check(raw.tx_bits >= 0, "tx_bits", f"must be >= 0 (got {raw.tx_bits!r})")
    check(_is_int(raw.miners) and raw.miners >= 1, "miners", f"must be an integer >= 1 (got {raw.miners!r})")
    check(_is_int(raw.queue_size) and raw.queue_size >= 1, "queue_size",
          f"must be an integer >= 1 (got {raw.queue_size!r})")
    if not _is_int(raw.block_size_tx):
        bad.append(("block_size_tx", f"must be an integer (got {raw.block_size_tx!r})"))
    else:
        check(raw.block_size_tx >= 1, "block_size_tx", f"block_size_tx < 1 (got {raw.block_size_tx})")
        check(raw.block_size_tx <= raw.queue_size, "block_size_tx",
              f"block_size_tx > queue_size ({raw.block_size_tx} > {raw.queue_size})")
        if _is_int(raw.fork_valid_tx):
            check(0 <= raw.fork_valid_tx <= raw.block_size_tx, "fork_valid_tx",
                  f"must lie in [0, block_size_tx] (got {raw.fork_valid_tx})")
    if not _is_int(raw.fork_valid_tx):
        bad.append(("fork_valid_tx", f"must be an integer (got {raw.fork_valid_tx!r})"))
    check(raw.service_rate_mode in SERVICE_RATE_MODES, "service_rate_mode",
          f"must be one of {SERVICE_RATE_MODES} (got {raw.service_rate_mode!r})")
    if bad:
        raise InvalidParameterError(bad)

    return dataclasses.replace(
        raw,
        mu=float(raw.mu),
        lam=float(raw.lam),
        miners=int(raw.miners),
        queue_size=int(raw.queue_size),
        block_size_tx=int(raw.block_size_tx),
        timer=float(raw.timer),
        header_bits=float(raw.header_bits),
        tx_bits=float(raw.tx_bits),
        capacity_bps=float(raw.capacity_bps),
        fork_valid_tx=int(raw.fork_valid_tx),
    )


def _is_int(x) -> bool:
    if isinstance(x, bool):
        return False
    if isinstance(x, int):
        return True
    return isinstance(x, float) and x.is_integer()


def block_bits(b, h=HEADER_BITS, t=TX_BITS):
    """Physical block size in bits: header plus ``b`` transactions."""
    if b < 0:
        raise ValueError(f"block size must be >= 0 (got {b})")
    return h + b * t


# convenience keys accepted by the JSON loader, mapped to (field, factor)
_UNIT_KEYS = {
    "header_kbits": ("header_bits", 1000),
    "tx_kbits": ("tx_bits", 1000),
    "capacity_mbps": ("capacity_bps", 1_000_000),
}
_ALIASES = {"lambda": "lam", "block_size": "block_size_tx"}


def params_from_dict(d: dict) -> ScenarioParams:
    """Build validated params from a flat mapping (JSON scenario format).

    Accepts ``lambda`` for the mining rate and the ``*_kbits``/``*_mbps``
    convenience keys. Unknown keys are rejected.
    """
    fields = {f.name for f in dataclasses.fields(ScenarioParams)}
    kwargs = {}
    bad = []
    for key, value in d.items():
        if key in _UNIT_KEYS:
            name, factor = _UNIT_KEYS[key]
            if name in d:
                bad.append((key, f"conflicts with {name}"))
                continue
            # integer arithmetic keeps kbit/Mbps conversions exact
            kwargs[name] = float(value * factor) if isinstance(value, int) else float(value) * factor
            continue
        name = _ALIASES.get(key, key)
        if name not in fields:
            bad.append((key, "unknown field"))
            continue
        kwargs[name] = value
    if bad:
        raise InvalidParameterError(bad)
    return validate_params(ScenarioParams(**kwargs))


def load_scenario(path) -> ScenarioParams:
    with open(path) as fh:
        return params_from_dict(json.load(fh))


def reference_params(**overrides) -> ScenarioParams:
    """Reference scenario (h=20 kbit, t=5 kbit, C=5 Mbps, K=10) with overrides."""
    return validate_params(dataclasses.replace(ScenarioParams(), **overrides))
