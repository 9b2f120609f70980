"""Shared value types: token amounts, exact rationals, resource types and capacity vectors.

Money is always a non-negative ``int`` in base token units and shares are
``fractions.Fraction``; nothing in the protocol path touches floats.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Mapping, Optional

from .errors import InvalidAmount, Overflow

# Upper bound for any single token quantity (u128).
MAX_TOKEN = 2**128 - 1


def check_amount(value: int, *, positive: bool = False) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidAmount(f"token amount must be an integer, got {value!r}")
    if value < 0 or (positive and value == 0):
        raise InvalidAmount(f"invalid token amount {value}")
    if value > MAX_TOKEN:
        raise Overflow(f"token amount {value} exceeds u128")
    return value


def checked_add(a: int, b: int) -> int:
    total = a + b
    if total > MAX_TOKEN:
        raise Overflow(f"{a} + {b} overflows u128")
    return total


def parse_int(value) -> int:
    """Accept JSON ints or decimal strings (the canonical encoding)."""
    if isinstance(value, bool):
        raise ValueError(f"expected integer, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str) and value.strip().lstrip("-").isdigit():
        return int(value)
    raise ValueError(f"expected integer, got {value!r}")


def parse_fraction(value) -> Fraction:
    """Accept "3/4", "0.75", ints, or floats (floats via their repr)."""
    if isinstance(value, bool):
        raise ValueError(f"expected rational, got {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise ValueError(f"expected rational, got {value!r}")


def fraction_str(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


class Kind(str, enum.Enum):
    STORAGE = "Storage"
    COMPUTE = "Compute"
    MEMORY = "Memory"
    NETWORKING = "Networking"


# canonical units per kind
UNITS = {
    Kind.STORAGE: "GiB",
    Kind.COMPUTE: "vCPU",
    Kind.MEMORY: "GiB",
    Kind.NETWORKING: "Mbps",
}


@dataclass(frozen=True, order=True)
class ResourceType:
    kind: Kind
    subclass: Optional[str] = None

    def __str__(self) -> str:
        if self.subclass:
            return f"{self.kind.value}:{self.subclass}"
        return self.kind.value

    @classmethod
    def parse(cls, text) -> "ResourceType":
        if isinstance(text, ResourceType):
            return text
        kind, _, sub = str(text).partition(":")
        try:
            k = Kind(kind)
        except ValueError:
            raise ValueError(f"unknown resource kind {kind!r}") from None
        return cls(k, sub or None)

    def sort_key(self):
        return str(self)


STORAGE = ResourceType(Kind.STORAGE)
COMPUTE = ResourceType(Kind.COMPUTE)
MEMORY = ResourceType(Kind.MEMORY)
NETWORKING = ResourceType(Kind.NETWORKING)

Capacity = Dict[ResourceType, int]


def parse_capacity(raw: Mapping) -> Capacity:
    out: Capacity = {}
    for key, qty in raw.items():
        q = parse_int(qty)
        if q < 0:
            raise ValueError(f"negative quantity for {key}")
        out[ResourceType.parse(key)] = q
    return out


def capacity_to_json(cap: Mapping[ResourceType, int]) -> dict:
    return {str(t): str(q) for t, q in sorted(cap.items(), key=lambda kv: str(kv[0]))}


def zero_capacity() -> Capacity:
    return {}


def add_capacity(a: Mapping[ResourceType, int], b: Mapping[ResourceType, int], sign: int = 1) -> Capacity:
    out = dict(a)
    for t, q in b.items():
        out[t] = out.get(t, 0) + sign * q
    return out
