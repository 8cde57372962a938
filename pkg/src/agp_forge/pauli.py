"""Pauli-string algebra on bitmasks.

A string on ``n`` sites is stored as a pair of integers ``(x, z)``; bit ``i``
of each mask describes site ``i`` (site 0 is the leftmost character of the
text form). Per site ``(x, z)`` = (0,0) I, (1,0) X, (1,1) Y, (0,1) Z.

Phases are tracked exactly as powers of ``i`` so that products and
commutators never touch floating point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

PRUNE_RTOL = 1e-14

_CHAR_TO_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_TO_CHAR = {v: k for k, v in _CHAR_TO_BITS.items()}


class SiteMismatchError(ValueError):
    """Raised when two operands act on different numbers of sites."""


def _check_sites(n_a: int, n_b: int) -> None:
    if n_a != n_b:
        raise SiteMismatchError(f"site-count mismatch: {n_a} vs {n_b}")


@dataclass(frozen=True, slots=True, order=False)
class PauliString:
    """Tensor product of single-site Paulis, without phase."""

    x: int
    z: int
    n_sites: int

    def __post_init__(self) -> None:
        if self.n_sites < 1:
            raise ValueError("n_sites must be positive")
        limit = 1 << self.n_sites
        if not (0 <= self.x < limit and 0 <= self.z < limit):
            raise ValueError("mask bits set beyond n_sites")

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        x = z = 0
        for i, ch in enumerate(label.upper()):
            try:
                bx, bz = _CHAR_TO_BITS[ch]
            except KeyError:
                raise ValueError(f"invalid Pauli character {ch!r} in {label!r}") from None
            x |= bx << i
            z |= bz << i
        return cls(x, z, len(label))

    @classmethod
    def identity(cls, n_sites: int) -> "PauliString":
        return cls(0, 0, n_sites)

    @classmethod
    def single(cls, n_sites: int, site: int, pauli: str) -> "PauliString":
        bx, bz = _CHAR_TO_BITS[pauli.upper()]
        return cls(bx << site, bz << site, n_sites)

    @classmethod
    def from_sites(cls, n_sites: int, ops: Mapping[int, str]) -> "PauliString":
        """Build a string from ``{site: 'X'|'Y'|'Z'}`` (sites taken mod ``n_sites``)."""
        x = z = 0
        for site, p in ops.items():
            bx, bz = _CHAR_TO_BITS[p.upper()]
            s = site % n_sites
            x |= bx << s
            z |= bz << s
        return cls(x, z, n_sites)

    @property
    def label(self) -> str:
        return "".join(
            _BITS_TO_CHAR[((self.x >> i) & 1, (self.z >> i) & 1)] for i in range(self.n_sites)
        )

    @property
    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    @property
    def support(self) -> int:
        return self.x | self.z

    @property
    def weight(self) -> int:
        return (self.x | self.z).bit_count()

    @property
    def y_count(self) -> int:
        return (self.x & self.z).bit_count()

    def sites(self) -> list[int]:
        s = self.x | self.z
        return [i for i in range(self.n_sites) if (s >> i) & 1]

    def sort_key(self) -> tuple[int, int]:
        return (self.z, self.x)

    def commutes_with(self, other: "PauliString") -> bool:
        return ((self.x & other.z) ^ (self.z & other.x)).bit_count() % 2 == 0

    def permute(self, perm: "Iterable[int]") -> "PauliString":
        """Relabel sites: the operator on site ``i`` moves to site ``perm[i]``."""
        x = z = 0
        for i, j in enumerate(perm):
            x |= ((self.x >> i) & 1) << j
            z |= ((self.z >> i) & 1) << j
        return PauliString(x, z, self.n_sites)

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"PauliString({self.label!r})"

    def __lt__(self, other: "PauliString") -> bool:
        return self.sort_key() < other.sort_key()


@dataclass(frozen=True, slots=True)
class PhasedString:
    """``weight * i**phase_power * string``; ``weight`` is 1 for products, 2 for commutators."""

    string: PauliString
    phase_power: int
    weight: int = 1

    def __post_init__(self) -> None:
        if self.phase_power not in (0, 1, 2, 3):
            raise ValueError("phase_power must be in {0,1,2,3}")

    @property
    def scalar(self) -> complex:
        return self.weight * (1, 1j, -1, -1j)[self.phase_power]


def _phase_power(ax: int, az: int, bx: int, bz: int) -> int:
    # P(x,z) = i^{|x&z|} X^x Z^z and Z^z1 X^x2 = (-1)^{|z1&x2|} X^x2 Z^z1
    cx, cz = ax ^ bx, az ^ bz
    p = (ax & az).bit_count() + (bx & bz).bit_count() + 2 * (az & bx).bit_count()
    p -= (cx & cz).bit_count()
    return p % 4


def multiply(a: PauliString, b: PauliString) -> PhasedString:
    """Product ``a b`` as a phased string."""
    _check_sites(a.n_sites, b.n_sites)
    return PhasedString(
        PauliString(a.x ^ b.x, a.z ^ b.z, a.n_sites), _phase_power(a.x, a.z, b.x, b.z)
    )


def commutator(a: PauliString, b: PauliString) -> PhasedString | None:
    """``[a, b]``; ``None`` when the strings commute, else ``2ab`` (weight 2)."""
    _check_sites(a.n_sites, b.n_sites)
    if a.commutes_with(b):
        return None
    prod = multiply(a, b)
    return PhasedString(prod.string, prod.phase_power, 2)


def trace_inner(a: PauliString, b: PauliString) -> float:
    """Normalized trace ``Tr(ab) / 2**n``."""
    _check_sites(a.n_sites, b.n_sites)
    return 1.0 if (a.x == b.x and a.z == b.z) else 0.0


def real_commutator_coeff(a: PauliString, b: PauliString) -> int:
    """Integer ``c`` with ``-i[a, b] = c * (a XOR b)``; 0 when they commute.

    For anticommuting Hermitian strings the product carries phase ``±i`` so
    ``-i * 2 * (±i) = ±2``.
    """
    if ((a.x & b.z) ^ (a.z & b.x)).bit_count() % 2 == 0:
        return 0
    return 2 if _phase_power(a.x, a.z, b.x, b.z) == 1 else -2


class PauliOperator:
    """Real-weighted sum of Pauli strings (Hermitian by construction).

    Instances are treated as immutable: all arithmetic returns new objects.
    """

    __slots__ = ("_terms", "n_sites")

    def __init__(
        self,
        terms: Mapping[PauliString, float] | Iterable[tuple[PauliString, float]] = (),
        n_sites: int | None = None,
        *,
        prune: bool = True,
    ) -> None:
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[PauliString, float] = {}
        for s, c in items:
            if n_sites is None:
                n_sites = s.n_sites
            _check_sites(n_sites, s.n_sites)
            acc[s] = acc.get(s, 0.0) + float(c)
        if n_sites is None:
            raise ValueError("n_sites required for an empty operator")
        self.n_sites = n_sites
        self._terms = _pruned(acc) if prune else acc

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, n_sites: int) -> "PauliOperator":
        return cls({}, n_sites)

    @classmethod
    def from_labels(cls, items: Mapping[str, float] | Iterable[tuple[str, float]]) -> "PauliOperator":
        pairs = items.items() if isinstance(items, Mapping) else items
        return cls([(PauliString.from_label(k), v) for k, v in pairs])

    @classmethod
    def from_string(cls, s: PauliString, coeff: float = 1.0) -> "PauliOperator":
        return cls({s: coeff}, s.n_sites)

    # mapping-like access --------------------------------------------------
    @property
    def terms(self) -> dict[PauliString, float]:
        return dict(self._terms)

    def items(self) -> Iterator[tuple[PauliString, float]]:
        for s in sorted(self._terms, key=PauliString.sort_key):
            yield s, self._terms[s]

    def strings(self) -> list[PauliString]:
        return sorted(self._terms, key=PauliString.sort_key)

    def coeff(self, s: PauliString | str) -> float:
        if isinstance(s, str):
            s = PauliString.from_label(s)
        return self._terms.get(s, 0.0)

    def __len__(self) -> int:
        return len(self._terms)

    def __contains__(self, s: object) -> bool:
        return s in self._terms

    def is_zero(self) -> bool:
        return not self._terms

    # arithmetic -----------------------------------------------------------
    def __add__(self, other: "PauliOperator") -> "PauliOperator":
        _check_sites(self.n_sites, other.n_sites)
        acc = dict(self._terms)
        for s, c in other._terms.items():
            acc[s] = acc.get(s, 0.0) + c
        return PauliOperator(acc, self.n_sites)

    def __sub__(self, other: "PauliOperator") -> "PauliOperator":
        return self + (-1.0) * other

    def __neg__(self) -> "PauliOperator":
        return (-1.0) * self

    def __mul__(self, k: float) -> "PauliOperator":
        return PauliOperator({s: c * k for s, c in self._terms.items()}, self.n_sites)

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PauliOperator):
            return NotImplemented
        return self.n_sites == other.n_sites and self._terms == other._terms

    def allclose(self, other: "PauliOperator", atol: float = 1e-12) -> bool:
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coeff(k) - other.coeff(k)) <= atol for k in keys)

    def hs_norm_sq(self) -> float:
        """Normalized Hilbert-Schmidt norm squared, ``Tr(A^2) / 2**n``."""
        return math.fsum(c * c for c in self._terms.values())

    def permute(self, perm: Iterable[int]) -> "PauliOperator":
        perm = list(perm)
        return PauliOperator({s.permute(perm): c for s, c in self._terms.items()}, self.n_sites)

    # serialization --------------------------------------------------------
    def to_json_list(self) -> list[dict]:
        return [{"string": s.label, "coeff": c} for s, c in self.items()]

    @classmethod
    def from_json_list(cls, data: list[dict], n_sites: int | None = None) -> "PauliOperator":
        if not data and n_sites is None:
            raise ValueError("n_sites required for an empty operator")
        return cls([(PauliString.from_label(d["string"]), d["coeff"]) for d in data], n_sites)

    def to_json(self) -> str:
        return json.dumps(self.to_json_list())

    def __repr__(self) -> str:
        body = " + ".join(f"{c:.6g}*{s.label}" for s, c in self.items()) or "0"
        return f"PauliOperator({body})"


def _pruned(acc: dict[PauliString, float]) -> dict[PauliString, float]:
    if not acc:
        return acc
    cmax = max(abs(c) for c in acc.values())
    if cmax == 0.0:
        return {}
    cut = PRUNE_RTOL * cmax
    return {s: c for s, c in acc.items() if abs(c) > cut}


def op_commutator(a: PauliOperator, b: PauliOperator) -> PauliOperator:
    """``-i[A, B]`` as a real-coefficient operator."""
    _check_sites(a.n_sites, b.n_sites)
    acc: dict[PauliString, float] = {}
    for sa, ca in a._terms.items():
        for sb, cb in b._terms.items():
            k = real_commutator_coeff(sa, sb)
            if k:
                s = PauliString(sa.x ^ sb.x, sa.z ^ sb.z, a.n_sites)
                acc[s] = acc.get(s, 0.0) + k * ca * cb
    return PauliOperator(acc, a.n_sites)


def normalized_trace_product(a: PauliOperator, b: PauliOperator) -> float:
    """``Tr(AB) / 2**n``: sum of coefficient products over shared strings."""
    _check_sites(a.n_sites, b.n_sites)
    small, big = (a, b) if len(a) <= len(b) else (b, a)
    return math.fsum(c * big._terms[s] for s, c in small._terms.items() if s in big._terms)
