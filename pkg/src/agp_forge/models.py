"""Parameterized spin Hamiltonians, sweep schedules and symmetry orbits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .pauli import PauliOperator, PauliString

ScalarFn = Callable[[float], float]

FD_REL_STEP = 1e-6


def _central_diff(f: ScalarFn, x: float, h: float) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


@dataclass(frozen=True)
class Schedule:
    """Sweep path ``lambda(t)`` on ``[0, t_final]``.

    When ``dlambda_dt`` is omitted it is replaced by a central difference with
    step ``1e-6 * t_final``.
    """

    lambda_of_t: ScalarFn
    t_final: float
    dlambda_dt: ScalarFn | None = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")

    def lam(self, t: float) -> float:
        return self.lambda_of_t(t)

    def rate(self, t: float) -> float:
        if self.dlambda_dt is not None:
            return self.dlambda_dt(t)
        return _central_diff(self.lambda_of_t, t, FD_REL_STEP * self.t_final)

    def with_duration(self, t_final: float) -> "Schedule":
        """Same path, traversed in ``t_final``."""
        if self.kind in _SCHEDULE_FACTORIES:
            return _SCHEDULE_FACTORIES[self.kind](t_final=t_final, **self.params)
        s = t_final / self.t_final
        lam, rate = self.lambda_of_t, self.rate
        return Schedule(lambda t: lam(t / s), t_final, lambda t: rate(t / s) / s)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "T": self.t_final, **self.params}

    # factories ------------------------------------------------------------
    @classmethod
    def linear(cls, t_final: float, start: float = 0.0, stop: float = 1.0) -> "Schedule":
        span = stop - start
        return cls(
            lambda t: start + span * t / t_final,
            t_final,
            lambda t: span / t_final,
            kind="linear",
            params={"start": start, "stop": stop},
        )

    @classmethod
    def annealing(cls, t_final: float) -> "Schedule":
        """``g_t = t / T`` from 0 to 1."""
        s = cls.linear(t_final, 0.0, 1.0)
        return cls(s.lambda_of_t, t_final, s.dlambda_dt, kind="annealing", params={})

    @classmethod
    def cosine(cls, t_final: float, amplitude: float = 2.0) -> "Schedule":
        """``lambda_t = -amplitude * cos(pi t / T)``."""
        w = math.pi / t_final
        return cls(
            lambda t: -amplitude * math.cos(w * t),
            t_final,
            lambda t: amplitude * w * math.sin(w * t),
            kind="cosine",
            params={"amplitude": amplitude},
        )


_SCHEDULE_FACTORIES = {
    "linear": Schedule.linear,
    "annealing": Schedule.annealing,
    "cosine": Schedule.cosine,
}


def schedule_from_dict(d: dict) -> Schedule:
    d = dict(d)
    kind = d.pop("kind", "annealing")
    T = float(d.pop("T", d.pop("t_final", 1.0)))
    if kind not in _SCHEDULE_FACTORIES:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {sorted(_SCHEDULE_FACTORIES)}")
    return _SCHEDULE_FACTORIES[kind](T, **d)


class ParametricHamiltonian:
    """``H(lambda) = sum_i h_i(lambda) L_i`` over a fixed list of Pauli strings.

    ``coeffs`` and ``dcoeffs`` map a scalar ``lambda`` to arrays aligned with
    ``basis``. Missing derivatives fall back to central differences.
    """

    def __init__(
        self,
        basis: Sequence[PauliString],
        coeffs: Callable[[float], np.ndarray],
        dcoeffs: Callable[[float], np.ndarray] | None = None,
        *,
        name: str = "custom",
        params: dict | None = None,
    ) -> None:
        basis = list(basis)
        if not basis:
            raise ValueError("empty Hamiltonian basis")
        n = basis[0].n_sites
        if any(s.n_sites != n for s in basis):
            raise ValueError("basis strings must share n_sites")
        if len(set(basis)) != len(basis):
            raise ValueError("duplicate strings in Hamiltonian basis")
        self.basis = basis
        self.n_sites = n
        self._coeffs = coeffs
        self._dcoeffs = dcoeffs
        self.name = name
        self.params = params or {}

    def coeffs(self, lam: float) -> np.ndarray:
        c = np.asarray(self._coeffs(lam), dtype=float)
        if c.shape != (len(self.basis),):
            raise ValueError(f"coeffs returned shape {c.shape}, expected ({len(self.basis)},)")
        return c

    def dcoeffs(self, lam: float) -> np.ndarray:
        if self._dcoeffs is None:
            h = FD_REL_STEP * max(1.0, abs(lam))
            return (self.coeffs(lam + h) - self.coeffs(lam - h)) / (2.0 * h)
        return np.asarray(self._dcoeffs(lam), dtype=float)

    def operator(self, lam: float) -> PauliOperator:
        return PauliOperator(zip(self.basis, self.coeffs(lam)), self.n_sites)

    def derivative(self, lam: float) -> PauliOperator:
        return PauliOperator(zip(self.basis, self.dcoeffs(lam)), self.n_sites)

    def __repr__(self) -> str:
        return f"ParametricHamiltonian({self.name}, n_sites={self.n_sites}, terms={len(self.basis)})"


# ---------------------------------------------------------------------------
# built-in systems


def _const(v: float) -> ScalarFn:
    return lambda lam: v


def single_spin_system(
    h_x: ScalarFn,
    h_y: ScalarFn,
    h_z: ScalarFn,
    derivatives: tuple[ScalarFn, ScalarFn, ScalarFn] | None = None,
) -> ParametricHamiltonian:
    """``h^x X + h^y Y + h^z Z`` on one site."""
    basis = [PauliString.from_label(c) for c in "XYZ"]
    fns = (h_x, h_y, h_z)
    dcoeffs = None
    if derivatives is not None:
        dfns = tuple(derivatives)
        dcoeffs = lambda lam: np.array([f(lam) for f in dfns])  # noqa: E731
    return ParametricHamiltonian(
        basis, lambda lam: np.array([f(lam) for f in fns]), dcoeffs, name="single-spin"
    )


def two_spin_system(
    chi0: float,
    delta: ScalarFn | None = None,
    omega0: float = -1.0,
    ddelta: ScalarFn | None = None,
) -> ParametricHamiltonian:
    """``chi0 Z1 Z2 + delta(lambda) (Z1 + Z2) + omega0 (X1 + X2)``.

    By default ``delta(lambda) = lambda`` so the schedule sweeps the
    longitudinal field directly.
    """
    if delta is None:
        delta, ddelta = (lambda lam: lam), (lambda lam: 1.0)
    labels = ["ZZ", "ZI", "IZ", "XI", "IX"]
    basis = [PauliString.from_label(s) for s in labels]

    def coeffs(lam: float) -> np.ndarray:
        d = delta(lam)
        return np.array([chi0, d, d, omega0, omega0])

    dcoeffs = None
    if ddelta is not None:
        def dcoeffs(lam: float) -> np.ndarray:
            d = ddelta(lam)
            return np.array([0.0, d, d, 0.0, 0.0])

    return ParametricHamiltonian(
        basis, coeffs, dcoeffs, name="two-spin", params={"chi0": chi0, "omega0": omega0}
    )


def transverse_ising_chain(
    L: int, g: ScalarFn | None = None, dg: ScalarFn | None = None
) -> ParametricHamiltonian:
    """Periodic chain ``-g sum Z_i Z_{i+1} - (1 - g) sum X_i``; ``g(lambda) = lambda`` by default."""
    if L < 3:
        raise ValueError("transverse_ising_chain needs L >= 3")
    if g is None:
        g, dg = (lambda lam: lam), (lambda lam: 1.0)
    zz = [PauliString.from_sites(L, {i: "Z", i + 1: "Z"}) for i in range(L)]
    xx = [PauliString.single(L, i, "X") for i in range(L)]
    ones = np.ones(L)

    def coeffs(lam: float) -> np.ndarray:
        gv = g(lam)
        return np.concatenate([-gv * ones, -(1.0 - gv) * ones])

    dcoeffs = None
    if dg is not None:
        def dcoeffs(lam: float) -> np.ndarray:
            d = dg(lam)
            return np.concatenate([-d * ones, d * ones])

    return ParametricHamiltonian(zz + xx, coeffs, dcoeffs, name="ising", params={"L": L})


# ---------------------------------------------------------------------------
# symmetry orbits


@dataclass(frozen=True)
class SymmetryGrouping:
    """Partition of an operator basis into orbits sharing one coefficient.

    ``symmetric`` marks groupings that are genuine orbits of a validated
    site-permutation symmetry; only then may orbit sums be evaluated from a
    single representative.
    """

    orbits: tuple[tuple[PauliString, ...], ...]
    symmetric: bool = False

    def __post_init__(self) -> None:
        seen: set[PauliString] = set()
        for orb in self.orbits:
            if not orb:
                raise ValueError("empty orbit")
            for s in orb:
                if s in seen:
                    raise ValueError(f"orbits overlap on {s.label}")
                seen.add(s)

    @property
    def sizes(self) -> list[int]:
        return [len(o) for o in self.orbits]

    def members(self) -> list[PauliString]:
        return [s for o in self.orbits for s in o]

    def index(self) -> dict[PauliString, int]:
        return {s: i for i, o in enumerate(self.orbits) for s in o}

    @classmethod
    def singletons(cls, basis: Iterable[PauliString]) -> "SymmetryGrouping":
        return cls(tuple((s,) for s in basis), symmetric=True)


class SymmetryError(ValueError):
    pass


def preserves(H: ParametricHamiltonian, perm: Sequence[int], lambdas: Iterable[float] = (0.137, 0.481, 0.733, -0.59)) -> bool:
    """Whether permuting sites maps ``H(lambda)`` and its derivative onto themselves."""
    for lam in lambdas:
        for op in (H.operator(lam), H.derivative(lam)):
            if not op.allclose(op.permute(perm), atol=1e-12 * max(1.0, max((abs(c) for _, c in op.items()), default=1.0))):
                return False
    return True


def detect_orbits(
    basis: Sequence[PauliString],
    generators: Sequence[Sequence[int]],
    hamiltonian: ParametricHamiltonian | None = None,
) -> SymmetryGrouping:
    """Orbits of ``basis`` under the group generated by site permutations.

    Each generator is checked against ``hamiltonian`` (when given) by term-map
    equality; a generator that moves the basis outside itself is rejected.
    """
    basis = sorted(set(basis), key=PauliString.sort_key)
    if not basis:
        raise ValueError("empty basis")
    n = basis[0].n_sites
    gens = [list(g) for g in generators]
    for g in gens:
        if sorted(g) != list(range(n)):
            raise SymmetryError(f"generator {g} is not a permutation of {n} sites")
        if hamiltonian is not None and not preserves(hamiltonian, g):
            raise SymmetryError(f"generator {g} does not preserve the Hamiltonian")
    members = set(basis)
    assigned: set[PauliString] = set()
    orbits = []
    for s in basis:
        if s in assigned:
            continue
        orbit = {s}
        frontier = [s]
        while frontier:
            cur = frontier.pop()
            for g in gens:
                img = cur.permute(g)
                if img not in members:
                    raise SymmetryError(f"generator {g} maps {cur.label} outside the basis")
                if img not in orbit:
                    orbit.add(img)
                    frontier.append(img)
        assigned |= orbit
        orbits.append(tuple(sorted(orbit, key=PauliString.sort_key)))
    orbits.sort(key=lambda o: (o[0].weight, o[0].sort_key()))
    return SymmetryGrouping(tuple(orbits), symmetric=True)


def cyclic_shift(L: int) -> list[int]:
    return [(i + 1) % L for i in range(L)]


def reflection(L: int) -> list[int]:
    return [L - 1 - i for i in range(L)]


def swap_sites(n: int, a: int = 0, b: int = 1) -> list[int]:
    p = list(range(n))
    p[a], p[b] = p[b], p[a]
    return p


def ising_generators(L: int) -> list[list[int]]:
    """Translation and reflection of the periodic chain."""
    return [cyclic_shift(L), reflection(L)]


def ising_agp_orbits(L: int, K: int | None = None) -> SymmetryGrouping:
    """Closed-form AGP orbits of the periodic transverse Ising chain.

    Orbit ``k`` holds ``Y X^k Z`` and ``Z X^k Y`` on every starting site,
    ``k = 0 .. K`` (``K = L - 2`` by default).
    """
    if L < 3:
        raise ValueError("L >= 3 required")
    K = L - 2 if K is None else K
    if not 0 <= K <= L - 2:
        raise ValueError(f"K must satisfy 0 <= K <= L-2 = {L - 2}")
    orbits = []
    for k in range(K + 1):
        orb = []
        for i in range(L):
            xs = {i + j: "X" for j in range(1, k + 1)}
            orb.append(PauliString.from_sites(L, {i: "Y", **xs, i + k + 1: "Z"}))
            orb.append(PauliString.from_sites(L, {i: "Z", **xs, i + k + 1: "Y"}))
        orbits.append(tuple(sorted(set(orb), key=PauliString.sort_key)))
    return SymmetryGrouping(tuple(orbits), symmetric=True)
