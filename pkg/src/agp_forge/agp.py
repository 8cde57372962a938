"""Algebraic construction of adiabatic gauge potentials.

The AGP is expanded as ``A = sum_I alpha_I O_I`` where each ``O_I`` is the sum
of the Pauli strings in one orbit of the basis. With ``C_a = -i[H, L_a]`` and
normalized traces ``<A, B> = Tr(AB) / 2**n`` the coefficients solve

    M_IJ = sum_{a in I, b in J} <C_a, C_b>,   u_I = -sum_{a in I} <C_a, dH>,

which are the normal equations of ``min ||dH - i[H, A]||``. Relative to the
unnormalized traces ``M^paper = Tr([H,L_i][H,L_j])`` and
``u^paper = i Tr([H,dH] L_i)`` this is ``M = -M^paper / N``, ``u = -u^paper / N``,
so both conventions yield the same ``alpha``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .models import ParametricHamiltonian, SymmetryGrouping, detect_orbits
from .pauli import (
    PRUNE_RTOL,
    PauliOperator,
    PauliString,
    op_commutator,
    real_commutator_coeff,
)

log = logging.getLogger(__name__)

RANK_RTOL = 1e-10
EXACT_RTOL = 1e-10
DEFAULT_MAX_STRINGS = 10**6

MODE_EXACT = "exact"
MODE_CONSTRAINED = "constrained"
MODE_RESTRICTED = "restricted"


class BasisTooLargeError(RuntimeError):
    pass


class BasisSubsetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# local commutator machinery


def _bits(mask: int) -> Iterable[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class _LocalTerms:
    """Site index over a list of strings, for commutators with local operators."""

    def __init__(self, strings: Sequence[PauliString]):
        self.strings = list(strings)
        self.n_sites = self.strings[0].n_sites if self.strings else 0
        by_site: dict[int, list[int]] = {}
        for idx, s in enumerate(self.strings):
            for site in _bits(s.support):
                by_site.setdefault(site, []).append(idx)
        self.by_site = by_site
        self._global = [i for i, s in enumerate(self.strings) if s.is_identity]

    def candidates(self, s: PauliString) -> list[int]:
        out: set[int] = set()
        for site in _bits(s.support):
            out.update(self.by_site.get(site, ()))
        return sorted(out)

    def anticommuting(self, s: PauliString) -> Iterable[tuple[int, int, PauliString]]:
        """Yield ``(idx, k, t)`` with ``-i[strings[idx], s] = k * t`` and ``k != 0``."""
        for idx in self.candidates(s):
            h = self.strings[idx]
            k = real_commutator_coeff(h, s)
            if k:
                yield idx, k, PauliString(h.x ^ s.x, h.z ^ s.z, s.n_sites)


def _local_commutator(loc: _LocalTerms, hc: np.ndarray, terms: dict) -> dict:
    acc: dict[PauliString, float] = {}
    for s, c in terms.items():
        for idx, k, t in loc.anticommuting(s):
            acc[t] = acc.get(t, 0.0) + k * hc[idx] * c
    if not acc:
        return acc
    cmax = max(abs(v) for v in acc.values())
    return {t: v for t, v in acc.items() if abs(v) > PRUNE_RTOL * cmax}


# ---------------------------------------------------------------------------
# basis


@dataclass(frozen=True)
class AgpBasis:
    """Operator basis for the AGP, optionally grouped into symmetry orbits."""

    strings: tuple[PauliString, ...]
    grouping: SymmetryGrouping | None = None
    depth_generated: int = 0

    def __post_init__(self) -> None:
        if len(set(self.strings)) != len(self.strings):
            raise ValueError("basis strings must be distinct")
        if self.grouping is not None and set(self.grouping.members()) != set(self.strings):
            raise ValueError("grouping must partition the basis strings")

    @property
    def n_sites(self) -> int:
        return self.strings[0].n_sites

    @property
    def orbits(self) -> tuple[tuple[PauliString, ...], ...]:
        if self.grouping is not None:
            return self.grouping.orbits
        return tuple((s,) for s in self.strings)

    @property
    def symmetric(self) -> bool:
        return self.grouping is not None and self.grouping.symmetric

    def __len__(self) -> int:
        return len(self.strings)

    @property
    def n_orbits(self) -> int:
        return len(self.orbits)

    def grouped(self, generators: Sequence[Sequence[int]], hamiltonian: ParametricHamiltonian | None = None) -> "AgpBasis":
        g = detect_orbits(self.strings, generators, hamiltonian)
        return AgpBasis(tuple(g.members()), g, self.depth_generated)

    def subset(self, keep: Iterable[int]) -> "AgpBasis":
        keep = sorted(set(keep))
        orbits = tuple(self.orbits[i] for i in keep)
        grouping = SymmetryGrouping(orbits, symmetric=self.symmetric) if orbits else None
        if not orbits:
            raise ValueError("empty basis")
        return AgpBasis(tuple(s for o in orbits for s in o), grouping, self.depth_generated)

    @classmethod
    def from_grouping(cls, grouping: SymmetryGrouping, depth: int = 0) -> "AgpBasis":
        return cls(tuple(grouping.members()), grouping, depth)

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "AgpBasis":
        return cls(tuple(PauliString.from_label(s) for s in labels))

    def labels(self) -> list[str]:
        return [s.label for s in self.strings]

    def to_dict(self) -> dict:
        return {
            "strings": self.labels(),
            "orbits": [[s.label for s in o] for o in self.orbits],
            "depth_generated": self.depth_generated,
        }


def generate_basis_ops(
    H_op: PauliOperator,
    dH_op: PauliOperator,
    k_max: int | None = None,
    max_strings: int = DEFAULT_MAX_STRINGS,
) -> AgpBasis:
    """Union of strings in odd nested commutators ``[H,[H,...,[H, dH]]]``."""
    n = H_op.n_sites
    k_max = 2 * n if k_max is None else k_max
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    h_strings = [s for s, _ in H_op.items() if not s.is_identity]
    loc = _LocalTerms(h_strings)
    hc = np.array([H_op.coeff(s) for s in h_strings])
    found: dict[PauliString, None] = {}
    cur = {s: c for s, c in dH_op.items() if not s.is_identity}
    depth = 0
    stale = 0
    for k in range(1, k_max + 1):
        cur = _local_commutator(loc, hc, cur)  # 2k-1 copies of H
        before = len(found)
        for s in cur:
            if not s.is_identity:
                found.setdefault(s, None)
        depth = k
        if len(found) > max_strings:
            raise BasisTooLargeError(
                f"AGP basis exceeded {max_strings} strings at nesting depth {2 * k - 1}"
            )
        stale = stale + 1 if len(found) == before else 0
        if stale >= 2 or not cur:
            break
        cur = _local_commutator(loc, hc, cur)  # even nesting, not collected
        if not cur:
            break
        cmax = max(abs(v) for v in cur.values())
        cur = {s: v / cmax for s, v in cur.items()}
    # strings commuting with every H term can never receive weight
    strings = [s for s in found if any(True for _ in loc.anticommuting(s))]
    strings.sort(key=lambda s: (s.weight, s.sort_key()))
    return AgpBasis(tuple(strings), None, depth)


def generate_basis(
    H: ParametricHamiltonian,
    lam: float,
    k_max: int | None = None,
    max_strings: int = DEFAULT_MAX_STRINGS,
) -> AgpBasis:
    """Nested-commutator AGP basis of ``H`` at ``lam``; ``k_max`` defaults to ``2L``."""
    return generate_basis_ops(H.operator(lam), H.derivative(lam), k_max, max_strings)


def generate_path_basis(
    H: ParametricHamiltonian,
    lambdas: Iterable[float],
    k_max: int | None = None,
    max_strings: int = DEFAULT_MAX_STRINGS,
) -> AgpBasis:
    """Union of :func:`generate_basis` over several points of a path.

    Special points (e.g. a vanishing coupling) can hide strings, so a path
    needs the union over generic points.
    """
    found: dict[PauliString, None] = {}
    depth = 0
    for lam in lambdas:
        b = generate_basis(H, lam, k_max, max_strings)
        depth = max(depth, b.depth_generated)
        for s in b.strings:
            found.setdefault(s, None)
    strings = sorted(found, key=lambda s: (s.weight, s.sort_key()))
    return AgpBasis(tuple(strings), None, depth)


# ---------------------------------------------------------------------------
# linear system


class SystemTemplate:
    """Sparse bilinear form of ``M`` and ``u`` in the Hamiltonian coefficients.

    Entries are recorded once per (basis, Hamiltonian term list); evaluating
    at a new ``lambda`` is a pair of weighted bincounts.
    """

    def __init__(
        self,
        h_strings: Sequence[PauliString],
        dh_strings: Sequence[PauliString],
        basis: AgpBasis,
    ) -> None:
        self.basis = basis
        self.h_strings = [s for s in h_strings]
        self.dh_strings = list(dh_strings)
        self.loc = _LocalTerms(self.h_strings)
        self.dh_index = {s: i for i, s in enumerate(self.dh_strings)}
        self.h_index = {s: i for i, s in enumerate(self.h_strings)}
        orbits = basis.orbits
        self.n = len(orbits)
        self.sizes = np.array([len(o) for o in orbits], dtype=float)
        self.orbit_of = {s: i for i, o in enumerate(orbits) for s in o}
        self.symmetric = basis.symmetric

        m_acc: dict[tuple[int, int, int, int], float] = {}
        u_acc: dict[tuple[int, int, int], float] = {}
        v_acc: dict[tuple[int, int], float] = {}
        # C_a terms per orbit: list of (h, k1, s) for the (weighted) representatives
        self.c_terms: list[list[tuple[int, float, PauliString]]] = []
        for I, orb in enumerate(orbits):
            reps = [(orb[0], float(len(orb)))] if self.symmetric else [(a, 1.0) for a in orb]
            cterms = []
            for a, w in reps:
                hi = self.h_index.get(a)
                if hi is not None:
                    v_acc[(I, hi)] = v_acc.get((I, hi), 0.0) + w
                for h, k1, s in self.loc.anticommuting(a):
                    cterms.append((h, w * k1, s))
                    d = self.dh_index.get(s)
                    if d is not None:
                        key = (I, h, d)
                        u_acc[key] = u_acc.get(key, 0.0) - w * k1
                    for h2, k2s, b in self.loc.anticommuting(s):
                        J = self.orbit_of.get(b)
                        if J is None:
                            continue
                        # coefficient of s in -i[h2, b] is -k2s (antisymmetry)
                        key = (I, J, h, h2)
                        m_acc[key] = m_acc.get(key, 0.0) - w * k1 * k2s
            self.c_terms.append(cterms)
        self._m = _pack(m_acc, 4)
        self._u = _pack(u_acc, 3)
        self._v = _pack(v_acc, 2)

    @property
    def n_entries(self) -> int:
        return len(self._m[0])

    def evaluate(self, hc: np.ndarray, dhc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.n
        I, J, h, h2, val = self._m
        M = np.bincount(I * n + J, weights=val * hc[h] * hc[h2], minlength=n * n).reshape(n, n)
        M = 0.5 * (M + M.T)
        uI, uh, ud, uval = self._u
        u = np.bincount(uI, weights=uval * hc[uh] * dhc[ud], minlength=n)
        return M, u

    def h_overlap(self, hc: np.ndarray) -> np.ndarray:
        """``v_I = sum_{a in I} <H, L_a>``; the diagonal-gauge constraint is ``v . alpha = 0``."""
        vI, vh, vval = self._v
        return np.bincount(vI, weights=vval * hc[vh], minlength=self.n)

    # residual diagnostics ---------------------------------------------------
    def _alpha_of(self, alpha: np.ndarray) -> Callable[[PauliString], float]:
        orbit_of = self.orbit_of

        def f(b: PauliString) -> float:
            J = orbit_of.get(b)
            return 0.0 if J is None else alpha[J]

        return f

    def norms(self, hc: np.ndarray, dhc: np.ndarray, alpha: np.ndarray) -> tuple[float, float]:
        """Normalized HS norms ``(||G||, ||-i[H, G]||)`` with ``G = dH - i[H, A]``."""
        a_of = self._alpha_of(alpha)
        loc = self.loc
        dh_index = self.dh_index
        g_cache: dict[PauliString, float] = {}
        r_cache: dict[PauliString, float] = {}

        def G(s: PauliString) -> float:
            v = g_cache.get(s)
            if v is None:
                d = dh_index.get(s)
                v = dhc[d] if d is not None else 0.0
                for h2, k2, b in loc.anticommuting(s):
                    ab = a_of(b)
                    if ab:
                        v -= k2 * hc[h2] * ab
                g_cache[s] = v
            return v

        def R(t: PauliString) -> float:
            v = r_cache.get(t)
            if v is None:
                v = 0.0
                for h, k, s in loc.anticommuting(t):
                    gs = G(s)
                    if gs:
                        v -= k * hc[h] * gs
                r_cache[t] = v
            return v

        # Sum squares over the explicit supports; forming <X, R> with X = O(1)
        # would leave roundoff of size eps instead of eps**2.
        g_support: set[PauliString] = set(self.dh_strings)
        for I, orb in enumerate(self.basis.orbits):
            if alpha[I] == 0.0:
                continue
            for a in orb:
                for _, _, s in loc.anticommuting(a):
                    g_support.add(s)
        r_support: set[PauliString] = set()
        g_sq = []
        for s in sorted(g_support, key=PauliString.sort_key):
            gs = G(s)
            if gs:
                g_sq.append(gs * gs)
                for _, _, t in loc.anticommuting(s):
                    r_support.add(t)
        g2 = math.fsum(g_sq)
        r2 = math.fsum(R(t) ** 2 for t in sorted(r_support, key=PauliString.sort_key))
        return math.sqrt(g2), math.sqrt(r2)


def _pack(acc: dict, n_idx: int) -> tuple:
    keys = sorted(k for k, v in acc.items() if v != 0.0)
    if not keys:
        return tuple(np.zeros(0, dtype=np.int64) for _ in range(n_idx)) + (np.zeros(0),)
    arr = np.array(keys, dtype=np.int64).reshape(len(keys), n_idx)
    vals = np.array([acc[k] for k in keys], dtype=float)
    return tuple(arr[:, i] for i in range(n_idx)) + (vals,)


class _OpSystem:
    """Template plus coefficient vectors for a fixed pair ``(H, dH)``."""

    def __init__(self, H_op: PauliOperator, dH_op: PauliOperator, basis: AgpBasis):
        if H_op.n_sites != basis.n_sites or dH_op.n_sites != basis.n_sites:
            raise ValueError("operators and basis must share n_sites")
        hs = [s for s, _ in H_op.items() if not s.is_identity]
        ds = [s for s, _ in dH_op.items()]
        self.template = SystemTemplate(hs, ds, basis)
        self.hc = np.array([H_op.coeff(s) for s in hs])
        self.dhc = np.array([dH_op.coeff(s) for s in ds])
        self.scale = math.sqrt(H_op.hs_norm_sq() * dH_op.hs_norm_sq())


def assemble_system(H_op: PauliOperator, dH_op: PauliOperator, basis: AgpBasis) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(M, u)`` for ``basis`` (orbit-summed when grouped)."""
    sysm = _OpSystem(H_op, dH_op, basis)
    return sysm.template.evaluate(sysm.hc, sysm.dhc)


# ---------------------------------------------------------------------------
# solutions


@dataclass(eq=False)
class AgpSolution:
    """Coefficients of the AGP on an orbit basis plus solver diagnostics.

    ``residual_norm`` is ``||-i[H, G]||`` (normalized HS norm) with
    ``G = dH - i[H, A]``; it vanishes exactly when ``A`` is the AGP up to its
    eigenbasis-diagonal part. ``g_norm`` is ``||G||``.
    """

    basis: AgpBasis
    alpha: np.ndarray
    rank: int
    residual_norm: float
    mode: str
    lam: float | None = None
    g_norm: float = float("nan")
    scale: float = 1.0
    diagnostics: dict = field(default_factory=dict)
    _ctx: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def relative_residual(self) -> float:
        return self.residual_norm / self.scale if self.scale > 0 else self.residual_norm

    @property
    def is_exact(self) -> bool:
        return self.mode in (MODE_EXACT, MODE_CONSTRAINED)

    def orbit_labels(self) -> list[str]:
        return [o[0].label for o in self.basis.orbits]

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "basis": self.basis.to_dict(),
            "alpha": [float(a) for a in self.alpha],
            "rank": int(self.rank),
            "residual": float(self.residual_norm),
            "g_norm": float(self.g_norm),
            "mode": self.mode,
            "diagnostics": self.diagnostics,
        }


def _rank(M: np.ndarray, rtol: float = RANK_RTOL) -> tuple[int, np.ndarray]:
    if M.size == 0:
        return 0, np.zeros(0)
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0:
        return 0, sv
    return int(np.sum(sv > rtol * sv[0])), sv


def _solve_with_repairs(M: np.ndarray, u: np.ndarray, v: np.ndarray | None, rtol: float = RANK_RTOL):
    """Direct solve, then diagonal-gauge constraint, then minimum-norm least squares."""
    n = len(u)
    rank, sv = _rank(M, rtol)
    diag = {"rank_initial": rank, "cond": float(sv[0] / sv[-1]) if n and sv[-1] > 0 else float("inf")}
    if rank == n:
        return np.linalg.solve(M, u), rank, "direct", diag
    if v is not None and np.any(v != 0.0):
        # Tr(H A) = v . alpha = 0 makes v v^T invisible on the solution
        kappa = (sv[0] if sv.size and sv[0] > 0 else 1.0) / float(v @ v)
        Mc = M + kappa * np.outer(v, v)
        rank_c, _ = _rank(Mc, rtol)
        diag["rank_constrained"] = rank_c
        if rank_c == n:
            return np.linalg.solve(Mc, u), rank, "constraint", diag
    alpha, *_ = np.linalg.lstsq(M, u, rcond=rtol)
    return alpha, rank, "lstsq", diag


def _classify(route: str, residual: float, scale: float, rtol: float = EXACT_RTOL) -> str:
    ok = residual <= rtol * scale if scale > 0 else residual <= 1e-300
    if not ok:
        return MODE_RESTRICTED
    return MODE_EXACT if route == "direct" else MODE_CONSTRAINED


def solve_exact(
    M: np.ndarray,
    u: np.ndarray,
    basis: AgpBasis,
    H_op: PauliOperator,
    dH_op: PauliOperator,
    lam: float | None = None,
) -> AgpSolution:
    """Solve ``M alpha = u`` with rank repairs and report the commutator residual.

    Modes: ``exact`` for a full-rank direct solve, ``constrained`` when the
    diagonal gauge had to be fixed (by ``Tr(HA) = 0`` or by the minimum-norm
    solution) and the residual still vanishes, ``restricted`` otherwise.
    """
    sysm = _OpSystem(H_op, dH_op, basis)
    v = sysm.template.h_overlap(sysm.hc)
    alpha, rank, route, diag = _solve_with_repairs(M, u, v)
    g_norm, res = sysm.template.norms(sysm.hc, sysm.dhc, alpha)
    mode = _classify(route, res, sysm.scale)
    diag["route"] = route
    return AgpSolution(basis, alpha, rank, res, mode, lam, g_norm, sysm.scale, diag,
                       (sysm.template, sysm.hc, sysm.dhc))


def solve_restricted(
    H: ParametricHamiltonian,
    lam: float,
    restricted_basis: AgpBasis,
    *,
    full_basis: AgpBasis | None = None,
    allow_exploratory: bool = False,
) -> AgpSolution:
    """Least-squares (variational) AGP on a restricted basis."""
    if len(restricted_basis) == 0:
        raise ValueError("empty basis")
    if not allow_exploratory:
        ref = full_basis if full_basis is not None else generate_basis(H, lam)
        missing = set(restricted_basis.strings) - set(ref.strings)
        if missing:
            raise BasisSubsetError(
                f"{len(missing)} strings are not in the AGP basis, e.g. {sorted(missing)[0].label}; "
                "pass allow_exploratory=True to override"
            )
    H_op, dH_op = H.operator(lam), H.derivative(lam)
    sysm = _OpSystem(H_op, dH_op, restricted_basis)
    M, u = sysm.template.evaluate(sysm.hc, sysm.dhc)
    rank, _ = _rank(M)
    alpha, *_ = np.linalg.lstsq(M, u, rcond=RANK_RTOL)
    g_norm, res = sysm.template.norms(sysm.hc, sysm.dhc, alpha)
    return AgpSolution(restricted_basis, alpha, rank, res, MODE_RESTRICTED, lam, g_norm, sysm.scale,
                       {"route": "lstsq"}, (sysm.template, sysm.hc, sysm.dhc))


def truncate_exact(full: AgpSolution, keep: Iterable[int]) -> AgpSolution:
    """Zero every orbit coefficient outside ``keep``; residual recomputed."""
    keep = set(keep)
    if not keep <= set(range(full.basis.n_orbits)):
        raise ValueError("keep must index orbits of the full solution")
    if full.mode != MODE_EXACT and full.mode != MODE_CONSTRAINED:
        raise ValueError("truncate_exact needs an exact solution")
    if keep == set(range(full.basis.n_orbits)):
        return full
    alpha = np.array([a if i in keep else 0.0 for i, a in enumerate(full.alpha)])
    g_norm, res = full.g_norm, full.residual_norm
    if full._ctx is not None:
        tpl, hc, dhc = full._ctx
        g_norm, res = tpl.norms(hc, dhc, alpha)
    diag = dict(full.diagnostics, truncated_to=sorted(keep))
    return AgpSolution(full.basis, alpha, full.rank, res, MODE_RESTRICTED, full.lam, g_norm,
                       full.scale, diag, full._ctx)


def agp_operator(sol: AgpSolution) -> PauliOperator:
    """Expand orbit coefficients onto strings."""
    terms = [(s, float(a)) for o, a in zip(sol.basis.orbits, sol.alpha) for s in o]
    return PauliOperator(terms, sol.basis.n_sites)


def residual(H_op: PauliOperator, dH_op: PauliOperator, A_op: PauliOperator) -> float:
    """``||-i[H, dH - i[H, A]]||`` in the normalized HS norm (generic route)."""
    G = dH_op + op_commutator(H_op, A_op)
    return math.sqrt(op_commutator(H_op, G).hs_norm_sq())


# ---------------------------------------------------------------------------
# path solver


class AgpSolver:
    """Repeated AGP solves for one Hamiltonian family on a fixed basis."""

    def __init__(self, H: ParametricHamiltonian, basis: AgpBasis):
        if H.n_sites != basis.n_sites:
            raise ValueError("Hamiltonian and basis must share n_sites")
        self.H = H
        self.basis = basis
        self.template = SystemTemplate(H.basis, H.basis, basis)

    @classmethod
    def for_path(
        cls,
        H: ParametricHamiltonian,
        lambdas: Iterable[float],
        generators: Sequence[Sequence[int]] | None = None,
        k_max: int | None = None,
    ) -> "AgpSolver":
        basis = generate_path_basis(H, lambdas, k_max)
        if generators:
            basis = basis.grouped(generators, H)
        return cls(H, basis)

    def system(self, lam: float) -> tuple[np.ndarray, np.ndarray]:
        return self.template.evaluate(self.H.coeffs(lam), self.H.dcoeffs(lam))

    def _finish(self, lam, alpha, rank, route, diag, hc, dhc, with_residual, restricted=False):
        scale = math.sqrt(float(hc @ hc) * float(dhc @ dhc))
        if with_residual:
            g_norm, res = self.template.norms(hc, dhc, alpha)
            mode = MODE_RESTRICTED if restricted else _classify(route, res, scale)
        else:
            g_norm, res = float("nan"), float("nan")
            mode = MODE_RESTRICTED if restricted else (MODE_EXACT if route == "direct" else MODE_CONSTRAINED)
        diag["route"] = route
        return AgpSolution(self.basis, alpha, rank, res, mode, lam, g_norm, scale, diag,
                           (self.template, hc, dhc))

    def solve(self, lam: float, with_residual: bool = True) -> AgpSolution:
        hc, dhc = self.H.coeffs(lam), self.H.dcoeffs(lam)
        M, u = self.template.evaluate(hc, dhc)
        v = self.template.h_overlap(hc)
        alpha, rank, route, diag = _solve_with_repairs(M, u, v)
        return self._finish(lam, alpha, rank, route, diag, hc, dhc, with_residual)

    def solve_restricted(self, lam: float, keep: Iterable[int], with_residual: bool = True) -> AgpSolution:
        """Variational solve on the orbits in ``keep`` (others pinned to zero)."""
        keep = sorted(set(keep))
        if not keep:
            raise ValueError("empty basis")
        hc, dhc = self.H.coeffs(lam), self.H.dcoeffs(lam)
        M, u = self.template.evaluate(hc, dhc)
        sub = np.ix_(keep, keep)
        rank, _ = _rank(M[sub])
        a_sub, *_ = np.linalg.lstsq(M[sub], u[keep], rcond=RANK_RTOL)
        alpha = np.zeros(self.template.n)
        alpha[keep] = a_sub
        diag = {"kept": keep}
        return self._finish(lam, alpha, rank, "lstsq", diag, hc, dhc, with_residual, restricted=True)

    def solve_truncated(self, lam: float, keep: Iterable[int], with_residual: bool = True) -> AgpSolution:
        full = self.solve(lam, with_residual=False)
        keep = set(keep)
        alpha = np.array([a if i in keep else 0.0 for i, a in enumerate(full.alpha)])
        hc, dhc = full._ctx[1], full._ctx[2]
        diag = dict(full.diagnostics, truncated_to=sorted(keep))
        return self._finish(lam, alpha, full.rank, diag.pop("route"), diag, hc, dhc, with_residual,
                            restricted=len(keep) < self.template.n)

    def coefficient_fn(self, kind: str = "exact", keep: Iterable[int] | None = None) -> Callable[[float], np.ndarray]:
        """``lambda -> per-string coefficients`` aligned with :attr:`strings`."""
        expand = np.repeat(np.arange(self.template.n), self.template.sizes.astype(int))
        if kind == "exact":
            f = lambda lam: self.solve(lam, with_residual=False).alpha  # noqa: E731
        elif kind == "truncated":
            keep = list(keep or [])
            f = lambda lam: self.solve_truncated(lam, keep, with_residual=False).alpha  # noqa: E731
        elif kind == "restricted":
            keep = list(keep or [])
            f = lambda lam: self.solve_restricted(lam, keep, with_residual=False).alpha  # noqa: E731
        else:
            raise ValueError(f"unknown AGP kind {kind!r}")
        return lambda lam: f(lam)[expand]

    @property
    def strings(self) -> list[PauliString]:
        return [s for o in self.basis.orbits for s in o]

    def operator(self, lam: float, kind: str = "exact", keep: Iterable[int] | None = None) -> PauliOperator:
        c = self.coefficient_fn(kind, keep)(lam)
        return PauliOperator(zip(self.strings, c), self.basis.n_sites)
