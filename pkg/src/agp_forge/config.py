"""Experiment configuration documents and their validation."""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .dynamics import MAX_EVOLUTION_SITES
from .models import ParametricHamiltonian, schedule_from_dict
from .pauli import PauliString
from .spectral import MAX_DENSE_SITES

EXPERIMENTS = (
    "single-spin-check",
    "two-spin-bound",
    "two-spin-fidelity",
    "ising-fidelity",
    "qpt-size-scan",
    "qpt-restriction-scan",
    "custom",
)
EVOLUTION_EXPERIMENTS = {"two-spin-fidelity", "ising-fidelity", "custom"}
AGP_MODES = ("truncated", "restricted")

_TWO_SPIN = {"chi0": -1.0, "omega0": -1.0, "schedule": {"kind": "cosine", "T": 1.0, "amplitude": 2.0}}

DEFAULTS: dict[str, dict[str, Any]] = {
    "single-spin-check": {"n_samples": 100},
    "two-spin-bound": {**_TWO_SPIN, "n_panels": 1024, "loose": True},
    "two-spin-fidelity": {**_TWO_SPIN, "T_list": [0.05, 0.1, 0.2, 0.5, 1.0, 2.0], "n_steps": None,
                          "n_panels": 1024},
    "ising-fidelity": {"L": 10, "schedule": {"kind": "annealing", "T": 1.0}, "T_list": [0.1, 0.3, 1.0],
                       "K_list": [None, 0, 2, 8], "modes": list(AGP_MODES), "n_steps": None,
                       "bound": True, "n_panels": 32, "bound_rtol": 1e-4, "bound_max_doublings": 4},
    "qpt-size-scan": {"g_list": [0.5, 0.48, 0.45], "L_list": list(range(20, 201, 20)), "K_policy": "exact",
                      "dlambda": 1.0},
    "qpt-restriction-scan": {"L": 10, "g_list": [0.5, 0.48, 0.45], "K_list": None, "dlambda": 1.0},
    "custom": {"schedule": {"kind": "linear", "T": 1.0}, "agp": "exact", "n_steps": None, "bound": True,
               "n_panels": 64, "bound_rtol": 1e-6, "bound_max_doublings": 8, "generators": []},
}

_COMMON = {"experiment", "out", "threads", "seed", "system"}


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    out: str = "results"
    threads: int = 1
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: dict, **overrides) -> "ExperimentConfig":
        doc = dict(doc)
        doc.update({k: v for k, v in overrides.items() if v is not None})
        exp = doc.get("experiment", "")
        params = copy.deepcopy(DEFAULTS.get(exp, {}))
        params.update({k: v for k, v in doc.items() if k not in _COMMON})
        if "system" in doc:
            params["system"] = doc["system"]
        return cls(exp, params, str(doc.get("out", "results")), doc.get("threads", 1), doc.get("seed", 0))

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), **overrides)

    def __getitem__(self, key: str) -> Any:
        return self.params[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)

    def snapshot(self) -> dict:
        return {"experiment": self.experiment, "out": self.out, "threads": self.threads, "seed": self.seed,
                **self.params}


# ---------------------------------------------------------------------------
# custom Hamiltonians


def _primitive(spec: Any):
    """``(f, df)`` for a coefficient given as a number or a named primitive."""
    if isinstance(spec, (int, float)):
        v = float(spec)
        return (lambda lam: v), (lambda lam: 0.0)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError(f"coefficient must be a number or an object with 'kind', got {spec!r}")
    kind = spec["kind"]
    if kind == "constant":
        v = float(spec["value"])
        return (lambda lam: v), (lambda lam: 0.0)
    if kind == "linear":
        a, b = float(spec.get("slope", 1.0)), float(spec.get("offset", 0.0))
        return (lambda lam: a * lam + b), (lambda lam: a)
    if kind == "cosine":
        A, w = float(spec.get("amplitude", 1.0)), float(spec.get("frequency", 1.0))
        ph, c = float(spec.get("phase", 0.0)), float(spec.get("offset", 0.0))
        return (lambda lam: A * math.cos(w * lam + ph) + c), (lambda lam: -A * w * math.sin(w * lam + ph))
    raise ValueError(f"unknown coefficient primitive {kind!r}; expected constant, linear or cosine")


def custom_hamiltonian(terms: list[dict]) -> ParametricHamiltonian:
    """``[{"string": "XZ", "coeff": <number | primitive>}, ...]`` as a parametric Hamiltonian."""
    if not terms:
        raise ValueError("custom system needs at least one term")
    basis, fs, dfs = [], [], []
    for t in terms:
        basis.append(PauliString.from_label(t["string"]))
        f, df = _primitive(t.get("coeff", 1.0))
        fs.append(f)
        dfs.append(df)
    return ParametricHamiltonian(
        basis,
        lambda lam: np.array([f(lam) for f in fs]),
        lambda lam: np.array([f(lam) for f in dfs]),
        name="custom",
    )


# ---------------------------------------------------------------------------
# validation


def _positive(findings: list[str], name: str, value: Any) -> None:
    if not isinstance(value, (int, float)) or not value > 0:
        findings.append(f"{name} must be a positive number, got {value!r}")


def _writable(path: str) -> bool:
    p = Path(path).resolve()
    while not p.exists():
        if p.parent == p:
            return False
        p = p.parent
    return p.is_dir() and os.access(p, os.W_OK)


def validate(config: ExperimentConfig) -> list[str]:
    """Every violated constraint as a readable finding; empty when the config is usable."""
    f: list[str] = []
    exp = config.experiment
    if exp not in EXPERIMENTS:
        return [f"unknown experiment {exp!r}; expected one of {', '.join(EXPERIMENTS)}"]
    if not isinstance(config.threads, int) or config.threads < 1:
        f.append(f"threads must be a positive integer, got {config.threads!r}")
    if not isinstance(config.seed, int) or config.seed < 0:
        f.append(f"seed must be a non-negative integer, got {config.seed!r}")
    if not _writable(config.out):
        f.append(f"output directory {config.out!r} is not writable")
    known = set(DEFAULTS[exp]) | {"system"}
    extra = sorted(set(config.params) - known - ({"terms"} if exp == "custom" else set()))
    if extra:
        f.append(f"unknown fields for {exp}: {', '.join(extra)}")

    p = config.params
    if "schedule" in p:
        try:
            sched = schedule_from_dict(p["schedule"])
            _positive(f, "schedule.T", sched.t_final)
        except (ValueError, TypeError) as e:
            f.append(f"invalid schedule: {e}")
    for key in ("T_list",):
        if key in p:
            if not p[key]:
                f.append(f"{key} must be non-empty")
            for T in p[key] or []:
                _positive(f, key + " entry", T)
    if p.get("n_steps") is not None and (not isinstance(p["n_steps"], int) or p["n_steps"] < 100):
        f.append(f"n_steps must be an integer >= 100, got {p['n_steps']!r}")
    if "n_panels" in p and (not isinstance(p["n_panels"], int) or p["n_panels"] < 10):
        f.append(f"n_panels must be an integer >= 10, got {p['n_panels']!r}")

    if exp == "single-spin-check":
        if not isinstance(p["n_samples"], int) or p["n_samples"] < 1:
            f.append("n_samples must be a positive integer")

    if exp in ("ising-fidelity", "qpt-restriction-scan"):
        L = p.get("L")
        if not isinstance(L, int) or L < 3:
            f.append(f"L must be an integer >= 3, got {L!r}")
        else:
            if exp in EVOLUTION_EXPERIMENTS and L > MAX_EVOLUTION_SITES:
                f.append(f"L={L} exceeds the dense-evolution cap of {MAX_EVOLUTION_SITES}; use the qpt scans for large chains")
            K_list = p.get("K_list") or []
            for K in K_list:
                if K is None:
                    continue
                if not isinstance(K, int) or K < 0 or K > L - 2:
                    f.append(f"K={K!r} is outside the allowed orders 0 <= K <= L-2 = {L - 2}")
    if exp == "ising-fidelity":
        bad = [m for m in p.get("modes", []) if m not in AGP_MODES]
        if bad or not p.get("modes"):
            f.append(f"modes must be a non-empty subset of {list(AGP_MODES)}, got {p.get('modes')!r}")

    if exp in ("qpt-size-scan", "qpt-restriction-scan"):
        if not p.get("g_list"):
            f.append("g_list must be non-empty")
        _positive(f, "dlambda", p.get("dlambda"))
    if exp == "qpt-size-scan":
        Ls = p.get("L_list") or []
        if not Ls:
            f.append("L_list must be non-empty")
        for L in Ls:
            if not isinstance(L, int) or L < 3:
                f.append(f"L_list entry {L!r} must be an integer >= 3")
        kp = p.get("K_policy")
        if kp != "exact" and not (isinstance(kp, int) and kp >= 0):
            f.append(f"K_policy must be 'exact' or a non-negative integer, got {kp!r}")

    if exp == "custom":
        try:
            H = custom_hamiltonian(p.get("terms") or [])
        except (ValueError, KeyError, TypeError) as e:
            f.append(f"invalid custom terms: {e}")
        else:
            if H.n_sites > MAX_EVOLUTION_SITES:
                f.append(f"{H.n_sites} sites exceeds the dense-evolution cap of {MAX_EVOLUTION_SITES}")
            agp = p.get("agp")
            if isinstance(agp, dict):
                if agp.get("kind") not in AGP_MODES or not isinstance(agp.get("keep"), list):
                    f.append("agp object needs kind in {truncated, restricted} and a keep list")
            elif agp not in ("exact", "none"):
                f.append(f"agp must be 'exact', 'none' or an object, got {agp!r}")
            for g in p.get("generators") or []:
                if sorted(g) != list(range(H.n_sites)):
                    f.append(f"generator {g!r} is not a permutation of {H.n_sites} sites")
    if exp in ("two-spin-bound", "two-spin-fidelity") or (exp == "ising-fidelity" and p.get("bound")):
        L = p.get("L", 2)
        if isinstance(L, int) and L > MAX_DENSE_SITES:
            f.append(f"bound needs eigenstates; L={L} exceeds the dense cap of {MAX_DENSE_SITES}")
    return f
