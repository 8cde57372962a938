"""Named experiment pipelines.

Each runner takes a validated :class:`ExperimentConfig` and an output
directory, fans independent sweep points out to worker processes, and writes
every file itself from the parent process: one CSV per sweep point under
``points/``, a merged CSV per figure, JSON summaries and a plot script.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .agp import AgpBasis, AgpSolver, generate_basis
from .config import ExperimentConfig, custom_hamiltonian
from .dynamics import Drive, NormDriftError, evolve
from .models import (
    Schedule,
    ising_agp_orbits,
    schedule_from_dict,
    single_spin_system,
    swap_sites,
    transverse_ising_chain,
    two_spin_system,
)
from .qpt import fit_scaling, restriction_scan, size_scan
from .qsl import (
    NORM_HS,
    NORM_OPERATOR,
    EigenstateTracker,
    QuadratureError,
    bound_integral,
    integrand_curve,
    loose_bound_integral,
)

BOUND_SLACK = 1e-6
EXACT_PIN_TOL = 1e-6
TWO_SPIN_CASES = {"a": [], "b": [0], "c": [1], "d": [2]}


@dataclass
class RunOutput:
    files: list[Path] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    degradations: list[str] = field(default_factory=list)


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_json(path: Path, data: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o: Any):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def plot_script(csv_name: str, x: str, y: str, group: str | None = None, *, title: str = "",
                logy: bool = False) -> str:
    """Standalone matplotlib script plotting column ``y`` against ``x``, one line per ``group``."""
    return f'''"""Plot {y} against {x} from {csv_name}."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("{csv_name}")))
series = defaultdict(list)
for r in rows:
    series[{f'r["{group}"]' if group else '"all"'}].append((float(r["{x}"]), float(r["{y}"])))
for name, pts in sorted(series.items()):
    pts.sort()
    plt.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
plt.xlabel("{x}")
plt.ylabel("{y}")
{"plt.yscale('log')" if logy else ""}
plt.title("{title}")
plt.legend()
plt.savefig(sys.argv[1] if len(sys.argv) > 1 else "{Path(csv_name).stem}.png", dpi=150)
'''


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# single spin


def _single_spin_point(args) -> list:
    i, hx, hz, dhx, dhz = args
    H = single_spin_system(lambda lam: hx + dhx * lam, lambda lam: 0.0, lambda lam: hz + dhz * lam,
                           (lambda lam: dhx, lambda lam: 0.0, lambda lam: dhz))
    basis = generate_basis(H, 0.0)
    sol = AgpSolver(H, basis).solve(0.0)
    alpha = float(sol.alpha[0]) if basis.labels() == ["Y"] else float("nan")
    closed = (hz * dhx - hx * dhz) / (2.0 * (hx * hx + hz * hz))
    rel = abs(alpha - closed) / abs(closed) if closed else abs(alpha)
    return [i, hx, hz, dhx, dhz, alpha, closed, rel, sol.mode, sol.residual_norm]


def run_single_spin_check(cfg: ExperimentConfig, out: Path) -> RunOutput:
    rng = np.random.default_rng(cfg.seed)
    n = cfg["n_samples"]
    draws = rng.normal(size=(n, 4))
    rows = _map(_single_spin_point, [(i, *map(float, d)) for i, d in enumerate(draws)], cfg.threads)
    res = RunOutput()
    hdr = ["sample", "h_x", "h_z", "dh_x", "dh_z", "alpha_y", "closed_form", "rel_err", "mode", "residual"]
    res.files.append(write_csv(out / "single_spin_check.csv", hdr, rows))
    worst = float(np.max([r[7] for r in rows]))
    res.diagnostics = {"max_rel_err": worst, "modes": sorted({r[8] for r in rows})}
    if not worst < 1e-10:
        res.degradations.append(f"single-spin closed-form mismatch: max relative error {worst:.3g}")
    return res


# ---------------------------------------------------------------------------
# two spin


def _two_spin(cfg_params: dict):
    H = two_spin_system(float(cfg_params["chi0"]), omega0=float(cfg_params["omega0"]))
    sched = schedule_from_dict(cfg_params["schedule"])
    lams = np.linspace(sched.lam(0.0), sched.lam(sched.t_final), 9)
    solver = AgpSolver.for_path(H, lams, [swap_sites(2)])
    return H, sched, solver


def _two_spin_drives(solver: AgpSolver) -> dict[str, Drive]:
    return {name: (Drive.none() if not keep else Drive.from_solver(solver, "truncated", keep, name))
            for name, keep in TWO_SPIN_CASES.items()}


def _two_spin_bound_point(args) -> dict:
    params, case, loose = args
    H, sched, solver = _two_spin(params)
    exact, app = Drive.from_solver(solver), _two_spin_drives(solver)[case]
    n_panels = params["n_panels"]
    b = bound_integral(H, exact, app, sched, n_panels, label=case)
    out = {"case": case, "B": b.bound_B, "fidelity_floor": b.fidelity_floor, "n_panels": b.n_panels}
    if loose:
        for kind in (NORM_OPERATOR, NORM_HS):
            lb = loose_bound_integral(H, exact, app, sched, n_panels, norm_kind=kind)
            out[f"B_{kind}"] = lb.bound_B
    ts = np.linspace(0.0, sched.t_final, n_panels + 1)
    out["curve"] = integrand_curve(H, exact, app, sched, ts).tolist()
    return out


def run_two_spin_bound(cfg: ExperimentConfig, out: Path) -> RunOutput:
    params = cfg.params
    H, sched, solver = _two_spin(params)
    cases = list(TWO_SPIN_CASES)
    results = _map(_two_spin_bound_point, [(params, c, bool(params.get("loose"))) for c in cases], cfg.threads)
    res = RunOutput()
    ts = np.linspace(0.0, sched.t_final, params["n_panels"] + 1)
    deltas = [sched.lam(t) for t in ts]
    for r in results:
        res.files.append(write_csv(out / "points" / f"integrand_{r['case']}.csv", ["t", "delta", "sigma"],
                                   zip(ts, deltas, r["curve"])))
    merged = [[t, d, *(r["curve"][i] for r in results)] for i, (t, d) in enumerate(zip(ts, deltas))]
    res.files.append(write_csv(out / "two_spin_integrand.csv", ["t", "delta", *cases], merged))
    long_rows = [[d, c, r["curve"][i]] for r, c in zip(results, cases) for i, d in enumerate(deltas)]
    res.files.append(write_csv(out / "two_spin_integrand_long.csv", ["delta", "case", "sigma"], long_rows))
    summary = [{k: v for k, v in r.items() if k != "curve"} for r in results]
    res.files.append(write_json(out / "two_spin_bounds.json",
                                {"cases": summary, "integrand_includes_rate": True, "schedule": sched.to_dict()}))
    res.files.append(_write_text(out / "two_spin_integrand.plot.py",
                                 plot_script("two_spin_integrand_long.csv", "delta", "sigma", "case",
                                             title="bound integrand, T=%g" % sched.t_final)))
    mid = int(np.argmin(np.abs(np.array(deltas))))
    res.diagnostics = {"bounds": summary, "integrand_at_delta0": {c: r["curve"][mid] for c, r in zip(cases, results)}}
    return res


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _two_spin_fid_point(args) -> list:
    params, T, case = args
    H, sched, solver = _two_spin(params)
    drive = _two_spin_drives(solver)[case]
    try:
        r = evolve(H, drive, sched.with_duration(T), n_steps=params.get("n_steps"), n_samples=2)
    except NormDriftError as e:
        return [T, case, float("nan"), str(e)]
    return [T, case, r.final_fidelity, ""]


def run_two_spin_fidelity(cfg: ExperimentConfig, out: Path) -> RunOutput:
    params = cfg.params
    cases = list(TWO_SPIN_CASES)
    bounds = _map(_two_spin_bound_point, [(params, c, False) for c in cases], cfg.threads)
    B = {b["case"]: b["B"] for b in bounds}
    points = [(params, float(T), c) for T in params["T_list"] for c in cases]
    rows = _map(_two_spin_fid_point, points, cfg.threads)
    res = RunOutput()
    table = []
    for T, case, p, err in rows:
        if err:
            res.degradations.append(f"T={T} case {case}: {err}")
            continue
        angle = math.acos(math.sqrt(min(max(p, 0.0), 1.0)))
        ok = angle <= B[case] + BOUND_SLACK
        if not ok:
            res.degradations.append(f"T={T} case {case}: angle {angle:.6g} exceeds bound {B[case]:.6g}")
        row = [T, case, p, B[case], math.cos(B[case]) ** 2 if B[case] <= math.pi / 2 else 0.0, angle, int(ok)]
        table.append(row)
        res.files.append(write_csv(out / "points" / f"fidelity_T{T:g}_{case}.csv",
                                   ["T", "case", "fidelity", "B", "fidelity_floor", "angle", "within_bound"], [row]))
    hdr = ["T", "case", "fidelity", "B", "fidelity_floor", "angle", "within_bound"]
    res.files.append(write_csv(out / "two_spin_fidelity.csv", hdr, table))
    res.files.append(write_json(out / "two_spin_bounds.json", {"cases": bounds_summary(bounds)}))
    res.files.append(_write_text(out / "two_spin_fidelity.plot.py",
                                 plot_script("two_spin_fidelity.csv", "T", "fidelity", "case",
                                             title="final fidelity vs T")))
    res.diagnostics = {"bounds": B, "n_points": len(rows)}
    return res


def bounds_summary(bounds: list[dict]) -> list[dict]:
    return [{k: v for k, v in b.items() if k != "curve"} for b in bounds]


# ---------------------------------------------------------------------------
# Ising chain


def _ising_drive(solver: AgpSolver, K: int | None, mode: str) -> Drive:
    if K is None:
        return Drive.none()
    return Drive.from_solver(solver, mode, range(K + 1), f"{mode}-K{K}")


def _ising_fid_point(args) -> list:
    params, T, K, mode = args
    L = params["L"]
    H = transverse_ising_chain(L)
    solver = AgpSolver(H, AgpBasis.from_grouping(ising_agp_orbits(L)))
    sched = schedule_from_dict({**params["schedule"], "T": T})
    try:
        r = evolve(H, _ising_drive(solver, K, mode), sched, n_steps=params.get("n_steps"), n_samples=2)
    except NormDriftError as e:
        return [T, mode, K, float("nan"), str(e)]
    return [T, mode, K, r.final_fidelity, ""]


def run_ising_fidelity(cfg: ExperimentConfig, out: Path) -> RunOutput:
    params = cfg.params
    L = params["L"]
    K_list, modes = params["K_list"], params["modes"]
    combos = [(None, "none")] if None in K_list else []
    combos += [(K, m) for m in modes for K in K_list if K is not None]
    points = [(params, float(T), K, m) for T in params["T_list"] for K, m in combos]
    rows = _map(_ising_fid_point, points, cfg.threads)
    res = RunOutput()

    B: dict[tuple, float] = {}
    if params.get("bound"):
        H = transverse_ising_chain(L)
        solver = AgpSolver(H, AgpBasis.from_grouping(ising_agp_orbits(L)))
        sched = schedule_from_dict(params["schedule"])
        tracker = EigenstateTracker(H, sched.lam(0.0))
        exact = Drive.from_solver(solver)
        for K, m in combos:
            try:
                b = bound_integral(H, exact, _ising_drive(solver, K, m), sched, params["n_panels"],
                                   rtol=params["bound_rtol"], max_doublings=params["bound_max_doublings"],
                                   tracker=tracker)
                B[(K, m)] = b.bound_B
            except QuadratureError as e:
                res.degradations.append(f"bound K={K} mode={m}: {e}")

    hdr = ["T", "mode", "K", "fidelity", "B", "fidelity_floor", "within_bound"]
    table = []
    for T, m, K, p, err in rows:
        if err:
            res.degradations.append(f"T={T} K={K} mode={m}: {err}")
            continue
        b = B.get((K, m))
        floor = None if b is None else (math.cos(b) ** 2 if b <= math.pi / 2 else 0.0)
        ok = None
        if b is not None:
            ok = int(math.acos(math.sqrt(min(max(p, 0.0), 1.0))) <= b + BOUND_SLACK)
            if not ok:
                res.degradations.append(f"T={T} K={K} mode={m}: fidelity {p:.6g} below bound floor {floor:.6g}")
        row = [T, m, K, p, b, floor, ok]
        table.append(row)
        res.files.append(write_csv(out / "points" / f"ising_T{T:g}_{m}_K{'none' if K is None else K}.csv", hdr, [row]))
    res.files.append(write_csv(out / "ising_fidelity.csv", hdr, table))
    long = [[r[0], f"{r[1]}-K{'none' if r[2] is None else r[2]}", r[3]] for r in table]
    res.files.append(write_csv(out / "ising_fidelity_long.csv", ["T", "series", "fidelity"], long))
    res.files.append(_write_text(out / "ising_fidelity.plot.py",
                                 plot_script("ising_fidelity_long.csv", "T", "fidelity", "series",
                                             title=f"Ising L={L} annealing fidelity")))
    res.files.append(write_json(out / "ising_bounds.json",
                                [{"K": K, "mode": m, "B": b} for (K, m), b in B.items()]))
    res.diagnostics = {"bounds": {f"{m}-K{K}": b for (K, m), b in B.items()}, "n_points": len(rows)}
    return res


# ---------------------------------------------------------------------------
# scaling scans


def _size_scan_point(args):
    g, L_list, K_policy, dlambda = args
    return size_scan(g, L_list, K_policy, dlambda)


def _records_rows(records) -> list[list]:
    return [r.row() for r in records]


SCAN_HEADER = ["g", "L", "K", "rate", "hs_norm_per_dim", "orbit_sum", "mode", "residual"]


def run_size_scan(cfg: ExperimentConfig, out: Path) -> RunOutput:
    p = cfg.params
    gs = [float(g) for g in p["g_list"]]
    scans = _map(_size_scan_point, [(g, list(p["L_list"]), p["K_policy"], float(p["dlambda"])) for g in gs],
                 cfg.threads)
    res = RunOutput()
    fits = {}
    allrows = []
    for g, recs in zip(gs, scans):
        rows = _records_rows(recs)
        allrows += rows
        res.files.append(write_csv(out / "points" / f"size_scan_g{g:g}.csv", SCAN_HEADER, rows))
        bad = [r for r in recs if r.mode == "restricted" and p["K_policy"] == "exact"]
        for r in bad:
            res.degradations.append(f"g={g} L={r.L}: exact solve degraded (residual {r.residual:.3g})")
        if len(recs) >= 3:
            fits[f"{g:g}"] = {"hs_norm_per_dim": fit_scaling(recs, "L").to_dict(),
                              "orbit_sum": fit_scaling(recs, "L", "orbit_sum").to_dict()}
    res.files.append(write_csv(out / "qpt_size_scan.csv", SCAN_HEADER, allrows))
    res.files.append(write_json(out / "qpt_size_fit.json", fits))
    res.files.append(_write_text(out / "qpt_size_scan.plot.py",
                                 plot_script("qpt_size_scan.csv", "L", "hs_norm_per_dim", "g",
                                             title="AGP norm per dimension vs L")))
    res.diagnostics = {"fits": fits}
    return res


def _restriction_point(args):
    g, L, K_list, dlambda = args
    return restriction_scan(g, L, K_list, dlambda)


def run_restriction_scan(cfg: ExperimentConfig, out: Path) -> RunOutput:
    p = cfg.params
    gs = [float(g) for g in p["g_list"]]
    L = p["L"]
    K_list = p["K_list"] if p["K_list"] is not None else list(range(L - 1))
    scans = _map(_restriction_point, [(g, L, K_list, float(p["dlambda"])) for g in gs], cfg.threads)
    res = RunOutput()
    fits, mono, allrows = {}, {}, []
    for g, recs in zip(gs, scans):
        rows = _records_rows(recs)
        allrows += rows
        res.files.append(write_csv(out / "points" / f"restriction_scan_g{g:g}.csv", SCAN_HEADER, rows))
        norms = [r.hs_norm_per_dim for r in sorted(recs, key=lambda r: r.K)]
        mono[f"{g:g}"] = bool(all(b >= a for a, b in zip(norms, norms[1:])))
        if len(recs) >= 3:
            fits[f"{g:g}"] = fit_scaling(recs, "rate").to_dict()
    res.files.append(write_csv(out / "qpt_restriction_scan.csv", SCAN_HEADER, allrows))
    res.files.append(write_json(out / "qpt_restriction_fit.json", {"fits": fits, "monotone_in_K": mono}))
    res.files.append(_write_text(out / "qpt_restriction_scan.plot.py",
                                 plot_script("qpt_restriction_scan.csv", "rate", "hs_norm_per_dim", "g",
                                             title=f"restricted AGP norm vs restriction rate, L={L}")))
    res.diagnostics = {"fits": fits, "monotone_in_K": mono}
    return res


# ---------------------------------------------------------------------------
# custom


def run_custom(cfg: ExperimentConfig, out: Path) -> RunOutput:
    p = cfg.params
    H = custom_hamiltonian(p["terms"])
    sched = schedule_from_dict(p["schedule"])
    lams = np.linspace(sched.lam(0.0), sched.lam(sched.t_final), 9)
    solver = AgpSolver.for_path(H, lams, p.get("generators") or None)
    res = RunOutput()
    modes = sorted({solver.solve(float(x)).mode for x in lams})
    res.diagnostics["solver_modes"] = modes
    res.diagnostics["basis"] = solver.basis.to_dict()
    agp = p["agp"]
    if agp == "exact":
        drive = Drive.from_solver(solver)
        if "restricted" in modes:
            res.degradations.append("exact AGP solve degraded to a least-squares fit somewhere on the path")
    elif agp == "none":
        drive = Drive.none()
    else:
        drive = Drive.from_solver(solver, agp["kind"], agp["keep"])
    try:
        r = evolve(H, drive, sched, n_steps=p.get("n_steps"))
    except NormDriftError as e:
        res.degradations.append(str(e))
        return res
    res.files.append(write_csv(out / "custom_fidelity.csv", ["t", "lambda", "p_0"],
                               zip(r.times, r.lambdas, r.fidelities)))
    summary = r.manifest()
    if p.get("bound") and agp != "exact":
        try:
            b = bound_integral(H, Drive.from_solver(solver), drive, sched, p["n_panels"],
                               rtol=p["bound_rtol"], max_doublings=p["bound_max_doublings"])
            summary.update(B=b.bound_B, fidelity_floor=b.fidelity_floor)
            angle = math.acos(math.sqrt(min(max(r.final_fidelity, 0.0), 1.0)))
            if angle > b.bound_B + BOUND_SLACK:
                res.degradations.append(f"final fidelity {r.final_fidelity:.6g} violates bound {b.bound_B:.6g}")
        except QuadratureError as e:
            res.degradations.append(str(e))
    if agp == "exact" and r.min_fidelity < 1.0 - EXACT_PIN_TOL:
        res.degradations.append(f"exact driving lost fidelity: min p_0 = {r.min_fidelity:.9f}")
    res.files.append(write_json(out / "custom_summary.json", summary))
    res.files.append(_write_text(out / "custom_fidelity.plot.py",
                                 plot_script("custom_fidelity.csv", "t", "p_0", title="fidelity")))
    res.diagnostics.update(summary)
    return res


RUNNERS: dict[str, Callable[[ExperimentConfig, Path], RunOutput]] = {
    "single-spin-check": run_single_spin_check,
    "two-spin-bound": run_two_spin_bound,
    "two-spin-fidelity": run_two_spin_fidelity,
    "ising-fidelity": run_ising_fidelity,
    "qpt-size-scan": run_size_scan,
    "qpt-restriction-scan": run_restriction_scan,
    "custom": run_custom,
}
