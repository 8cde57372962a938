"""``agp-forge`` command line driver.

    agp-forge run --experiment ising-fidelity --config cfg.json --out results/ --threads 4 --seed 42
    agp-forge validate --config cfg.json

Exit codes: 0 success, 1 validation failure, 2 runtime degradation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import EXPERIMENTS, ExperimentConfig, validate
from .experiments import RUNNERS, write_json

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DEGRADED = 2
MANIFEST_NAME = "manifest.json"


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    versions: dict
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    degradations: list = field(default_factory=list)
    files: list = field(default_factory=list)
    untracked: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.degradations

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "versions": self.versions,
            "wall_time_s": self.wall_time,
            "diagnostics": self.diagnostics,
            "degradations": self.degradations,
            "status": "ok" if self.ok else "degraded",
            "files": self.files,
            "untracked": self.untracked,
        }


def versions() -> dict:
    return {"agp_forge": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _clear_previous(out: Path) -> None:
    """Remove the files a previous run in ``out`` listed, so reruns start clean."""
    old = out / MANIFEST_NAME
    if not old.is_file():
        return
    try:
        listed = json.loads(old.read_text()).get("files", [])
    except (OSError, ValueError):
        return
    root = out.resolve()
    for entry in listed:
        p = (out / entry.get("path", "")).resolve()
        if root in p.parents and p.is_file():
            p.unlink()
    old.unlink()


def _file_entry(out: Path, p: Path) -> dict:
    return {"path": p.relative_to(out).as_posix(), "sha256": sha256(p), "bytes": p.stat().st_size}


def run(config: ExperimentConfig) -> RunManifest:
    """Execute the named pipeline and write ``manifest.json`` next to its outputs.

    Raises ``ValueError`` listing every finding when the config is invalid.
    Failures inside the pipeline are recorded as degradations rather than raised.
    """
    findings = validate(config)
    if findings:
        raise ValueError("; ".join(findings))
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    _clear_previous(out)

    manifest = RunManifest(config.snapshot(), versions())
    t0 = time.perf_counter()
    produced: list[Path] = []
    try:
        res = RUNNERS[config.experiment](config, out)
        produced = res.files
        manifest.diagnostics = res.diagnostics
        manifest.degradations = list(res.degradations)
    except Exception as e:  # noqa: BLE001 - surfaced in the manifest
        manifest.degradations.append(f"{type(e).__name__}: {e}")
        manifest.diagnostics["traceback"] = traceback.format_exc()
    manifest.wall_time = time.perf_counter() - t0

    seen = {p.resolve() for p in produced}
    manifest.files = [_file_entry(out, p) for p in sorted(set(produced)) if p.is_file()]
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.resolve() not in seen and p.name != MANIFEST_NAME:
            manifest.untracked.append(_file_entry(out, p))
    write_json(out / MANIFEST_NAME, manifest.to_dict())
    return manifest


def _build_config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError("config document must be a JSON object")
    return ExperimentConfig.from_dict(doc, experiment=args.experiment, out=args.out,
                                      threads=args.threads, seed=args.seed)


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="agp-forge", description="Algebraic adiabatic gauge potentials and counterdiabatic driving.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run a named experiment"), ("validate", "check a config without running it")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--experiment", choices=EXPERIMENTS)
        p.add_argument("--config", help="JSON config document; flags override its fields")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker processes for independent sweep points")
        p.add_argument("--seed", type=int)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = parser().parse_args(argv)
    try:
        cfg = _build_config(args)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    findings = validate(cfg)
    if findings:
        for f in findings:
            print(f"invalid: {f}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "validate":
        print("config ok")
        return EXIT_OK

    manifest = run(cfg)
    print(f"{cfg.experiment}: {len(manifest.files)} files in {cfg.out} ({manifest.wall_time:.1f} s)")
    for d in manifest.degradations:
        print(f"degraded: {d}", file=sys.stderr)
    return EXIT_OK if manifest.ok else EXIT_DEGRADED


if __name__ == "__main__":
    sys.exit(main())
