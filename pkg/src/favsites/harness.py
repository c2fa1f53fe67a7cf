"""Deterministic trial execution, aggregation and persistence."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from importlib import resources
from typing import Any, Callable, Dict, List, Optional

import jsonschema
import numpy as np

from . import __version__
from ._rng import trial_seed

OUTPUT_ENV = "FAVSITES_OUTPUT_DIR"
SIG_DIGITS = 12


def fmt(x) -> Any:
    """Numbers rounded to 12 significant digits; other values unchanged."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return None
        return float(f"{x:.{SIG_DIGITS}g}")
    if isinstance(x, dict):
        return {str(k): fmt(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [fmt(v) for v in x]
    return x


def dumps(record: dict) -> str:
    """Canonical JSON line: sorted keys, 12 significant digits, no spaces."""
    return json.dumps(fmt(record), sort_keys=True, separators=(",", ":"))


def format_number(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.{SIG_DIGITS}g}"


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "favsites_out"))


def load_schema(name: str) -> dict:
    """A shipped JSON schema by stem, e.g. ``"trial_record"``."""
    text = resources.files("favsites").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate_record(record: dict, schema: str) -> None:
    """Raise jsonschema.ValidationError unless the canonical form of ``record`` matches."""
    jsonschema.validate(json.loads(dumps(record)), load_schema(schema))


def write_jsonl(records, path: Path, schema: Optional[str] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for r in records:
            if schema:
                validate_record(r, schema)
            fh.write(dumps(r) + "\n")


def csv_text(columns: List[str], rows: List[dict]) -> str:
    """CSV with a header line naming ``columns``; numbers at 12 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_number(r.get(c)) if isinstance(r.get(c), (int, float, np.integer, np.floating))
                    and not isinstance(r.get(c), bool) else ("" if r.get(c) is None else r.get(c))
                    for c in columns])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# operations available to experiments


def _op_exit_time(params, seed):
    from .walk import ExitDisk, simulate_walk
    w = simulate_walk(int(params.get("dim", 2)), 0, seed, ExitDisk(float(params["radius"]), retain_path=False))
    return {"value": w.length}


def _op_max_local_time(params, seed):
    from .walk import local_time_profile, simulate_walk
    w = simulate_walk(int(params.get("dim", 2)), int(params["steps"]), seed)
    return {"value": local_time_profile(w).max_value}


def _op_argmax_count(params, seed):
    from .walk import local_time_profile, simulate_walk
    w = simulate_walk(int(params.get("dim", 2)), int(params["steps"]), seed)
    return {"value": len(local_time_profile(w).argmax_set)}


def _op_escape(params, seed):
    """1 if a d-dimensional walk leaves D(0, radius) before returning to its start."""
    from .walk import ExitDisk, simulate_walk
    d = int(params.get("dim", 3))
    w = simulate_walk(d, 0, seed, ExitDisk(float(params.get("radius", 20))))
    p = w.require_path()
    returned = bool(np.any(np.all(p[1:] == 0, axis=1)))
    return {"value": int(not returned)}


def _op_second_favorite(params, seed):
    from .walk import LocalTimeLevel, favorite_event_scan, simulate_walk
    m = int(params["m"])
    w = simulate_walk(int(params.get("dim", 2)), 0, seed, LocalTimeLevel(m + 1))
    log = favorite_event_scan(w, m)
    return {"value": int(bool(log.flags.get((m, 2), False)))}


def _op_mjp(params, seed):
    from .excursions import simulate_mjp_upcrossings
    n = int(params["n"])
    ch = simulate_mjp_upcrossings(n, seed)
    level = int(params.get("level", n))
    return {"value": int(ch.upcrossings[level]), "counts": ch.upcrossings.tolist()}


def _op_urn_max(params, seed):
    from .urns import UrnConfig, simulate_urns
    out = simulate_urns(UrnConfig(tuple(params["probabilities"]), int(params["balls"]), seed))
    return {"value": out.X}


OPERATIONS: Dict[str, Callable[[dict, int], dict]] = {
    "walk.exit_time": _op_exit_time,
    "walk.max_local_time": _op_max_local_time,
    "walk.argmax_count": _op_argmax_count,
    "walk.escape": _op_escape,
    "walk.second_favorite": _op_second_favorite,
    "mjp.upcrossings": _op_mjp,
    "urn.max_label": _op_urn_max,
}


# ---------------------------------------------------------------------------
# specs and reports


@dataclass
class ExperimentSpec:
    name: str
    target: str
    params: Dict[str, Any] = field(default_factory=dict)
    trials: int = 1
    master_seed: int = 0
    output: Optional[str] = None
    overrides: Dict[str, Any] = field(default_factory=dict)
    workers: int = 1

    def validate(self) -> None:
        if self.target not in OPERATIONS:
            raise ValueError(f"unknown operation {self.target!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("workers")  # execution detail, not part of the experiment
        d.pop("output")
        return d

    def spec_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.canonical(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        return cls(**d)


@dataclass
class TrialReport:
    records: List[dict]
    aggregate: Dict[str, Any]
    provenance: Dict[str, Any]

    def jsonl(self) -> str:
        return "".join(dumps(r) + "\n" for r in self.records)


def aggregate(records: List[dict]) -> Dict[str, Any]:
    """Mean, sample variance and normal 95% CI of ``value`` over successful records."""
    vals = np.array([r["value"] for r in records if "error" not in r], dtype=float)
    n = len(vals)
    failed = len(records) - n
    if n == 0:
        return {"n": 0, "failed": failed}
    mean = float(vals.mean())
    var = float(vals.var(ddof=1)) if n > 1 else 0.0
    half = 1.959963984540054 * math.sqrt(var / n) if n > 1 else 0.0
    return {"n": n, "failed": failed, "mean": mean, "variance": var,
            "ci95": [mean - half, mean + half], "ci_half_width": half, "estimator": "normal"}


def _run_chunk(target: str, params: dict, master: int, indices: List[int]) -> List[dict]:
    op = OPERATIONS[target]
    out = []
    for i in indices:
        rec = {"trial": i}
        try:
            rec.update(op(params, trial_seed(master, i)))
        except Exception as exc:  # a failed trial is recorded, not fatal
            rec["error"] = f"{type(exc).__name__}: {exc}"
        out.append(rec)
    return out


def run_trials(spec: ExperimentSpec) -> TrialReport:
    """Run every trial of ``spec`` and aggregate.

    Trial i uses seed trial_seed(master_seed, i), so results do not depend
    on the number of workers; records are merged in trial order.

    Raises
    ------
    ValueError
        On an invalid spec.
    RuntimeError
        If every trial failed.
    """
    spec.validate()
    params = dict(spec.params)
    params.update(spec.overrides)
    t0 = time.perf_counter()
    idx = list(range(spec.trials))
    if spec.workers > 1:
        chunks = [idx[k::spec.workers] for k in range(spec.workers)]
        with ProcessPoolExecutor(spec.workers) as ex:
            parts = list(ex.map(_run_chunk, [spec.target] * len(chunks), [params] * len(chunks),
                                [spec.master_seed] * len(chunks), chunks))
        records = sorted((r for p in parts for r in p), key=lambda r: r["trial"])
    else:
        records = _run_chunk(spec.target, params, spec.master_seed, idx)
    agg = aggregate(records)
    if agg["n"] == 0:
        raise RuntimeError("all trials failed")
    prov = {"spec_hash": spec.spec_hash(), "code_version": __version__,
            "wall_time": time.perf_counter() - t0, "spec": spec.canonical()}
    report = TrialReport(records, agg, prov)
    if spec.output:
        write_report(report, Path(spec.output))
    return report


AGGREGATE_COLUMNS = ["name", "target", "n", "failed", "mean", "variance", "ci_low", "ci_high",
                     "estimator", "spec_hash", "code_version"]


def aggregate_row(report: TrialReport) -> dict:
    a = report.aggregate
    spec = report.provenance["spec"]
    ci = a.get("ci95", [None, None])
    return {"name": spec["name"], "target": spec["target"], "n": a["n"], "failed": a["failed"],
            "mean": a.get("mean"), "variance": a.get("variance"), "ci_low": ci[0], "ci_high": ci[1],
            "estimator": a.get("estimator"), "spec_hash": report.provenance["spec_hash"],
            "code_version": report.provenance["code_version"]}


def write_report(report: TrialReport, path: Path) -> None:
    """Per-trial JSONL at ``path`` and the aggregate table next to it (``.aggregate.csv``).

    Wall time is left out of both files so that replays are byte-identical.
    """
    path = Path(path)
    write_jsonl(report.records, path, "trial_record")
    path.with_suffix(".aggregate.csv").write_text(csv_text(AGGREGATE_COLUMNS, [aggregate_row(report)]))


def read_jsonl(path: Path) -> List[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def binomial_ci_half_width(p: float, n: int) -> float:
    return 1.959963984540054 * math.sqrt(p * (1 - p) / n)
