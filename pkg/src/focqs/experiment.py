"""Seeded batch experiments: traces, the finite-difference oracle and sweeps.

A sweep is a grid of algorithm cells run on every ``(n, seed)`` instance.
Each trial is an independent job; results are folded in ``(n, seed)`` order
so the summary does not depend on scheduling or the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from jsonschema import Draft202012Validator

from .controllers import (
    ControlSchedule,
    FeedbackRecord,
    FocqsParams,
    LayeredCircuit,
    falqon_run,
    focqs_run,
    focqs_windowed_run,
    iterative_focqs_run,
)
from .problems import ProblemInstance, approximation_ratio, exact_ground_energy, gen_ising, gen_mis
from .statevector import DEFAULT_SCHEME, EvolutionScheme, init_mixer_ground

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TRACE_COLUMNS = ("layer", "u", "phi", "phi_tilde", "energy", "cum_time")
ALGORITHMS = (
    "falqon",
    "falqon-bounded-clipped",
    "falqon-bounded-bang",
    "focqs",
    "focqs-windowed",
    "focqs-iter",
    "replay",
)
FD_DELTA = 1e-5


class ConfigError(ValueError):
    """A sweep or run configuration that cannot be executed."""


# --- traces ---------------------------------------------------------------------


@dataclass
class RunTrace:
    """Per-layer ``u, phi, phi_tilde, energy, cum_time`` plus a provenance header."""

    u: np.ndarray
    phi: np.ndarray
    phi_tilde: np.ndarray
    energy: np.ndarray
    cum_time: np.ndarray
    header: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.u)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# format_version: {FORMAT_VERSION}\n")
        buf.write(f"# config: {json.dumps(self.header, sort_keys=True)}\n")
        buf.write(",".join(TRACE_COLUMNS) + "\n")
        for k in range(len(self)):
            values = (self.u[k], self.phi[k], self.phi_tilde[k], self.energy[k], self.cum_time[k])
            buf.write(str(k) + "," + ",".join("%.17g" % v for v in values) + "\n")
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "RunTrace":
        header: dict[str, Any] = {}
        body = []
        for line in text.splitlines():
            if line.startswith("# config: "):
                header = json.loads(line[len("# config: ") :])
            elif line.startswith("# format_version: "):
                version = int(line.split(":", 1)[1])
                if version != FORMAT_VERSION:
                    raise ValueError(f"unsupported trace format_version {version}")
            elif line and not line.startswith("#"):
                body.append(line)
        rows = list(csv.reader(body))
        if not rows or tuple(rows[0]) != TRACE_COLUMNS:
            raise ValueError(f"trace header must be {','.join(TRACE_COLUMNS)}")
        data = np.array([[float(x) for x in row] for row in rows[1:]]).reshape(-1, len(TRACE_COLUMNS))
        return cls(*(data[:, c].copy() for c in range(1, len(TRACE_COLUMNS))), header=header)

    @classmethod
    def load(cls, path) -> "RunTrace":
        return cls.from_csv(Path(path).read_text())


def cumulative_times(u) -> np.ndarray:
    """Running ``sum_j (1 + u_j)``: one unit per cost gate plus the mixer angle."""
    return np.cumsum(1.0 + np.asarray(u, dtype=float))


def cumulative_time(schedule: ControlSchedule, k: int) -> float:
    if not 0 <= k < len(schedule):
        raise IndexError(f"layer {k} outside a {len(schedule)}-layer schedule")
    return float(cumulative_times(schedule.u[: k + 1])[-1])


def replay_schedule(
    inst: ProblemInstance,
    schedule: ControlSchedule,
    scheme: EvolutionScheme = DEFAULT_SCHEME,
    header: dict | None = None,
) -> RunTrace:
    """Evolve under a fixed schedule, measuring every layer without feedback.

    The probe reading at layer ``j`` uses ``u[j + 1]`` (zero after the last
    layer), matching what a run would have measured on this circuit.
    """
    if len(schedule) == 0:
        raise ValueError("cannot replay an empty schedule")
    circuit = LayeredCircuit(inst, schedule.dt, scheme, schedule.mode)
    p = len(schedule)
    energy, phi, phi_tilde = np.empty(p), np.empty(p), np.empty(p)
    state = init_mixer_ground(inst.n)
    for j in range(p):
        circuit.apply(state, schedule.u[j])
        energy[j] = circuit.energy(state)
        phi[j] = circuit.phi(state)
        phi_tilde[j] = circuit.phi_tilde(state, schedule.u[j + 1] if j + 1 < p else 0.0)
    meta = {"dt": schedule.dt, "mode": schedule.mode, "scheme": scheme.to_dict(), **(header or {})}
    return RunTrace(schedule.u.copy(), phi, phi_tilde, energy, cumulative_times(schedule.u), meta)


def final_energy(inst: ProblemInstance, u, dt: float, mode: str = "unbounded", scheme=DEFAULT_SCHEME) -> float:
    circuit = LayeredCircuit(inst, dt, scheme, mode)
    return circuit.energy(circuit.prepare(u))


def finite_difference_Phi(
    inst: ProblemInstance,
    schedule: ControlSchedule,
    layer: int,
    delta: float = FD_DELTA,
    scheme: EvolutionScheme = DEFAULT_SCHEME,
    final_layer: int | None = None,
) -> float:
    """Central difference of the energy after ``final_layer`` with respect to ``u[layer]``.

    Each side is a full re-simulation with only ``u[layer]`` shifted by
    ``delta``. The derivative already carries the ``dt`` of the layer
    exponent, so it is directly comparable with ``phi`` and ``Phi``.
    """
    final_layer = len(schedule) - 1 if final_layer is None else final_layer
    if not 0 <= layer <= final_layer < len(schedule):
        raise IndexError(f"need 0 <= layer <= final_layer < {len(schedule)}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    u = schedule.u[: final_layer + 1].copy()
    base = u[layer]
    u[layer] = base + delta
    up = final_energy(inst, u, schedule.dt, schedule.mode, scheme)
    u[layer] = base - delta
    down = final_energy(inst, u, schedule.dt, schedule.mode, scheme)
    return (up - down) / (2 * delta)


# --- algorithm dispatch ------------------------------------------------------------


def focqs_params(params: dict, mode: str = "unbounded") -> FocqsParams:
    window = params.get("window", None)
    if window in ("unbounded", None):
        window = None
    return FocqsParams(
        beta0=float(params.get("beta0", 10.0)),
        falloff=float(params.get("falloff", 2.0)),
        window=None if window is None else int(window),
        mode=params.get("mode", mode),
        ordering=params.get("ordering", "as-printed"),
    )


def run_algorithm(
    inst: ProblemInstance,
    algo: str,
    layers: int,
    dt: float,
    params: dict | None = None,
    scheme: EvolutionScheme = DEFAULT_SCHEME,
    u0: ControlSchedule | None = None,
) -> tuple[ControlSchedule, FeedbackRecord | None]:
    """Run one named algorithm. ``replay`` and ``focqs-iter`` need ``u0``."""
    params = dict(params or {})
    if algo == "falqon":
        return falqon_run(inst, layers, dt, scheme)
    if algo == "falqon-bounded-clipped":
        return falqon_run(inst, layers, dt, scheme, mode="bounded-clipped")
    if algo == "falqon-bounded-bang":
        return falqon_run(inst, layers, dt, scheme, mode="bounded-bang")
    if algo == "focqs":
        return focqs_run(inst, layers, dt, focqs_params(params), scheme)
    if algo == "focqs-windowed":
        return focqs_windowed_run(
            inst,
            layers,
            dt,
            focqs_params(params),
            inner_steps=int(params.get("inner_steps", 20)),
            grad_tolerance=float(params.get("grad_tolerance", 1e-4)),
            warmup_layers=int(params.get("warmup_layers", 5)),
            scheme=scheme,
        )
    if algo == "focqs-iter":
        if u0 is None:
            raise ConfigError("focqs-iter needs an input schedule")
        return iterative_focqs_run(inst, u0, dt, focqs_params(params, u0.mode), scheme, layers)
    if algo == "replay":
        if u0 is None:
            raise ConfigError("replay needs a schedule")
        return u0.copy(), None
    raise ConfigError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")


# --- sweep configuration -------------------------------------------------------------


SWEEP_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["kind", "n", "seeds", "cells"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "kind": {"enum": ["ising", "mis"]},
        "n": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "seeds": {
            "oneOf": [
                {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                {
                    "type": "object",
                    "required": ["count"],
                    "additionalProperties": False,
                    "properties": {
                        "start": {"type": "integer", "minimum": 0},
                        "count": {"type": "integer", "minimum": 1},
                    },
                },
            ]
        },
        "layers": {"type": "integer", "minimum": 1},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "scheme": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["first-order", "second-order", "dense"]},
                "substeps": {"type": "integer", "minimum": 1},
            },
        },
        "cells": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["algo"],
                "additionalProperties": False,
                "properties": {
                    "label": {"type": "string"},
                    "algo": {"type": "string"},
                    "params": {"type": "object"},
                    "u0_from": {"type": "string"},
                    "schedule": {"type": "string"},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class Cell:
    label: str
    algo: str
    params: dict
    u0_from: str | None = None
    schedule: str | None = None

    def to_dict(self) -> dict:
        out = {"label": self.label, "algo": self.algo, "params": self.params}
        if self.u0_from is not None:
            out["u0_from"] = self.u0_from
        if self.schedule is not None:
            out["schedule"] = self.schedule
        return out


@dataclass(frozen=True)
class SweepConfig:
    kind: str
    n: tuple[int, ...]
    seeds: tuple[int, ...]
    cells: tuple[Cell, ...]
    layers: int = 100
    dt: float = 0.1
    lam: float = 2.0
    scheme: EvolutionScheme = DEFAULT_SCHEME
    name: str = "sweep"

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "SweepConfig":
        errors = sorted(Draft202012Validator(SWEEP_SCHEMA).iter_errors(data), key=lambda e: list(e.path))
        if errors:
            e = errors[0]
            where = "/".join(str(p) for p in e.path) or "<root>"
            raise ConfigError(f"invalid sweep config at {where}: {e.message}")
        seeds = data["seeds"]
        if isinstance(seeds, dict):
            seeds = range(seeds.get("start", 0), seeds.get("start", 0) + seeds["count"])
        cells = []
        labels: set[str] = set()
        for k, raw in enumerate(data["cells"]):
            label = raw.get("label", raw["algo"])
            if raw["algo"] not in ALGORITHMS:
                raise ConfigError(f"cell {label!r}: unknown algorithm {raw['algo']!r}")
            if label in labels:
                raise ConfigError(f"duplicate cell label {label!r}")
            u0_from = raw.get("u0_from")
            if raw["algo"] == "focqs-iter" and u0_from not in labels:
                raise ConfigError(f"cell {label!r}: focqs-iter needs u0_from naming an earlier cell")
            schedule = raw.get("schedule")
            if raw["algo"] == "replay":
                if schedule is None:
                    raise ConfigError(f"cell {label!r}: replay needs a schedule path")
                if base_dir is not None and not Path(schedule).is_absolute():
                    schedule = str(base_dir / schedule)
            labels.add(label)
            cells.append(Cell(label, raw["algo"], dict(raw.get("params", {})), u0_from, schedule))
        scheme = data.get("scheme", {})
        return cls(
            kind=data["kind"],
            n=tuple(data["n"]),
            seeds=tuple(seeds),
            cells=tuple(cells),
            layers=int(data.get("layers", 100)),
            dt=float(data.get("dt", 0.1)),
            lam=float(data.get("lambda", 2.0)),
            scheme=EvolutionScheme(scheme.get("kind", "first-order"), scheme.get("substeps", 1)),
            name=str(data.get("name", "sweep")),
        )

    @classmethod
    def load(cls, path) -> "SweepConfig":
        path = Path(path)
        text = path.read_text()
        try:
            data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path} does not hold a mapping")
        return cls.from_dict(data, path.parent)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "n": list(self.n),
            "seeds": list(self.seeds),
            "layers": self.layers,
            "dt": self.dt,
            "lambda": self.lam,
            "scheme": self.scheme.to_dict(),
            "cells": [c.to_dict() for c in self.cells],
        }


def make_instance(kind: str, n: int, seed: int, lam: float = 2.0) -> ProblemInstance:
    if kind == "ising":
        return gen_ising(n, seed)
    if kind == "mis":
        return gen_mis(n, seed, lam)
    raise ConfigError(f"unknown problem kind {kind!r}")


# --- trials and aggregation -------------------------------------------------------------


def _trial_header(config: SweepConfig, cell: Cell, n: int, seed: int) -> dict:
    return {
        "instance": {"kind": config.kind, "n": n, "seed": seed, "lambda": config.lam if config.kind == "mis" else None},
        "algorithm": cell.algo,
        "label": cell.label,
        "params": cell.params,
        "layers": config.layers,
        "dt": config.dt,
    }


def run_trial(config: SweepConfig, n: int, seed: int, artifacts: str | None = None) -> dict:
    """All cells on one instance. Failures are captured per cell, never raised."""
    out: dict[str, Any] = {"n": n, "seed": seed, "results": {}, "failures": {}}
    try:
        inst = make_instance(config.kind, n, seed, config.lam)
        ground, _ = exact_ground_energy(inst)
    except Exception as exc:  # noqa: BLE001 - every cell fails with the instance
        for cell in config.cells:
            out["failures"][cell.label] = f"{type(exc).__name__}: {exc}"
        return out
    out["ground"] = ground
    schedules: dict[str, ControlSchedule] = {}
    for cell in config.cells:
        try:
            u0 = None
            if cell.u0_from is not None:
                if cell.u0_from not in schedules:
                    raise RuntimeError(f"input cell {cell.u0_from!r} failed")
                u0 = schedules[cell.u0_from]
            elif cell.schedule is not None:
                u0 = ControlSchedule.load(cell.schedule)
            schedule, _ = run_algorithm(inst, cell.algo, config.layers, config.dt, cell.params, config.scheme, u0)
            schedules[cell.label] = schedule
            trace = replay_schedule(inst, schedule, config.scheme, _trial_header(config, cell, n, seed))
            out["results"][cell.label] = {
                "ratio_final": approximation_ratio(float(trace.energy[-1]), ground),
                "ratio_best": approximation_ratio(float(trace.energy.min()), ground),
                "final_energy": float(trace.energy[-1]),
                "cum_time": float(trace.cum_time[-1]),
            }
            if artifacts is not None:
                stem = Path(artifacts) / f"{cell.label}_n{n}_s{seed}"
                trace.save(stem.with_suffix(".trace.csv"))
                schedule.save(stem.with_suffix(".schedule.json"))
        except Exception as exc:  # noqa: BLE001 - recorded and excluded
            out["failures"][cell.label] = f"{type(exc).__name__}: {exc}"
    return out


def _run_trial_job(args) -> dict:
    return run_trial(*args)


def _mean_sem(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    mean = math.fsum(values) / len(values)
    if len(values) < 2:
        return mean, None
    return mean, float(np.std(values, ddof=1) / math.sqrt(len(values)))


@dataclass
class SweepSummary:
    config: dict
    cells: dict[str, dict[str, dict]]
    failures: list[dict]

    @property
    def failed(self) -> bool:
        return bool(self.failures)

    def cell(self, label: str, n: int) -> dict:
        return self.cells[label][str(n)]

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "config": self.config, "cells": self.cells, "failures": self.failures}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())


def summarize(config: SweepConfig, trials: list[dict]) -> SweepSummary:
    trials = sorted(trials, key=lambda t: (t["n"], t["seed"]))
    cells: dict[str, dict[str, dict]] = {}
    failures = []
    for cell in config.cells:
        per_n = {}
        for n in config.n:
            rows = [(t["seed"], t["results"][cell.label]) for t in trials if t["n"] == n and cell.label in t["results"]]
            final = [r["ratio_final"] for _, r in rows]
            best = [r["ratio_best"] for _, r in rows]
            mean_final, sem_final = _mean_sem(final)
            mean_best, sem_best = _mean_sem(best)
            mean_time, _ = _mean_sem([r["cum_time"] for _, r in rows])
            failed = [
                {"seed": t["seed"], "error": t["failures"][cell.label]}
                for t in trials
                if t["n"] == n and cell.label in t["failures"]
            ]
            per_n[str(n)] = {
                "algorithm": cell.algo,
                "params": cell.params,
                "trials": len(rows),
                "seeds": [s for s, _ in rows],
                "mean_ratio_final": mean_final,
                "mean_ratio_best": mean_best,
                "sem_final": sem_final,
                "sem_best": sem_best,
                "mean_cum_time": mean_time,
                "failures": len(failed),
            }
            failures += [{"label": cell.label, "n": n, **f} for f in failed]
        cells[cell.label] = per_n
    return SweepSummary(config.to_dict(), cells, failures)


def run_batch(config: SweepConfig, threads: int = 1, artifacts: str | None = None) -> SweepSummary:
    """Run every cell on every ``(n, seed)`` and aggregate mean and SEM of the ratios.

    Ratios use the replayed final schedule: ``final`` is the last layer,
    ``best`` the lowest energy over all layers.
    """
    if artifacts is not None:
        Path(artifacts).mkdir(parents=True, exist_ok=True)
    jobs = [(config, n, seed, artifacts) for n in config.n for seed in config.seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            trials = list(pool.map(_run_trial_job, jobs))
    else:
        trials = []
        for job in jobs:
            trials.append(_run_trial_job(job))
            log.info("trial n=%d seed=%d done", job[1], job[2])
    for t in trials:
        for label, err in t["failures"].items():
            log.warning("trial n=%d seed=%d cell %s failed: %s", t["n"], t["seed"], label, err)
    return summarize(config, trials)
