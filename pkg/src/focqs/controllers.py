"""Feedback control laws: FALQON, bounded FALQON and the FOCQS family.

Conventions used throughout:

* Layer ``k`` of the circuit is ``exp(-i dt C) exp(-i dt u_k B)`` (mixer
  first) and ``psi_i`` is the state after layers ``0..i``.
* ``phi_i = dt <psi_i| i[B, C] |psi_i>``. This is the derivative of the
  energy with respect to the control of the *next* layer, evaluated at zero
  control, so ``u_{i+1} = max(0, -phi_i)`` never increases the energy to
  first order.
* ``phi_tilde_i`` is the same observable on the probe state
  ``exp(-i dt u_{i+1} B) psi_i``. With the default split-step layer it is
  exactly the derivative of ``<C>`` after layer ``i+1`` with respect to
  ``u_{i+1}``.
* ``estimate_Phi`` extrapolates ``(phi_j, phi_tilde_j)`` to the current
  layer; at offset one it equals ``phi_tilde_j``, the exact gradient with
  respect to the control the probe rotates.
* Retroactive updates follow ``u_j <- u_j + Phi_j / (beta0 (i-j)^f)`` on
  layer ``j``. By default (``ordering="as-printed"``) the probe reading fed to
  the estimate carries the commutator order opposite to ``phi``, which is how
  the published falling-off pseudocode is written. ``ordering="consistent"``
  feeds ``phi_tilde`` unchanged. ``u_0`` multiplies the mixer acting on its
  own eigenstate and stays pinned at zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .pauli import PauliSum, commutator, is_diagonal, transverse_field
from .problems import ProblemInstance
from .statevector import (
    DEFAULT_SCHEME,
    EvolutionScheme,
    StateVector,
    apply_layer,
    apply_transverse_rotation,
    diagonal_expectation,
    evolve,
    expectation,
    init_mixer_ground,
)

FORMAT_VERSION = 1
DEFAULT_PROBE_SCHEME = EvolutionScheme("second-order", 8)
FALQON_MODES = ("unbounded", "bounded-clipped", "bounded-bang")
ORDERINGS = ("as-printed", "consistent")


@dataclass
class ControlSchedule:
    """Per-layer controls ``u`` (``u[0]`` first) at time step ``dt``."""

    u: np.ndarray
    dt: float
    mode: str = "unbounded"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.array(self.u, dtype=float)
        if self.u.ndim != 1:
            raise ValueError("control vector must be one-dimensional")
        if self.mode not in ("unbounded", "bounded"):
            raise ValueError(f"unknown control mode {self.mode!r}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        lo, hi = self.bounds
        if self.u.size and not (np.all(self.u >= lo) and np.all(self.u <= hi)):
            raise ValueError(f"controls outside [{lo}, {hi}] for mode {self.mode!r}")

    def __len__(self) -> int:
        return len(self.u)

    def copy(self) -> "ControlSchedule":
        return ControlSchedule(self.u.copy(), self.dt, self.mode, dict(self.provenance))

    @property
    def bounds(self) -> tuple[float, float]:
        return (0.0, 1.0) if self.mode == "bounded" else (0.0, math.inf)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "dt": self.dt,
            "mode": self.mode,
            "u": self.u.tolist(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControlSchedule":
        if data.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported schedule format_version {data.get('format_version')!r}")
        return cls(data["u"], float(data["dt"]), data.get("mode", "unbounded"), data.get("provenance", {}))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "ControlSchedule":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class FeedbackRecord:
    """Measurements taken while building the circuit, one entry per layer."""

    phi: list[float] = field(default_factory=list)
    phi_tilde: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.phi)

    def append(self, phi: float, phi_tilde: float, energy: float) -> None:
        self.phi.append(phi)
        self.phi_tilde.append(phi_tilde)
        self.energy.append(energy)


@dataclass(frozen=True)
class FocqsParams:
    """Step size ``beta0``, fall-off exponent and update window (``None`` = unbounded).

    ``ordering`` selects how the probe reading enters the retroactive
    update; see the module docstring.
    """

    beta0: float = 10.0
    falloff: float = 2.0
    window: int | None = None
    mode: str = "unbounded"
    ordering: str = "as-printed"

    def __post_init__(self):
        if not self.beta0 > 0:
            raise ValueError(f"beta0 must be positive, got {self.beta0}")
        if not self.falloff >= 0:
            raise ValueError(f"falloff must be non-negative, got {self.falloff}")
        if self.window is not None and self.window < 0:
            raise ValueError(f"window must be non-negative, got {self.window}")
        if self.mode not in ("unbounded", "bounded"):
            raise ValueError(f"unknown control mode {self.mode!r}")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"unknown ordering {self.ordering!r}; expected one of {ORDERINGS}")

    @property
    def probe_sign(self) -> float:
        return -1.0 if self.ordering == "as-printed" else 1.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["window"] = "unbounded" if self.window is None else self.window
        return out


# --- feedback observables ---------------------------------------------------


@lru_cache(maxsize=32)
def feedback_observable(B: PauliSum, C: PauliSum, mode: str = "unbounded") -> PauliSum:
    """``i[B, C]`` (unbounded) or ``i[B - C, C]`` (bounded); Hermitian."""
    generator = B if mode == "unbounded" else B - C
    return 1j * commutator(generator, C)


def measure_phi(state: StateVector, B: PauliSum, C: PauliSum, dt: float, mode: str = "unbounded") -> float:
    return dt * expectation(state, feedback_observable(B, C, mode))


def measure_phi_tilde(
    state: StateVector,
    B: PauliSum,
    C: PauliSum,
    u_next: float,
    dt: float,
    mode: str = "unbounded",
    probe_scheme: EvolutionScheme = DEFAULT_PROBE_SCHEME,
) -> float:
    """Feedback observable on the state pushed forward by the next control.

    The unbounded probe applies ``exp(-i dt u_next B)`` exactly. The bounded
    probe is generated by ``B - C`` and is Trotterized with ``probe_scheme``.
    """
    probe = state.copy()
    if u_next != 0:
        if mode == "unbounded":
            apply_transverse_rotation(probe, u_next * dt)
        else:
            evolve(probe, u_next * dt, -u_next * dt, C, probe_scheme)
    return dt * expectation(probe, feedback_observable(B, C, "unbounded"))


# --- control laws -------------------------------------------------------------


def falqon_update(phi: float) -> float:
    return max(0.0, -phi)


def bounded_falqon_update(phi: float, law: str = "clipped") -> float:
    if law == "clipped":
        if phi > 0:
            return 0.0
        return min(1.0, -phi)
    if law == "bang-bang":
        return 0.0 if phi > 0 else 1.0
    raise ValueError(f"unknown bounded law {law!r}")


def _law_for(mode: str) -> Callable[[float], float]:
    if mode == "unbounded":
        return falqon_update
    if mode in ("bounded", "bounded-clipped"):
        return lambda phi: bounded_falqon_update(phi, "clipped")
    if mode == "bounded-bang":
        return lambda phi: bounded_falqon_update(phi, "bang-bang")
    raise ValueError(f"unknown FALQON mode {mode!r}; expected one of {FALQON_MODES}")


def estimate_Phi(phi_j: float, phi_tilde_j: float, i: int, j: int) -> float:
    """Linear extrapolation of the gradient to the current layer ``i``."""
    if j > i:
        raise ValueError(f"target layer {j} lies after current layer {i}")
    if i == j:
        return phi_j
    return phi_j + (i - j) * (phi_tilde_j - phi_j)


def _clamp(value: float, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    return min(max(value, lo), hi)


def focqs_falloff_update(
    schedule: ControlSchedule, record: FeedbackRecord, i: int, params: FocqsParams
) -> ControlSchedule:
    """Retroactive step ``u_j += Phi_j / (beta0 (i-j)^f)`` for ``0 < j < i`` inside the window.

    Uses the stored measurements as-is; the result is clamped to the
    schedule's control bounds. ``u_0`` is pinned at zero. Mutates and
    returns ``schedule``.
    """
    if len(record) < i or len(schedule) <= i:
        raise ValueError(f"need measurements for layers 0..{i - 1} and controls up to u_{i}")
    bounds = schedule.bounds
    u = schedule.u
    start = 1 if params.window is None else max(1, i - params.window)
    for j in range(start, i):
        offset = i - j
        Phi = estimate_Phi(record.phi[j], params.probe_sign * record.phi_tilde[j], i, j)
        u[j] = _clamp(u[j] + Phi / (params.beta0 * offset**params.falloff), bounds)
    return schedule


# --- circuit engine -------------------------------------------------------------


class LayeredCircuit:
    """Prepares and measures the layered ansatz for one instance."""

    def __init__(
        self,
        inst: ProblemInstance,
        dt: float,
        scheme: EvolutionScheme = DEFAULT_SCHEME,
        mode: str = "unbounded",
        probe_scheme: EvolutionScheme = DEFAULT_PROBE_SCHEME,
    ):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if mode not in ("unbounded", "bounded"):
            raise ValueError(f"unknown control mode {mode!r}")
        if inst.mixer != transverse_field(inst.n):
            raise ValueError("the simulator only supports the transverse-field mixer -sum_i X_i")
        self.inst = inst
        self.B = inst.mixer
        self.C = inst.cost
        self.dt = dt
        self.scheme = scheme
        self.mode = mode
        self.probe_scheme = probe_scheme
        self._diagonal = is_diagonal(self.C)
        # warm the observable caches outside the layer loop
        feedback_observable(self.B, self.C, mode)
        feedback_observable(self.B, self.C, "unbounded")

    def apply(self, state: StateVector, u: float) -> StateVector:
        weight = 1.0 if self.mode == "unbounded" else 1.0 - u
        return apply_layer(state, u, self.dt, self.C, self.scheme, cost_weight=weight)

    def prepare(self, controls: Sequence[float]) -> StateVector:
        state = init_mixer_ground(self.inst.n)
        for u in controls:
            self.apply(state, u)
        return state

    def energy(self, state: StateVector) -> float:
        return diagonal_expectation(state, self.C) if self._diagonal else expectation(state, self.C)

    def phi(self, state: StateVector) -> float:
        return measure_phi(state, self.B, self.C, self.dt, self.mode)

    def phi_tilde(self, state: StateVector, u_next: float) -> float:
        return measure_phi_tilde(state, self.B, self.C, u_next, self.dt, self.mode, self.probe_scheme)

    def history(self, controls: Sequence[float], layers: Sequence[int]) -> dict[int, tuple[float, float]]:
        """Re-measure ``(phi_j, phi_tilde_j)`` for the requested layers on the given circuit.

        The probe for layer ``j`` uses ``controls[j + 1]`` (zero past the end).
        """
        wanted = set(layers)
        out = {}
        state = init_mixer_ground(self.inst.n)
        last = max(wanted) if wanted else -1
        for j in range(last + 1):
            self.apply(state, controls[j])
            if j in wanted:
                u_next = controls[j + 1] if j + 1 < len(controls) else 0.0
                out[j] = (self.phi(state), self.phi_tilde(state, u_next))
        return out


def _check_layers(layers: int) -> None:
    if int(layers) != layers or layers < 1:
        raise ValueError(f"layers must be a positive integer, got {layers}")


def falqon_run(
    inst: ProblemInstance,
    layers: int,
    dt: float,
    scheme: EvolutionScheme = DEFAULT_SCHEME,
    mode: str = "unbounded",
) -> tuple[ControlSchedule, FeedbackRecord]:
    """Plain FALQON: each layer's control comes from the previous measurement."""
    _check_layers(layers)
    law = _law_for(mode)
    circuit = LayeredCircuit(inst, dt, scheme, "unbounded" if mode == "unbounded" else "bounded")
    u = np.zeros(layers)
    record = FeedbackRecord()
    state = init_mixer_ground(inst.n)
    for i in range(layers):
        # incremental evolution equals re-preparation: earlier controls never change
        circuit.apply(state, u[i])
        phi = circuit.phi(state)
        u_next = law(phi)
        record.append(phi, circuit.phi_tilde(state, u_next), circuit.energy(state))
        if i + 1 < layers:
            u[i + 1] = u_next
    schedule = ControlSchedule(u, dt, circuit.mode, {"algorithm": f"falqon-{mode}" if mode != "unbounded" else "falqon"})
    return schedule, record


def focqs_run(
    inst: ProblemInstance,
    layers: int,
    dt: float,
    params: FocqsParams = FocqsParams(),
    scheme: EvolutionScheme = DEFAULT_SCHEME,
) -> tuple[ControlSchedule, FeedbackRecord]:
    """Falling-off FOCQS.

    Every layer re-prepares the full circuit with the current controls,
    sets the next control by the FALQON law, measures the probe, then nudges
    all earlier controls with the stored (never re-measured) feedback.
    """
    _check_layers(layers)
    law = _law_for(params.mode)
    circuit = LayeredCircuit(inst, dt, scheme, params.mode)
    schedule = ControlSchedule(np.zeros(layers), dt, params.mode, {"algorithm": "focqs", "params": params.to_dict()})
    record = FeedbackRecord()
    for i in range(layers):
        state = circuit.prepare(schedule.u[: i + 1])
        phi = circuit.phi(state)
        u_next = law(phi)
        record.append(phi, circuit.phi_tilde(state, u_next), circuit.energy(state))
        if i + 1 < layers:
            schedule.u[i + 1] = u_next
        focqs_falloff_update(schedule, record, i, params)
    return schedule, record


def focqs_windowed_run(
    inst: ProblemInstance,
    layers: int,
    dt: float,
    params: FocqsParams,
    inner_steps: int = 20,
    grad_tolerance: float = 1e-4,
    warmup_layers: int = 5,
    scheme: EvolutionScheme = DEFAULT_SCHEME,
) -> tuple[ControlSchedule, FeedbackRecord]:
    """Windowed FOCQS: repeated re-measured gradient steps inside a fixed window.

    After each new layer past ``warmup_layers`` the feedback of the last
    ``window`` layers is re-measured on the updated circuit and one step is
    taken, until the largest gradient estimate drops below
    ``grad_tolerance`` or ``inner_steps`` steps have been made. The record
    keeps the most recent measurement of every layer.
    """
    _check_layers(layers)
    if params.window is None:
        raise ValueError("windowed FOCQS needs a finite window")
    if inner_steps < 1:
        raise ValueError(f"inner_steps must be at least 1, got {inner_steps}")
    law = _law_for(params.mode)
    circuit = LayeredCircuit(inst, dt, scheme, params.mode)
    provenance = {
        "algorithm": "focqs-windowed",
        "params": params.to_dict(),
        "inner_steps": inner_steps,
        "grad_tolerance": grad_tolerance,
        "warmup_layers": warmup_layers,
    }
    schedule = ControlSchedule(np.zeros(layers), dt, params.mode, provenance)
    bounds = schedule.bounds
    u = schedule.u
    record = FeedbackRecord()
    for i in range(layers):
        state = circuit.prepare(u[: i + 1])
        phi = circuit.phi(state)
        u_next = law(phi)
        record.append(phi, circuit.phi_tilde(state, u_next), circuit.energy(state))
        if i + 1 < layers:
            u[i + 1] = u_next
        if i < max(warmup_layers, 1):
            continue
        window = range(max(1, i - params.window), i)
        for _ in range(inner_steps):
            fresh = circuit.history(u[: i + 1], window)
            Phi = {j: estimate_Phi(p, params.probe_sign * pt, i, j) for j, (p, pt) in fresh.items()}
            for j, (p, pt) in fresh.items():
                record.phi[j], record.phi_tilde[j] = p, pt
            if not Phi or max(abs(v) for v in Phi.values()) < grad_tolerance:
                break
            for j, value in Phi.items():
                u[j] = _clamp(u[j] + value / (params.beta0 * (i - j) ** params.falloff), bounds)
    return schedule, record


def iterative_focqs_run(
    inst: ProblemInstance,
    u0: ControlSchedule,
    dt: float | None = None,
    params: FocqsParams = FocqsParams(),
    scheme: EvolutionScheme = DEFAULT_SCHEME,
    layers: int | None = None,
) -> tuple[ControlSchedule, FeedbackRecord]:
    """Iterative FOCQS: refine a given schedule instead of choosing controls by feedback.

    Layer ``i`` starts from ``u0[i]`` and the probe uses ``u0[i + 1]`` (zero
    past the end); retroactive updates follow the falling-off rule. The
    output can be fed back in as the next ``u0``.
    """
    dt = u0.dt if dt is None else dt
    layers = len(u0) if layers is None else layers
    _check_layers(layers)
    if len(u0) < layers:
        raise ValueError(f"u0 has {len(u0)} controls but {layers} layers were requested")
    base = u0.u
    circuit = LayeredCircuit(inst, dt, scheme, params.mode)
    provenance = {"algorithm": "focqs-iter", "params": params.to_dict(), "u0": u0.provenance}
    schedule = ControlSchedule(np.zeros(layers), dt, params.mode, provenance)
    record = FeedbackRecord()
    for i in range(layers):
        schedule.u[i] = base[i]
        state = circuit.prepare(schedule.u[: i + 1])
        phi = circuit.phi(state)
        u_next = base[i + 1] if i + 1 < len(base) else 0.0
        record.append(phi, circuit.phi_tilde(state, u_next), circuit.energy(state))
        focqs_falloff_update(schedule, record, i, params)
    return schedule, record
