"""Benchmark instances: all-to-all Ising spin glasses and weighted MIS.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence(seed)``.
Each instance seed is split with ``SeedSequence.spawn`` into three
independent substreams, used in this fixed order: couplings, edges, weights.
Draws therefore depend only on ``(kind, n, seed)`` and are stable across
platforms.

Solution bitstrings mark qubits sitting in the ``+1`` eigenstate of ``Z``
(the selected nodes of an MIS instance). Bit ``q`` of the integer is qubit
``q``; :func:`format_bitstring` renders the most-significant qubit first.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .pauli import PauliSum, PauliTerm, is_diagonal, transverse_field
from .statevector import diagonal

FORMAT_VERSION = 1
MAX_SOLVER_QUBITS = 24
MAX_CONNECTIVITY_RESAMPLES = 10_000
DEFAULT_PENALTY = 2.0


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProblemInstance:
    kind: str
    n: int
    cost: PauliSum
    mixer: PauliSum
    seed: int = 0
    params: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in ("ising", "mis"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.cost.n != self.n or self.mixer.n != self.n:
            raise ValueError("cost and mixer must act on the instance register")

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "n": self.n,
            "seed": self.seed,
            "params": self.params,
            "cost": self.cost.to_records(),
            "mixer": self.mixer.to_records(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemInstance":
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported instance format_version {version!r}")
        n = int(data["n"])
        return cls(
            kind=data["kind"],
            n=n,
            cost=PauliSum.from_records(data["cost"], n),
            mixer=PauliSum.from_records(data["mixer"], n),
            seed=int(data["seed"]),
            params=data.get("params", {}),
        )


def dumps_instance(inst: ProblemInstance) -> str:
    # float repr is the shortest string that round-trips bit-exactly
    return json.dumps(inst.to_dict(), indent=2) + "\n"


def save_instance(inst: ProblemInstance, path) -> None:
    Path(path).write_text(dumps_instance(inst))


def load_instance(path) -> ProblemInstance:
    return ProblemInstance.from_dict(json.loads(Path(path).read_text()))


def _streams(seed: int, count: int = 3) -> list[np.random.Generator]:
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(count)]


def ising_instance(n: int, couplings: dict[tuple[int, int], float], seed: int = 0) -> ProblemInstance:
    """Ising cost ``sum_{i<j} J_ij Z_i Z_j`` from explicit couplings."""
    terms = [PauliTerm(J, {i: "Z", j: "Z"}) for (i, j), J in sorted(couplings.items())]
    params = {"couplings": [[i, j, float(J)] for (i, j), J in sorted(couplings.items())]}
    return ProblemInstance("ising", n, PauliSum(terms, n), transverse_field(n), seed, params)


def gen_ising(n: int, seed: int) -> ProblemInstance:
    """All-to-all spin glass with couplings uniform on ``[-1, 1]``."""
    if not 2 <= n <= MAX_SOLVER_QUBITS:
        raise ValueError(f"Ising instances need 2 <= n <= {MAX_SOLVER_QUBITS}, got {n}")
    rng = _streams(seed)[0]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    values = rng.uniform(-1.0, 1.0, size=len(pairs))
    return ising_instance(n, dict(zip(pairs, values.tolist())), seed)


def mis_cost(n: int, edges, weights, lam: float) -> PauliSum:
    """Reward ``-sum r_i (Z_i + 1)/2`` plus ``lam`` times the edge penalty ``(Z_i + 1)(Z_j + 1)/4``."""
    terms = []
    for i, r in enumerate(weights):
        terms.append(PauliTerm(-r / 2, {i: "Z"}))
        terms.append(PauliTerm(-r / 2, ()))
    for i, j in edges:
        q = lam / 4
        terms.append(PauliTerm(q, {i: "Z", j: "Z"}))
        terms.append(PauliTerm(q, {i: "Z"}))
        terms.append(PauliTerm(q, {j: "Z"}))
        terms.append(PauliTerm(q, ()))
    return PauliSum(terms, n)


def mis_instance(n: int, edges, weights, lam: float = DEFAULT_PENALTY, seed: int = 0, **extra) -> ProblemInstance:
    if len(weights) != n:
        raise ValueError(f"expected {n} node weights, got {len(weights)}")
    edges = sorted((min(i, j), max(i, j)) for i, j in edges)
    params = {
        "edges": [list(e) for e in edges],
        "weights": [float(r) for r in weights],
        "lambda": float(lam),
        **extra,
    }
    return ProblemInstance("mis", n, mis_cost(n, edges, weights, lam), transverse_field(n), seed, params)


def is_connected(n: int, edges) -> bool:
    if n <= 1:
        return True
    if not edges:
        return False
    rows, cols = zip(*edges)
    graph = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(n, n))
    count, _ = connected_components(graph, directed=False)
    return count == 1


def edge_probability(n: int) -> float:
    return 1.2 * math.log(n) / n


def gen_mis(n: int, seed: int, lam: float = DEFAULT_PENALTY) -> ProblemInstance:
    """Weighted MIS on a connected Erdos-Renyi graph with ``p = 1.2 ln(n) / n``.

    Disconnected draws are discarded and the whole edge set redrawn from the
    same edge stream.
    """
    if not 2 <= n <= MAX_SOLVER_QUBITS:
        raise ValueError(f"MIS instances need 2 <= n <= {MAX_SOLVER_QUBITS}, got {n}")
    if not lam > 0:
        raise ValueError(f"penalty weight must be positive, got {lam}")
    _, edge_rng, weight_rng = _streams(seed)
    p = edge_probability(n)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for attempt in range(MAX_CONNECTIVITY_RESAMPLES):
        keep = edge_rng.random(len(pairs)) < p
        edges = [e for e, k in zip(pairs, keep) if k]
        if is_connected(n, edges):
            break
    else:
        raise GenerationError(
            f"no connected graph after {MAX_CONNECTIVITY_RESAMPLES} draws (n={n}, seed={seed})"
        )
    weights = weight_rng.uniform(0.0, 2.0, size=n)
    return mis_instance(n, edges, weights.tolist(), lam, seed, edge_probability=p, resamples=attempt)


def independent(bitstring: int, edges) -> bool:
    return not any((bitstring >> i) & 1 and (bitstring >> j) & 1 for i, j in edges)


def exact_ground_energy(inst: ProblemInstance) -> tuple[float, int]:
    """Brute-force minimum of the diagonal cost.

    Returns the energy and the solution bitstring (see module docstring); ties
    go to the lexicographically smallest bitstring.
    """
    if not is_diagonal(inst.cost):
        raise ValueError("exact solver requires a diagonal cost operator")
    if inst.n > MAX_SOLVER_QUBITS:
        raise ValueError(f"exact solver limited to {MAX_SOLVER_QUBITS} qubits")
    d = diagonal(inst.cost, inst.n)
    energy = d.min()
    full = (1 << inst.n) - 1
    bitstrings = full ^ np.flatnonzero(d == energy)
    return float(energy), int(bitstrings.min())


def basis_index(bitstring: int, n: int) -> int:
    """Computational-basis index of a solution bitstring."""
    return ((1 << n) - 1) ^ bitstring


def format_bitstring(bitstring: int, n: int) -> str:
    return format(bitstring, f"0{n}b")


def approximation_ratio(achieved: float, ground: float) -> float:
    if ground == 0:
        raise ZeroDivisionError("approximation ratio undefined for zero ground energy")
    return achieved / ground
