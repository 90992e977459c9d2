"""Dense statevector evolution for the layered control circuit.

One circuit layer approximates ``exp(-i dt (u B + w C))`` where ``B`` is the
transverse-field mixer ``-sum_i X_i`` and ``C`` a cost operator (``w = 1`` for
the unbounded ansatz, ``w = 1 - u`` for the bounded one). Both factors of the
split are applied exactly:

* ``exp(-i theta C)`` for diagonal ``C`` is a phase on every amplitude;
* ``exp(-i theta B) = prod_q (cos(theta) I + i sin(theta) X_q)``.

States are mutated in place; every ``apply_*`` also returns the state for
chaining. Global phase is never normalized away, so compare states with
:func:`fidelity`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .pauli import PauliSum, is_diagonal, to_dense, transverse_field

MAX_QUBITS = 24
MAX_DENSE_EXP_QUBITS = 10
HERMITIAN_ATOL = 1e-9

SCHEME_KINDS = ("first-order", "second-order", "dense")


class NonHermitianError(ValueError):
    """Raised when an expectation value carries a non-negligible imaginary part."""


@dataclass(frozen=True)
class EvolutionScheme:
    """How a layer exponential is realized.

    ``first-order`` applies ``[phase(dt/m) rotation(u dt/m)]^m`` (rotation
    first), ``second-order`` the symmetric ``[phase(dt/2m) rotation(u dt/m)
    phase(dt/2m)]^m``, and ``dense`` the exact matrix exponential.
    """

    kind: str = "first-order"
    substeps: int = 1

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown evolution scheme {self.kind!r}; expected one of {SCHEME_KINDS}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be a positive integer, got {self.substeps}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "substeps": self.substeps}


DEFAULT_SCHEME = EvolutionScheme()


class StateVector:
    """``2**n`` complex amplitudes; qubit 0 is the least-significant index bit."""

    __slots__ = ("amplitudes", "n")

    def __init__(self, amplitudes, n: int | None = None):
        amplitudes = np.ascontiguousarray(amplitudes, dtype=complex)
        if n is None:
            n = int(round(np.log2(amplitudes.size)))
        if amplitudes.shape != (2**n,):
            raise ValueError(f"expected {2**n} amplitudes for {n} qubits, got shape {amplitudes.shape}")
        self.amplitudes = amplitudes
        self.n = n

    @classmethod
    def basis(cls, n: int, index: int) -> "StateVector":
        amps = np.zeros(2**n, dtype=complex)
        amps[index] = 1.0
        return cls(amps, n)

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.n)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __repr__(self) -> str:
        return f"StateVector(n={self.n})"


def init_mixer_ground(n: int) -> StateVector:
    """Uniform superposition, the ground state of ``-sum_i X_i``."""
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"register size must be in [1, {MAX_QUBITS}], got {n}")
    return StateVector(np.full(2**n, 2.0 ** (-n / 2), dtype=complex), n)


def fidelity(a: StateVector, b: StateVector) -> float:
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


@lru_cache(maxsize=64)
def _bit_counts(n: int) -> np.ndarray:
    return np.arange(2**n, dtype=np.uint64)


def _parity_signs(n: int, z_mask: int) -> np.ndarray:
    idx = _bit_counts(n)
    parity = np.bitwise_count(idx & np.uint64(z_mask)) & 1
    return 1.0 - 2.0 * parity


@lru_cache(maxsize=64)
def diagonal(C: PauliSum, n: int) -> np.ndarray:
    """Diagonal entries of a Z-only operator, as a read-only real array."""
    if not is_diagonal(C):
        raise ValueError("operator is not diagonal in the computational basis")
    out = np.zeros(2**n)
    for term in C.terms:
        _, z_mask = term.masks()
        if z_mask == 0:
            out += term.coefficient.real
        else:
            out += term.coefficient.real * _parity_signs(n, z_mask)
    out.setflags(write=False)
    return out


class CompiledOperator:
    """A PauliSum grouped by X-flip mask for fast action on amplitudes.

    Each Pauli string acts as ``(P psi)[k] = d[k] * psi[k ^ x_mask]``; strings
    sharing an ``x_mask`` collapse into one diagonal vector.
    """

    def __init__(self, A: PauliSum, n: int):
        groups: dict[int, np.ndarray] = {}
        idx = _bit_counts(n)
        for term in A.terms:
            x_mask, z_mask = term.masks()
            n_y = sum(1 for _, axis in term.string if axis == "Y")
            # P = i^{n_y} X^x Z^z, and Z^z acts on the pre-flip index k ^ x.
            parity = np.bitwise_count((idx ^ np.uint64(x_mask)) & np.uint64(z_mask)) & 1
            vec = term.coefficient * (1j**n_y) * (1.0 - 2.0 * parity)
            if x_mask in groups:
                groups[x_mask] = groups[x_mask] + vec
            else:
                groups[x_mask] = vec.astype(complex)
        self.n = n
        self.groups = [
            (mask, (idx ^ np.uint64(mask)).astype(np.intp) if mask else None, vec) for mask, vec in sorted(groups.items())
        ]

    def apply(self, amplitudes: np.ndarray) -> np.ndarray:
        out = np.zeros_like(amplitudes)
        for _, perm, vec in self.groups:
            out += vec * (amplitudes if perm is None else amplitudes[perm])
        return out

    def expectation(self, amplitudes: np.ndarray) -> complex:
        total = 0j
        for _, perm, vec in self.groups:
            total += np.vdot(amplitudes, vec * (amplitudes if perm is None else amplitudes[perm]))
        return total


@lru_cache(maxsize=64)
def compile_operator(A: PauliSum, n: int) -> CompiledOperator:
    return CompiledOperator(A, n)


def expectation(state: StateVector, A: PauliSum) -> float:
    """``<state|A|state>`` for Hermitian ``A``.

    Raises :class:`NonHermitianError` if the imaginary part exceeds 1e-9.
    """
    if A.n != state.n:
        raise ValueError(f"operator on {A.n} qubits applied to a {state.n}-qubit state")
    raw = compile_operator(A, state.n).expectation(state.amplitudes)
    if abs(raw.imag) > HERMITIAN_ATOL:
        raise NonHermitianError(f"expectation has imaginary part {raw.imag:.3e}; operator is not Hermitian")
    return float(raw.real)


def diagonal_expectation(state: StateVector, C: PauliSum) -> float:
    d = diagonal(C, state.n)
    probs = state.amplitudes.real**2 + state.amplitudes.imag**2
    return float(probs @ d)


def apply_diagonal_phase(state: StateVector, C: PauliSum, theta: float) -> StateVector:
    """Multiply amplitude ``k`` by ``exp(-i theta c_k)``."""
    if theta == 0:
        if not is_diagonal(C):
            raise ValueError("operator is not diagonal in the computational basis")
        return state
    state.amplitudes *= _phase_vector(C, state.n, float(theta))
    return state


@lru_cache(maxsize=256)
def _phase_vector(C: PauliSum, n: int, theta: float) -> np.ndarray:
    out = np.exp(-1j * theta * diagonal(C, n))
    out.setflags(write=False)
    return out


def apply_transverse_rotation(state: StateVector, theta: float) -> StateVector:
    """Apply ``exp(-i theta B)`` with ``B = -sum_i X_i``, qubit by qubit."""
    if theta == 0:
        return state
    c = np.cos(theta)
    s = 1j * np.sin(theta)
    amps = state.amplitudes
    for q in range(state.n):
        view = amps.reshape(-1, 2, 1 << q)
        lo = view[:, 0, :]
        hi = view[:, 1, :]
        tmp = lo.copy()
        lo *= c
        lo += s * hi
        hi *= c
        hi += s * tmp
    return state


@lru_cache(maxsize=32)
def _dense_pair(C: PauliSum, n: int) -> tuple[np.ndarray, np.ndarray]:
    return to_dense(transverse_field(n), n), to_dense(C, n)


def evolve(
    state: StateVector,
    mixer_angle: float,
    cost_angle: float,
    C: PauliSum,
    scheme: EvolutionScheme = DEFAULT_SCHEME,
) -> StateVector:
    """Approximate ``exp(-i (mixer_angle B + cost_angle C))`` on ``state``."""
    if scheme.kind == "dense":
        if state.n > MAX_DENSE_EXP_QUBITS:
            raise ValueError(f"dense exponential limited to {MAX_DENSE_EXP_QUBITS} qubits, got {state.n}")
        B_mat, C_mat = _dense_pair(C, state.n)
        U = expm(-1j * (mixer_angle * B_mat + cost_angle * C_mat))
        state.amplitudes[:] = U @ state.amplitudes
        return state
    m = scheme.substeps
    cost_step = apply_diagonal_phase if is_diagonal(C) else _apply_dense_cost
    if scheme.kind == "first-order":
        for _ in range(m):
            apply_transverse_rotation(state, mixer_angle / m)
            cost_step(state, C, cost_angle / m)
    else:
        half = cost_angle / (2 * m)
        for _ in range(m):
            cost_step(state, C, half)
            apply_transverse_rotation(state, mixer_angle / m)
            cost_step(state, C, half)
    return state


def _apply_dense_cost(state: StateVector, C: PauliSum, theta: float) -> StateVector:
    # non-diagonal costs only appear in small validation fixtures
    if state.n > MAX_DENSE_EXP_QUBITS:
        raise ValueError(f"non-diagonal cost limited to {MAX_DENSE_EXP_QUBITS} qubits, got {state.n}")
    if theta != 0:
        state.amplitudes[:] = expm(-1j * theta * _dense_pair(C, state.n)[1]) @ state.amplitudes
    return state


def apply_layer(
    state: StateVector,
    u: float,
    dt: float,
    C: PauliSum,
    scheme: EvolutionScheme = DEFAULT_SCHEME,
    cost_weight: float = 1.0,
) -> StateVector:
    """One circuit layer ``exp(-i dt (u B + cost_weight C))``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return evolve(state, u * dt, cost_weight * dt, C, scheme)
