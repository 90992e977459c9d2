"""Weighted sums of Pauli strings.

Qubit ``q`` addresses bit ``q`` of a computational-basis index (qubit 0 is the
least-significant bit). Axis labels are ``"X"``, ``"Y"`` and ``"Z"``; qubits
absent from a string carry the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Iterator, Mapping, Union

import numpy as np

AXES = ("X", "Y", "Z")
PRUNE_THRESHOLD = 1e-12
MAX_DENSE_QUBITS = 12

PauliString = tuple[tuple[int, str], ...]

# (a, b) -> (phase, axis) with sigma_a sigma_b = phase * sigma_axis
_PRODUCT_TABLE: dict[tuple[str, str], tuple[complex, str | None]] = {
    ("X", "X"): (1, None),
    ("Y", "Y"): (1, None),
    ("Z", "Z"): (1, None),
    ("X", "Y"): (1j, "Z"),
    ("Y", "X"): (-1j, "Z"),
    ("Y", "Z"): (1j, "X"),
    ("Z", "Y"): (-1j, "X"),
    ("Z", "X"): (1j, "Y"),
    ("X", "Z"): (-1j, "Y"),
}

_SINGLE = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _normalize_string(string: Union[Mapping[int, str], Iterable[tuple[int, str]]]) -> PauliString:
    items = string.items() if isinstance(string, Mapping) else list(string)
    seen: dict[int, str] = {}
    for qubit, axis in items:
        qubit = int(qubit)
        axis = str(axis).upper()
        if qubit < 0:
            raise ValueError(f"negative qubit index {qubit}")
        if axis not in AXES:
            raise ValueError(f"unknown Pauli axis {axis!r}")
        if qubit in seen:
            raise ValueError(f"qubit {qubit} appears twice in one Pauli string")
        seen[qubit] = axis
    return tuple(sorted(seen.items()))


@dataclass(frozen=True)
class PauliTerm:
    """A coefficient times a tensor product of single-qubit Paulis."""

    coefficient: complex
    string: PauliString = ()

    def __post_init__(self):
        object.__setattr__(self, "coefficient", complex(self.coefficient))
        object.__setattr__(self, "string", _normalize_string(self.string))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.string)

    def max_qubit(self) -> int:
        return self.string[-1][0] if self.string else -1

    def masks(self) -> tuple[int, int]:
        """Return ``(x_mask, z_mask)``; Y sets both bits."""
        x_mask = z_mask = 0
        for q, axis in self.string:
            if axis in ("X", "Y"):
                x_mask |= 1 << q
            if axis in ("Z", "Y"):
                z_mask |= 1 << q
        return x_mask, z_mask

    def label(self, n: int) -> str:
        """Dense label, qubit 0 first (e.g. ``"ZIX"``)."""
        axes = dict(self.string)
        return "".join(axes.get(q, "I") for q in range(n))


def multiply_terms(a: PauliTerm, b: PauliTerm) -> PauliTerm:
    """Operator product ``a * b`` with the Pauli phase folded into the coefficient."""
    coefficient = a.coefficient * b.coefficient
    axes = dict(a.string)
    for q, axis_b in b.string:
        axis_a = axes.get(q)
        if axis_a is None:
            axes[q] = axis_b
            continue
        phase, axis = _PRODUCT_TABLE[(axis_a, axis_b)]
        coefficient *= phase
        if axis is None:
            del axes[q]
        else:
            axes[q] = axis
    return PauliTerm(coefficient, axes)


class PauliSum:
    """Immutable weighted sum of Pauli strings on an ``n``-qubit register.

    Duplicate strings are merged on construction and coefficients with
    magnitude below ``prune`` are dropped.
    """

    __slots__ = ("terms", "n", "prune", "_hash")

    def __init__(self, terms: Iterable[PauliTerm], n: int, prune: float = PRUNE_THRESHOLD):
        merged: dict[PauliString, complex] = {}
        for term in terms:
            if term.max_qubit() >= n:
                raise ValueError(f"term {term} addresses a qubit outside a {n}-qubit register")
            merged[term.string] = merged.get(term.string, 0j) + term.coefficient
        kept = tuple(
            PauliTerm(c, s) for s, c in sorted(merged.items(), key=lambda kv: _sort_key(kv[0])) if abs(c) >= prune
        )
        object.__setattr__(self, "terms", kept)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "prune", prune)
        object.__setattr__(self, "_hash", hash((self.n, tuple((t.string, t.coefficient) for t in kept))))

    def __setattr__(self, name, value):
        raise AttributeError("PauliSum is immutable")

    @classmethod
    def zero(cls, n: int) -> "PauliSum":
        return cls((), n)

    @classmethod
    def identity(cls, n: int, coefficient: complex = 1.0) -> "PauliSum":
        return cls([PauliTerm(coefficient, ())], n)

    @classmethod
    def single(cls, n: int, string, coefficient: complex = 1.0) -> "PauliSum":
        return cls([PauliTerm(coefficient, string)], n)

    def __iter__(self) -> Iterator[PauliTerm]:
        return iter(self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self.n == other.n and self.as_dict() == other.as_dict()

    def __repr__(self) -> str:
        if not self.terms:
            return f"PauliSum(0, n={self.n})"
        body = " + ".join(f"({t.coefficient:.6g})*{t.label(self.n)}" for t in self.terms)
        return f"PauliSum({body}, n={self.n})"

    def as_dict(self) -> dict[PauliString, complex]:
        return {t.string: t.coefficient for t in self.terms}

    def _check(self, other: "PauliSum") -> None:
        if self.n != other.n:
            raise ValueError(f"register sizes differ: {self.n} vs {other.n}")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = PauliSum.identity(self.n, other)
        if not isinstance(other, PauliSum):
            return NotImplemented
        self._check(other)
        return PauliSum(self.terms + other.terms, self.n, self.prune)

    __radd__ = __add__

    def __neg__(self) -> "PauliSum":
        return self * -1

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return PauliSum((PauliTerm(t.coefficient * other, t.string) for t in self.terms), self.n, self.prune)
        if isinstance(other, PauliSum):
            self._check(other)
            return PauliSum((multiply_terms(a, b) for a in self.terms for b in other.terms), self.n, self.prune)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self * other
        return NotImplemented

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return all(abs(t.coefficient.imag) <= atol for t in self.terms)

    def to_records(self) -> list[dict]:
        """Serialize as ``{coefficient_real, coefficient_imag, string}`` records."""
        return [
            {
                "coefficient_real": t.coefficient.real,
                "coefficient_imag": t.coefficient.imag,
                "string": [[q, a] for q, a in t.string],
            }
            for t in self.terms
        ]

    @classmethod
    def from_records(cls, records: Iterable[Mapping], n: int) -> "PauliSum":
        terms = [
            PauliTerm(complex(r["coefficient_real"], r["coefficient_imag"]), [(q, a) for q, a in r["string"]])
            for r in records
        ]
        return cls(terms, n)


def _sort_key(string: PauliString):
    return (len(string), string)


def commutator(a: PauliSum, b: PauliSum) -> PauliSum:
    """``a b - b a``, merged and pruned."""
    a._check(b)
    terms = []
    for s in a.terms:
        for t in b.terms:
            st = multiply_terms(s, t)
            ts = multiply_terms(t, s)
            # Pauli strings either commute or anticommute.
            if st.coefficient != ts.coefficient:
                terms.append(PauliTerm(st.coefficient - ts.coefficient, st.string))
    return PauliSum(terms, a.n, a.prune)


def is_diagonal(a: PauliSum) -> bool:
    return all(axis == "Z" for t in a.terms for _, axis in t.string)


def transverse_field(n: int) -> PauliSum:
    """The mixer ``-sum_i X_i``."""
    return PauliSum([PauliTerm(-1.0, {q: "X"}) for q in range(n)], n)


def _term_matrix(term: PauliTerm, n: int) -> np.ndarray:
    axes = dict(term.string)
    # Kron from the most-significant qubit down so qubit 0 is the LSB.
    factors = [_SINGLE[axes[q]] if q in axes else np.eye(2, dtype=complex) for q in reversed(range(n))]
    return term.coefficient * reduce(np.kron, factors, np.ones((1, 1), dtype=complex))


def to_dense(a: PauliSum, n: int | None = None) -> np.ndarray:
    """Dense ``2**n x 2**n`` matrix; intended for validation at small ``n``."""
    n = a.n if n is None else n
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"dense realization limited to {MAX_DENSE_QUBITS} qubits, got {n}")
    if any(t.max_qubit() >= n for t in a.terms):
        raise ValueError("operator addresses qubits beyond the requested register")
    out = np.zeros((2**n, 2**n), dtype=complex)
    for term in a.terms:
        out += _term_matrix(term, n)
    return out
