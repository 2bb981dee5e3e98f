"""Dense complex linear algebra for small, named qubit registers.

State vectors carry an ordered tuple of distinct qubit names next to their
2**n amplitudes; density matrices do the same for their 2**n x 2**n grid.
All target addressing is by name: operators are applied by permuting the
named targets to the front, acting on the leading factor, and permuting
back.  Super-operators are signed Kraus sums, which is deliberately more
permissive than completely positive maps so that non-physical probe
operators stay executable; ``SuperOperator.advisories`` reports CP and
trace violations without blocking anything.

Everything is immutable and pure.  Registers beyond a dozen qubits are out
of scope and dense numpy is used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    InvalidArity,
    InvalidOutcome,
    InvalidPermutation,
    InvalidRegister,
    ShapeMismatch,
    UnknownQubit,
    ZeroBranch,
)

DEFAULT_TOL = 1e-9


def _as_complex_array(data, shape_name):
    arr = np.array(data, dtype=np.complex128)
    if not np.all(np.isfinite(arr)):
        raise InvalidRegister(f"non-finite entry in {shape_name}")
    arr.setflags(write=False)
    return arr


def _check_names(names):
    names = tuple(names)
    if len(set(names)) != len(names):
        raise InvalidRegister(f"duplicate qubit names in {names}")
    return names


def fresh_qubit_name(names: Sequence[str]) -> str:
    """Deterministic name for a register extension: smallest free q<k>, k >= n.

    Shared by the CQP- qbit rule, the qCCS register-extension operator and
    the encoding, so that all three agree on the appended name.
    """
    k = len(names)
    while f"q{k}" in names:
        k += 1
    return f"q{k}"


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalised amplitude vector over an ordered, named register.

    A zero vector is accepted as the flagged placeholder carried by
    zero-probability measurement outcomes; every other stored vector must
    have unit norm within DEFAULT_TOL.
    """

    qubit_names: tuple[str, ...]
    amps: np.ndarray

    def __post_init__(self):
        names = _check_names(self.qubit_names)
        amps = _as_complex_array(self.amps, "state vector")
        if amps.ndim != 1 or amps.shape[0] != 2 ** len(names):
            raise InvalidRegister(
                f"expected {2 ** len(names)} amplitudes for {len(names)} qubits, got {amps.shape}"
            )
        norm2 = float(np.sum(np.abs(amps) ** 2))
        if norm2 > DEFAULT_TOL and abs(norm2 - 1.0) > 1e-6:
            raise InvalidRegister(f"state vector not normalised: |psi|^2 = {norm2}")
        object.__setattr__(self, "qubit_names", names)
        object.__setattr__(self, "amps", amps)

    @property
    def num_qubits(self) -> int:
        return len(self.qubit_names)

    @property
    def is_zero(self) -> bool:
        """Flag for the placeholder post-state of an impossible outcome."""
        return bool(np.sum(np.abs(self.amps) ** 2) <= DEFAULT_TOL)

    def __repr__(self):
        return f"StateVector({','.join(self.qubit_names)}; {np.round(self.amps, 6)})"


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian grid with real trace <= 1 over an ordered, named register.

    Positivity is not enforced: signed Kraus probes legitimately produce
    indefinite matrices.
    """

    qubit_names: tuple[str, ...]
    entries: np.ndarray

    def __post_init__(self):
        names = _check_names(self.qubit_names)
        entries = _as_complex_array(self.entries, "density matrix")
        dim = 2 ** len(names)
        if entries.shape != (dim, dim):
            raise InvalidRegister(f"expected a {dim}x{dim} grid, got {entries.shape}")
        if np.max(np.abs(entries - entries.conj().T)) > 1e-7:
            raise InvalidRegister("density matrix not Hermitian")
        tr = complex(np.trace(entries))
        if abs(tr.imag) > 1e-7 or tr.real > 1.0 + 1e-7:
            raise InvalidRegister(f"trace must be real and <= 1, got {tr}")
        object.__setattr__(self, "qubit_names", names)
        object.__setattr__(self, "entries", entries)

    @property
    def num_qubits(self) -> int:
        return len(self.qubit_names)

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def __repr__(self):
        return f"DensityMatrix({','.join(self.qubit_names)}; tr={self.trace:.6f})"


@dataclass(frozen=True, eq=False)
class Unitary:
    """2**k x 2**k matrix with U+ U = I within tolerance."""

    matrix: np.ndarray
    name: str | None = None

    def __post_init__(self):
        matrix = _as_complex_array(self.matrix, "unitary")
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidArity(f"unitary matrix must be square, got {matrix.shape}")
        k = int(matrix.shape[0]).bit_length() - 1
        if 2 ** k != matrix.shape[0]:
            raise InvalidArity(f"unitary dimension {matrix.shape[0]} is not a power of two")
        if np.max(np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0]))) > 1e-7:
            raise InvalidArity(f"matrix is not unitary: {self.name or matrix}")
        object.__setattr__(self, "matrix", matrix)

    @property
    def arity(self) -> int:
        return int(self.matrix.shape[0]).bit_length() - 1

    def __repr__(self):
        return f"Unitary({self.name or '?'}, arity={self.arity})"


_SQ2 = 1.0 / np.sqrt(2.0)

GATES: dict[str, Unitary] = {
    "I": Unitary(np.eye(2), "I"),
    "X": Unitary([[0, 1], [1, 0]], "X"),
    "Y": Unitary([[0, -1j], [1j, 0]], "Y"),
    "Z": Unitary([[1, 0], [0, -1]], "Z"),
    "H": Unitary([[_SQ2, _SQ2], [_SQ2, -_SQ2]], "H"),
    "CNOT": Unitary([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], "CNOT"),
}


@dataclass(frozen=True, eq=False)
class MeasurementOutcome:
    """One branch of measuring the leading r qubits.

    ``post_state`` is the flagged zero vector whenever probability is zero;
    downstream rules filter those branches out.
    """

    result: int
    probability: float
    post_state: StateVector


@dataclass(frozen=True, eq=False)
class SuperOperator:
    """Signed Kraus sum applied to a named target set.

    Application semantics: rho' = sum_j sign_j (K_j (x) I) rho (K_j (x) I)+,
    after permuting the targets to the front.  ``normalize_after`` marks the
    expected-outcome measurement operators, whose branch rule divides by the
    trace.  ``extends_register`` marks the register-extension operator that
    appends a fresh qubit in |0>.
    """

    name: str
    arity: int
    terms: tuple[tuple[int, np.ndarray], ...]
    normalize_after: bool = False
    extends_register: bool = False

    def __post_init__(self):
        if not self.terms and not self.extends_register:
            raise InvalidArity(f"super-operator {self.name} needs at least one Kraus term")
        dim = 2 ** self.arity
        frozen = []
        for sign, matrix in self.terms:
            if sign not in (1, -1):
                raise InvalidArity(f"Kraus sign must be +1 or -1, got {sign}")
            matrix = _as_complex_array(matrix, f"Kraus term of {self.name}")
            if matrix.shape != (dim, dim):
                raise InvalidArity(
                    f"Kraus term of {self.name} must be {dim}x{dim}, got {matrix.shape}"
                )
            frozen.append((sign, matrix))
        object.__setattr__(self, "terms", tuple(frozen))

    @classmethod
    def from_unitary(cls, u: Unitary) -> "SuperOperator":
        return cls(u.name or "U", u.arity, ((1, u.matrix),))

    @classmethod
    def measure_unknown(cls, r: int) -> "SuperOperator":
        """Measurement with the result unknown: sum over all outcome projectors."""
        terms = []
        for m in range(2 ** r):
            proj = np.zeros((2 ** r, 2 ** r))
            proj[m, m] = 1.0
            terms.append((1, proj))
        return cls("M", r, tuple(terms))

    @classmethod
    def measure_expected(cls, i: int, r: int) -> "SuperOperator":
        """Measurement with expected result i; normalises the surviving branch.

        With r = 0 this is the identity operator on the whole register.
        """
        if i >= 2 ** r:
            raise InvalidOutcome(f"outcome {i} out of range for {r} qubits")
        proj = np.zeros((2 ** r, 2 ** r))
        proj[i, i] = 1.0
        return cls(f"E{i}", r, ((1, proj),), normalize_after=True)

    @classmethod
    def new_qubit(cls) -> "SuperOperator":
        return cls("new", 0, ((1, np.eye(1)),), extends_register=True)

    @classmethod
    def signed_kraus(cls, name: str, terms) -> "SuperOperator":
        terms = tuple((int(s), m) for s, m in terms)
        arity = int(np.asarray(terms[0][1]).shape[0]).bit_length() - 1
        return cls(name, arity, terms)

    def advisories(self) -> list[str]:
        """Report CP / trace-nonincreasing violations without blocking."""
        notes = []
        dim = 2 ** self.arity
        acc = np.zeros((dim, dim), dtype=np.complex128)
        choi = np.zeros((dim * dim, dim * dim), dtype=np.complex128)
        for sign, k in self.terms:
            acc += sign * (k.conj().T @ k)
            # |v> = sum_i |i> (x) K|i>, so the Choi matrix is sum sign |v><v|.
            vec = k.T.reshape(-1)
            choi += sign * np.outer(vec, vec.conj())
        eigs = np.linalg.eigvalsh((choi + choi.conj().T) / 2)
        if eigs.min() < -1e-7:
            notes.append(f"{self.name}: not completely positive (Choi eigenvalue {eigs.min():.3g})")
        top = np.linalg.eigvalsh((acc + acc.conj().T) / 2).max()
        if top > 1 + 1e-7:
            notes.append(f"{self.name}: trace may increase (sum K+K eigenvalue {top:.3g})")
        return notes

    def __repr__(self):
        return f"SuperOperator({self.name}, arity={self.arity}, terms={len(self.terms)})"


def amplitude_damping_probe(p: float = 1.0) -> SuperOperator:
    """The signed two-term probe with no unitary equivalent.

    +[[1,0],[0,sqrt(1+p)]] and -[[0,sqrt(p)],[0,0]]; the separation suite
    only exercises p = 1.
    """
    return SuperOperator.signed_kraus(
        "Q",
        (
            (1, [[1.0, 0.0], [0.0, np.sqrt(1.0 + p)]]),
            (-1, [[0.0, np.sqrt(p)], [0.0, 0.0]]),
        ),
    )


# -- operations on state vectors --------------------------------------------

def tensor(v1: StateVector, v2: StateVector) -> StateVector:
    if set(v1.qubit_names) & set(v2.qubit_names):
        raise InvalidRegister(
            f"registers share names: {set(v1.qubit_names) & set(v2.qubit_names)}"
        )
    return StateVector(v1.qubit_names + v2.qubit_names, np.kron(v1.amps, v2.amps))


def basis_state(names: Sequence[str], index: int) -> StateVector:
    amps = np.zeros(2 ** len(tuple(names)))
    amps[index] = 1.0
    return StateVector(tuple(names), amps)


def apply_unitary_prefix(u: Unitary, psi: StateVector) -> StateVector:
    """(U (x) I) |psi> for U on the first ``u.arity`` qubits."""
    r, n = u.arity, psi.num_qubits
    if r > n:
        raise InvalidArity(f"gate arity {r} exceeds register size {n}")
    block = psi.amps.reshape(2 ** r, -1)
    return StateVector(psi.qubit_names, (u.matrix @ block).reshape(-1))


def _check_perm(perm, n):
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(n)):
        raise InvalidPermutation(f"{perm} is not a permutation of 0..{n - 1}")
    return perm


def inverse_perm(perm: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for i, p in enumerate(perm):
        inv[p] = i
    return tuple(inv)


def permutation_unitary(perm: Sequence[int]) -> Unitary:
    """Unitary sending |b_0..b_{n-1}> to |b_{perm^-1(0)}..b_{perm^-1(n-1)}>."""
    n = len(tuple(perm))
    perm = _check_perm(perm, n)
    inv = inverse_perm(perm)
    dim = 2 ** n
    matrix = np.zeros((dim, dim))
    for b in range(dim):
        bits = [(b >> (n - 1 - j)) & 1 for j in range(n)]
        c = 0
        for i in range(n):
            c = (c << 1) | bits[inv[i]]
        matrix[c, b] = 1.0
    return Unitary(matrix, "Perm")


def permute_state(psi: StateVector, perm: Sequence[int]) -> StateVector:
    """Reorder the register: new position i holds the old qubit at perm[i]."""
    n = psi.num_qubits
    perm = _check_perm(perm, n)
    names = tuple(psi.qubit_names[p] for p in perm)
    if n == 0:
        return StateVector(names, psi.amps)
    amps = psi.amps.reshape([2] * n).transpose(perm).reshape(-1)
    return StateVector(names, amps)


def permute_density(rho: DensityMatrix, perm: Sequence[int]) -> DensityMatrix:
    n = rho.num_qubits
    perm = _check_perm(perm, n)
    names = tuple(rho.qubit_names[p] for p in perm)
    if n == 0:
        return DensityMatrix(names, rho.entries)
    axes = list(perm) + [n + p for p in perm]
    entries = rho.entries.reshape([2] * (2 * n)).transpose(axes).reshape(2 ** n, 2 ** n)
    return DensityMatrix(names, entries)


def measure_prefix(psi: StateVector, r: int, tol: float = DEFAULT_TOL) -> list[MeasurementOutcome]:
    """Measure the first r qubits: outcome m keeps the amplitude block
    [2^{n-r} m, 2^{n-r} (m+1)) rescaled by 1/sqrt(p_m)."""
    n = psi.num_qubits
    if r < 0 or r > n:
        raise InvalidArity(f"cannot measure {r} of {n} qubits")
    width = 2 ** (n - r)
    outcomes = []
    for m in range(2 ** r):
        block = psi.amps[m * width : (m + 1) * width]
        p = float(np.sum(np.abs(block) ** 2))
        amps = np.zeros_like(psi.amps)
        if p > tol:
            amps[m * width : (m + 1) * width] = block / np.sqrt(p)
        else:
            p = 0.0
        outcomes.append(MeasurementOutcome(m, p, StateVector(psi.qubit_names, amps)))
    return outcomes


def outer(psi: StateVector) -> DensityMatrix:
    return DensityMatrix(psi.qubit_names, np.outer(psi.amps, psi.amps.conj()))


def mix(parts: Sequence[tuple[float, StateVector]]) -> DensityMatrix:
    """Weighted sum of outer products, sum p_i |psi_i><psi_i|."""
    names = parts[0][1].qubit_names
    entries = np.zeros((2 ** len(names), 2 ** len(names)), dtype=np.complex128)
    for p, psi in parts:
        if psi.qubit_names != names:
            raise ShapeMismatch("mixture components over different registers")
        if p > 0:
            entries += p * np.outer(psi.amps, psi.amps.conj())
    return DensityMatrix(names, entries)


# -- super-operator application ---------------------------------------------

def _signed_kraus_sum(e: SuperOperator, targets: tuple[str, ...], rho: DensityMatrix) -> np.ndarray:
    """The raw signed Kraus sum on the target-fronted register; unvalidated."""
    if len(set(targets)) != len(targets):
        raise InvalidArity(f"duplicate targets {targets}")
    if len(targets) != e.arity:
        raise InvalidArity(f"{e.name} has arity {e.arity}, got targets {targets}")
    for t in targets:
        if t not in rho.qubit_names:
            raise UnknownQubit(f"unknown qubit {t!r} in {rho.qubit_names}")
    n = rho.num_qubits
    front = [rho.qubit_names.index(t) for t in targets]
    perm = tuple(front + [i for i in range(n) if i not in front])
    work = permute_density(rho, perm)
    rest = np.eye(2 ** (n - e.arity))
    acc = np.zeros_like(work.entries)
    for sign, k in e.terms:
        full = np.kron(k, rest)
        acc = acc + sign * (full @ work.entries @ full.conj().T)
    return acc


def superop_apply(
    e: SuperOperator,
    targets: Sequence[str],
    rho: DensityMatrix,
    tol: float = DEFAULT_TOL,
) -> DensityMatrix:
    """Apply e to the named targets of rho.

    Internally permutes the targets to the front, applies the signed Kraus
    sum on the leading factor, and permutes back.  With ``normalize_after``
    the result is divided by its trace (ZeroBranch when the trace vanishes).
    """
    targets = tuple(targets)
    if e.extends_register:
        if targets:
            raise InvalidArity("register extension takes no targets")
        fresh = fresh_qubit_name(rho.qubit_names)
        zero = np.array([[1.0, 0.0], [0.0, 0.0]])
        return DensityMatrix(rho.qubit_names + (fresh,), np.kron(rho.entries, zero))

    acc = _signed_kraus_sum(e, targets, rho)
    if e.normalize_after:
        tr = float(np.trace(acc).real)
        if tr <= tol:
            raise ZeroBranch(f"{e.name} applied to a branch of trace {tr}")
        acc = acc / tr

    n = rho.num_qubits
    front = [rho.qubit_names.index(t) for t in targets]
    perm = tuple(front + [i for i in range(n) if i not in front])
    fronted_names = tuple(rho.qubit_names[p] for p in perm)
    result = DensityMatrix(fronted_names, acc)
    return permute_density(result, inverse_perm(perm))


def raw_trace_after(e: SuperOperator, targets: Sequence[str], rho: DensityMatrix) -> float:
    """Trace of the raw, never normalised application; guard evaluation.

    Computed on the bare array: probe operators produce intermediate grids
    outside the partial-density invariants (trace above one), and the guard
    only needs the number.
    """
    return float(np.trace(_signed_kraus_sum(e, tuple(targets), rho)).real)


# -- comparison --------------------------------------------------------------

def approx_eq(a, b, tol: float = DEFAULT_TOL) -> bool:
    """Entrywise comparison; literal, not modulo global phase."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        left, right = a.amps, b.amps
    elif isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        left, right = a.entries, b.entries
    else:
        raise ShapeMismatch(f"cannot compare {type(a).__name__} with {type(b).__name__}")
    if a.qubit_names != b.qubit_names:
        raise ShapeMismatch(f"registers differ: {a.qubit_names} vs {b.qubit_names}")
    return bool(np.max(np.abs(left - right)) <= tol) if left.size else True


def density_equal_mod_order(a: DensityMatrix, b: DensityMatrix, tol: float = DEFAULT_TOL) -> bool:
    """Equality after reordering b's register to a's name order."""
    if set(a.qubit_names) != set(b.qubit_names):
        return False
    perm = tuple(b.qubit_names.index(name) for name in a.qubit_names)
    return approx_eq(a, permute_density(b, perm), tol)
