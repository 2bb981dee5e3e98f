"""The CQP- calculus: terms, both type systems, congruence and semantics.

Configurations pair a process term with a state-vector register and a
channel list.  Measurement produces an intermediate probability
distribution that stores the shared continuation once, with the measured
variable unsubstituted; the branch rule materialises the instantiated
term on demand.

Gate and measurement rules act on the leading register qubits, so the
step enumerator synthesises register permutations on demand: exactly the
reorderings that front the operands of an enabled gate or measurement.
Permutations never rename the term; qubit references are by name and a
reorder leaves them attached to the same qubits.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import quantum
from .errors import (
    ArityMismatch,
    DuplicateQubitArg,
    InvalidOutcome,
    NoCloningViolation,
    ParseError,
    SharedQubit,
    UnknownName,
)
from .quantum import DEFAULT_TOL, GATES, StateVector


class UnknownQubitName(UnknownName):
    """Qubit-position reference outside the register and binders."""


# -- terms --------------------------------------------------------------------

@dataclass(frozen=True)
class Nil:
    pass


@dataclass(frozen=True)
class Success:
    pass


@dataclass(frozen=True)
class Par:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class In:
    chan: str
    var: str
    cont: "Term"


@dataclass(frozen=True)
class Out:
    chan: str
    qubit: str
    cont: "Term"


@dataclass(frozen=True)
class Trans:
    qubits: tuple[str, ...]
    gate: str
    cont: "Term"


@dataclass(frozen=True)
class Measure:
    qubits: tuple[str, ...]
    var: str
    cont: "Term"


@dataclass(frozen=True)
class NewChan:
    var: str
    cont: "Term"


@dataclass(frozen=True)
class NewQbit:
    var: str
    cont: "Term"


Term = Nil | Success | Par | In | Out | Trans | Measure | NewChan | NewQbit


# -- configurations -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CqpPure:
    sigma: StateVector
    phi: tuple[str, ...]
    term: Term

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(self.phi))


@dataclass(frozen=True, eq=False)
class CqpDist:
    """Probability distribution after measuring the leading r qubits.

    ``cases[i]`` is (p_i, sigma_i); the shared term keeps ``var`` free and
    case i reads term{i/var}.  All 2**r cases are stored, including the
    zero-probability ones, which the branch rule skips.
    """

    cases: tuple[tuple[float, StateVector], ...]
    var: str
    r: int
    phi: tuple[str, ...]
    term: Term

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(self.phi))
        object.__setattr__(self, "cases", tuple((float(p), s) for p, s in self.cases))
        if self.r <= 0:
            raise InvalidOutcome("distributions need r > 0; r = 0 is the pure configuration")
        if len(self.cases) != 2 ** self.r:
            raise InvalidOutcome(f"expected {2 ** self.r} cases, got {len(self.cases)}")
        total = sum(p for p, _ in self.cases)
        if abs(total - 1.0) > 1e-6:
            raise InvalidOutcome(f"branch probabilities sum to {total}")
        names = self.cases[0][1].qubit_names
        if any(s.qubit_names != names for _, s in self.cases):
            raise InvalidOutcome("distribution cases disagree on the register")

    @property
    def sigma_names(self):
        return self.cases[0][1].qubit_names

    def case_term(self, i: int) -> Term:
        return substitute(self.term, {self.var: str(i)})


CqpConfig = CqpPure | CqpDist


def make_dist(cases, var, r, phi, term) -> CqpConfig:
    """Distributions with r = 0 are equated with the pure configuration."""
    if r == 0:
        (_, sigma), = tuple(cases)
        return CqpPure(sigma, tuple(phi), term)
    return CqpDist(tuple(cases), var, r, tuple(phi), term)


# -- free names and substitution ----------------------------------------------

@lru_cache(maxsize=65536)
def free_names(t: Term) -> frozenset[str]:
    match t:
        case Nil() | Success():
            return frozenset()
        case Par(l, r):
            return free_names(l) | free_names(r)
        case In(c, x, p):
            return frozenset({c}) | (free_names(p) - {x})
        case Out(c, q, p):
            return frozenset({c, q}) | free_names(p)
        case Trans(qs, _, p):
            return frozenset(qs) | free_names(p)
        case Measure(qs, x, p):
            return frozenset(qs) | (free_names(p) - {x})
        case NewChan(x, p) | NewQbit(x, p):
            return free_names(p) - {x}
    raise TypeError(f"not a CQP- term: {t!r}")


def fresh_name(base: str, avoid: Iterable[str]) -> str:
    avoid = set(avoid)
    if base not in avoid:
        return base
    k = 0
    while f"{base}_{k}" in avoid:
        k += 1
    return f"{base}_{k}"


def substitute(t: Term, mapping: Mapping[str, str]) -> Term:
    """Simultaneous capture-avoiding substitution on names and qubit refs."""
    mapping = {k: v for k, v in mapping.items() if k != v}
    if not mapping:
        return t

    def sub(name):
        return mapping.get(name, name)

    match t:
        case Nil() | Success():
            return t
        case Par(l, r):
            return Par(substitute(l, mapping), substitute(r, mapping))
        case In(c, x, p):
            x2, p2 = _subst_under_binder(x, p, mapping)
            return In(sub(c), x2, p2)
        case Out(c, q, p):
            return Out(sub(c), sub(q), substitute(p, mapping))
        case Trans(qs, g, p):
            return Trans(tuple(sub(q) for q in qs), g, substitute(p, mapping))
        case Measure(qs, x, p):
            x2, p2 = _subst_under_binder(x, p, mapping)
            return Measure(tuple(sub(q) for q in qs), x2, p2)
        case NewChan(x, p):
            x2, p2 = _subst_under_binder(x, p, mapping)
            return NewChan(x2, p2)
        case NewQbit(x, p):
            x2, p2 = _subst_under_binder(x, p, mapping)
            return NewQbit(x2, p2)
    raise TypeError(f"not a CQP- term: {t!r}")


def _subst_under_binder(x: str, cont: Term, mapping: Mapping[str, str]):
    scoped = {k: v for k, v in mapping.items() if k != x}
    if not scoped:
        return x, cont
    if x in scoped.values():
        # possible capture: alpha-rename the binder first
        avoid = set(scoped) | set(scoped.values()) | free_names(cont)
        x2 = fresh_name(x, avoid)
        cont = substitute(cont, {x: x2})
        x = x2
    return x, substitute(cont, scoped)


def subst_name(t: Term, frm: str, to: str) -> Term:
    return substitute(t, {frm: to})


def subst_qubit(t: Term, gamma: Mapping[str, str]) -> Term:
    """Qubit substitutions must be injective (no cloning by renaming)."""
    values = list(gamma.values())
    if len(set(values)) != len(values):
        raise NoCloningViolation(f"non-injective qubit substitution {dict(gamma)}")
    return substitute(t, gamma)


# -- structural congruence ----------------------------------------------------

def _alpha_sig(t: Term, env: dict, depth: int) -> str:
    def name(n):
        return f"b{env[n]}" if n in env else f"f:{n}"

    match t:
        case Nil():
            return "0"
        case Success():
            return "ok"
        case Par(l, r):
            return f"({_alpha_sig(l, env, depth)}|{_alpha_sig(r, env, depth)})"
        case In(c, x, p):
            e = dict(env, **{x: depth})
            return f"in[{name(c)};{_alpha_sig(p, e, depth + 1)}]"
        case Out(c, q, p):
            return f"out[{name(c)},{name(q)};{_alpha_sig(p, env, depth)}]"
        case Trans(qs, g, p):
            return f"tr[{g};{','.join(name(q) for q in qs)};{_alpha_sig(p, env, depth)}]"
        case Measure(qs, x, p):
            e = dict(env, **{x: depth})
            return f"ms[{','.join(name(q) for q in qs)};{_alpha_sig(p, e, depth + 1)}]"
        case NewChan(x, p):
            e = dict(env, **{x: depth})
            return f"nc[{_alpha_sig(p, e, depth + 1)}]"
        case NewQbit(x, p):
            e = dict(env, **{x: depth})
            return f"nq[{_alpha_sig(p, e, depth + 1)}]"
    raise TypeError(f"not a CQP- term: {t!r}")


def _flatten_par(t: Term) -> list[Term]:
    if isinstance(t, Par):
        return _flatten_par(t.left) + _flatten_par(t.right)
    if isinstance(t, Nil):
        return []
    return [t]


def _sorted_nf(t: Term) -> Term:
    match t:
        case Par():
            parts = []
            for child in _flatten_par(t):
                nf = _sorted_nf(child)
                if not isinstance(nf, Nil):
                    parts.append(nf)
            if not parts:
                return Nil()
            parts.sort(key=lambda p: _alpha_sig(p, {}, 0))
            out = parts[0]
            for p in parts[1:]:
                out = Par(out, p)
            return out
        case In(c, x, p):
            return In(c, x, _sorted_nf(p))
        case Out(c, q, p):
            return Out(c, q, _sorted_nf(p))
        case Trans(qs, g, p):
            return Trans(qs, g, _sorted_nf(p))
        case Measure(qs, x, p):
            return Measure(qs, x, _sorted_nf(p))
        case NewChan(x, p):
            return NewChan(x, _sorted_nf(p))
        case NewQbit(x, p):
            return NewQbit(x, _sorted_nf(p))
        case _:
            return t


def _canon_binders(t: Term, counter: list[int]) -> Term:
    def rename(x, p):
        fresh = f"%b{counter[0]}"
        counter[0] += 1
        return fresh, substitute(p, {x: fresh})

    match t:
        case Nil() | Success():
            return t
        case Par(l, r):
            return Par(_canon_binders(l, counter), _canon_binders(r, counter))
        case In(c, x, p):
            x2, p2 = rename(x, p)
            return In(c, x2, _canon_binders(p2, counter))
        case Out(c, q, p):
            return Out(c, q, _canon_binders(p, counter))
        case Trans(qs, g, p):
            return Trans(qs, g, _canon_binders(p, counter))
        case Measure(qs, x, p):
            x2, p2 = rename(x, p)
            return Measure(qs, x2, _canon_binders(p2, counter))
        case NewChan(x, p):
            x2, p2 = rename(x, p)
            return NewChan(x2, _canon_binders(p2, counter))
        case NewQbit(x, p):
            x2, p2 = rename(x, p)
            return NewQbit(x2, _canon_binders(p2, counter))
    raise TypeError(f"not a CQP- term: {t!r}")


def canonical_term(t: Term) -> Term:
    """Normal form: parallel flattened and sorted, units dropped, binders renamed."""
    return _canon_binders(_sorted_nf(t), [0])


def _register_renamed(config: CqpConfig):
    """Positionally rename register qubits (alpha conversion on the register)."""
    cached = getattr(config, "_canon", None)
    if cached is not None:
        return cached
    if isinstance(config, CqpPure):
        names = config.sigma.qubit_names
        mapping = {n: f"%r{i}" for i, n in enumerate(names)}
        cached = canonical_term(substitute(config.term, mapping))
    else:
        names = config.sigma_names
        mapping = {n: f"%r{i}" for i, n in enumerate(names)}
        shared = substitute(config.term, {config.var: "%x"})
        cached = canonical_term(substitute(shared, mapping))
    object.__setattr__(config, "_canon", cached)
    return cached


def congruent(c1: CqpConfig, c2: CqpConfig, tol: float = DEFAULT_TOL) -> bool:
    """Structural congruence of configurations.

    Parallel unit/commutativity/associativity, alpha conversion on binders
    and on the register's qubit names; quantum states compared entrywise.
    """
    if isinstance(c1, CqpPure) != isinstance(c2, CqpPure):
        return False
    if c1.phi != c2.phi:
        return False
    if isinstance(c1, CqpPure):
        if c1.sigma.qubit_names != c2.sigma.qubit_names:
            if len(c1.sigma.qubit_names) != len(c2.sigma.qubit_names):
                return False
        if not np.allclose(c1.sigma.amps, c2.sigma.amps, rtol=0.0, atol=tol):
            return False
        return _register_renamed(c1) == _register_renamed(c2)
    if c1.r != c2.r or len(c1.cases) != len(c2.cases):
        return False
    for (p1, s1), (p2, s2) in zip(c1.cases, c2.cases):
        if abs(p1 - p2) > tol:
            return False
        if not np.allclose(s1.amps, s2.amps, rtol=0.0, atol=tol):
            return False
    return _register_renamed(c1) == _register_renamed(c2)


def congruent_terms(t1: Term, t2: Term) -> bool:
    return canonical_term(t1) == canonical_term(t2)


def _round_amps(arr, digits=9):
    r = np.round(arr.real, digits) + 0.0
    i = np.round(arr.imag, digits) + 0.0
    return ",".join(f"{a:.9f}{b:+.9f}j" for a, b in zip(r, i))


def canonical_key(config: CqpConfig) -> str:
    """Hash key modulo congruence with amplitudes rounded to 9 digits."""
    cached = getattr(config, "_key", None)
    if cached is not None:
        return cached
    term = repr(_register_renamed(config))
    if isinstance(config, CqpPure):
        cached = f"P{config.sigma.num_qubits}|{_round_amps(config.sigma.amps)}|{';'.join(config.phi)}|{term}"
    else:
        cases = "&".join(f"{p:.9f}@{_round_amps(s.amps)}" for p, s in config.cases)
        cached = f"D{config.r}|{cases}|{';'.join(config.phi)}|{term}"
    object.__setattr__(config, "_key", cached)
    return cached


def has_success_barb(config: CqpConfig) -> bool:
    """Unguarded success: not under an input, output, gate, measurement or
    binder prefix.  A distribution barbs iff all non-zero cases barb; the
    cases only differ by a channel-name instantiation, so they agree."""

    def unguarded(t: Term) -> bool:
        match t:
            case Success():
                return True
            case Par(l, r):
                return unguarded(l) or unguarded(r)
            case _:
                return False

    return unguarded(config.term)


# -- type systems ---------------------------------------------------------------

@dataclass(frozen=True)
class TInt:
    pass


@dataclass(frozen=True)
class TQbit:
    pass


@dataclass(frozen=True)
class TChan:
    payload: tuple = (TQbit(),)


@dataclass(frozen=True)
class TOp:
    arity: int


CqpType = TInt | TQbit | TChan | TOp


def _is_int_literal(name: str) -> bool:
    return name.isdigit()


def _check_chan(c: str, env: Mapping[str, CqpType]):
    if _is_int_literal(c):
        return  # measurement results are valid channel identifiers
    ty = env.get(c)
    if isinstance(ty, (TChan, TInt)):
        return
    raise UnknownName(f"{c!r} is not usable as a channel")


def _check_qbit(q: str, env: Mapping[str, CqpType]):
    if not isinstance(env.get(q), TQbit):
        raise UnknownQubitName(f"{q!r} is not an available qubit")


def _check_operands(qs: Sequence[str], env):
    if len(set(qs)) != len(qs):
        raise DuplicateQubitArg(f"operands {qs} repeat a qubit")
    for q in qs:
        _check_qbit(q, env)


def _check_term(t: Term, env: dict, gates: Mapping[str, quantum.Unitary]) -> set[str]:
    """Returns the set of qubits the term demands; raises on errors.

    Parallel components must demand disjoint qubits.  A demand is an
    unguarded use: input-prefixed continuations are checked recursively but
    contribute nothing to the enclosing split, since their qubits come into
    play only when the input fires.  (The canonical protocol example relies
    on this: four receiver arms on distinct channels apply gates to the same
    qubit, and only one of them can ever be woken.)
    """
    match t:
        case Nil() | Success():
            return set()
        case Par(l, r):
            ul = _check_term(l, env, gates)
            ur = _check_term(r, env, gates)
            clash = ul & ur
            if clash:
                raise SharedQubit(f"parallel components share qubits {sorted(clash)}")
            return ul | ur
        case In(c, x, p):
            _check_chan(c, env)
            inner = dict(env, **{x: TQbit()})
            _check_term(p, inner, gates)
            return set()
        case Out(c, q, p):
            _check_chan(c, env)
            _check_qbit(q, env)
            inner = dict(env)
            del inner[q]  # transmitted qubit leaves the continuation's environment
            return _check_term(p, inner, gates) | {q}
        case Trans(qs, g, p):
            if g not in gates:
                raise UnknownName(f"unknown gate {g!r}")
            if gates[g].arity != len(qs):
                raise ArityMismatch(f"gate {g} has arity {gates[g].arity}, got {len(qs)} operands")
            _check_operands(qs, env)
            return _check_term(p, env, gates) | set(qs)
        case Measure(qs, x, p):
            if not qs:
                raise ArityMismatch("measurement needs at least one qubit")
            _check_operands(qs, env)
            inner = dict(env, **{x: TInt()})
            return (_check_term(p, inner, gates) - {x}) | set(qs)
        case NewChan(x, p):
            inner = dict(env, **{x: TChan()})
            return _check_term(p, inner, gates) - {x}
        case NewQbit(x, p):
            inner = dict(env, **{x: TQbit()})
            return _check_term(p, inner, gates) - {x}
    raise TypeError(f"not a CQP- term: {t!r}")


def typecheck_surface(env: Mapping[str, CqpType], term: Term, gates=GATES) -> None:
    _check_term(term, dict(env), gates)


def typecheck_internal(config: CqpConfig, gates=GATES, extra: Mapping[str, CqpType] | None = None) -> None:
    """Runtime configurations: register names are the qubit assumptions,
    the channel list supplies the channel assumptions."""
    if isinstance(config, CqpPure):
        names, term = config.sigma.qubit_names, config.term
        env: dict[str, CqpType] = {}
    else:
        names, term = config.sigma_names, config.term
        env = {config.var: TInt()}
    env.update({q: TQbit() for q in names})
    env.update({c: TChan() for c in config.phi if not _is_int_literal(c)})
    if extra:
        env.update(extra)
    _check_term(term, env, gates)


# -- semantics -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CqpStep:
    rule: str
    next: CqpConfig
    gate: str | None = None
    perm: tuple[int, ...] | None = None
    branch: int | None = None
    channel: str | None = None

    def label(self) -> str:
        if self.rule == "R-Perm":
            return f"R-Perm{list(self.perm)}"
        if self.rule == "R-Prob":
            return f"R-Prob({self.branch})"
        if self.rule == "R-Trans":
            return f"R-Trans[{self.gate}]"
        if self.rule == "R-Comm":
            return f"R-Comm[{self.channel}]"
        return self.rule


def _redexes(t: Term, path=()) -> list[tuple[tuple[int, ...], Term]]:
    """Prefix positions reachable through parallel composition only."""
    if isinstance(t, Par):
        return _redexes(t.left, path + (0,)) + _redexes(t.right, path + (1,))
    if isinstance(t, (Nil, Success)):
        return []
    return [(path, t)]


def _replace(t: Term, path: tuple[int, ...], new: Term) -> Term:
    if not path:
        return new
    assert isinstance(t, Par)
    if path[0] == 0:
        return Par(_replace(t.left, path[1:], new), t.right)
    return Par(t.left, _replace(t.right, path[1:], new))


def fresh_channel(taken: Iterable[str]) -> str:
    taken = set(taken)
    k = 0
    while f"#ch{k}" in taken:
        k += 1
    return f"#ch{k}"


def fronting_perm(names: Sequence[str], operands: Sequence[str]) -> tuple[int, ...]:
    """Register order that moves ``operands`` (in order) to the front and
    keeps the remaining qubits in their current relative order."""
    front = [names.index(q) for q in operands]
    return tuple(front + [i for i in range(len(names)) if i not in front])


def apply_perm(config: CqpPure, perm: Sequence[int]) -> CqpStep:
    """An explicit permutation step; always a legal rule application."""
    sigma = quantum.permute_state(config.sigma, perm)
    return CqpStep("R-Perm", CqpPure(sigma, config.phi, config.term), perm=tuple(perm))


def restore_perm(config: CqpPure, target_names: Sequence[str]) -> CqpStep:
    perm = tuple(config.sigma.qubit_names.index(n) for n in target_names)
    return apply_perm(config, perm)


def enumerate_steps(
    config: CqpConfig,
    perm_mode: str = "on_demand",
    tol: float = DEFAULT_TOL,
    gates: Mapping[str, quantum.Unitary] = GATES,
) -> list[CqpStep]:
    """All derivable steps, modulo structural congruence on the term.

    With ``perm_mode="on_demand"`` the enumeration offers exactly the
    permutation steps that front the operands of an enabled gate or
    measurement whose operands do not already lead the register; with
    ``"explicit"`` no permutations are offered and callers use
    ``apply_perm``.
    """
    if isinstance(config, CqpDist):
        steps = []
        for j, (p, sigma_j) in enumerate(config.cases):
            if p > tol:
                term = config.case_term(j)
                steps.append(CqpStep("R-Prob", CqpPure(sigma_j, config.phi, term), branch=j))
        return steps

    sigma, phi, term = config.sigma, config.phi, config.term
    names = sigma.qubit_names
    steps: list[CqpStep] = []
    needed_orders: dict[tuple[str, ...], tuple[int, ...]] = {}
    outs: list[tuple[tuple[int, ...], Out]] = []
    ins: list[tuple[tuple[int, ...], In]] = []

    for path, node in _redexes(term):
        match node:
            case Out():
                outs.append((path, node))
            case In():
                ins.append((path, node))
            case NewChan(x, p):
                # keep the binder's name when it is fresh for the whole
                # configuration (the protocol idiom binds integer channels
                # that measurement results must match); otherwise draw from
                # the reserved #ch namespace
                taken = set(phi) | set(names) | free_names(term)
                c = x if x not in taken else fresh_channel(taken)
                nxt = CqpPure(sigma, phi + (c,), _replace(term, path, substitute(p, {x: c})))
                steps.append(CqpStep("R-New", nxt, channel=c))
            case NewQbit(x, p):
                qn = quantum.fresh_qubit_name(names)
                sigma2 = quantum.tensor(sigma, quantum.basis_state((qn,), 0))
                nxt = CqpPure(sigma2, phi, _replace(term, path, substitute(p, {x: qn})))
                steps.append(CqpStep("R-Qbit", nxt))
            case Trans(qs, g, p):
                if g not in gates:
                    raise UnknownName(f"unknown gate {g!r}")
                if qs == names[: len(qs)]:
                    sigma2 = quantum.apply_unitary_prefix(gates[g], sigma)
                    steps.append(CqpStep("R-Trans", CqpPure(sigma2, phi, _replace(term, path, p)), gate=g))
                elif perm_mode == "on_demand" and set(qs) <= set(names):
                    order = tuple(qs) + tuple(n for n in names if n not in qs)
                    needed_orders.setdefault(order, fronting_perm(names, qs))
            case Measure(qs, x, p):
                if qs == names[: len(qs)]:
                    outcomes = quantum.measure_prefix(sigma, len(qs), tol)
                    rest = free_names(_replace(term, path, Nil()))
                    var = x
                    cont = p
                    if var in rest:
                        var = fresh_name(x, rest | free_names(p))
                        cont = substitute(p, {x: var})
                    shared = _replace(term, path, cont)
                    dist = CqpDist(
                        tuple((o.probability, o.post_state) for o in outcomes),
                        var,
                        len(qs),
                        phi,
                        shared,
                    )
                    steps.append(CqpStep("R-Measure", dist))
                elif perm_mode == "on_demand" and set(qs) <= set(names):
                    order = tuple(qs) + tuple(n for n in names if n not in qs)
                    needed_orders.setdefault(order, fronting_perm(names, qs))

    for opath, onode in outs:
        for ipath, inode in ins:
            if onode.chan != inode.chan or opath == ipath:
                continue
            new = _replace(term, opath, onode.cont)
            new = _replace(new, ipath, substitute(inode.cont, {inode.var: onode.qubit}))
            steps.append(CqpStep("R-Comm", CqpPure(sigma, phi, new), channel=onode.chan))

    for order in sorted(needed_orders):
        steps.append(apply_perm(config, needed_orders[order]))
    return steps


@dataclass
class RunResult:
    steps: list[CqpStep]
    final: CqpConfig
    truncated: bool


def run(
    config: CqpConfig,
    seed: int = 0,
    script: Sequence[int] | None = None,
    max_steps: int = 64,
    perm_mode: str = "on_demand",
    tol: float = DEFAULT_TOL,
) -> RunResult:
    """Seeded execution.  ``script`` resolves distribution branches by
    outcome value; other nondeterminism is uniform in the seed.  After an
    on-demand fronting permutation the enabled operation fires next and the
    inverse permutation is replayed afterwards, so traces end in the
    original register order."""
    rng = random.Random(seed)
    pending = list(script or ())
    trace: list[CqpStep] = []
    cur = config
    restore_to: tuple[str, ...] | None = None
    after_perm = False
    while len(trace) < max_steps:
        if restore_to is not None and isinstance(cur, CqpPure) and not after_perm:
            if cur.sigma.qubit_names == restore_to:
                restore_to = None
            elif set(cur.sigma.qubit_names) == set(restore_to):
                step = restore_perm(cur, restore_to)
                trace.append(step)
                cur = step.next
                restore_to = None
                continue
            else:
                restore_to = None
        steps = enumerate_steps(cur, perm_mode=perm_mode, tol=tol)
        if not steps:
            return RunResult(trace, cur, False)
        chosen = None
        if isinstance(cur, CqpDist) and pending:
            j = pending.pop(0)
            for s in steps:
                if s.branch == j:
                    chosen = s
                    break
            if chosen is None:
                raise InvalidOutcome(f"scripted branch {j} has zero probability")
        elif after_perm:
            for s in steps:
                if s.rule in ("R-Trans", "R-Measure"):
                    chosen = s
                    break
        if chosen is None:
            chosen = steps[rng.randrange(len(steps))]
        if chosen.rule == "R-Perm" and restore_to is None:
            restore_to = cur.sigma.qubit_names
        after_perm = chosen.rule == "R-Perm"
        trace.append(chosen)
        cur = chosen.next
    return RunResult(trace, cur, bool(enumerate_steps(cur, perm_mode=perm_mode, tol=tol)))


# -- concrete syntax ------------------------------------------------------------

_TOKEN = re.compile(
    r"""(?P<ws>\s+|\#[^\n]*)
      | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
      | (?P<id>[A-Za-z_#][A-Za-z0-9_#']*)
      | (?P<op>:=|\*=|!=|[;,.|!?(){}\[\]<>*/+\-=\\])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        lexeme = m.group(0)
        if m.lastgroup != "ws":
            tokens.append(Token(m.lastgroup, lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


class TokenStream:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    def peek(self, ahead=0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.line, tok.column)
        return self.next()

    def accept(self, text: str) -> bool:
        if self.peek().text == text:
            self.next()
            return True
        return False

    def error(self, message: str):
        tok = self.peek()
        raise ParseError(message, tok.line, tok.column)

    def name(self) -> str:
        tok = self.peek()
        if tok.kind == "id" or (tok.kind == "num" and tok.text.isdigit()):
            return self.next().text
        self.error(f"expected a name, found {tok.text or 'end of input'!r}")


def parse_coefficient_product(ts: TokenStream) -> complex:
    """One coefficient: rationals, decimals, sqrt(...), i, products and
    quotients; parenthesised sums allowed."""

    def atom() -> complex:
        tok = ts.peek()
        if ts.accept("("):
            value = parse_coefficient_sum(ts)
            ts.expect(")")
            return value
        if tok.text == "sqrt":
            ts.next()
            ts.expect("(")
            value = parse_coefficient_sum(ts)
            ts.expect(")")
            return complex(np.sqrt(value))
        if tok.text == "i":
            ts.next()
            return 1j
        if tok.kind == "num":
            ts.next()
            return complex(float(tok.text))
        ts.error(f"expected a coefficient, found {tok.text!r}")

    value = atom()
    while ts.peek().text in ("*", "/"):
        op = ts.next().text
        rhs = atom()
        value = value * rhs if op == "*" else value / rhs
    return value


def parse_coefficient_sum(ts: TokenStream) -> complex:
    def signed() -> complex:
        sign = 1.0
        while ts.peek().text in ("+", "-"):
            if ts.next().text == "-":
                sign = -sign
        return sign * parse_coefficient_product(ts)

    value = signed()
    while ts.peek().text in ("+", "-"):
        value = value + signed()
    return value


def parse_amp_expr(ts: TokenStream, num_qubits: int) -> np.ndarray:
    """Sums of coef|bits> with coefficients over rationals, sqrt(k) and i."""
    amps = np.zeros(2 ** num_qubits, dtype=complex)

    def ket_term(sign: float):
        coef = complex(sign)
        if ts.peek().text != "|":
            value = parse_coefficient_product(ts)
            ts.accept("*")
            coef *= value
        tok = ts.expect("|")
        bits = ""
        if ts.peek().text != ">":
            bt = ts.next()
            bits = bt.text
            if not re.fullmatch(r"[01]*", bits):
                raise ParseError(f"kets contain only 0/1 bits, found {bits!r}", bt.line, bt.column)
        ts.expect(">")
        if len(bits) != num_qubits:
            raise ParseError(
                f"ket |{bits}> has {len(bits)} bits but the register has {num_qubits} qubits",
                tok.line,
                tok.column,
            )
        index = int(bits, 2) if bits else 0
        amps[index] += coef

    sign = 1.0
    if ts.accept("-"):
        sign = -1.0
    ket_term(sign)
    while ts.peek().text in ("+", "-"):
        sign = 1.0 if ts.next().text == "+" else -1.0
        ket_term(sign)
    return amps


def _parse_cqp_prefix(ts: TokenStream) -> Term:
    tok = ts.peek()
    if tok.text == "0" and ts.peek(1).text not in ("!", "?"):
        ts.next()
        return Nil()
    if tok.text == "ok":
        ts.next()
        return Success()
    if tok.text == "{":
        ts.next()
        qubits = [ts.name()]
        while ts.accept(","):
            qubits.append(ts.name())
        ts.expect("*=")
        gate = ts.name()
        ts.expect("}")
        ts.expect(".")
        return Trans(tuple(qubits), gate, _parse_cqp_prefix(ts))
    if tok.text == "(":
        nxt = ts.peek(1)
        if nxt.text == "new":
            ts.next(), ts.next()
            var = ts.name()
            ts.expect(")")
            return NewChan(var, _parse_cqp_prefix(ts))
        if nxt.text == "qbit":
            ts.next(), ts.next()
            var = ts.name()
            ts.expect(")")
            return NewQbit(var, _parse_cqp_prefix(ts))
        if ts.peek(2).text == ":=":
            ts.next()
            var = ts.name()
            ts.expect(":=")
            ts.expect("measure")
            qubits = [ts.name()]
            while ts.accept(","):
                qubits.append(ts.name())
            ts.expect(")")
            ts.expect(".")
            if not qubits:
                ts.error("measurement needs at least one qubit")
            return Measure(tuple(qubits), var, _parse_cqp_prefix(ts))
        ts.next()
        inner = parse_cqp_term(ts)
        ts.expect(")")
        return inner
    if tok.kind in ("id", "num"):
        chan = ts.name()
        if ts.accept("?"):
            ts.expect("[")
            var = ts.name()
            ts.expect("]")
            ts.expect(".")
            return In(chan, var, _parse_cqp_prefix(ts))
        if ts.accept("!"):
            ts.expect("[")
            payload = ts.name()
            ts.expect("]")
            ts.expect(".")
            return Out(chan, payload, _parse_cqp_prefix(ts))
        ts.error(f"name {chan!r} must be followed by ! or ?")
    ts.error(f"unexpected {tok.text or 'end of input'!r} in process term")


def parse_cqp_term(ts: TokenStream) -> Term:
    term = _parse_cqp_prefix(ts)
    while ts.accept("|"):
        term = Par(term, _parse_cqp_prefix(ts))
    return term


def parse_cqp(text: str, tol: float = DEFAULT_TOL) -> CqpPure:
    """Parse the .cqp format: qubit/state/channel header, then the process."""
    ts = TokenStream(text)
    ts.expect("qubits")
    qubits: list[str] = []
    if ts.peek().text != ";":
        qubits.append(ts.name())
        while ts.accept(","):
            qubits.append(ts.name())
    ts.expect(";")
    ts.expect("state")
    amps = parse_amp_expr(ts, len(qubits))
    norm2 = float(np.sum(np.abs(amps) ** 2))
    if abs(norm2 - 1.0) > 1e-6:
        ts.error(f"state amplitudes are not normalised (|psi|^2 = {norm2:.9f})")
    ts.expect(";")
    ts.expect("channels")
    channels: list[str] = []
    if ts.peek().text != ";":
        channels.append(ts.name())
        while ts.accept(","):
            channels.append(ts.name())
    ts.expect(";")
    ts.expect("process")
    term = parse_cqp_term(ts)
    tok = ts.peek()
    if tok.kind != "eof":
        ts.error(f"unexpected {tok.text!r} after process term")
    sigma = StateVector(tuple(qubits), amps)
    config = CqpPure(sigma, tuple(channels), term)
    missing = {
        n for n in free_names(term)
        if n not in qubits and n not in channels and not _is_int_literal(n)
    }
    if missing:
        raise ParseError(f"undeclared free names {sorted(missing)}", tok.line, tok.column)
    return config


# -- pretty printing -------------------------------------------------------------

def format_term(t: Term) -> str:
    match t:
        case Nil():
            return "0"
        case Success():
            return "ok"
        case Par(l, r):
            right = format_term(r)
            if isinstance(r, Par):
                right = f"({right})"
            return f"{format_term(l)} | {right}"
        case In(c, x, p):
            return f"{c}?[{x}].{_fmt_cont(p)}"
        case Out(c, q, p):
            return f"{c}![{q}].{_fmt_cont(p)}"
        case Trans(qs, g, p):
            return f"{{{','.join(qs)} *= {g}}}.{_fmt_cont(p)}"
        case Measure(qs, x, p):
            return f"({x} := measure {','.join(qs)}).{_fmt_cont(p)}"
        case NewChan(x, p):
            return f"(new {x}){_fmt_cont(p)}"
        case NewQbit(x, p):
            return f"(qbit {x}){_fmt_cont(p)}"
    raise TypeError(f"not a CQP- term: {t!r}")


def _fmt_cont(t: Term) -> str:
    if isinstance(t, Par):
        return f"({format_term(t)})"
    return format_term(t)


def format_amps(sigma: StateVector, digits: int = 6) -> str:
    parts = []
    n = sigma.num_qubits
    for idx, amp in enumerate(sigma.amps):
        if abs(amp) <= 10 ** (-digits):
            continue
        bits = format(idx, f"0{n}b") if n else ""
        if abs(amp.imag) <= 10 ** (-digits):
            real = amp.real
            if abs(real - 1.0) <= 10 ** (-digits):
                coef = ""
            elif abs(real + 1.0) <= 10 ** (-digits):
                coef = "-"
            else:
                coef = f"{real:.6g}"
        else:
            coef = f"({amp.real:.6g}{amp.imag:+.6g}i)"
        parts.append(f"{coef}|{bits}>")
    return " + ".join(parts).replace("+ -", "- ") or "0"


def format_config(config: CqpConfig) -> str:
    if isinstance(config, CqpPure):
        names = ",".join(config.sigma.qubit_names)
        return f"({names} = {format_amps(config.sigma)}; {','.join(config.phi) or 'empty'}; {format_term(config.term)})"
    rows = []
    for i, (p, s) in enumerate(config.cases):
        rows.append(f"{p:.4g} * ({','.join(s.qubit_names)} = {format_amps(s)}; {format_term(config.case_term(i))})")
    return " (+) ".join(rows)
