"""The qCCS calculus: terms over density-matrix states, well-formedness,
and the labelled + reduction semantics.

Terms apply super-operators to named qubit sets, so no permutation rule is
needed; states are partial density operators.  The no-cloning conditions
are syntactic: an output may not keep its payload free in the continuation
(checked literally), and parallel components may not both actively demand
a qubit (input-guarded uses do not count, mirroring the source type
system; the translated teleportation relies on this).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from . import quantum
from .errors import (
    ArityMismatch,
    NoCloningViolation,
    ParseError,
    UnboundQubit,
    UnknownName,
    WellFormednessError,
    ZeroBranch,
)
from .cqp import (
    TokenStream,
    fresh_name,
    parse_amp_expr,
    parse_coefficient_sum,
)
from .quantum import DEFAULT_TOL, GATES, DensityMatrix, SuperOperator, fresh_qubit_name as _fresh_register_name

RESERVED_OPS = {"M", "E", "new", "tau", "nil", "ok", "if", "then", "true", "false", "tr"}


# -- operator references -------------------------------------------------------

@dataclass(frozen=True)
class GateOp:
    gate: str


@dataclass(frozen=True)
class MeasureOp:
    pass


@dataclass(frozen=True)
class ProjectOp:
    index: int


@dataclass(frozen=True)
class NewOp:
    pass


@dataclass(frozen=True)
class CustomOp:
    name: str


OpRef = GateOp | MeasureOp | ProjectOp | NewOp | CustomOp


def resolve_op(op: OpRef, arity: int, table: Mapping[str, SuperOperator]) -> SuperOperator:
    match op:
        case GateOp(g):
            if g in table:
                return table[g]
            if g in GATES:
                return SuperOperator.from_unitary(GATES[g])
            raise UnknownName(f"unknown operator {g!r}")
        case MeasureOp():
            return SuperOperator.measure_unknown(arity)
        case ProjectOp(i):
            return SuperOperator.measure_expected(i, arity)
        case NewOp():
            return SuperOperator.new_qubit()
        case CustomOp(name):
            if name not in table:
                raise UnknownName(f"unknown operator {name!r}")
            return table[name]
    raise TypeError(f"not an operator reference: {op!r}")


def format_op(op: OpRef, qubits: Sequence[str]) -> str:
    args = ", ".join(qubits)
    match op:
        case GateOp(g):
            return f"{g}[{args}]"
        case MeasureOp():
            return f"M[{args}]"
        case ProjectOp(i):
            return f"E{{{i}}}[{args}]"
        case NewOp():
            return "new"
        case CustomOp(name):
            return f"{name}[{args}]"
    raise TypeError(f"not an operator reference: {op!r}")


# -- boolean guards --------------------------------------------------------------

@dataclass(frozen=True)
class BTrue:
    pass


@dataclass(frozen=True)
class BFalse:
    pass


@dataclass(frozen=True)
class TraceNonzero:
    op: OpRef
    qubits: tuple[str, ...]


@dataclass(frozen=True)
class BNot:
    inner: "BoolExpr"


@dataclass(frozen=True)
class BAnd:
    left: "BoolExpr"
    right: "BoolExpr"


BoolExpr = BTrue | BFalse | TraceNonzero | BNot | BAnd


def eval_bool(b: BoolExpr, rho: DensityMatrix, table=None, tol: float = DEFAULT_TOL) -> bool:
    table = table or {}
    match b:
        case BTrue():
            return True
        case BFalse():
            return False
        case BNot(inner):
            return not eval_bool(inner, rho, table, tol)
        case BAnd(l, r):
            return eval_bool(l, rho, table, tol) and eval_bool(r, rho, table, tol)
        case TraceNonzero(op, qubits):
            resolved = resolve_op(op, len(qubits), table)
            # raw application: the guard inspects the unnormalised branch
            return abs(quantum.raw_trace_after(resolved, qubits, rho)) > tol
    raise TypeError(f"not a boolean guard: {b!r}")


# -- terms -----------------------------------------------------------------------

@dataclass(frozen=True)
class Nil:
    pass


@dataclass(frozen=True)
class Success:
    pass


@dataclass(frozen=True)
class Tau:
    cont: "Term"


@dataclass(frozen=True)
class SuperOp:
    op: OpRef
    qubits: tuple[str, ...]
    cont: "Term"


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
class Choice:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Par:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Restrict:
    cont: "Term"
    chans: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "chans", tuple(self.chans))


@dataclass(frozen=True)
class IfThen:
    cond: BoolExpr
    cont: "Term"


@dataclass(frozen=True)
class ConstCall:
    name: str
    args: tuple[str, ...]


Term = Nil | Success | Tau | SuperOp | In | Out | Choice | Par | Restrict | IfThen | ConstCall


def choice_chain(branches: Sequence[Term]) -> Term:
    out = branches[0]
    for b in branches[1:]:
        out = Choice(out, b)
    return out


@dataclass(frozen=True, eq=False)
class QccsConfig:
    term: Term
    rho: DensityMatrix


ProcessDefs = dict[str, tuple[tuple[str, ...], Term]]


# -- free names -------------------------------------------------------------------

def _bool_qubits(b: BoolExpr) -> frozenset[str]:
    match b:
        case TraceNonzero(_, qubits):
            return frozenset(qubits)
        case BNot(inner):
            return _bool_qubits(inner)
        case BAnd(l, r):
            return _bool_qubits(l) | _bool_qubits(r)
        case _:
            return frozenset()


@lru_cache(maxsize=65536)
def free_qubits(t: Term, active_only: bool = False) -> frozenset[str]:
    """Free qubits; with ``active_only`` input-guarded continuations are
    ignored (the demand notion used by the parallel no-cloning condition)."""
    match t:
        case Nil() | Success():
            return frozenset()
        case Tau(p):
            return free_qubits(p, active_only)
        case SuperOp(_, qs, p):
            return frozenset(qs) | free_qubits(p, active_only)
        case In(_, x, p):
            if active_only:
                return frozenset()
            return free_qubits(p, active_only) - {x}
        case Out(_, q, p):
            return frozenset({q}) | free_qubits(p, active_only)
        case Choice(l, r) | Par(l, r):
            return free_qubits(l, active_only) | free_qubits(r, active_only)
        case Restrict(p, _):
            return free_qubits(p, active_only)
        case IfThen(b, p):
            return _bool_qubits(b) | free_qubits(p, active_only)
        case ConstCall(_, args):
            return frozenset(args)
    raise TypeError(f"not a qCCS term: {t!r}")


@lru_cache(maxsize=65536)
def free_channels(t: Term) -> frozenset[str]:
    match t:
        case Nil() | Success() | ConstCall():
            return frozenset()
        case Tau(p) | SuperOp(_, _, p) | IfThen(_, p):
            return free_channels(p)
        case In(c, _, p) | Out(c, _, p):
            return frozenset({c}) | free_channels(p)
        case Choice(l, r) | Par(l, r):
            return free_channels(l) | free_channels(r)
        case Restrict(p, chans):
            return free_channels(p) - set(chans)
    raise TypeError(f"not a qCCS term: {t!r}")


# -- substitution -----------------------------------------------------------------

def _subst_bool(b: BoolExpr, mapping: Mapping[str, str]) -> BoolExpr:
    match b:
        case TraceNonzero(op, qubits):
            return TraceNonzero(op, tuple(mapping.get(q, q) for q in qubits))
        case BNot(inner):
            return BNot(_subst_bool(inner, mapping))
        case BAnd(l, r):
            return BAnd(_subst_bool(l, mapping), _subst_bool(r, mapping))
        case _:
            return b


def substitute(t: Term, mapping: Mapping[str, str]) -> Term:
    """Simultaneous capture-avoiding substitution on channels and qubits."""
    mapping = {k: v for k, v in mapping.items() if k != v}
    if not mapping:
        return t

    def sub(name):
        return mapping.get(name, name)

    match t:
        case Nil() | Success():
            return t
        case Tau(p):
            return Tau(substitute(p, mapping))
        case SuperOp(op, qs, p):
            return SuperOp(op, tuple(sub(q) for q in qs), substitute(p, mapping))
        case In(c, x, p):
            scoped = {k: v for k, v in mapping.items() if k != x}
            if x in scoped.values():
                # possible capture: alpha-rename the binder first
                x2 = fresh_name(x, set(scoped) | set(scoped.values()) | _free_all(p))
                p = substitute(p, {x: x2})
                x = x2
            return In(sub(c), x, substitute(p, scoped))
        case Out(c, q, p):
            return Out(sub(c), sub(q), substitute(p, mapping))
        case Choice(l, r):
            return Choice(substitute(l, mapping), substitute(r, mapping))
        case Par(l, r):
            return Par(substitute(l, mapping), substitute(r, mapping))
        case Restrict(p, chans):
            scoped = {k: v for k, v in mapping.items() if k not in chans}
            values = set(scoped.values())
            renames = {}
            if values & set(chans):
                avoid = set(chans) | values | _free_all(p)
                for c in chans:
                    if c in values:
                        renames[c] = fresh_name(c, avoid)
                        avoid.add(renames[c])
            if renames:
                p = substitute(p, renames)
                chans = tuple(renames.get(c, c) for c in chans)
            return Restrict(substitute(p, scoped), chans)
        case IfThen(b, p):
            return IfThen(_subst_bool(b, mapping), substitute(p, mapping))
        case ConstCall(name, args):
            return ConstCall(name, tuple(sub(a) for a in args))
    raise TypeError(f"not a qCCS term: {t!r}")


def _free_all(t: Term) -> frozenset[str]:
    return free_qubits(t) | free_channels(t)


def subst_qubit(t: Term, gamma: Mapping[str, str]) -> Term:
    values = list(gamma.values())
    if len(set(values)) != len(values):
        raise NoCloningViolation(f"non-injective qubit substitution {dict(gamma)}")
    return substitute(t, gamma)


# -- well-formedness --------------------------------------------------------------

def check_wellformed(
    defs: ProcessDefs,
    config: QccsConfig,
    table: Mapping[str, SuperOperator] | None = None,
) -> None:
    """Cond1 (no output keeps its payload), Cond2 (parallel components
    demand disjoint qubits), closed constants, resolvable operators, and
    every free qubit bound by the state."""
    table = table or {}

    for name, (params, body) in defs.items():
        if len(set(params)) != len(params):
            raise WellFormednessError("Defs", name, f"repeated parameters {params}")
        loose = free_qubits(body) - set(params)
        if loose:
            raise WellFormednessError("Defs", name, f"body uses qubits {sorted(loose)} outside {params}")

    def visit(t: Term, path: str, bound: frozenset[str], register: tuple[str, ...]):
        match t:
            case Nil() | Success():
                return
            case Tau(p):
                visit(p, path + ".tau", bound, register)
            case SuperOp(op, qs, p):
                resolve_op(op, len(qs), table)
                for q in qs:
                    _check_qubit(q, bound, path)
                if len(set(qs)) != len(qs):
                    raise WellFormednessError("Cond2", path, f"operator targets {qs} repeat a qubit")
                if isinstance(op, NewOp):
                    # the extension operator appends a deterministically
                    # named qubit that the continuation may reference
                    fresh = _fresh_register_name(register)
                    visit(p, path + ".op", bound | {fresh}, register + (fresh,))
                else:
                    visit(p, path + ".op", bound, register)
            case In(c, x, p):
                visit(p, path + ".in", bound | {x}, register)
            case Out(c, q, p):
                _check_qubit(q, bound, path)
                if q in free_qubits(p):
                    raise WellFormednessError(
                        "Cond1", path, f"output keeps sent qubit {q!r} free in its continuation"
                    )
                visit(p, path + ".out", bound, register)
            case Choice(l, r):
                visit(l, path + ".choice.left", bound, register)
                visit(r, path + ".choice.right", bound, register)
            case Par(l, r):
                shared = free_qubits(l, active_only=True) & free_qubits(r, active_only=True)
                if shared:
                    raise WellFormednessError(
                        "Cond2", path, f"parallel components both demand {sorted(shared)}"
                    )
                visit(l, path + ".par.left", bound, register)
                visit(r, path + ".par.right", bound, register)
            case Restrict(p, _):
                visit(p, path + ".res", bound, register)
            case IfThen(b, p):
                for q in sorted(_bool_qubits(b)):
                    _check_qubit(q, bound, path)
                match b:
                    case TraceNonzero(op, qs):
                        resolve_op(op, len(qs), table)
                    case _:
                        pass
                visit(p, path + ".if", bound, register)
            case ConstCall(name, args):
                if name not in defs:
                    raise UnknownName(f"unresolved process constant {name!r} at {path}")
                params, _ = defs[name]
                if len(params) != len(args):
                    raise ArityMismatch(f"{name} takes {len(params)} qubits, got {len(args)} at {path}")
                if len(set(args)) != len(args):
                    raise NoCloningViolation(f"constant call {name}{args} repeats a qubit at {path}")
                for q in args:
                    _check_qubit(q, bound, path)
            case _:
                raise TypeError(f"not a qCCS term: {t!r}")

    def _check_qubit(q: str, bound: frozenset[str], path: str):
        if q not in bound:
            raise UnboundQubit(f"qubit {q!r} at {path} is not in the state or received")

    visit(config.term, "process", frozenset(config.rho.qubit_names), config.rho.qubit_names)


# -- semantics ---------------------------------------------------------------------

@dataclass(frozen=True)
class LTau:
    pass


@dataclass(frozen=True)
class LIn:
    chan: str
    qubit: str


@dataclass(frozen=True)
class LOut:
    chan: str
    qubit: str


Label = LTau | LIn | LOut


def cn(label: Label) -> frozenset[str]:
    """The (possibly empty) set of channels in a label."""
    match label:
        case LTau():
            return frozenset()
        case LIn(c, _) | LOut(c, _):
            return frozenset({c})
    raise TypeError(f"not a label: {label!r}")


def format_label(label: Label) -> str:
    match label:
        case LTau():
            return "tau"
        case LIn(c, q):
            return f"{c}?{q}"
        case LOut(c, q):
            return f"{c}!{q}"
    raise TypeError(f"not a label: {label!r}")


@dataclass(frozen=True, eq=False)
class QccsStep:
    label: Label
    next: QccsConfig
    reduces_choice: bool = False


def _term_steps(t, rho, defs, table, tol, unfolding):
    """All labelled transitions of <t, rho> as (label, term', rho', choice-flag)."""
    match t:
        case Nil() | Success():
            return []
        case Tau(p):
            return [(LTau(), p, rho, False)]
        case SuperOp(op, qs, p):
            resolved = resolve_op(op, len(qs), table)
            try:
                rho2 = quantum.superop_apply(resolved, qs, rho, tol)
            except ZeroBranch:
                return []  # an unguarded zero-probability branch cannot fire
            return [(LTau(), p, rho2, False)]
        case In(c, x, p):
            blocked = free_qubits(t)
            out = []
            for q in rho.qubit_names:
                if q not in blocked:
                    out.append((LIn(c, q), substitute(p, {x: q}), rho, False))
            return out
        case Out(c, q, p):
            return [(LOut(c, q), p, rho, False)]
        case Choice(l, r):
            inner = _term_steps(l, rho, defs, table, tol, unfolding)
            inner += _term_steps(r, rho, defs, table, tol, unfolding)
            return [(lab, t2, r2, True) for lab, t2, r2, _ in inner]
        case Par(l, r):
            lefts = _term_steps(l, rho, defs, table, tol, unfolding)
            rights = _term_steps(r, rho, defs, table, tol, unfolding)
            out = []
            for lab, t2, r2, ch in lefts:
                if isinstance(lab, LIn) and lab.qubit in free_qubits(r):
                    continue
                out.append((lab, Par(t2, r), r2, ch))
            for lab, t2, r2, ch in rights:
                if isinstance(lab, LIn) and lab.qubit in free_qubits(l):
                    continue
                out.append((lab, Par(l, t2), r2, ch))
            for lab1, t1, _, ch1 in lefts:
                for lab2, t2, _, ch2 in rights:
                    if isinstance(lab1, LIn) and isinstance(lab2, LOut):
                        if (lab1.chan, lab1.qubit) == (lab2.chan, lab2.qubit):
                            out.append((LTau(), Par(t1, t2), rho, ch1 or ch2))
                    if isinstance(lab1, LOut) and isinstance(lab2, LIn):
                        if (lab1.chan, lab1.qubit) == (lab2.chan, lab2.qubit):
                            out.append((LTau(), Par(t1, t2), rho, ch1 or ch2))
            return out
        case Restrict(p, chans):
            scope = set(chans)
            out = []
            for lab, t2, r2, ch in _term_steps(p, rho, defs, table, tol, unfolding):
                if cn(lab) & scope:
                    continue
                out.append((lab, Restrict(t2, chans), r2, ch))
            return out
        case IfThen(b, p):
            if not eval_bool(b, rho, table, tol):
                return []
            return _term_steps(p, rho, defs, table, tol, unfolding)
        case ConstCall(name, args):
            if name in unfolding:
                return []  # unguarded recursion has no actions
            if name not in defs:
                raise UnknownName(f"unresolved process constant {name!r}")
            params, body = defs[name]
            if len(params) != len(args):
                raise ArityMismatch(f"{name} takes {len(params)} qubits, got {len(args)}")
            unfolded = substitute(body, dict(zip(params, args)))
            return _term_steps(unfolded, rho, defs, table, tol, unfolding | {name})
    raise TypeError(f"not a qCCS term: {t!r}")


def lts_steps(
    config: QccsConfig,
    defs: ProcessDefs | None = None,
    table: Mapping[str, SuperOperator] | None = None,
    tol: float = DEFAULT_TOL,
) -> list[QccsStep]:
    raw = _term_steps(config.term, config.rho, defs or {}, table or {}, tol, frozenset())
    return [QccsStep(lab, QccsConfig(t2, r2), ch) for lab, t2, r2, ch in raw]


def reduce_steps(
    config: QccsConfig,
    defs: ProcessDefs | None = None,
    table: Mapping[str, SuperOperator] | None = None,
    tol: float = DEFAULT_TOL,
) -> list[QccsStep]:
    """The tau-labelled subset: the reduction semantics."""
    return [s for s in lts_steps(config, defs, table, tol) if isinstance(s.label, LTau)]


def has_success_barb(config: QccsConfig, defs: ProcessDefs | None = None) -> bool:
    """Unguarded success: reachable through parallel, restriction and bare
    choice branches; prefixes and unresolved conditionals guard."""
    defs = defs or {}

    def walk(t: Term, unfolding: frozenset) -> bool:
        match t:
            case Success():
                return True
            case Par(l, r) | Choice(l, r):
                return walk(l, unfolding) or walk(r, unfolding)
            case Restrict(p, _):
                return walk(p, unfolding)
            case ConstCall(name, args):
                if name in unfolding or name not in defs:
                    return False
                params, body = defs[name]
                return walk(substitute(body, dict(zip(params, args))), unfolding | {name})
            case _:
                return False

    return walk(config.term, frozenset())


# -- structural congruence ----------------------------------------------------------

def _bool_sig(b: BoolExpr, name) -> str:
    match b:
        case BTrue():
            return "tt"
        case BFalse():
            return "ff"
        case TraceNonzero(op, qs):
            return f"tr[{format_op(op, [name(q) for q in qs])}]"
        case BNot(inner):
            return f"!{_bool_sig(inner, name)}"
        case BAnd(l, r):
            return f"({_bool_sig(l, name)}&{_bool_sig(r, name)})"
    raise TypeError(f"not a boolean guard: {b!r}")


def _alpha_sig(t: Term, env: dict, depth: int) -> str:
    def name(n):
        return f"b{env[n]}" if n in env else f"f:{n}"

    match t:
        case Nil():
            return "0"
        case Success():
            return "ok"
        case Tau(p):
            return f"tau[{_alpha_sig(p, env, depth)}]"
        case SuperOp(op, qs, p):
            return f"so[{format_op(op, [name(q) for q in qs])};{_alpha_sig(p, env, depth)}]"
        case In(c, x, p):
            e = dict(env, **{x: depth})
            return f"in[{name(c)};{_alpha_sig(p, e, depth + 1)}]"
        case Out(c, q, p):
            return f"out[{name(c)},{name(q)};{_alpha_sig(p, env, depth)}]"
        case Choice(l, r):
            return f"({_alpha_sig(l, env, depth)}+{_alpha_sig(r, env, depth)})"
        case Par(l, r):
            return f"({_alpha_sig(l, env, depth)}|{_alpha_sig(r, env, depth)})"
        case Restrict(p, chans):
            e = dict(env)
            for i, c in enumerate(sorted(chans)):
                e[c] = depth + i
            return f"res[{len(chans)};{_alpha_sig(p, e, depth + len(chans))}]"
        case IfThen(b, p):
            return f"if[{_bool_sig(b, name)};{_alpha_sig(p, env, depth)}]"
        case ConstCall(cname, args):
            return f"call[{cname};{','.join(name(a) for a in args)}]"
    raise TypeError(f"not a qCCS term: {t!r}")


def _flatten_par(t: Term) -> list[Term]:
    if isinstance(t, Par):
        return _flatten_par(t.left) + _flatten_par(t.right)
    if isinstance(t, Nil):
        return []
    return [t]


def _par_nf(children: list[Term], all_free: frozenset[str]) -> Term:
    """Normal form of a parallel composition: units dropped, restrictions on
    components extruded to the front (renaming their bound channels when
    they would clash), components sorted."""
    comps: list[Term] = []
    bound: list[str] = []
    work = list(children)
    while work:
        c = _sorted_nf(work.pop(0))
        if isinstance(c, Nil):
            continue
        if isinstance(c, Par):
            work = [c.left, c.right] + work
            continue
        if isinstance(c, Restrict):
            renames = {}
            avoid = set(all_free) | set(bound) | set(free_channels(c.cont))
            for name in c.chans:
                if name in all_free or name in bound:
                    fresh = fresh_name(name, avoid)
                    renames[name] = fresh
                    avoid.add(fresh)
            body = substitute(c.cont, renames) if renames else c.cont
            bound.extend(renames.get(n, n) for n in c.chans)
            work.insert(0, body)
            continue
        comps.append(c)
    if not comps:
        return Nil()
    comps.sort(key=lambda p: _alpha_sig(p, {}, 0))
    out = comps[0]
    for p in comps[1:]:
        out = Par(out, p)
    live = set(bound) & free_channels(out)
    if live:
        out = Restrict(out, tuple(sorted(live)))
    return out


def _sorted_nf(t: Term) -> Term:
    match t:
        case Par():
            return _par_nf(_flatten_par(t), free_channels(t))
        case Tau(p):
            return Tau(_sorted_nf(p))
        case SuperOp(op, qs, p):
            return SuperOp(op, qs, _sorted_nf(p))
        case In(c, x, p):
            return In(c, x, _sorted_nf(p))
        case Out(c, q, p):
            return Out(c, q, _sorted_nf(p))
        case Choice(l, r):
            return Choice(_sorted_nf(l), _sorted_nf(r))
        case Restrict(p, chans):
            inner = _sorted_nf(p)
            # directly nested restrictions merge; channels that do not occur
            # free in the body are transparent
            while isinstance(inner, Restrict):
                chans = tuple(sorted(set(chans) | set(inner.chans)))
                inner = inner.cont
            live = set(chans) & free_channels(inner)
            if not live:
                return inner
            return Restrict(inner, tuple(sorted(live)))
        case IfThen(b, p):
            return IfThen(b, _sorted_nf(p))
        case _:
            return t


def _canon_binders(t: Term, counter: list[int]) -> Term:
    match t:
        case Nil() | Success() | ConstCall():
            return t
        case Tau(p):
            return Tau(_canon_binders(p, counter))
        case SuperOp(op, qs, p):
            return SuperOp(op, qs, _canon_binders(p, counter))
        case In(c, x, p):
            fresh = f"%v{counter[0]}"
            counter[0] += 1
            return In(c, fresh, _canon_binders(substitute(p, {x: fresh}), counter))
        case Out(c, q, p):
            return Out(c, q, _canon_binders(p, counter))
        case Choice(l, r):
            return Choice(_canon_binders(l, counter), _canon_binders(r, counter))
        case Par(l, r):
            return Par(_canon_binders(l, counter), _canon_binders(r, counter))
        case Restrict(p, chans):
            renames = {}
            fresh = []
            for c in sorted(chans):
                nc = f"%c{counter[0]}"
                counter[0] += 1
                renames[c] = nc
                fresh.append(nc)
            return Restrict(_canon_binders(substitute(p, renames), counter), tuple(fresh))
        case IfThen(b, p):
            return IfThen(b, _canon_binders(p, counter))
    raise TypeError(f"not a qCCS term: {t!r}")


def canonical_term(t: Term) -> Term:
    return _canon_binders(_sorted_nf(t), [0])


def _register_renamed(config: QccsConfig) -> Term:
    cached = getattr(config, "_canon", None)
    if cached is None:
        mapping = {n: f"%r{i}" for i, n in enumerate(config.rho.qubit_names)}
        cached = canonical_term(substitute(config.term, mapping))
        object.__setattr__(config, "_canon", cached)
    return cached


def congruent(c1: QccsConfig, c2: QccsConfig, tol: float = DEFAULT_TOL) -> bool:
    """Parallel laws, alpha conversion (binders and register names), nested
    restriction sets merged; states compared entrywise."""
    if c1.rho.num_qubits != c2.rho.num_qubits:
        return False
    if not np.allclose(c1.rho.entries, c2.rho.entries, rtol=0.0, atol=tol):
        return False
    return _register_renamed(c1) == _register_renamed(c2)


def congruent_terms(t1: Term, t2: Term) -> bool:
    return canonical_term(t1) == canonical_term(t2)


def _round_entries(arr, digits=9):
    r = np.round(arr.real, digits) + 0.0
    i = np.round(arr.imag, digits) + 0.0
    return ",".join(f"{a:.9f}{b:+.9f}j" for a, b in zip(r.ravel(), i.ravel()))


def canonical_key(config: QccsConfig) -> str:
    cached = getattr(config, "_key", None)
    if cached is None:
        cached = f"Q{config.rho.num_qubits}|{_round_entries(config.rho.entries)}|{_register_renamed(config)!r}"
        object.__setattr__(config, "_key", cached)
    return cached


# -- concrete syntax ------------------------------------------------------------------

def _parse_names(ts: TokenStream) -> list[str]:
    names = [ts.name()]
    while ts.accept(","):
        names.append(ts.name())
    return names


def _parse_opref(ts: TokenStream) -> tuple[OpRef, tuple[str, ...]]:
    tok = ts.peek()
    if tok.text == "E" and ts.peek(1).text == "{":
        ts.next()
        ts.expect("{")
        idx = ts.next()
        if idx.kind != "num" or not idx.text.isdigit():
            ts.error("expected an outcome index")
        ts.expect("}")
        qubits = _parse_bracket_args(ts)
        return ProjectOp(int(idx.text)), qubits
    name = ts.name()
    qubits = _parse_bracket_args(ts)
    if name == "M":
        return MeasureOp(), qubits
    if name in GATES:
        return GateOp(name), qubits
    return CustomOp(name), qubits


def _parse_bracket_args(ts: TokenStream) -> tuple[str, ...]:
    ts.expect("[")
    args: list[str] = []
    if ts.peek().text != "]":
        args = _parse_names(ts)
    ts.expect("]")
    return tuple(args)


def _parse_bool(ts: TokenStream) -> BoolExpr:
    if ts.accept("true"):
        return BTrue()
    if ts.accept("false"):
        return BFalse()
    ts.expect("tr")
    ts.expect("(")
    op, qubits = _parse_opref(ts)
    ts.expect(")")
    ts.expect("!=")
    zero = ts.next()
    if zero.text != "0":
        ts.error("guards compare the trace against 0")
    return TraceNonzero(op, qubits)


def _parse_atom(ts: TokenStream) -> Term:
    tok = ts.peek()
    if ts.accept("nil"):
        return Nil()
    if ts.accept("ok"):
        return Success()
    if ts.accept("tau"):
        ts.expect(".")
        return Tau(_parse_item(ts))
    if tok.text == "new":
        ts.next()
        ts.expect(".")
        return SuperOp(NewOp(), (), _parse_item(ts))
    if ts.accept("if"):
        cond = _parse_bool(ts)
        ts.expect("then")
        return IfThen(cond, _parse_item(ts))
    if ts.accept("("):
        inner = parse_term(ts)
        ts.expect(")")
        return inner
    if tok.kind in ("id", "num"):
        nxt = ts.peek(1).text
        if nxt == "?" :
            chan = ts.name()
            ts.next()
            var = ts.name()
            ts.expect(".")
            return In(chan, var, _parse_item(ts))
        if nxt == "!":
            chan = ts.name()
            ts.next()
            payload = ts.name()
            ts.expect(".")
            return Out(chan, payload, _parse_item(ts))
        if nxt == "(":
            name = ts.name()
            ts.expect("(")
            args: list[str] = []
            if ts.peek().text != ")":
                args = _parse_names(ts)
            ts.expect(")")
            return ConstCall(name, tuple(args))
        if nxt == "[" or (tok.text == "E" and nxt == "{"):
            op, qubits = _parse_opref(ts)
            ts.expect(".")
            return SuperOp(op, qubits, _parse_item(ts))
    ts.error(f"unexpected {tok.text or 'end of input'!r} in qCCS term")


def _parse_item(ts: TokenStream) -> Term:
    term = _parse_atom(ts)
    while ts.accept("\\"):
        ts.expect("{")
        chans: list[str] = []
        if ts.peek().text != "}":
            chans = _parse_names(ts)
        ts.expect("}")
        term = Restrict(term, tuple(chans))
    return term


def _parse_par(ts: TokenStream) -> Term:
    term = _parse_item(ts)
    while ts.accept("|"):
        term = Par(term, _parse_item(ts))
    return term


def parse_term(ts: TokenStream) -> Term:
    term = _parse_par(ts)
    while ts.accept("+"):
        term = Choice(term, _parse_par(ts))
    return term


def _parse_matrix(ts: TokenStream) -> np.ndarray:
    ts.expect("[")
    rows = []
    while True:
        ts.expect("[")
        row = [parse_coefficient_sum(ts)]
        while ts.accept(","):
            row.append(parse_coefficient_sum(ts))
        ts.expect("]")
        rows.append(row)
        if not ts.accept(","):
            break
    ts.expect("]")
    width = len(rows[0])
    if any(len(r) != width for r in rows) or len(rows) != width:
        ts.error(f"matrix must be square, got rows of {[len(r) for r in rows]}")
    return np.array(rows, dtype=complex)


def _parse_weight(ts: TokenStream) -> complex:
    """Mixture weight: like a coefficient product, but a '*' directly before
    'outer' is the weight separator, not a multiplication."""

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
        if tok.kind == "num":
            ts.next()
            return complex(float(tok.text))
        ts.error(f"expected a mixture weight, found {tok.text!r}")

    value = atom()
    while ts.peek().text == "/" or (ts.peek().text == "*" and ts.peek(1).text != "outer"):
        op = ts.next().text
        rhs = atom()
        value = value * rhs if op == "*" else value / rhs
    return value


def _parse_rho(ts: TokenStream, names: tuple[str, ...]) -> DensityMatrix:
    if ts.accept("matrix"):
        return DensityMatrix(names, _parse_matrix(ts))
    parts = []

    def outer_part():
        coef = 1.0
        if ts.peek().text != "outer":
            value = _parse_weight(ts)
            ts.expect("*")
            if abs(value.imag) > 1e-12 or value.real < 0:
                ts.error("mixture weights must be non-negative reals")
            coef = value.real
        ts.expect("outer")
        ts.expect("(")
        amps = parse_amp_expr(ts, len(names))
        ts.expect(")")
        parts.append((coef, amps))

    outer_part()
    while ts.accept("+"):
        outer_part()
    dim = 2 ** len(names)
    entries = np.zeros((dim, dim), dtype=complex)
    for p, amps in parts:
        entries += p * np.outer(amps, amps.conj())
    return DensityMatrix(names, entries)


def parse_qccs(text: str, tol: float = DEFAULT_TOL):
    """Parse the .qccs format.

    Returns (defs, config, table): process constant definitions, the
    initial configuration, and the named super-operator table.
    """
    ts = TokenStream(text)
    defs: ProcessDefs = {}
    table: dict[str, SuperOperator] = {}
    while ts.peek().text in ("superop", "def"):
        if ts.accept("superop"):
            tok = ts.peek()
            name = ts.name()
            if name in RESERVED_OPS or name in GATES:
                raise ParseError(f"operator name {name!r} is reserved", tok.line, tok.column)
            ts.expect("(")
            arity_tok = ts.next()
            if arity_tok.kind != "num" or not arity_tok.text.isdigit():
                ts.error("expected the operator arity")
            arity = int(arity_tok.text)
            ts.expect(")")
            ts.expect("{")
            terms = []
            while ts.peek().text != "}":
                sign = 1
                if ts.accept("-"):
                    sign = -1
                else:
                    ts.accept("+")
                matrix = _parse_matrix(ts)
                if matrix.shape != (2 ** arity, 2 ** arity):
                    ts.error(f"Kraus term must be {2 ** arity}x{2 ** arity} for arity {arity}")
                terms.append((sign, matrix))
                ts.expect(";")
            ts.expect("}")
            table[name] = SuperOperator(name, arity, tuple(terms))
        else:
            ts.expect("def")
            name = ts.name()
            ts.expect("(")
            params: list[str] = []
            if ts.peek().text != ")":
                params = _parse_names(ts)
            ts.expect(")")
            ts.expect("=")
            defs[name] = (tuple(params), parse_term(ts))
    ts.expect("state")
    ts.expect("qubits")
    names: list[str] = []
    if ts.peek().text != ";":
        names = _parse_names(ts)
    ts.expect(";")
    ts.expect("rho")
    ts.expect("=")
    rho = _parse_rho(ts, tuple(names))
    ts.expect(";")
    ts.expect("process")
    term = parse_term(ts)
    tok = ts.peek()
    if tok.kind != "eof":
        ts.error(f"unexpected {tok.text!r} after process term")
    config = QccsConfig(term, rho)
    check_wellformed(defs, config, table)
    return defs, config, table


# -- pretty printing --------------------------------------------------------------------

def format_bool(b: BoolExpr) -> str:
    match b:
        case BTrue():
            return "true"
        case BFalse():
            return "false"
        case TraceNonzero(op, qs):
            return f"tr({format_op(op, qs)}) != 0"
        case BNot(inner):
            return f"not ({format_bool(inner)})"
        case BAnd(l, r):
            return f"({format_bool(l)}) and ({format_bool(r)})"
    raise TypeError(f"not a boolean guard: {b!r}")


def format_term(t: Term) -> str:
    return _fmt_sum(t)


def _fmt_sum(t: Term) -> str:
    if isinstance(t, Choice):
        right = _fmt_par(t.right)
        if isinstance(t.right, Choice):
            right = f"({_fmt_sum(t.right)})"
        return f"{_fmt_sum(t.left)} + {right}"
    return _fmt_par(t)


def _fmt_par(t: Term) -> str:
    if isinstance(t, Choice):
        return f"({_fmt_sum(t)})"
    if isinstance(t, Par):
        right = _fmt_item(t.right)
        if isinstance(t.right, Par):
            right = f"({_fmt_par(t.right)})"
        return f"{_fmt_par(t.left)} | {right}"
    return _fmt_item(t)


def _fmt_item(t: Term) -> str:
    match t:
        case Nil():
            return "nil"
        case Success():
            return "ok"
        case Tau(p):
            return f"tau.{_fmt_item(p)}"
        case SuperOp(op, qs, p):
            return f"{format_op(op, qs)}.{_fmt_item(p)}"
        case In(c, x, p):
            return f"{c}?{x}.{_fmt_item(p)}"
        case Out(c, q, p):
            return f"{c}!{q}.{_fmt_item(p)}"
        case IfThen(b, p):
            return f"if {format_bool(b)} then {_fmt_item(p)}"
        case ConstCall(name, args):
            return f"{name}({', '.join(args)})"
        case Restrict(p, chans):
            if not chans:
                return _fmt_item(p)
            body = _fmt_item(p) if not isinstance(p, (Par, Choice)) else f"({_fmt_sum(p)})"
            if isinstance(p, (Tau, SuperOp, In, Out, IfThen)):
                body = f"({body})"
            return f"{body} \\ {{{', '.join(chans)}}}"
        case Par() | Choice():
            return f"({_fmt_sum(t)})"
    raise TypeError(f"not a qCCS term: {t!r}")


def _fmt_complex(z: complex) -> str:
    re, im = float(z.real), float(z.imag)
    if im == 0.0:
        return repr(re)
    return f"({re!r} + {im!r}*i)"


def _fmt_matrix(m: np.ndarray) -> str:
    rows = ", ".join("[" + ", ".join(_fmt_complex(z) for z in row) + "]" for row in m)
    return f"[{rows}]"


def format_qccs_file(
    config: QccsConfig,
    defs: ProcessDefs | None = None,
    table: Mapping[str, SuperOperator] | None = None,
) -> str:
    """Deterministic .qccs source for a configuration; reparsing it and
    formatting again reproduces the same text."""
    lines = []
    for name in sorted(table or {}):
        op = table[name]
        body = " ".join(
            f"{'+' if sign > 0 else '-'}{_fmt_matrix(k)};" for sign, k in op.terms
        )
        lines.append(f"superop {name}({op.arity}) {{ {body} }}")
    for name in sorted(defs or {}):
        params, body = defs[name]
        lines.append(f"def {name}({', '.join(params)}) = {format_term(body)}")
    lines.append(f"state qubits {', '.join(config.rho.qubit_names)} ;")
    lines.append(f"rho = matrix {_fmt_matrix(config.rho.entries)} ;")
    lines.append(f"process {format_term(config.term)}")
    return "\n".join(lines) + "\n"
