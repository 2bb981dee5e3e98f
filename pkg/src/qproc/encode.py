"""The translation from CQP- configurations into qCCS.

Gate applications and measurements become super-operator prefixes on the
same named qubits; the probabilistic branch rule becomes a guarded choice
between expected-result measurement operators; channel creation becomes a
silent step guarding a single-name restriction; qubit creation becomes the
register-extension operator with the statically determined fresh name
substituted into the continuation.  Configurations restrict the translated
term by their channel list and map the state vector (or the distribution's
mixture) to a density matrix.

Names translate to themselves, so the translation commutes with both
channel and qubit substitutions, preserves structural congruence, and
never changes the register size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import cqp, qccs, quantum
from .quantum import GATES, SuperOperator


@dataclass(frozen=True, eq=False)
class EncodingOutput:
    """Translated configuration plus the operators its term references.

    ``defs`` is always empty: the translation never introduces process
    constants.  ``op_table`` names the gate-backed operators in use; the
    measurement, expected-result and register-extension operators are
    builtins of the target syntax.
    """

    config: qccs.QccsConfig
    defs: qccs.ProcessDefs = field(default_factory=dict)
    op_table: dict[str, SuperOperator] = field(default_factory=dict)


def enc_dist(qbar: Sequence[str], var: str, body: qccs.Term) -> qccs.Term:
    """The guarded choice over the outcomes of measuring ``qbar``.

    Branch i checks that outcome i has non-zero probability and then
    adjusts the state with the expected-result operator.  An empty qubit
    list yields the single identity-guarded branch.
    """
    qbar = tuple(qbar)
    if len(set(qbar)) != len(qbar):
        from .errors import InvalidArity

        raise InvalidArity(f"measured qubits {qbar} repeat a name")
    if not qbar:
        guard = qccs.TraceNonzero(qccs.ProjectOp(0), ())
        return qccs.IfThen(guard, qccs.SuperOp(qccs.ProjectOp(0), (), body))
    branches = []
    for i in range(2 ** len(qbar)):
        guard = qccs.TraceNonzero(qccs.ProjectOp(i), qbar)
        resolved = qccs.substitute(body, {var: str(i)})
        branches.append(qccs.IfThen(guard, qccs.SuperOp(qccs.ProjectOp(i), qbar, resolved)))
    return qccs.choice_chain(branches)


def encode_term(term: cqp.Term, register: Sequence[str]) -> qccs.Term:
    """Clause-by-clause translation of a term over the given register.

    The register is threaded so that nested qubit creations substitute
    successive fresh names, matching what the extension operator appends
    at run time.
    """
    register = tuple(register)
    match term:
        case cqp.Nil():
            return qccs.Nil()
        case cqp.Success():
            return qccs.Success()
        case cqp.Par(l, r):
            return qccs.Par(encode_term(l, register), encode_term(r, register))
        case cqp.In(c, x, p):
            return qccs.In(c, x, encode_term(p, register))
        case cqp.Out(c, q, p):
            return qccs.Out(c, q, encode_term(p, register))
        case cqp.Trans(qs, g, p):
            return qccs.SuperOp(qccs.GateOp(g), qs, encode_term(p, register))
        case cqp.Measure(qs, x, p):
            return qccs.SuperOp(qccs.MeasureOp(), qs, enc_dist(qs, x, encode_term(p, register)))
        case cqp.NewChan(x, p):
            return qccs.Tau(qccs.Restrict(encode_term(p, register), (x,)))
        case cqp.NewQbit(x, p):
            fresh = quantum.fresh_qubit_name(register)
            body = encode_term(p, register + (fresh,))
            return qccs.SuperOp(qccs.NewOp(), (), qccs.substitute(body, {x: fresh}))
    raise TypeError(f"not a CQP- term: {term!r}")


def _used_gates(t: qccs.Term) -> set[str]:
    match t:
        case qccs.SuperOp(qccs.GateOp(g), _, p):
            return {g} | _used_gates(p)
        case qccs.Tau(p) | qccs.SuperOp(_, _, p) | qccs.In(_, _, p) | qccs.Out(_, _, p) | qccs.IfThen(_, p):
            return _used_gates(p)
        case qccs.Par(l, r) | qccs.Choice(l, r):
            return _used_gates(l) | _used_gates(r)
        case qccs.Restrict(p, _):
            return _used_gates(p)
        case _:
            return set()


def encode_config(
    config: cqp.CqpConfig,
    gates: Mapping[str, quantum.Unitary] = GATES,
    check: bool = True,
) -> EncodingOutput:
    """Translate a configuration; requires an internally well-typed source.

    ``check=False`` skips re-typechecking, for callers that already hold a
    checked configuration's derivative (subject reduction).
    """
    if check:
        cqp.typecheck_internal(config, gates)
    if isinstance(config, cqp.CqpPure):
        term = encode_term(config.term, config.sigma.qubit_names)
        rho = quantum.outer(config.sigma)
    else:
        names = config.sigma_names
        body = encode_term(config.term, names)
        term = enc_dist(names[: config.r], config.var, body)
        rho = quantum.mix(config.cases)
    wrapped = qccs.Restrict(term, config.phi)
    table = {g: SuperOperator.from_unitary(gates[g]) for g in sorted(_used_gates(wrapped))}
    return EncodingOutput(qccs.QccsConfig(wrapped, rho), {}, table)


def encode_source_text(text: str) -> EncodingOutput:
    return encode_config(cqp.parse_cqp(text))


def emit_translation(
    config: qccs.QccsConfig,
    defs: qccs.ProcessDefs | None = None,
    table: Mapping[str, SuperOperator] | None = None,
) -> str:
    """Deterministic .qccs text for a translation.

    Gate-backed operators are spelled with their gate names, which the
    target parser resolves as builtins; the header comment lists them and
    is derived from the term, so emit . parse . emit is the identity on
    emitted text.
    """
    gates = ", ".join(sorted(_used_gates(config.term)))
    header = f"# operators: {gates or 'none'}; builtins M, E{{i}}, new"
    return header + "\n" + qccs.format_qccs_file(config, defs or {}, dict(table or {}))


def emit_qccs(output: EncodingOutput) -> str:
    return emit_translation(output.config, output.defs, {})
