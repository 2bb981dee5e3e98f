import numpy as np
import pytest

from qproc import protocols, qccs, quantum
from qproc.errors import (
    NoCloningViolation,
    ParseError,
    UnboundQubit,
    UnknownName,
    WellFormednessError,
)
from qproc.qccs import (
    BTrue,
    Choice,
    ConstCall,
    CustomOp,
    GateOp,
    IfThen,
    In,
    LIn,
    LOut,
    LTau,
    MeasureOp,
    NewOp,
    Nil,
    Out,
    Par,
    ProjectOp,
    QccsConfig,
    Restrict,
    Success,
    SuperOp,
    Tau,
    TraceNonzero,
)

SQ2 = 1.0 / np.sqrt(2.0)


def dm(names, amps):
    psi = quantum.StateVector(tuple(names), np.array(amps, dtype=complex))
    return quantum.outer(psi)


def cfg(term, names=("q",), amps=(1, 0)):
    return QccsConfig(term, dm(names, amps))


# -- parsing -----------------------------------------------------------------

def test_parse_nil_config():
    defs, config, table = qccs.parse_qccs("state qubits q ; rho = outer(|0>) ; process nil")
    assert config.term == Nil()
    assert np.allclose(config.rho.entries, [[1, 0], [0, 0]])
    assert defs == {} and table == {}


def test_parse_counterexample_file():
    defs, config, table = qccs.parse_qccs(protocols.read("counterexample.qccs"))
    assert set(table) == {"Q"}
    assert config.term == SuperOp(
        CustomOp("Q"),
        ("q",),
        Choice(
            IfThen(TraceNonzero(ProjectOp(0), ("q",)), Tau(Success())),
            IfThen(TraceNonzero(ProjectOp(1), ("q",)), Tau(Nil())),
        ),
    )
    (s0, k0), (s1, k1) = table["Q"].terms
    assert (s0, s1) == (1, -1)
    assert np.allclose(k0, [[1, 0], [0, np.sqrt(2)]])
    assert np.allclose(k1, [[0, 1], [0, 0]])


def test_parse_mixture_and_matrix_states():
    _, config, _ = qccs.parse_qccs(
        "state qubits q ; rho = 1/2*outer(|0>) + 1/2*outer(|1>) ; process nil"
    )
    assert np.allclose(config.rho.entries, [[0.5, 0], [0, 0.5]])
    _, config, _ = qccs.parse_qccs(
        "state qubits q ; rho = matrix [[0.5, 0.5], [0.5, 0.5]] ; process nil"
    )
    assert np.allclose(config.rho.entries, 0.5 * np.ones((2, 2)))


def test_parse_cond1_violation_is_located():
    text = "state qubits q ; rho = outer(|0>) ; process c!q.c?x.H[q].nil"
    with pytest.raises(WellFormednessError) as err:
        qccs.parse_qccs(text)
    assert err.value.condition == "Cond1"
    assert "process" in err.value.path


def test_parse_cond2_violation_is_located():
    text = "state qubits q ; rho = outer(|0>) ; process c!q.nil | d!q.nil"
    with pytest.raises(WellFormednessError) as err:
        qccs.parse_qccs(text)
    assert err.value.condition == "Cond2"


def test_parse_def_with_loose_qubit_rejected():
    text = "def A(x) = H[y].nil\nstate qubits q ; rho = outer(|0>) ; process A(q)"
    with pytest.raises(WellFormednessError):
        qccs.parse_qccs(text)


def test_parse_reserved_superop_name_rejected():
    with pytest.raises(ParseError):
        qccs.parse_qccs("superop M(1) { +[[1,0],[0,1]]; }\nstate qubits q ; rho = outer(|0>) ; process nil")


# -- well-formedness ----------------------------------------------------------

def test_wellformed_accepts_simple_comm():
    term = Par(Out("c", "q", Nil()), In("c", "x", Nil()))
    qccs.check_wellformed({}, cfg(term))


def test_wellformed_allows_guarded_sharing():
    # receiver arms on distinct channels may mention the same qubit
    term = Par(In("c", "x", SuperOp(GateOp("X"), ("q",), Nil())),
               In("d", "y", SuperOp(GateOp("Z"), ("q",), Nil())))
    qccs.check_wellformed({}, cfg(term))


def test_wellformed_rejects_unbound_qubit():
    with pytest.raises(UnboundQubit):
        qccs.check_wellformed({}, cfg(Out("c", "nope", Nil())))


def test_wellformed_rejects_unknown_operator_and_constant():
    with pytest.raises(UnknownName):
        qccs.check_wellformed({}, cfg(SuperOp(CustomOp("NOPE"), ("q",), Nil())))
    with pytest.raises(UnknownName):
        qccs.check_wellformed({}, cfg(ConstCall("A", ("q",))))


def test_wellformed_rejects_duplicate_constant_args():
    defs = {"A": (("x", "y"), Par(Out("c", "x", Nil()), Out("d", "y", Nil())))}
    with pytest.raises(NoCloningViolation):
        qccs.check_wellformed(defs, cfg(ConstCall("A", ("q", "q"))))


# -- substitution ---------------------------------------------------------------

def test_subst_qubit_swap():
    term = Par(Out("c", "a", Nil()), In("d", "x", SuperOp(GateOp("H"), ("b",), Nil())))
    got = qccs.subst_qubit(term, {"a": "b", "b": "a"})
    assert got == Par(Out("c", "b", Nil()), In("d", "x", SuperOp(GateOp("H"), ("a",), Nil())))


def test_subst_qubit_rejects_merge():
    with pytest.raises(NoCloningViolation):
        qccs.subst_qubit(Nil(), {"a": "q", "b": "q"})


def test_subst_respects_restriction_binders():
    term = Restrict(Out("c", "q", Nil()), ("c",))
    got = qccs.substitute(term, {"d": "c"})  # c is bound; the outer d->c must not capture
    assert qccs.congruent_terms(got, term)
    term2 = Restrict(Par(Out("c", "q", Nil()), Out("d", "q2", Nil())), ("c",))
    got2 = qccs.substitute(term2, {"d": "c"})
    assert isinstance(got2, Restrict)
    assert got2.chans != ("c",)  # bound channel renamed away from the incoming c
    assert qccs.free_channels(got2) == {"c"}  # the free d became the free c


# -- semantics --------------------------------------------------------------------

def test_tau_step():
    (step,) = qccs.lts_steps(cfg(Tau(Success())))
    assert step.label == LTau()
    assert step.next.term == Success()


def test_oper_step_applies_superop():
    config = cfg(SuperOp(MeasureOp(), ("q",), Nil()), amps=(SQ2, SQ2))
    (step,) = qccs.lts_steps(config)
    assert step.label == LTau()
    assert np.allclose(step.next.rho.entries, [[0.5, 0], [0, 0.5]])


def test_comm_step():
    term = Par(Out("c", "q", Nil()), In("c", "x", SuperOp(GateOp("X"), ("x",), Success())))
    steps = qccs.lts_steps(cfg(term, names=("q", "p"), amps=(1, 0, 0, 0)))
    taus = [s for s in steps if s.label == LTau()]
    assert len(taus) == 1
    assert qccs.congruent_terms(taus[0].next.term, Par(Nil(), SuperOp(GateOp("X"), ("q",), Success())))


def test_input_menu_excludes_held_qubits():
    term = Par(In("c", "x", Nil()), Out("d", "p", Nil()))
    steps = qccs.lts_steps(cfg(term, names=("q", "p"), amps=(1, 0, 0, 0)))
    ins = sorted(s.label.qubit for s in steps if isinstance(s.label, LIn))
    assert ins == ["q"]  # p is held by the parallel output


def test_restriction_blocks_matching_channels():
    term = Restrict(Out("c", "q", Nil()), ("c",))
    assert qccs.lts_steps(cfg(term)) == []
    term2 = Restrict(Out("d", "q", Nil()), ("c",))
    (step,) = qccs.lts_steps(cfg(term2))
    assert step.label == LOut("d", "q")


def test_choice_steps_are_flagged():
    term = Choice(Tau(Success()), Tau(Nil()))
    steps = qccs.lts_steps(cfg(term))
    assert len(steps) == 2
    assert all(s.reduces_choice for s in steps)
    assert {type(s.next.term) for s in steps} == {Success, Nil}


def test_ifthen_guards_inner_action():
    yes = IfThen(TraceNonzero(ProjectOp(0), ("q",)), Tau(Success()))
    no = IfThen(TraceNonzero(ProjectOp(1), ("q",)), Tau(Success()))
    assert len(qccs.lts_steps(cfg(yes))) == 1
    assert qccs.lts_steps(cfg(no)) == []


def test_guard_counts_negative_trace_as_nonzero():
    probe = quantum.amplitude_damping_probe()
    rho = quantum.superop_apply(probe, ("q",), dm("q", (0, 1)))  # diag(-1, 2)
    assert qccs.eval_bool(TraceNonzero(ProjectOp(0), ("q",)), rho)
    assert qccs.eval_bool(TraceNonzero(ProjectOp(1), ("q",)), rho)


def test_constant_call_steps_match_unfolded_body():
    defs = {"A": (("x", "y"), Par(Out("c", "x", Nil()), In("c", "z", SuperOp(GateOp("H"), ("y",), Nil()))))}
    call = cfg(ConstCall("A", ("q", "p")), names=("q", "p"), amps=(1, 0, 0, 0))
    body = cfg(
        qccs.substitute(defs["A"][1], {"x": "q", "y": "p"}),
        names=("q", "p"),
        amps=(1, 0, 0, 0),
    )
    call_steps = qccs.lts_steps(call, defs)
    body_steps = qccs.lts_steps(body, defs)
    assert len(call_steps) == len(body_steps)
    for a, b in zip(call_steps, body_steps):
        assert a.label == b.label
        assert qccs.congruent(a.next, b.next)


def test_steps_preserve_wellformedness():
    term = Par(
        Out("c", "q", Nil()),
        In("c", "x", SuperOp(GateOp("X"), ("x",), Out("d", "x", Nil()))),
    )
    config = cfg(term, names=("q", "p"), amps=(0, 1, 0, 0))
    qccs.check_wellformed({}, config)
    frontier = [config]
    seen = 0
    while frontier and seen < 50:
        cur = frontier.pop()
        seen += 1
        for step in qccs.lts_steps(cur):
            qccs.check_wellformed({}, step.next)
            frontier.append(step.next)


def test_def_unfolding_and_recursion_guard():
    defs = {"A": (("x",), Tau(ConstCall("A", ("x",))))}
    config = cfg(ConstCall("A", ("q",)))
    (step,) = qccs.lts_steps(config, defs)
    assert step.label == LTau()
    assert step.next.term == ConstCall("A", ("q",))
    looping = {"B": (("x",), ConstCall("B", ("x",)))}
    assert qccs.lts_steps(cfg(ConstCall("B", ("q",))), looping) == []


def test_new_operator_appends_qubit():
    config = cfg(SuperOp(NewOp(), (), Out("c", "q1", Nil())), names=("q0",), amps=(0, 1))
    (step,) = qccs.lts_steps(config)
    assert step.next.rho.qubit_names == ("q0", "q1")
    assert np.allclose(step.next.rho.entries[2, 2], 1.0)


def test_reduce_steps_are_tau_only():
    term = Par(Out("c", "q", Nil()), In("c", "x", Nil()))
    labels = {type(s.label) for s in qccs.lts_steps(cfg(term, names=("q", "p"), amps=(1, 0, 0, 0)))}
    assert labels == {LTau, LIn, LOut}
    reduced = qccs.reduce_steps(cfg(term, names=("q", "p"), amps=(1, 0, 0, 0)))
    assert all(s.label == LTau() for s in reduced)


# -- barbs ---------------------------------------------------------------------

def test_barbs():
    assert qccs.has_success_barb(cfg(Par(Success(), Nil())))
    assert qccs.has_success_barb(cfg(Choice(Success(), Tau(Nil()))))
    assert not qccs.has_success_barb(cfg(Tau(Success())))
    assert not qccs.has_success_barb(cfg(IfThen(BTrue(), Success())))
    assert qccs.has_success_barb(cfg(Restrict(Success(), ("c",))))


def test_barb_through_constants():
    defs = {"A": ((), Success()), "B": ((), ConstCall("B", ()))}
    assert qccs.has_success_barb(cfg(ConstCall("A", ())), defs)
    assert not qccs.has_success_barb(cfg(ConstCall("B", ())), defs)


# -- congruence -------------------------------------------------------------------

def test_par_laws():
    a = Out("c", "q", Nil())
    b = In("c", "x", Nil())
    assert qccs.congruent(cfg(Par(a, Nil())), cfg(a))
    assert qccs.congruent(cfg(Par(a, b)), cfg(Par(b, a)))
    assert qccs.congruent(cfg(Par(a, Par(b, Success()))), cfg(Par(Par(a, b), Success())))


def test_choice_is_not_commutative_for_congruence():
    a = Tau(Success())
    b = Tau(Nil())
    assert not qccs.congruent(cfg(Choice(a, b)), cfg(Choice(b, a)))


def test_nested_restrictions_merge():
    a = Out("c", "q", Nil())
    assert qccs.congruent(
        cfg(Restrict(Restrict(a, ("d",)), ("e",))),
        cfg(Restrict(a, ("d", "e"))),
    )
    assert qccs.congruent(cfg(Restrict(a, ())), cfg(a))


def test_alpha_on_register_names():
    left = QccsConfig(Out("c", "a", Nil()), dm(("a",), (0, 1)))
    right = QccsConfig(Out("c", "b", Nil()), dm(("b",), (0, 1)))
    assert qccs.congruent(left, right)


def test_success_as_choice_branch_barbs():
    assert qccs.has_success_barb(cfg(Choice(Success(), IfThen(BTrue(), Tau(Nil())))))
    assert not qccs.has_success_barb(cfg(IfThen(BTrue(), Success())))


# -- formatting roundtrip -----------------------------------------------------------

def test_format_parse_roundtrip_is_identity_on_text():
    defs, config, table = qccs.parse_qccs(protocols.read("counterexample.qccs"))
    text1 = qccs.format_qccs_file(config, defs, table)
    defs2, config2, table2 = qccs.parse_qccs(text1)
    text2 = qccs.format_qccs_file(config2, defs2, table2)
    assert text1 == text2
    assert qccs.congruent(config, config2)


def test_format_term_examples():
    term = Choice(
        IfThen(TraceNonzero(ProjectOp(0), ("q",)), SuperOp(ProjectOp(0), ("q",), Out("0", "q", Nil()))),
        IfThen(TraceNonzero(ProjectOp(1), ("q",)), SuperOp(ProjectOp(1), ("q",), Out("1", "q", Nil()))),
    )
    text = qccs.format_term(term)
    assert "if tr(E{0}[q]) != 0 then E{0}[q].0!q.nil" in text
    assert " + " in text
