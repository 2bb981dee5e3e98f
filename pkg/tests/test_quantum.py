import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qproc import quantum as q
from qproc.errors import (
    InvalidArity,
    InvalidOutcome,
    InvalidPermutation,
    InvalidRegister,
    ShapeMismatch,
    UnknownQubit,
    ZeroBranch,
)

SQ2 = 1.0 / np.sqrt(2.0)


def sv(names, amps):
    return q.StateVector(tuple(names), np.array(amps, dtype=complex))


def random_state(rng, names):
    amps = rng.standard_normal(2 ** len(names)) + 1j * rng.standard_normal(2 ** len(names))
    return sv(names, amps / np.linalg.norm(amps))


# -- construction invariants -------------------------------------------------

def test_state_vector_rejects_bad_shapes_and_norms():
    with pytest.raises(InvalidRegister):
        sv(("a",), [1, 0, 0])
    with pytest.raises(InvalidRegister):
        sv(("a", "a"), [1, 0, 0, 0])
    with pytest.raises(InvalidRegister):
        sv(("a",), [1, 1])
    with pytest.raises(InvalidRegister):
        sv(("a",), [np.nan, 0])


def test_density_matrix_rejects_non_hermitian_and_bad_trace():
    with pytest.raises(InvalidRegister):
        q.DensityMatrix(("a",), [[0, 1], [0, 0]])
    with pytest.raises(InvalidRegister):
        q.DensityMatrix(("a",), [[2, 0], [0, 0]])
    # indefinite but Hermitian with trace 1 is fine (signed probes produce it)
    q.DensityMatrix(("a",), [[-1, 0], [0, 2]])


def test_unitary_validation():
    with pytest.raises(InvalidArity):
        q.Unitary([[1, 1], [0, 1]])
    assert q.GATES["CNOT"].arity == 2


# -- tensor ------------------------------------------------------------------

def test_tensor_basis_product():
    got = q.tensor(sv("a", [1, 0]), sv("b", [1, 0]))
    assert got.qubit_names == ("a", "b")
    assert np.allclose(got.amps, [1, 0, 0, 0])


def test_tensor_appends_fresh_zero_qubit_interleaving():
    rng = np.random.default_rng(7)
    psi = random_state(rng, ("a", "b"))
    got = q.tensor(psi, sv("c", [1, 0]))
    assert np.allclose(got.amps[0::2], psi.amps)
    assert np.allclose(got.amps[1::2], 0)


def test_tensor_plus_one():
    got = q.tensor(sv("a", [SQ2, SQ2]), sv("b", [0, 1]))
    assert np.allclose(got.amps, [0, SQ2, 0, SQ2])


def test_tensor_rejects_name_collision():
    with pytest.raises(InvalidRegister):
        q.tensor(sv("a", [1, 0]), sv("a", [1, 0]))


def test_tensor_associative_up_to_name_ordering():
    rng = np.random.default_rng(3)
    a, b, c = random_state(rng, "a"), random_state(rng, "b"), random_state(rng, "c")
    left = q.tensor(q.tensor(a, b), c)
    right = q.tensor(a, q.tensor(b, c))
    assert left.qubit_names == right.qubit_names
    assert np.allclose(left.amps, right.amps)


# -- unitary application -----------------------------------------------------

def test_hadamard_creates_plus():
    got = q.apply_unitary_prefix(q.GATES["H"], sv("a", [1, 0]))
    assert np.allclose(got.amps, [SQ2, SQ2])


def test_tensor_gates_on_two_qubits():
    xx = q.Unitary(np.kron(q.GATES["X"].matrix, q.GATES["X"].matrix), "XX")
    ix = q.Unitary(np.kron(np.eye(2), q.GATES["X"].matrix), "IX")
    zero2 = sv("ab", [1, 0, 0, 0])
    assert np.allclose(q.apply_unitary_prefix(xx, zero2).amps, [0, 0, 0, 1])
    assert np.allclose(q.apply_unitary_prefix(ix, zero2).amps, [0, 1, 0, 0])


def test_cnot_prefix_on_three_qubits():
    psi0 = sv("abc", [0, 0, 0, 0, SQ2, 0, 0, SQ2])  # (|100> + |111>)/sqrt2
    got = q.apply_unitary_prefix(q.GATES["CNOT"], psi0)
    want = np.zeros(8)
    want[0b110] = SQ2
    want[0b101] = SQ2
    assert np.allclose(got.amps, want)


def test_arity_overflow_rejected():
    with pytest.raises(InvalidArity):
        q.apply_unitary_prefix(q.GATES["CNOT"], sv("a", [1, 0]))


@settings(max_examples=60, deadline=None, derandomize=True)
@given(st.integers(0, 2 ** 30), st.sampled_from(["I", "X", "Y", "Z", "H", "CNOT"]), st.integers(2, 4))
def test_unitary_prefix_preserves_norm(seed, gate, n):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, [f"q{i}" for i in range(n)])
    got = q.apply_unitary_prefix(q.GATES[gate], psi)
    assert abs(np.sum(np.abs(got.amps) ** 2) - 1.0) <= 1e-9


# -- permutations ------------------------------------------------------------

def test_identity_permutation_is_identity_matrix():
    assert np.allclose(q.permutation_unitary((0, 1, 2)).matrix, np.eye(8))


def test_swap_permutation_on_basis_state():
    pi = q.permutation_unitary((1, 0))
    got = pi.matrix @ np.array([0, 1, 0, 0])  # |01>
    assert np.allclose(got, [0, 0, 1, 0])  # |10>


def test_permutation_times_inverse_is_identity():
    rng = np.random.default_rng(5)
    for n in range(1, 5):
        perm = tuple(rng.permutation(n))
        prod = q.permutation_unitary(perm).matrix @ q.permutation_unitary(q.inverse_perm(perm)).matrix
        assert np.allclose(prod, np.eye(2 ** n))


def test_permute_state_matches_permutation_unitary():
    rng = np.random.default_rng(11)
    psi = random_state(rng, ("a", "b", "c"))
    perm = (2, 0, 1)
    moved = q.permute_state(psi, perm)
    assert moved.qubit_names == ("c", "a", "b")
    via_matrix = q.permutation_unitary(q.inverse_perm(perm)).matrix @ psi.amps
    assert np.allclose(moved.amps, via_matrix)


def test_permute_density_consistent_with_state():
    rng = np.random.default_rng(13)
    psi = random_state(rng, ("a", "b", "c"))
    perm = (1, 2, 0)
    lhs = q.permute_density(q.outer(psi), perm)
    rhs = q.outer(q.permute_state(psi, perm))
    assert lhs.qubit_names == rhs.qubit_names
    assert q.approx_eq(lhs, rhs)


def test_bad_permutation_rejected():
    with pytest.raises(InvalidPermutation):
        q.permutation_unitary((0, 0))


# -- measurement -------------------------------------------------------------

def test_measure_bell_first_qubit():
    bell = sv("ab", [SQ2, 0, 0, SQ2])
    outcomes = q.measure_prefix(bell, 1)
    assert [o.result for o in outcomes] == [0, 1]
    assert outcomes[0].probability == pytest.approx(0.5, abs=1e-9)
    assert np.allclose(outcomes[0].post_state.amps, [1, 0, 0, 0])
    assert np.allclose(outcomes[1].post_state.amps, [0, 0, 0, 1])


def test_measure_teleport_intermediate_state():
    # 1/2 (|001> + |010> - |101> - |110>), measuring the first two qubits
    amps = np.zeros(8)
    amps[0b001], amps[0b010], amps[0b101], amps[0b110] = 0.5, 0.5, -0.5, -0.5
    outcomes = q.measure_prefix(sv("abc", amps), 2)
    posts = []
    for o in outcomes:
        assert o.probability == pytest.approx(0.25, abs=1e-9)
        posts.append(o.post_state.amps)
    want = [(0b001, 1.0), (0b010, 1.0), (0b101, -1.0), (0b110, -1.0)]
    for got, (idx, val) in zip(posts, want):
        expect = np.zeros(8)
        expect[idx] = val
        assert np.allclose(got, expect)


def test_measure_zero_qubits_is_trivial():
    psi = sv("a", [0, 1])
    (only,) = q.measure_prefix(psi, 0)
    assert only.result == 0 and only.probability == pytest.approx(1.0)
    assert np.allclose(only.post_state.amps, psi.amps)


def test_zero_probability_branch_is_flagged():
    outcomes = q.measure_prefix(sv("a", [1, 0]), 1)
    assert outcomes[1].probability == 0.0
    assert outcomes[1].post_state.is_zero


@settings(max_examples=60, deadline=None, derandomize=True)
@given(st.integers(0, 2 ** 30), st.integers(1, 3), st.integers(0, 3))
def test_measurement_probabilities_sum_to_one(seed, n, r):
    r = min(r, n)
    rng = np.random.default_rng(seed)
    psi = random_state(rng, [f"q{i}" for i in range(n)])
    outcomes = q.measure_prefix(psi, r)
    assert sum(o.probability for o in outcomes) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=60, deadline=None, derandomize=True)
@given(st.integers(0, 2 ** 30), st.integers(1, 3), st.integers(1, 3))
def test_measurement_links_to_unknown_result_superop(seed, n, r):
    # sum_m p_m |post_m><post_m| equals the unknown-result measurement on outer(psi)
    r = min(r, n)
    rng = np.random.default_rng(seed)
    names = [f"q{i}" for i in range(n)]
    psi = random_state(rng, names)
    mixed = q.mix([(o.probability, o.post_state) for o in q.measure_prefix(psi, r) if o.probability > 0])
    via_superop = q.superop_apply(q.SuperOperator.measure_unknown(r), names[:r], q.outer(psi))
    assert q.approx_eq(mixed, via_superop, 1e-9)


# -- outer products ----------------------------------------------------------

def test_outer_of_basis_zero():
    assert np.allclose(q.outer(sv("a", [1, 0])).entries, [[1, 0], [0, 0]])


def test_outer_matches_entrywise_oracle():
    rng = np.random.default_rng(23)
    psi = random_state(rng, ("a", "b"))
    got = q.outer(psi).entries
    for i in range(4):
        for j in range(4):
            assert got[i, j] == pytest.approx(psi.amps[i] * np.conj(psi.amps[j]), abs=1e-12)


def test_outer_of_plus():
    assert np.allclose(q.outer(sv("a", [SQ2, SQ2])).entries, 0.5 * np.ones((2, 2)))


# -- super-operators ---------------------------------------------------------

def test_expected_result_on_empty_target_set_is_identity():
    op = q.SuperOperator.measure_expected(0, 0)
    rng = np.random.default_rng(2)
    rho = q.outer(random_state(rng, ("a", "b")))
    assert q.approx_eq(q.superop_apply(op, (), rho), rho, 1e-9)


def test_unitary_superop_matches_vector_path():
    rho = q.superop_apply(
        q.SuperOperator.from_unitary(q.GATES["H"]), ("a",), q.outer(sv("a", [1, 0]))
    )
    oracle = q.outer(q.apply_unitary_prefix(q.GATES["H"], sv("a", [1, 0])))
    assert q.approx_eq(rho, oracle, 1e-9)


def test_probe_kraus_terms_have_paper_values():
    probe = q.amplitude_damping_probe(1.0)
    (s0, k0), (s1, k1) = probe.terms
    assert (s0, s1) == (1, -1)
    assert np.allclose(k0, [[1, 0], [0, np.sqrt(2)]])
    assert np.allclose(k1, [[0, 1], [0, 0]])
    assert probe.advisories()  # not CP: flagged, not fatal


def test_measure_unknown_dissolves_plus():
    rho = q.superop_apply(q.SuperOperator.measure_unknown(1), ("a",), q.outer(sv("a", [SQ2, SQ2])))
    assert np.allclose(rho.entries, [[0.5, 0], [0, 0.5]])


def test_probe_action_on_basis_and_diagonal_states():
    probe = q.amplitude_damping_probe()
    zero = q.superop_apply(probe, ("a",), q.outer(sv("a", [1, 0])))
    assert np.allclose(zero.entries, [[1, 0], [0, 0]])
    one = q.superop_apply(probe, ("a",), q.outer(sv("a", [0, 1])))
    assert np.allclose(one.entries, [[-1, 0], [0, 2]])
    plus = q.superop_apply(probe, ("a",), q.outer(sv("a", [SQ2, SQ2])))
    assert np.allclose(plus.entries, [[0, SQ2], [SQ2, 1]])
    minus = q.superop_apply(probe, ("a",), q.outer(sv("a", [SQ2, -SQ2])))
    assert np.allclose(minus.entries, [[0, -SQ2], [-SQ2, 1]])


def test_measure_unknown_on_bell_matches_projector_oracle():
    bell = sv("ab", [SQ2, 0, 0, SQ2])
    rho = q.outer(bell)
    got = q.superop_apply(q.SuperOperator.measure_unknown(1), ("a",), rho)
    oracle = np.zeros((4, 4), dtype=complex)
    for m in range(2):
        proj = np.zeros((2, 2))
        proj[m, m] = 1
        full = np.kron(proj, np.eye(2))
        oracle += full @ rho.entries @ full.conj().T
    assert np.allclose(got.entries, oracle)


def test_superop_targets_by_name_with_permutation():
    # X on the *second* register qubit, addressed by name
    rng = np.random.default_rng(4)
    psi = random_state(rng, ("a", "b"))
    got = q.superop_apply(q.SuperOperator.from_unitary(q.GATES["X"]), ("b",), q.outer(psi))
    oracle = q.outer(q.apply_unitary_prefix(q.Unitary(np.kron(np.eye(2), q.GATES["X"].matrix)), psi))
    assert q.approx_eq(got, oracle, 1e-9)


def test_unitary_superop_preserves_trace_expected_reduces_then_normalises():
    rng = np.random.default_rng(9)
    psi = random_state(rng, ("a", "b"))
    rho = q.outer(psi)
    after = q.superop_apply(q.SuperOperator.from_unitary(q.GATES["CNOT"]), ("a", "b"), rho)
    assert after.trace == pytest.approx(1.0, abs=1e-9)
    raw = q.raw_trace_after(q.SuperOperator.measure_expected(0, 1), ("a",), rho)
    p0 = q.measure_prefix(psi, 1)[0].probability
    assert raw == pytest.approx(p0, abs=1e-9)


def test_new_qubit_operator_appends_zero():
    rng = np.random.default_rng(6)
    psi = random_state(rng, ("q0",))
    got = q.superop_apply(q.SuperOperator.new_qubit(), (), q.outer(psi))
    assert got.qubit_names == ("q0", "q1")
    oracle = q.outer(q.tensor(psi, sv(("q1",), [1, 0])))
    assert q.approx_eq(got, oracle, 1e-9)


def test_zero_branch_raises():
    op = q.SuperOperator.measure_expected(1, 1)
    with pytest.raises(ZeroBranch):
        q.superop_apply(op, ("a",), q.outer(sv("a", [1, 0])))


def test_unknown_target_rejected():
    with pytest.raises(UnknownQubit):
        q.superop_apply(q.SuperOperator.measure_unknown(1), ("nope",), q.outer(sv("a", [1, 0])))


def test_invalid_outcome_rejected():
    with pytest.raises(InvalidOutcome):
        q.SuperOperator.measure_expected(4, 2)


def test_permutation_superop_matches_permute_state():
    rng = np.random.default_rng(8)
    psi = random_state(rng, ("a", "b", "c"))
    perm = (2, 0, 1)
    pi = q.permutation_unitary(q.inverse_perm(perm))
    via_superop = q.superop_apply(q.SuperOperator.from_unitary(pi), psi.qubit_names, q.outer(psi))
    direct = q.outer(q.StateVector(psi.qubit_names, pi.matrix @ psi.amps))
    assert q.approx_eq(via_superop, direct, 1e-9)


# -- comparison --------------------------------------------------------------

def test_approx_eq_basics():
    a = q.outer(sv("a", [1, 0]))
    assert q.approx_eq(a, a, 1e-9)
    assert not q.approx_eq(sv("a", [1, 0]), sv("a", [0, 1]), 1e-9)
    plus = q.DensityMatrix(("a",), 0.5 * np.ones((2, 2)))
    assert q.approx_eq(plus, q.outer(sv("a", [SQ2, SQ2])), 1e-9)


def test_approx_eq_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        q.approx_eq(sv("a", [1, 0]), sv("b", [1, 0]), 1e-9)
    with pytest.raises(ShapeMismatch):
        q.approx_eq(sv("a", [1, 0]), q.outer(sv("a", [1, 0])), 1e-9)


def test_density_equal_mod_order():
    rng = np.random.default_rng(10)
    psi = random_state(rng, ("a", "b"))
    rho = q.outer(psi)
    assert q.density_equal_mod_order(rho, q.permute_density(rho, (1, 0)))


def test_fresh_qubit_name_skips_collisions():
    assert q.fresh_qubit_name(("q0", "q1")) == "q2"
    assert q.fresh_qubit_name(("q2", "b")) == "q3"
    assert q.fresh_qubit_name(()) == "q0"
