"""Bounded state-space exploration and executable encodability checks.

Everything here is per-instance: a check explores the finite behaviour of
one configuration (and of its translation) within a budget and returns a
verdict.  Universally quantified statements are corroborated by running
the checks over many generated configurations, never proved.

States are deduplicated modulo structural congruence with quantum states
rounded into hash buckets and confirmed entrywise, so exploration
terminates on the loops the calculi can express.
"""

from __future__ import annotations

import random
import re
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import cqp, encode, qccs, quantum
from .errors import NoCloningViolation
from .quantum import DEFAULT_TOL


@dataclass(frozen=True)
class Budget:
    max_depth: int = 64
    max_states: int = 100_000

    def __post_init__(self):
        if self.max_depth <= 0 or self.max_states <= 0:
            raise ValueError("budgets must be positive")


@dataclass
class Verdict:
    status: str  # holds | fails | inconclusive
    witness: list[str] | None = None
    reason: str | None = None
    stats: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.status == "holds"

    @property
    def fails(self) -> bool:
        return self.status == "fails"

    def as_dict(self) -> dict:
        out = {"verdict": self.status, "stats": self.stats}
        if self.witness is not None:
            out["witness_trace"] = self.witness
        if self.reason is not None:
            out["reason"] = self.reason
        return out


def _holds(**stats) -> Verdict:
    return Verdict("holds", stats=stats)


def _fails(witness, **stats) -> Verdict:
    return Verdict("fails", witness=list(witness), stats=stats)


def _inconclusive(reason, **stats) -> Verdict:
    return Verdict("inconclusive", reason=reason, stats=stats)


# -- transition systems -------------------------------------------------------

@dataclass
class System:
    """Adapter: how to step, hash, compare and observe one calculus."""

    steps: callable
    key: callable
    equal: callable
    barb: callable
    size: callable


def cqp_system(perm_mode: str = "on_demand", tol: float = DEFAULT_TOL) -> System:
    def steps(config):
        return [(s.label(), s.next, False) for s in cqp.enumerate_steps(config, perm_mode, tol)]

    return System(
        steps=steps,
        key=cqp.canonical_key,
        equal=lambda a, b: cqp.congruent(a, b, tol),
        barb=cqp.has_success_barb,
        size=lambda c: c.sigma.num_qubits if isinstance(c, cqp.CqpPure) else len(c.sigma_names),
    )


def qccs_system(
    defs=None,
    table=None,
    tol: float = DEFAULT_TOL,
    labelled: bool = False,
) -> System:
    defs = defs or {}
    table = table or {}

    def steps(config):
        stepper = qccs.lts_steps if labelled else qccs.reduce_steps
        return [
            (qccs.format_label(s.label), s.next, s.reduces_choice)
            for s in stepper(config, defs, table, tol)
        ]

    return System(
        steps=steps,
        key=qccs.canonical_key,
        equal=lambda a, b: qccs.congruent(a, b, tol),
        barb=lambda c: qccs.has_success_barb(c, defs),
        size=lambda c: c.rho.num_qubits,
    )


@dataclass
class Lts:
    states: list
    edges: list[tuple[int, str, int, bool]]  # src, label, dst, reduces-choice
    barbs: list[bool]
    sizes: list[int]
    truncated: set[int]
    parents: list[tuple[int, str] | None]
    initial: int = 0

    @property
    def complete(self) -> bool:
        return not self.truncated

    def successors(self, i: int):
        return [(label, dst, choice) for src, label, dst, choice in self.edges if src == i]

    def path_to(self, i: int) -> list[str]:
        labels = []
        while self.parents[i] is not None:
            parent, label = self.parents[i]
            labels.append(label)
            i = parent
        return labels[::-1]

    def stats(self) -> dict:
        return {
            "states": len(self.states),
            "edges": len(self.edges),
            "truncated": bool(self.truncated),
        }


def build_lts(initial, system: System, budget: Budget = Budget()) -> Lts:
    states = [initial]
    barbs = [system.barb(initial)]
    sizes = [system.size(initial)]
    parents: list = [None]
    buckets: dict[str, list[int]] = {system.key(initial): [0]}
    edges: list[tuple[int, str, int, bool]] = []
    truncated: set[int] = set()
    queue = deque([(0, 0)])
    while queue:
        idx, depth = queue.popleft()
        if depth >= budget.max_depth:
            truncated.add(idx)
            continue
        for label, succ, choice in system.steps(states[idx]):
            key = system.key(succ)
            target = None
            for j in buckets.get(key, ()):
                if system.equal(states[j], succ):
                    target = j
                    break
            if target is None:
                if len(states) >= budget.max_states:
                    truncated.add(idx)
                    continue
                target = len(states)
                states.append(succ)
                barbs.append(system.barb(succ))
                sizes.append(system.size(succ))
                parents.append((idx, label))
                buckets.setdefault(key, []).append(target)
                queue.append((target, depth + 1))
            edges.append((idx, label, target, choice))
    return Lts(states, edges, barbs, sizes, truncated, parents)


# -- reachability verdicts ------------------------------------------------------

def _succ_map(lts: Lts) -> dict[int, list[tuple[str, int, bool]]]:
    out: dict[int, list[tuple[str, int, bool]]] = {i: [] for i in range(len(lts.states))}
    for src, label, dst, choice in lts.edges:
        out[src].append((label, dst, choice))
    return out


def may_reach_success(lts: Lts) -> Verdict:
    succ = _succ_map(lts)
    seen = {lts.initial}
    queue = deque([lts.initial])
    while queue:
        i = queue.popleft()
        if lts.barbs[i]:
            return _holds(**lts.stats())
        for _, dst, _ in succ[i]:
            if dst not in seen:
                seen.add(dst)
                queue.append(dst)
    if lts.truncated & seen:
        return _inconclusive("truncation", **lts.stats())
    deadlocks = [i for i in seen if not succ[i]]
    witness = lts.path_to(deadlocks[0]) if deadlocks else []
    return _fails(witness, **lts.stats())


def must_reach_success(lts: Lts) -> Verdict:
    """Every maximal finite path visits a success state.  Infinite paths are
    outside the quantifier, so barb-free cycles do not falsify the verdict;
    paths cut by the budget make it inconclusive."""
    succ = _succ_map(lts)
    if lts.barbs[lts.initial]:
        return _holds(**lts.stats())
    seen = {lts.initial}
    queue = deque([lts.initial])
    while queue:
        i = queue.popleft()
        if i in lts.truncated:
            return _inconclusive("truncation", **lts.stats())
        if not succ[i]:
            return _fails(lts.path_to(i), **lts.stats())
        for _, dst, _ in succ[i]:
            if dst not in seen and not lts.barbs[dst]:
                seen.add(dst)
                queue.append(dst)
    return _holds(**lts.stats())


def detect_divergence(lts: Lts) -> Verdict:
    """Holds means: an infinite run exists (a reachable cycle)."""
    succ = _succ_map(lts)
    color = {}  # 1 in progress, 2 done
    stack = [(lts.initial, iter([d for _, d, _ in succ[lts.initial]]))]
    color[lts.initial] = 1
    while stack:
        node, it = stack[-1]
        advanced = False
        for nxt in it:
            if color.get(nxt) == 1:
                return _holds(cycle=True, **lts.stats())
            if nxt not in color:
                color[nxt] = 1
                stack.append((nxt, iter([d for _, d, _ in succ[nxt]])))
                advanced = True
                break
        if not advanced:
            color[node] = 2
            stack.pop()
    if lts.truncated:
        return _inconclusive("truncation", **lts.stats())
    return _fails([], cycle=False, **lts.stats())


# -- simulation games --------------------------------------------------------------

def _tau_reach(lts: Lts, succ) -> list[set[int]]:
    out = []
    for i in range(len(lts.states)):
        seen = {i}
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for label, dst, _ in succ[j]:
                if label == "tau" and dst not in seen:
                    seen.add(dst)
                    queue.append(dst)
        out.append(seen)
    return out


def _may_success(lts: Lts, reach) -> list[bool]:
    succ = _succ_map(lts)
    # reachability through all labels, not only tau: success here follows the
    # reduction semantics, so restrict to tau edges
    out = []
    for i in range(len(lts.states)):
        out.append(any(lts.barbs[j] for j in reach[i]))
    return out


def corr_sim_check(
    lts1: Lts,
    lts2: Lts,
    strong_first_clause: bool = True,
    size_sensitive: bool = False,
) -> Verdict:
    """Greatest correspondence simulation relating the two initial states.

    Clause one matches every step of the first system strongly (the
    literal reading) or weakly (diagnostic mode); clause two lets the
    first system catch up weakly while the second finishes its step.
    Related states must agree on reachable success, and optionally on
    register size.
    """
    if not (lts1.complete and lts2.complete):
        return _inconclusive("truncation")
    succ1, succ2 = _succ_map(lts1), _succ_map(lts2)
    reach1, reach2 = _tau_reach(lts1, succ1), _tau_reach(lts2, succ2)
    may1, may2 = _may_success(lts1, reach1), _may_success(lts2, reach2)

    def weak_after(lts, succ, reach, i, label):
        """States reachable as  i ==> --label-->  (label tau collapses to ==>)."""
        if label == "tau":
            return reach[i]
        out = set()
        for j in reach[i]:
            for lab, dst, _ in succ[j]:
                if lab == label:
                    out.add(dst)
        return out

    pairs = {
        (i, j)
        for i in range(len(lts1.states))
        for j in range(len(lts2.states))
        if may1[i] == may2[j] and (not size_sensitive or lts1.sizes[i] == lts2.sizes[j])
    }

    changed = True
    while changed:
        changed = False
        for (i, j) in list(pairs):
            ok = True
            for label, i2, _ in succ1[i]:
                if strong_first_clause:
                    candidates = {dst for lab, dst, _ in succ2[j] if lab == label}
                else:
                    candidates = weak_after(lts2, succ2, reach2, j, label)
                if not any((i2, j2) in pairs for j2 in candidates):
                    ok = False
                    break
            if ok:
                for label, j2, _ in succ2[j]:
                    i_candidates = weak_after(lts1, succ1, reach1, i, label)
                    found = False
                    for i2 in i_candidates:
                        for j3 in reach2[j2]:
                            if (i2, j3) in pairs:
                                found = True
                                break
                        if found:
                            break
                    if not found:
                        ok = False
                        break
            if not ok:
                pairs.discard((i, j))
                changed = True
    stats = {"pairs": len(pairs), "states": (len(lts1.states), len(lts2.states))}
    if (lts1.initial, lts2.initial) in pairs:
        return _holds(**stats)
    return _fails([], **stats)


def bisim_check(lts1: Lts, lts2: Lts, weak: bool = False) -> Verdict:
    """Diagnostic bisimulation game (strong by default) with success-barb
    agreement; exists to reproduce the negative example, not as a gate."""
    if not (lts1.complete and lts2.complete):
        return _inconclusive("truncation")
    succ1, succ2 = _succ_map(lts1), _succ_map(lts2)
    reach1, reach2 = _tau_reach(lts1, succ1), _tau_reach(lts2, succ2)

    def matches(lts, succ, reach, j, label):
        if not weak:
            return {dst for lab, dst, _ in succ[j] if lab == label}
        out = set()
        if label == "tau":
            return set(reach[j])
        for k in reach[j]:
            for lab, dst, _ in succ[k]:
                if lab == label:
                    out.update(reach[dst])
        return out

    pairs = {
        (i, j)
        for i in range(len(lts1.states))
        for j in range(len(lts2.states))
        if lts1.barbs[i] == lts2.barbs[j]
    }
    changed = True
    while changed:
        changed = False
        for (i, j) in list(pairs):
            ok = all(
                any((i2, j2) in pairs for j2 in matches(lts2, succ2, reach2, j, label))
                for label, i2, _ in succ1[i]
            ) and all(
                any((i2, j2) in pairs for i2 in matches(lts1, succ1, reach1, i, label))
                for label, j2, _ in succ2[j]
            )
            if not ok:
                pairs.discard((i, j))
                changed = True
    if (lts1.initial, lts2.initial) in pairs:
        return _holds(pairs=len(pairs))
    return _fails([], pairs=len(pairs))


# -- encoding-level helpers -----------------------------------------------------------

def rename_source_channels(config: cqp.CqpConfig, gamma: dict) -> cqp.CqpConfig:
    phi = tuple(gamma.get(c, c) for c in config.phi)
    if isinstance(config, cqp.CqpPure):
        return cqp.CqpPure(config.sigma, phi, cqp.substitute(config.term, gamma))
    return cqp.CqpDist(config.cases, config.var, config.r, phi, cqp.substitute(config.term, gamma))


def rename_target_channels(config: qccs.QccsConfig, gamma: dict) -> qccs.QccsConfig:
    term = config.term
    if isinstance(term, qccs.Restrict):
        # the outermost restriction carries the configuration's channel list
        renamed = qccs.Restrict(
            qccs.substitute(term.cont, gamma), tuple(gamma.get(c, c) for c in term.chans)
        )
    else:
        renamed = qccs.substitute(term, gamma)
    return qccs.QccsConfig(renamed, config.rho)


def rename_source_qubits(config: cqp.CqpConfig, gamma: dict) -> cqp.CqpConfig:
    values = list(gamma.values())
    if len(set(values)) != len(values):
        raise NoCloningViolation(f"non-injective qubit substitution {gamma}")
    if isinstance(config, cqp.CqpPure):
        sigma = quantum.StateVector(
            tuple(gamma.get(n, n) for n in config.sigma.qubit_names), config.sigma.amps
        )
        return cqp.CqpPure(sigma, config.phi, cqp.subst_qubit(config.term, gamma))
    cases = tuple(
        (p, quantum.StateVector(tuple(gamma.get(n, n) for n in s.qubit_names), s.amps))
        for p, s in config.cases
    )
    return cqp.CqpDist(cases, config.var, config.r, config.phi, cqp.subst_qubit(config.term, gamma))


def rename_target_qubits(config: qccs.QccsConfig, gamma: dict) -> qccs.QccsConfig:
    rho = quantum.DensityMatrix(
        tuple(gamma.get(n, n) for n in config.rho.qubit_names), config.rho.entries
    )
    return qccs.QccsConfig(qccs.subst_qubit(config.term, gamma), rho)


def _target_equal(c1: qccs.QccsConfig, c2: qccs.QccsConfig, tol: float) -> bool:
    return c1.term == c2.term and c1.rho.qubit_names == c2.rho.qubit_names and bool(
        np.allclose(c1.rho.entries, c2.rho.entries, rtol=0.0, atol=tol)
    )


def check_name_invariance(source: cqp.CqpConfig, gamma: dict, tol: float = DEFAULT_TOL) -> Verdict:
    """Structural equality of translate-then-rename and rename-then-translate.

    The renaming must avoid integer literals: measurement introduces them on
    both the source branch rule and the target choice, so remapping them is
    the name-clash case the invariance statement excludes.
    """
    clashes = [c for c in gamma if c.isdigit()]
    if clashes:
        return _inconclusive(f"renaming remaps measurement literals {clashes}")
    left = encode.encode_config(rename_source_channels(source, gamma)).config
    right = rename_target_channels(encode.encode_config(source).config, gamma)
    if _target_equal(left, right, tol):
        return _holds()
    return _fails([f"gamma={gamma}"])


def check_qubit_invariance(source: cqp.CqpConfig, gamma: dict, tol: float = DEFAULT_TOL) -> Verdict:
    left = encode.encode_config(rename_source_qubits(source, gamma)).config
    right = rename_target_qubits(encode.encode_config(source).config, gamma)
    if _target_equal(left, right, tol):
        return _holds()
    return _fails([f"gamma={gamma}"])


# -- operational correspondence --------------------------------------------------------

def _canonical_register_order(names, initial_order):
    base = [n for n in initial_order if n in names]
    extras = sorted(set(names) - set(initial_order), key=lambda n: (len(n), n))
    return tuple(base + extras)


@dataclass
class _EncodedSpace:
    """Source exploration plus memoised translations of its states."""

    lts: Lts
    encoded: list[qccs.QccsConfig]
    op_tables: list[dict]


def _encode_space(source, budget, tol, perm_mode="on_demand") -> _EncodedSpace:
    lts = build_lts(source, cqp_system(perm_mode, tol), budget)
    encoded = []
    op_tables = []
    for idx, state in enumerate(lts.states):
        out = encode.encode_config(state, check=(idx == lts.initial))
        encoded.append(out.config)
        op_tables.append(out.op_table)
    return _EncodedSpace(lts, encoded, op_tables)


def _completeness_detail(source, budget, tol):
    """Match every explored source step with at most one target step.

    Returns (verdict, matched, space) where matched maps source edges to
    the matching target configuration (None for permutation steps, which
    are emulated by doing nothing)."""
    space = _encode_space(source, budget, tol)
    lts = space.lts
    matched = []
    fallbacks = 0
    for src, label, dst, _ in lts.edges:
        enc_src, enc_dst = space.encoded[src], space.encoded[dst]
        if label.startswith("R-Perm"):
            # emulated by doing nothing.  The stored successor may be an
            # alpha-rebound representative, so rebuild the permuted
            # configuration itself: its translation must be a pure register
            # reorder of the source translation, and the representative must
            # be congruent to it.
            perm = tuple(int(x) for x in re.findall(r"\d+", label))
            stepped = cqp.apply_perm(lts.states[src], perm).next
            enc_stepped = encode.encode_config(stepped, check=False).config
            if (
                enc_src.term == enc_stepped.term
                and quantum.density_equal_mod_order(enc_src.rho, enc_stepped.rho, tol)
                and cqp.congruent(stepped, lts.states[dst], tol)
            ):
                matched.append(((src, label, dst), None))
                continue
            return _fails(lts.path_to(dst) or [label], edge=label, **lts.stats()), matched, space
        candidates = qccs.reduce_steps(enc_src, {}, {}, tol)
        hit = None
        for cand in candidates:
            if qccs.congruent(enc_dst, cand.next, tol):
                hit = cand.next
                break
        fallback_cut = False
        if hit is None:
            # measurement under parallel composition: the translated
            # distribution is correspondence similar to the stepped target;
            # the preorder is taken size-sensitive, which also rules out
            # matching an unrelated parallel step.  The game runs on its own
            # small budget; cutting it makes the verdict inconclusive, not
            # failing.
            fb_budget = Budget(min(budget.max_depth, 32), min(budget.max_states, 220))
            l1 = build_lts(enc_dst, qccs_system(tol=tol, labelled=True), fb_budget)
            for cand in candidates:
                if cand.next.rho.num_qubits != enc_dst.rho.num_qubits:
                    continue
                fallbacks += 1
                l2 = build_lts(cand.next, qccs_system(tol=tol, labelled=True), fb_budget)
                outcome = corr_sim_check(l1, l2, size_sensitive=True)
                if outcome.holds:
                    hit = cand.next
                    break
                if outcome.status == "inconclusive":
                    fallback_cut = True
        if hit is None:
            if fallback_cut:
                return _inconclusive("fallback budget", edge=label, **lts.stats()), matched, space
            return _fails(lts.path_to(dst) or [label], edge=label, **lts.stats()), matched, space
        matched.append(((src, label, dst), hit))
    if lts.truncated:
        return _inconclusive("budget", matched_edges=len(matched), **lts.stats()), matched, space
    verdict = _holds(matched_edges=len(matched), corr_sim_fallbacks=fallbacks, **lts.stats())
    return verdict, matched, space


def check_completeness(source, budget: Budget = Budget(), tol: float = DEFAULT_TOL) -> Verdict:
    verdict, _, _ = _completeness_detail(source, budget, tol)
    return verdict


def check_soundness(
    source,
    budget: Budget = Budget(),
    tol: float = DEFAULT_TOL,
    space: _EncodedSpace | None = None,
    target_lts: Lts | None = None,
) -> Verdict:
    """Every explored target derivative is a choice-resolution away from the
    translation of a source derivative (with permutations and branch picks
    inserted on the source side)."""
    space = space or _encode_space(source, budget, tol)
    src_lts = space.lts
    initial_order = (
        source.sigma.qubit_names if isinstance(source, cqp.CqpPure) else source.sigma_names
    )
    tgt_lts = target_lts or build_lts(space.encoded[src_lts.initial], qccs_system(tol=tol), budget)

    candidate_keys: dict[str, int] = {}
    for idx, state in enumerate(src_lts.states):
        enc_candidates = [space.encoded[idx]]
        if isinstance(state, cqp.CqpPure):
            order = _canonical_register_order(state.sigma.qubit_names, initial_order)
            if order != state.sigma.qubit_names:
                perm = tuple(state.sigma.qubit_names.index(n) for n in order)
                restored = cqp.apply_perm(state, perm).next
                enc_candidates.append(encode.encode_config(restored, check=False).config)
        for cand in enc_candidates:
            candidate_keys.setdefault(qccs.canonical_key(cand), idx)

    succ = _succ_map(tgt_lts)
    tgt_keys = [qccs.canonical_key(s) for s in tgt_lts.states]
    unmatched = []
    for t_idx in range(len(tgt_lts.states)):
        # choice-only completions: follow edges that resolve a choice
        closure = {t_idx}
        queue = deque([t_idx])
        found = tgt_keys[t_idx] in candidate_keys
        while queue and not found:
            cur = queue.popleft()
            for _, dst, choice in succ[cur]:
                if choice and dst not in closure:
                    closure.add(dst)
                    if tgt_keys[dst] in candidate_keys:
                        found = True
                        break
                    queue.append(dst)
        if not found:
            unmatched.append(t_idx)
    stats = {
        "source_states": len(src_lts.states),
        "target_states": len(tgt_lts.states),
        "truncated": bool(src_lts.truncated or tgt_lts.truncated),
    }
    if src_lts.truncated or tgt_lts.truncated:
        # an unmatched target may have its source preimage beyond the budget
        return _inconclusive("budget", unmatched=len(unmatched), **stats)
    if unmatched:
        return _fails(tgt_lts.path_to(unmatched[0]), **stats)
    return _holds(**stats)


def _register_size_from_detail(source, verdict, matched, space) -> Verdict:
    src_size = source.sigma.num_qubits if isinstance(source, cqp.CqpPure) else len(source.sigma_names)
    root = space.encoded[space.lts.initial]
    if root.rho.num_qubits != src_size:
        return _fails([f"root sizes {src_size} vs {root.rho.num_qubits}"])
    if verdict.fails:
        return verdict
    for (src, label, dst), target in matched:
        if target is None:
            continue
        if target.rho.num_qubits != space.lts.sizes[dst]:
            return _fails(
                [label, f"sizes {space.lts.sizes[dst]} vs {target.rho.num_qubits}"],
                **space.lts.stats(),
            )
    if verdict.status == "inconclusive":
        return verdict
    return _holds(matched_edges=len(matched), **space.lts.stats())


def check_register_size(source, budget: Budget = Budget(), tol: float = DEFAULT_TOL) -> Verdict:
    """Translations never change the register size, at the root and along
    every matched derivative pair."""
    verdict, matched, space = _completeness_detail(source, budget, tol)
    return _register_size_from_detail(source, verdict, matched, space)


def run_instance_checks(
    source,
    budget: Budget = Budget(),
    seed: int = 0,
    tol: float = DEFAULT_TOL,
) -> dict[str, Verdict]:
    """All per-instance criteria over one source, sharing the explorations.

    Used by the corroboration campaign: one source exploration with its
    per-state translations backs completeness, soundness and register-size;
    one target exploration backs soundness, success agreement and
    divergence reflection.
    """
    rng = random.Random(seed)
    comp, matched, space = _completeness_detail(source, budget, tol)
    tgt_lts = build_lts(space.encoded[space.lts.initial], qccs_system(tol=tol), budget)
    return {
        "completeness": comp,
        "soundness": check_soundness(source, budget, tol, space=space, target_lts=tgt_lts),
        "name_invariance": check_name_invariance(source, random_channel_renaming(source, rng), tol),
        "qubit_invariance": check_qubit_invariance(source, random_qubit_renaming(source, rng), tol),
        "register_size": _register_size_from_detail(source, comp, matched, space),
        "congruence_preservation": check_congruence_preservation(source, seed, tol),
        "success": check_success(source, budget, tol, source_lts=space.lts, target_lts=tgt_lts),
        "divergence_reflection": check_divergence_reflection(
            source, budget, tol, source_lts=space.lts, target_lts=tgt_lts
        ),
    }


def check_divergence_reflection(
    source,
    budget: Budget = Budget(),
    tol: float = DEFAULT_TOL,
    source_lts: Lts | None = None,
    target_lts: Lts | None = None,
) -> Verdict:
    src_lts = source_lts or build_lts(source, cqp_system(tol=tol), budget)
    if target_lts is None:
        target = encode.encode_config(source).config
        target_lts = build_lts(target, qccs_system(tol=tol), budget)
    src_div = detect_divergence(src_lts)
    tgt_div = detect_divergence(target_lts)
    stats = {"source": src_div.status, "target": tgt_div.status}
    if tgt_div.status == "inconclusive" or src_div.status == "inconclusive":
        return _inconclusive("truncation", **stats)
    if tgt_div.holds and not src_div.holds:
        return _fails([], **stats)
    return _holds(**stats)


def check_success(
    source,
    budget: Budget = Budget(),
    tol: float = DEFAULT_TOL,
    source_lts: Lts | None = None,
    target_lts: Lts | None = None,
) -> Verdict:
    """May- and must-success agree between a source and its translation."""
    src_lts = source_lts or build_lts(source, cqp_system(tol=tol), budget)
    if target_lts is None:
        target = encode.encode_config(source).config
        target_lts = build_lts(target, qccs_system(tol=tol), budget)
    results = {
        "source_may": may_reach_success(src_lts).status,
        "target_may": may_reach_success(target_lts).status,
        "source_must": must_reach_success(src_lts).status,
        "target_must": must_reach_success(target_lts).status,
    }
    if "inconclusive" in results.values():
        return _inconclusive("truncation", **results)
    if results["source_may"] == results["target_may"] and results["source_must"] == results["target_must"]:
        return _holds(**results)
    return _fails([], **results)


def check_congruence_preservation(source, seed: int = 0, tol: float = DEFAULT_TOL) -> Verdict:
    variant = congruent_variant(source, random.Random(seed))
    if not cqp.congruent(source, variant, tol):
        return _fails(["variant generation broke source congruence"])
    left = encode.encode_config(source).config
    right = encode.encode_config(variant).config
    if qccs.congruent(left, right, tol):
        return _holds()
    return _fails([f"seed={seed}"])


# -- the separation suite ----------------------------------------------------------------

def counterexample_suite(tol: float = DEFAULT_TOL) -> dict:
    """Build the probe configuration on the four separating inputs, check
    the probe matrices against their known values, and run the may/must
    verdicts whose disagreement pattern the impossibility argument uses."""
    sq2 = 1.0 / np.sqrt(2.0)
    probe = quantum.amplitude_damping_probe(1.0)
    table = {"Q": probe}
    term = qccs.SuperOp(
        qccs.CustomOp("Q"),
        ("q",),
        qccs.Choice(
            qccs.IfThen(qccs.TraceNonzero(qccs.ProjectOp(0), ("q",)), qccs.Tau(qccs.Success())),
            qccs.IfThen(qccs.TraceNonzero(qccs.ProjectOp(1), ("q",)), qccs.Tau(qccs.Nil())),
        ),
    )
    inputs = {
        "|0><0|": ([1, 0], [[1, 0], [0, 0]], ("holds", "holds")),
        "|1><1|": ([0, 1], [[-1, 0], [0, 2]], ("holds", "fails")),
        "|+><+|": ([sq2, sq2], [[0, sq2], [sq2, 1]], ("fails", "fails")),
        "|-><-|": ([sq2, -sq2], [[0, -sq2], [-sq2, 1]], ("fails", "fails")),
    }
    rows = []
    all_ok = True
    for name, (amps, probe_matrix, (want_may, want_must)) in inputs.items():
        rho = quantum.outer(quantum.StateVector(("q",), np.array(amps, dtype=complex)))
        after = quantum.superop_apply(probe, ("q",), rho, tol)
        matrix_ok = bool(np.allclose(after.entries, np.array(probe_matrix), atol=tol))
        lts = build_lts(qccs.QccsConfig(term, rho), qccs_system(table=table, tol=tol))
        may = may_reach_success(lts)
        must = must_reach_success(lts)
        ok = matrix_ok and may.status == want_may and must.status == want_must
        all_ok = all_ok and ok
        rows.append(
            {
                "input": name,
                "probe_matrix_ok": matrix_ok,
                "may": may.status,
                "must": must.status,
                "expected_may": want_may,
                "expected_must": want_must,
                "states": len(lts.states),
                "ok": ok,
            }
        )
    return {"check": "counterexample", "rows": rows, "ok": all_ok}


# -- random configurations ------------------------------------------------------------------

_ONE_QUBIT_GATES = ("I", "X", "Y", "Z", "H")


def gen_config(seed: int, size: int = 4, depth: int = 6) -> cqp.CqpPure:
    """Deterministic, internally well-typed random configuration.

    Qubit registers stay at most ``size`` wide (counting the qubits that
    creation can add) and terms at most ``depth`` deep, keeping exploration
    tractable.  Parallel splits partition the owned qubits, input
    continuations only use their own split plus the received qubit, and at
    most one chain of qubit creations exists per configuration, which keeps
    every reachable state well-typed and every translation well-formed.
    """
    rng = random.Random(seed)
    n = rng.randint(1, max(1, min(size, 3)))
    names = tuple(f"q{i}" for i in range(n))
    if rng.random() < 0.4:
        amps = np.zeros(2 ** n)
        amps[rng.randrange(2 ** n)] = 1.0
    else:
        npr = np.random.default_rng(seed)
        amps = npr.standard_normal(2 ** n) + 1j * npr.standard_normal(2 ** n)
        amps = amps / np.linalg.norm(amps)
    phi = tuple(f"c{i}" for i in range(rng.randint(0, 2)))
    counter = [0]
    budget = [max(0, min(size, 4) - n)]
    term = _gen_term(rng, list(names), list(phi), depth, True, counter, budget)
    config = cqp.CqpPure(quantum.StateVector(names, amps), phi, term)
    cqp.typecheck_internal(config)
    return config


def _gen_term(rng, owned, chans, depth, allow_new, counter, qubit_budget) -> cqp.Term:
    def fresh(prefix):
        counter[0] += 1
        return f"{prefix}{counter[0]}"

    options = ["nil", "ok"]
    if depth > 0:
        if len(owned) + len(chans) > 0:
            options += ["par"]
        if owned and chans:
            options += ["out", "out"]
        if chans:
            options += ["in", "in"]
        if owned:
            options += ["trans", "trans", "measure", "measure"]
        options += ["newchan"]
        if allow_new and qubit_budget[0] > 0:
            options += ["newqbit"]
    pick = rng.choice(options)
    if pick == "nil":
        return cqp.Nil()
    if pick == "ok":
        return cqp.Success()
    if pick == "par":
        left_owned, right_owned = [], []
        for q in owned:
            (left_owned if rng.random() < 0.5 else right_owned).append(q)
        left_new = rng.random() < 0.5
        return cqp.Par(
            _gen_term(rng, left_owned, list(chans), depth - 1, allow_new and left_new, counter, qubit_budget),
            _gen_term(rng, right_owned, list(chans), depth - 1, allow_new and not left_new, counter, qubit_budget),
        )
    if pick == "out":
        q = rng.choice(owned)
        rest = [o for o in owned if o != q]
        return cqp.Out(rng.choice(chans), q, _gen_term(rng, rest, chans, depth - 1, allow_new, counter, qubit_budget))
    if pick == "in":
        var = fresh("v")
        inner = _gen_term(rng, owned + [var], chans, depth - 1, allow_new, counter, qubit_budget)
        return cqp.In(rng.choice(chans), var, inner)
    if pick == "trans":
        if len(owned) >= 2 and rng.random() < 0.3:
            qs = tuple(rng.sample(owned, 2))
            gate = "CNOT"
        else:
            qs = (rng.choice(owned),)
            gate = rng.choice(_ONE_QUBIT_GATES)
        return cqp.Trans(qs, gate, _gen_term(rng, owned, chans, depth - 1, allow_new, counter, qubit_budget))
    if pick == "measure":
        k = rng.randint(1, min(2, len(owned)))
        qs = tuple(rng.sample(owned, k))
        var = fresh("m")
        # the measured value doubles as a channel in roughly half the cases
        inner_chans = chans + [var] if rng.random() < 0.5 else chans
        return cqp.Measure(qs, var, _gen_term(rng, owned, inner_chans, depth - 1, allow_new, counter, qubit_budget))
    if pick == "newchan":
        var = fresh("d")
        return cqp.NewChan(var, _gen_term(rng, owned, chans + [var], depth - 1, allow_new, counter, qubit_budget))
    if pick == "newqbit":
        qubit_budget[0] -= 1
        var = fresh("x")
        return cqp.NewQbit(var, _gen_term(rng, owned + [var], chans, depth - 1, allow_new, counter, qubit_budget))
    raise AssertionError(pick)


def congruent_variant(config: cqp.CqpPure, rng: random.Random) -> cqp.CqpPure:
    """A structurally congruent rearrangement: parallel components shuffled
    and reassociated, unit processes sprinkled in, binders renamed."""

    def shuffle(t: cqp.Term) -> cqp.Term:
        match t:
            case cqp.Par():
                parts = [shuffle(p) for p in cqp._flatten_par(t)]
                if not parts:
                    return cqp.Nil()
                rng.shuffle(parts)
                out = parts[0]
                for p in parts[1:]:
                    out = cqp.Par(out, p) if rng.random() < 0.5 else cqp.Par(p, out)
                if rng.random() < 0.3:
                    out = cqp.Par(out, cqp.Nil())
                return out
            case cqp.In(c, x, p):
                return _maybe_rename(cqp.In(c, x, shuffle(p)))
            case cqp.Out(c, q, p):
                return cqp.Out(c, q, shuffle(p))
            case cqp.Trans(qs, g, p):
                return cqp.Trans(qs, g, shuffle(p))
            case cqp.Measure(qs, x, p):
                return _maybe_rename(cqp.Measure(qs, x, shuffle(p)))
            case cqp.NewChan(x, p):
                # not renamed: the deterministic channel rule keeps a fresh
                # binder's name, so the binder name leaks into the successor
                return cqp.NewChan(x, shuffle(p))
            case cqp.NewQbit(x, p):
                return _maybe_rename(cqp.NewQbit(x, shuffle(p)))
            case _:
                return t

    def _maybe_rename(t):
        if rng.random() >= 0.4:
            return t
        if t.var.isdigit():
            # measurement materialises integer literals on both sides of the
            # translation, so alpha-converting a literal binder is the
            # name-clash case the invariance statements exclude
            return t
        fresh = f"{t.var}_r{rng.randrange(1000)}"
        cont = cqp.substitute(t.cont, {t.var: fresh})
        match t:
            case cqp.In(c, _, _):
                return cqp.In(c, fresh, cont)
            case cqp.Measure(qs, _, _):
                return cqp.Measure(qs, fresh, cont)
            case cqp.NewChan(_, _):
                return cqp.NewChan(fresh, cont)
            case cqp.NewQbit(_, _):
                return cqp.NewQbit(fresh, cont)
        return t

    return cqp.CqpPure(config.sigma, config.phi, shuffle(config.term))


def _register_names(config: cqp.CqpConfig):
    return config.sigma.qubit_names if isinstance(config, cqp.CqpPure) else config.sigma_names


def random_channel_renaming(config: cqp.CqpConfig, rng: random.Random) -> dict:
    """Injective renaming of the configuration's symbolic channels to fresh
    names; measurement literals stay fixed."""
    free = set(config.phi) | {c for c in cqp.free_names(config.term) if not c.isdigit()}
    free -= set(_register_names(config))
    return {c: f"u{i}" for i, c in enumerate(sorted(free))}


def random_qubit_renaming(config: cqp.CqpConfig, rng: random.Random) -> dict:
    """A permutation of the register names: always injective, and it keeps
    the fresh-name convention for created qubits stable."""
    names = list(_register_names(config))
    shuffled = names[:]
    rng.shuffle(shuffled)
    return dict(zip(names, shuffled))
