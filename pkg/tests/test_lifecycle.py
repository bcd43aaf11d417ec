"""Phase chain, aggregation, chaos tags, classification, propagation."""

import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from whatif.errors import IllegalTransition, UnknownService
from whatif.lifecycle import (
    FAULT_KINDS,
    ChaosTag,
    FailureClass,
    Phase,
    ResourceNode,
    advance_to,
    aggregate_phase,
    classify_failure,
    find_node,
    propagate,
    revoke_chaos_tag,
    tag_chaos_target,
    transition,
)

U, P, R, S, F = Phase.UNINITIALIZED, Phase.PENDING, Phase.RUNNING, Phase.SUCCESS, Phase.FAILED
EXP, UNEXP = FailureClass.EXPECTED, FailureClass.UNEXPECTED

# Every way one child can look to its parent: four live phases, plus Failed
# split by classification (None behaves as Unexpected).
CHILD_KINDS = [(U, None), (P, None), (R, None), (S, None), (F, EXP), (F, UNEXP), (F, None)]


class TestTransition:
    def test_pending_to_running(self):
        node = ResourceNode("n", phase=P)
        transition(node, R)
        assert node.phase is R

    def test_uninitialized_to_pending(self):
        node = ResourceNode("n")
        transition(node, P)
        assert node.phase is P

    def test_terminal_guard(self):
        node = ResourceNode("n", phase=S)
        with pytest.raises(IllegalTransition):
            transition(node, F)

    def test_no_skips_no_backwards(self):
        legal = {(U, P), (P, R), (R, S), (R, F)}
        for a, b in itertools.product(Phase, Phase):
            node = ResourceNode("n", phase=a)
            if (a, b) in legal or a == b:
                transition(node, b)
            else:
                with pytest.raises(IllegalTransition):
                    transition(node, b)

    def test_same_phase_is_noop(self):
        node = ResourceNode("n", phase=R)
        transition(node, R)
        assert node.phase is R

    def test_advance_walks_the_chain(self):
        node = ResourceNode("n")
        hops = advance_to(node, F, at=3.0)
        assert hops == [P, R, F]
        assert node.phase is F
        assert node.phase_times[R] == 3.0


class TestAggregate:
    def test_all_success(self):
        assert aggregate_phase([(S, None)] * 3, 0) is S

    def test_one_still_running(self):
        assert aggregate_phase([(S, None), (R, None), (S, None)], 0) is R

    def test_tolerated_expected_failure(self):
        children = [(S, None), (F, EXP), (S, None)]
        assert aggregate_phase(children, 1) is S
        assert aggregate_phase(children, 0) is F

    def test_unexpected_always_fails(self):
        assert aggregate_phase([(S, None), (F, UNEXP)], 5) is F

    def test_pending_wins_over_running(self):
        assert aggregate_phase([(R, None), (U, None)], 0) is P

    def test_empty_children_vacuously_succeed(self):
        assert aggregate_phase([], 0) is S

    def test_order_independence(self):
        children = [(S, None), (F, EXP), (R, None), (P, None)]
        results = {aggregate_phase(list(perm), 1) for perm in itertools.permutations(children)}
        assert len(results) == 1


def aggregate_oracle(children, tolerated):
    """Independent restatement of the lifecycle table, by literal counting."""
    n_unexpected = len([1 for p, c in children if p is F and c is not EXP])
    n_expected = len([1 for p, c in children if p is F and c is EXP])
    if n_unexpected > 0:
        return F
    if n_expected > tolerated:
        return F
    if any(p is U or p is P for p, _ in children):
        return P
    if any(p is R for p, _ in children):
        return R
    return S


def all_multisets(max_size):
    for size in range(max_size + 1):
        yield from itertools.combinations_with_replacement(CHILD_KINDS, size)


def test_aggregate_exhaustive_oracle():
    """Every child multiset of size <= 4 for every tolerance 0..3."""
    checked = 0
    for children in all_multisets(4):
        for tolerated in range(4):
            assert aggregate_phase(list(children), tolerated) is aggregate_oracle(children, tolerated), (
                children, tolerated,
            )
            checked += 1
    assert checked > 1000


class TestChaosTags:
    def build(self):
        root = ResourceNode("scenario", kind="scenario")
        cluster = root.add_child(ResourceNode("masters", kind="cluster"))
        for i in range(2):
            cluster.add_child(ResourceNode(f"masters-{i}", phase=R))
        return root

    def test_tag_applies(self):
        tree = self.build()
        tag_chaos_target(tree, "masters-0", ChaosTag("kill", "killer"))
        node = find_node(tree, "masters-0")
        assert node.meta["metadata.Chaos"] == "kill"
        assert node.chaos_tag == ChaosTag("kill", "killer")

    def test_unknown_service(self):
        with pytest.raises(UnknownService):
            tag_chaos_target(self.build(), "ghost-0", ChaosTag("kill", "killer"))

    def test_revoke_removes(self):
        tree = self.build()
        tag_chaos_target(tree, "masters-0", ChaosTag("partition", "net"))
        revoke_chaos_tag(tree, "masters-0")
        assert find_node(tree, "masters-0").chaos_tag is None


class TestClassify:
    def test_tagged_kill_observed_kill(self):
        node = ResourceNode("n", phase=F, meta={"metadata.Chaos": "kill"})
        assert classify_failure(node, "kill") is EXP

    def test_untagged_crash(self):
        node = ResourceNode("n", phase=F)
        assert classify_failure(node, "crash") is UNEXP

    def test_mismatched_tag(self):
        node = ResourceNode("n", phase=F, meta={"metadata.Chaos": "partition"})
        assert classify_failure(node, "crash") is UNEXP

    def test_truth_table_exhaustive(self):
        modes = list(FAULT_KINDS) + ["crash"]
        for tag in list(FAULT_KINDS) + [None]:
            for mode in modes:
                meta = {"metadata.Chaos": tag} if tag else {}
                node = ResourceNode("n", phase=F, meta=meta)
                expected = EXP if (tag is not None and tag == mode) else UNEXP
                assert classify_failure(node, mode) is expected


# --- propagation ------------------------------------------------------------


def build_random_tree(rng: random.Random, max_depth=4, max_children=6):
    """A consistent ownership tree: internal phases equal their aggregates."""
    counter = itertools.count()

    def build(depth):
        node = ResourceNode(f"n{next(counter)}")
        if depth < max_depth and rng.random() < 0.6:
            node.kind = "cluster"
            node.tolerated = rng.randint(0, 2)
            for _ in range(rng.randint(1, max_children)):
                node.add_child(build(depth + 1))
        else:
            phase, fclass = rng.choice(CHILD_KINDS)
            node.phase = phase
            node.failure_class = fclass
        return node

    root = build(1)
    recompute_bottom_up(root)
    return root


def recompute_bottom_up(node):
    for child in node.children:
        recompute_bottom_up(child)
    if node.children:
        node.phase = aggregate_oracle(
            [(c.phase, c.failure_class) for c in node.children], node.tolerated,
        )


def running_leaves(node):
    if not node.children:
        return [node] if node.phase is R else []
    out = []
    for child in node.children:
        out.extend(running_leaves(child))
    return out


def test_propagate_examples():
    root = ResourceNode("scenario", kind="scenario")
    cluster = root.add_child(ResourceNode("masters", kind="cluster", phase=R))
    for i in range(4):
        cluster.add_child(ResourceNode(f"masters-{i}", phase=R))

    # Unexpected child failure with zero tolerance fails the cluster.
    node = find_node(cluster, "masters-0")
    node.phase = F
    node.failure_class = UNEXP
    propagate(cluster, "masters-0")
    assert cluster.phase is F

    # Expected failure within tolerance keeps the cluster running.
    root2 = ResourceNode("scenario", kind="scenario")
    cluster2 = root2.add_child(ResourceNode("masters", kind="cluster", phase=R))
    cluster2.tolerated = 1
    for i in range(4):
        cluster2.add_child(ResourceNode(f"masters-{i}", phase=R))
    node = find_node(cluster2, "masters-0")
    node.phase = F
    node.failure_class = EXP
    propagate(cluster2, "masters-0")
    assert cluster2.phase is R


def test_propagate_missing_leaf_is_noop():
    tree = ResourceNode("scenario", kind="scenario")
    before = tree.phase
    propagate(tree, "ghost")
    assert tree.phase is before and tree.children == []


@pytest.mark.parametrize("seed", range(120))
def test_propagate_matches_bottom_up_recompute(seed):
    rng = random.Random(seed)
    tree = build_random_tree(rng)
    leaves = running_leaves(tree)
    if not leaves:
        return
    victim = rng.choice(leaves)
    victim.phase = F
    victim.failure_class = rng.choice([EXP, UNEXP, None])

    propagate(tree, victim.name)
    actual = {n.name: n.phase for n in iter_all(tree)}

    recompute_bottom_up(tree)
    expected = {n.name: n.phase for n in iter_all(tree)}
    assert actual == expected


def iter_all(node):
    yield node
    for child in node.children:
        yield from iter_all(child)


# --- phase monotonicity property ----------------------------------------------

@given(st.lists(st.sampled_from(list(Phase)), max_size=8))
@settings(max_examples=200)
def test_phase_sequences_are_chain_prefixes(targets):
    """However a node is driven, its history is a prefix of U,P,R,(S|F)."""
    node = ResourceNode("n")
    history = [node.phase]
    for target in targets:
        try:
            transition(node, target)
        except IllegalTransition:
            continue
        if history[-1] is not node.phase:
            history.append(node.phase)
    chains = [[U, P, R, S], [U, P, R, F]]
    assert any(history == chain[: len(history)] for chain in chains)
