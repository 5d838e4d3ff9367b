import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stepforge.corpus import labelled_corpus
from stepforge.critic import FEATURE_NAMES, CriticParams
from stepforge.env import Failed, Solved, Statement, ToyEnv, format_formula, oracle_search, parse_state, replay
from stepforge.policy import HeuristicPolicy, LearnedPolicy, TacticCandidate
from stepforge.search import (
    TERMINATIONS,
    AttemptOutcome,
    Mode,
    NodeStatus,
    ReplayMismatch,
    SearchBudget,
    SearchTree,
    bf_priority,
    cg_priority,
    parse_budget,
    read_outcomes,
    run_attempt,
    run_passes,
    shortest_proof,
    write_outcomes,
)
from tests.test_formula import formulas


def node(depth, total):
    tree = SearchTree()
    parent = tree.add(parse_state("⊢ A"), None, None, 0.0)
    n = parent
    for _ in range(depth):
        n = tree.add(parse_state(f"⊢ {'A ∧ ' * (n.depth + 1)}A"), n, "t", total / depth)
    return n


def goal_weight_critic():
    w = [0.0] * len(FEATURE_NAMES)
    w[0] = -1.0
    return CriticParams(tuple(w))


def outcome(pass_index, proof):
    return AttemptOutcome("s", pass_index, "bf", proof, 1, 0.0, 1, "proof" if proof else "budget_K")


# ------------------------------------------------------------------- priorities


def test_bf_priority_is_mean_logprob():
    tree = SearchTree()
    root = tree.add(parse_state("⊢ A -> B -> A"), None, None, 0.0)
    a = tree.add(parse_state("h1 : A\n⊢ B -> A"), root, "intro h1", -0.5)
    b = tree.add(parse_state("h1 : A\nh2 : B\n⊢ A"), a, "intro h2", -1.5)
    assert bf_priority(b) == -1.0
    assert bf_priority(a) == -0.5
    assert bf_priority(node(1, -0.2)) == pytest.approx(-0.2)
    assert bf_priority(node(3, -0.9)) > bf_priority(node(3, -2.7))
    with pytest.raises(ValueError):
        bf_priority(root)


def test_cg_priority():
    n = node(2, -1.0)
    assert cg_priority(CriticParams(), n) == 0.0
    tree = SearchTree()
    root = tree.add(parse_state("⊢ A\n\n⊢ B"), None, None, 0.0)
    child = tree.add(parse_state("⊢ B"), root, "x", -1.0)
    critic = goal_weight_critic()
    assert cg_priority(critic, child) > cg_priority(critic, root)


# ------------------------------------------------------------------ run_attempt


def test_a_implies_a_bf():
    st_ = Statement("t1", "A -> A")
    out = run_attempt(st_, ToyEnv(), HeuristicPolicy(), None, SearchBudget(1, 8, 10), 0)
    assert out.terminated_by == "proof"
    assert len(out.proof) == len(oracle_search(st_, 6)) == 2
    assert out.expansions_used == 2


def test_one_expansion_is_not_enough():
    out = run_attempt(Statement("t1", "A -> A"), ToyEnv(), HeuristicPolicy(), None, SearchBudget(1, 8, 1), 0)
    assert out.terminated_by == "budget_K"
    assert out.proof is None and out.expansions_used == 1


def test_unprovable_atom_empties_frontier():
    out = run_attempt(Statement("a", "A"), ToyEnv(), HeuristicPolicy(), None, SearchBudget(1, 8, 10), 0)
    assert out.terminated_by == "frontier_empty"
    assert out.expansions_used < 10
    assert oracle_search(Statement("a", "A"), 12) is None


def test_zero_k_is_rejected():
    with pytest.raises(ValueError):
        SearchBudget(1, 8, 0)


def test_cg_finds_proof_and_needs_critic():
    st_ = Statement("t", "A -> B -> A")
    out = run_attempt(st_, ToyEnv(), HeuristicPolicy(), goal_weight_critic(), SearchBudget(1, 8, 10, mode="cg"), 0)
    assert out.mode == "cg" and out.terminated_by == "proof"
    with pytest.raises(ValueError):
        run_attempt(st_, ToyEnv(), HeuristicPolicy(), None, SearchBudget(1, 8, 10, mode="cg"), 0)
    with pytest.raises(ValueError):
        run_attempt(st_, ToyEnv(), HeuristicPolicy(), None, SearchBudget(2, 8, 10, mode="bf+cg"), 0)


def test_cg_still_records_edge_logprobs():
    out = run_attempt(Statement("t", "(A -> B) -> A -> B ∨ C"), ToyEnv(), LearnedPolicy(), CriticParams(),
                      SearchBudget(1, 8, 20, mode="cg"), 0)
    assert all(n.edge_logprob < 0 for n in out.tree.nodes[1:])


def test_time_limit_with_fake_clock():
    ticks = iter(range(1000))
    out = run_attempt(Statement("t", "A -> B -> C -> A"), ToyEnv(), HeuristicPolicy(), None,
                      SearchBudget(1, 8, 100, wall_clock_limit_s=2.5), 0, clock=lambda: float(next(ticks)))
    assert out.terminated_by == "budget_time"
    assert out.expansions_used < 4


def test_replay_mismatch_is_fatal():
    class LyingEnv(ToyEnv):
        """Solves once during search, then refuses the same step on replay."""

        solved = 0

        def apply_tactic(self, state, tactic):
            result = super().apply_tactic(state, tactic)
            if isinstance(result, Solved):
                LyingEnv.solved += 1
                if LyingEnv.solved > 1:
                    return Failed("inapplicable")
            return result

    with pytest.raises(ReplayMismatch):
        run_attempt(Statement("t", "A -> A"), LyingEnv(), HeuristicPolicy(), None, SearchBudget(1, 8, 10), 0)


def test_policy_that_proposes_nothing_exhausts_nodes():
    class Mute:
        def propose(self, state, context, n, temperature, rng):
            return []

    out = run_attempt(Statement("t", "A -> A"), ToyEnv(), Mute(), None, SearchBudget(1, 8, 10), 0)
    assert out.terminated_by == "frontier_empty"
    assert out.tree.nodes[0].status is NodeStatus.EXHAUSTED
    assert out.policy_calls == 1


def test_failed_tactics_are_recorded_as_dead_edges():
    class Bad:
        def propose(self, state, context, n, temperature, rng):
            return [TacticCandidate("split", -0.1, "total"), TacticCandidate("intro h1", -0.2, "total")]

    out = run_attempt(Statement("t", "A -> A"), ToyEnv(), Bad(), None, SearchBudget(1, 8, 10), 0)
    assert (0, "split", "inapplicable") in out.tree.dead_edges


def test_dedup_reparents_to_better_arrival():
    st_ = Statement("d", "(A -> B) -> (A -> B) -> A -> B")
    out = run_attempt(st_, ToyEnv(), HeuristicPolicy(noise=0.0), None, SearchBudget(1, 16, 50), 0)
    fps = [n.state.fingerprint for n in out.tree.nodes]
    assert len(fps) == len(set(fps))
    for n in out.tree.nodes:
        if n.parent is not None:
            p = out.tree.nodes[n.parent]
            assert n.depth == p.depth + 1
            assert n.path_logprob_sum == pytest.approx(p.path_logprob_sum + n.edge_logprob)


# ------------------------------------------------------------------- run_passes


def test_bf_plus_cg_split():
    outs = run_passes(Statement("t", "A -> A"), ToyEnv(), HeuristicPolicy(), CriticParams(),
                      SearchBudget(2, 8, 10, mode="bf+cg"), 0)
    assert [o.mode for o in outs] == ["bf", "cg"]
    outs = run_passes(Statement("t", "A -> A"), ToyEnv(), HeuristicPolicy(), None, SearchBudget(4, 8, 10), 7)
    assert [o.seed for o in outs] == [7, 8, 9, 10]
    assert len(run_passes(Statement("t", "A -> A"), ToyEnv(), HeuristicPolicy(), None, SearchBudget(1, 8, 10))) == 1


def test_identical_seeds_identical_outcomes():
    st_ = Statement("t", "(A -> B) -> (B -> C) -> A -> C")
    outs = run_passes(st_, ToyEnv(), HeuristicPolicy(), None, SearchBudget(2, 4, 30), 3, seed_stride=0)
    a, b = (o.to_dict() for o in outs)
    a.pop("wall_time_s"), b.pop("wall_time_s"), a.pop("pass_index"), b.pop("pass_index")
    assert a == b


def test_threaded_passes_match_sequential():
    st_ = Statement("t", "(A -> B) -> (B -> C) -> A -> C")
    budget = SearchBudget(4, 4, 30, mode="bf+cg")
    seq = run_passes(st_, ToyEnv(), LearnedPolicy(), goal_weight_critic(), budget, 1)
    par = run_passes(st_, ToyEnv(), LearnedPolicy(), goal_weight_critic(), budget, 1, workers=4)
    assert [o.proof for o in seq] == [o.proof for o in par]
    assert [o.nodes_created for o in seq] == [o.nodes_created for o in par]


# ---------------------------------------------------------------- shortest_proof


def test_shortest_proof():
    five, two, nine = ("t",) * 5, ("a", "b"), ("t",) * 9
    assert shortest_proof([outcome(0, five), outcome(1, two), outcome(2, nine)]) == two
    assert shortest_proof([outcome(0, None), outcome(1, None)]) is None
    assert shortest_proof([outcome(3, ("x", "y")), outcome(1, ("p", "q"))]) == ("p", "q")


# ------------------------------------------------------------ budgets and files


def test_budget_validation_and_parsing():
    with pytest.raises(ValueError):
        SearchBudget(3, 8, 10, mode="bf+cg")
    with pytest.raises(ValueError):
        SearchBudget(1, 0, 10)
    b = parse_budget("256x32x600", "bf+cg", 60.0)
    assert (b.passes, b.samples_per_expansion, b.max_expansions, b.mode) == (256, 32, 600, Mode.BF_PLUS_CG)
    assert str(b) == "256x32x600"
    assert parse_budget(" 1 × 8 × 2 ").max_expansions == 2
    with pytest.raises(ValueError):
        parse_budget("1x8")


def test_outcome_invariant():
    with pytest.raises(ValueError):
        AttemptOutcome("s", 0, "bf", ("t",), 1, 0.0, 1, "budget_K")
    with pytest.raises(ValueError):
        AttemptOutcome("s", 0, "bf", None, 1, 0.0, 1, "proof")


def test_outcomes_jsonl_round_trip(tmp_path):
    outs = run_passes(Statement("t", "A -> B -> A"), ToyEnv(), HeuristicPolicy(), None, SearchBudget(2, 8, 10), 0)
    write_outcomes(tmp_path / "o.jsonl", outs)
    back = read_outcomes(tmp_path / "o.jsonl")
    assert back == outs
    assert all(o.terminated_by in TERMINATIONS for o in back)


def test_tree_round_trip():
    out = run_attempt(Statement("t", "(A -> B) -> A -> B ∨ C"), ToyEnv(), HeuristicPolicy(), None,
                      SearchBudget(1, 8, 20), 0)
    back = SearchTree.from_dict(out.tree.to_dict(), parse_state)
    assert back.to_dict() == out.tree.to_dict()
    for a, b in zip(out.tree.nodes, back.nodes):
        assert a.path_logprob_sum == pytest.approx(b.path_logprob_sum)
    lazy = SearchTree.from_dict(out.tree.to_dict())
    leaf = lazy.node_id("no goals")
    assert leaf is not None and lazy.reaches_no_goals(0)


# ------------------------------------------------------------------- properties


@settings(max_examples=80, deadline=None)
@given(formulas(max_leaves=7), st.integers(1, 6), st.integers(1, 30), st.integers(0, 1000))
def test_budget_safety_and_dedup_bound(f, S, K, seed):
    st_ = Statement("p", format_formula(f))
    out = run_attempt(st_, ToyEnv(), HeuristicPolicy(), None, SearchBudget(1, S, K), seed)
    assert out.expansions_used <= K
    assert out.policy_calls <= K
    assert out.max_candidates <= S
    assert out.nodes_created <= out.expansions_used * S + 1
    if out.proof is not None:
        assert replay(ToyEnv(), st_, out.proof).states[-1].is_no_goals


def test_bf_complete_on_toy_corpus():
    items = labelled_corpus(60, seed=3, oracle_depth=8, formula_depth=4)
    for item in items:
        out = run_attempt(item.statement, ToyEnv(), HeuristicPolicy(noise=0.0), None,
                          SearchBudget(1, 64, 3000), 0, keep_tree=False)
        assert (out.proof is not None) == item.provable, item.statement.goal_text
        if out.proof is None:
            assert out.terminated_by == "frontier_empty"


def test_infinite_time_limit_default():
    assert math.isinf(SearchBudget().wall_clock_limit_s)
