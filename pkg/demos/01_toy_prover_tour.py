"""A walk through the toy prover: formulas, proof states, tactics and search."""

# %%
import numpy as np

from stepforge.env import Statement, ToyEnv, apply_tactic, enumerate_tactics, init_state, negate, oracle_search
from stepforge.policy import HeuristicPolicy, LearnedPolicy, render_prompt
from stepforge.search import SearchBudget, run_attempt

env = ToyEnv()

# %% statements parse into a single goal with no hypotheses
st = Statement("syllogism", "(A -> B) -> (B -> C) -> A -> C")
s0 = init_state(st)
print(s0.pp)

# %% tactics act on the first goal; enumerate_tactics lists what applies
print(enumerate_tactics(s0))
s1 = apply_tactic(s0, "intro h1").new_state
print(s1.pp)

# %% the breadth-first oracle gives the shortest proof (capped at depth 12)
proof = oracle_search(st, 8)
print(len(proof), proof.tactics)

# %% the policy sees the same prompt layout an LLM prover would
print(render_prompt(st.id, proof.tactics[:2], "h1 : A -> B\nh2 : B -> C\n⊢ A -> C").rendered)

# %% best-first search with the heuristic policy
out = run_attempt(st, env, HeuristicPolicy(), None, SearchBudget(1, 8, 50), seed=0)
print(out.terminated_by, out.expansions_used, "expansions", out.nodes_created, "nodes")
print(out.proof)

# %% an untrained learned policy spreads mass evenly over tactic heads
pol = LearnedPolicy()
tactics, logp = pol.logprobs(s0, 1.0)
print({t: round(float(p), 3) for t, p in zip(tactics, np.exp(logp))})

# %% negation: "(A -> A) -> ⊥" has no proof, but its negation does
bad = Statement("contra", "(A -> A) -> ⊥")
print(negate(bad).goal_text)
print(oracle_search(bad, 8), oracle_search(negate(bad), 8).tactics)

# %% there is no rule that takes a conjunction hypothesis apart, so even
# "A ∧ ¬A -> ⊥" is out of reach of this fragment
print(oracle_search(negate(Statement("c", "A ∧ ¬A")), 12))
