"""Critic-guided search finds longer proofs than best-first search.

Best-first search ranks states by mean tactic log-likelihood and so favours
short, likely routes.  The critic ignores likelihood and walks towards states
that look nearly finished, even along longer routes.  The corpus below plants
a short and a long route to the same sub-goal so the two behaviours differ.
"""

# %%
from stepforge.analytics import mode_length_means
from stepforge.corpus import deep_corpus
from stepforge.critic import hygiene, train_critic
from stepforge.env import ToyEnv
from stepforge.iterate import ProblemPool, ProofStore, RoundConfig, run_round
from stepforge.ledger import RunLedger
from stepforge.policy import HeuristicPolicy
from stepforge.search import SearchBudget, run_passes

env = ToyEnv()
policy = HeuristicPolicy()

# %% statements whose shortest proof has at least 4 tactics
corpus = deep_corpus(100, seed=0, min_length=4, oracle_depth=12, formula_depth=5, forks=0.8, atoms="ABCDEFGH")
print(corpus[0].statement.goal_text)
print("oracle lengths:", sorted(c.oracle_length for c in corpus)[::10])

# %% round 0: best-first only, trees kept for pair extraction
report = run_round(ProblemPool([c.statement for c in corpus]), RoundConfig(0, SearchBudget(1, 8, 200), 1e9),
                   env, policy, None, RunLedger(), ProofStore(), collect_pairs=True)
critic = train_critic(hygiene(report.pairs, 0.10, 0), 500, 0.3, 0).params
print("round 0 proved", report.proved, "of", len(corpus))

# %% evaluate both modes at the same 16x8x200 budget
ledger = RunLedger()
for mode in ("bf", "cg"):
    for c in corpus:
        ledger.extend(run_passes(c.statement, env, policy, critic, SearchBudget(16, 8, 200, mode=mode), 7,
                                 keep_tree=False))
bf, cg = mode_length_means(ledger.entries)
print(f"mean shortest proof length  bf {bf:.2f}  cg {cg:.2f}")
