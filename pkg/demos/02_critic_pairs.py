"""Preference pairs from search trees, cleaned and used to fit the linear critic."""

# %%
import numpy as np

from stepforge.corpus import labelled_corpus
from stepforge.critic import FEATURE_NAMES, hygiene, pair_accuracy, score_state, train_critic
from stepforge.env import ToyEnv, parse_state
from stepforge.iterate import ProblemPool, ProofStore, RoundConfig, run_round
from stepforge.ledger import RunLedger
from stepforge.policy import HeuristicPolicy
from stepforge.search import SearchBudget

# %% one search round over a labelled corpus, keeping the trees
items = labelled_corpus(200, seed=0, oracle_depth=6, formula_depth=5)
pool = ProblemPool([i.statement for i in items])
report = run_round(pool, RoundConfig(0, SearchBudget(1, 8, 50), 50.0), ToyEnv(), HeuristicPolicy(),
                   None, RunLedger(), ProofStore(), collect_pairs=True)
print(report.to_dict())

# %% path pairs dominate; most of them involve the trivially best "no goals" state
raw = report.pairs
kinds = {k: sum(p.kind == k for p in raw) for k in ("path", "sibling")}
print(len(raw), kinds, "touching no goals:", sum(p.has_no_goals for p in raw))

# %% hygiene drops duplicates and keeps 10% of the no-goals pairs
pairs = hygiene(raw, 0.10, seed=0)
print(len(pairs), "after hygiene")

# %% hold out 20%, train, and compare
rng = np.random.default_rng(0)
order = rng.permutation(len(pairs))
cut = len(pairs) // 5
test, train = [pairs[i] for i in order[:cut]], [pairs[i] for i in order[cut:]]
fit = train_critic(train, epochs=500, learning_rate=0.3, seed=0)
print("loss", round(fit.losses[0], 4), "->", round(fit.final_loss, 4))
print("train acc", pair_accuracy(fit.params, train), "held-out acc", pair_accuracy(fit.params, test))

# %% the learned weights, one per normalized feature
for name, w in zip(FEATURE_NAMES, fit.params.weights):
    print(f"{name:>22s} {w:+.3f}")

# %% scores: fewer, smaller goals rank higher
for pp in ["⊢ A", "h1 : A\n⊢ A ∧ B", "⊢ (A -> B) -> (B -> C) -> A -> C\n\n⊢ A ∨ B"]:
    print(round(score_state(fit.params, parse_state(pp)), 3), pp.replace("\n", " | "))
