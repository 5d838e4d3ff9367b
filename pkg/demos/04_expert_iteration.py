"""Expert iteration on a mixed toy dataset, then the usual statistics."""

# %%
import warnings

from stepforge.analytics import length_histogram, loglinear_fit, pass_at_n, summary_table
from stepforge.corpus import mixed_dataset
from stepforge.env import ToyEnv
from stepforge.iterate import ProblemPool, ProofStore, default_schedule, export_sft, run_expert_iteration
from stepforge.ledger import RunLedger
from stepforge.policy import LearnedPolicy
from stepforge.search import SearchBudget

# %% the default schedule escalates from a rapid scan to the capped budget
for cfg in default_schedule():
    print(cfg.round_index, cfg.budget, cfg.budget.mode.value, cfg.time_limit_s, cfg.rank_filter)

# %% four rounds; the policy and critic are refit after each
pool = ProblemPool(mixed_dataset(300, seed=0, formula_depth=5))
store, ledger = ProofStore(), RunLedger()
reports, policy, critic = run_expert_iteration(
    pool, default_schedule(), ToyEnv(), LearnedPolicy(), rounds=4, ledger=ledger, store=store,
    seed=0, reprove_budget=SearchBudget(1, 16, 50),
)
for r in reports:
    print(r.to_dict())

# %% solved and unsolved shares of the CPU spent
for row in summary_table(ledger.entries, store, len(pool.statements)):
    print(f"{row.label:>9s} {row.count:4d} {row.percent:5.1f}%  cpu {row.cpu_percent:5.1f}%")

# %% pass@N over every attempt a problem received
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    print(pass_at_n(ledger.entries, [1, 2, 4, 8]))

# %% proof lengths fall off roughly log-linearly
hist = length_histogram(store)
print(hist)
fit = loglinear_fit(hist)
print(f"slope {fit.slope:.3f}  r2 {fit.r_squared:.3f}")

# %% the proofs become supervised fine-tuning records
records = export_sft(store, pool.statements)
print(len(records), "records")
print(records[0]["prompt"], records[0]["completion"])
