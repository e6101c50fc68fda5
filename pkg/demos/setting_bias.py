"""
Biased setting choices fake a violation
=======================================

When both parties favour their unprimed setting, the per-trial count drifts
negative for the demo model even though it is local. The conditional
estimator, which normalizes per setting pair, does not move.
"""

from bellmem import SettingsDistribution, SourceModel, b_conditional, counts_from_records, demo_model, run_session, t_statistic
from bellmem.search import exhaustive_policy_search

n = 10**6
for eps in (0.0, 0.05, 0.1, 0.2):
    s = run_session(demo_model(), SourceModel(1.0), SettingsDistribution(eps, eps), n, seed=7)
    b4 = t_statistic(s).b_joint4
    bc = b_conditional(counts_from_records(s))
    print(f"eps={eps:4}: 4T/n = {b4:+.4f} (closed form {-2 * eps * (1 + eps):+.4f}), B_cond = {bc.value:+.4f}")

# %%
# The best deterministic strategy under eps = 0.1 is "always +", not the demo model.
best = exhaustive_policy_search(0, SettingsDistribution(0.1, 0.1))
print(best.spec.rules[0][1], best.best_drift)
