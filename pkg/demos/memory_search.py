"""
Searching for a memory strategy that beats the bound
====================================================

A memory policy picks a local model for each trial from the previous trials'
settings and outcomes. Exhaustive search and hill climbing both fail to find a
negative per-trial drift under unbiased settings.
"""

from bellmem import SettingsDistribution, SourceModel, exhaustive_policy_search, hill_climb_policy, make_memory_policy, run_session, t_statistic

dist = SettingsDistribution()

# %%
for depth in (0, 1):
    r = exhaustive_policy_search(depth, dist)
    print(f"depth {depth}: best drift {r.best_drift}, {r.optimal_count} optimal of {r.evaluations}")

# %%
# Two-trial memory over full (setting, outcome) classes, solved class by class.
r2 = exhaustive_policy_search(2, dist, coarse="full", classwise=True)
print(f"depth 2 full classes: best drift {r2.best_drift}")

# %%
climb = hill_climb_policy(1, iters=200, restarts=50, seed=3, dist=dist)
print(f"hill climb: min over restarts {climb.restart_drifts.min():.2e}")

# %%
# Playing the winning policy confirms the analytic result.
s = run_session(make_memory_policy(r2.spec), SourceModel(1.0), dist, 10**5, seed=4)
print(f"simulated 4T/n = {t_statistic(s).b_joint4:+.4f}")
print("\n".join(r2.spec.to_text().splitlines()[:5]))
