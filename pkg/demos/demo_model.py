"""
The demonstration model and the sixteen deterministic strategies
=================================================================

A local deterministic model fixes every outcome in advance. Enumerating all
sixteen of them shows the count combination B never goes below zero.
"""

import numpy as np

from bellmem import (
    SettingsDistribution,
    SourceModel,
    b_value,
    behavior_from_lhv,
    demo_model,
    make_deterministic,
    run_session,
    t_statistic,
)
from bellmem.strategies import all_assignments

# %%
# Exact B for every deterministic assignment (A(a), A(a'); B(b), B(b')).
for a in all_assignments():
    print(f"{str(a):>10}  B = {b_value(behavior_from_lhv(make_deterministic(a))):+.0f}")

# %%
# The demo assignment always answers "+" except Bob under b'.
table = behavior_from_lhv(demo_model())
print(np.round(table.prob, 3))

# %%
# A million unbiased trials: the scaled count statistic sits at zero.
session = run_session(demo_model(), SourceModel(1.0), SettingsDistribution(), 10**6, seed=1)
stat = t_statistic(session)
print(f"T = {stat.t}, 4T/n = {stat.b_joint4:+.5f}")
