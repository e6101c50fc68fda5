"""
Fluctuations, calibration and power
===================================

Finite sessions of a local model can show negative counts by chance. The
Azuma-Hoeffding p-value accounts for that; a PR box is caught every time.
"""

import numpy as np

from bellmem import SettingsDistribution, SourceModel, behavior_playback, demo_model, fluctuation_monte_carlo, pr_box_table

dist = SettingsDistribution()
honest = fluctuation_monte_carlo(demo_model(), dist, SourceModel(1.0), 10**4, 500, seed=1)
print(f"honest: {honest.frac_negative:.1%} negative, {honest.frac_reject:.1%} rejected at 0.05")
print({q: round(v, 4) for q, v in honest.quantiles.items()})

# %%
pr = fluctuation_monte_carlo(behavior_playback(pr_box_table()), dist, SourceModel(1.0), 10**4, 200, seed=2)
print(f"PR box: median 4T/n {np.median(pr.b_joint4):+.3f}, max p-value {pr.p_values.max():.2e}")
