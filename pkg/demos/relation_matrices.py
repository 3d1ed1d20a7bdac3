"""What the relation matrices look like on a panel with planted groups.

We generate a small panel whose stocks fall into four groups, push one day
through an untrained model and look at the correlation matrix R1 that the
primary extraction builds from the GRU features. Stocks are re-ordered by
group so any block structure is easy to see.

    python3 demos/relation_matrices.py
"""
import numpy as np

from grupfg import gen_synthetic, init_params
from grupfg.model import forward_day

panel = gen_synthetic(num_stocks=16, num_days=5, num_groups=4, signal_strength=0.6,
                      noise_sigma=0.5, seed=7)
groups = panel.meta["groups"]
day = panel.days[-1].to_batch()

order = sorted(range(day.size), key=lambda i: (groups[day.stock_ids[i]], day.stock_ids[i]))
day = day.permuted(order)
labels = [groups[s] for s in day.stock_ids]
print("stocks (sorted by group):", " ".join(f"{s}:{g}" for s, g in zip(day.stock_ids, labels)))

params = init_params(hidden_size=32, seed=0)
preds, trace = forward_day(day, params)

for name in ("X", "X_row", "X_col", "R1", "F1", "X_hid", "R2", "F2", "F_last"):
    print(f"{name:>7} shape {getattr(trace, name).shape}")

# R1 is scaled by 1/m; multiply back to read it as plain correlations.
R = trace.R1.values * day.size
same = np.equal.outer(labels, labels)
off_diag = ~np.eye(day.size, dtype=bool)
print(f"\nmean correlation, same group : {R[same & off_diag].mean():+.3f}")
print(f"mean correlation, other group: {R[~same].mean():+.3f}")

np.set_printoptions(precision=1, suppress=True, linewidth=140)
print("\nR1 * m (rows/cols in group order):")
print(R)
print("\npredictions of the untrained model:", np.round(preds.values, 4))
