"""Sanity checks you can read: gradients against finite differences, and the
three evaluation metrics on a hand-sized example.

    python3 demos/gradients_and_metrics.py
"""
import numpy as np

from grupfg import autodiff as ad
from grupfg.cli import gradcheck_full_model
from grupfg.metrics import daily_ic, daily_rank_ic, precision_at_n

# 1. A Pearson-based loss on a 3x4 input, checked coordinate by coordinate.
rng = np.random.default_rng(0)
x = ad.parameter(rng.normal(size=(3, 4)))
w = ad.constant(rng.normal(size=(3, 3)))
loss = lambda: ad.sum_all(ad.mul(ad.pearson_rows(ad.softmax_rows(x), ad.softmax_cols(x)), w))
print(f"pearson loss, max relative gradient error: {ad.grad_check(loss, [x]):.2e}")

# 2. The whole model: GRU over 60 steps, both relational stages, fusion, head.
for stocks, hidden in [(2, 8), (5, 8), (8, 16)]:
    err = gradcheck_full_model(stocks, hidden, seed=1)
    print(f"full model m={stocks} hidden={hidden}: max relative error {err:.2e}")

# 3. Metrics on four stocks.
preds = np.array([0.3, 0.2, 0.1, -0.1])
labels = np.array([0.05, -0.02, 0.10, 0.20])
print(f"\nIC        {daily_ic(preds, labels):+.4f}")
print(f"Rank IC   {daily_rank_ic(preds, labels):+.4f}")
print(f"P@2       {precision_at_n(preds, labels, 2):.1f}%   (top two picks: one up, one down)")
print(f"IC of [1,2,3,4] vs [1,3,2,4]: {daily_ic([1, 2, 3, 4], [1, 3, 2, 4]):.4f}")
