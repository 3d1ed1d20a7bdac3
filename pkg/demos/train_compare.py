"""Train the plain GRU and GRU-PFG on the same grouped panel and compare.

A scaled-down version of the ablation used in the acceptance suite (fewer
stocks, days and epochs) so that it finishes in a few minutes on one CPU.
The full-size comparison is

    grupfg synth --stocks 40 --days 600 --groups 4 --signal 0.6 --noise 0.5 --seed 7 --out panel.csv
    grupfg ablate --panel panel.csv --config run.ini --variants gru,gru-pfg-primary-only,gru-pfg \\
                  --seeds 0-4 --out-dir ablation

    python3 demos/train_compare.py
"""
from grupfg import SplitSpec, TrainConfig, evaluate, gen_synthetic, split, train

panel = gen_synthetic(num_stocks=24, num_days=300, num_groups=4, signal_strength=0.6,
                      noise_sigma=0.5, seed=7)
train_part, valid_part, test_part = split(panel, SplitSpec.from_counts(panel.dates, 200, 50, 50),
                                          drop_last_date=True)
print(f"train {len(train_part)} days, valid {len(valid_part)}, test {len(test_part)}; 24 stocks in 4 groups")

for kind in ("gru", "gru-pfg"):
    cfg = TrainConfig(model_kind=kind, hidden_size=16, learning_rate=2e-3, epochs=12,
                      early_stop_patience=4, seed=0)
    variant, log = train(train_part, valid_part, cfg)
    report = evaluate(variant, test_part)
    print(f"\n{kind}: best epoch {log.best_epoch} of {len(log.epochs)} ({log.stopping_reason})")
    print(report.table())
