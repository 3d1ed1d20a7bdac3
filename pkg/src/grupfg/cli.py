"""Batch command line: ``grupfg {synth,train,eval,gradcheck,ablate,replay}``.

Exit codes: 0 ok, 1 gradient check failed, 2 usage / invalid arguments,
3 data, schema or checkpoint error, 4 numeric divergence.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import shlex
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import autodiff as ad
from .baselines import KINDS
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, parse_config
from .data import SplitSpec, gen_synthetic, load_panel, split, write_panel
from .errors import (
    CheckpointError,
    ConfigError,
    DivergenceError,
    EmptyInputError,
    NumericError,
    SchemaError,
    SpecError,
)
from .model import DayBatch, forward_day, init_params
from .train import TrainConfig, day_loss, evaluate, train

log = logging.getLogger("grupfg")

EXIT_OK, EXIT_GRADCHECK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4
GRADCHECK_TOL = 1e-4
SPLIT_NAMES = ("train", "valid", "test")
METRIC_COLUMNS = ("IC", "Rank IC", "P@3", "P@5", "P@10", "P@30")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Collects run facts and writes them as ``key=value`` lines."""

    def __init__(self, command: str, argv: list[str]):
        self.started = time.perf_counter()
        self.entries: list[tuple[str, str]] = [
            ("command", command),
            ("argv", shlex.join(argv)),
            ("artifact_version", __version__),
        ]

    def add(self, key: str, value) -> None:
        self.entries.append((key, str(value)))

    def add_config(self, cfg: RunConfig) -> None:
        self.add("seed", cfg.train.seed)
        for line in cfg.to_text().splitlines():
            key, value = (part.strip() for part in line.split("=", 1))
            self.add(f"config.{key}", value)

    def add_input(self, name: str, path) -> None:
        try:
            digest = sha256(path)
        except OSError as exc:
            raise SchemaError(f"cannot read {name} file {path}: {exc.strerror}") from exc
        self.add(f"input.{name}", path)
        self.add(f"input.{name}.sha256", digest)

    def write(self, path) -> None:
        self.add("wall_seconds", f"{time.perf_counter() - self.started:.3f}")
        Path(path).write_text("".join(f"{k}={v}\n" for k, v in self.entries))


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            out[key] = value
    return out


# -- commands ---------------------------------------------------------------

def cmd_synth(args, argv) -> int:
    manifest = Manifest("synth", argv)
    panel = gen_synthetic(args.stocks, args.days, args.groups, args.signal, args.noise, args.seed,
                          persistence=args.persistence, style_strength=args.style, start_date=args.start_date)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_panel(panel, out)
    manifest.add("seed", args.seed)
    manifest.add("output.panel", out)
    manifest.add("output.panel.sha256", sha256(out))
    manifest.write(out.with_name(out.name + ".manifest.txt"))
    print(f"wrote {len(panel)} dates x {args.stocks} stocks to {out}")
    return EXIT_OK


def _load_run(panel_path, cfg: RunConfig, out_dir: Path):
    panel, report = load_panel(panel_path, report_path=out_dir / "load_report.txt")
    if report.drop_count:
        log.warning("dropped %d rows with non-finite values", report.drop_count)
    spec = cfg.split.resolve(panel.dates)
    return spec, split(panel, spec, cfg.split.drop_last_date)


def _checkpoint_meta(spec: SplitSpec, cfg: RunConfig) -> dict:
    return {"split": spec.as_dict(), "drop_last_date": cfg.split.drop_last_date, "seed": cfg.train.seed}


def run_training(panel_path, cfg: RunConfig, out_dir: Path, *, evaluate_test: bool = True):
    """Train one model and write checkpoint, train log and (test) metrics into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    spec, (tr, va, te) = _load_run(panel_path, cfg, out_dir)
    variant, train_log = train(tr, va, cfg.train)
    save_checkpoint(variant, out_dir / "checkpoint.bin", _checkpoint_meta(spec, cfg))
    (out_dir / "train_log.csv").write_text(train_log.to_csv())
    report = None
    if evaluate_test and len(te):
        report = evaluate(variant, te)
        (out_dir / "metrics.csv").write_text(report.to_csv())
        (out_dir / "monthly.csv").write_text(report.monthly_csv())
    return variant, train_log, report


def cmd_train(args, argv) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out_dir)
    manifest = Manifest("train", argv)
    manifest.add_config(cfg)
    manifest.add_input("panel", args.panel)
    manifest.add_input("config", args.config)
    _, train_log, report = run_training(args.panel, cfg, out_dir)
    for name in ("checkpoint.bin", "train_log.csv", "metrics.csv", "monthly.csv"):
        if (out_dir / name).exists():
            manifest.add(f"output.{name}", out_dir / name)
    manifest.write(out_dir / "manifest.txt")
    print(f"best epoch {train_log.best_epoch} (valid IC {train_log.best_valid_ic:.4f}); {train_log.stopping_reason}")
    if report is not None:
        print("test split:")
        print(report.table())
    return EXIT_OK


def cmd_eval(args, argv) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("eval", argv)
    hidden = None
    if args.config:
        cfg = load_config(args.config)
        hidden = cfg.train.hidden_size
        manifest.add_config(cfg)
        manifest.add_input("config", args.config)
    manifest.add_input("panel", args.panel)
    manifest.add_input("checkpoint", args.checkpoint)
    variant, meta = load_checkpoint(args.checkpoint, hidden)
    panel, _ = load_panel(args.panel, report_path=out_dir / "load_report.txt")
    if "split" in meta:
        spec = SplitSpec(*(tuple(meta["split"][n].split(":")) for n in SPLIT_NAMES))
    else:
        spec = SplitSpec()
    parts = dict(zip(SPLIT_NAMES, split(panel, spec, meta.get("drop_last_date", True))))
    report = evaluate(variant, parts[args.split])
    (out_dir / "metrics.csv").write_text(report.to_csv())
    (out_dir / "monthly.csv").write_text(report.monthly_csv())
    manifest.add("output.metrics.csv", out_dir / "metrics.csv")
    manifest.add("output.monthly.csv", out_dir / "monthly.csv")
    manifest.write(out_dir / "manifest.txt")
    print(f"{variant.kind} on {args.split} split:")
    print(report.table())
    return EXIT_OK


def gradcheck_full_model(stocks: int, hidden: int, seed: int) -> float:
    """Max relative gradient error of the day loss through a random GRU-PFG."""
    rng = np.random.default_rng(seed)
    params = init_params(hidden, rng)
    for p in params.values():
        p.values += rng.normal(0.0, 0.3, p.shape)
    batch = DayBatch("gradcheck", [f"S{i}" for i in range(stocks)],
                     rng.normal(size=(stocks, 60, 6)), rng.normal(size=stocks))
    return ad.grad_check(lambda: day_loss(forward_day(batch, params)[0], batch.labels), params)


def cmd_gradcheck(args, argv) -> int:
    manifest = Manifest("gradcheck", argv)
    manifest.add("seed", args.seed)
    err = gradcheck_full_model(args.stocks, args.dims, args.seed)
    print(f"max relative error: {err:.3e}")
    manifest.add("max_rel_error", repr(err))
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        manifest.write(Path(args.out_dir) / "manifest.txt")
    return EXIT_OK if err < GRADCHECK_TOL else EXIT_GRADCHECK


def _parse_seeds(text: str) -> list[int]:
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise SpecError("no seeds given")
    return seeds


def _ablation_cell(job):
    panel_path, config_text, kind, seed, out_dir = job
    cfg = parse_config(config_text, env={})
    cfg.train = TrainConfig(**{**vars(cfg.train), "model_kind": kind, "seed": seed})
    _, _, report = run_training(panel_path, cfg, Path(out_dir))
    if report is None:
        raise EmptyInputError("ablation needs a non-empty test split")
    row = [report.ic_mean, report.rank_ic_mean] + [report.precision.get(n, (np.nan,))[0] for n in (3, 5, 10, 30)]
    return kind, seed, row


def ablation_table(results: dict[str, list[list[float]]]) -> tuple[str, str]:
    """Text table and CSV, rows = variants, cells = mean (std across seeds, ddof=1)."""
    csv_lines = ["variant,metric,mean,std,num_seeds"]
    head = f"{'variant':<22}" + "".join(f"{c:>20}" for c in METRIC_COLUMNS)
    text = [head]
    for kind, rows in results.items():
        arr = np.array(rows, dtype=float)
        mean = arr.mean(axis=0)
        std = arr.std(axis=0, ddof=1) if len(arr) > 1 else np.zeros(arr.shape[1])
        cells = []
        for col, mu, sd in zip(METRIC_COLUMNS, mean.tolist(), std.tolist()):
            if np.isnan(mu):  # Precision@N with N above the cross-section size
                csv_lines.append(f"{kind},{col},,,{len(arr)}")
                cells.append("n/a")
                continue
            csv_lines.append(f"{kind},{col},{mu!r},{sd!r},{len(arr)}")
            cells.append(f"{mu:.4f} ({sd:.1e})" if col in ("IC", "Rank IC") else f"{mu:.2f} ({sd:.2f})")
        text.append(f"{kind:<22}" + "".join(f"{c:>20}" for c in cells))
    return "\n".join(text) + "\n", "\n".join(csv_lines) + "\n"


def cmd_ablate(args, argv) -> int:
    cfg = load_config(args.config)
    kinds = [k.strip() for k in args.variants.split(",") if k.strip()]
    for k in kinds:
        if k not in KINDS:
            raise SpecError(f"unknown variant {k!r}; expected one of {', '.join(KINDS)}")
    seeds = _parse_seeds(args.seeds)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("ablate", argv)
    manifest.add_config(cfg)
    manifest.add("seeds", ",".join(map(str, seeds)))
    manifest.add_input("panel", args.panel)
    manifest.add_input("config", args.config)
    config_text = cfg.to_text()
    jobs = [(str(args.panel), config_text, k, s, str(out_dir / k / f"seed{s}")) for k in kinds for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            cells = list(pool.map(_ablation_cell, jobs))
    else:
        cells = [_ablation_cell(j) for j in jobs]
    results: dict[str, list[list[float]]] = {k: [] for k in kinds}
    for kind, _, row in cells:
        results[kind].append(row)
    text, csv_text = ablation_table(results)
    (out_dir / "ablation.txt").write_text(text)
    (out_dir / "ablation.csv").write_text(csv_text)
    manifest.add("output.ablation.csv", out_dir / "ablation.csv")
    manifest.add("output.ablation.txt", out_dir / "ablation.txt")
    manifest.write(out_dir / "manifest.txt")
    print(text, end="")
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    """Re-run the command recorded in a manifest, after checking input digests."""
    entries = read_manifest(args.manifest)
    for key, value in entries.items():
        if key.startswith("input.") and not key.endswith(".sha256"):
            if not Path(value).exists() or sha256(value) != entries.get(f"{key}.sha256"):
                raise SchemaError(f"input {value} is missing or differs from the recorded digest")
    old = shlex.split(entries["argv"])
    config_lines = [f"{k[len('config.'):]} = {v}" for k, v in entries.items() if k.startswith("config.")]
    with tempfile.TemporaryDirectory() as tmp:
        if config_lines and "--config" in old:
            snapshot = Path(tmp) / "config.txt"
            snapshot.write_text("\n".join(config_lines) + "\n")
            old[old.index("--config") + 1] = str(snapshot)
        if args.out_dir:
            for flag in ("--out-dir", "--out"):
                if flag in old:
                    old[old.index(flag) + 1] = args.out_dir
        return main(old)


# -- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grupfg", description="GRU-PFG stock trend prediction")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic panel CSV")
    p.add_argument("--stocks", type=int, required=True)
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--groups", type=int, required=True)
    p.add_argument("--signal", type=float, required=True)
    p.add_argument("--noise", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--persistence", type=float, default=0.5)
    p.add_argument("--style", type=float, default=1.0, help="scale of per-group channel offsets")
    p.add_argument("--start-date", default="2007-01-01")

    p = sub.add_parser("train", help="train a model and write checkpoint, log and manifest")
    p.add_argument("--panel", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--panel", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=SPLIT_NAMES, default="test")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="optional; its model.hidden_size must match the checkpoint")

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model gradient")
    p.add_argument("--stocks", type=int, default=5)
    p.add_argument("--dims", type=int, default=8, help="GRU hidden size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")

    p = sub.add_parser("ablate", help="train variants x seeds and tabulate test metrics")
    p.add_argument("--panel", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--variants", default="gru,gru-pfg-primary-only,gru-pfg")
    p.add_argument("--seeds", default="0-4", help="comma list and/or ranges, e.g. 0-4 or 1,3,7")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", help="write outputs here instead of the recorded location")
    return parser


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "eval": cmd_eval,
    "gradcheck": cmd_gradcheck, "ablate": cmd_ablate, "replay": cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except (SpecError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    except (SchemaError, EmptyInputError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
