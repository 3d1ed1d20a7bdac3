"""GRU-PFG: stock return prediction from factors with correlation-graph stages."""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, grad_check, pearson_rows, softmax_cols, softmax_rows, zero_grads
from .baselines import KINDS, ModelVariant, make_variant
from .data import FactorPanel, SplitSpec, gen_synthetic, load_panel, split, write_panel
from .metrics import MetricsReport, daily_ic, daily_rank_ic, precision_at_n
from .model import DayBatch, forward_day, init_params
from .train import TrainConfig, TrainLog, day_loss, evaluate, train

__all__ = [
    "Tensor", "backward", "grad_check", "pearson_rows", "softmax_cols", "softmax_rows", "zero_grads",
    "KINDS", "ModelVariant", "make_variant",
    "FactorPanel", "SplitSpec", "gen_synthetic", "load_panel", "split", "write_panel",
    "MetricsReport", "daily_ic", "daily_rank_ic", "precision_at_n",
    "DayBatch", "forward_day", "init_params",
    "TrainConfig", "TrainLog", "day_loss", "evaluate", "train",
]
