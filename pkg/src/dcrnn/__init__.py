"""RNN-based feature crossing with partial parameter sharing for multi-task CTR/CVR models."""

from .autodiff import Node, Tape
from .data import Dataset, FieldSchema, SynthSpec, gen_synthetic, load_tsv, write_tsv
from .metrics import auc, compare_report, count_params
from .models import DCRNN, MMoE, DcrnnConfig, MmoeConfig, build_model
from .sequencing import AdaptiveBank, SharingPlan, build_sequence, required_len, slice_windows
from .training import LossConfig, TrainConfig, train

__version__ = "0.1.0"
