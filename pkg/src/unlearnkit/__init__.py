"""Desk-scale machine unlearning toolkit.

Train a small classifier, delete a standardized slice of its training data
with one of several teacher-student unlearning methods, and judge the result
with retrain-free metrics (test/forget/retain accuracy, wall time, FLOs,
membership-inference success, deletion capacity).
"""

from .config import UnlearnConfig, config_hash, train_hash
from .curriculum import SuperLossParams, apply_curriculum, lambert_w0, superloss_sigma
from .data import (DatasetSplit, SynthSpec, corrupt_labels, generate,
                   parse_data_name, sample_deletion_set, shift_testset)
from .errors import (BudgetError, ConfigError, DomainError,
                     InsufficientDataError, NumericError, ShapeError,
                     StateError, UnlearnkitError)
from .lora import LowRankAdapter, adapter_trainable_counts, attach_adapter, merge_adapter
from .metrics import (EvalReport, MiaAttack, build_report, deletion_capacity,
                      evaluate, fit_mia, mia_success, scaling_curve, transfer_eval)
from .nn import (Model, backward, build_model, count_flos, cross_entropy,
                 kl_divergence, kl_loss, representation_distance, softmax)
from .optim import OptimizerState, ParamMask, optimizer_step
from .tensor import Tensor
from .unlearn import (TAXONOMY, TeacherSpec, UnlearnRun, bad_t, exact_retrain,
                      l1_sparse_ft, neg_grad, rand_label, salun, scrub,
                      train_original, unlearn)

__version__ = "0.1.0"
