from .gradcheck import GradcheckReport, gradcheck, randomize_trainables
from .loop import TrainConfig, TrainingDiverged, build_model, evaluate, model_param_count, resolve_m, train
from .model import (
    GradientSet,
    StaleCacheError,
    ToyModel,
    TrainableLinear,
    backward,
    backward_from_logits,
    cross_entropy,
    forward,
    loss_fn,
    merge_model,
    merged_forward,
    predict,
)
from .optim import SGD, Adam, make_optimizer
from .tasks import RECIPES, SyntheticTask, TaskSpec, make_task
from .experiments import TransferStudy, transfer_study
