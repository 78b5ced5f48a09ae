from .mlp import (AdamState, MlpParams, adam_update, elu, elu_grad, init_mlp,
                  mlp_backward, mlp_forward)
from .policy_nets import (FeedbackNet, Normalizer, TorqueNet, act,
                          feedback_compose, load_net, save_net)
from .distill import (DistillationDataset, TrainConfig,
                      TrainingDivergedError, distill_loss, loss_gradients,
                      train, train_step)

__all__ = [
    "AdamState", "MlpParams", "adam_update", "elu", "elu_grad", "init_mlp",
    "mlp_backward", "mlp_forward",
    "FeedbackNet", "Normalizer", "TorqueNet", "act", "feedback_compose",
    "load_net", "save_net",
    "DistillationDataset", "TrainConfig", "TrainingDivergedError",
    "distill_loss", "loss_gradients", "train", "train_step",
]
