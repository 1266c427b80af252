from .gradcheck import CheckResult, format_report, grad_check_network, standard_layer_checks
from .layers import (BatchNorm, BilinearUp2, ConcatSkip, Conv2D, MaxPool2, ReLU,
                     ResidualSubtract, Sigmoid, TransposedConv2D, mse_loss)
from .net import Network, Node
from .optim import Adam

__all__ = [
    "Adam", "BatchNorm", "BilinearUp2", "CheckResult", "ConcatSkip", "Conv2D",
    "MaxPool2", "Network", "Node", "ReLU", "ResidualSubtract", "Sigmoid",
    "TransposedConv2D", "format_report", "grad_check_network", "mse_loss",
    "standard_layer_checks",
]
