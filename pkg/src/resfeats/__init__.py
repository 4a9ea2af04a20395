"""ResNet feature taps ("ResFeats") with PCA / shallow-CNN reduction and linear SVMs."""

from .errors import ResFeatsError
from .resnet import TapName, build_resnet, forward_with_taps, load_weights, save_weights

__version__ = "0.1.0"

__all__ = ["ResFeatsError", "TapName", "build_resnet", "forward_with_taps", "load_weights", "save_weights"]
