from .network import CONV_KERNEL_SIZE, DEFAULT_BETA, LossBreakdown, VqModel
from .profiles import PROFILES, ModelProfile, profile_from_dict

__all__ = [
    "CONV_KERNEL_SIZE",
    "DEFAULT_BETA",
    "LossBreakdown",
    "ModelProfile",
    "PROFILES",
    "VqModel",
    "profile_from_dict",
]
