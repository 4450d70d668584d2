"""Complex-valued deep learning on the manifold R+ x SO(2).

Points are stored as ``(log_r, theta)``.  The layers (wFM convolution,
tangent ReLU, distance transform) are equivariant or invariant to complex
scaling and rotation of the input.
"""

from .kernels import BACKEND
from .layers import Dense, DistanceFC, TReLU, WFMConv, distance_fc, softmax_head, trelu, wfm_conv
from .manifold import (
    ComplexField,
    GroupElement,
    InvalidInputError,
    PolarComplex,
    act,
    distance,
    from_cartesian,
    geodesic,
    to_cartesian,
    transporter,
    wrap_angle,
)
from .network import BaselineMLP, BaselineSpec, ComplexNet, ModelSpec, param_count
from .wfm import ConvexWeights, wfm_field, wfm_incremental, wfm_oracle

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BaselineMLP",
    "BaselineSpec",
    "ComplexField",
    "ComplexNet",
    "ConvexWeights",
    "Dense",
    "DistanceFC",
    "GroupElement",
    "InvalidInputError",
    "ModelSpec",
    "PolarComplex",
    "TReLU",
    "WFMConv",
    "act",
    "distance",
    "distance_fc",
    "from_cartesian",
    "geodesic",
    "param_count",
    "softmax_head",
    "to_cartesian",
    "transporter",
    "trelu",
    "wfm_conv",
    "wfm_field",
    "wfm_incremental",
    "wfm_oracle",
    "wrap_angle",
]
