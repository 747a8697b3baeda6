"""Ambient-backscatter anti-eavesdropping toolkit.

Signal synthesis for the direct and backscatter links, message splitting,
maximum-likelihood and neural tag-state detectors, Reptile meta-learning,
backscatter-rate estimation and guessing-entropy analysis.
"""

__version__ = "0.1.0"

from .channel import ChannelParams, ChannelRealization, FadingModel, LinkBudget  # noqa: E402
from .features import CovarianceFeaturizer  # noqa: E402
from .meta import ReptileMetaLearner  # noqa: E402
from .mlk import MLKDetector  # noqa: E402
from .nn import MLPDetector  # noqa: E402
from .numerics import Prng, SingularMatrixError  # noqa: E402

__all__ = [
    "ChannelParams",
    "ChannelRealization",
    "CovarianceFeaturizer",
    "FadingModel",
    "LinkBudget",
    "MLKDetector",
    "MLPDetector",
    "Prng",
    "ReptileMetaLearner",
    "SingularMatrixError",
    "__version__",
]
