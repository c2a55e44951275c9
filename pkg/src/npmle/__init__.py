"""NPMLE for isotropic Gaussian mixtures by Wasserstein-Fisher-Rao particle descent."""

from npmle._backend import BACKEND
from npmle.kernel import KernelSpec
from npmle.mixture import GroundTruthMixture, ParticleMixture, SampleSet, nll

__version__ = "0.1.0"

__all__ = ["BACKEND", "KernelSpec", "GroundTruthMixture", "ParticleMixture", "SampleSet", "nll",
           "__version__"]
