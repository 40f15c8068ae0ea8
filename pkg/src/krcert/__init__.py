"""Triangular measure transport with PAC-Bayesian risk certificates.

Subpackages
-----------
transport      reference measures and monotone triangular (KR) maps
dependency     oscillations, couplings, Lipschitz landscapes, D and Gamma
concentration  MGF bound validation and tail bounds
badset         bad-input sets, Hoeffding mass estimates, candidate selection
certificate    PAC-Bayesian risk certificates for affine predictor families
toy            the shipped 2D experiment (landscape, trade-off, figures)
cli            krcert command-line entry point
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConstructionError,
    DegeneratePairError,
    DegenerateSetError,
    DomainError,
    KrcertError,
    NoRootError,
    ParameterError,
)
from .transport import (
    ReferenceMeasure,
    TriangularMap,
    ComponentwiseMap,
    BernsteinComponent,
    AffineComponent,
    GoodSetSpec,
    compose,
    conditional_sample,
    forward,
    identity_map,
    load_map,
    pushforward_sample,
    restrict_reference,
    sample_reference,
    save_map,
)

__all__ = [
    "__version__",
    "KrcertError",
    "ConstructionError",
    "DomainError",
    "NoRootError",
    "DegenerateSetError",
    "DegeneratePairError",
    "ParameterError",
    "ConfigError",
    "ReferenceMeasure",
    "TriangularMap",
    "ComponentwiseMap",
    "BernsteinComponent",
    "AffineComponent",
    "GoodSetSpec",
    "compose",
    "conditional_sample",
    "forward",
    "identity_map",
    "load_map",
    "pushforward_sample",
    "restrict_reference",
    "sample_reference",
    "save_map",
]
