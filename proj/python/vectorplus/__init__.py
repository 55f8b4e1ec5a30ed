"""Class-conditional molecule generation from a contrastive latent space.

Results that the command-line tool writes as JSON come back as dicts.
Pipeline functions take either a path to a JSON config or a config dict.
"""

from ._core import (
    VectorplusError,
    assign,
    canonical_smiles,
    evaluate,
    featurize,
    generate,
    gmm_fit,
    is_valid,
    metrics,
    preprocess,
    properties,
    run_all,
    silhouette,
    tanimoto,
    train,
    verify,
)

__all__ = [
    "VectorplusError",
    "assign",
    "canonical_smiles",
    "evaluate",
    "featurize",
    "generate",
    "gmm_fit",
    "is_valid",
    "metrics",
    "preprocess",
    "properties",
    "run_all",
    "silhouette",
    "tanimoto",
    "train",
    "verify",
]
