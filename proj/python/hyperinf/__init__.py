"""Influence scores with hyperpower-iteration inverses of the generalized Fisher matrix."""

from ._hyperinf import (
    GradientDump,
    HyperinfError,
    build_fim,
    build_gfim,
    cg_solve,
    damping_factor,
    estimator_names,
    gaussian_inverse,
    hyperpower_inverse,
    lemma1_gap,
    lissa_hvp,
    rank_examples,
    read_dump,
    run_detection,
    schulz_inverse,
    score,
    write_dump,
)

__all__ = [
    "GradientDump",
    "HyperinfError",
    "build_fim",
    "build_gfim",
    "cg_solve",
    "damping_factor",
    "estimator_names",
    "gaussian_inverse",
    "hyperpower_inverse",
    "lemma1_gap",
    "lissa_hvp",
    "rank_examples",
    "read_dump",
    "run_detection",
    "schulz_inverse",
    "score",
    "write_dump",
]
