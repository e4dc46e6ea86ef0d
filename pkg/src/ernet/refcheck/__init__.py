"""Brute-force oracles and the verification suites built on them."""

from __future__ import annotations

from ernet.refcheck.oracles import (
    OracleMaskNet,
    OracleTransformNet,
    bfs_components,
    fd_gradient,
    mean_gradient_magnitude,
    naive_conv,
    naive_dice,
    naive_map_point,
    naive_ncc,
    naive_smoothness,
    naive_warp,
    sequential_warp,
    stage_root,
)
from ernet.refcheck.suites import SuiteResult, run_all

__all__ = [
    "OracleMaskNet",
    "OracleTransformNet",
    "SuiteResult",
    "bfs_components",
    "fd_gradient",
    "mean_gradient_magnitude",
    "naive_conv",
    "naive_dice",
    "naive_map_point",
    "naive_ncc",
    "naive_smoothness",
    "naive_warp",
    "run_all",
    "sequential_warp",
    "stage_root",
]
