"""Interpolatory model reduction of descriptor systems (differential-algebraic equations)."""

from .analysis import (
    bode_sample,
    eval_transfer,
    eval_transfer_derivative,
    h2_error,
    h2_norm_sp,
    hinf_estimate,
)
from .core import (
    DescriptorSystem,
    InterpolationData,
    MatrixPolynomial,
    ReducedModel,
    Structure,
    conjugate_close,
    index1_blocks,
    index2_blocks,
    validate,
)
from .index1 import polynomial_part_index1, reduce_index1
from .index2 import hidden_feedthrough, hidden_transfer, reduce_index2, saddle_solve_left, saddle_solve_right
from .interpolation import reduce_dae, reduce_naive, verify_interpolation
from .irka import IrkaConfig, check_h2_first_order, irka_dae, irka_index1, irka_index2
from .model_io import generate_synthetic, load_model, load_system, save_model, save_system
from .spectral import split_transfer, weierstrass

__version__ = "0.1.0"

__all__ = [
    "DescriptorSystem", "InterpolationData", "MatrixPolynomial", "ReducedModel", "Structure",
    "conjugate_close", "index1_blocks", "index2_blocks", "validate",
    "weierstrass", "split_transfer",
    "reduce_naive", "reduce_dae", "verify_interpolation",
    "polynomial_part_index1", "reduce_index1",
    "hidden_feedthrough", "hidden_transfer", "reduce_index2",
    "saddle_solve_right", "saddle_solve_left",
    "IrkaConfig", "irka_dae", "irka_index1", "irka_index2", "check_h2_first_order",
    "eval_transfer", "eval_transfer_derivative", "bode_sample",
    "h2_norm_sp", "h2_error", "hinf_estimate",
    "load_system", "save_system", "load_model", "save_model", "generate_synthetic",
]
