"""Robust joint AP clustering and beamforming for cell-free downlink."""

from ._core import (
    ShapeError,
    SystemConfig,
    certify,
    closed_form_numerator,
    derive_seed,
    generate_dataset,
    max_alpha,
    min_beta,
    mult_count_rjapcbn,
    nominal_sinr,
    power_project,
    q_ave,
    read_metrics,
    run_sweep,
    sampling_oracle,
    sum_rate,
    train,
    wmmse,
    zero_tolerance,
)

__all__ = [
    "ShapeError",
    "SystemConfig",
    "certify",
    "closed_form_numerator",
    "derive_seed",
    "generate_dataset",
    "max_alpha",
    "min_beta",
    "mult_count_rjapcbn",
    "nominal_sinr",
    "power_project",
    "q_ave",
    "read_metrics",
    "run_sweep",
    "sampling_oracle",
    "sum_rate",
    "train",
    "wmmse",
    "zero_tolerance",
]
