"""Seamless cylindrical fiducial markers.

Synthesis of self-identifying chessboard patterns that wrap around
cylinders without a seam, detection of their corners in grayscale images,
and 6-DOF pose recovery of each cylinder from a single view.
"""

__version__ = "0.1.0"

from .codebook import (
    BOARD_PERIOD,
    GUARANTEED_PERIODS,
    PATCH_BITS,
    STRIPE_PERIOD,
    Codebook,
    CodeStripe,
    InvalidPeriod,
    Orientation,
    PatchCode,
    QuasiperiodicWindow,
    SearchExhausted,
    WindowMismatch,
    decode_patch,
    find_quasiperiodic_windows,
    patch_code_at,
    read_stripe,
    splice_cyclic,
    synthesize_stripes,
    verify_patch_uniqueness,
    write_stripe,
)

__all__ = [
    "BOARD_PERIOD",
    "GUARANTEED_PERIODS",
    "PATCH_BITS",
    "STRIPE_PERIOD",
    "Codebook",
    "CodeStripe",
    "InvalidPeriod",
    "Orientation",
    "PatchCode",
    "QuasiperiodicWindow",
    "SearchExhausted",
    "WindowMismatch",
    "decode_patch",
    "find_quasiperiodic_windows",
    "patch_code_at",
    "read_stripe",
    "splice_cyclic",
    "synthesize_stripes",
    "verify_patch_uniqueness",
    "write_stripe",
]
