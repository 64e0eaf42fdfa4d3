"""Rate-controllable representation codec and bandwidth admission simulator."""

from ._core import (
    bpp,
    decode_matrix,
    encode_matrix,
    profile_grid,
    reconstruction_nmse,
    required_bandwidth_mhz,
    rule_based_code_rate,
    run_scenario,
    snap_code_rate,
    spectral_efficiency,
    stream_info,
    svid_decompose,
    truncated_svd,
)

__all__ = [
    "bpp",
    "decode_matrix",
    "encode_matrix",
    "profile_grid",
    "reconstruction_nmse",
    "required_bandwidth_mhz",
    "rule_based_code_rate",
    "run_scenario",
    "snap_code_rate",
    "spectral_efficiency",
    "stream_info",
    "svid_decompose",
    "truncated_svd",
]
