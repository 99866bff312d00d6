"""Signed fixed-point arithmetic helpers.

Membrane potentials, folded biases and thresholds are all stored as plain
integers scaled by 2**frac_bits.  The default format is signed 24-bit with
8 fractional bits, which leaves headroom above the worst-case integer
convolution magnitudes of the supported layer shapes.  Overflow is a
reported fault, never a silent wraparound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FixedPointOverflowError, InvalidParameterError


@dataclass(frozen=True)
class FixedPointFormat:
    total_bits: int = 24
    frac_bits: int = 8

    def __post_init__(self):
        if not 0 < self.frac_bits < self.total_bits:
            raise InvalidParameterError(
                f"need 0 < frac_bits < total_bits, got {self.frac_bits}/{self.total_bits}"
            )
        if self.total_bits > 62:
            # raw values are carried in int64; leave room for one addition
            raise InvalidParameterError("total_bits > 62 is not supported")

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def raw_min(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    def check_raw(self, raw, context: str = "value"):
        """Validate that raw value(s) fit the format; returns the input."""
        arr = np.asarray(raw)
        if arr.size and (arr.min() < self.raw_min or arr.max() > self.raw_max):
            bad = int(arr.min()) if arr.min() < self.raw_min else int(arr.max())
            raise FixedPointOverflowError(
                f"{context}: raw {bad} outside [{self.raw_min}, {self.raw_max}] "
                f"for {self.total_bits}-bit format"
            )
        return raw

    def quantize(self, value):
        """Round real value(s) to the fixed-point grid (half to even).

        Scalars come back as int, arrays as int64 ndarrays.
        """
        raw = np.rint(np.asarray(value, dtype=np.float64) * self.scale).astype(np.int64)
        self.check_raw(raw, "quantize")
        if raw.ndim == 0:
            return int(raw)
        return raw

    def to_real(self, raw):
        return np.asarray(raw, dtype=np.float64) / self.scale


DEFAULT_FORMAT = FixedPointFormat()
