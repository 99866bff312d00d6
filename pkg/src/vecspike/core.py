"""Bit-exact reference model of binary-weight spiking inference.

This module is the functional oracle for the dataflow engine: a direct
integer/fixed-point implementation of integrate-and-fire dynamics, folded
batch normalization, dense binary convolution, OR-pooling and whole-network
execution.  Everything favours clarity over speed; the engine in
``vecspike.dataflow`` must reproduce these results bit for bit.

Conventions
-----------
* Spikes are 0/1 values in uint8 tensors indexed ``[time][channel][row][col]``.
* Binary weights are stored as sign bits: bit 1 encodes weight -1, bit 0
  encodes weight +1, i.e. the logical value is ``1 - 2*bit``.
* The IF recurrence is ``V[t+1] = V[t]*(1 - o[t]) + in[t+1]`` with a spike
  whenever the updated potential reaches the threshold (hard reset to zero,
  ties fire).  With a negative normalization gain the comparison direction
  flips to ``<=``.
* The first (encoding) layer consumes an 8-bit image, computes its integer
  convolution once, and re-accumulates that constant result every time step.
  Its folded bias/threshold are pre-scaled by 256 so that the u/256 input
  normalization stays in integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import InvalidParameterError, ShapeError
from .fixedpoint import DEFAULT_FORMAT, FixedPointFormat

if TYPE_CHECKING:  # pragma: no cover
    from .netconfig import NetworkDescription

ENCODING_INPUT_SCALE = 256  # 8-bit inputs represent u/256 of the (0,1) range
ENCODING_SHIFT = 8  # log2 of the scale; folded params shift left by this


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

class SpikeTrain:
    """Immutable binary activation tensor indexed [time][channel][row][col]."""

    def __init__(self, data):
        arr = np.asarray(data)
        if arr.ndim != 4:
            raise ShapeError(f"spike train must be 4-D [T][C][H][W], got {arr.shape}")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise InvalidParameterError("spike train elements must be 0 or 1")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def time_steps(self) -> int:
        return self._data.shape[0]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self._data.shape

    def step(self, t: int) -> np.ndarray:
        return self._data[t]

    def spike_count(self) -> int:
        return int(self._data.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpikeTrain):
            return NotImplemented
        return self._data.shape == other._data.shape and np.array_equal(
            self._data, other._data
        )

    def __repr__(self) -> str:
        t, c, h, w = self.shape
        return f"SpikeTrain(T={t}, C={c}, H={h}, W={w}, spikes={self.spike_count()})"


class BinaryWeightTensor:
    """Sign-bit weights in {-1,+1} per (out-channel, in-channel, kh, kw)."""

    def __init__(self, sign_bits):
        arr = np.asarray(sign_bits)
        if arr.ndim != 4:
            raise ShapeError(f"weights must be 4-D [O][I][kh][kw], got {arr.shape}")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise InvalidParameterError("sign bits must be 0 or 1")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        self.sign_bits = arr

    @classmethod
    def from_values(cls, values) -> "BinaryWeightTensor":
        vals = np.asarray(values)
        if vals.size and not np.isin(vals, (-1, 1)).all():
            raise InvalidParameterError("weight values must be -1 or +1")
        return cls((1 - vals) // 2)

    def values(self) -> np.ndarray:
        """Logical weights: bit b maps to 1 - 2b."""
        return (1 - 2 * self.sign_bits.astype(np.int64))

    @property
    def out_channels(self) -> int:
        return self.sign_bits.shape[0]

    @property
    def in_channels(self) -> int:
        return self.sign_bits.shape[1]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.sign_bits.shape[2], self.sign_bits.shape[3]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryWeightTensor):
            return NotImplemented
        return self.sign_bits.shape == other.sign_bits.shape and np.array_equal(
            self.sign_bits, other.sign_bits
        )


@dataclass
class BNParams:
    """Per-channel batch-normalization parameters. Scalars broadcast."""

    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=np.float64))
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.var = np.atleast_1d(np.asarray(self.var, dtype=np.float64))
        if (self.gamma == 0).any():
            raise InvalidParameterError("gamma must be nonzero")
        if (self.var < 0).any():
            raise InvalidParameterError("variance must be >= 0")
        if self.eps < 0:
            raise InvalidParameterError("eps must be >= 0")


@dataclass
class FoldedNeuronParams:
    """Folded per-channel bias/threshold in fixed point.

    bias' = mean - (sigma/gamma)*beta and threshold' = (sigma/gamma)*v_th
    with sigma = sqrt(var + eps).  ``flipped`` marks channels whose gamma
    was negative: dividing the firing condition by a negative gain flips
    the comparison to <=.
    """

    bias_raw: np.ndarray
    threshold_raw: np.ndarray
    flipped: np.ndarray
    fmt: FixedPointFormat = field(default_factory=lambda: DEFAULT_FORMAT)

    def __post_init__(self):
        self.bias_raw = np.atleast_1d(np.asarray(self.bias_raw, dtype=np.int64))
        self.threshold_raw = np.atleast_1d(
            np.asarray(self.threshold_raw, dtype=np.int64)
        )
        self.flipped = np.atleast_1d(np.asarray(self.flipped, dtype=bool))
        if not (
            self.bias_raw.shape == self.threshold_raw.shape == self.flipped.shape
        ):
            raise ShapeError("folded parameter arrays must share one shape")

    @property
    def channels(self) -> int:
        return self.bias_raw.shape[0]

    def scaled_by_pow2(self, shift: int) -> "FoldedNeuronParams":
        """Exactly scale bias and threshold by 2**shift (raw left shift)."""
        bias = self.bias_raw << shift
        thr = self.threshold_raw << shift
        self.fmt.check_raw(bias, "scaled bias")
        self.fmt.check_raw(thr, "scaled threshold")
        return FoldedNeuronParams(bias, thr, self.flipped.copy(), self.fmt)

    def bias_real(self) -> np.ndarray:
        return self.fmt.to_real(self.bias_raw)

    def threshold_real(self) -> np.ndarray:
        return self.fmt.to_real(self.threshold_raw)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FoldedNeuronParams):
            return NotImplemented
        return (
            self.fmt == other.fmt
            and np.array_equal(self.bias_raw, other.bias_raw)
            and np.array_equal(self.threshold_raw, other.threshold_raw)
            and np.array_equal(self.flipped, other.flipped)
        )


@dataclass
class MembraneState:
    """Membrane potentials of one layer plus the last emitted spikes.

    The reset term of the recurrence is applied lazily: ``last_output``
    remembers which positions fired so the next update can zero them
    before accumulating new input.
    """

    potentials: np.ndarray
    last_output: np.ndarray
    fmt: FixedPointFormat = field(default_factory=lambda: DEFAULT_FORMAT)

    @classmethod
    def zeros(cls, shape, fmt: FixedPointFormat = DEFAULT_FORMAT) -> "MembraneState":
        return cls(
            np.zeros(shape, dtype=np.int64),
            np.zeros(shape, dtype=np.uint8),
            fmt,
        )


# ---------------------------------------------------------------------------
# neuron operations
# ---------------------------------------------------------------------------

def if_step(
    v_prev: int,
    o_prev: int,
    weighted_input: int,
    threshold: int,
    *,
    flipped: bool = False,
    fmt: FixedPointFormat = DEFAULT_FORMAT,
) -> tuple[int, int]:
    """One integrate-and-fire update on raw fixed-point scalars.

    Returns (new potential, spike bit).  A previous spike hard-resets the
    potential to zero before the new input is accumulated; the result is
    therefore independent of ``v_prev`` whenever ``o_prev`` is 1.
    """
    v_new = (0 if o_prev else int(v_prev)) + int(weighted_input)
    fmt.check_raw(v_new, "membrane potential")
    if flipped:
        o_new = 1 if v_new <= threshold else 0
    else:
        o_new = 1 if v_new >= threshold else 0
    return v_new, o_new


def fold_bn(
    params: BNParams,
    v_th: float,
    fmt: FixedPointFormat = DEFAULT_FORMAT,
) -> FoldedNeuronParams:
    """Fold batch normalization into a per-channel bias and threshold.

    The per-step normalized accumulation against v_th is equivalent to
    accumulating the raw convolution output minus
    ``bias' = mean - (sigma/gamma)*beta`` against
    ``threshold' = (sigma/gamma)*v_th``; for negative gamma the comparison
    direction flips.  Both values are rounded half-to-even onto the
    fixed-point grid.
    """
    sigma = np.sqrt(params.var + params.eps)
    ratio = sigma / params.gamma
    bias = params.mean - ratio * params.beta
    threshold = ratio * float(v_th)
    bias_raw = np.atleast_1d(fmt.quantize(bias))
    threshold_raw = np.atleast_1d(fmt.quantize(threshold))
    return FoldedNeuronParams(bias_raw, threshold_raw, params.gamma < 0, fmt)


def spikes_eq3_oracle(
    conv_outputs: Sequence[float],
    params: BNParams,
    v_th: float,
) -> list[int]:
    """Spike train of the un-folded pipeline, in real arithmetic.

    Per step the convolution output is normalized
    (``gamma*(x - mean)/sigma + beta``), accumulated into a membrane with
    hard-reset semantics, and compared against the original v_th.  This
    exists solely as the equivalence oracle for :func:`fold_bn`.
    """
    gamma = float(params.gamma.reshape(-1)[0])
    beta = float(params.beta.reshape(-1)[0])
    mean = float(params.mean.reshape(-1)[0])
    var = float(params.var.reshape(-1)[0])
    sigma = (var + params.eps) ** 0.5
    v = 0.0
    o = 0
    spikes = []
    for x in conv_outputs:
        normalized = gamma * (float(x) - mean) / sigma + beta
        v = (0.0 if o else v) + normalized
        o = 1 if v >= v_th else 0
        spikes.append(o)
    return spikes


# ---------------------------------------------------------------------------
# layer oracles
# ---------------------------------------------------------------------------

def conv2d_oracle(
    inputs,
    weights: BinaryWeightTensor,
    stride: int = 1,
    padding: int | str = "valid",
) -> np.ndarray:
    """Dense reference convolution with weights in {-1,+1}.

    Accepts a single-step spike map or an unsigned 8-bit tensor shaped
    [C][H][W]; returns exact integer outputs [O][H'][W'].  Accumulation is
    a plain sum over receptive-field offsets.
    """
    if stride != 1:
        raise InvalidParameterError("only stride 1 is supported")
    x = np.asarray(inputs, dtype=np.int64)
    if x.ndim != 3:
        raise ShapeError(f"input must be [C][H][W], got {x.shape}")
    pad = 0 if padding == "valid" else int(padding)
    if pad < 0:
        raise InvalidParameterError("padding must be >= 0")
    c, h, w = x.shape
    if c != weights.in_channels:
        raise ShapeError(
            f"input has {c} channels, weights expect {weights.in_channels}"
        )
    kh, kw = weights.kernel
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    h_out = xp.shape[1] - kh + 1
    w_out = xp.shape[2] - kw + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"{kh}x{kw} kernel does not fit {xp.shape[1]}x{xp.shape[2]} input")
    wv = weights.values()
    out = np.zeros((weights.out_channels, h_out, w_out), dtype=np.int64)
    for u in range(kh):
        for v in range(kw):
            out += np.einsum(
                "oc,chw->ohw", wv[:, :, u, v], xp[:, u : u + h_out, v : v + w_out]
            )
    return out


def maxpool2_oracle(spikes) -> np.ndarray:
    """2x2 max pooling of a binary map; max of bits is logical OR."""
    x = np.asarray(spikes)
    if x.ndim != 3:
        raise ShapeError(f"input must be [C][H][W], got {x.shape}")
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"pooling needs even spatial dims, got {h}x{w}")
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4)).astype(x.dtype)


# ---------------------------------------------------------------------------
# network oracle
# ---------------------------------------------------------------------------

def _if_run(
    step_inputs: Sequence[np.ndarray],
    params: FoldedNeuronParams,
    fmt: FixedPointFormat,
) -> np.ndarray:
    """Drive the IF recurrence over integer conv outputs, one per step."""
    bias = params.bias_raw[:, None, None]
    threshold = params.threshold_raw[:, None, None]
    flip = params.flipped[:, None, None]
    v = np.zeros(step_inputs[0].shape, dtype=np.int64)
    o = np.zeros(step_inputs[0].shape, dtype=bool)
    spikes = []
    for x in step_inputs:
        weighted = (x.astype(np.int64) << fmt.frac_bits) - bias
        v = np.where(o, 0, v) + weighted
        fmt.check_raw(v, "membrane potential")
        o = np.where(flip, v <= threshold, v >= threshold)
        spikes.append(o.astype(np.uint8))
    return np.stack(spikes)


@dataclass
class OracleRun:
    """Per-layer spike trains plus final per-class spike counts."""

    layer_trains: list[SpikeTrain]
    class_counts: np.ndarray


def run_network_oracle(
    net: "NetworkDescription",
    weights: Sequence[BinaryWeightTensor | None],
    folded: Sequence[FoldedNeuronParams | None],
    image: np.ndarray,
    time_steps: int,
    fmt: FixedPointFormat = DEFAULT_FORMAT,
) -> OracleRun:
    """Layer-by-layer reference execution of a validated network.

    The encoding layer computes its convolution once on the static 8-bit
    image and re-accumulates the constant result every step; spiking conv
    layers convolve per step; fc layers run as 1x1 convolutions over the
    flattened feature vector; pooling is an OR reduction of each step's
    output map.  Deterministic and reproducible bit for bit.
    """
    img = np.asarray(image)
    if img.ndim != 3:
        raise ShapeError(f"image must be [C][H][W], got {img.shape}")
    if img.min() < 0 or img.max() > 255:
        raise InvalidParameterError("encoding input values must be in [0, 255]")
    if time_steps < 1:
        raise InvalidParameterError("time_steps must be >= 1")

    trains: list[SpikeTrain] = []
    current: np.ndarray | None = None  # [T][C][H][W] spikes
    for idx, layer in enumerate(net.layers):
        if layer.kind == "encoding-conv":
            conv = conv2d_oracle(img, weights[idx], padding=layer.padding)
            scaled = folded[idx].scaled_by_pow2(ENCODING_SHIFT)
            current = _if_run([conv] * time_steps, scaled, fmt)
        elif layer.kind == "conv":
            steps = [
                conv2d_oracle(current[t], weights[idx], padding=layer.padding)
                for t in range(time_steps)
            ]
            current = _if_run(steps, folded[idx], fmt)
        elif layer.kind == "fc":
            flat = current.reshape(time_steps, -1, 1, 1)
            steps = [
                conv2d_oracle(flat[t], weights[idx], padding=0)
                for t in range(time_steps)
            ]
            current = _if_run(steps, folded[idx], fmt)
        elif layer.kind == "maxpool2":
            current = np.stack(
                [maxpool2_oracle(current[t]) for t in range(time_steps)]
            )
        else:
            raise InvalidParameterError(f"unknown layer kind {layer.kind!r}")
        expected = layer.out_shape
        if expected is not None and current.shape[1:] != tuple(expected):
            raise ShapeError(
                f"layer {idx} produced {current.shape[1:]}, expected {tuple(expected)}"
            )
        trains.append(SpikeTrain(current))

    counts = trains[-1].data.sum(axis=(0, 2, 3)).astype(np.int64)
    return OracleRun(trains, counts)
