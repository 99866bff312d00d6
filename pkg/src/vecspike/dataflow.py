"""Cycle-approximate model of the vectorwise convolution datapath.

The schedule streams one input column per PE block per cycle.  A block's
arrays hold the kernel columns of the active output channel, products
reduce along array diagonals, and after a (kw-1)-cycle pipeline fill one
output column completes per cycle.  Input heights taller than the array
are split into row tiles whose edge partial sums are stitched through a
boundary ledger; input channels beyond the group size are folded across
sequential group passes in the accumulator's last stage.  The encoding
layer maps each of the eight input bitplanes to its own block and
recombines them with a shift-add in the first accumulator stage.

Functional outputs are produced by a vectorized equivalent of the
column-by-column pipeline (integer addition is associative, so the
reassociation is exact); cycle counts and PE activity follow the pass
structure: output channels outermost, then channel groups, then row
tiles, then columns, with the pipeline fill charged once per
weight-register pass because consecutive column streams overlap one
pass's drain with the next pass's fill.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .arch import (
    CycleReport,
    GroupAccumulator,
    HardwareConfig,
    PEArrayState,
    accumulate_stage1,
    accumulate_tree,
    pe_array_cycle,
)
from .core import (
    ENCODING_SHIFT,
    BinaryWeightTensor,
    FoldedNeuronParams,
    MembraneState,
    SpikeTrain,
    maxpool2_oracle,
)
from .errors import (
    BoundaryLedgerError,
    ConfigError,
    InvalidParameterError,
    ShapeError,
)

if TYPE_CHECKING:  # pragma: no cover
    from .netconfig import NetworkDescription


# ---------------------------------------------------------------------------
# tile boundary ledger
# ---------------------------------------------------------------------------

@dataclass
class TileBoundary:
    """Ledger of cross-tile partial-sum rows (the boundary SRAM model).

    Output rows whose receptive field straddles a tile edge stay pending
    until the adjacent tile contributes its share; each pending row is
    deposited once and consumed exactly once.  Occupancy is reported for
    one output channel at a time, matching the sequential channel order of
    the schedule.
    """

    param_bytes: int = 3
    deposits: int = 0
    consumes: int = 0
    peak_rows: int = 0
    _resident: set = field(default_factory=set)

    def note_deposit(self, rows):
        for g in rows:
            if g not in self._resident:
                self._resident.add(g)
                self.deposits += 1
        self.peak_rows = max(self.peak_rows, len(self._resident))

    def note_consume(self, rows):
        for g in rows:
            if g in self._resident:
                self._resident.discard(g)
                self.consumes += 1

    def peak_bytes(self, width: int) -> int:
        return self.peak_rows * width * self.param_bytes

    def assert_empty(self):
        if self._resident:
            raise BoundaryLedgerError(
                f"{len(self._resident)} boundary rows left unconsumed"
            )


# ---------------------------------------------------------------------------
# vectorized tile kernel
# ---------------------------------------------------------------------------

def _tile_partial_rows(x_tile: np.ndarray, wv: np.ndarray) -> np.ndarray:
    """Raw partial-sum rows of one tile: all diagonals, pre-stitching.

    For a tile of ``rt`` input rows the result has ``rt + kh - 1`` rows:
    the first and last ``kh - 1`` carry partial sums that belong to
    outputs shared with the neighbouring tiles.
    """
    cg, rt, w_in = x_tile.shape
    kh, kw = wv.shape[2], wv.shape[3]
    xp = np.zeros((cg, rt + 2 * (kh - 1), w_in), dtype=np.int64)
    xp[:, kh - 1 : kh - 1 + rt] = x_tile
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    return np.einsum("cpxuv,ocuv->opx", windows, wv)


def _row_tiles(height: int, rows: int) -> list[tuple[int, int]]:
    return [(base, min(rows, height - base)) for base in range(0, height, rows)]


def _channel_groups(channels: int, size: int) -> list[tuple[int, int]]:
    return [(start, min(size, channels - start)) for start in range(0, channels, size)]


@dataclass
class ConvPassResult:
    output: np.ndarray          # [Cout][H_out][W_out] integer conv sums
    report: CycleReport
    boundary: TileBoundary


def _check_kernel(kh: int, kw: int, cfg: HardwareConfig):
    if kw > cfg.arrays_per_block:
        raise ConfigError(
            f"kernel width {kw} exceeds the {cfg.arrays_per_block} arrays per block"
        )
    if kh > cfg.array_cols:
        raise ConfigError(
            f"kernel height {kh} exceeds the {cfg.array_cols}-tall weight column"
        )


def _run_schedule(
    x: np.ndarray,
    weights: BinaryWeightTensor,
    cfg: HardwareConfig,
    groups: list[tuple[int, int]],
    blocks_per_channel: int,
    tile_fn,
) -> ConvPassResult:
    """Shared pass structure for spiking and encoding convolutions.

    ``tile_fn(x_slice, w_slice) -> raw rows`` computes one group/tile
    contribution; everything else (boundary stitching, group folding,
    cycle accounting) is common.
    """
    cin, h_in, w_in = x.shape
    kh, kw = weights.kernel
    _check_kernel(kh, kw, cfg)
    h_out = h_in - kh + 1
    w_out = w_in - kw + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"{kh}x{kw} kernel does not fit {h_in}x{w_in} input")
    cout = weights.out_channels
    wv = weights.values()
    tiles = _row_tiles(h_in, cfg.array_rows)

    out = np.zeros((cout, h_out, w_out), dtype=np.int64)
    boundary = TileBoundary(param_bytes=cfg.param_bytes)
    pending: dict[int, np.ndarray] = {}
    n_groups = len(groups)

    for gi, (c0, csz) in enumerate(groups):
        last_group = gi == n_groups - 1
        for si, (base, rt) in enumerate(tiles):
            raw = tile_fn(x[c0 : c0 + csz, base : base + rt], wv[:, c0 : c0 + csz])
            for p in range(raw.shape[1]):
                g = base + p - (kh - 1)
                if not 0 <= g < h_out:
                    continue  # edge diagonals outside the output range
                if g in pending:
                    pending[g] = pending[g] + raw[:, p]
                else:
                    pending[g] = raw[:, p].copy()
            if last_group:
                covered = base + rt - 1
                done = [g for g in pending if g + kh - 1 <= covered]
                boundary.note_consume(g for g in done)
                for g in done:
                    out[:, g] = pending.pop(g)
                if si < len(tiles) - 1:
                    boundary.note_deposit(pending.keys())
    if pending:
        raise BoundaryLedgerError(f"{len(pending)} output rows never completed")
    boundary.assert_empty()

    warmup_per_pass = kw - 1
    n_tiles = len(tiles)
    total = cout * n_groups * (warmup_per_pass + n_tiles * w_out)
    warmup = cout * n_groups * warmup_per_pass
    active = 0
    for _, csz in groups:
        for _, rt in tiles:
            active += cout * w_out * (csz * blocks_per_channel) * kw * rt * kh
    report = CycleReport(
        total_cycles=total,
        warmup_cycles=warmup,
        active_pe_cycles=active,
        total_pe_cycles=total * cfg.pe_count,
        pe_count=cfg.pe_count,
        clock_hz=cfg.clock_hz,
    ).validate()
    return ConvPassResult(out, report, boundary)


def schedule_conv_layer(
    x,
    weights: BinaryWeightTensor,
    cfg: HardwareConfig,
) -> ConvPassResult:
    """Run one spiking-layer convolution step through the datapath model.

    ``x`` is a single time step's spike map [Cin][H][W], already zero
    padded (padding is materialized by the network config, never inside
    the schedule).  Output equals the dense reference convolution exactly.
    """
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 3:
        raise ShapeError(f"input must be [C][H][W], got {x.shape}")
    if x.shape[0] != weights.in_channels:
        raise ShapeError(
            f"input has {x.shape[0]} channels, weights expect {weights.in_channels}"
        )
    groups = _channel_groups(x.shape[0], cfg.group_size)
    return _run_schedule(
        x, weights, cfg, groups, blocks_per_channel=1, tile_fn=_tile_partial_rows
    )


def schedule_encoding_layer(
    x,
    weights: BinaryWeightTensor,
    cfg: HardwareConfig,
) -> ConvPassResult:
    """Run the multi-bit encoding convolution through the datapath model.

    Each input channel splits into eight 1-bit planes on eight PE blocks
    sharing one weight; the first accumulator stage shifts each block's
    sums by its bitplane index before the cross-block tree, so the result
    equals the integer convolution of the 8-bit input exactly.
    """
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 3:
        raise ShapeError(f"input must be [C][H][W], got {x.shape}")
    if x.shape[0] != weights.in_channels:
        raise ShapeError(
            f"input has {x.shape[0]} channels, weights expect {weights.in_channels}"
        )
    if x.size and (x.min() < 0 or x.max() > 255):
        raise InvalidParameterError("encoding input values must be in [0, 255]")
    if cfg.pe_blocks < 8:
        raise ConfigError("the encoding layer needs 8 PE blocks per channel")

    def bitplane_tile(x_slice, w_slice):
        total = None
        for plane in range(8):
            bits = (x_slice >> plane) & 1
            contribution = _tile_partial_rows(bits, w_slice) << plane
            total = contribution if total is None else total + contribution
        return total

    groups = _channel_groups(x.shape[0], cfg.encoding_channels_per_pass)
    return _run_schedule(
        x, weights, cfg, groups, blocks_per_channel=8, tile_fn=bitplane_tile
    )


# ---------------------------------------------------------------------------
# cycle-by-cycle column stream (small fixtures and cross-checks)
# ---------------------------------------------------------------------------

@dataclass
class ColumnEmission:
    cycle: int
    out_channel: int
    column_index: int
    raw_column: np.ndarray  # R + K - 1 diagonal sums, pre-stitching


@dataclass
class ColumnStreamResult:
    emissions: list[ColumnEmission]
    output: np.ndarray
    cycles_per_pass: int
    warmup_cycles: int
    steady_cycles: int


def stream_conv_columns(
    x,
    weights: BinaryWeightTensor,
    cfg: HardwareConfig,
) -> ColumnStreamResult:
    """Simulate the column pipeline of one tile, register by register.

    Input columns broadcast to every array of a block; array ``a`` holds
    kernel column ``a`` (reversed into its weight register so diagonal
    sums line up with output rows).  Array ``a``'s sums at cycle ``t``
    belong to output column ``t - a``, so a column completes every cycle
    once ``kw - 1`` fill cycles have passed.  Restricted to a single
    tile/group (H <= R, Cin <= group size) and full-height kernels.
    """
    x = np.asarray(x, dtype=np.uint8)
    cin, h, w = x.shape
    kh, kw = weights.kernel
    _check_kernel(kh, kw, cfg)
    if kh != cfg.array_cols:
        raise ConfigError("column stream requires kernel height == array_cols")
    if h > cfg.array_rows:
        raise ConfigError("column stream handles a single row tile (H <= R)")
    if cin > cfg.group_size:
        raise ConfigError("column stream handles a single channel group")
    r, k = cfg.array_rows, cfg.array_cols
    w_out = w - kw + 1
    h_out = h - kh + 1
    if w_out < 1 or h_out < 1:
        raise ShapeError(f"{kh}x{kw} kernel does not fit {h}x{w} input")
    cout = weights.out_channels

    emissions: list[ColumnEmission] = []
    output = np.zeros((cout, h_out, w_out), dtype=np.int64)
    for o in range(cout):
        arrays = [[PEArrayState(r, k) for _ in range(kw)] for _ in range(cin)]
        history: list[list[deque]] = [
            [deque(maxlen=kw) for _ in range(kw)] for _ in range(cin)
        ]
        # weight register: kernel column a, reversed top-to-bottom
        wcols = [
            [weights.sign_bits[o, c, ::-1, a] for a in range(kw)] for c in range(cin)
        ]
        for t in range(w):
            in_cols = np.zeros((cin, r), dtype=np.uint8)
            in_cols[:, :h] = x[:, :, t]
            for c in range(cin):
                for a in range(kw):
                    state = arrays[c][a]
                    state.clear_partial()
                    sums = pe_array_cycle(state, in_cols[c], wcols[c][a])
                    history[c][a].append(sums.copy())
            if t < kw - 1:
                continue
            col = t - (kw - 1)
            block_sums = []
            for c in range(cin):
                aligned = [history[c][a][-(kw - a)] for a in range(kw)]
                while len(aligned) < 3:
                    aligned.append(np.zeros(r + k - 1, dtype=np.int64))
                block_sums.append(accumulate_stage1(aligned[:3], mode="spiking"))
            acc = GroupAccumulator(expected_groups=1)
            column = accumulate_tree(
                block_sums, acc, is_last_group=True, max_blocks=cfg.pe_blocks
            )
            emissions.append(ColumnEmission(t, o, col, column))
            output[o, :, col] = column[kh - 1 : kh - 1 + h_out]
    return ColumnStreamResult(
        emissions=emissions,
        output=output,
        cycles_per_pass=w,
        warmup_cycles=kw - 1,
        steady_cycles=w_out,
    )


# ---------------------------------------------------------------------------
# IF neuron unit
# ---------------------------------------------------------------------------

def if_unit_process(
    conv_out,
    params: FoldedNeuronParams,
    membrane: MembraneState,
    mode: str = "spiking",
) -> tuple[np.ndarray, MembraneState]:
    """Subtract the folded bias, accumulate, compare, fire and reset.

    In ``encoding-iterate`` mode the caller re-presents the same integer
    convolution every step (it is parked in the second membrane SRAM on
    chip); the arithmetic here is identical, only the data source differs.
    """
    if mode not in ("spiking", "encoding-iterate"):
        raise ConfigError(f"unknown IF mode {mode!r}")
    x = np.asarray(conv_out, dtype=np.int64)
    if x.shape != membrane.potentials.shape:
        raise ShapeError(
            f"conv output {x.shape} does not match membrane {membrane.potentials.shape}"
        )
    if params.channels != x.shape[0]:
        raise ShapeError(
            f"{params.channels} parameter channels for {x.shape[0]} output channels"
        )
    fmt = membrane.fmt
    weighted = (x << fmt.frac_bits) - params.bias_raw[:, None, None]
    fired = membrane.last_output.astype(bool)
    v = np.where(fired, 0, membrane.potentials) + weighted
    fmt.check_raw(v, "membrane potential")
    thr = params.threshold_raw[:, None, None]
    flip = params.flipped[:, None, None]
    spikes = np.where(flip, v <= thr, v >= thr).astype(np.uint8)
    return spikes, MembraneState(v, spikes, fmt)


# ---------------------------------------------------------------------------
# whole-network engine
# ---------------------------------------------------------------------------

@dataclass
class LayerRun:
    index: int
    kind: str
    report: CycleReport
    boundary: TileBoundary | None
    spike_count: int


@dataclass
class EngineRun:
    layer_trains: list[SpikeTrain]
    class_counts: np.ndarray
    layers: list[LayerRun]

    @property
    def total_report(self) -> CycleReport:
        total = CycleReport()
        for layer in self.layers:
            total = total.merged(layer.report)
        return total


def _pad_step(step: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return step
    return np.pad(step, ((0, 0), (pad, pad), (pad, pad)))


def run_network(
    net: "NetworkDescription",
    weights: Sequence[BinaryWeightTensor | None],
    folded: Sequence[FoldedNeuronParams | None],
    image: np.ndarray,
    time_steps: int,
    cfg: HardwareConfig,
) -> EngineRun:
    """Execute a validated network on the datapath model.

    Layer by layer, all time steps of one layer run before the next so
    membrane potentials never leave the chip.  The encoding convolution is
    computed once and iterated against the residue potential; pooling is
    applied as post-processing on each step's output map.  Spike trains
    are bit-identical to :func:`vecspike.core.run_network_oracle`.
    """
    img = np.asarray(image)
    if img.ndim != 3:
        raise ShapeError(f"image must be [C][H][W], got {img.shape}")
    if time_steps < 1:
        raise InvalidParameterError("time_steps must be >= 1")
    fmt = cfg.fmt

    trains: list[SpikeTrain] = []
    layer_runs: list[LayerRun] = []
    current: np.ndarray | None = None
    for idx, layer in enumerate(net.layers):
        report = CycleReport()
        boundary: TileBoundary | None = None
        if layer.kind == "encoding-conv":
            result = schedule_encoding_layer(
                _pad_step(img, layer.padding), weights[idx], cfg
            )
            report = result.report
            boundary = result.boundary
            params = folded[idx].scaled_by_pow2(ENCODING_SHIFT)
            membrane = MembraneState.zeros(result.output.shape, fmt)
            steps = []
            for _ in range(time_steps):
                spikes, membrane = if_unit_process(
                    result.output, params, membrane, mode="encoding-iterate"
                )
                steps.append(spikes)
            current = np.stack(steps)
        elif layer.kind in ("conv", "fc"):
            membrane = None
            steps = []
            for t in range(time_steps):
                step = current[t]
                if layer.kind == "fc":
                    step = step.reshape(-1, 1, 1)
                result = schedule_conv_layer(
                    _pad_step(step, layer.padding), weights[idx], cfg
                )
                report = report.merged(result.report)
                boundary = result.boundary
                if membrane is None:
                    membrane = MembraneState.zeros(result.output.shape, fmt)
                spikes, membrane = if_unit_process(
                    result.output, folded[idx], membrane, mode="spiking"
                )
                steps.append(spikes)
            current = np.stack(steps)
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
        train = SpikeTrain(current)
        trains.append(train)
        layer_runs.append(
            LayerRun(idx, layer.kind, report, boundary, train.spike_count())
        )

    counts = trains[-1].data.sum(axis=(0, 2, 3)).astype(np.int64)
    return EngineRun(trains, counts, layer_runs)


def conv_layer_report(
    in_channels: int,
    out_channels: int,
    h_padded: int,
    w_padded: int,
    kh: int,
    kw: int,
    cfg: HardwareConfig,
    *,
    encoding: bool = False,
) -> CycleReport:
    """Cycle accounting of one convolution step from shapes alone.

    Used by throughput reporting; matches the reports produced by the
    schedulers bit for bit (the counts depend only on geometry).
    """
    _check_kernel(kh, kw, cfg)
    h_out = h_padded - kh + 1
    w_out = w_padded - kw + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"{kh}x{kw} kernel does not fit {h_padded}x{w_padded} input")
    if encoding:
        if cfg.pe_blocks < 8:
            raise ConfigError("the encoding layer needs 8 PE blocks per channel")
        groups = _channel_groups(in_channels, cfg.encoding_channels_per_pass)
        blocks_per_channel = 8
    else:
        groups = _channel_groups(in_channels, cfg.group_size)
        blocks_per_channel = 1
    tiles = _row_tiles(h_padded, cfg.array_rows)
    warmup_per_pass = kw - 1
    total = out_channels * len(groups) * (warmup_per_pass + len(tiles) * w_out)
    warmup = out_channels * len(groups) * warmup_per_pass
    active = 0
    for _, csz in groups:
        for _, rt in tiles:
            active += out_channels * w_out * (csz * blocks_per_channel) * kw * rt * kh
    return CycleReport(
        total_cycles=total,
        warmup_cycles=warmup,
        active_pe_cycles=active,
        total_pe_cycles=total * cfg.pe_count,
        pe_count=cfg.pe_count,
        clock_hz=cfg.clock_hz,
    ).validate()
