"""Synthetic tiled-VR workload generator.

Stands in for a recorded head-movement dataset plus viewport predictor: a
smooth random walk moves a center of attention over the tile grid, tiles
get viewing probability decaying with distance to it, and each chunk ships
one GoP for each of the most-likely-viewed tiles. Frame sizes follow a
Gamma distribution calibrated so the flow offers its configured bitrate,
with I-frames a configurable multiple of the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .video import (
    FlowTrace,
    FrameId,
    FrameMeta,
    chunk_deadline,
    frame_deadline,
    importance,
    two_layer_gop,
)

_SIZE_STREAM = 0
_WALK_STREAM = 1


@dataclass(frozen=True)
class TraceParams:
    flow: int = 0
    bitrate_bps: float = 2.5e6
    video_s: float = 30.0
    fps: float = 30.0
    chunk_s: float = 1.0
    tile_rows: int = 4
    tile_cols: int = 6
    gop_size: int = 6
    i_frame_ratio: float = 3.0
    gamma_shape: float = 4.0
    request_lead_chunks: int = 2
    uplink_ms: float = 15.0
    walk_decay: float = 0.5
    uniform_attention: bool = False
    importance_counts_self: bool = False

    @property
    def n_chunks(self) -> int:
        return int(round(self.video_s / self.chunk_s))

    @property
    def frames_per_chunk(self) -> int:
        return int(round(self.fps * self.chunk_s))

    @property
    def gops_per_chunk(self) -> int:
        return self.frames_per_chunk // self.gop_size

    def validate(self) -> None:
        if self.bitrate_bps <= 0:
            raise ValueError(f"bitrate must be positive, got {self.bitrate_bps}")
        if self.n_chunks < 1:
            raise ValueError("video shorter than one chunk")
        if self.frames_per_chunk < 1:
            raise ValueError("chunk shorter than one frame interval")
        if self.gop_size > self.frames_per_chunk or self.frames_per_chunk % self.gop_size:
            raise ValueError(
                f"gop size {self.gop_size} does not fit the "
                f"{self.frames_per_chunk}-frame chunk"
            )
        if self.gops_per_chunk > self.tile_rows * self.tile_cols:
            raise ValueError("more GoPs per chunk than tiles in the grid")
        if self.request_lead_chunks < 1:
            raise ValueError("request lead must be at least one chunk")
        if not 0.0 < self.walk_decay < 1.0:
            raise ValueError(f"walk decay {self.walk_decay} outside (0, 1)")
        if self.i_frame_ratio < 1.0:
            raise ValueError("I-frames cannot be smaller than the others")
        if self.gamma_shape <= 0:
            raise ValueError("gamma shape must be positive")


def gamma_frame_sizes(
    rng: np.random.Generator, mean_bytes: float, shape: float, n: int
) -> np.ndarray:
    """Gamma-distributed frame sizes with the given mean, floored at 1 byte."""
    draws = rng.gamma(shape, mean_bytes / shape, size=n)
    return np.maximum(1, np.rint(draws)).astype(np.int64)


def viewing_probability_walk(
    n_chunks: int,
    rows: int,
    cols: int,
    rng: np.random.Generator,
    decay: float = 0.5,
    uniform: bool = False,
) -> list[dict[int, float]]:
    """Per-chunk tile viewing probabilities from a center-of-attention walk.

    The center moves at most one tile per chunk; columns wrap (the panorama
    is periodic in longitude) while rows clamp at the poles. A tile's
    probability is ``decay ** distance`` to the center, so the center tile
    gets 1.0 and everything stays strictly positive. Uniform mode gives all
    tiles probability 1.
    """
    probs: list[dict[int, float]] = []
    if uniform:
        flat = {r * cols + c + 1: 1.0 for r in range(rows) for c in range(cols)}
        return [dict(flat) for _ in range(n_chunks)]
    row = int(rng.integers(rows))
    col = int(rng.integers(cols))
    half_cols = cols / 2.0
    for _ in range(n_chunks):
        chunk_probs: dict[int, float] = {}
        for r in range(rows):
            for c in range(cols):
                dc = abs(c - col)
                if dc > half_cols:
                    dc = cols - dc
                dist = math.hypot(r - row, dc)
                chunk_probs[r * cols + c + 1] = decay ** dist
        probs.append(chunk_probs)
        row = min(rows - 1, max(0, row + int(rng.integers(-1, 2))))
        col = (col + int(rng.integers(-1, 2))) % cols
    return probs


def generate_trace(params: TraceParams, seed: int) -> FlowTrace:
    """Produce one flow's full send schedule.

    The client issues one request per chunk duration (chunk c at
    ``(c-1) * chunk_s``) and the server paces the chunk's frames uniformly
    over the following chunk duration. Playback of chunk c starts ``lead``
    chunk durations after its request, so at steady state a chunk's
    deadline is ``lead`` whole chunk durations and each frame's deadline
    shrinks by its send offset.
    """
    params.validate()
    size_rng = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(params.flow, _SIZE_STREAM))
    )
    walk_rng = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(params.flow, _WALK_STREAM))
    )

    gop = two_layer_gop(params.gop_size)
    probs = viewing_probability_walk(
        params.n_chunks, params.tile_rows, params.tile_cols, walk_rng,
        params.walk_decay, params.uniform_attention,
    )

    n_frames = params.frames_per_chunk
    gops = params.gops_per_chunk
    # Calibrate the non-I frame mean so the chunk total matches the bitrate.
    chunk_bytes = params.bitrate_bps * params.chunk_s / 8.0
    unit = chunk_bytes / (gops * (params.i_frame_ratio + params.gop_size - 1))

    chunk_ms = params.chunk_s * 1000.0
    frame_gap_ms = chunk_ms / n_frames
    lead = params.request_lead_chunks

    frames: list[FrameMeta] = []
    for c in range(1, params.n_chunks + 1):
        # during pre-roll the countdown runs as if playback had begun, so
        # the first chunks get the same lead as the steady state
        if c > lead:
            ddl_chunk = chunk_deadline(c, c - lead, params.chunk_s)
        else:
            ddl_chunk = chunk_deadline(lead, 0, params.chunk_s)
        t_request = (c - 1) * chunk_ms
        t_first = t_request + params.uplink_ms
        tile_order = sorted(probs[c - 1], key=lambda m: (-probs[c - 1][m], m))
        means = np.full(params.gop_size, unit)
        means[0] *= params.i_frame_ratio
        j = 0
        for g in range(gops):
            tile = tile_order[g]
            p = probs[c - 1][tile]
            draws = size_rng.gamma(params.gamma_shape, means / params.gamma_shape)
            sizes = np.maximum(1, np.rint(draws)).astype(np.int64)
            for k in range(1, params.gop_size + 1):
                t_send = t_first + j * frame_gap_ms
                frames.append(
                    FrameMeta(
                        id=FrameId(c, tile, k),
                        size=int(sizes[k - 1]),
                        gamma=importance(p, k, gop, params.importance_counts_self),
                        deadline_ms=frame_deadline(ddl_chunk, t_send, t_first),
                        send_time_ms=t_send,
                    )
                )
                j += 1

    return FlowTrace(
        flow=params.flow,
        chunk_s=params.chunk_s,
        frames=tuple(frames),
        viewing_prob={c + 1: probs[c] for c in range(params.n_chunks)},
    )
