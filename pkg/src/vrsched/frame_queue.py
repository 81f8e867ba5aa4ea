"""Per-flow frame queue at the bottleneck.

Frames wait here between arrival and forwarding. The queue is kept in
descending weight order, where weight trades importance against remaining
tolerable queuing time; selection of the forwarded / dropped / retained
split is a budgeted prefix walk over that order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .video import FrameMeta

US_PER_MS = 1000.0


@dataclass
class QueuedFrame:
    """A frame resident at the bottleneck."""

    meta: FrameMeta
    t_arrival_us: int
    ddl_ms: float        # deadline as read off the wire
    bound_ms: float      # current queuing-delay bound D
    remaining: int       # unsent bytes
    weight: float = 0.0
    in_service: bool = False  # partially transmitted; pinned at the head

    @property
    def gamma(self) -> float:
        return self.meta.gamma


def tolerable_time(frame: QueuedFrame, now_us: int) -> float:
    """Milliseconds of queuing the frame can still absorb; negative = expired."""
    return frame.bound_ms - (now_us - frame.t_arrival_us) / US_PER_MS


def split_sets(
    frames: Sequence[QueuedFrame],
    budget_bytes: float,
    now_us: int,
) -> tuple[list[QueuedFrame], list[QueuedFrame], list[QueuedFrame]]:
    """Partition a weight-ordered queue into (forwarded, dropped, retained).

    Expired frames (tolerable time < 0) are dropped wherever they sit; their
    sizes never count against the budget. Live frames join the forwarded set
    while the running size total stays within the budget; once one does not
    fit, every later live frame is retained.
    """
    forwarded: list[QueuedFrame] = []
    dropped: list[QueuedFrame] = []
    retained: list[QueuedFrame] = []
    used = 0.0
    overflowed = False
    for f in frames:
        if tolerable_time(f, now_us) < 0:
            dropped.append(f)
            continue
        if not overflowed and used + f.remaining <= budget_bytes:
            forwarded.append(f)
            used += f.remaining
        else:
            overflowed = True
            retained.append(f)
    return forwarded, dropped, retained


def quality_loss(forwarded: Iterable, dropped: Iterable) -> float:
    """Dropped importance as a fraction of all departing importance.

    Defined as 0 when nothing departed or when every departing frame has
    zero importance.
    """
    lost = sum(f.gamma for f in dropped)
    total = lost + sum(f.gamma for f in forwarded)
    if total <= 0.0:
        return 0.0
    return lost / total


class FrameQueue:
    """Weight-ordered frame queue for one flow.

    A frame whose transmission was interrupted mid-frame stays pinned at the
    head: its bytes are already committed, so it is neither resorted away
    nor expired out.
    """

    def __init__(self, beta: float = 0.01, ordered: bool = True):
        self.beta = beta
        self.ordered = ordered  # False = FIFO (ordering ablation, RR, EDF)
        self.frames: list[QueuedFrame] = []

    def __len__(self) -> int:
        return len(self.frames)

    def push(self, frame: QueuedFrame) -> None:
        self.frames.append(frame)

    def head(self) -> Optional[QueuedFrame]:
        return self.frames[0] if self.frames else None

    def pop_head(self) -> QueuedFrame:
        return self.frames.pop(0)

    def resort(self, now_us: int) -> None:
        """Recompute weights and re-order by descending weight.

        Tolerable time enters the weight in seconds. Ties fall back to frame
        id order. No-op for FIFO queues.
        """
        for f in self.frames:
            f.weight = f.gamma - self.beta * tolerable_time(f, now_us) / 1000.0
        if not self.ordered:
            return
        pinned = self.frames[0] if self.frames and self.frames[0].in_service else None
        body = self.frames[1:] if pinned is not None else self.frames
        body = sorted(body, key=lambda f: (-f.weight, f.meta.id))
        self.frames = ([pinned] + body) if pinned is not None else body

    def sweep_expired(self, now_us: int) -> list[QueuedFrame]:
        """Remove and return every expired frame (pinned head excluded)."""
        keep: list[QueuedFrame] = []
        expired: list[QueuedFrame] = []
        for f in self.frames:
            if not f.in_service and tolerable_time(f, now_us) < 0:
                expired.append(f)
            else:
                keep.append(f)
        self.frames = keep
        return expired

    def departing_set(self, delta_ms: float, now_us: int) -> list[QueuedFrame]:
        """Frames expected to leave within the next interval (O <= delta)."""
        return [f for f in self.frames if tolerable_time(f, now_us) <= delta_ms]
