"""Frame-level deficit weighted round robin egress.

Allocation decisions become per-flow byte credit at every tick; the
forwarder spends credit on whole frames in queue order, dropping expired
heads at service time and carrying a partially transmitted frame across
rounds. The link clock (owned by the simulator) decides departure timing;
this module only decides order and byte accounting, one action at a time so
the expiry check always happens at the moment a frame would actually go
out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

from .frame_queue import FrameQueue, QueuedFrame, tolerable_time


@dataclass(frozen=True)
class SendAction:
    """One committed transmission slice."""

    flow: int
    frame: QueuedFrame
    bytes_sent: int
    completed: bool


@dataclass(frozen=True)
class DropAction:
    flow: int
    frame: QueuedFrame


Action = Union[SendAction, DropAction]


class DwrrForwarder:
    """Deficit state and round-robin cursor over a fixed flow set."""

    def __init__(self, flows: Sequence[int], purge_expired: bool = True):
        self._order = list(flows)
        self._cursor = 0
        self.purge_expired = purge_expired
        self.deficit: dict[int, float] = {f: 0.0 for f in flows}

    def replenish(self, flow: int, rate_bps: float, interval_s: float) -> None:
        """Add one interval's quantum, clamping stale credit to one quantum.

        A zero-rate replenish leaves the deficit untouched rather than
        zeroing carried credit.
        """
        quantum = rate_bps * interval_s / 8.0
        if quantum <= 0.0:
            return
        self.deficit[flow] = min(self.deficit[flow], quantum) + quantum

    def next_action(
        self, queues: Mapping[int, FrameQueue], now_us: int
    ) -> Optional[Action]:
        """One scheduling step: a drop, a send slice, or None when stuck.

        The cursor stays on the flow it last served, so a flow keeps the
        link until its credit or queue runs out, then the scan moves on.
        A send covers the head's remaining bytes when credit allows;
        otherwise it spends what is left and pins the head in service.
        """
        n = len(self._order)
        for i in range(n):
            flow = self._order[(self._cursor + i) % n]
            queue = queues[flow]
            head = queue.head()
            if (
                head is not None
                and self.purge_expired
                and not head.in_service
                and tolerable_time(head, now_us) < 0
            ):
                queue.pop_head()
                self._cursor = (self._cursor + i) % n
                return DropAction(flow, head)
            avail = int(self.deficit[flow])
            if head is None or avail <= 0:
                continue
            sent = min(head.remaining, avail)
            head.remaining -= sent
            self.deficit[flow] -= sent
            if head.remaining == 0:
                queue.pop_head()
                head.in_service = False
                completed = True
            else:
                head.in_service = True
                completed = False
            self._cursor = (self._cursor + i) % n
            return SendAction(flow, head, sent, completed)
        return None

    def forward_round(
        self, queues: Mapping[int, FrameQueue], now_us: int
    ) -> tuple[list[SendAction], list[DropAction]]:
        """Drain every spendable deficit in round-robin order at one instant.

        Convenience batch form of :meth:`next_action`; the simulator instead
        interleaves single actions with the link clock.
        """
        sends: list[SendAction] = []
        drops: list[DropAction] = []
        while True:
            act = self.next_action(queues, now_us)
            if act is None:
                return sends, drops
            if isinstance(act, SendAction):
                sends.append(act)
            else:
                drops.append(act)
