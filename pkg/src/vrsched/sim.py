"""Deterministic discrete-event model of the dumbbell topology.

Per-flow servers emit frames on their trace schedule; frames cross a
server-side access link (constant delay, optionally with exponential jitter
per frame), queue at the single bottleneck, and are forwarded by the
selected policy. Departures serialize on the bottleneck link clock, reach
the client after the propagation delay, and are acknowledged back to the
server, which stamps the resulting RTT into the metadata of later frames.

Time is integer microseconds throughout. Events at equal timestamps are
ordered by kind priority, then by insertion sequence, so runs are
bit-reproducible for a given (config, seed).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, NamedTuple, Optional

import numpy as np

from . import wire
from .allocation import ArrivalServiceStats, FlowLtInput, LtDecision, allocate_lt
from .baselines import EDF, RR, SINGLE_TS, SchedulerPolicy, edf_next, parse_policy, rr_allocate
from .config import SimConfig
from .delay import FlowDelayState, revise_bounds
from .forwarder import DropAction, DwrrForwarder
from .frame_queue import FrameQueue, QueuedFrame, tolerable_time
from .metrics import MetricsCollector, summary_csv, write_text
from .scheduling import FlowStInput, schedule_st
from .traffic import generate_trace
from .video import FlowTrace, FrameMeta, read_trace

US_PER_S = 1_000_000
US_PER_MS = 1000

# event kind priorities: lower runs first at equal timestamps
EV_DEPARTURE = 0
EV_LINKFREE = 1   # a partial slice finished serializing; resume service
EV_SEND = 2
EV_ARRIVAL = 3
EV_ACK = 4
EV_REQUEST = 5
EV_PLAYBACK = 6
EV_LTI = 7
EV_STI = 8

_JITTER_STREAM = 2


class Event(NamedTuple):
    time_us: int
    prio: int
    seq: int
    kind: int
    flow: int
    data: Any


@dataclass(frozen=True)
class LinkModel:
    """Bottleneck link plus the fixed path delays around it."""

    rate_bps: float
    propagation_ms: float = 5.0
    server_delay_ms: float = 10.0
    ack_delay_ms: float = 15.0
    regime: str = "stable"
    jitter_mean_ms: float = 15.0


def inject_delay(t_send_us: int, link: LinkModel, rng: np.random.Generator) -> int:
    """Bottleneck arrival time for a frame sent at ``t_send_us``."""
    delay_ms = link.server_delay_ms
    if link.regime == "unstable" and link.jitter_mean_ms > 0:
        delay_ms += rng.exponential(link.jitter_mean_ms)
    return t_send_us + int(round(delay_ms * US_PER_MS))


@dataclass
class ClientModel:
    """Playback position and request bookkeeping for one flow's client."""

    request_lead: int = 2
    playback_chunk: int = 0
    last_requested: int = 0
    received: int = 0


@dataclass
class _FlowRuntime:
    flow: int
    trace: FlowTrace
    queue: FrameQueue
    tracker: FlowDelayState
    stats: ArrivalServiceStats
    client: ClientModel
    jitter_rng: np.random.Generator
    next_send: int = 0
    send_seq: dict = field(default_factory=dict)     # FrameId -> send index
    latest_mark: Optional[tuple[float, Any, int]] = None  # (rtt_ms, ref_id, ref_seq)
    last_arrival_us: Optional[int] = None
    current_rate_bps: float = 0.0
    v_prev_ms: Optional[float] = None
    generated: int = 0
    arrived: int = 0
    forwarded: int = 0
    dropped: int = 0
    in_flight: int = 0
    in_transit: int = 0   # committed to the link, departure pending


@dataclass
class RunResult:
    config: SimConfig
    collector: MetricsCollector
    summary: dict
    budget_violations: int
    st_invocations: int
    lt_log: list[tuple]
    st_log: list[tuple]
    event_log: list[tuple]
    flow_counters: dict[int, dict[str, int]]

    def metrics_csv(self) -> str:
        return self.collector.metrics_csv()

    def summary_csv(self) -> str:
        return summary_csv(self.summary)

    def write(self, out_dir: str | Path, decisions: bool = False,
              events: bool = False) -> None:
        out = Path(out_dir)
        write_text(out / "metrics.csv", self.metrics_csv())
        write_text(out / "summary.csv", self.summary_csv())
        if decisions:
            lt = ["n,flow,d_f_ms,b_hat_bps"]
            lt += [",".join(str(x) for x in row) for row in self.lt_log]
            write_text(out / "lt_decisions.csv", "\n".join(lt) + "\n")
            st = ["n,t,flow,b_st_bps,phase1_bps,dU_last"]
            st += [",".join(str(x) for x in row) for row in self.st_log]
            write_text(out / "st_decisions.csv", "\n".join(st) + "\n")
        if events:
            ev = ["time_us,flow,c,m,k,event,q_delay_ms"]
            ev += [",".join(str(x) for x in row) for row in self.event_log]
            write_text(out / "events.csv", "\n".join(ev) + "\n")


class Simulation:
    """One simulation instance; strictly single-threaded."""

    def __init__(self, config: SimConfig, check_invariants: bool = False,
                 log_events: bool = False):
        config.validate()
        self.config = config
        self.policy: SchedulerPolicy = parse_policy(config.policy)
        self.check_invariants = check_invariants
        self.log_events = log_events

        self.link = LinkModel(
            rate_bps=config.link_bps,
            propagation_ms=config.propagation_ms,
            server_delay_ms=config.server_delay_ms,
            ack_delay_ms=config.ack_delay_ms,
            regime=config.regime,
            jitter_mean_ms=config.jitter_mean_ms,
        )

        self.delta_us = int(round(config.delta_s * US_PER_S))
        tick_s = (
            self.policy.interval_s
            if self.policy.kind == SINGLE_TS
            else config.sti_s
        )
        self.tick_s = tick_s
        self.tick_us = int(round(tick_s * US_PER_S))
        self.d_min_s = config.d_min_ms / 1000.0

        self.flows: dict[int, _FlowRuntime] = {}
        for f in range(config.n_flows):
            if config.trace_files:
                trace = read_trace(config.trace_files[f], chunk_s=config.chunk_s)
            else:
                trace = generate_trace(config.trace_params(f), config.seed)
            self.flows[f] = _FlowRuntime(
                flow=f,
                trace=trace,
                queue=FrameQueue(
                    beta=config.beta, ordered=self.policy.uses_weight_order
                ),
                tracker=FlowDelayState(
                    alpha=config.ewma_alpha,
                    prior_external_ms=config.prior_external_ms,
                ),
                stats=ArrivalServiceStats(alpha=config.ewma_alpha),
                client=ClientModel(request_lead=config.request_lead_chunks),
                jitter_rng=np.random.default_rng(
                    np.random.SeedSequence(config.seed, spawn_key=(f, _JITTER_STREAM))
                ),
            )

        self.forwarder = DwrrForwarder(
            list(self.flows), purge_expired=config.proactive_drop
        )
        fair = config.link_bps / config.n_flows if config.n_flows else 0.0
        self.lt_decision = LtDecision(
            rate_bps={f: fair for f in self.flows},
            target_delay_s={f: None for f in self.flows},
            s_ave_bytes={f: None for f in self.flows},
        )

        self.collector = MetricsCollector(list(self.flows))
        self.budget_violations = 0
        self.st_invocations = 0
        self.lt_log: list[tuple] = []
        self.st_log: list[tuple] = []
        self.event_log: list[tuple] = []

        self._heap: list[Event] = []
        self._seq = 0
        self._last_time = 0
        self.link_busy_until_us = 0

        for f, rt in self.flows.items():
            if rt.trace.frames:
                self._push(self._frame_send_us(rt, 0), EV_SEND, f, 0)
            n_chunks = rt.trace.n_chunks
            chunk_us = int(round(config.chunk_s * US_PER_S))
            lead = config.request_lead_chunks
            # one request per chunk duration; later requests chain off playback
            for c in range(1, min(lead, n_chunks) + 1):
                self._push((c - 1) * chunk_us, EV_REQUEST, f, c)
            for c in range(1, n_chunks + 1):
                self._push((c - 1 + lead) * chunk_us, EV_PLAYBACK, f, c)
        if self.flows:
            self._push(0, EV_STI, -1, None)
            self._push(self.delta_us, EV_LTI, -1, None)

    # -- helpers ----------------------------------------------------------

    def _push(self, time_us: int, kind: int, flow: int, data: Any) -> None:
        self._seq += 1
        heapq.heappush(self._heap, Event(time_us, kind, self._seq, kind, flow, data))

    def _frame_send_us(self, rt: _FlowRuntime, idx: int) -> int:
        return int(round(rt.trace.frames[idx].send_time_ms * US_PER_MS))

    def _interval_of(self, t_us: int) -> int:
        return max(1, -(-t_us // self.delta_us))

    def _work_remaining(self, now_us: int) -> bool:
        if self.link_busy_until_us > now_us:
            return True
        for rt in self.flows.values():
            if rt.next_send < len(rt.trace.frames) or rt.in_flight or len(rt.queue) or rt.in_transit:
                return True
        return False

    def _assert_budget(self, total_bps: float) -> None:
        if total_bps > self.link.rate_bps * (1.0 + 1e-9):
            self.budget_violations += 1

    def _commit_to_link(self, now_us: int, flow: int, frame: QueuedFrame,
                        nbytes: int, completed: bool) -> None:
        start = max(now_us, self.link_busy_until_us)
        tx_us = int(math.ceil(nbytes * 8 * US_PER_S / self.link.rate_bps))
        self.link_busy_until_us = start + tx_us
        if completed:
            self.flows[flow].in_transit += 1
            self._push(self.link_busy_until_us, EV_DEPARTURE, flow, frame)
        else:
            self._push(self.link_busy_until_us, EV_LINKFREE, flow, None)

    def _drop(self, now_us: int, flow: int, frame_meta: FrameMeta) -> None:
        rt = self.flows[flow]
        rt.dropped += 1
        n = self._interval_of(now_us)
        self.collector.on_dropped(n, flow, frame_meta.gamma)
        if self.log_events:
            fid = frame_meta.id
            self.event_log.append((now_us, flow, fid.c, fid.m, fid.k, "drop", ""))

    def _sweep_queue(self, now_us: int, flow: int) -> None:
        if not self.config.proactive_drop:
            return
        for f in self.flows[flow].queue.sweep_expired(now_us):
            self._drop(now_us, flow, f.meta)

    # -- event handlers ---------------------------------------------------

    def _on_send(self, now_us: int, flow: int, idx: int) -> None:
        rt = self.flows[flow]
        meta = rt.trace.frames[idx]
        seq = len(rt.send_seq)
        rt.send_seq[meta.id] = seq

        rtt_ms, ref_offset = 0, 0
        mark_meta = meta
        if rt.latest_mark is not None:
            mark_rtt, ref_id, ref_seq = rt.latest_mark
            offset = seq - ref_seq
            if 1 <= offset <= 255:
                rtt_ms, ref_offset = mark_rtt, offset
                mark_meta = replace(meta, rtt_mark=(mark_rtt, ref_id))
        opt = wire.MetadataOption(
            vr_flag=True,
            chunk=meta.id.c,
            tile=meta.id.m,
            gop_pos=meta.id.k,
            deadline_ms=wire.saturate_ms(meta.deadline_ms),
            rtt_ms=wire.saturate_ms(rtt_ms),
            rtt_ref_offset=ref_offset,
        )
        packet = wire.encode(opt)

        rt.generated += 1
        rt.in_flight += 1
        arrival = inject_delay(now_us, self.link, rt.jitter_rng)
        self._push(arrival, EV_ARRIVAL, flow, (mark_meta, packet))

        rt.next_send = idx + 1
        if rt.next_send < len(rt.trace.frames):
            self._push(self._frame_send_us(rt, rt.next_send), EV_SEND, flow, rt.next_send)

    def _on_arrival(self, now_us: int, flow: int, data: tuple) -> None:
        rt = self.flows[flow]
        meta, packet = data
        rt.in_flight -= 1
        rt.arrived += 1

        opt = wire.decode(packet)
        if opt.rtt_ref_offset > 0:
            ref = rt.tracker.resolve_ref(opt.rtt_ref_offset, opt.chunk,
                                         float(opt.deadline_ms))
            rt.tracker.apply_mark(float(opt.rtt_ms), ref)
        rt.tracker.record_arrival(meta.id, opt.chunk, float(opt.deadline_ms))

        if self.policy.uses_lt:
            if rt.last_arrival_us is not None:
                gap_s = (now_us - rt.last_arrival_us) / US_PER_S
                rt.stats.inter_arrival.update(gap_s)
            rt.last_arrival_us = now_us
            rt.stats.frame_size.update(meta.size)

        bound_ms = rt.tracker.bound_for(float(opt.deadline_ms))
        if bound_ms < 0 and self.config.proactive_drop:
            self._drop(now_us, flow, meta)
            return
        rt.queue.push(
            QueuedFrame(
                meta=meta,
                t_arrival_us=now_us,
                ddl_ms=float(opt.deadline_ms),
                bound_ms=bound_ms,
                remaining=meta.size,
            )
        )
        # keep the link busy when credit is already available
        if self.policy.kind == EDF:
            self._edf_kick(now_us)
        else:
            self._dwrr_kick(now_us)

    def _on_departure(self, now_us: int, flow: int, frame: QueuedFrame) -> None:
        rt = self.flows[flow]
        rt.in_transit -= 1
        rt.forwarded += 1
        q_ms = (now_us - frame.t_arrival_us) / US_PER_MS
        rt.tracker.record_departure(frame.meta.id, q_ms)

        if self.policy.uses_lt and rt.current_rate_bps > 0:
            rt.stats.service.update(frame.meta.size * 8.0 / rt.current_rate_bps)

        receipt_ms = now_us / US_PER_MS + self.link.propagation_ms
        deadline_abs_ms = frame.meta.send_time_ms + frame.meta.deadline_ms
        late = receipt_ms > deadline_abs_ms + 1e-9
        n = self._interval_of(now_us)
        self.collector.on_forwarded(n, flow, frame.meta.gamma, frame.meta.size, late)
        if self.log_events:
            fid = frame.meta.id
            self.event_log.append((now_us, flow, fid.c, fid.m, fid.k, "fwd", repr(q_ms)))

        # client feedback: receipt, then an ack carrying the RTT reference
        rt.client.received += 1
        ack_us = now_us + int(round((self.link.propagation_ms + self.link.ack_delay_ms) * US_PER_MS))
        self._push(ack_us, EV_ACK, flow, frame.meta.id)

        if self.policy.kind == EDF:
            self._edf_kick(now_us)
        else:
            self._dwrr_kick(now_us)

    def _on_linkfree(self, now_us: int, flow: int, _data) -> None:
        if self.policy.kind == EDF:
            self._edf_kick(now_us)
        else:
            self._dwrr_kick(now_us)

    def _on_ack(self, now_us: int, flow: int, frame_id) -> None:
        rt = self.flows[flow]
        seq = rt.send_seq.get(frame_id)
        if seq is None:
            return
        # frames are sent in trace order, so the send index recovers the frame
        rtt_ms = now_us / US_PER_MS - rt.trace.frames[seq].send_time_ms
        rt.latest_mark = (rtt_ms, frame_id, seq)

    def _on_request(self, now_us: int, flow: int, chunk: int) -> None:
        client = self.flows[flow].client
        if chunk <= client.playback_chunk:
            raise AssertionError(
                f"flow {flow} requested chunk {chunk} at playback {client.playback_chunk}"
            )
        client.last_requested = max(client.last_requested, chunk)

    def _on_playback(self, now_us: int, flow: int, chunk: int) -> None:
        rt = self.flows[flow]
        rt.client.playback_chunk = chunk
        nxt = chunk + rt.client.request_lead
        if nxt <= rt.trace.n_chunks:
            self._push(now_us, EV_REQUEST, flow, nxt)

    # -- scheduler ticks --------------------------------------------------

    def _tracker_debug(self, n: int) -> None:
        for f, rt in self.flows.items():
            tr = rt.tracker
            self.collector.on_tracker(
                n, f,
                tr.rtt.mean if tr.rtt.initialized else None,
                tr.queue_delay.mean if tr.queue_delay.initialized else None,
                tr.net_state_ms,
            )

    def _run_lt_allocation(self, now_us: int, delta_alloc_s: float,
                           governed_interval: int) -> None:
        inputs: dict[int, FlowLtInput] = {}
        for f, rt in self.flows.items():
            departing = rt.queue.departing_set(delta_alloc_s * 1000.0, now_us)
            pairs = [(fr.gamma, fr.bound_ms / 1000.0) for fr in departing]
            s_ave = rt.stats.s_ave if rt.stats.frame_size.initialized else None
            inputs[f] = FlowLtInput(
                frames=pairs,
                stats=rt.stats,
                s_ave_bytes=s_ave,
                prev_rate_bps=self.lt_decision.rate_bps[f],
                prev_delay_s=self.lt_decision.target_delay_s[f],
                prev_s_ave_bytes=self.lt_decision.s_ave_bytes[f],
            )
        self.lt_decision = allocate_lt(
            inputs, self.link.rate_bps, self.config.epsilon, self.d_min_s
        )
        for f in self.lt_decision.infeasible:
            self.collector.on_infeasible(governed_interval, f)
        for f in self.flows:
            d = self.lt_decision.target_delay_s[f]
            self.lt_log.append(
                (governed_interval, f,
                 repr(d * 1000.0) if d is not None else "",
                 repr(self.lt_decision.rate_bps[f]))
            )

    def _on_lti(self, now_us: int) -> None:
        n = now_us // self.delta_us
        self._tracker_debug(n)
        if self.policy.uses_lt and self.policy.kind != SINGLE_TS:
            self._run_lt_allocation(now_us, self.config.delta_s, n + 1)
        if self._work_remaining(now_us):
            self._push(now_us + self.delta_us, EV_LTI, -1, None)

    def _on_sti(self, now_us: int) -> None:
        kind = self.policy.kind
        if kind == EDF:
            for f in self.flows:
                self._sweep_queue(now_us, f)
            self._edf_kick(now_us)
        elif kind == RR:
            for f in self.flows:
                self._sweep_queue(now_us, f)
            active = [f for f, rt in self.flows.items() if len(rt.queue)]
            rates = rr_allocate(active, self.link.rate_bps)
            self._assert_budget(sum(rates.values()))
            for f, rate in rates.items():
                self.flows[f].current_rate_bps = rate
                self.forwarder.replenish(f, rate, self.tick_s)
            self._dwrr_kick(now_us)
        elif kind == SINGLE_TS:
            self._run_lt_allocation(
                now_us, self.policy.interval_s,
                self._interval_of(now_us + 1),
            )
            share = (
                max(0.0, self.link.rate_bps - self.lt_decision.total()) / len(self.flows)
                if self.flows else 0.0
            )
            self._assert_budget(self.lt_decision.total() + share * len(self.flows))
            for f, rt in self.flows.items():
                rate = self.lt_decision.rate_bps[f] + share
                rt.current_rate_bps = rate
                self.forwarder.replenish(f, rate, self.tick_s)
                rt.queue.resort(now_us)
                self._sweep_queue(now_us, f)
            self._dwrr_kick(now_us)
        else:  # proposed / no-order
            self._st_phase(now_us)
        if self._work_remaining(now_us):
            self._push(now_us + self.tick_us, EV_STI, -1, None)

    def _st_phase(self, now_us: int) -> None:
        self.st_invocations += 1
        n = self._interval_of(now_us + 1)
        t_idx = (now_us % self.delta_us) // self.tick_us

        for f, rt in self.flows.items():
            v = rt.tracker.net_state_ms
            if v is not None:
                revise_bounds(rt.queue.frames, v)
            rt.queue.resort(now_us)

        inputs: dict[int, FlowStInput] = {}
        for f, rt in self.flows.items():
            stats_ready = rt.stats.ready
            inputs[f] = FlowStInput(
                frames=rt.queue.frames,
                base_rate_bps=self.lt_decision.rate_bps[f],
                target_delay_s=self.lt_decision.target_delay_s[f],
                s_ave_bytes=self.lt_decision.s_ave_bytes[f],
                mu_a=rt.stats.mu_a if stats_ready else None,
                c_a=rt.stats.c_a if stats_ready else None,
                c_s=rt.stats.c_s if stats_ready else None,
                v_now_ms=rt.tracker.net_state_ms,
                v_prev_ms=rt.v_prev_ms,
            )
        st = schedule_st(inputs, self.link.rate_bps, self.config.sti_s, now_us,
                         self.d_min_s)
        self._assert_budget(self.lt_decision.total() + st.total())

        for f, rt in self.flows.items():
            rate = self.lt_decision.rate_bps[f] + st.rate_bps[f]
            rt.current_rate_bps = rate
            self.forwarder.replenish(f, rate, self.tick_s)
            rt.v_prev_ms = rt.tracker.net_state_ms
            if st.rate_bps[f] or st.last_gain.get(f):
                self.st_log.append(
                    (n, t_idx, f, repr(st.rate_bps[f]),
                     repr(st.phase1_bps.get(f, 0.0)),
                     repr(st.last_gain.get(f, 0.0)))
                )
            self._sweep_queue(now_us, f)
        self._dwrr_kick(now_us)

    def _dwrr_kick(self, now_us: int) -> None:
        """Serve the queues while the link is free; one slice per departure.

        Expired heads are purged at the instant they would otherwise be
        served, so the bound check reflects the true service time rather
        than the tick that granted the credit.
        """
        queues = {f: rt.queue for f, rt in self.flows.items()}
        while self.link_busy_until_us <= now_us:
            act = self.forwarder.next_action(queues, now_us)
            if act is None:
                return
            if isinstance(act, DropAction):
                self._drop(now_us, act.flow, act.frame.meta)
                continue
            self._commit_to_link(now_us, act.flow, act.frame, act.bytes_sent,
                                 act.completed)

    def _edf_kick(self, now_us: int) -> None:
        if self.link_busy_until_us > now_us:
            return
        queues = {f: rt.queue for f, rt in self.flows.items()}
        if self.config.proactive_drop:
            for f, q in queues.items():
                while q.head() is not None and tolerable_time(q.head(), now_us) < 0:
                    self._drop(now_us, f, q.pop_head().meta)
        flow = edf_next(queues, now_us)
        if flow is None:
            return
        frame = queues[flow].pop_head()
        self._commit_to_link(now_us, flow, frame, frame.remaining, True)
        frame.remaining = 0

    # -- main loop ---------------------------------------------------------

    def _check_conservation(self) -> None:
        for f, rt in self.flows.items():
            outstanding = rt.in_flight + len(rt.queue) + rt.in_transit
            if rt.generated != rt.forwarded + rt.dropped + outstanding:
                raise AssertionError(
                    f"flow {f}: generated {rt.generated} != forwarded {rt.forwarded} "
                    f"+ dropped {rt.dropped} + outstanding {outstanding}"
                )

    def run(self) -> RunResult:
        handlers = {
            EV_DEPARTURE: self._on_departure,
            EV_LINKFREE: self._on_linkfree,
            EV_SEND: self._on_send,
            EV_ARRIVAL: self._on_arrival,
            EV_ACK: self._on_ack,
            EV_REQUEST: self._on_request,
            EV_PLAYBACK: self._on_playback,
        }
        while self._heap:
            ev = heapq.heappop(self._heap)
            if ev.time_us < self._last_time:
                raise AssertionError("event time went backwards")
            self._last_time = ev.time_us
            if ev.kind == EV_LTI:
                self._on_lti(ev.time_us)
            elif ev.kind == EV_STI:
                self._on_sti(ev.time_us)
            else:
                handlers[ev.kind](ev.time_us, ev.flow, ev.data)
            if self.check_invariants:
                self._check_conservation()

        self.collector.unmatched_marks = sum(
            rt.tracker.unmatched_marks for rt in self.flows.values()
        )
        summary = self.collector.summary(
            policy=self.policy.tag,
            seed=self.config.seed,
            bottleneck_mbps=self.config.bottleneck_mbps,
            regime=self.config.regime,
            epsilon=self.config.epsilon,
        )
        return RunResult(
            config=self.config,
            collector=self.collector,
            summary=summary,
            budget_violations=self.budget_violations,
            st_invocations=self.st_invocations,
            lt_log=self.lt_log,
            st_log=self.st_log,
            event_log=self.event_log,
            flow_counters={
                f: {
                    "generated": rt.generated,
                    "arrived": rt.arrived,
                    "forwarded": rt.forwarded,
                    "dropped": rt.dropped,
                }
                for f, rt in self.flows.items()
            },
        )


def run(config: SimConfig, check_invariants: bool = False,
        log_events: bool = False) -> RunResult:
    """Build and execute one simulation."""
    return Simulation(config, check_invariants=check_invariants,
                      log_events=log_events).run()
