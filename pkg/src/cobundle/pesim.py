"""Cycle-level performance model of a Schur-elimination accelerator.

Each processing element (PE) streams points through a four-stage pipeline.
Stage latencies depend on the point's co-observation value c and on the
number q of duplicated S-matrix processing units (SPUs) in stage four:

    stage 1 (U, g, W, V accumulation)    36 c
    stage 2 (3x3 inverse)                70
    stage 3 (-W inv)                     36 c
    stage 4 (S and r update)             ceil(18 (c^2 + c) / q)

A PE's busy time is the makespan of a permutation flow shop over its points.
Points are routed to PEs by CO range; where ranges overlap a greedy
balancer evens out the load.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

STAGE1_PER_CO = 36
STAGE2_CYCLES = 70
STAGE4_PER_CO = 18
WORDS_PER_OBSERVATION = 18
WORD_BITS = 32


class UncoveredCO(ValueError):
    pass


@dataclass
class PeSpec:
    q: int = 1
    co_range: tuple[int, int] = (1, 50)

    def __post_init__(self):
        self.co_range = (int(self.co_range[0]), int(self.co_range[1]))
        if self.q < 1:
            raise ValueError("a PE needs at least one SPU")
        if self.co_range[0] > self.co_range[1]:
            raise ValueError(f"empty CO range {self.co_range}")

    def accepts(self, co: int) -> bool:
        return self.co_range[0] <= co <= self.co_range[1]


@dataclass
class PeConfig:
    pes: list[PeSpec]
    clock_mhz: float = 180.0
    dma_mbit_s: float = 6400.0
    name: str = ""

    @classmethod
    def from_dict(cls, d: Mapping) -> "PeConfig":
        pes = [PeSpec(int(p.get("q", 1)), tuple(p.get("co_range", (1, 50)))) for p in d["pes"]]
        return cls(pes, float(d.get("clock_mhz", 180.0)), float(d.get("dma_mbit_s", 6400.0)),
                   str(d.get("name", "")))

    def to_dict(self) -> dict:
        return {"name": self.name, "clock_mhz": self.clock_mhz, "dma_mbit_s": self.dma_mbit_s,
                "pes": [{"q": p.q, "co_range": list(p.co_range)} for p in self.pes]}


def schur_1() -> PeConfig:
    return PeConfig([PeSpec(1, (1, 50))], name="Schur_1")


def schur_2() -> PeConfig:
    return PeConfig([PeSpec(2, (1, 50))], name="Schur_2")


def schur_3() -> PeConfig:
    return PeConfig([PeSpec(2, (2, 10)), PeSpec(2, (5, 50))], name="Schur_3")


PRESETS = {"Schur_1": schur_1, "Schur_2": schur_2, "Schur_3": schur_3}


def stage_latencies(co: int, q: int = 1) -> tuple[int, int, int, int]:
    s1 = STAGE1_PER_CO * co
    s4 = -(-STAGE4_PER_CO * (co * co + co) // q)
    return s1, STAGE2_CYCLES, s1, s4


def bottleneck(co: int, q: int = 1) -> int:
    return max(stage_latencies(co, q))


def recommend_q(co: int) -> int:
    """Fewest SPUs that stop stage four from being the slowest stage."""
    target = max(STAGE1_PER_CO * co, STAGE2_CYCLES)
    work = STAGE4_PER_CO * (co * co + co)
    q = max(1, -(-work // target))
    while q > 1 and -(-work // (q - 1)) <= target:
        q -= 1
    return q


def spu_efficiency(co: int, q: int) -> float:
    """Speed-up over a single SPU divided by q: 1.0 means no SPU sits idle."""
    return bottleneck(co, 1) / bottleneck(co, q) / q


def pe_time(points: Sequence[int], q: int = 1) -> int:
    """Cycles for one PE to process ``points`` (CO values, in issue order).

    Flow-shop recurrence: a point starts a stage once the stage is free and
    the point has left the previous stage.
    """
    if len(points) == 0:
        return 0
    done = [0, 0, 0, 0]
    for co in points:
        lat = stage_latencies(co, q)
        t = 0
        for s in range(4):
            t = max(t, done[s]) + lat[s]
            done[s] = t
    return done[3]


def pe_time_event_driven(points: Sequence[int], q: int = 1) -> int:
    """Same quantity from an event-queue simulation of four single-server stages."""
    if len(points) == 0:
        return 0
    lat = [stage_latencies(co, q) for co in points]
    queues = [deque(range(len(points))), deque(), deque(), deque()]
    busy = [False] * 4
    events: list[tuple[int, int, int, int]] = []  # (time, seq, stage, point)
    seq = 0
    now = finished = 0

    def dispatch(stage):
        nonlocal seq
        if not busy[stage] and queues[stage]:
            k = queues[stage].popleft()
            busy[stage] = True
            heapq.heappush(events, (now + lat[k][stage], seq, stage, k))
            seq += 1

    dispatch(0)
    while events:
        now, _, stage, k = heapq.heappop(events)
        busy[stage] = False
        if stage < 3:
            queues[stage + 1].append(k)
            dispatch(stage + 1)
        else:
            finished = now
        dispatch(stage)
    return finished


def _as_counts(histogram) -> dict[int, int]:
    out = {}
    for co, v in dict(histogram).items():
        out[int(co)] = int(v[0] if isinstance(v, (tuple, list)) else v)
    return out


def assign_workload(histogram, config: PeConfig) -> list[list[int]]:
    """Route points (given as a CO histogram) to PEs; returns per-PE CO lists.

    Points eligible for one PE go there.  Points eligible for several are
    placed longest-first on the eligible PE with the smallest running busy
    estimate (sum of per-point bottleneck latencies), lowest index on ties.
    """
    counts = _as_counts(histogram)
    pes = config.pes
    lists: list[list[int]] = [[] for _ in pes]
    load = [0] * len(pes)
    shared: list[tuple[int, list[int]]] = []
    for co in sorted(counts):
        n = counts[co]
        if n == 0:
            continue
        eligible = [k for k, pe in enumerate(pes) if pe.accepts(co)]
        if not eligible:
            raise UncoveredCO(f"no PE accepts CO={co}")
        if len(eligible) == 1:
            k = eligible[0]
            lists[k].extend([co] * n)
            load[k] += n * bottleneck(co, pes[k].q)
        else:
            shared.extend([(co, eligible)] * n)
    shared.sort(key=lambda item: -max(bottleneck(item[0], pes[k].q) for k in item[1]))
    for co, eligible in shared:
        k = min(eligible, key=lambda k: (load[k] + bottleneck(co, pes[k].q), k))
        lists[k].append(co)
        load[k] += bottleneck(co, pes[k].q)
    for lst in lists:
        lst.sort()
    return lists


def transfer_model(o: int, b: int, config: PeConfig | None = None) -> tuple[int, float]:
    """Words moved per Schur elimination (18 per observation plus half of S) and DMA time in ms."""
    config = config or schur_1()
    words = WORDS_PER_OBSERVATION * o + (b * b + 1) // 2
    ms = words * WORD_BITS / (config.dma_mbit_s * 1e6) * 1e3
    return words, ms


@dataclass
class PeReport:
    q: int
    co_range: tuple[int, int]
    points: int
    busy_cycles: int
    buffer_co: int
    max_assigned_co: int
    bottleneck_stages: dict[str, int] = field(default_factory=dict)


@dataclass
class SimReport:
    config: str
    pes: list[PeReport]
    makespan_cycles: int
    compute_ms: float
    transfer_words: int
    transfer_ms: float
    overlapped_ms: float
    serial_ms: float

    def to_dict(self) -> dict:
        d = asdict(self)
        for pe in d["pes"]:
            pe["co_range"] = list(pe["co_range"])
        return d


def _stage_histogram(points: Iterable[int], q: int) -> dict[str, int]:
    hist = {"s1": 0, "s2": 0, "s3": 0, "s4": 0}
    for co in points:
        lat = stage_latencies(co, q)
        # ties go to the later stage, which is the one that back-pressures
        worst = max(range(4), key=lambda s: (lat[s], s))
        hist[f"s{worst + 1}"] += 1
    return hist


def simulate(histogram, config: PeConfig, num_observations: int | None = None,
             num_cameras: int = 0) -> SimReport:
    """Predict one Schur elimination on ``config``; PEs run concurrently."""
    counts = _as_counts(histogram)
    if num_observations is None:
        num_observations = sum(co * n for co, n in counts.items())
    lists = assign_workload(counts, config)
    pes = []
    for spec, pts in zip(config.pes, lists):
        pes.append(PeReport(spec.q, spec.co_range, len(pts), pe_time(pts, spec.q),
                            spec.co_range[1], max(pts, default=0), _stage_histogram(pts, spec.q)))
    cycles = max((p.busy_cycles for p in pes), default=0)
    compute_ms = cycles / (config.clock_mhz * 1e3)
    words, tms = transfer_model(num_observations, num_cameras, config)
    return SimReport(config.name, pes, cycles, compute_ms, words, tms,
                     max(compute_ms, tms), compute_ms + tms)


def compare_configs(problems: Mapping[str, tuple], configs: Sequence[PeConfig]) -> list[dict]:
    """Simulate every (problem, config) pair.

    ``problems`` maps a label to ``(histogram, num_observations, num_cameras)``.
    Each row carries the overlapped time and the speed-up of the first config
    over this one (so the first config's rows read 1.0).
    """
    rows = []
    for label, (hist, o, b) in problems.items():
        reports = [simulate(hist, cfg, o, b) for cfg in configs]
        base = reports[0].overlapped_ms
        for cfg, rep in zip(configs, reports):
            rows.append({
                "dataset": label,
                "config": cfg.name,
                "compute_ms": rep.compute_ms,
                "transfer_ms": rep.transfer_ms,
                "overlapped_ms": rep.overlapped_ms,
                "serial_ms": rep.serial_ms,
                "speedup": base / rep.overlapped_ms if rep.overlapped_ms else math.inf,
            })
    return rows
