"""Seeded synthetic failure events with a crew-dispatch simulation.

Everything random is drawn from one ``numpy.random.Generator`` built from the
config seed, in a fixed order, so a trace is a pure function of its config.
"""

from __future__ import annotations

import enum
import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dependence import (
    FAST_QUANTILE,
    LARGE_THRESHOLD,
    PROLONGED_QUANTILE,
    CategoryLabel,
    assign_categories,
    rank_recovery_speed,
)
from .errors import OutageError
from .ingest import DeviceType, FailureRecord

MAX_CUSTOMERS = 10**7


class Policy(str, enum.Enum):
    SIZE_PRIORITY = "SizePriority"
    FIFO = "Fifo"
    RANDOM = "Random"


DEFAULT_DEVICE_PRIORS: dict[CategoryLabel, dict[DeviceType, float]] = {
    CategoryLabel.PRIORITIZED_LARGE: {
        DeviceType.SUBSTATION_BREAKER: 0.90,
        DeviceType.RECLOSER: 0.06,
        DeviceType.FUSED_DISC: 0.04,
    },
    CategoryLabel.NON_PRIORITIZED_LARGE: {
        DeviceType.SUBSTATION_BREAKER: 0.10,
        DeviceType.RECLOSER: 0.50,
        DeviceType.FUSED_DISC: 0.40,
    },
    CategoryLabel.PROLONGED_SMALL: {
        DeviceType.TRANSFORMER: 0.60,
        DeviceType.FUSED_CUTOUT: 0.35,
        DeviceType.OTHER: 0.05,
    },
    CategoryLabel.REMAINING_SMALL: {
        DeviceType.TRANSFORMER: 0.40,
        DeviceType.FUSED_CUTOUT: 0.40,
        DeviceType.OTHER: 0.20,
    },
}


@dataclass
class SynthConfig:
    seed: int = 0
    n_failures: int = 1000
    arrival_rate: float = 60.0  # failures per hour
    alpha: float = 1.1
    repair_mu: float = math.log(60.0)  # lognormal log-minutes of crew work
    repair_sigma: float = 0.8
    crews: int = 1
    policy: Policy = Policy.SIZE_PRIORITY
    storm_flag: bool = True
    crew_start: int = 0  # minutes after the first arrival before crews dispatch
    start_time: int = 0
    id_prefix: str = "f"
    device_priors: Mapping[CategoryLabel, Mapping[DeviceType, float]] = field(
        default_factory=lambda: DEFAULT_DEVICE_PRIORS
    )
    geo_box: tuple[float, float, float, float] | None = (40.5, 45.0, -79.5, -72.0)

    def __post_init__(self) -> None:
        self.policy = Policy(self.policy)
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.repair_sigma < 0:
            raise ValueError("repair_sigma must be >= 0")
        if self.crews < 1:
            raise ValueError("crews must be >= 1")
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be > 0")
        if self.n_failures < 0:
            raise ValueError("n_failures must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["policy"] = self.policy.value
        d["device_priors"] = {
            c.value: {k.value: v for k, v in pri.items()} for c, pri in self.device_priors.items()
        }
        d["geo_box"] = list(self.geo_box) if self.geo_box else None
        return d


@dataclass(frozen=True)
class Job:
    job_id: int
    arrival: int
    work: int
    size: int = 1
    priority_key: float = 0.0


@dataclass(frozen=True)
class Assignment:
    job_id: int
    crew: int
    start: int
    end: int


def _queue_key(job: Job, policy: Policy) -> tuple:
    if policy is Policy.SIZE_PRIORITY:
        return (-job.size, job.arrival, job.job_id)
    if policy is Policy.RANDOM:
        return (job.priority_key, job.arrival, job.job_id)
    return (job.arrival, job.job_id)


def simulate_restoration(
    jobs: Sequence[Job],
    crews: int,
    policy: Policy | str,
    crew_start: int = 0,
) -> list[Assignment]:
    """Non-preemptive multi-crew dispatch; returns assignments in dispatch order.

    Whenever a crew is free it takes the best queued job under ``policy``;
    jobs arriving at the same instant are all queued before the choice.
    Crews are idle until ``crew_start``. Free crews are served lowest id first.
    """
    policy = Policy(policy)
    if crews < 1:
        raise ValueError("crews must be >= 1")
    todo = sorted(jobs, key=lambda j: (j.arrival, j.job_id))
    crew_heap = [(crew_start, c) for c in range(crews)]
    heapq.heapify(crew_heap)
    queue: list[tuple] = []
    out: list[Assignment] = []
    clock = -math.inf
    i = 0
    while len(out) < len(todo):
        free_at, crew = heapq.heappop(crew_heap)
        clock = max(clock, free_at)
        if not queue and i < len(todo) and todo[i].arrival > clock:
            clock = todo[i].arrival
        while i < len(todo) and todo[i].arrival <= clock:
            heapq.heappush(queue, (_queue_key(todo[i], policy), todo[i]))
            i += 1
        job = heapq.heappop(queue)[1]
        start = int(clock)
        out.append(Assignment(job.job_id, crew, start, start + job.work))
        heapq.heappush(crew_heap, (start + job.work, crew))
    return out


@dataclass
class SimTrace:
    records: list[FailureRecord]
    arrival_order: list[str]
    dispatch_order: list[str]
    crew_id: dict[str, int]
    work: dict[str, int]
    config: SynthConfig

    def sidecar(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "arrival_order": self.arrival_order,
            "dispatch_order": self.dispatch_order,
            "crew_id": self.crew_id,
            "work": self.work,
        }

    def sidecar_json(self) -> str:
        return json.dumps(self.sidecar(), indent=2, sort_keys=True)


def sample_sizes(rng: np.random.Generator, alpha: float, n: int) -> np.ndarray:
    """Pareto(alpha, x_min=1) customer counts, discretized by ceiling."""
    x = np.ceil(1.0 + rng.pareto(alpha, n))
    return np.minimum(x, MAX_CUSTOMERS).astype(np.int64)


def _draw_devices(
    rng: np.random.Generator,
    labels: Sequence[CategoryLabel],
    priors: Mapping[CategoryLabel, Mapping[DeviceType, float]],
) -> list[DeviceType]:
    u = rng.random(len(labels))
    out = []
    for lab, ui in zip(labels, u):
        prior = priors.get(lab) or {DeviceType.OTHER: 1.0}
        kinds = list(prior)
        cum = np.cumsum([prior[k] for k in kinds])
        idx = int(np.searchsorted(cum / cum[-1], ui, side="right"))
        out.append(kinds[min(idx, len(kinds) - 1)])
    return out


def generate_event(config: SynthConfig) -> SimTrace:
    if config.n_failures == 0:
        raise OutageError("EMPTY_CONFIG", "n_failures is 0")
    rng = np.random.default_rng(config.seed)
    n = config.n_failures
    gaps = rng.exponential(60.0 / config.arrival_rate, n)
    arrivals = np.floor(np.cumsum(gaps) - gaps[0]).astype(np.int64) + config.start_time
    sizes = sample_sizes(rng, config.alpha, n)
    work = np.maximum(np.ceil(rng.lognormal(config.repair_mu, config.repair_sigma, n)), 1).astype(np.int64)
    keys = rng.random(n)
    jobs = [
        Job(i, int(arrivals[i]), int(work[i]), int(sizes[i]), float(keys[i])) for i in range(n)
    ]
    assignments = simulate_restoration(
        jobs, config.crews, config.policy, crew_start=config.start_time + config.crew_start
    )
    ids = [f"{config.id_prefix}{i:06d}" for i in range(n)]
    restored = {a.job_id: a.end for a in assignments}

    provisional = [
        FailureRecord(ids[i], int(arrivals[i]), restored[i], int(sizes[i]), major_storm=config.storm_flag)
        for i in range(n)
    ]
    labels = assign_categories(rank_recovery_speed(provisional))
    devices = _draw_devices(rng, [labels[r.record_id] for r in provisional], config.device_priors)
    if config.geo_box:
        lat0, lat1, lon0, lon1 = config.geo_box
        lats = np.round(rng.uniform(lat0, lat1, n), 5)
        lons = np.round(rng.uniform(lon0, lon1, n), 5)
    else:
        lats = lons = [None] * n
    records = [
        FailureRecord(
            r.record_id,
            r.occurred_at,
            r.restored_at,
            r.customers,
            devices[i],
            None if lats[i] is None else float(lats[i]),
            None if lons[i] is None else float(lons[i]),
            config.storm_flag,
        )
        for i, r in enumerate(provisional)
    ]
    return SimTrace(
        records=records,
        arrival_order=[ids[j.job_id] for j in sorted(jobs, key=lambda j: (j.arrival, j.job_id))],
        dispatch_order=[ids[a.job_id] for a in assignments],
        crew_id={ids[a.job_id]: a.crew for a in assignments},
        work={ids[i]: int(work[i]) for i in range(n)},
        config=config,
    )


def priority_config(seed: int, n_failures: int = 1000, **overrides) -> SynthConfig:
    """Single crew, strict size priority, all failures queued before dispatch starts.

    Arrivals land within a few minutes and every repair takes longer than the
    arrival spread, so completion order and duration order both follow size.
    """
    base = dict(
        seed=seed,
        n_failures=n_failures,
        arrival_rate=6000.0,
        repair_mu=math.log(90.0),
        repair_sigma=0.3,
        crews=1,
        policy=Policy.SIZE_PRIORITY,
        crew_start=60,
    )
    base.update(overrides)
    return SynthConfig(**base)


def fifo_config(seed: int, n_failures: int = 1000, **overrides) -> SynthConfig:
    base = dict(seed=seed, n_failures=n_failures, policy=Policy.FIFO, crews=1)
    base.update(overrides)
    return SynthConfig(**base)


SCENARIO_GAP = 2 * 1440


def mixed_scenario(seed: int = 0, repeat: int = 1, alpha: float = 1.1) -> list[SynthConfig]:
    """One moderate, one severe and one extreme event per repeat.

    Start times are filled in by :func:`generate_sequence`.
    """
    out = []
    for k in range(repeat):
        base = seed + 3 * k
        out += [
            SynthConfig(seed=base, n_failures=300, arrival_rate=30.0, crews=6, storm_flag=False,
                        alpha=alpha, id_prefix=f"m{k}-"),
            SynthConfig(seed=base + 1, n_failures=900, arrival_rate=90.0, crews=5, storm_flag=True,
                        alpha=alpha, id_prefix=f"s{k}-"),
            SynthConfig(seed=base + 2, n_failures=1600, arrival_rate=160.0, crews=5, storm_flag=True,
                        alpha=alpha, id_prefix=f"x{k}-"),
        ]
    return out


def generate_sequence(configs: Sequence[SynthConfig], gap: int = SCENARIO_GAP) -> list[SimTrace]:
    """Generate events back to back, each starting ``gap`` minutes after the
    previous one is fully restored."""
    traces = []
    start = 0
    for cfg in configs:
        cfg = SynthConfig(**{**vars(cfg), "start_time": start})
        tr = generate_event(cfg)
        traces.append(tr)
        start = max(r.restored_at for r in tr.records) + gap
    return traces
