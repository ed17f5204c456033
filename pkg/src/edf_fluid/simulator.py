"""Discrete-event simulation of the N-th single-server EDF-b queue with reneging.

Customers carry deadlines (arrival time plus patience). The server is
non-idling and non-preemptive; when it frees up it takes the queued customer
with the earliest deadline. A queued customer reneges the instant its lead
time (deadline minus clock) reaches zero; customers in service never leave
early.

Simultaneous events are processed Renege, then ServiceEnd, then Arrival.
Queue ties on deadline go to the smaller id.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sortedcontainers import SortedList

from .distributions import Distribution
from .errors import EventOverflow
from .measures import FiniteMeasure, MeasurePath, PointMasses, fmt
from .model import InitialCondition, Regime, SystemParams

ARRIVAL = "Arrival"
SERVICE_START = "ServiceStart"
SERVICE_END = "ServiceEnd"
RENEGE = "Renege"

DEFAULT_EVENT_CAP = 10_000_000


class Status(enum.Enum):
    IN_QUEUE = "InQueue"
    IN_SERVICE = "InService"
    RENEGED = "Reneged"
    DEPARTED = "Departed"


@dataclass(slots=True)
class Customer:
    id: int
    arrival_time: float
    initial_lead: float
    status: Status = Status.IN_QUEUE
    service_start: float | None = None
    deadline: float = field(init=False)

    def __post_init__(self):
        self.deadline = self.arrival_time + self.initial_lead

    def lead_time(self, t: float) -> float:
        return self.deadline - t


class _Buffered:
    """Draws from ``fn(block)`` one value at a time."""

    def __init__(self, fn, block: int = 2048):
        self._fn = fn
        self._block = block
        self._buf = np.empty(0)
        self._i = 0

    def __call__(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self._fn(self._block)
            self._i = 0
        v = self._buf[self._i]
        self._i += 1
        return float(v)


class RandomStreams:
    """Independent random streams for one replication.

    Inter-arrival and service laws only fix the shape of the renewal
    processes: draws are rescaled to means 1/(N*lam) and 1/(N*mu).
    Patience draws are used as they are.
    """

    def __init__(
        self,
        arrival: Distribution,
        service: Distribution,
        patience: Distribution,
        params: SystemParams,
        seed: int | np.random.SeedSequence | None = None,
    ):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(
            params.seed if seed is None else seed
        )
        rng_a, rng_s, rng_p, rng_i = (np.random.default_rng(c) for c in ss.spawn(4))
        a_scale = 1.0 / (arrival.mean() * params.lam * params.N)
        s_scale = 1.0 / (service.mean() * params.mu * params.N)
        self.interarrival = _Buffered(lambda n: arrival.sample(rng_a, n) * a_scale)
        self.service = _Buffered(lambda n: service.sample(rng_s, n) * s_scale)
        self.patience = _Buffered(lambda n: patience.sample(rng_p, n))
        self._rng_initial = rng_i

    def initial_leads(self, ic: InitialCondition, n: int) -> np.ndarray:
        """n i.i.d. lead times from the normalised initial measure, all > frontier0."""
        if n == 0:
            return np.empty(0)
        leads = ic.law.sample(self._rng_initial, n)
        bad = leads <= ic.frontier0
        while np.any(bad):
            leads[bad] = ic.law.sample(self._rng_initial, int(bad.sum()))
            bad = leads <= ic.frontier0
        return leads


class ScriptedStreams:
    """Replays fixed sequences (already in time units). Used for hand traces.

    When the inter-arrival script runs out no further customers arrive.
    """

    def __init__(
        self,
        interarrivals: Iterable[float] = (),
        services: Iterable[float] = (),
        patience: Iterable[float] = (),
        initial_leads: Sequence[float] = (),
    ):
        self._ia = iter(interarrivals)
        self._sv = iter(services)
        self._pt = iter(patience)
        self._init = np.asarray(initial_leads, dtype=float)

    def interarrival(self) -> float:
        return float(next(self._ia, math.inf))

    def service(self) -> float:
        return float(next(self._sv))

    def patience(self) -> float:
        return float(next(self._pt))

    def initial_leads(self, ic: InitialCondition, n: int) -> np.ndarray:
        return self._init[:n].copy()


@dataclass
class SimState:
    N: int
    streams: object
    clock: float = 0.0
    queue: SortedList = field(default_factory=SortedList)
    customers: dict = field(default_factory=dict)
    server: tuple | None = None
    X: int = 0
    R: int = 0
    E_count: int = 0
    D_count: int = 0
    X0: int = 0
    running_frontier_sup: float = 0.0
    busy_time_accum: float = 0.0
    bypass_updates_frontier: bool = True
    next_arrival: float | None = None
    n_events: int = 0
    events: list = field(default_factory=list)
    arrival_times: list = field(default_factory=list)
    arrival_deadlines: list = field(default_factory=list)
    initial_deadlines: np.ndarray = field(default_factory=lambda: np.empty(0))
    first_empty_time: float | None = None

    @property
    def Q(self) -> int:
        return len(self.queue)

    def head(self) -> Customer | None:
        return self.customers[self.queue[0][1]] if self.queue else None

    def frontier(self, t: float | None = None) -> float:
        return self.running_frontier_sup - (self.clock if t is None else t)

    def _start_service(self, c: Customer) -> None:
        c.status = Status.IN_SERVICE
        c.service_start = self.clock
        self.server = (c, self.clock + self.streams.service())
        self.events.append((self.clock, SERVICE_START, c.id))

    def _note_head(self) -> None:
        if self.queue:
            d = self.queue[0][0]
            if d > self.running_frontier_sup:
                self.running_frontier_sup = d


def build_initial_state(
    ic: InitialCondition,
    params: SystemParams,
    streams,
    *,
    bypass_updates_frontier: bool = True,
) -> SimState:
    """Initial customers at time 0 for the N-th system.

    floor(N * Q_0(0, inf)) customers get i.i.d. lead times from the normalised
    initial measure; the one with the earliest deadline starts service on a
    fresh service draw.
    """
    n0 = int(math.floor(params.N * ic.mass + 1e-9))
    if n0 == 0 and params.regime() is not Regime.SUBCRITICAL:
        # the simulator is exact regardless; only the fluid comparison needs Q(0) > 0
        warnings.warn(
            "initial measure is empty; the fluid limit assumes Q(0) > 0 when lambda >= mu",
            stacklevel=2,
        )
    state = SimState(N=params.N, streams=streams, bypass_updates_frontier=bypass_updates_frontier)
    state.running_frontier_sup = ic.frontier0
    leads = streams.initial_leads(ic, n0)
    state.initial_deadlines = np.asarray(leads, dtype=float)
    for k, lead in enumerate(leads):
        cid = k - n0 + 1
        c = Customer(cid, 0.0, float(lead))
        state.customers[cid] = c
        state.queue.add((c.deadline, cid))
    state.X0 = state.X = n0
    if state.queue:
        _, cid = state.queue.pop(0)
        first = state.customers[cid]
        if bypass_updates_frontier:
            state.running_frontier_sup = max(state.running_frontier_sup, first.deadline)
        state._start_service(first)
    state._note_head()
    if not state.queue:
        state.first_empty_time = 0.0
    return state


@dataclass
class OutputGrid:
    times: np.ndarray
    snapshot_indices: np.ndarray

    @classmethod
    def uniform(cls, horizon: float, points: int = 512, snapshots: int = 32) -> "OutputGrid":
        times = np.linspace(0.0, horizon, points)
        idx = np.unique(np.round(np.linspace(0, points - 1, min(snapshots, points))).astype(int))
        return cls(times, idx)


@dataclass
class SimTrace:
    N: int
    horizon: float
    events: list
    times: np.ndarray
    q: np.ndarray  # Q/N
    r: np.ndarray  # R/N
    x: np.ndarray  # X/N
    frontier: np.ndarray
    current: np.ndarray
    head: np.ndarray  # Z, 0 when the queue is empty
    cf_mass: np.ndarray  # Q_t[C(t), F(t)] / N
    queue_snapshots: MeasurePath
    potential_snapshots: MeasurePath
    first_empty_time: float | None
    arrival_times: np.ndarray
    arrival_deadlines: np.ndarray
    initial_deadlines: np.ndarray
    X0: int
    E: int
    D: int
    R: int
    busy_time: float

    def to_dir(self, directory: str | Path) -> None:
        """Write events.csv, paths.csv and the two snapshot series."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "events.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "kind", "id"])
            for t, kind, cid in self.events:
                w.writerow([fmt(t), kind, cid])
        with open(directory / "paths.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "Q/N", "R/N", "X/N", "F", "C", "Z", "CF/N"])
            cols = (self.times, self.q, self.r, self.x, self.frontier, self.current, self.head,
                    self.cf_mass)
            for row in zip(*cols):
                w.writerow([fmt(v) for v in row])
        self.queue_snapshots.to_dir(directory / "queue_measure", "queue")
        self.potential_snapshots.to_dir(directory / "potential_measure", "potential")


def snapshot_queue_measure(state: SimState) -> PointMasses:
    """Unit atoms at the lead times of the queued (not in service) customers."""
    if not state.queue:
        return FiniteMeasure.zero()
    deadlines = np.fromiter((d for d, _ in state.queue), float, len(state.queue))
    return FiniteMeasure.point_masses(deadlines - state.clock)


def snapshot_potential_measure(
    arrival_log: tuple[Sequence[float], Sequence[float]],
    ic_samples: Sequence[float],
    t: float,
) -> PointMasses:
    """Unit atoms at the positive lead times, at t, of every customer seen so far.

    ``arrival_log`` is ``(arrival_times, deadlines)``; ``ic_samples`` are the
    lead times at time 0 of the initial customers. Service is ignored.
    """
    arr_t = np.asarray(arrival_log[0], dtype=float)
    arr_d = np.asarray(arrival_log[1], dtype=float)
    leads = np.concatenate((arr_d[arr_t <= t] - t, np.asarray(ic_samples, dtype=float) - t))
    leads = leads[leads > 0]
    return FiniteMeasure.point_masses(leads)


def run(
    state: SimState,
    params: SystemParams,
    grid: OutputGrid | None = None,
    *,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> SimTrace:
    """Advance ``state`` to the horizon, sampling paths on ``grid``.

    Raises ``EventOverflow`` once more than ``event_cap`` events have been handled.
    """
    T = params.horizon
    if grid is None:
        grid = OutputGrid.uniform(T)
    times = grid.times
    n_grid = len(times)
    snap_set = set(int(i) for i in grid.snapshot_indices)
    N = state.N
    inv_n = 1.0 / N

    q = np.zeros(n_grid)
    r = np.zeros(n_grid)
    x = np.zeros(n_grid)
    fr = np.zeros(n_grid)
    cur = np.zeros(n_grid)
    hd = np.zeros(n_grid)
    cf = np.zeros(n_grid)
    snap_times, q_snaps, h_snaps = [], [], []

    streams = state.streams
    queue = state.queue
    customers = state.customers
    events = state.events
    inf = math.inf

    if state.next_arrival is None:
        state.next_arrival = state.clock + streams.interarrival()

    def record(g: int) -> None:
        t = times[g]
        nq = len(queue)
        busy = 1 if state.server is not None else 0
        q[g] = nq * inv_n
        r[g] = state.R * inv_n
        x[g] = (nq + busy) * inv_n
        f = state.running_frontier_sup - t
        fr[g] = f
        if nq:
            z = queue[0][0] - t
            hd[g] = z
            cur[g] = z
            cf[g] = queue.bisect_right((state.running_frontier_sup, inf)) * inv_n
        else:
            cur[g] = f
        if g in snap_set:
            snap_times.append(t)
            if nq:
                dl = np.fromiter((d for d, _ in queue), float, nq)
                q_snaps.append(FiniteMeasure.point_masses(dl - t, inv_n))
            else:
                q_snaps.append(FiniteMeasure.zero())
            h = snapshot_potential_measure(
                (state.arrival_times, state.arrival_deadlines), state.initial_deadlines, t
            )
            h_snaps.append(h.scaled(inv_n))

    g = 0
    while True:
        t_r = queue[0][0] if queue else inf
        t_s = state.server[1] if state.server is not None else inf
        t_a = state.next_arrival
        t_next = min(t_r, t_s, t_a)
        while g < n_grid and times[g] < t_next:
            record(g)
            g += 1
        if t_next > T:
            break
        state.n_events += 1
        if state.n_events > event_cap:
            raise EventOverflow(f"more than {event_cap} events before t={T}")
        if state.server is not None:
            state.busy_time_accum += t_next - state.clock
        state.clock = t_next

        if t_r <= t_s and t_r <= t_a:
            _, cid = queue.pop(0)
            c = customers[cid]
            c.status = Status.RENEGED
            state.R += 1
            state.X -= 1
            events.append((t_next, RENEGE, cid))
        elif t_s <= t_a:
            c = state.server[0]
            c.status = Status.DEPARTED
            state.D_count += 1
            state.X -= 1
            events.append((t_next, SERVICE_END, c.id))
            state.server = None
            if queue:
                _, cid = queue.pop(0)
                state._start_service(customers[cid])
        else:
            state.E_count += 1
            cid = state.E_count
            c = Customer(cid, t_next, streams.patience())
            customers[cid] = c
            state.arrival_times.append(t_next)
            state.arrival_deadlines.append(c.deadline)
            state.X += 1
            events.append((t_next, ARRIVAL, cid))
            if state.server is None:
                if state.bypass_updates_frontier and c.deadline > state.running_frontier_sup:
                    state.running_frontier_sup = c.deadline
                state._start_service(c)
            else:
                queue.add((c.deadline, cid))
            state.next_arrival = t_next + streams.interarrival()

        state._note_head()
        if not queue and state.first_empty_time is None:
            state.first_empty_time = t_next

    if state.server is not None and T > state.clock:
        state.busy_time_accum += T - state.clock

    return SimTrace(
        N=N,
        horizon=T,
        events=list(events),
        times=times.copy(),
        q=q,
        r=r,
        x=x,
        frontier=fr,
        current=cur,
        head=hd,
        cf_mass=cf,
        queue_snapshots=MeasurePath(np.array(snap_times), q_snaps),
        potential_snapshots=MeasurePath(np.array(snap_times), h_snaps),
        first_empty_time=state.first_empty_time,
        arrival_times=np.asarray(state.arrival_times, dtype=float),
        arrival_deadlines=np.asarray(state.arrival_deadlines, dtype=float),
        initial_deadlines=state.initial_deadlines.copy(),
        X0=state.X0,
        E=state.E_count,
        D=state.D_count,
        R=state.R,
        busy_time=state.busy_time_accum,
    )


def frontier_path(trace: SimTrace) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(t, F(t), C(t)) on the trace's output grid."""
    return trace.times, trace.frontier, trace.current


def simulate(
    config,
    N: int,
    seed: int | np.random.SeedSequence | None = None,
    *,
    grid: OutputGrid | None = None,
) -> SimTrace:
    """One replication of the N-th system described by a ``RunConfig``."""
    params = config.params(N=N)
    streams = RandomStreams(
        config.arrival_law, config.service_law, config.patience_law, params, seed
    )
    state = build_initial_state(
        config.initial,
        params,
        streams,
        bypass_updates_frontier=config.bypass_updates_frontier,
    )
    if grid is None:
        grid = OutputGrid.uniform(config.horizon, config.output_points, config.snapshot_count)
    return run(state, params, grid, event_cap=config.event_cap)
