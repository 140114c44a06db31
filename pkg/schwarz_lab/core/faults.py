"""
Fault processes and executed index sets for the network models.
Weibull node schedules, master-slave and local-communication cycles,
redundancy groups, rate bounds and replayable fault scenarios.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gamma

from ..utils.rng import derive_rng
from .errors import FaultModelError
from .sampling import IndexSource

logger = logging.getLogger(__name__)

# Warm-up prefix, in mean renewal periods, discarded before cycle 0
WARMUP_PERIODS = 10

MODELS = ('master-slave', 'local-communication', 'constant-rate', 'uniform-interval',
          'weibull-master-slave')
GROUP_POLICIES = ('random', 'alternate')


@dataclass(frozen=True)
class WeibullParams:
    """Weibull distribution in scale form F(t) = 1 - exp(-(t/scale)^shape)."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0.0 and self.scale > 0.0):
            raise FaultModelError(f"Weibull parameters must be positive, got {self.shape}, {self.scale}")

    @property
    def mean(self) -> float:
        return self.scale * gamma(1.0 + 1.0 / self.shape)

    def cdf(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return 1.0 - np.exp(-(t / self.scale) ** self.shape)

    def from_uniform(self, u):
        """Inverse-CDF transform t = scale * (-ln u)^(1/shape) of u in (0, 1]."""
        return self.scale * (-np.log(u)) ** (1.0 / self.shape)


def sample_weibull(params: WeibullParams, rng: np.random.Generator, size=None):
    """
    Draw Weibull durations in cycles by inversion.

    Args:
        params: Shape and scale
        rng: Random generator
        size: Optional output shape

    Returns:
        A float or an array of durations
    """
    u = 1.0 - rng.random(size)
    return params.from_uniform(u)


def covered_cycles(start: float, duration: float) -> Tuple[int, int]:
    """
    Whole cycles [first, end) touched by a down interval [start, start + duration).

    A node counts as failed in every cycle during which it is down at some
    point, so every failure costs at least one cycle.
    """
    first = int(math.floor(start))
    end = max(first + 1, int(math.ceil(start + duration)))
    return first, end


@dataclass
class NodeSchedule:
    """Down intervals [start, end) of one node within cycles 0..horizon-1."""

    node: int
    horizon: int
    down_intervals: List[Tuple[int, int]] = field(default_factory=list)

    def is_down(self, m: int) -> bool:
        return any(start <= m < end for start, end in self.down_intervals)

    def phase(self, m: int) -> str:
        return 'down' if self.is_down(m) else 'up'

    def down_mask(self) -> np.ndarray:
        mask = np.zeros(self.horizon, dtype=bool)
        for start, end in self.down_intervals:
            mask[start:end] = True
        return mask


def _node_schedule(node: int, arrival: WeibullParams, repair: WeibullParams,
                   horizon: int, rng: np.random.Generator) -> NodeSchedule:
    # Start up at -W; after the warm-up the phase is close to stationary
    warmup = int(math.ceil(WARMUP_PERIODS * (arrival.mean + repair.mean)))
    t = float(-warmup)
    intervals: List[Tuple[int, int]] = []
    while True:
        t += float(sample_weibull(arrival, rng))
        if t >= horizon:
            break
        down = float(sample_weibull(repair, rng))
        first, end = covered_cycles(t, down)
        first, end = max(first, 0), min(end, horizon)
        if end > first:
            if intervals and first <= intervals[-1][1]:
                intervals[-1] = (intervals[-1][0], max(end, intervals[-1][1]))
            else:
                intervals.append((first, end))
        t += down
        if t >= horizon:
            break
    return NodeSchedule(node=node, horizon=horizon, down_intervals=intervals)


def generate_schedules(n: int, arrival: WeibullParams, repair: WeibullParams, horizon: int,
                       seed: int) -> Tuple[List[NodeSchedule], float]:
    """
    Independent alternating up/down renewal processes for nodes 1..n.

    Args:
        n: Number of nodes
        arrival: Weibull law of up durations (time to the next failure)
        repair: Weibull law of down durations
        horizon: Number of cycles
        seed: Master seed; node i uses its own stream

    Returns:
        Tuple of the schedules and the realized average per-cycle failure rate
    """
    if horizon < 1:
        raise FaultModelError(f"horizon must be >= 1, got {horizon}")
    schedules = [_node_schedule(node, arrival, repair, horizon,
                                derive_rng(seed, 'schedule', node))
                 for node in range(1, n + 1)]
    rate = float(np.mean([s.down_mask().mean() for s in schedules])) if schedules else 0.0
    logger.info("Generated %d node schedules over %d cycles: realized failure rate %.4f",
                n, horizon, rate)
    return schedules, rate


def down_matrix(schedules: Sequence[NodeSchedule]) -> np.ndarray:
    """Boolean matrix (nodes x cycles) of down indicators."""
    return np.array([s.down_mask() for s in schedules], dtype=bool)


def master_slave_cycle(n: int, f_m: int, rng: np.random.Generator) -> np.ndarray:
    """
    Executed index set when f_m of the n+1 subproblem assignments fail.

    Returns:
        Uniform random subset of {0..n} with n+1-f_m elements, sorted
    """
    if not 0 <= f_m <= n + 1:
        raise FaultModelError(f"f_m must lie in 0..{n + 1}, got {f_m}")
    if f_m == 0:
        return np.arange(n + 1, dtype=np.int64)
    return np.sort(rng.choice(n + 1, size=n + 1 - f_m, replace=False)).astype(np.int64)


def constant_rate_failures(n: int, rate: float) -> int:
    """Failures f* = n + 1 - floor((1 - r_f)(n + 1)) per cycle."""
    if not 0.0 <= rate <= 1.0:
        raise FaultModelError(f"failure rate must lie in [0, 1], got {rate}")
    survivors = int(math.floor((1.0 - rate) * (n + 1) + 1e-9))
    return n + 1 - survivors


def uniform_interval_failures(n: int, f_star: int, delta_f: int, rng: np.random.Generator) -> int:
    """Failures drawn uniformly from [f* - delta_f, f* + delta_f], clipped to 0..n+1."""
    if delta_f < 0:
        raise FaultModelError(f"delta_f must be nonnegative, got {delta_f}")
    low = max(0, f_star - delta_f)
    high = min(n + 1, f_star + delta_f)
    if low > high:
        raise FaultModelError(f"empty failure interval around f*={f_star}")
    return int(rng.integers(low, high + 1))


@dataclass(frozen=True)
class RedundancyGroup:
    """Owner i with the neighbors j_1..j_l holding copies of its data."""

    owner: int
    members: Tuple[int, ...]
    partner: int
    requested: int

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def clamped(self) -> bool:
        return len(self.members) < self.requested


def build_groups(neighbors: Dict[int, Sequence[int]], l: int,
                 centers: Dict[int, Tuple[float, float]]) -> Dict[int, RedundancyGroup]:
    """
    Choose l redundancy neighbors per subdomain.

    Neighbors are ranked by the distance between coarse cell centers,
    ties by ascending index; the partner is the lowest-index member.
    Nodes with fewer than l neighbors keep all of them and are flagged.

    Args:
        neighbors: Neighbor lists of the subdomains 1..n
        l: Requested group size
        centers: Cell center of every subdomain

    Returns:
        Mapping owner -> RedundancyGroup
    """
    if l < 1:
        raise FaultModelError(f"redundancy level must be >= 1, got {l}")
    groups = {}
    clamped = []
    for owner in sorted(neighbors):
        ox, oy = centers[owner]
        ranked = sorted(neighbors[owner],
                        key=lambda j: (math.hypot(centers[j][0] - ox, centers[j][1] - oy), j))
        members = tuple(ranked[:l])
        if not members:
            raise FaultModelError(f"subdomain {owner} has no neighbors to hold its data")
        groups[owner] = RedundancyGroup(owner, members, min(members), l)
        if len(members) < l:
            clamped.append(owner)
    if clamped:
        logger.warning("Redundancy level %d clamped for %d subdomains", l, len(clamped))
    return groups


@dataclass
class CycleEvent:
    """What happened to the subproblem of a down node in one cycle."""

    node: int
    action: str
    helper: Optional[int] = None


def local_comm_cycle(n: int, down_nodes: Sequence[int], groups: Dict[int, RedundancyGroup],
                     rng: np.random.Generator, policy: str = 'random',
                     counters: Optional[Dict[int, int]] = None) -> Tuple[np.ndarray, List[CycleEvent]]:
    """
    Executed index set of one cycle in the local-communication model.

    Starts from the coarse index 0 and all up nodes. Down nodes are
    handled in ascending order: s is drawn on {0..l}; s = 0 skips the
    subproblem, otherwise member j_s solves it instead of its own. A
    member that is down or already switched ignores the request.

    Args:
        n: Number of subdomains
        down_nodes: Failed nodes in this cycle
        groups: Redundancy groups
        rng: Generator for this cycle
        policy: 'random' draws s, 'alternate' cycles s = 0, 1, ..., l
        counters: Per-node down-cycle counters used by 'alternate'

    Returns:
        Tuple of the sorted executed set and the event log
    """
    if policy not in GROUP_POLICIES:
        raise FaultModelError(f"unknown group policy '{policy}'")
    down = set(int(i) for i in down_nodes)
    executed = set(range(n + 1)) - down
    switched = set()
    events = []

    for node in sorted(down):
        group = groups[node]
        if all(j in down for j in group.members):
            events.append(CycleEvent(node, 'group-down'))
            continue
        if policy == 'alternate':
            count = counters.get(node, 0) if counters is not None else 0
            s = count % (group.size + 1)
            if counters is not None:
                counters[node] = count + 1
        else:
            s = int(rng.integers(0, group.size + 1))
        if s == 0:
            events.append(CycleEvent(node, 'skipped'))
            continue
        helper = group.members[s - 1]
        if helper in down:
            events.append(CycleEvent(node, 'neighbor-down', helper))
        elif helper in switched:
            events.append(CycleEvent(node, 'conflict', helper))
        else:
            switched.add(helper)
            executed.discard(helper)
            executed.add(node)
            events.append(CycleEvent(node, 'reassigned', helper))

    if counters is not None:
        for node in list(counters):
            if node not in down:
                counters.pop(node)

    return np.array(sorted(executed), dtype=np.int64), events


@dataclass
class PartitionRates:
    """Partition I^1..I^S of {0..n} with executed counts p^s per part."""

    parts: List[Sequence[int]]
    executed: List[int]

    def __post_init__(self):
        if len(self.parts) != len(self.executed) or not self.parts:
            raise FaultModelError("need one executed count per part")
        seen = set()
        for part, p in zip(self.parts, self.executed):
            if len(part) == 0:
                raise FaultModelError("partition contains an empty part")
            if not 0 <= p <= len(part):
                raise FaultModelError(f"executed count {p} outside 0..{len(part)}")
            if seen.intersection(part):
                raise FaultModelError("partition parts overlap")
            seen.update(part)
        if seen != set(range(len(seen))):
            raise FaultModelError("partition parts must cover 0..n")

    @property
    def rates(self) -> np.ndarray:
        return np.array([p / len(part) for part, p in zip(self.parts, self.executed)])

    @property
    def r_lower(self) -> float:
        return float(self.rates.min())

    @property
    def r_upper(self) -> float:
        return float(self.rates.max())


def corollary_bound(rates: PartitionRates, kappa: float, lambda_max: float = 1.0) -> Tuple[float, float]:
    """
    Relaxation and expected error reduction for partitioned sampling.

    Returns:
        Tuple (xi = r_lower / (r_upper lambda_max),
        factor = 1 - r_lower^2 / (r_upper kappa))
    """
    if kappa < 1.0 or lambda_max <= 0.0:
        raise FaultModelError(f"need kappa >= 1 and lambda_max > 0, got {kappa}, {lambda_max}")
    r_low, r_up = rates.r_lower, rates.r_upper
    if r_up == 0.0:
        raise FaultModelError("no subproblem is executed in any part")
    return r_low / (r_up * lambda_max), 1.0 - r_low * r_low / (r_up * kappa)


def multi_fault_rates(n: int, l: int, S: int, f_prime: int) -> Tuple[float, float]:
    """
    Rate bounds with S - 2 failed nodes and f' further faults.

    Returns:
        Tuple (r_lower, r_upper) with r_upper = 1
    """
    if S < 2 or l < 1 or f_prime < 0:
        raise FaultModelError(f"need S >= 2, l >= 1, f' >= 0, got S={S}, l={l}, f'={f_prime}")
    remaining = n - (S - 2) * (l + 1)
    if remaining <= 0 or f_prime > remaining:
        raise FaultModelError(f"infeasible fault geometry for n={n}, l={l}, S={S}, f'={f_prime}")
    r_low = (remaining - f_prime) / remaining
    # The l/(l+1) parts exist only while some node is still failed
    if S > 2:
        r_low = min(l / (l + 1), r_low)
    return r_low, 1.0


@dataclass
class FaultScenario:
    """
    Realized fault process of a run: per cycle the failed count f_m,
    the down nodes and the indices missing from the executed set.
    """

    model: str
    n: int
    horizon: int
    params: Dict[str, object] = field(default_factory=dict)
    failures: List[int] = field(default_factory=list)
    down: List[List[int]] = field(default_factory=list)
    missing: List[List[int]] = field(default_factory=list)
    realized_rate: float = 0.0
    target_rate: Optional[float] = None
    events: Dict[str, int] = field(default_factory=dict)

    def executed(self, m: int) -> np.ndarray:
        if not 0 <= m < self.horizon:
            raise FaultModelError(f"cycle {m} beyond scenario horizon {self.horizon}")
        mask = np.ones(self.n + 1, dtype=bool)
        mask[self.missing[m]] = False
        return np.flatnonzero(mask).astype(np.int64)

    def to_text(self) -> str:
        """Line-oriented text form; from_text() reproduces every executed set."""
        lines = [f"model: {self.model}", f"n: {self.n}", f"horizon: {self.horizon}",
                 f"realized_rate: {self.realized_rate!r}"]
        if self.target_rate is not None:
            lines.append(f"target_rate: {self.target_rate!r}")
        for key in sorted(self.params):
            lines.append(f"param.{key}: {self.params[key]}")
        for key in sorted(self.events):
            lines.append(f"event.{key}: {self.events[key]}")
        for m in range(self.horizon):
            down = ' '.join(str(i) for i in self.down[m])
            missing = ' '.join(str(i) for i in self.missing[m])
            lines.append(f"cycle {m}: f={self.failures[m]}; down={down}; missing={missing}")
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_text(cls, text: str) -> 'FaultScenario':
        header = {}
        params = {}
        events = {}
        cycles = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            if line.startswith('cycle '):
                cycles.append(line)
                continue
            key, _, value = line.partition(':')
            value = value.strip()
            if key.startswith('param.'):
                params[key[6:]] = value
            elif key.startswith('event.'):
                events[key[6:]] = int(value)
            else:
                header[key.strip()] = value

        try:
            scenario = cls(model=header['model'], n=int(header['n']),
                           horizon=int(header['horizon']), params=params,
                           realized_rate=float(header.get('realized_rate', 0.0)),
                           target_rate=float(header['target_rate']) if 'target_rate' in header else None,
                           events=events)
            for line in cycles:
                _, body = line.split(':', 1)
                fields = dict(part.strip().split('=', 1) for part in body.split(';'))
                scenario.failures.append(int(fields['f']))
                scenario.down.append([int(v) for v in fields['down'].split()])
                scenario.missing.append([int(v) for v in fields['missing'].split()])
        except (KeyError, ValueError) as e:
            raise FaultModelError(f"malformed fault scenario: {e}") from e
        if len(scenario.failures) != scenario.horizon:
            raise FaultModelError(
                f"scenario lists {len(scenario.failures)} cycles, header says {scenario.horizon}")
        return scenario

    def save(self, path: str) -> None:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path: str) -> 'FaultScenario':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                text = f.read()
        except OSError as e:
            raise FaultModelError(f"cannot read fault scenario {path}: {e}") from e
        return cls.from_text(text)

    def _append(self, executed: np.ndarray, down: Sequence[int]) -> None:
        mask = np.ones(self.n + 1, dtype=bool)
        mask[executed] = False
        self.missing.append([int(i) for i in np.flatnonzero(mask)])
        self.failures.append(len(self.missing[-1]))
        self.down.append(sorted(int(i) for i in down))


@dataclass
class ScenarioIndexSource(IndexSource):
    """Replays the executed sets of a fault scenario."""

    scenario: FaultScenario
    name: str = field(default='scenario', init=False)

    def index_set(self, m: int) -> Tuple[np.ndarray, int]:
        return self.scenario.executed(m), self.scenario.failures[m]

    def describe(self) -> dict:
        return {'source': self.name, 'model': self.scenario.model,
                'realized_rate': self.scenario.realized_rate}


def master_slave_scenario(n: int, horizon: int, seed: int, kind: str = 'constant-rate',
                          rate: float = 0.0, delta_f: int = 0) -> FaultScenario:
    """
    Master-slave faults with a constant or uniformly varying failure count.

    Args:
        n: Number of subdomains
        horizon: Number of cycles
        seed: Master seed
        kind: 'constant-rate' (f_m = f*) or 'uniform-interval' (f_m around f*)
        rate: Target failure rate r_f
        delta_f: Half width of the failure interval
    """
    if kind not in ('constant-rate', 'uniform-interval'):
        raise FaultModelError(f"unknown master-slave kind '{kind}'")
    f_star = constant_rate_failures(n, rate)
    scenario = FaultScenario(model=kind, n=n, horizon=horizon, target_rate=rate,
                             params={'rate': rate, 'delta_f': delta_f, 'f_star': f_star})
    for m in range(horizon):
        rng = derive_rng(seed, 'master-slave', m)
        f_m = f_star if kind == 'constant-rate' else uniform_interval_failures(n, f_star, delta_f, rng)
        scenario._append(master_slave_cycle(n, f_m, rng), [])
    scenario.realized_rate = float(np.mean(scenario.failures)) / (n + 1) if horizon else 0.0
    return scenario


def weibull_master_slave_scenario(n: int, arrival: WeibullParams, repair: WeibullParams,
                                  horizon: int, seed: int) -> FaultScenario:
    """Master-slave model whose failure counts follow Weibull node schedules."""
    schedules, rate = generate_schedules(n + 1, arrival, repair, horizon, seed)
    downs = down_matrix(schedules)
    scenario = FaultScenario(model='weibull-master-slave', n=n, horizon=horizon,
                             realized_rate=rate, params=_weibull_params(arrival, repair))
    for m in range(horizon):
        f_m = int(downs[:, m].sum())
        rng = derive_rng(seed, 'master-slave', m)
        scenario._append(master_slave_cycle(n, f_m, rng), [])
    return scenario


def local_communication_scenario(n: int, groups: Dict[int, RedundancyGroup],
                                 arrival: WeibullParams, repair: WeibullParams,
                                 horizon: int, seed: int, policy: str = 'random') -> FaultScenario:
    """
    Local-communication model: Weibull node schedules, redundancy groups,
    reliable coarse server.
    """
    schedules, rate = generate_schedules(n, arrival, repair, horizon, seed)
    downs = down_matrix(schedules)
    params = _weibull_params(arrival, repair)
    params.update({'l': max((g.requested for g in groups.values()), default=0), 'policy': policy})
    scenario = FaultScenario(model='local-communication', n=n, horizon=horizon,
                             realized_rate=rate, params=params)
    counters: Dict[int, int] = {}
    for m in range(horizon):
        down_nodes = (np.flatnonzero(downs[:, m]) + 1).tolist() if n else []
        executed, events = local_comm_cycle(n, down_nodes, groups, derive_rng(seed, 'local-comm', m),
                                            policy, counters)
        for event in events:
            scenario.events[event.action] = scenario.events.get(event.action, 0) + 1
        scenario._append(executed, down_nodes)
    logger.info("Local-communication scenario: rate %.4f, events %s", rate, scenario.events)
    return scenario


def _weibull_params(arrival: WeibullParams, repair: WeibullParams) -> Dict[str, object]:
    return {'k1': arrival.shape, 'lambda1': arrival.scale,
            'k2': repair.shape, 'lambda2': repair.scale}
