# SPDX-License-Identifier: MIT-0

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple
import numpy as np
from . import common
from .qcore import EPR_VECTOR, STATE_VECTORS, DensityMatrix, RegisterSpace, RegisterId, tensor_product
from .sysmodel import MessageInstance, SystemState, view
from .execution import Apply, Event, Execution, IdAllocator, Send, emit, replay
from .algorithms import Proposal, build_base_algorithm
from .global_ops import build_library
from .qgo import AugmentedAlgorithm, protocol_idle, qgo_augment, qgo_invoke, qgo_receive
from .errors import ConfigError, UnknownScenario

logger = logging.getLogger(__name__)

POLICIES = ('uniform-random', 'channel-delay-biased', 'round-robin', 'replay-from-trace')
RECEIVE_WEIGHT = 0.25


@dataclass(frozen=True)
class SchedulerPolicy:
    kind: str = 'uniform-random'
    seed: int = 0
    fairness: int = common.DEFAULT_FAIRNESS

    def __post_init__(self):
        if self.kind not in POLICIES: raise UnknownScenario(f"\nUnknown scheduler policy '{self.kind}'")


@dataclass(frozen=True)
class Invocation:
    at_step: int
    gid: str
    leader: str


@dataclass(frozen=True)
class ScenarioConfig:
    processors: int
    algorithm: str = 'empty'
    params: Mapping[str, Any] = field(default_factory=dict)
    global_ops: Tuple[str, ...] = ()
    invocations: Tuple[Invocation, ...] = ()
    initial_state: Mapping[str, Any] = field(default_factory=dict)
    dim_cap: int = common.DEFAULT_DIM_CAP
    seed: int = 0
    scheduler: str = 'uniform-random'
    fairness: int = common.DEFAULT_FAIRNESS
    max_events: int = 60
    drain: bool = True

    @classmethod
    def from_dict(cls, config: Mapping) -> 'ScenarioConfig':
        common.validate_config_inputs(dict(config))
        return cls(processors=config['processors'], algorithm=config['algorithm'],
                   params=dict(config.get('params') or {}),
                   global_ops=tuple(config.get('global_ops') or ()),
                   invocations=tuple(Invocation(i.get('at_step', 0), i['gid'], i['leader']) for i in config.get('invocations') or ()),
                   initial_state=dict(config.get('initial_state') or {}),
                   dim_cap=config.get('dim_cap', common.DEFAULT_DIM_CAP),
                   seed=config.get('seed', 0), scheduler=config.get('scheduler', 'uniform-random'),
                   fairness=config.get('fairness') or common.default_fairness(config['processors']),
                   max_events=config.get('max_events', 60),
                   drain=config.get('drain', True))

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['global_ops'] = list(self.global_ops)
        data['invocations'] = [asdict(i) for i in self.invocations]
        return data

    @property
    def names(self) -> List[str]:
        return common.processor_names(self.processors)

    @property
    def policy(self) -> SchedulerPolicy:
        return SchedulerPolicy(self.scheduler, self.seed, self.fairness)


def initial_quantum(cfg: ScenarioConfig) -> Tuple[DensityMatrix, Dict[int, str]]:
    """Product qubits per processor followed by the EPR pairs, register ids
    allocated in that order
    """
    cap = common.dim_cap(cfg.dim_cap)
    rho = DensityMatrix.empty(cap)
    ownership = {}
    product = dict(cfg.initial_state.get('product') or {})
    if cfg.algorithm == 'teleport' and not product.get(cfg.names[0]):
        product[cfg.names[0]] = ['plus']
    next_id = 0
    for proc in cfg.names:
        for label in product.get(proc, []):
            rho = tensor_product(rho, DensityMatrix.from_vector(RegisterSpace((RegisterId(next_id, 2),), cap), STATE_VECTORS[str(label)]))
            ownership[next_id] = proc
            next_id += 1
    for a, b in cfg.initial_state.get('epr') or []:
        space = RegisterSpace((RegisterId(next_id, 2), RegisterId(next_id + 1, 2)), cap)
        rho = tensor_product(rho, DensityMatrix.from_vector(space, EPR_VECTOR))
        ownership[next_id], ownership[next_id + 1] = a, b
        next_id += 2
    return rho, ownership


def build_scenario(cfg: ScenarioConfig) -> Tuple[AugmentedAlgorithm, SystemState]:
    base = build_base_algorithm(cfg.algorithm, cfg.names, cfg.params)
    algorithm = qgo_augment(base, build_library(cfg.global_ops))
    rho, ownership = initial_quantum(cfg)
    classical = {p: base.initial_classical(p, tuple(sorted(r for r, o in ownership.items() if o == p))) for p in cfg.names}
    state = SystemState.initial(cfg.names, rho, ownership, classical, {p: algorithm.initial_ext(p) for p in cfg.names})
    return algorithm, state


@dataclass(frozen=True)
class Candidate:
    kind: str
    proc: str
    key: Tuple
    proposal: Optional[Proposal] = None
    chan: Optional[Tuple[str, str]] = None
    invocation: Optional[Invocation] = None


class Scheduler:
    """Picks the next enabled step: base proposals, deliverable receives and
    scheduled invocations. Receives close to the `fairness` bound are served
    longest deferred first, any other candidate deferred `fairness` times wins
    """

    def __init__(self, policy: SchedulerPolicy, processors: Sequence[str], rng: np.random.Generator):
        self.policy = policy
        self.processors = tuple(processors)
        self.rng = rng
        self.deferred: Dict[Tuple, int] = {}
        self.turn = 0

    def pick(self, candidates: List[Candidate]) -> Candidate:
        chosen = self._due_receive(candidates)
        if chosen is None:
            overdue = [c for c in candidates if self.deferred.get(c.key, 0) >= self.policy.fairness]
            if overdue: chosen = max(overdue, key=lambda c: self.deferred[c.key])
            elif self.policy.kind == 'round-robin': chosen = self._round_robin(candidates)
            elif self.policy.kind == 'channel-delay-biased':
                weights = np.array([RECEIVE_WEIGHT if c.kind == 'receive' else 1.0 for c in candidates])
                chosen = candidates[int(self.rng.choice(len(candidates), p=weights / weights.sum()))]
            else: chosen = candidates[int(self.rng.integers(len(candidates)))]
        live = {c.key for c in candidates}
        self.deferred = {k: self.deferred.get(k, 0) + 1 for k in live if k != chosen.key}
        return chosen

    def _due_receive(self, candidates: List[Candidate]) -> Optional[Candidate]:
        """The longest deferred receive, when serving the receives from the
        longest deferred down would otherwise exceed the bound
        """
        receives = sorted((c for c in candidates if c.kind == 'receive'), key=lambda c: -self.deferred.get(c.key, 0))
        for position, candidate in enumerate(receives):
            if self.deferred.get(candidate.key, 0) + position + 1 > self.policy.fairness: return receives[0]
        return None

    def _round_robin(self, candidates: List[Candidate]) -> Candidate:
        for offset in range(len(self.processors)):
            proc = self.processors[(self.turn + offset) % len(self.processors)]
            mine = [c for c in candidates if c.proc == proc]
            if mine:
                self.turn = (self.processors.index(proc) + 1) % len(self.processors)
                return mine[0]
        return candidates[0]


def _candidates(state: SystemState, algorithm: AugmentedAlgorithm, cfg: ScenarioConfig, picks: int,
                base_events: int, queue: List[Invocation]) -> List[Candidate]:
    candidates = []
    for chan in sorted(state.channels):
        if state.channels[chan]:
            head = state.channels[chan][0]
            candidates.append(Candidate('receive', chan[1], ('receive', chan, head.msg_id), chan=chan))
    if base_events < cfg.max_events:
        for proc in state.processors:
            for proposal in algorithm.base.enabled(view(state, proc)):
                candidates.append(Candidate('base', proc, ('base', proc, repr(proposal)), proposal=proposal))
    if queue and protocol_idle(state) and (picks >= queue[0].at_step or not candidates):
        invocation = queue[0]
        candidates.append(Candidate('invoke', invocation.leader, ('invoke', len(queue)), invocation=invocation))
    return candidates


def _base_event(state: SystemState, candidate: Candidate, ids: IdAllocator) -> Event:
    proposal = candidate.proposal
    if proposal.kind == 'apply':
        return Apply(ids.event_id(), candidate.proc, proposal.op, dict(proposal.args), None, None)
    message = MessageInstance(ids.message_id(), proposal.classical, tuple(proposal.registers))
    return Send(ids.event_id(), candidate.proc, proposal.dest, message)


def run_simulation(cfg: ScenarioConfig, replay_events: Sequence[Event] = None) -> Execution:
    """Generate one execution of the augmented algorithm, deterministic in
    the seed
    """
    algorithm, initial = build_scenario(cfg)
    state = initial
    if cfg.scheduler == 'replay-from-trace':
        if replay_events is None: raise ConfigError("\nInvalid input for 'scheduler', replay-from-trace needs a trace")
        execution = Execution(initial, tuple(replay_events), algorithm)
        replay(execution)
        return execution
    rng = np.random.default_rng(cfg.seed)
    scheduler = Scheduler(cfg.policy, cfg.names, rng)
    ids = IdAllocator.after(state)
    queue = list(cfg.invocations)
    events: List[Event] = []
    picks = 0
    base_events = 0
    while True:
        candidates = _candidates(state, algorithm, cfg, picks, base_events, queue)
        if not candidates: break
        if not cfg.drain and base_events >= cfg.max_events and not queue and protocol_idle(state): break
        chosen = scheduler.pick(candidates)
        picks += 1
        if chosen.kind == 'receive':
            block, state = qgo_receive(state, chosen.proc, chosen.chan, algorithm, ids, rng)
        elif chosen.kind == 'invoke':
            queue.pop(0)
            block, state = qgo_invoke(state, chosen.proc, chosen.invocation.gid, algorithm, ids, rng)
        else:
            event, state = emit(state, _base_event(state, chosen, ids), algorithm, rng, ids)
            block = [event]
            base_events += 1
        events.extend(block)
    logger.debug('generated %s events in %s picks', len(events), picks)
    return Execution(initial, tuple(events), algorithm)
