# SPDX-License-Identifier: MIT-0

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields, replace
from typing import Any, ClassVar, Dict, List, Mapping, Optional, Sequence, Tuple
import numpy as np
from . import qcore
from . import sysmodel
from .qcore import RegisterId, RegisterMap
from .sysmodel import LocalOperation, LocalView, MessageInstance, SystemState, view
from .errors import ConcatMismatch, EmptyChannel, InvalidOperation, QgoError, ReplayError, ZeroProbabilityHistory

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Event:
    eid: int
    proc: str
    kind: ClassVar[str] = 'event'

    @property
    def label(self) -> str:
        return self.proc

    def to_dict(self) -> Dict:
        data = {'kind': self.kind}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, MessageInstance): value = value.to_dict()
            elif isinstance(value, tuple): value = list(value)
            data[f.name] = value
        return data


@dataclass(frozen=True)
class Invoke(Event):
    gid: str = ''
    kind: ClassVar[str] = 'invoke'


@dataclass(frozen=True)
class Respond(Event):
    response: Any = None
    kind: ClassVar[str] = 'respond'


@dataclass(frozen=True)
class Apply(Event):
    op: str = ''
    args: Mapping[str, Any] = field(default_factory=dict)
    outcome: Optional[str] = None
    fresh: Optional[Tuple[int, ...]] = ()
    kind: ClassVar[str] = 'apply'

    def __post_init__(self):
        if self.fresh is not None: object.__setattr__(self, 'fresh', tuple(self.fresh))


@dataclass(frozen=True)
class MessageApply(Event):
    """Operation on a message component, labeled by the message while it
    is in flight
    """
    op: str = ''
    args: Mapping[str, Any] = field(default_factory=dict)
    msg_id: str = ''
    outcome: Optional[str] = None
    in_flight: bool = False
    kind: ClassVar[str] = 'message-apply'

    @property
    def label(self) -> str:
        return sysmodel.message_owner(self.msg_id) if self.in_flight else self.proc


@dataclass(frozen=True)
class Send(Event):
    dest: str = ''
    message: MessageInstance = None
    kind: ClassVar[str] = 'send'


@dataclass(frozen=True)
class Receive(Event):
    sender: str = ''
    msg_id: str = ''
    kind: ClassVar[str] = 'receive'

    @property
    def chan(self) -> Tuple[str, str]:
        return (self.sender, self.proc)


@dataclass(frozen=True)
class AtomicExecute(Event):
    gid: str = ''
    processor_outcomes: Mapping[str, str] = field(default_factory=dict)
    message_outcomes: Mapping[str, str] = field(default_factory=dict)
    kind: ClassVar[str] = 'atomic'


EVENT_KINDS = {cls.kind: cls for cls in (Invoke, Respond, Apply, MessageApply, Send, Receive, AtomicExecute)}


def event_from_dict(data: Mapping) -> Event:
    data = dict(data)
    cls = EVENT_KINDS[data.pop('kind')]
    if cls is Send: data['message'] = MessageInstance.from_dict(data['message'])
    if cls is Apply and data.get('fresh') is not None: data['fresh'] = tuple(data['fresh'])
    return cls(**data)


class Algorithm(ABC):
    """A transition system over SystemState: how Apply events bind to
    operations, how events change the extension registers and which steps
    each processor's local predicate admits
    """

    def initial_ext(self, proc: str) -> Any:
        return None

    @abstractmethod
    def bind(self, local: LocalView, event: Apply) -> LocalOperation:
        pass

    def bind_message(self, msg: MessageInstance, registers: Tuple[RegisterId, ...], event: MessageApply) -> LocalOperation:
        raise InvalidOperation(f"\n{type(self).__name__} defines no operation on messages")

    def apply_special(self, state: SystemState, event: Event) -> SystemState:
        raise InvalidOperation(f"\n{type(self).__name__} does not handle {event.kind} events")

    def ext_effect(self, pre: SystemState, event: Event, post: SystemState) -> Mapping[str, Any]:
        return post.ext

    @abstractmethod
    def local_predicate(self, pre: LocalView, event: Event, post: LocalView) -> bool:
        pass


class TransitionPredicate:
    """Disjunction of the per-processor local predicates of an algorithm
    """

    def __init__(self, algorithm: Algorithm):
        self.algorithm = algorithm

    def allows(self, pre: SystemState, event: Event, post: SystemState) -> bool:
        return any(self.algorithm.local_predicate(view(pre, p), event, view(post, p)) for p in pre.processors)


class IdAllocator:
    """Monotonic counters for event, message and register ids
    """

    def __init__(self, next_event: int = 0, next_message: int = 0, next_register: int = 0):
        self.next_event = next_event
        self.next_message = next_message
        self.next_register = next_register

    @classmethod
    def after(cls, state: SystemState, events: Sequence[Event] = ()) -> 'IdAllocator':
        registers = list(state.quantum.space.ids)
        messages = [m.msg_id for _, m in state.in_flight()]
        for e in events:
            if isinstance(e, Apply) and e.fresh: registers.extend(e.fresh)
            if isinstance(e, Send): messages.append(e.message.msg_id)
        numbers = [int(m[1:]) for m in messages if m[:1] == 'm' and m[1:].isdigit()]
        return cls(next_event=max((e.eid for e in events), default=-1) + 1,
                   next_message=max(numbers, default=-1) + 1,
                   next_register=max(registers, default=-1) + 1)

    def event_id(self) -> int:
        self.next_event += 1
        return self.next_event - 1

    def message_id(self) -> str:
        self.next_message += 1
        return f'm{self.next_message - 1}'

    def register_ids(self, count: int) -> Tuple[int, ...]:
        start = self.next_register
        self.next_register += count
        return tuple(range(start, start + count))


def _bind_message(state: SystemState, event: MessageApply, algorithm: Algorithm) -> LocalOperation:
    msg = sysmodel.find_message(state, event.msg_id, event.in_flight, event.proc)
    registers = tuple(state.quantum.space.get(r) for r in msg.quantum_regs)
    return algorithm.bind_message(msg, registers, event)


def step(state: SystemState, event: Event, algorithm: Algorithm) -> SystemState:
    """Apply one event to a state, the extension registers follow the
    algorithm's ext_effect
    """
    if isinstance(event, Apply):
        op = algorithm.bind(view(state, event.proc), event)
        post = sysmodel.apply_local(state, event.proc, op, event.outcome, event.fresh or ())
    elif isinstance(event, MessageApply):
        op = _bind_message(state, event, algorithm)
        post = sysmodel.apply_message(state, event.msg_id, op, event.outcome, event.in_flight, event.proc)
    elif isinstance(event, Send):
        post = sysmodel.send(state, event.proc, event.message, event.dest)
    elif isinstance(event, Receive):
        head = state.channels.get(event.chan, ())
        if not head or head[0].msg_id != event.msg_id:
            raise EmptyChannel(f"\nMessage {event.msg_id} is not at the head of channel {sysmodel.chan_key(event.chan)}")
        post, _ = sysmodel.receive(state, event.proc, event.chan)
    else:
        post = algorithm.apply_special(state, event)
    if isinstance(event, (Apply, MessageApply, AtomicExecute)) and post.quantum.trace() <= qcore.ZERO_TRACE:
        raise ZeroProbabilityHistory(f"\n{event.kind} event {event.eid} has probability zero")
    post = post.replace(ext=dict(algorithm.ext_effect(state, event, post)))
    post.check_ownership()
    return post


def emit(state: SystemState, event: Event, algorithm: Algorithm, rng: np.random.Generator,
         ids: IdAllocator) -> Tuple[Event, SystemState]:
    """Complete an event at generation time (sample a missing outcome,
    allocate fresh registers) and apply it
    """
    if isinstance(event, Apply) and (event.outcome is None or event.fresh is None):
        op = algorithm.bind(view(state, event.proc), event)
        fresh = event.fresh
        if fresh is None:
            changes = op.quantum.in_dims != op.quantum.out_dims
            fresh = ids.register_ids(len(op.quantum.out_dims)) if changes else ()
        outcome = event.outcome
        if outcome is None:
            outcome = qcore.choose_outcome(state.quantum, op.quantum, RegisterMap(op.registers), rng)
        event = replace(event, outcome=outcome, fresh=fresh)
    elif isinstance(event, MessageApply) and event.outcome is None:
        op = _bind_message(state, event, algorithm)
        event = replace(event, outcome=qcore.choose_outcome(state.quantum, op.quantum, RegisterMap(op.registers), rng))
    post = step(state, event, algorithm)
    logger.debug('%s %s at %s', event.kind, event.eid, event.label)
    return event, post


@dataclass(frozen=True, eq=False)
class Execution:
    initial: SystemState
    events: Tuple[Event, ...]
    algorithm: Algorithm

    def __post_init__(self):
        object.__setattr__(self, 'events', tuple(self.events))

    def __len__(self) -> int:
        return len(self.events)

    def with_events(self, events: Sequence[Event]) -> 'Execution':
        return type(self)(self.initial, tuple(events), self.algorithm)

    @property
    def eids(self) -> Tuple[int, ...]:
        return tuple(e.eid for e in self.events)


class Fragment(Execution):
    """Contiguous piece of an execution, starting from the state reached
    before its first event
    """


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    index: Optional[int] = None
    reason: Optional[str] = None


def replay(execution: Execution) -> List[SystemState]:
    states = [execution.initial]
    for index, event in enumerate(execution.events):
        try:
            states.append(step(states[-1], event, execution.algorithm))
        except QgoError as e:
            raise ReplayError(index, str(e).strip())
    return states


def final_state(execution: Execution) -> SystemState:
    return replay(execution)[-1]


def validate(predicate: TransitionPredicate, execution: Execution) -> ValidationResult:
    state = execution.initial
    for index, event in enumerate(execution.events):
        try:
            post = step(state, event, execution.algorithm)
        except QgoError as e:
            return ValidationResult(False, index, str(e).strip())
        if not predicate.allows(state, event, post):
            return ValidationResult(False, index, f'{event.kind} event {event.eid} at {event.label} is not allowed')
        state = post
    return ValidationResult(True)


def slice_execution(execution: Execution, i: int, j: int, states: Sequence[SystemState] = None) -> Fragment:
    """Events i..j inclusive, j = i - 1 gives an empty fragment
    """
    if not 0 <= i <= j + 1 <= len(execution.events):
        raise IndexError(f"\nSlice {i}..{j} outside an execution of {len(execution.events)} events")
    states = states if states is not None else replay(execution)
    return Fragment(states[i], execution.events[i:j + 1], execution.algorithm)


def concat(a: Execution, b: Execution) -> Execution:
    if not sysmodel.states_equal(final_state(a), b.initial):
        raise ConcatMismatch("\nFinal state of the first fragment differs from the initial state of the second")
    return type(a)(a.initial, a.events + b.events, a.algorithm)


def splice(execution: Execution, i: int, j: int, events: Sequence[Event]) -> Execution:
    """Replace positions i..j inclusive with another event sequence
    """
    return execution.with_events(execution.events[:i] + tuple(events) + execution.events[j + 1:])
