# SPDX-License-Identifier: MIT-0

import logging
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, FrozenSet, List, Mapping, Optional, Tuple
import numpy as np
from .qcore import BOTTOM, QuantumOperation, RegisterId
from .sysmodel import ChannelId, LocalOperation, LocalView, MessageInstance, SystemState, chan_key, find_message, parse_chan
from .execution import Algorithm, Apply, Event, IdAllocator, Invoke, MessageApply, Receive, Respond, Send, emit
from .errors import AlreadyActive, ConcurrentInvocation, InvalidOperation, UnknownGlobalOp

logger = logging.getLogger(__name__)

OP_PROCESSOR = 'qgo.op'
OP_MESSAGE = 'qgo.msg'
OP_RECORD = 'qgo.record'
DEFAULT_COMPONENT = '*'


@dataclass(frozen=True)
class ComponentOperation:
    """One factor of a decomposable global operation: the quantum part is
    built from the component's classical state and registers
    """
    build: Callable[[Any, Tuple[RegisterId, ...]], QuantumOperation]
    classical: Callable[[Any, str], Any] = lambda sigma, r: sigma


@dataclass(frozen=True)
class DecomposableGlobalOp:
    gid: str
    per_processor: Mapping[str, ComponentOperation]
    per_message: Mapping[str, ComponentOperation]

    def for_processor(self, proc: str) -> ComponentOperation:
        return self.per_processor.get(proc) or self.per_processor[DEFAULT_COMPONENT]

    def for_message(self, msg_class: Optional[str]) -> ComponentOperation:
        return self.per_message.get(msg_class) or self.per_message[DEFAULT_COMPONENT]


@dataclass(frozen=True)
class ResponseRecord:
    processor: str
    gid: str
    self_outcome: str
    channels: Mapping[str, Tuple[str, ...]]

    def to_dict(self) -> Dict:
        return {'processor': self.processor, 'gid': self.gid, 'self_outcome': self.self_outcome,
                'channels': {c: list(outcomes) for c, outcomes in self.channels.items()}}


@dataclass(frozen=True)
class QgoExtState:
    """Per-processor protocol register: the operation under way, its
    recorded outcomes, the channels still waiting for a marker and the
    remaining obligation of the procedure block being executed
    """
    op: Optional[str] = None
    self_outcome: Optional[str] = None
    records: Tuple[Tuple[str, Tuple[str, ...]], ...] = ()
    waitset: FrozenSet[str] = frozenset()
    pending: Optional[Tuple] = None

    @property
    def idle(self) -> bool:
        return self.op is None and self.pending is None

    def with_outcome(self, chan: str, outcome: str) -> 'QgoExtState':
        records = tuple((c, outcomes + (outcome,)) if c == chan else (c, outcomes) for c, outcomes in self.records)
        return replace(self, records=records)

    def response(self, proc: str) -> Dict:
        return ResponseRecord(proc, self.op, self.self_outcome, dict(self.records)).to_dict()


IDLE = QgoExtState()


def marker_message(msg_id: str, gid: str) -> MessageInstance:
    return MessageInstance(msg_id, {'class': 'marker', 'gid': gid}, (), ('marker', gid))


def _is_marker_send(event: Event) -> bool:
    return isinstance(event, Send) and event.message.is_marker


class AugmentedAlgorithm(Algorithm):
    """Base algorithm plus the marker protocol for global operations
    """

    def __init__(self, base: Algorithm, library: Mapping[str, DecomposableGlobalOp]):
        self.base = base
        self.library = dict(library)

    def initial_ext(self, proc: str) -> QgoExtState:
        return IDLE

    def global_op(self, gid: str) -> DecomposableGlobalOp:
        if gid not in self.library: raise UnknownGlobalOp(f"\nUnknown global operation '{gid}'")
        return self.library[gid]

    def bind(self, local: LocalView, event: Apply) -> LocalOperation:
        if event.op == OP_PROCESSOR:
            component = self.global_op(event.args['gid']).for_processor(local.proc)
            quantum = component.build(local.classical, local.owned)
            return LocalOperation(OP_PROCESSOR, quantum, tuple(r.id for r in local.owned),
                                  lambda sigma, r, fresh: component.classical(sigma, r))
        if event.op == OP_RECORD: return LocalOperation(OP_RECORD, QuantumOperation.identity(()))
        return self.base.bind(local, event)

    def bind_message(self, msg: MessageInstance, registers: Tuple[RegisterId, ...], event: MessageApply) -> LocalOperation:
        if event.op != OP_MESSAGE: return self.base.bind_message(msg, registers, event)
        component = self.global_op(event.args['gid']).for_message(msg.msg_class)
        return LocalOperation(OP_MESSAGE, component.build(msg.classical, registers), tuple(r.id for r in registers),
                              lambda sigma, r, fresh: component.classical(sigma, r))

    def apply_special(self, state: SystemState, event: Event) -> SystemState:
        if isinstance(event, (Invoke, Respond)): return state
        return self.base.apply_special(state, event)

    def ext_effect(self, pre: SystemState, event: Event, post: SystemState) -> Mapping[str, Any]:
        ext = dict(post.ext)
        proc = event.proc
        current = pre.ext[proc]
        if isinstance(event, Invoke):
            ext[proc] = replace(current, pending=('process', event.gid, None))
        elif isinstance(event, Apply) and event.op == OP_PROCESSOR:
            trigger = event.args.get('trigger')
            incoming = [chan_key(c) for c in pre.incoming(proc)]
            ext[proc] = QgoExtState(op=event.args['gid'], self_outcome=event.outcome,
                                    records=tuple((c, ()) for c in incoming),
                                    waitset=frozenset(c for c in incoming if c != trigger),
                                    pending=('broadcast', event.args['gid'], tuple(pre.processors)))
        elif _is_marker_send(event):
            remaining = tuple(d for d in (current.pending or (None, None, ()))[2] if d != event.dest)
            if remaining: pending = ('broadcast', current.op, remaining)
            else: pending = None if current.waitset else ('respond',)
            ext[proc] = replace(current, pending=pending)
        elif isinstance(event, Receive):
            msg = pre.channels[event.chan][0]
            key = chan_key(event.chan)
            if msg.is_marker and current.op is None:
                ext[proc] = replace(current, pending=('process', msg.marker_gid, key))
            elif msg.is_marker:
                waitset = current.waitset - {key}
                ext[proc] = replace(current, waitset=waitset, pending=None if waitset else ('respond',))
            elif current.op is not None and key in current.waitset:
                # operated on while in flight, only the append is left
                done = msg.tau is not None and msg.tau[0] == 'outcome'
                ext[proc] = replace(current, pending=('append' if done else 'record', key, event.msg_id))
        elif isinstance(event, MessageApply) and event.op == OP_MESSAGE and not event.in_flight:
            entry = next(e for e in reversed(post.classical[proc]['inbox']) if e['msg']['msg_id'] == event.msg_id)
            ext[proc] = replace(current, pending=('append', entry['chan'], event.msg_id))
        elif isinstance(event, Apply) and event.op == OP_RECORD:
            msg = find_message(post, event.args['msg_id'], False, proc)
            outcome = msg.tau[1] if msg.tau is not None and msg.tau[0] == 'outcome' else BOTTOM
            ext[proc] = replace(current.with_outcome(event.args['chan'], outcome), pending=None)
        elif isinstance(event, Respond):
            ext[proc] = IDLE
        return ext

    def local_predicate(self, pre: LocalView, event: Event, post: LocalView) -> bool:
        if event.label != pre.proc: return False
        ext = pre.ext
        pending = ext.pending
        if pending is None:
            if isinstance(event, Invoke): return ext.op is None and event.gid in self.library
            if isinstance(event, Receive): return True
            if isinstance(event, (Respond, MessageApply)) or _is_marker_send(event): return False
            if isinstance(event, Apply) and event.op.startswith('qgo.'): return False
            return self.base.local_predicate(pre, event, post)
        kind = pending[0]
        if kind == 'process':
            return (isinstance(event, Apply) and event.op == OP_PROCESSOR and event.args.get('gid') == pending[1]
                    and event.args.get('trigger') == pending[2])
        if kind == 'broadcast':
            return _is_marker_send(event) and event.message.marker_gid == pending[1] and event.dest in pending[2]
        if kind == 'record':
            return (isinstance(event, MessageApply) and event.op == OP_MESSAGE and not event.in_flight
                    and event.msg_id == pending[2] and event.args.get('gid') == ext.op)
        if kind == 'append':
            return (isinstance(event, Apply) and event.op == OP_RECORD and event.args.get('msg_id') == pending[2]
                    and event.args.get('chan') == pending[1])
        if kind == 'respond':
            return isinstance(event, Respond) and event.response == ext.response(pre.proc)
        return False


def qgo_augment(base: Algorithm, library: Mapping[str, DecomposableGlobalOp]) -> AugmentedAlgorithm:
    return AugmentedAlgorithm(base, library)


def protocol_idle(state: SystemState) -> bool:
    return all(state.ext[p].idle for p in state.processors)


def _next_event(state: SystemState, proc: str, algorithm: AugmentedAlgorithm, ids: IdAllocator) -> Event:
    ext = state.ext[proc]
    kind = ext.pending[0]
    if kind == 'process':
        return Apply(ids.event_id(), proc, OP_PROCESSOR, {'gid': ext.pending[1], 'trigger': ext.pending[2]}, None, ())
    if kind == 'broadcast':
        return Send(ids.event_id(), proc, ext.pending[2][0], marker_message(ids.message_id(), ext.pending[1]))
    if kind == 'record':
        return MessageApply(ids.event_id(), proc, OP_MESSAGE, {'gid': ext.op}, ext.pending[2], None, False)
    if kind == 'append':
        return Apply(ids.event_id(), proc, OP_RECORD, {'chan': ext.pending[1], 'msg_id': ext.pending[2]}, BOTTOM, ())
    if kind == 'respond':
        return Respond(ids.event_id(), proc, ext.response(proc))
    raise InvalidOperation(f"\nUnknown pending obligation {ext.pending!r} at {proc}")


def drive(state: SystemState, proc: str, algorithm: AugmentedAlgorithm, ids: IdAllocator,
          rng: np.random.Generator) -> Tuple[List[Event], SystemState]:
    """Run the rest of a procedure block at one processor
    """
    events = []
    while state.ext[proc].pending is not None:
        event, state = emit(state, _next_event(state, proc, algorithm, ids), algorithm, rng, ids)
        events.append(event)
    return events, state


def qgo_invoke(state: SystemState, proc: str, gid: str, algorithm: AugmentedAlgorithm, ids: IdAllocator,
               rng: np.random.Generator) -> Tuple[List[Event], SystemState]:
    algorithm.global_op(gid)
    if not protocol_idle(state):
        busy = [p for p in state.processors if not state.ext[p].idle]
        raise ConcurrentInvocation(f"\nGlobal operation already underway at {busy}")
    event, state = emit(state, Invoke(ids.event_id(), proc, gid), algorithm, rng, ids)
    logger.debug('%s invoked %s', proc, gid)
    events, state = qgo_process_new_global_op(state, proc, gid, None, algorithm, ids, rng)
    return [event] + events, state


def qgo_process_new_global_op(state: SystemState, proc: str, gid: str, chan: Optional[ChannelId],
                              algorithm: AugmentedAlgorithm, ids: IdAllocator,
                              rng: np.random.Generator) -> Tuple[List[Event], SystemState]:
    algorithm.global_op(gid)
    if state.ext[proc].op is not None:
        raise AlreadyActive(f"\n{proc} is already executing '{state.ext[proc].op}'")
    trigger = chan_key(chan) if chan is not None else None
    event, state = emit(state, Apply(ids.event_id(), proc, OP_PROCESSOR, {'gid': gid, 'trigger': trigger}, None, ()),
                        algorithm, rng, ids)
    events, state = drive(state, proc, algorithm, ids, rng)
    return [event] + events, state


def qgo_receive(state: SystemState, proc: str, chan: ChannelId, algorithm: AugmentedAlgorithm, ids: IdAllocator,
                rng: np.random.Generator) -> Tuple[List[Event], SystemState]:
    contents = state.channels.get(tuple(chan), ())
    if contents and contents[0].is_marker: algorithm.global_op(contents[0].marker_gid)
    msg_id = contents[0].msg_id if contents else ''
    event, state = emit(state, Receive(ids.event_id(), proc, chan[0], msg_id), algorithm, rng, ids)
    pending = state.ext[proc].pending
    if pending is not None and pending[0] == 'process':
        events, state = qgo_process_new_global_op(state, proc, pending[1], parse_chan(pending[2]), algorithm, ids, rng)
    else:
        events, state = drive(state, proc, algorithm, ids, rng)
    return [event] + events, state
