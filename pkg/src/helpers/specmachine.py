# SPDX-License-Identifier: MIT-0

from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional
from . import sysmodel
from .sysmodel import LocalOperation, LocalView, SystemState, chan_key, view
from .execution import Algorithm, Apply, AtomicExecute, Event, Execution, Invoke, MessageApply, Respond, ValidationResult, step
from .qgo import DecomposableGlobalOp, ResponseRecord
from .errors import QgoError, SpecViolation, UnknownGlobalOp


@dataclass(frozen=True)
class SpecExt:
    gid: str
    record: Optional[Mapping[str, Any]] = None


def atomic_records(state: SystemState, event: AtomicExecute) -> Dict[str, Dict]:
    """R_pi for every processor: its own outcome and the outcomes of the
    messages in flight to it, channel by channel in FIFO order
    """
    records = {}
    for proc in state.processors:
        channels = {chan_key(c): tuple(event.message_outcomes[m.msg_id] for m in state.channels[c])
                    for c in state.incoming(proc)}
        records[proc] = ResponseRecord(proc, event.gid, event.processor_outcomes[proc], channels).to_dict()
    return records


def apply_atomic(state: SystemState, event: AtomicExecute, op: DecomposableGlobalOp) -> SystemState:
    """Every processor component and every in-flight message component of
    the operation, in one step with the outcomes fixed by the event
    """
    in_flight = {m.msg_id for _, m in state.in_flight()}
    if set(event.processor_outcomes) != set(state.processors):
        raise SpecViolation(f"\nAtomic execution covers processors {sorted(event.processor_outcomes)}")
    if set(event.message_outcomes) != in_flight:
        raise SpecViolation(f"\nAtomic execution covers messages {sorted(event.message_outcomes)}, in flight are {sorted(in_flight)}")
    for proc in state.processors:
        component = op.for_processor(proc)
        local = view(state, proc)
        bound = LocalOperation(op.gid, component.build(local.classical, local.owned), tuple(r.id for r in local.owned),
                               lambda sigma, r, fresh, component=component: component.classical(sigma, r))
        state = sysmodel.apply_local(state, proc, bound, event.processor_outcomes[proc])
    for _, msg in state.in_flight():
        component = op.for_message(msg.msg_class)
        registers = tuple(state.quantum.space.get(r) for r in msg.quantum_regs)
        bound = LocalOperation(op.gid, component.build(msg.classical, registers), msg.quantum_regs,
                               lambda sigma, r, fresh, component=component: component.classical(sigma, r))
        state = sysmodel.apply_message(state, msg.msg_id, bound, event.message_outcomes[msg.msg_id], True)
    return state


class SpecAlgorithm(Algorithm):
    """Atomic specification: base steps, invocation, one atomic execution
    of the global operation and the responses
    """

    def __init__(self, base: Algorithm, library: Mapping[str, DecomposableGlobalOp]):
        self.base = base
        self.library = dict(library)

    def bind(self, local: LocalView, event: Apply) -> LocalOperation:
        return self.base.bind(local, event)

    def apply_special(self, state: SystemState, event: Event) -> SystemState:
        if isinstance(event, AtomicExecute):
            if event.gid not in self.library: raise UnknownGlobalOp(f"\nUnknown global operation '{event.gid}'")
            return apply_atomic(state, event, self.library[event.gid])
        if isinstance(event, (Invoke, Respond)): return state
        return self.base.apply_special(state, event)

    def ext_effect(self, pre: SystemState, event: Event, post: SystemState) -> Mapping[str, Any]:
        ext = dict(post.ext)
        if isinstance(event, Invoke): ext[event.proc] = SpecExt(event.gid)
        elif isinstance(event, AtomicExecute):
            for proc, record in atomic_records(pre, event).items():
                ext[proc] = SpecExt(event.gid, record)
        elif isinstance(event, Respond): ext[event.proc] = None
        return ext

    def local_predicate(self, pre: LocalView, event: Event, post: LocalView) -> bool:
        if event.label != pre.proc: return False
        if isinstance(event, Invoke): return pre.ext is None and event.gid in self.library
        if isinstance(event, AtomicExecute): return pre.ext == SpecExt(event.gid)
        if isinstance(event, Respond):
            return isinstance(pre.ext, SpecExt) and pre.ext.record is not None and pre.ext.record == event.response
        if isinstance(event, MessageApply): return False
        return self.base.local_predicate(pre, event, post)


def spec_step(state: SystemState, event: Event, algorithm: SpecAlgorithm) -> SystemState:
    if isinstance(event, AtomicExecute) and not any(isinstance(state.ext[p], SpecExt) and state.ext[p].record is None
                                                    for p in state.processors):
        raise SpecViolation(f"\nAtomic execution of '{event.gid}' without a pending invocation")
    try:
        post = step(state, event, algorithm)
    except SpecViolation: raise
    except QgoError as e: raise SpecViolation(f"\n{event.kind} event {event.eid} cannot be applied: {str(e).strip()}")
    if not algorithm.local_predicate(view(state, event.proc), event, view(post, event.proc)):
        raise SpecViolation(f"\n{event.kind} event {event.eid} at {event.proc} does not satisfy its guard")
    return post


def validate_spec_execution(execution: Execution) -> ValidationResult:
    state = execution.initial
    for index, event in enumerate(execution.events):
        if isinstance(event, Invoke) and any(state.ext[p] is not None for p in state.processors):
            return ValidationResult(False, index, f'invocation {event.eid} while a global operation is underway')
        try:
            state = spec_step(state, event, execution.algorithm)
        except SpecViolation as e:
            return ValidationResult(False, index, str(e).strip())
    return ValidationResult(True)
