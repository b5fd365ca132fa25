# SPDX-License-Identifier: MIT-0

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple
from . import qcore
from .sysmodel import states_equal
from .execution import (Apply, AtomicExecute, Event, Execution, Fragment, Invoke, MessageApply, Receive, Respond,
                        Send, TransitionPredicate, final_state, replay, slice_execution, splice, step, validate)
from .causality import equicausal, substitute, swap_checked_locally
from .qgo import OP_MESSAGE, OP_PROCESSOR, protocol_idle
from .specmachine import SpecAlgorithm, validate_spec_execution
from .errors import (CausalDependency, ClaimViolation, HypothesisViolation, LemmaViolation, ProtocolIncomplete,
                     QgoError, ReplayError, SubstitutionMismatch)

logger = logging.getLogger(__name__)

PRE, OP, POST = 0, 1, 2


@dataclass(frozen=True)
class MainFragment:
    """Positions of one invocation's events, from the Invoke to the last
    Respond, inclusive
    """
    start: int
    end: int
    gid: str
    leader: str


@dataclass(frozen=True)
class Tripartition:
    main: MainFragment
    pre: FrozenSet[int]
    op: FrozenSet[int]
    post: FrozenSet[int]
    blocks: Mapping[str, Tuple[int, ...]]
    message_ops: FrozenSet[int] = frozenset()

    def rank(self, eid: int) -> int:
        if eid in self.pre: return PRE
        if eid in self.post: return POST
        return OP


@dataclass(frozen=True)
class SwapLog:
    stage: str
    index: int
    eids: Tuple[int, int]
    justification: str


@dataclass
class Certificate:
    x: Execution
    y: Optional[Execution] = None
    z: Optional[Execution] = None
    y_hat: Optional[Execution] = None
    swaps: List[SwapLog] = field(default_factory=list)
    verdicts: Dict[str, bool] = field(default_factory=dict)
    failure: Optional[Tuple[str, str]] = None

    @property
    def accepted(self) -> bool:
        return self.failure is None and bool(self.verdicts) and all(self.verdicts.values())

    def recheck(self) -> bool:
        """Recompute every verdict from scratch
        """
        if not self.accepted: return False
        try:
            decompose(self.x)
            verdicts = _verdicts(self.x, self.y, self.z, self.y_hat)
        except QgoError as e:
            logger.debug('recheck failed: %s', str(e).strip())
            return False
        return all(verdicts.values())

    def to_dict(self) -> Dict:
        return {'accepted': self.accepted, 'verdicts': dict(self.verdicts),
                'failure': {'step': self.failure[0], 'reason': self.failure[1]} if self.failure else None,
                'swaps': [{'stage': s.stage, 'index': s.index, 'eids': list(s.eids), 'justification': s.justification}
                          for s in self.swaps]}


def marker_ids(execution: Execution) -> Set[str]:
    return {e.message.msg_id for e in execution.events if isinstance(e, Send) and e.message.is_marker}


def in_filter(event: Event, markers: Set[str]) -> bool:
    """Invocations, responses and base-algorithm events
    """
    if isinstance(event, (Invoke, Respond)): return True
    if isinstance(event, Apply): return not event.op.startswith('qgo.')
    if isinstance(event, Send): return not event.message.is_marker
    if isinstance(event, Receive): return event.msg_id not in markers
    return False


def history(execution: Execution) -> Tuple[Event, ...]:
    markers = marker_ids(execution)
    return tuple(e for e in execution.events if in_filter(e, markers))


def corresponds(a: Event, b: Event) -> bool:
    """Same action at the same processor, event identity aside
    """
    return type(a) is type(b) and replace(a, eid=0) == replace(b, eid=0)


def histories_correspond(a: Sequence[Event], b: Sequence[Event]) -> bool:
    return len(a) == len(b) and all(corresponds(x, y) for x, y in zip(a, b))


def decompose(execution: Execution) -> List[MainFragment]:
    if not protocol_idle(execution.initial):
        raise HypothesisViolation("\nA global operation is pending in the initial state")
    processors = set(execution.initial.processors)
    mains = []
    active = None
    responded = set()
    for index, event in enumerate(execution.events):
        if isinstance(event, Invoke):
            if active is not None:
                raise HypothesisViolation(f"\nInvocation {event.eid} overlaps the invocation at position {active.start}")
            active = MainFragment(index, index, event.gid, event.proc)
            responded = set()
        elif isinstance(event, Respond):
            if active is None: raise HypothesisViolation(f"\nResponse {event.eid} without an invocation")
            responded.add(event.proc)
            if responded == processors:
                mains.append(replace(active, end=index))
                active = None
    if active is not None:
        raise HypothesisViolation(f"\nGlobal operation '{active.gid}' invoked at position {active.start} is still pending")
    return mains


def _is_marker_receive(event: Event, markers: Set[str]) -> bool:
    return isinstance(event, Receive) and event.msg_id in markers


def tripartition(execution: Execution, main: MainFragment) -> Tripartition:
    events = execution.events[main.start:main.end + 1]
    processors = execution.initial.processors
    markers = marker_ids(execution)
    n = len(processors)
    pre, op, post, message_ops = set(), set(), set(), set()
    blocks = {}
    for proc in processors:
        local = [e for e in events if e.label == proc]
        applied = [k for k, e in enumerate(local) if isinstance(e, Apply) and e.op == OP_PROCESSOR and e.args.get('gid') == main.gid]
        if len(applied) != 1:
            raise ProtocolIncomplete(f"\n{proc} executed its component of '{main.gid}' {len(applied)} times")
        k = applied[0]
        trigger = local[k - 1] if k > 0 else None
        if proc == main.leader and isinstance(trigger, Invoke): pass
        elif not _is_marker_receive(trigger, markers):
            raise ProtocolIncomplete(f"\n{proc} applied '{main.gid}' without a preceding invocation or marker")
        broadcast = local[k + 1:k + 1 + n]
        if len(broadcast) != n or not all(isinstance(e, Send) and e.message.is_marker for e in broadcast):
            raise ProtocolIncomplete(f"\n{proc} did not broadcast markers right after applying '{main.gid}'")
        block = local[k - 1:k + 1 + n]
        blocks[proc] = tuple(e.eid for e in block)
        pre.update(e.eid for e in local[:k - 1])
        op.update(blocks[proc])
        post.update(e.eid for e in local[k + 1 + n:])
    for e in events:
        if e.label not in processors:
            if not isinstance(e, MessageApply): raise HypothesisViolation(f"\nEvent {e.eid} has unknown label {e.label}")
            message_ops.add(e.eid)
    return Tripartition(main, frozenset(pre), frozenset(op), frozenset(post), blocks, frozenset(message_ops))


def eliminate_inversions(fragment: Fragment, parts: Tripartition, log: List[SwapLog] = None) -> Fragment:
    """Adjacent swaps until every pre event precedes every op event, which
    precede every post event
    """
    log = log if log is not None else []
    events = list(fragment.events)
    states = replay(fragment)
    limit = len(events) ** 2
    swaps = 0
    while True:
        index = next((k for k in range(len(events) - 1)
                      if parts.rank(events[k].eid) > parts.rank(events[k + 1].eid)), None)
        if index is None: break
        if swaps >= limit: raise ClaimViolation('eliminate_inversions', f'no fixpoint after {limit} swaps')
        pair = (events[index].eid, events[index + 1].eid)
        try:
            events = list(swap_checked_locally(states, events, index, fragment.algorithm))
        except (CausalDependency, LemmaViolation) as e:
            raise ClaimViolation('eliminate_inversions', str(e).strip())
        log.append(SwapLog('eliminate_inversions', index, pair, 'inversion swap'))
        logger.debug('inversion swap at %s: %s', index, pair)
        swaps += 1
    return fragment.with_events(events)


def reorder_message_ops(fragment: Fragment, op_len: int, log: List[SwapLog] = None) -> Fragment:
    """Move every recorded message operation in front of its reception and
    then back to just after the op block, in recording order
    """
    log = log if log is not None else []
    algorithm = fragment.algorithm
    events = list(fragment.events)
    states = replay(fragment)
    recorded = [e.eid for e in events if isinstance(e, MessageApply) and e.op == OP_MESSAGE]
    for j, eid in enumerate(recorded):
        k = next(i for i, e in enumerate(events) if e.eid == eid)
        applied, reception = events[k], events[k - 1] if k > 0 else None
        if not (isinstance(reception, Receive) and reception.msg_id == applied.msg_id and reception.proc == applied.proc):
            raise ClaimViolation('reorder_message_ops', f'message operation {eid} does not follow its reception')
        moved = replace(applied, in_flight=True)
        try:
            middle = step(states[k - 1], moved, algorithm)
            after = step(middle, reception, algorithm)
        except QgoError as e:
            raise ClaimViolation('reorder_message_ops', f'operation on {applied.msg_id} before its reception: {str(e).strip()}')
        # not an equicausal swap, justified by comparing the states
        if not states_equal(after, states[k + 1], qcore.EPS_EXACT):
            raise ClaimViolation('reorder_message_ops', f'operating on {applied.msg_id} in flight changes the state')
        events[k - 1], events[k] = moved, reception
        states[k] = middle
        log.append(SwapLog('reorder_message_ops', k - 1, (reception.eid, eid), 'reception swap, state comparison'))
        position = k - 1
        while position > op_len + j:
            try:
                events = list(swap_checked_locally(states, events, position - 1, algorithm))
            except (CausalDependency, LemmaViolation) as e:
                raise ClaimViolation('reorder_message_ops', str(e).strip())
            log.append(SwapLog('reorder_message_ops', position - 1, (events[position].eid, eid), 'inversion swap'))
            position -= 1
    return fragment.with_events(events)


def build_spec_execution(z: Execution) -> Execution:
    """Replace each op block and its message operations by one atomic
    execution, dropping every other event outside the history filter
    """
    algorithm = SpecAlgorithm(z.algorithm.base, z.algorithm.library)
    markers = marker_ids(z)
    blocks = {}
    for main in decompose(z):
        parts = tripartition(z, main)
        op_start = main.start + len(parts.pre)
        blocks[op_start] = (main, op_start + len(parts.op) + len(parts.message_ops) - 1)
    next_eid = max(z.eids, default=-1) + 1
    events = []
    index = 0
    while index < len(z.events):
        if index in blocks:
            main, end = blocks[index]
            block = z.events[index:end + 1]
            invoke = next(e for e in block if isinstance(e, Invoke))
            events.append(invoke)
            events.append(AtomicExecute(next_eid, invoke.proc, main.gid,
                                        {e.proc: e.outcome for e in block if isinstance(e, Apply) and e.op == OP_PROCESSOR},
                                        {e.msg_id: e.outcome for e in block if isinstance(e, MessageApply)}))
            next_eid += 1
            index = end + 1
            continue
        if in_filter(z.events[index], markers): events.append(z.events[index])
        index += 1
    initial = z.initial.replace(ext={p: None for p in z.initial.processors})
    return Execution(initial, tuple(events), algorithm)


def _verdicts(x: Execution, y: Execution, z: Execution, y_hat: Execution) -> Dict[str, bool]:
    final_x, final_y, final_z = final_state(x), final_state(y), final_state(z)
    return {
        'equicausal(X,Y)': equicausal(x, y),
        'final(X)=final(Y)': states_equal(final_x, final_y, qcore.EPS),
        'final(Y)=final(Z)': states_equal(final_y, final_z, qcore.EPS),
        'H(Z)=H(Y)': history(z) == history(y),
        'valid(Yhat)': validate_spec_execution(y_hat).valid,
        'H(Yhat)~H(Z)': histories_correspond(history(y_hat), history(z)),
    }


def verify(execution: Execution) -> Certificate:
    certificate = Certificate(execution)
    valid = validate(TransitionPredicate(execution.algorithm), execution)
    if not valid.valid:
        certificate.failure = ('validate', f'event {valid.index}: {valid.reason}')
        return certificate
    stage = 'decompose'
    try:
        mains = decompose(execution)
        y = execution
        partitions = []
        for main in mains:
            stage = 'tripartition'
            parts = tripartition(execution, main)
            partitions.append(parts)
            stage = 'eliminate_inversions'
            reordered = eliminate_inversions(slice_execution(y, main.start, main.end), parts, certificate.swaps)
            try:
                y = substitute(y, main.start, main.end, reordered)
            except SubstitutionMismatch as e: raise ClaimViolation(stage, str(e).strip())
        certificate.y = y
        z = y
        stage = 'reorder_message_ops'
        for main, parts in zip(mains, partitions):
            op_start = main.start + len(parts.pre)
            states = replay(z)
            fragment = slice_execution(z, op_start, main.end, states)
            moved = reorder_message_ops(fragment, len(parts.op), certificate.swaps)
            if not states_equal(final_state(moved), states[main.end + 1], qcore.EPS):
                raise ClaimViolation(stage, 'final state changed')
            z = splice(z, op_start, main.end, moved.events)
        certificate.z = z
        stage = 'build_spec_execution'
        certificate.y_hat = build_spec_execution(z)
        stage = 'verdicts'
        certificate.verdicts = _verdicts(execution, certificate.y, z, certificate.y_hat)
        failed = [name for name, ok in certificate.verdicts.items() if not ok]
        if failed: certificate.failure = (failed[0], f'verdict {failed[0]} does not hold')
        if not certificate.verdicts['valid(Yhat)']:
            reason = validate_spec_execution(certificate.y_hat).reason
            certificate.failure = ('build_spec_execution', reason)
    except ClaimViolation as e:
        certificate.failure = (e.step, e.reason)
    except ReplayError as e:
        certificate.failure = (stage, f'replay failed at {e.index}: {e.reason}')
    except QgoError as e:
        certificate.failure = (stage, str(e).strip())
    logger.debug('verification %s', 'accepted' if certificate.accepted else f'rejected at {certificate.failure}')
    return certificate
