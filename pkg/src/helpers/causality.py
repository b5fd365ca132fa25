# SPDX-License-Identifier: MIT-0

import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Mapping, Sequence, Set, Tuple
from . import qcore
from .execution import Event, Execution, Fragment, Receive, Send, final_state, replay, splice, step
from .sysmodel import SystemState, states_equal
from .errors import CausalDependency, LemmaViolation, NotComparable, QgoError, ReplayError, SubstitutionMismatch

logger = logging.getLogger(__name__)


def primitive_edges(execution: Execution) -> List[Tuple[int, int]]:
    """Consecutive events on the same component, and the send and receipt
    of each message
    """
    edges = []
    last_by_label = {}
    sends = {}
    for event in execution.events:
        previous = last_by_label.get(event.label)
        if previous is not None: edges.append((previous, event.eid))
        last_by_label[event.label] = event.eid
        if isinstance(event, Send): sends[event.message.msg_id] = event.eid
        if isinstance(event, Receive) and event.msg_id in sends: edges.append((sends[event.msg_id], event.eid))
    return edges


def directly_related(a: Event, b: Event) -> bool:
    if a.label == b.label: return True
    if isinstance(a, Send) and isinstance(b, Receive) and a.message.msg_id == b.msg_id: return True
    return False


@dataclass(frozen=True)
class CausalRelation:
    eids: Tuple[int, ...]
    successors: Mapping[int, FrozenSet[int]]

    @property
    def n(self) -> int:
        return len(self.eids)

    def precedes(self, a: int, b: int) -> bool:
        return b in self.successors.get(a, frozenset())

    def pairs(self) -> Set[Tuple[int, int]]:
        return {(a, b) for a, later in self.successors.items() for b in later}


def compute_causality(execution: Execution) -> CausalRelation:
    direct: Dict[int, List[int]] = {e.eid: [] for e in execution.events}
    for a, b in primitive_edges(execution):
        direct[a].append(b)
    closure: Dict[int, FrozenSet[int]] = {}
    # edges point forward in the order, so a reverse sweep sees every successor closed
    for event in reversed(execution.events):
        reach = set()
        for d in direct[event.eid]:
            reach.add(d)
            reach |= closure[d]
        closure[event.eid] = frozenset(reach)
    return CausalRelation(tuple(e.eid for e in execution.events), closure)


def equicausal(a: Execution, b: Execution) -> bool:
    if sorted(a.eids) != sorted(b.eids) or len(set(a.eids)) != len(a.eids):
        raise NotComparable("\nExecutions do not share the same set of events")
    if not states_equal(a.initial, b.initial): return False
    return compute_causality(a).pairs() == compute_causality(b).pairs()


def lightcones(execution: Execution, selected: Iterable[int]) -> Tuple[Set[int], Set[int]]:
    """Computational past and future of a set of events
    """
    relation = compute_causality(execution)
    selected = set(selected)
    past = {e for e in relation.eids if any(relation.precedes(e, d) for d in selected)}
    future = set().union(*(relation.successors[d] for d in selected)) if selected else set()
    return past, future


def swap_events(events: Sequence[Event], i: int) -> Tuple[Event, ...]:
    events = list(events)
    events[i], events[i + 1] = events[i + 1], events[i]
    return tuple(events)


def swap_checked_locally(states: List[SystemState], events: Sequence[Event], i: int, algorithm,
                         tol: float = qcore.EPS_EXACT) -> Tuple[Event, ...]:
    """Swap positions i and i+1 given the replayed states, checking only the
    two affected steps; states is updated in place
    """
    if directly_related(events[i], events[i + 1]):
        raise CausalDependency(f"\nEvent {events[i].eid} causally precedes event {events[i + 1].eid}")
    try:
        middle = step(states[i], events[i + 1], algorithm)
        after = step(middle, events[i], algorithm)
    except QgoError as e: raise LemmaViolation(f"\nSwap at {i} is ill-formed: {str(e).strip()}")
    if not states_equal(after, states[i + 2], tol):
        raise LemmaViolation(f"\nSwap at {i} changed the state after events {events[i].eid} and {events[i + 1].eid}")
    states[i + 1] = middle
    return swap_events(events, i)


def swap_adjacent(execution: Execution, i: int, check: bool = True, tol: float = qcore.EPS_EXACT) -> Execution:
    if not 0 <= i < len(execution.events) - 1:
        raise IndexError(f"\nNo adjacent pair at position {i}")
    first, second = execution.events[i], execution.events[i + 1]
    if directly_related(first, second):
        raise CausalDependency(f"\nEvent {first.eid} causally precedes event {second.eid}")
    swapped = execution.with_events(swap_events(execution.events, i))
    if check:
        try:
            after = final_state(swapped)
        except ReplayError as e:
            raise LemmaViolation(f"\nSwapped execution is ill-formed at {e.index}: {e.reason}")
        if not equicausal(execution, swapped):
            raise LemmaViolation(f"\nSwap at {i} changed the causal relation")
        if not states_equal(final_state(execution), after, tol):
            raise LemmaViolation(f"\nSwap at {i} changed the final state")
    return swapped


def move_to_end(execution: Execution, i: int, j: int, check: bool = True) -> Execution:
    """Move the event at i to position j through adjacent swaps
    """
    if i > j: raise IndexError(f"\nCannot move event {i} backwards to {j}")
    for k in range(i, j):
        execution = swap_adjacent(execution, k, check=check)
    return execution


def substitute(execution: Execution, i: int, j: int, replacement: Fragment, tol: float = qcore.EPS) -> Execution:
    """Replace positions i..j by an equicausal fragment with the same final
    state
    """
    states = replay(execution)
    original = Fragment(states[i], execution.events[i:j + 1], execution.algorithm)
    try:
        same_causality = equicausal(original, replacement)
    except NotComparable as e: raise SubstitutionMismatch(str(e))
    if not same_causality: raise SubstitutionMismatch("\nReplacement fragment is not equicausal with the original")
    if not states_equal(final_state(replacement), states[j + 1], tol):
        raise SubstitutionMismatch("\nReplacement fragment ends in a different state")
    return splice(execution, i, j, replacement.events)


def check_equiv_theorem(a: Execution, b: Execution, tol: float = qcore.EPS) -> bool:
    if not equicausal(a, b): raise NotComparable("\nExecutions are not equicausal")
    return states_equal(final_state(a), final_state(b), tol)
