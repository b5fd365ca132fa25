# SPDX-License-Identifier: MIT-0

from abc import abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple
import numpy as np
from .qcore import CNOT, EPR_VECTOR, HADAMARD, QuantumOperation, weyl
from .sysmodel import INBOX, SENT, LocalOperation, LocalView, empty_classical
from .execution import Algorithm, Apply, Event, Receive, Send
from .errors import InvalidOperation, UnknownScenario

CLASSICAL_ONLY = QuantumOperation.identity(())


@dataclass(frozen=True)
class Proposal:
    """A step a base algorithm is willing to take next at one processor
    """
    kind: str
    op: Optional[str] = None
    args: Mapping[str, Any] = field(default_factory=dict)
    dest: Optional[str] = None
    classical: Any = None
    registers: Tuple[int, ...] = ()

    def matches(self, event: Event) -> bool:
        if self.kind == 'apply':
            return isinstance(event, Apply) and event.op == self.op and dict(event.args) == dict(self.args)
        if self.kind == 'send':
            return (isinstance(event, Send) and event.dest == self.dest and event.message.tau is None
                    and event.message.classical == self.classical and event.message.quantum_regs == tuple(self.registers))
        return False


def classical_update(name: str, update) -> LocalOperation:
    return LocalOperation(name, CLASSICAL_ONLY, (), lambda sigma, r, fresh: update(sigma))


def inbox_of(local: LocalView, msg_class: str) -> List[Dict]:
    return [entry for entry in local.classical[INBOX] if (entry['msg']['classical'] or {}).get('class') == msg_class]


class BaseAlgorithm(Algorithm):
    """Base algorithm driven by proposals: an Apply or Send is admitted iff
    the processor proposes it in its current classical state, every Receive
    is admitted
    """
    name = 'base'

    def __init__(self, processors: Sequence[str], params: Mapping[str, Any] = None):
        self.processors = tuple(processors)
        self.params = dict(params or {})

    def initial_classical(self, proc: str, owned: Tuple[int, ...]) -> Dict:
        return empty_classical()

    def successor(self, proc: str) -> str:
        return self.processors[(self.processors.index(proc) + 1) % len(self.processors)]

    @abstractmethod
    def enabled(self, local: LocalView) -> List[Proposal]:
        pass

    def bind(self, local: LocalView, event: Apply) -> LocalOperation:
        raise InvalidOperation(f"\n{self.name} has no operation '{event.op}'")

    def local_predicate(self, pre: LocalView, event: Event, post: LocalView) -> bool:
        if event.label != pre.proc: return False
        if isinstance(event, Receive): return True
        return any(p.matches(event) for p in self.enabled(pre))


class EmptyAlgorithm(BaseAlgorithm):
    name = 'empty'

    def enabled(self, local: LocalView) -> List[Proposal]:
        return []


class TokenRing(BaseAlgorithm):
    """A classical token circulating around the ring p0 -> p1 -> ... for
    max_hops hops, each processor may also tick a local counter
    """
    name = 'token-ring'

    def initial_classical(self, proc: str, owned: Tuple[int, ...]) -> Dict:
        return {**empty_classical(), 'initial_tokens': int(proc == self.processors[0]), 'accepted': 0, 'hop': 0, 'ticks': 0}

    def holding(self, sigma: Dict) -> int:
        return sigma['initial_tokens'] + sigma['accepted'] - len(sigma[SENT])

    def enabled(self, local: LocalView) -> List[Proposal]:
        sigma = local.classical
        proposals = []
        tokens = inbox_of(local, 'token')
        if len(tokens) > sigma['accepted']:
            proposals.append(Proposal('apply', 'token.accept'))
        if self.holding(sigma) > 0 and sigma['hop'] < self.params.get('max_hops', 6):
            proposals.append(Proposal('send', dest=self.successor(local.proc), classical={'class': 'token', 'hop': sigma['hop'] + 1}))
        if sigma['ticks'] < self.params.get('ticks', 2):
            proposals.append(Proposal('apply', 'token.tick'))
        return proposals

    def bind(self, local: LocalView, event: Apply) -> LocalOperation:
        if event.op == 'token.accept':
            def accept(sigma):
                entry = inbox_of(local, 'token')[sigma['accepted']]
                return {**sigma, 'accepted': sigma['accepted'] + 1, 'hop': entry['msg']['classical']['hop']}
            return classical_update(event.op, accept)
        if event.op == 'token.tick':
            return classical_update(event.op, lambda sigma: {**sigma, 'ticks': sigma['ticks'] + 1})
        return super().bind(local, event)


def bell_measurement() -> QuantumOperation:
    """Bell-basis measurement of (data, half), outcome 'm1m2'
    """
    circuit = np.kron(HADAMARD, np.eye(2)) @ CNOT
    kraus = {}
    for index in range(4):
        projector = np.zeros((4, 4), dtype=complex)
        projector[index, index] = 1
        kraus[f'{index >> 1}{index & 1}'] = (projector @ circuit,)
    return QuantumOperation('teleport.bell', (2, 2), (2, 2), kraus)


class Teleport(BaseAlgorithm):
    """p0 teleports its data qubit to p1 over a freshly shared EPR pair
    """
    name = 'teleport'

    def initial_classical(self, proc: str, owned: Tuple[int, ...]) -> Dict:
        sigma = empty_classical()
        if proc == self.sender: sigma.update({'data': owned[0] if owned else None, 'epr': None, 'bits': None})
        if proc == self.receiver: sigma.update({'half': None, 'corrected': False})
        return sigma

    @property
    def sender(self) -> str:
        return self.processors[0]

    @property
    def receiver(self) -> str:
        return self.processors[1]

    def enabled(self, local: LocalView) -> List[Proposal]:
        sigma = local.classical
        if local.proc == self.sender and sigma['data'] is not None:
            if sigma['epr'] is None: return [Proposal('apply', 'teleport.prepare')]
            if len(sigma[SENT]) == 0:
                return [Proposal('send', dest=self.receiver, classical={'class': 'teleport.half'}, registers=(sigma['epr'][1],))]
            if sigma['bits'] is None: return [Proposal('apply', 'teleport.bell')]
            if len(sigma[SENT]) == 1:
                return [Proposal('send', dest=self.receiver, classical={'class': 'teleport.bits', 'bits': sigma['bits']})]
        if local.proc == self.receiver:
            if sigma['half'] is None and inbox_of(local, 'teleport.half'): return [Proposal('apply', 'teleport.accept')]
            if sigma['half'] is not None and not sigma['corrected'] and inbox_of(local, 'teleport.bits'):
                return [Proposal('apply', 'teleport.correct')]
        return []

    def bind(self, local: LocalView, event: Apply) -> LocalOperation:
        sigma = local.classical
        if event.op == 'teleport.prepare':
            return LocalOperation(event.op, QuantumOperation.preparation(event.op, EPR_VECTOR, (2, 2)), (),
                                  lambda s, r, fresh: {**s, 'epr': list(fresh)})
        if event.op == 'teleport.bell':
            return LocalOperation(event.op, bell_measurement(), (sigma['data'], sigma['epr'][0]),
                                  lambda s, r, fresh: {**s, 'bits': r})
        if event.op == 'teleport.accept':
            half = inbox_of(local, 'teleport.half')[0]['msg']['quantum_regs'][0]
            return classical_update(event.op, lambda s: {**s, 'half': half})
        if event.op == 'teleport.correct':
            bits = inbox_of(local, 'teleport.bits')[0]['msg']['classical']['bits']
            correction = weyl(2, 0, int(bits[0])) @ weyl(2, int(bits[1]), 0)
            return LocalOperation(event.op, QuantumOperation.from_unitary(event.op, correction, (2,)), (sigma['half'],),
                                  lambda s, r, fresh: {**s, 'corrected': True})
        return super().bind(local, event)


class Gossip(BaseAlgorithm):
    """Processors scramble, measure and pass on their qubits around the ring
    within a per-processor action budget
    """
    name = 'gossip'

    def initial_classical(self, proc: str, owned: Tuple[int, ...]) -> Dict:
        return {**empty_classical(), 'acts': 0, 'seen': []}

    def budget_left(self, sigma: Dict) -> bool:
        return sigma['acts'] + len(sigma[SENT]) < self.params.get('budget', 3)

    def enabled(self, local: LocalView) -> List[Proposal]:
        sigma = local.classical
        if not self.budget_left(sigma): return []
        dest = self.successor(local.proc)
        qubits = [r.id for r in local.owned if r.dim == 2]
        if not qubits:
            return [Proposal('send', dest=dest, classical={'class': 'gossip', 'seen': list(sigma['seen'])})]
        reg = qubits[0]
        return [Proposal('apply', 'gossip.hadamard', {'reg': reg}),
                Proposal('apply', 'gossip.measure', {'reg': reg}),
                Proposal('send', dest=dest, classical={'class': 'gossip', 'seen': list(sigma['seen'])}, registers=(reg,))]

    def bind(self, local: LocalView, event: Apply) -> LocalOperation:
        reg = event.args.get('reg')
        if event.op == 'gossip.hadamard':
            return LocalOperation(event.op, QuantumOperation.from_unitary(event.op, HADAMARD, (2,)), (reg,),
                                  lambda s, r, fresh: {**s, 'acts': s['acts'] + 1})
        if event.op == 'gossip.measure':
            return LocalOperation(event.op, QuantumOperation.measurement(event.op, (2,)), (reg,),
                                  lambda s, r, fresh: {**s, 'acts': s['acts'] + 1, 'seen': s['seen'] + [r]})
        return super().bind(local, event)


BASE_ALGORITHMS = {cls.name: cls for cls in (EmptyAlgorithm, TokenRing, Teleport, Gossip)}


def build_base_algorithm(name: str, processors: Sequence[str], params: Mapping[str, Any] = None) -> BaseAlgorithm:
    if name not in BASE_ALGORITHMS: raise UnknownScenario(f"\nUnknown base algorithm '{name}'")
    return BASE_ALGORITHMS[name](processors, params)
