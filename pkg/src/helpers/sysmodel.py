# SPDX-License-Identifier: MIT-0

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, FrozenSet, Mapping, Optional, Sequence, Tuple
from . import qcore
from .qcore import DensityMatrix, QuantumOperation, RegisterId, RegisterMap
from .errors import DuplicateMessage, EmptyChannel, LocalityViolation, NotRecipient, OwnershipViolation, ShapeError

ChannelId = Tuple[str, str]
INBOX = 'inbox'
SENT = 'sent'


def chan_key(chan: ChannelId) -> str:
    return f'{chan[0]}>{chan[1]}'


def parse_chan(key: str) -> ChannelId:
    source, _, destination = key.partition('>')
    return (source, destination)


def message_owner(msg_id: str) -> str:
    return f'msg:{msg_id}'


def empty_classical() -> Dict:
    return {INBOX: [], SENT: []}


@dataclass(frozen=True)
class MessageInstance:
    msg_id: str
    classical: Any = None
    quantum_regs: Tuple[int, ...] = ()
    tau: Optional[Tuple[str, Any]] = None

    def __post_init__(self):
        object.__setattr__(self, 'quantum_regs', tuple(self.quantum_regs))
        if self.tau is not None: object.__setattr__(self, 'tau', tuple(self.tau))

    @property
    def is_marker(self) -> bool:
        return self.tau is not None and self.tau[0] == 'marker'

    @property
    def marker_gid(self) -> Optional[str]:
        return self.tau[1] if self.is_marker else None

    @property
    def msg_class(self) -> Optional[str]:
        return self.classical.get('class') if isinstance(self.classical, dict) else None

    def to_dict(self) -> Dict:
        return {'msg_id': self.msg_id, 'classical': self.classical, 'quantum_regs': list(self.quantum_regs),
                'tau': list(self.tau) if self.tau is not None else None}

    @classmethod
    def from_dict(cls, data: Mapping) -> 'MessageInstance':
        return cls(data['msg_id'], data.get('classical'), tuple(data.get('quantum_regs', ())),
                   tuple(data['tau']) if data.get('tau') is not None else None)


@dataclass(frozen=True)
class LocalOperation:
    """Classical plus quantum operation bound to concrete registers
    """
    name: str
    quantum: QuantumOperation
    registers: Tuple[int, ...] = ()
    classical: Callable[[Any, str, Tuple[int, ...]], Any] = field(default=lambda sigma, r, fresh: sigma, compare=False)


@dataclass(frozen=True, eq=False)
class SystemState:
    """Classical parts, extension registers, FIFO channels, register ownership
    and the global quantum state of an n-processor system
    """
    processors: Tuple[str, ...]
    classical: Mapping[str, Any]
    ext: Mapping[str, Any]
    channels: Mapping[ChannelId, Tuple[MessageInstance, ...]]
    ownership: Mapping[int, str]
    quantum: DensityMatrix
    sent_ids: FrozenSet[str] = frozenset()

    @classmethod
    def initial(cls, processors: Sequence[str], quantum: DensityMatrix = None, ownership: Mapping[int, str] = None,
                classical: Mapping[str, Any] = None, ext: Mapping[str, Any] = None) -> 'SystemState':
        processors = tuple(processors)
        state = cls(processors=processors,
                    classical={p: (classical or {}).get(p, empty_classical()) for p in processors},
                    ext={p: (ext or {}).get(p) for p in processors},
                    channels={(a, b): () for a in processors for b in processors},
                    ownership=dict(ownership or {}),
                    quantum=quantum if quantum is not None else DensityMatrix.empty())
        state.check_ownership()
        return state

    def replace(self, **changes) -> 'SystemState':
        return replace(self, **changes)

    def owned_by(self, owner: str) -> Tuple[RegisterId, ...]:
        return tuple(sorted(r for r in self.quantum.registers if self.ownership.get(r.id) == owner))

    def incoming(self, proc: str) -> Tuple[ChannelId, ...]:
        return tuple((p, proc) for p in self.processors)

    def outgoing(self, proc: str) -> Tuple[ChannelId, ...]:
        return tuple((proc, p) for p in self.processors)

    def in_flight(self) -> Tuple[Tuple[ChannelId, MessageInstance], ...]:
        return tuple((chan, msg) for chan in sorted(self.channels) for msg in self.channels[chan])

    def check_ownership(self) -> None:
        live = set(self.quantum.space.ids)
        if set(self.ownership) != live:
            raise OwnershipViolation(f"\nOwnership covers {sorted(self.ownership)}, live registers are {sorted(live)}")
        owners = set(self.processors)
        for chan, contents in self.channels.items():
            for msg in contents:
                owners.add(message_owner(msg.msg_id))
                for reg in msg.quantum_regs:
                    if self.ownership.get(reg) != message_owner(msg.msg_id):
                        raise OwnershipViolation(f"\nRegister {reg} of message {msg.msg_id} is owned by {self.ownership.get(reg)}")
        stray = {o for o in self.ownership.values() if o not in owners}
        if stray: raise OwnershipViolation(f"\nRegisters owned by unknown components {sorted(stray)}")


@dataclass(frozen=True)
class LocalView:
    """What a local transition predicate may look at
    """
    proc: str
    classical: Any
    ext: Any
    owned: Tuple[RegisterId, ...]
    incoming: Mapping[ChannelId, Tuple[MessageInstance, ...]]
    outgoing: Mapping[ChannelId, Tuple[MessageInstance, ...]]


def view(state: SystemState, proc: str) -> LocalView:
    return LocalView(proc=proc, classical=state.classical[proc], ext=state.ext.get(proc),
                     owned=state.owned_by(proc),
                     incoming={c: state.channels[c] for c in state.incoming(proc)},
                     outgoing={c: state.channels[c] for c in state.outgoing(proc)})


def send(state: SystemState, sender: str, msg: MessageInstance, dest: str) -> SystemState:
    chan = (sender, dest)
    if chan not in state.channels: raise NotRecipient(f"\nThere is no channel {chan_key(chan)}")
    if msg.msg_id in state.sent_ids: raise DuplicateMessage(f"\nMessage id {msg.msg_id} was already sent")
    for reg in msg.quantum_regs:
        if state.ownership.get(reg) != sender:
            raise OwnershipViolation(f"\n{sender} sends register {reg} owned by {state.ownership.get(reg)}")
    ownership = dict(state.ownership)
    for reg in msg.quantum_regs:
        ownership[reg] = message_owner(msg.msg_id)
    channels = dict(state.channels)
    channels[chan] = channels[chan] + (msg,)
    classical = dict(state.classical)
    if not msg.is_marker:
        classical[sender] = {**classical[sender], SENT: list(classical[sender][SENT]) + [msg.msg_id]}
    return state.replace(channels=channels, ownership=ownership, classical=classical,
                         sent_ids=state.sent_ids | {msg.msg_id})


def receive(state: SystemState, receiver: str, chan: ChannelId) -> Tuple[SystemState, MessageInstance]:
    chan = tuple(chan)
    if chan not in state.channels or chan[1] != receiver:
        raise NotRecipient(f"\n{receiver} is not the destination of channel {chan_key(chan)}")
    if not state.channels[chan]: raise EmptyChannel(f"\nChannel {chan_key(chan)} is empty")
    msg = state.channels[chan][0]
    channels = dict(state.channels)
    channels[chan] = channels[chan][1:]
    ownership = dict(state.ownership)
    for reg in msg.quantum_regs:
        ownership[reg] = receiver
    classical = dict(state.classical)
    if not msg.is_marker:
        entry = {'chan': chan_key(chan), 'msg': msg.to_dict()}
        classical[receiver] = {**classical[receiver], INBOX: list(classical[receiver][INBOX]) + [entry]}
    return state.replace(channels=channels, ownership=ownership, classical=classical), msg


def _output_registers(state: SystemState, op: LocalOperation, fresh: Sequence[int]) -> Optional[Tuple[RegisterId, ...]]:
    if op.quantum.out_dims == op.quantum.in_dims and not fresh: return None
    if len(fresh) != len(op.quantum.out_dims):
        raise ShapeError(f"\n'{op.name}' creates {len(op.quantum.out_dims)} registers, got fresh ids {list(fresh)}")
    return tuple(RegisterId(rid, dim) for rid, dim in zip(fresh, op.quantum.out_dims))


def apply_local(state: SystemState, proc: str, op: LocalOperation, outcome: str, fresh: Sequence[int] = ()) -> SystemState:
    for reg in op.registers:
        if state.ownership.get(reg) != proc:
            raise LocalityViolation(f"\n'{op.name}' at {proc} touches register {reg} owned by {state.ownership.get(reg)}")
    fresh = tuple(fresh)
    out_registers = _output_registers(state, op, fresh)
    quantum = qcore.apply_outcome(state.quantum, op.quantum, RegisterMap(op.registers), outcome, out_registers)
    ownership = dict(state.ownership)
    if out_registers is not None:
        for reg in op.registers:
            del ownership[reg]
        for reg in out_registers:
            ownership[reg.id] = proc
    classical = dict(state.classical)
    classical[proc] = op.classical(classical[proc], outcome, fresh)
    return state.replace(quantum=quantum, ownership=ownership, classical=classical)


def find_message(state: SystemState, msg_id: str, in_flight: bool, holder: str = None) -> MessageInstance:
    """The message in its channel, or the copy recorded in the holder's inbox
    """
    if in_flight:
        for _, msg in state.in_flight():
            if msg.msg_id == msg_id: return msg
        raise EmptyChannel(f"\nMessage {msg_id} is not in flight")
    for entry in reversed(state.classical[holder][INBOX]):
        if entry['msg']['msg_id'] == msg_id: return MessageInstance.from_dict(entry['msg'])
    raise NotRecipient(f"\nMessage {msg_id} was not received by {holder}")


def apply_message(state: SystemState, msg_id: str, op: LocalOperation, outcome: str, in_flight: bool,
                  holder: str = None) -> SystemState:
    """Apply an operation to one message, either still in its channel or
    already delivered to the holder
    """
    msg = find_message(state, msg_id, in_flight, holder)
    owner = message_owner(msg_id) if in_flight else holder
    if tuple(op.registers) != msg.quantum_regs:
        raise LocalityViolation(f"\n'{op.name}' targets {list(op.registers)}, message {msg_id} carries {list(msg.quantum_regs)}")
    for reg in op.registers:
        if state.ownership.get(reg) != owner:
            raise LocalityViolation(f"\n'{op.name}' touches register {reg} owned by {state.ownership.get(reg)}")
    if op.quantum.in_dims != op.quantum.out_dims: raise ShapeError(f"\nMessage operation '{op.name}' must keep the message registers")
    quantum = qcore.apply_outcome(state.quantum, op.quantum, RegisterMap(op.registers), outcome)
    updated = replace(msg, classical=op.classical(msg.classical, outcome, ()),
                      tau=('outcome', outcome))
    if in_flight:
        channels = dict(state.channels)
        for chan, contents in state.channels.items():
            channels[chan] = tuple(updated if m.msg_id == msg_id else m for m in contents)
        return state.replace(quantum=quantum, channels=channels)
    inbox = list(state.classical[holder][INBOX])
    position = max(i for i, entry in enumerate(inbox) if entry['msg']['msg_id'] == msg_id)
    inbox[position] = {**inbox[position], 'msg': updated.to_dict()}
    classical = dict(state.classical)
    classical[holder] = {**classical[holder], INBOX: inbox}
    return state.replace(quantum=quantum, classical=classical)


def states_equal(a: SystemState, b: SystemState, tol: float = 0.0) -> bool:
    """Structural equality of the classical side, quantum parts compared in
    canonical form entry-wise within tol
    """
    return (a.processors == b.processors
            and a.classical == b.classical
            and a.ext == b.ext
            and a.channels == b.channels
            and a.ownership == b.ownership
            and a.sent_ids == b.sent_ids
            and qcore.states_close(a.quantum, b.quantum, tol))
