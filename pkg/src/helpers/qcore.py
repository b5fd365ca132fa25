# SPDX-License-Identifier: MIT-0

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union
import numpy as np
from .common import dim_cap
from .errors import BadOutcome, CapacityError, IdCollision, InvalidOperation, ShapeError, UnknownRegister, ZeroProbabilityHistory

EPS = 1e-9
EPS_EXACT = 1e-12
ZERO_TRACE = 1e-15
BOTTOM = '⊥'

SQRT_HALF = 1 / math.sqrt(2)
STATE_VECTORS = {
    '0': np.array([1, 0], dtype=complex),
    '1': np.array([0, 1], dtype=complex),
    'plus': np.array([SQRT_HALF, SQRT_HALF], dtype=complex),
    'minus': np.array([SQRT_HALF, -SQRT_HALF], dtype=complex),
}
EPR_VECTOR = np.array([SQRT_HALF, 0, 0, SQRT_HALF], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) * SQRT_HALF
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)

RegisterLike = Union[int, 'RegisterId']


@dataclass(frozen=True, order=True)
class RegisterId:
    id: int
    dim: int = 2

    def __post_init__(self):
        if self.dim < 1: raise ShapeError(f"\nRegister {self.id} has invalid dimension {self.dim}")


def _rid(register: RegisterLike) -> int:
    return register.id if isinstance(register, RegisterId) else int(register)


@dataclass(frozen=True)
class RegisterSpace:
    registers: Tuple[RegisterId, ...] = ()
    cap: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'registers', tuple(self.registers))
        ids = [r.id for r in self.registers]
        if len(set(ids)) != len(ids):
            duplicates = sorted({i for i in ids if ids.count(i) > 1})
            raise IdCollision(f"\nDuplicate register ids {duplicates}")
        limit = self.cap if self.cap is not None else dim_cap()
        if self.total_dim > limit:
            raise CapacityError(f"\nRegister space dimension {self.total_dim} exceeds the cap of {limit}")

    @property
    def total_dim(self) -> int:
        return math.prod(r.dim for r in self.registers)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(r.dim for r in self.registers)

    @property
    def ids(self) -> Tuple[int, ...]:
        return tuple(r.id for r in self.registers)

    def index(self, register: RegisterLike) -> int:
        rid = _rid(register)
        for position, r in enumerate(self.registers):
            if r.id == rid: return position
        raise UnknownRegister(f"\nRegister {rid} is not part of the space")

    def get(self, register: RegisterLike) -> RegisterId:
        return self.registers[self.index(register)]

    def derive(self, registers: Iterable[RegisterId]) -> 'RegisterSpace':
        return RegisterSpace(tuple(registers), cap=self.cap)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Subnormalized density matrix over a labeled register space, row and
    column indices decompose big-endian in register order
    """
    space: RegisterSpace
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        d = self.space.total_dim
        if entries.shape != (d, d):
            raise ShapeError(f"\nMatrix of shape {entries.shape} does not fit a space of dimension {d}")
        entries.setflags(write=False)
        object.__setattr__(self, 'entries', entries)

    @property
    def registers(self) -> Tuple[RegisterId, ...]:
        return self.space.registers

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def check(self, eps: float = EPS) -> List[str]:
        """List of the density-matrix conditions this matrix violates
        """
        failures = []
        deviation = float(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0))
        if deviation > eps: failures.append(f'not hermitian (deviation {deviation:.3g})')
        hermitian = (self.entries + self.entries.conj().T) / 2
        smallest = float(np.min(np.linalg.eigvalsh(hermitian), initial=0.0))
        if smallest < -eps: failures.append(f'not positive semidefinite (min eigenvalue {smallest:.3g})')
        trace = self.trace()
        if trace < -eps or trace > 1 + eps: failures.append(f'trace {trace:.17g} outside [0, 1]')
        return failures

    @classmethod
    def from_vector(cls, space: RegisterSpace, vector) -> 'DensityMatrix':
        vector = np.asarray(vector, dtype=complex).reshape(-1)
        return cls(space, np.outer(vector, vector.conj()))

    @classmethod
    def basis(cls, space: RegisterSpace, index: int) -> 'DensityMatrix':
        vector = np.zeros(space.total_dim, dtype=complex)
        vector[index] = 1
        return cls.from_vector(space, vector)

    @classmethod
    def maximally_mixed(cls, space: RegisterSpace) -> 'DensityMatrix':
        d = space.total_dim
        return cls(space, np.eye(d, dtype=complex) / d)

    @classmethod
    def empty(cls, cap: Optional[int] = None) -> 'DensityMatrix':
        return cls(RegisterSpace((), cap=cap), np.ones((1, 1), dtype=complex))


@dataclass(frozen=True)
class QuantumOperation:
    """Family of Kraus maps indexed by classical outcome
    """
    name: str
    in_dims: Tuple[int, ...]
    out_dims: Tuple[int, ...]
    kraus_by_outcome: Mapping[str, Tuple[np.ndarray, ...]]

    def __post_init__(self):
        object.__setattr__(self, 'in_dims', tuple(self.in_dims))
        object.__setattr__(self, 'out_dims', tuple(self.out_dims))
        shape = (math.prod(self.out_dims), math.prod(self.in_dims))
        kraus = {}
        for outcome, operators in self.kraus_by_outcome.items():
            operators = tuple(np.array(k, dtype=complex) for k in operators)
            if not operators: raise InvalidOperation(f"\nOperation '{self.name}' has no Kraus operator for outcome {outcome!r}")
            for k in operators:
                if k.shape != shape:
                    raise ShapeError(f"\nKraus operator of shape {k.shape} in '{self.name}', expected {shape}")
                k.setflags(write=False)
            kraus[str(outcome)] = operators
        if not kraus: raise InvalidOperation(f"\nOperation '{self.name}' has an empty outcome set")
        object.__setattr__(self, 'kraus_by_outcome', kraus)

    @property
    def outcome_set(self) -> Tuple[str, ...]:
        return tuple(self.kraus_by_outcome)

    def effect(self, outcome: str) -> np.ndarray:
        """E_r = sum of K^dagger K for one outcome
        """
        return sum(k.conj().T @ k for k in self.kraus_by_outcome[outcome])

    @classmethod
    def identity(cls, dims: Sequence[int] = (), name: str = 'identity') -> 'QuantumOperation':
        d = math.prod(dims)
        return cls(name, tuple(dims), tuple(dims), {BOTTOM: (np.eye(d, dtype=complex),)})

    @classmethod
    def from_unitary(cls, name: str, unitary, dims: Sequence[int]) -> 'QuantumOperation':
        return cls(name, tuple(dims), tuple(dims), {BOTTOM: (np.asarray(unitary, dtype=complex),)})

    @classmethod
    def measurement(cls, name: str = 'measure', dims: Sequence[int] = (2,)) -> 'QuantumOperation':
        """Standard-basis measurement, outcome labels are the basis digits
        joined in register order
        """
        kraus = {}
        for digits in np.ndindex(*dims):
            vector = np.zeros(math.prod(dims), dtype=complex)
            vector[np.ravel_multi_index(digits, dims) if dims else 0] = 1
            kraus[''.join(str(v) for v in digits)] = (np.outer(vector, vector),)
        return cls(name, tuple(dims), tuple(dims), kraus)

    @classmethod
    def preparation(cls, name: str, vector, dims: Sequence[int]) -> 'QuantumOperation':
        column = np.asarray(vector, dtype=complex).reshape(-1, 1)
        return cls(name, (), tuple(dims), {BOTTOM: (column,)})

    @classmethod
    def discard(cls, name: str, dims: Sequence[int]) -> 'QuantumOperation':
        d = math.prod(dims)
        return cls(name, tuple(dims), (), {BOTTOM: tuple(np.eye(d, dtype=complex)[i:i + 1] for i in range(d))})


@dataclass(frozen=True)
class RegisterMap:
    assignments: Tuple[int, ...] = ()

    def __post_init__(self):
        ids = tuple(_rid(a) for a in self.assignments)
        if len(set(ids)) != len(ids): raise ShapeError(f"\nRegister map {ids} is not injective")
        object.__setattr__(self, 'assignments', ids)


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    trace_preserving: bool
    deviation: float
    completely_positive: bool = True
    failures: Tuple[str, ...] = ()


def _permute(entries: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    n = len(dims)
    new_dims = [dims[k] for k in order]
    d = math.prod(new_dims)
    tensor = entries.reshape(tuple(dims) + tuple(dims))
    axes = list(order) + [n + k for k in order]
    return tensor.transpose(axes).reshape(d, d)


def _targets(rho: DensityMatrix, mapping: RegisterMap, dims: Sequence[int]) -> List[int]:
    positions = [rho.space.index(r) for r in mapping.assignments]
    actual = tuple(rho.space.registers[p].dim for p in positions)
    if actual != tuple(dims):
        raise ShapeError(f"\nRegisters {mapping.assignments} have dims {actual}, operation expects {tuple(dims)}")
    return positions


def tensor_product(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    space = a.space.derive(a.registers + b.registers)
    return DensityMatrix(space, np.kron(a.entries, b.entries))


def partial_trace(rho: DensityMatrix, discard: Iterable[RegisterLike]) -> DensityMatrix:
    discard_positions = sorted({rho.space.index(r) for r in discard})
    keep_positions = [p for p in range(len(rho.registers)) if p not in discard_positions]
    dims = rho.space.dims
    k = math.prod(dims[p] for p in keep_positions)
    d = math.prod(dims[p] for p in discard_positions)
    permuted = _permute(rho.entries, dims, keep_positions + discard_positions).reshape(k, d, k, d)
    reduced = np.einsum('aibi->ab', permuted)
    return DensityMatrix(rho.space.derive(rho.registers[p] for p in keep_positions), reduced)


def reduced_state(rho: DensityMatrix, keep: Iterable[RegisterLike]) -> DensityMatrix:
    """Local state of a set of registers, in the order they are given
    """
    keep_ids = [_rid(r) for r in keep]
    rest = [r for r in rho.space.ids if r not in keep_ids]
    traced = partial_trace(rho, rest)
    order = [traced.space.index(r) for r in keep_ids]
    return DensityMatrix(traced.space.derive(traced.registers[p] for p in order), _permute(traced.entries, traced.space.dims, order))


def apply_outcome(rho: DensityMatrix, op: QuantumOperation, mapping: RegisterMap, outcome: str,
                  out_registers: Optional[Sequence[RegisterId]] = None) -> DensityMatrix:
    """(Lambda^r tensor id)(rho), acting on the mapped registers only
    """
    if outcome not in op.kraus_by_outcome:
        raise BadOutcome(f"\nOutcome {outcome!r} is not in the outcome set of '{op.name}'")
    targets = _targets(rho, mapping, op.in_dims)
    rest = [p for p in range(len(rho.registers)) if p not in targets]
    dims = rho.space.dims
    d_in = math.prod(op.in_dims)
    d_out = math.prod(op.out_dims)
    d_rest = math.prod(dims[p] for p in rest)
    tensor = _permute(rho.entries, dims, targets + rest).reshape(d_in, d_rest, d_in, d_rest)
    result = np.zeros((d_out, d_rest, d_out, d_rest), dtype=complex)
    for k in op.kraus_by_outcome[outcome]:
        result += np.einsum('ai,ixjy,bj->axby', k, tensor, k.conj())
    result = result.reshape(d_out * d_rest, d_out * d_rest)
    rest_registers = [rho.registers[p] for p in rest]

    if out_registers is None:
        if op.out_dims != op.in_dims:
            raise ShapeError(f"\nOperation '{op.name}' changes register dims and needs output registers")
        # same registers, original order restored
        current = [rho.registers[p] for p in targets] + rest_registers
        order = [current.index(r) for r in rho.registers]
        return DensityMatrix(rho.space, _permute(result, [r.dim for r in current], order))
    out_registers = tuple(out_registers)
    if tuple(r.dim for r in out_registers) != op.out_dims:
        raise ShapeError(f"\nOutput registers {[r.id for r in out_registers]} do not match dims {op.out_dims}")
    current = list(out_registers) + rest_registers
    order = list(range(len(out_registers), len(current))) + list(range(len(out_registers)))
    space = rho.space.derive(rest_registers + list(out_registers))
    return DensityMatrix(space, _permute(result, [r.dim for r in current], order))


def outcome_probabilities(rho: DensityMatrix, op: QuantumOperation, mapping: RegisterMap) -> Dict[str, float]:
    """Probability of every outcome given rho, from the reduced state of the
    targeted registers
    """
    trace = rho.trace()
    if trace <= ZERO_TRACE: raise ZeroProbabilityHistory(f"\nState has trace {trace:.3g}, no outcome can occur")
    _targets(rho, mapping, op.in_dims)
    local = reduced_state(rho, mapping.assignments).entries
    return {r: max(float(np.trace(op.effect(r) @ local).real) / trace, 0.0) for r in op.outcome_set}


def choose_outcome(rho: DensityMatrix, op: QuantumOperation, mapping: RegisterMap, rng: np.random.Generator) -> str:
    probabilities = outcome_probabilities(rho, op, mapping)
    draw = rng.random()
    cumulative = 0.0
    chosen = None
    for outcome, p in probabilities.items():
        if p <= 0: continue
        chosen = outcome
        cumulative += p
        if draw < cumulative: break
    if chosen is None: raise ZeroProbabilityHistory(f"\nNo outcome of '{op.name}' has positive probability")
    return chosen


def sample_outcome(rho: DensityMatrix, op: QuantumOperation, mapping: RegisterMap, rng: np.random.Generator,
                   out_registers: Optional[Sequence[RegisterId]] = None) -> Tuple[str, DensityMatrix]:
    outcome = choose_outcome(rho, op, mapping, rng)
    return outcome, apply_outcome(rho, op, mapping, outcome, out_registers)


def validate_operation(op: QuantumOperation, eps: float = EPS) -> ValidationReport:
    d = math.prod(op.in_dims)
    total = np.zeros((d, d), dtype=complex)
    for outcome in op.outcome_set:
        total += op.effect(outcome)
    deviation = float(np.max(np.abs(total - np.eye(d)), initial=0.0))
    failures = []
    if deviation > eps: failures.append(f"'{op.name}' is not trace preserving (deviation {deviation:.3g})")
    return ValidationReport(valid=not failures, trace_preserving=deviation <= eps, deviation=deviation, failures=tuple(failures))


def canonical_form(rho: DensityMatrix) -> DensityMatrix:
    order = sorted(range(len(rho.registers)), key=lambda p: rho.registers[p].id)
    if order == list(range(len(order))): return rho
    return DensityMatrix(rho.space.derive(rho.registers[p] for p in order), _permute(rho.entries, rho.space.dims, order))


def states_close(a: DensityMatrix, b: DensityMatrix, tol: float = EPS_EXACT) -> bool:
    a, b = canonical_form(a), canonical_form(b)
    if a.registers != b.registers: return False
    if tol == 0: return bool(np.array_equal(a.entries, b.entries))
    return bool(np.max(np.abs(a.entries - b.entries), initial=0.0) <= tol)


def weyl(d: int, a: int, b: int) -> np.ndarray:
    """X^a Z^b on a d-level register, the Pauli X Z pair when d = 2
    """
    shift = np.roll(np.eye(d, dtype=complex), 1, axis=0)
    phase = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    if d == 2: phase = np.diag([1, -1]).astype(complex)
    return np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(phase, b)
