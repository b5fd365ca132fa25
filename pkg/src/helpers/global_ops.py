# SPDX-License-Identifier: MIT-0

import itertools
import math
from typing import Any, Dict, Iterable, Sequence, Tuple
import numpy as np
from . import qcore
from .common import encode
from .qcore import BOTTOM, DensityMatrix, QuantumOperation, RegisterId, RegisterMap, weyl
from .qgo import DEFAULT_COMPONENT, ComponentOperation, DecomposableGlobalOp
from .errors import UnknownScenario


def _record(classical: Any, registers: Tuple[RegisterId, ...]) -> QuantumOperation:
    dims = tuple(r.dim for r in registers)
    d = math.prod(dims)
    return QuantumOperation('record', dims, dims, {encode(classical): (np.eye(d, dtype=complex),)})


def _snapshot(classical: Any, registers: Tuple[RegisterId, ...]) -> QuantumOperation:
    """Standard-basis measurement of every register, outcome is the
    classical encoding followed by the measured values
    """
    dims = tuple(r.dim for r in registers)
    d = math.prod(dims)
    prefix = encode(classical)
    kraus = {}
    for index, digits in enumerate(itertools.product(*(range(n) for n in dims))):
        projector = np.zeros((d, d), dtype=complex)
        projector[index, index] = 1
        values = ','.join(f'{r.id}={v}' for r, v in zip(registers, digits))
        kraus[f'{prefix}|{values}'] = (projector,)
    return QuantumOperation('snapshot', dims, dims, kraus)


def _encrypt(classical: Any, registers: Tuple[RegisterId, ...]) -> QuantumOperation:
    """Uniformly random generalized Pauli on every register, the outcome is
    the key 'id=a.b,...'
    """
    dims = tuple(r.dim for r in registers)
    if not registers: return QuantumOperation('encrypt', (), (), {BOTTOM: (np.eye(1, dtype=complex),)})
    per_register = [[(a, b) for a in range(r.dim) for b in range(r.dim)] for r in registers]
    kraus = {}
    for keys in itertools.product(*per_register):
        operator = np.eye(1, dtype=complex)
        for r, (a, b) in zip(registers, keys):
            operator = np.kron(operator, weyl(r.dim, a, b) / r.dim)
        kraus[','.join(f'{r.id}={a}.{b}' for r, (a, b) in zip(registers, keys))] = (operator,)
    return QuantumOperation('encrypt', dims, dims, kraus)


def uniform(gid: str, build) -> DecomposableGlobalOp:
    component = ComponentOperation(build)
    return DecomposableGlobalOp(gid, {DEFAULT_COMPONENT: component}, {DEFAULT_COMPONENT: component})


def record_only() -> DecomposableGlobalOp:
    return uniform('record-only', _record)


def snapshot_measure() -> DecomposableGlobalOp:
    return uniform('snapshot-measure', _snapshot)


def global_encrypt() -> DecomposableGlobalOp:
    return uniform('global-encrypt', _encrypt)


GLOBAL_OPS = {'record-only': record_only, 'snapshot-measure': snapshot_measure, 'global-encrypt': global_encrypt}


def build_library(gids: Iterable[str]) -> Dict[str, DecomposableGlobalOp]:
    library = {}
    for gid in gids:
        if gid not in GLOBAL_OPS: raise UnknownScenario(f"\nUnknown global operation '{gid}'")
        library[gid] = GLOBAL_OPS[gid]()
    return library


def parse_key(key: str) -> Dict[int, Tuple[int, int]]:
    if key in (BOTTOM, ''): return {}
    parsed = {}
    for part in key.split(','):
        rid, _, pair = part.partition('=')
        a, _, b = pair.partition('.')
        parsed[int(rid)] = (int(a), int(b))
    return parsed


def decrypt(rho: DensityMatrix, keys: Iterable[str]) -> DensityMatrix:
    """Undo one-time-pad keys on every register of rho they name
    """
    for key in keys:
        for rid, (a, b) in parse_key(key).items():
            if rid not in rho.space.ids: continue
            dim = rho.space.get(rid).dim
            inverse = weyl(dim, a, b).conj().T
            rho = qcore.apply_outcome(rho, QuantumOperation.from_unitary('decrypt', inverse, (dim,)), RegisterMap((rid,)), BOTTOM)
    return rho


def response_keys(response: Dict) -> Sequence[str]:
    """Every key recorded in a response: the processor's own and those of
    the messages recorded on its channels
    """
    return [response['self_outcome']] + [k for outcomes in response['channels'].values() for k in outcomes]
