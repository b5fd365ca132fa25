# SPDX-License-Identifier: MIT-0

import json
from typing import Dict, Optional, Tuple
import numpy as np
from .common import encode, dim_cap
from .qcore import DensityMatrix, RegisterId, RegisterSpace
from .sysmodel import MessageInstance, SystemState, chan_key, parse_chan
from .execution import Execution, event_from_dict
from .scheduler import ScenarioConfig, build_scenario
from .errors import QgoError, TraceParseError

VERSION = 1


def _complex(value: complex) -> str:
    return f'{format(value.real, ".17g")},{format(value.imag, ".17g")}'


def _parse_complex(text: str) -> complex:
    real, imag = text.split(',')
    return complex(float(real), float(imag))


def serialize(execution: Execution, cfg: ScenarioConfig, certificate: Optional[Dict] = None) -> str:
    """Line-delimited records: header, initial state, events and an
    optional certificate
    """
    initial = execution.initial
    records = [{'record': 'header', 'version': VERSION, 'config': cfg.to_dict()}]
    for proc in initial.processors:
        records.append({'record': 'processor', 'name': proc, 'classical': initial.classical[proc]})
    for reg in initial.quantum.registers:
        records.append({'record': 'register', 'id': reg.id, 'dim': reg.dim, 'owner': initial.ownership[reg.id]})
    records.append({'record': 'space', 'registers': list(initial.quantum.space.ids)})
    for index, row in enumerate(initial.quantum.entries):
        records.append({'record': 'row', 'index': index, 'values': [_complex(v) for v in row]})
    for chan, msg in initial.in_flight():
        records.append({'record': 'message', 'chan': chan_key(chan), 'msg': msg.to_dict()})
    for event in execution.events:
        records.append({'record': 'event', **event.to_dict()})
    if certificate is not None:
        records.append({'record': 'certificate', **certificate})
    return ''.join(encode(r) + '\n' for r in records)


def parse(text: str, path: str = None) -> Tuple[ScenarioConfig, Execution, Optional[Dict]]:
    records = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip(): continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e: raise TraceParseError(number, f'malformed record: {e.msg}', path)
        if not isinstance(record, dict) or 'record' not in record:
            raise TraceParseError(number, 'record without a type', path)
        records.append((number, record))
    if not records or records[0][1]['record'] != 'header':
        raise TraceParseError(1, 'trace does not start with a header', path)
    number, header = records[0]
    if header.get('version') != VERSION: raise TraceParseError(number, f"unsupported version {header.get('version')}", path)
    try:
        cfg = ScenarioConfig.from_dict(header['config'])
        algorithm, _ = build_scenario(cfg)
    except (KeyError, QgoError) as e: raise TraceParseError(number, f'invalid config: {str(e).strip()}', path)

    processors, classical, registers, ownership = [], {}, {}, {}
    order, rows, messages, events, certificate = None, {}, [], [], None
    for number, record in records[1:]:
        kind = record['record']
        try:
            if kind == 'processor':
                processors.append(record['name'])
                classical[record['name']] = record['classical']
            elif kind == 'register':
                registers[record['id']] = RegisterId(record['id'], record['dim'])
                ownership[record['id']] = record['owner']
            elif kind == 'space': order = record['registers']
            elif kind == 'row': rows[record['index']] = [_parse_complex(v) for v in record['values']]
            elif kind == 'message': messages.append((parse_chan(record['chan']), MessageInstance.from_dict(record['msg'])))
            elif kind == 'event': events.append(event_from_dict({k: v for k, v in record.items() if k != 'record'}))
            elif kind == 'certificate': certificate = {k: v for k, v in record.items() if k != 'record'}
            else: raise TraceParseError(number, f"unknown record type '{kind}'", path)
        except TraceParseError: raise
        except (KeyError, TypeError, ValueError, QgoError) as e:
            raise TraceParseError(number, f'bad {kind} record: {str(e).strip()}', path)

    try:
        space = RegisterSpace(tuple(registers[r] for r in (order or [])), cap=dim_cap(cfg.dim_cap))
        entries = np.array([rows[i] for i in range(space.total_dim)], dtype=complex)
        channels = {(a, b): () for a in processors for b in processors}
        for chan, msg in messages:
            channels[chan] = channels[chan] + (msg,)
        initial = SystemState(tuple(processors), classical, {p: algorithm.initial_ext(p) for p in processors}, channels,
                              ownership, DensityMatrix(space, entries), frozenset(m.msg_id for _, m in messages))
        initial.check_ownership()
    except (KeyError, QgoError) as e:
        raise TraceParseError(len(text.splitlines()), f'inconsistent initial state: {str(e).strip()}', path)
    return cfg, Execution(initial, tuple(events), algorithm), certificate


def write_trace(path: str, execution: Execution, cfg: ScenarioConfig, certificate: Optional[Dict] = None) -> None:
    with open(path, 'w', encoding='utf-8') as file:
        file.write(serialize(execution, cfg, certificate))


def read_trace(path: str) -> Tuple[ScenarioConfig, Execution, Optional[Dict]]:
    with open(path, 'r', encoding='utf-8') as file:
        return parse(file.read(), path)
