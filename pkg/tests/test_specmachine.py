# SPDX-License-Identifier: MIT-0

import pytest

from helpers.common import encode
from helpers.execution import AtomicExecute, Execution, Invoke, Respond
from helpers.scheduler import build_scenario
from helpers.specmachine import SpecAlgorithm, SpecExt, spec_step, validate_spec_execution
from helpers.errors import SpecViolation

from conftest import epr_snapshot_config

GID = 'snapshot-measure'
PREFIX = encode({'inbox': [], 'sent': []})


@pytest.fixture
def machine():
    algorithm, initial = build_scenario(epr_snapshot_config())
    spec = SpecAlgorithm(algorithm.base, algorithm.library)
    return spec, initial.replace(ext={p: None for p in initial.processors})


def atomic(p1_value='0', eid=1, **outcomes):
    processor_outcomes = outcomes or {'p0': f'{PREFIX}|0=0', 'p1': f'{PREFIX}|1={p1_value}'}
    return AtomicExecute(eid, 'p0', GID, processor_outcomes, {})


class TestAtomicExecution:
    def test_responses_follow_the_records(self, machine):
        spec, state = machine
        events = [Invoke(0, 'p0', GID), atomic()]
        for event in events: state = spec_step(state, event, spec)
        assert state.ext['p0'] == SpecExt(GID, {'processor': 'p0', 'gid': GID, 'self_outcome': f'{PREFIX}|0=0',
                                                'channels': {'p0>p0': [], 'p1>p0': []}})
        assert state.quantum.trace() == pytest.approx(0.5)
        responses = [Respond(2, 'p0', state.ext['p0'].record), Respond(3, 'p1', state.ext['p1'].record)]
        for event in responses: state = spec_step(state, event, spec)
        assert state.ext == {'p0': None, 'p1': None}
        execution = Execution(machine[1], tuple(events + responses), spec)
        assert validate_spec_execution(execution).valid

    def test_anti_correlated_outcomes(self, machine):
        spec, state = machine
        state = spec_step(state, Invoke(0, 'p0', GID), spec)
        with pytest.raises(SpecViolation):
            spec_step(state, atomic('1'), spec)

    def test_outcomes_must_cover_every_processor(self, machine):
        spec, state = machine
        state = spec_step(state, Invoke(0, 'p0', GID), spec)
        with pytest.raises(SpecViolation):
            spec_step(state, atomic(p0=f'{PREFIX}|0=0'), spec)

    def test_atomic_needs_an_invocation(self, machine):
        spec, state = machine
        with pytest.raises(SpecViolation):
            spec_step(state, atomic(), spec)


class TestGuards:
    def test_wrong_response(self, machine):
        spec, state = machine
        for event in (Invoke(0, 'p0', GID), atomic()):
            state = spec_step(state, event, spec)
        forged = {**state.ext['p1'].record, 'self_outcome': f'{PREFIX}|1=1'}
        with pytest.raises(SpecViolation):
            spec_step(state, Respond(2, 'p1', forged), spec)

    def test_response_before_atomic(self, machine):
        spec, state = machine
        state = spec_step(state, Invoke(0, 'p0', GID), spec)
        with pytest.raises(SpecViolation):
            spec_step(state, Respond(1, 'p0', None), spec)

    def test_concurrent_invocations(self, machine):
        spec, initial = machine
        execution = Execution(initial, (Invoke(0, 'p0', GID), Invoke(1, 'p1', GID)), spec)
        result = validate_spec_execution(execution)
        assert not result.valid and result.index == 1

    def test_unknown_operation(self, machine):
        spec, state = machine
        with pytest.raises(SpecViolation):
            spec_step(state, Invoke(0, 'p0', 'global-encrypt'), spec)
