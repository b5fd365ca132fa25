# SPDX-License-Identifier: MIT-0

import pytest

from helpers.common import encode
from helpers.qcore import BOTTOM
from helpers.sysmodel import MessageInstance, view
from helpers.execution import Apply, Invoke, MessageApply, Receive, Respond, Send, TransitionPredicate, emit, validate
from helpers.qgo import (OP_PROCESSOR, OP_RECORD, marker_message, protocol_idle, qgo_invoke,
                         qgo_process_new_global_op, qgo_receive)
from helpers.errors import AlreadyActive, ConcurrentInvocation, UnknownGlobalOp

from conftest import Driver, epr_snapshot_config, scenario

TOKEN = {'class': 'token', 'hop': 1}


def token_ring_driver(seed=0):
    cfg = scenario(algorithm='token-ring', params={'max_hops': 1, 'ticks': 0}, global_ops=['record-only'])
    return Driver(cfg, seed)


def send_token(driver):
    event = Send(driver.ids.event_id(), 'p0', 'p1', MessageInstance(driver.ids.message_id(), TOKEN))
    event, state = emit(driver.state, event, driver.algorithm, driver.rng, driver.ids)
    return driver.record([event], state)


@pytest.fixture
def snapshot():
    driver = Driver(epr_snapshot_config(), seed=4)
    driver.record(*qgo_invoke(driver.state, 'p0', 'snapshot-measure', driver.algorithm, driver.ids, driver.rng))
    driver.drain()
    return driver


class TestMarkers:
    def test_marker_message(self):
        marker = marker_message('m3', 'record-only')
        assert marker.is_marker and marker.marker_gid == 'record-only'
        assert marker.quantum_regs == ()

    def test_flooding(self, snapshot):
        markers = [e for e in snapshot.events if isinstance(e, Send) and e.message.is_marker]
        assert len(markers) == 4
        assert {(e.proc, e.dest) for e in markers} == {('p0', 'p0'), ('p0', 'p1'), ('p1', 'p0'), ('p1', 'p1')}
        assert protocol_idle(snapshot.state)


class TestSnapshot:
    def test_one_component_per_processor(self, snapshot):
        applied = [e for e in snapshot.events if isinstance(e, Apply) and e.op == OP_PROCESSOR]
        assert sorted(e.proc for e in applied) == ['p0', 'p1']

    def test_responses(self, snapshot):
        responses = {e.proc: e.response for e in snapshot.events if isinstance(e, Respond)}
        assert set(responses) == {'p0', 'p1'}
        for response in responses.values():
            assert response['gid'] == 'snapshot-measure'
            assert all(outcomes == [] for outcomes in response['channels'].values())

    def test_epr_outcomes_are_correlated(self, snapshot):
        outcomes = {e.proc: e.outcome for e in snapshot.events if isinstance(e, Apply) and e.op == OP_PROCESSOR}
        prefix = encode({'inbox': [], 'sent': []})
        assert outcomes['p0'] in (f'{prefix}|0=0', f'{prefix}|0=1')
        assert outcomes['p0'][-1] == outcomes['p1'][-1]

    def test_execution_is_valid(self, snapshot):
        assert validate(TransitionPredicate(snapshot.algorithm), snapshot.execution).valid


class TestRecording:
    def test_message_in_flight_is_recorded(self):
        driver = token_ring_driver()
        send_token(driver)
        driver.record(*qgo_invoke(driver.state, 'p1', 'record-only', driver.algorithm, driver.ids, driver.rng))
        block = driver.record(*qgo_receive(driver.state, 'p1', ('p0', 'p1'), driver.algorithm, driver.ids, driver.rng))
        assert [type(e) for e in block] == [Receive, MessageApply, Apply]
        assert block[2].op == OP_RECORD
        assert dict(driver.state.ext['p1'].records)['p0>p1'] == (encode(TOKEN),)
        driver.drain()
        response = next(e.response for e in driver.events if isinstance(e, Respond) and e.proc == 'p1')
        assert response['channels'] == {'p0>p1': [encode(TOKEN)], 'p1>p1': []}
        assert validate(TransitionPredicate(driver.algorithm), driver.execution).valid

    def test_channel_after_marker_is_not_recorded(self):
        driver = token_ring_driver()
        driver.record(*qgo_invoke(driver.state, 'p0', 'record-only', driver.algorithm, driver.ids, driver.rng))
        send_token(driver)
        driver.drain()
        response = next(e.response for e in driver.events if isinstance(e, Respond) and e.proc == 'p1')
        assert response['channels'] == {'p0>p1': [], 'p1>p1': []}


class TestProtocolErrors:
    def test_concurrent_invocation(self):
        driver = token_ring_driver()
        driver.record(*qgo_invoke(driver.state, 'p0', 'record-only', driver.algorithm, driver.ids, driver.rng))
        with pytest.raises(ConcurrentInvocation):
            qgo_invoke(driver.state, 'p1', 'record-only', driver.algorithm, driver.ids, driver.rng)

    def test_already_active(self):
        driver = token_ring_driver()
        driver.record(*qgo_invoke(driver.state, 'p0', 'record-only', driver.algorithm, driver.ids, driver.rng))
        with pytest.raises(AlreadyActive):
            qgo_process_new_global_op(driver.state, 'p0', 'record-only', None, driver.algorithm, driver.ids, driver.rng)

    def test_unknown_operation(self):
        driver = token_ring_driver()
        with pytest.raises(UnknownGlobalOp):
            qgo_invoke(driver.state, 'p0', 'global-encrypt', driver.algorithm, driver.ids, driver.rng)


class TestPredicate:
    def test_base_steps_wait_for_the_block(self):
        driver = token_ring_driver()
        invoke = Invoke(driver.ids.event_id(), 'p0', 'record-only')
        _, state = emit(driver.state, invoke, driver.algorithm, driver.rng, driver.ids)
        send = Send(99, 'p0', 'p1', MessageInstance('m9', TOKEN))
        assert driver.algorithm.base.local_predicate(view(driver.state, 'p0'), send, view(driver.state, 'p0'))
        assert not driver.algorithm.local_predicate(view(state, 'p0'), send, view(state, 'p0'))

    def test_response_must_match_the_records(self, snapshot):
        respond = next(e for e in snapshot.events if isinstance(e, Respond))
        forged = Respond(respond.eid, respond.proc, {**respond.response, 'self_outcome': BOTTOM})
        position = snapshot.events.index(respond)
        events = tuple(snapshot.events[:position]) + (forged,) + tuple(snapshot.events[position + 1:])
        result = validate(TransitionPredicate(snapshot.algorithm), snapshot.execution.with_events(events))
        assert not result.valid and result.index == position
