# SPDX-License-Identifier: MIT-0

import json
import os
import numpy as np
import pytest
import yaml

import simulator
from helpers import qcore
from helpers.common import encode, load_config, root_dir, validate_config_inputs
from helpers.qcore import DensityMatrix, reduced_state
from helpers.sysmodel import states_equal
from helpers.execution import Apply, Respond, final_state
from helpers.qgo import OP_PROCESSOR, protocol_idle
from helpers.global_ops import build_library, decrypt, parse_key, response_keys
from helpers.scheduler import ScenarioConfig, Scheduler, SchedulerPolicy, build_scenario, run_simulation
from helpers.trace import parse, serialize
from helpers.verifier import verify
from helpers.errors import CapacityError, ConfigError, TraceParseError, UnknownScenario

from conftest import epr_snapshot_config, scenario

EMPTY = encode({'inbox': [], 'sent': []})
QUBITS = {'product': {'p0': ['plus', '1'], 'p1': ['minus']}, 'epr': [['p0', 'p2']]}


def encrypted_pair(gid, seed):
    return scenario(processors=3, global_ops=[gid], initial_state=QUBITS, seed=seed,
                    invocations=[{'at_step': 0, 'gid': gid, 'leader': 'p1'}])


class TestGlobalOperations:
    def test_snapshot_of_product_states(self):
        cfg = epr_snapshot_config(initial_state={'product': {'p0': ['0'], 'p1': ['1']}})
        outcomes = {e.proc: e.outcome for e in run_simulation(cfg).events if isinstance(e, Apply) and e.op == OP_PROCESSOR}
        assert outcomes == {'p0': f'{EMPTY}|0=0', 'p1': f'{EMPTY}|1=1'}

    @pytest.mark.parametrize('seed', range(5))
    def test_decryption_restores_the_state(self, seed):
        encrypted = run_simulation(encrypted_pair('global-encrypt', seed))
        plain = run_simulation(encrypted_pair('record-only', seed))
        keys = [k for e in encrypted.events if isinstance(e, Respond) for k in response_keys(e.response)]
        assert len(keys) == 3 and all(parse_key(k) for k in keys)
        restored = decrypt(final_state(encrypted).quantum, keys)
        restored = DensityMatrix(restored.space, restored.entries / restored.trace())
        assert qcore.states_close(restored, final_state(plain).quantum, 1e-9)

    def test_parse_key(self):
        assert parse_key('0=1.0,3=0.1') == {0: (1, 0), 3: (0, 1)}
        assert parse_key(qcore.BOTTOM) == {}

    @pytest.mark.parametrize('seed', range(6))
    def test_teleported_qubit(self, seed):
        execution = run_simulation(scenario(algorithm='teleport', seed=seed))
        state = final_state(execution)
        assert state.classical['p1']['corrected']
        local = reduced_state(state.quantum, [state.classical['p1']['half']])
        plus = np.full((2, 2), 0.5)
        np.testing.assert_allclose(local.entries / local.trace(), plus, atol=1e-9)

    def test_unknown_names(self):
        with pytest.raises(UnknownScenario):
            build_scenario(ScenarioConfig(processors=2, algorithm='quantum-chess'))
        with pytest.raises(UnknownScenario):
            build_library(['teleport-all'])


class TestConfig:
    @pytest.mark.parametrize('field,value', [('processors', 0), ('algorithm', 'chess'), ('global_ops', ['teleport-all']),
                                             ('seed', -1), ('fairness', 0), ('drain', 'yes')])
    def test_invalid_field(self, field, value):
        config = {'processors': 2, 'algorithm': 'empty', field: value}
        with pytest.raises(ConfigError) as error:
            validate_config_inputs(config)
        assert f"Invalid input for '{field}'" in str(error.value)

    def test_invocation_leader(self):
        config = {'processors': 2, 'algorithm': 'empty', 'global_ops': ['record-only'],
                  'invocations': [{'gid': 'record-only', 'leader': 'p5'}]}
        with pytest.raises(ConfigError):
            validate_config_inputs(config)

    def test_bundled_config(self):
        config = load_config()
        assert scenario(**config).algorithm == config['algorithm']

    def test_teleport_scenario(self):
        cfg = simulator.load_scenario(os.path.join(root_dir, 'scenarios', 'teleport.yml'), seed=5)
        assert cfg.scheduler == 'channel-delay-biased' and cfg.seed == 5
        assert verify(run_simulation(cfg)).accepted

    def test_capacity(self, monkeypatch):
        monkeypatch.setenv('QGO_DIM_CAP', '4')
        with pytest.raises(CapacityError):
            build_scenario(scenario(initial_state=QUBITS, processors=3))


class TestScheduler:
    @pytest.mark.parametrize('processors,policy,fairness', [(2, 'channel-delay-biased', 3), (3, 'channel-delay-biased', None),
                                                            (4, 'channel-delay-biased', 15), (4, 'uniform-random', None),
                                                            (3, 'round-robin', 8)])
    def test_receives_respect_the_fairness_bound(self, monkeypatch, processors, policy, fairness):
        waited = []
        pick = Scheduler.pick

        def recording_pick(scheduler, candidates):
            waited.extend(scheduler.deferred.get(c.key, 0) for c in candidates if c.kind == 'receive')
            return pick(scheduler, candidates)

        monkeypatch.setattr(Scheduler, 'pick', recording_pick)
        extra = {'fairness': fairness} if fairness else {}
        for seed in range(10):
            cfg = scenario(processors=processors, algorithm='gossip', params={'budget': 4}, scheduler=policy, seed=seed,
                           global_ops=['record-only'], invocations=[{'at_step': 5, 'gid': 'record-only', 'leader': 'p1'}],
                           **extra)
            run_simulation(cfg)
            assert waited and max(waited) <= cfg.fairness

    def test_default_fairness(self):
        assert scenario(processors=2).fairness == 8
        assert scenario(processors=4).fairness == 15

    def test_fairness_below_the_channel_count(self):
        with pytest.raises(ConfigError) as error:
            validate_config_inputs({'processors': 4, 'algorithm': 'gossip', 'fairness': 2})
        assert "Invalid input for 'fairness'" in str(error.value)

    @pytest.mark.parametrize('seed', range(10))
    def test_budget_without_drain(self, seed):
        cfg = scenario(processors=3, algorithm='token-ring', global_ops=['record-only'], seed=seed, max_events=8,
                       drain=False, invocations=[{'at_step': 6, 'gid': 'record-only', 'leader': 'p0'}])
        execution = run_simulation(cfg)
        assert sum(isinstance(e, Respond) for e in execution.events) == 3
        assert protocol_idle(final_state(execution))
        assert verify(execution).accepted

    def test_policy(self):
        assert SchedulerPolicy('round-robin', 3, 5).fairness == 5
        with pytest.raises(UnknownScenario):
            SchedulerPolicy('fifo')


class TestTraces:
    @pytest.mark.parametrize('cfg', [scenario(algorithm='teleport', global_ops=['global-encrypt'], seed=8,
                                              invocations=[{'at_step': 1, 'gid': 'global-encrypt', 'leader': 'p0'}]),
                                     scenario(processors=3, algorithm='token-ring', global_ops=['record-only'], seed=2,
                                              invocations=[{'at_step': 3, 'gid': 'record-only', 'leader': 'p2'}])])
    def test_round_trip(self, cfg):
        execution = run_simulation(cfg)
        text = serialize(execution, cfg)
        parsed_cfg, parsed, certificate = parse(text)
        assert certificate is None
        assert parsed_cfg == cfg
        assert parsed.events == execution.events
        assert states_equal(parsed.initial, execution.initial)
        assert serialize(parsed, parsed_cfg) == text

    def test_identical_runs_give_identical_traces(self):
        cfg = encrypted_pair('global-encrypt', 12)
        assert serialize(run_simulation(cfg), cfg) == serialize(run_simulation(cfg), cfg)

    def test_replay_from_trace(self):
        cfg = scenario(processors=3, algorithm='gossip', seed=4, initial_state=QUBITS)
        execution = run_simulation(cfg)
        replayed = run_simulation(scenario(processors=3, algorithm='gossip', scheduler='replay-from-trace',
                                           initial_state=QUBITS), execution.events)
        assert states_equal(final_state(replayed), final_state(execution))

    @pytest.mark.parametrize('text,line', [('', 1), ('{"record": "event"}\n', 1), ('not json\n', 1)])
    def test_malformed(self, text, line):
        with pytest.raises(TraceParseError) as error:
            parse(text)
        assert error.value.line == line

    def test_bad_record_line(self):
        cfg = epr_snapshot_config()
        lines = serialize(run_simulation(cfg), cfg).splitlines()
        lines[4] = '{"record": "row", "index": 0}'
        with pytest.raises(TraceParseError) as error:
            parse('\n'.join(lines))
        assert error.value.line == 5


def write_config(tmp_path, **overrides):
    config = {'processors': 2, 'algorithm': 'empty', 'global_ops': ['snapshot-measure'],
              'initial_state': {'epr': [['p0', 'p1']]}, 'invocations': [{'at_step': 0, 'gid': 'snapshot-measure', 'leader': 'p0'}]}
    config.update(overrides)
    path = tmp_path / 'config.yml'
    path.write_text(yaml.safe_dump(config))
    return str(path)


class TestCommandLine:
    def test_run_then_verify(self, tmp_path, capsys):
        trace = str(tmp_path / 'run.trace')
        assert simulator.main(['run', '--config', write_config(tmp_path), '--seed', '3', '--out', trace]) == 0
        certified = str(tmp_path / 'certified.trace')
        assert simulator.main(['verify', '--trace', trace, '--out', certified]) == simulator.EXIT_ACCEPTED
        out = capsys.readouterr().out
        assert 'Accepted with' in out and '** Total execution time' in out
        records = [json.loads(line) for line in open(certified, encoding='utf-8')]
        assert records[-1]['record'] == 'certificate' and records[-1]['accepted']

    def test_corrupted_trace(self, tmp_path, capsys):
        trace = tmp_path / 'run.trace'
        config = write_config(tmp_path, algorithm='token-ring', global_ops=['record-only'],
                              invocations=[{'at_step': 2, 'gid': 'record-only', 'leader': 'p1'}])
        assert simulator.main(['run', '--config', config, '--out', str(trace)]) == 0
        lines = trace.read_text(encoding='utf-8').splitlines()
        first = next(i for i, line in enumerate(lines) if json.loads(line)['record'] == 'event')
        receipt = next(i for i, line in enumerate(lines) if json.loads(line).get('kind') == 'receive')
        lines.insert(first, lines.pop(receipt))
        trace.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        assert simulator.main(['verify', '--trace', str(trace)]) == simulator.EXIT_REJECTED
        assert 'Rejected at validate' in capsys.readouterr().err

    def test_malformed_trace(self, tmp_path, capsys):
        trace = tmp_path / 'run.trace'
        assert simulator.main(['run', '--config', write_config(tmp_path), '--out', str(trace)]) == 0
        lines = trace.read_text(encoding='utf-8').splitlines()
        lines[2] = lines[2][:-3]
        trace.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        assert simulator.main(['verify', '--trace', str(trace)]) == simulator.EXIT_ERROR
        assert f'{trace}:3' in capsys.readouterr().err

    def test_batch(self, tmp_path, capsys):
        assert simulator.main(['batch', '--config', write_config(tmp_path), '--seeds', '0..3', '--jobs', '2']) == 0
        assert 'Total Runs: 4, Accepted Runs: 4' in capsys.readouterr().out

    def test_inspect(self, tmp_path, capsys):
        trace = str(tmp_path / 'run.trace')
        simulator.main(['run', '--config', write_config(tmp_path), '--out', trace])
        capsys.readouterr()
        assert simulator.main(['inspect', '--trace', trace]) == 0
        out = capsys.readouterr().out
        assert 'Causality edges' in out and 'invoke' in out

    def test_bad_config(self, tmp_path, capsys):
        trace = str(tmp_path / 'run.trace')
        assert simulator.main(['run', '--config', write_config(tmp_path, processors=0), '--out', trace]) == simulator.EXIT_ERROR
        assert "Invalid input for 'processors'" in capsys.readouterr().err

    @pytest.mark.parametrize('text,expected', [('4', range(4, 5)), ('0..2', range(0, 3))])
    def test_parse_seeds(self, text, expected):
        assert simulator.parse_seeds(text) == expected

    @pytest.mark.parametrize('text', ['a..b', '5..2', ''])
    def test_bad_seeds(self, text):
        with pytest.raises(ValueError):
            simulator.parse_seeds(text)
