# SPDX-License-Identifier: MIT-0

import os
import sys
from typing import List
import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

from helpers.execution import Event, Execution, IdAllocator  # noqa: E402
from helpers.qgo import qgo_receive  # noqa: E402
from helpers.scheduler import ScenarioConfig, build_scenario  # noqa: E402


@pytest.fixture(autouse=True)
def no_dim_cap_override(monkeypatch):
    monkeypatch.delenv('QGO_DIM_CAP', raising=False)


def scenario(**overrides) -> ScenarioConfig:
    config = {'processors': 2, 'algorithm': 'empty'}
    config.update(overrides)
    return ScenarioConfig.from_dict(config)


def epr_snapshot_config(**overrides) -> ScenarioConfig:
    config = {'processors': 2, 'algorithm': 'empty', 'global_ops': ['snapshot-measure'],
              'initial_state': {'epr': [['p0', 'p1']]},
              'invocations': [{'at_step': 0, 'gid': 'snapshot-measure', 'leader': 'p0'}]}
    config.update(overrides)
    return ScenarioConfig.from_dict(config)


class Driver:
    """Steps a scenario by hand: emit events, run protocol blocks and drain
    the channels in sorted order
    """

    def __init__(self, cfg: ScenarioConfig, seed: int = 0):
        self.algorithm, self.initial = build_scenario(cfg)
        self.state = self.initial
        self.ids = IdAllocator.after(self.initial)
        self.rng = np.random.default_rng(seed)
        self.events: List[Event] = []

    def record(self, events: List[Event], state) -> List[Event]:
        self.events.extend(events)
        self.state = state
        return events

    def drain(self) -> List[Event]:
        block = []
        while True:
            busy = [c for c in sorted(self.state.channels) if self.state.channels[c]]
            if not busy: return block
            chan = busy[0]
            block += self.record(*qgo_receive(self.state, chan[1], chan, self.algorithm, self.ids, self.rng))

    @property
    def execution(self) -> Execution:
        return Execution(self.initial, tuple(self.events), self.algorithm)
