# SPDX-License-Identifier: MIT-0

import os
import json
import logging
from typing import Any, Dict, List
import yaml
from .errors import ConfigError

DEFAULT_DIM_CAP = 4096
DEFAULT_FAIRNESS = 8
ALGORITHMS = ('empty', 'token-ring', 'teleport', 'gossip')
GLOBAL_OPS = ('snapshot-measure', 'global-encrypt', 'record-only')
SCHEDULERS = ('uniform-random', 'channel-delay-biased', 'round-robin', 'replay-from-trace')
STATE_LABELS = ('0', '1', 'plus', 'minus')

src_dir = os.path.abspath(os.path.dirname(os.path.dirname(__file__)))
root_dir = os.path.abspath(os.path.dirname(src_dir))


def processor_names(count: int) -> List[str]:
    """Names of the processors of an n-processor system
    """
    return [f'p{i}' for i in range(count)]


def min_fairness(processors: int) -> int:
    """Smallest receive deferral bound that holds when every channel,
    self-channels included, has a message waiting at once
    """
    return processors * processors - 1


def default_fairness(processors: int) -> int:
    return max(DEFAULT_FAIRNESS, min_fairness(processors))


def dim_cap(default: int = DEFAULT_DIM_CAP) -> int:
    """Dimension cap for the global register space, QGO_DIM_CAP wins
    over the configured value
    """
    override = os.environ.get('QGO_DIM_CAP')
    if override is None: return default
    if not override.isdigit() or int(override) == 0:
        raise ConfigError("\nInvalid input for 'QGO_DIM_CAP'")
    return int(override)


def encode(value: Any) -> str:
    """Deterministic text encoding of a classical datum
    """
    return json.dumps(value, sort_keys=True, separators=(',', ':'), ensure_ascii=False)


def configure_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING
    logging.basicConfig(level=level, format='%(asctime)s %(name)s %(levelname)s %(message)s')


def load_config(path: str = None) -> Dict:
    """Load and validate a scenario config file
    """
    path = path or f'{root_dir}/config.yml'
    try:
        with open(path, 'r') as file:
            config = yaml.safe_load(file)
    except OSError: raise ConfigError(f"\nCould not read config file '{path}'")
    except yaml.YAMLError as e: raise ConfigError(f"\nMalformed config file '{path}': {e}")
    validate_config_inputs(config)
    return config


def validate_config_inputs(config: Dict) -> None:
    """Validate all the user inputs provided in a scenario config file
    """
    if not isinstance(config, dict): raise ConfigError("\nInvalid input for config, expected a mapping")
    processors = config.get('processors')
    algorithm = config.get('algorithm')
    params = config.get('params', {})
    global_ops = config.get('global_ops', [])
    invocations = config.get('invocations', [])
    initial_state = config.get('initial_state', {})
    seed = config.get('seed', 0)

    # System
    if not isinstance(processors, int) or isinstance(processors, bool) or processors < 1:
        raise ConfigError("\nInvalid input for 'processors'")
    names = processor_names(processors)
    if algorithm not in ALGORITHMS: raise ConfigError("\nInvalid input for 'algorithm'")
    if not isinstance(params, dict): raise ConfigError("\nInvalid input for 'params'")
    if algorithm == 'teleport' and processors < 2: raise ConfigError("\nInvalid input for 'processors', teleport needs two")
    # Global operations
    if not isinstance(global_ops, list) or any(g not in GLOBAL_OPS for g in global_ops):
        raise ConfigError("\nInvalid input for 'global_ops'")
    if not isinstance(invocations, list): raise ConfigError("\nInvalid input for 'invocations'")
    for invocation in invocations:
        if not isinstance(invocation, dict): raise ConfigError("\nInvalid input for 'invocations'")
        if invocation.get('gid') not in global_ops: raise ConfigError("\nInvalid input for 'invocations.gid'")
        if invocation.get('leader') not in names: raise ConfigError("\nInvalid input for 'invocations.leader'")
        at_step = invocation.get('at_step', 0)
        if not isinstance(at_step, int) or at_step < 0: raise ConfigError("\nInvalid input for 'invocations.at_step'")
    steps = [invocation.get('at_step', 0) for invocation in invocations]
    if steps != sorted(steps): raise ConfigError("\nInvalid input for 'invocations', schedule must be sequential")
    # Initial state
    if not isinstance(initial_state, dict): raise ConfigError("\nInvalid input for 'initial_state'")
    for proc, labels in initial_state.get('product', {}).items():
        if proc not in names or not isinstance(labels, list) or any(str(l) not in STATE_LABELS for l in labels):
            raise ConfigError("\nInvalid input for 'initial_state.product'")
    for pair in initial_state.get('epr', []):
        if not isinstance(pair, list) or len(pair) != 2 or any(p not in names for p in pair):
            raise ConfigError("\nInvalid input for 'initial_state.epr'")
    # Scheduler
    if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64: raise ConfigError("\nInvalid input for 'seed'")
    if config.get('scheduler', 'uniform-random') not in SCHEDULERS: raise ConfigError("\nInvalid input for 'scheduler'")
    for field in ('dim_cap', 'fairness', 'max_events'):
        value = config.get(field)
        if value is not None and (not isinstance(value, int) or value < 1):
            raise ConfigError(f"\nInvalid input for '{field}'")
    if (config.get('fairness') or min_fairness(processors)) < min_fairness(processors):
        raise ConfigError(f"\nInvalid input for 'fairness', {processors} processors need at least {min_fairness(processors)}")
    if not isinstance(config.get('drain', True), bool): raise ConfigError("\nInvalid input for 'drain'")
