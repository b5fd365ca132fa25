# SPDX-License-Identifier: MIT-0

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from helpers import qcore
from helpers.qcore import (BOTTOM, EPR_VECTOR, HADAMARD, STATE_VECTORS, DensityMatrix, QuantumOperation, RegisterId,
                           RegisterMap, RegisterSpace, apply_outcome, canonical_form, outcome_probabilities,
                           partial_trace, reduced_state, sample_outcome, states_close, tensor_product, validate_operation, weyl)
from helpers.errors import (BadOutcome, CapacityError, ConfigError, IdCollision, ShapeError, UnknownRegister,
                            ZeroProbabilityHistory)

MEASURE = QuantumOperation.measurement('m', (2,))


def qubits(*ids):
    return RegisterSpace(tuple(RegisterId(i, 2) for i in ids))


def epr(a=0, b=1):
    return DensityMatrix.from_vector(qubits(a, b), EPR_VECTOR)


def random_state(rng, space):
    d = space.total_dim
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return DensityMatrix(space, rho / np.trace(rho))


def random_channel(rng, name, dims, outcomes=2, rank=2):
    """Random instrument: a random isometry cut into Kraus blocks shared out
    between the outcomes
    """
    d = int(np.prod(dims))
    g = rng.normal(size=(d * rank * outcomes, d)) + 1j * rng.normal(size=(d * rank * outcomes, d))
    isometry, _ = np.linalg.qr(g)
    blocks = [isometry[k * d:(k + 1) * d, :] for k in range(rank * outcomes)]
    kraus = {str(r): tuple(blocks[r * rank:(r + 1) * rank]) for r in range(outcomes)}
    return QuantumOperation(name, dims, dims, kraus)


class TestRegisterSpace:
    def test_duplicate_ids(self):
        with pytest.raises(IdCollision):
            RegisterSpace((RegisterId(0), RegisterId(0)))

    def test_capacity(self):
        with pytest.raises(CapacityError):
            RegisterSpace((RegisterId(0, 4), RegisterId(1, 4)), cap=8)

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv('QGO_DIM_CAP', '4')
        with pytest.raises(CapacityError):
            qubits(0, 1, 2)
        monkeypatch.setenv('QGO_DIM_CAP', 'lots')
        with pytest.raises(ConfigError):
            qubits(0)

    def test_unknown_register(self):
        with pytest.raises(UnknownRegister):
            qubits(0, 1).index(7)

    def test_dims_and_ids(self):
        space = RegisterSpace((RegisterId(3, 2), RegisterId(1, 3)))
        assert space.total_dim == 6
        assert space.ids == (3, 1)
        assert space.get(1).dim == 3


class TestEprMeasurement:
    def test_outcome_zero(self):
        post = apply_outcome(epr(), MEASURE, RegisterMap((0,)), '0')
        expected = np.zeros((4, 4))
        expected[0, 0] = 0.5
        assert abs(post.trace() - 0.5) <= 1e-12
        np.testing.assert_allclose(post.entries, expected, atol=1e-12)

    def test_outcome_one(self):
        post = apply_outcome(epr(), MEASURE, RegisterMap((0,)), '1')
        expected = np.zeros((4, 4))
        expected[3, 3] = 0.5
        assert abs(post.trace() - 0.5) <= 1e-12
        np.testing.assert_allclose(post.entries, expected, atol=1e-12)

    def test_local_state_is_maximally_mixed(self):
        local = partial_trace(epr(), [1])
        assert local.space.ids == (0,)
        np.testing.assert_allclose(local.entries, np.eye(2) / 2, atol=1e-12)

    def test_probabilities(self):
        probabilities = outcome_probabilities(epr(), MEASURE, RegisterMap((1,)))
        assert probabilities == pytest.approx({'0': 0.5, '1': 0.5}, abs=1e-12)

    def test_second_measurement_is_correlated(self):
        post = apply_outcome(epr(), MEASURE, RegisterMap((0,)), '1')
        assert outcome_probabilities(post, MEASURE, RegisterMap((1,)))['0'] == pytest.approx(0.0, abs=1e-12)


class TestSampling:
    def test_epr_frequency(self):
        rng = np.random.default_rng(2024)
        draws = [sample_outcome(epr(), MEASURE, RegisterMap((0,)), rng)[0] for _ in range(10000)]
        assert 0.48 <= draws.count('0') / len(draws) <= 0.52

    def test_post_state_is_not_renormalized(self):
        outcome, post = sample_outcome(epr(), MEASURE, RegisterMap((0,)), np.random.default_rng(1))
        assert post.trace() == pytest.approx(0.5, abs=1e-12)
        assert outcome_probabilities(post, MEASURE, RegisterMap((1,)))[outcome] == pytest.approx(1.0, abs=1e-12)

    def test_single_outcome(self):
        rng = np.random.default_rng(7)
        identity = QuantumOperation.identity((2,))
        for _ in range(20):
            outcome, post = sample_outcome(epr(), identity, RegisterMap((1,)), rng)
            assert outcome == BOTTOM
            np.testing.assert_allclose(post.entries, epr().entries, atol=1e-12)

    @given(st.integers(min_value=0, max_value=2 ** 32))
    @settings(max_examples=20, deadline=None)
    def test_seed_determinism(self, seed):
        def outcomes():
            rng = np.random.default_rng(seed)
            return [sample_outcome(epr(), MEASURE, RegisterMap((i % 2,)), rng)[0] for i in range(30)]
        assert outcomes() == outcomes()


class TestDensityMatrix:
    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            DensityMatrix(qubits(0), np.eye(4))

    def test_entries_are_read_only(self):
        with pytest.raises(ValueError):
            epr().entries[0, 0] = 1

    def test_check(self):
        assert epr().check() == []
        bad = DensityMatrix(qubits(0), np.array([[1, 1], [0, 0]]))
        assert any('hermitian' in f for f in bad.check())

    def test_empty_space(self):
        rho = DensityMatrix.empty()
        assert rho.trace() == 1.0
        assert rho.space.total_dim == 1


class TestOperations:
    def test_unknown_outcome(self):
        with pytest.raises(BadOutcome):
            apply_outcome(epr(), MEASURE, RegisterMap((0,)), '2')

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            apply_outcome(epr(), QuantumOperation.measurement('m', (4,)), RegisterMap((0,)), '0')

    def test_map_must_be_injective(self):
        with pytest.raises(ShapeError):
            RegisterMap((0, 0))

    def test_preparation_needs_output_registers(self):
        prepare = QuantumOperation.preparation('prep', STATE_VECTORS['1'], (2,))
        rho = DensityMatrix.from_vector(qubits(0), STATE_VECTORS['0'])
        with pytest.raises(ShapeError):
            apply_outcome(rho, prepare, RegisterMap(()), BOTTOM)
        post = apply_outcome(rho, prepare, RegisterMap(()), BOTTOM, (RegisterId(5, 2),))
        assert post.space.ids == (0, 5)
        np.testing.assert_allclose(post.entries, np.diag([0, 1, 0, 0]), atol=1e-12)

    def test_discard_is_partial_trace(self):
        rho = epr()
        discarded = apply_outcome(rho, QuantumOperation.discard('drop', (2,)), RegisterMap((1,)), BOTTOM, ())
        np.testing.assert_allclose(discarded.entries, partial_trace(rho, [1]).entries, atol=1e-12)

    def test_validate_operation(self):
        assert validate_operation(MEASURE).valid
        half = QuantumOperation('half', (2,), (2,), {BOTTOM: (np.eye(2) / 2,)})
        report = validate_operation(half)
        assert not report.valid and not report.trace_preserving
        assert report.deviation == pytest.approx(0.75)

    def test_measurement_labels(self):
        assert QuantumOperation.measurement('m', (2, 2)).outcome_set == ('00', '01', '10', '11')

    def test_unitary_keeps_order(self):
        rho = tensor_product(DensityMatrix.from_vector(qubits(0), STATE_VECTORS['0']),
                             DensityMatrix.from_vector(qubits(1), STATE_VECTORS['0']))
        post = apply_outcome(rho, QuantumOperation.from_unitary('h', HADAMARD, (2,)), RegisterMap((1,)), BOTTOM)
        assert post.space.ids == (0, 1)
        expected = np.kron(np.diag([1, 0]), np.full((2, 2), 0.5))
        np.testing.assert_allclose(post.entries, expected, atol=1e-12)

    def test_zero_trace_history(self):
        rho = DensityMatrix(qubits(0), np.zeros((2, 2)))
        with pytest.raises(ZeroProbabilityHistory):
            qcore.choose_outcome(rho, MEASURE, RegisterMap((0,)), np.random.default_rng(0))


class TestReducedStates:
    def test_reduced_state_order(self):
        rho = tensor_product(DensityMatrix.from_vector(qubits(0), STATE_VECTORS['0']),
                             DensityMatrix.from_vector(qubits(1), STATE_VECTORS['1']))
        swapped = reduced_state(rho, [1, 0])
        assert swapped.space.ids == (1, 0)
        assert swapped.entries[2, 2] == pytest.approx(1.0)

    def test_canonical_form(self):
        a = DensityMatrix.from_vector(qubits(1), STATE_VECTORS['plus'])
        b = DensityMatrix.from_vector(qubits(0), STATE_VECTORS['1'])
        assert canonical_form(tensor_product(a, b)).space.ids == (0, 1)
        assert states_close(tensor_product(a, b), tensor_product(b, a), 0.0)

    def test_states_close_needs_same_registers(self):
        assert not states_close(epr(0, 1), epr(0, 2))


class TestWeyl:
    def test_qubit_paulis(self):
        np.testing.assert_array_equal(weyl(2, 1, 0), np.array([[0, 1], [1, 0]]))
        np.testing.assert_array_equal(weyl(2, 0, 1), np.diag([1, -1]))

    @pytest.mark.parametrize('d', [2, 3, 4])
    def test_unitary(self, d):
        for a in range(d):
            for b in range(d):
                w = weyl(d, a, b)
                np.testing.assert_allclose(w @ w.conj().T, np.eye(d), atol=1e-12)


class TestCommutation:
    def _check_pair(self, rng):
        n = int(rng.integers(2, 5))
        space = qubits(*range(n))
        rho = random_state(rng, space)
        ids = list(rng.permutation(n))
        split = int(rng.integers(1, n))
        first, second = ids[:split], ids[split:]
        if len(first) > 2: first = first[:2]
        if len(second) > 2: second = second[:2]
        a = random_channel(rng, 'a', (2,) * len(first))
        b = random_channel(rng, 'b', (2,) * len(second))
        ra, rb = str(rng.integers(2)), str(rng.integers(2))
        one = apply_outcome(apply_outcome(rho, a, RegisterMap(first), ra), b, RegisterMap(second), rb)
        two = apply_outcome(apply_outcome(rho, b, RegisterMap(second), rb), a, RegisterMap(first), ra)
        np.testing.assert_allclose(one.entries, two.entries, atol=1e-12)

    def test_disjoint_operations_commute(self):
        rng = np.random.default_rng(2024)
        for _ in range(500):
            self._check_pair(rng)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_disjoint_operations_commute_any_seed(self, seed):
        self._check_pair(np.random.default_rng(seed))

    def test_random_channels_are_valid(self):
        rng = np.random.default_rng(1)
        assert validate_operation(random_channel(rng, 'c', (2, 2))).valid
