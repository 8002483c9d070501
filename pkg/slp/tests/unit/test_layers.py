import numpy as np
import pytest

from slp import layers
from slp import tensor as tn
from slp.exceptions import DimensionError
from slp.params import ModelParams


@pytest.fixture
def store():
    return ModelParams()


class TestLinearLayer(object):

    def test_registers_weight_and_bias(self, store, rng):
        layers.LinearLayer.create(store, 'sl.proj', 6, 4, rng)
        assert store['sl.proj.W'].shape == [4, 6]
        assert store['sl.proj.b'].shape == [4]
        assert store.scheme('sl.proj.W') == 'xavier_uniform'

    def test_without_bias(self, store, rng):
        layers.LinearLayer.create(store, 'sl.proj', 6, 4, rng, bias=None)
        assert 'sl.proj.b' not in store

    def test_bind_sees_registered_values(self, store, rng):
        created = layers.LinearLayer.create(store, 'sl.proj', 3, 2, rng)
        bound = layers.LinearLayer.bind(store, 'sl.proj')
        x = rng.standard_normal((5, 3))
        assert np.array_equal(created(x).data, bound(x).data)

    def test_matches_numpy(self, store, rng):
        layer = layers.LinearLayer.create(store, 'sl.proj', 3, 2, rng, bias='bias_uniform')
        x = rng.standard_normal(3)
        expected = layer.W.data.dot(x) + layer.b.data
        assert np.allclose(layer(x).data, expected)

    def test_width_mismatch(self, store, rng):
        layer = layers.LinearLayer.create(store, 'sl.proj', 3, 2, rng)
        with pytest.raises(DimensionError):
            layer(np.ones(4))


class TestMLP3(object):

    def test_rejects_width_not_divisible_by_four(self, store, rng):
        with pytest.raises(DimensionError):
            layers.MLP3.create(store, 'bp.head', 6, rng)

    def test_vector_gives_scalar(self, store, rng):
        head = layers.MLP3.create(store, 'bp.head', 8, rng)
        out = head(rng.standard_normal(8))
        assert out.shape == []
        assert 0 < out.item() < 1

    def test_matrix_gives_one_score_per_row(self, store, rng):
        head = layers.MLP3.create(store, 'bp.head', 8, rng)
        out = head(rng.standard_normal((5, 8)) * 10).data
        assert out.shape == (5,)
        assert ((out > 0) & (out < 1)).all()

    def test_layer_widths(self, store, rng):
        layers.MLP3.create(store, 'bp.head', 16, rng)
        assert store['bp.head.fc1.W'].shape == [8, 16]
        assert store['bp.head.fc2.W'].shape == [4, 8]
        assert store['bp.head.fc3.W'].shape == [1, 4]


class TestSelfAttention(object):

    def test_heads_must_divide_width(self, store, rng):
        with pytest.raises(DimensionError):
            layers.AttentionBlock.create(store, 'sl.att', 8, 3, rng)

    def test_shape_is_kept(self, store, rng):
        block = layers.AttentionBlock.create(store, 'sl.att', 8, 2, rng)
        assert layers.self_attention(rng.standard_normal((7, 8)), block).shape == [7, 8]

    def test_weights_are_row_stochastic(self, store, rng):
        block = layers.AttentionBlock.create(store, 'sl.att', 8, 4, rng)
        _, weights = layers.self_attention(rng.standard_normal((5, 8)), block, return_weights=True)
        assert len(weights) == 4
        for w in weights:
            assert np.allclose(w.data.sum(axis=1), 1.0)

    def test_permutation_equivariance(self, store, rng):
        block = layers.AttentionBlock.create(store, 'sl.att', 8, 2, rng)
        X = rng.standard_normal((6, 8))
        permutation = rng.permutation(6)
        permuted = layers.self_attention(X[permutation], block).data
        assert np.allclose(permuted, layers.self_attention(X, block).data[permutation], atol=1e-12)

    def test_single_row(self, store, rng):
        block = layers.AttentionBlock.create(store, 'sl.att', 8, 2, rng)
        assert layers.self_attention(rng.standard_normal((1, 8)), block).shape == [1, 8]


class TestGRU(object):

    def test_state_shapes(self, store, rng):
        cell = layers.GRUCell.create(store, 'sl.cell', 8, 4, rng)
        assert cell.run(tn.Tensor(rng.standard_normal((5, 8)))).shape == [5, 4]
        assert 'sl.cell.update_in.b' in store
        assert 'sl.cell.update_hidden.b' not in store

    def test_states_stay_bounded(self, store, rng):
        cell = layers.GRUCell.create(store, 'sl.cell', 8, 4, rng)
        states = cell.run(tn.Tensor(rng.standard_normal((9, 8)) * 50)).data
        assert (np.abs(states) <= 1).all()

    def test_unrolled_equations(self, store, rng):
        cell = layers.GRUCell.create(store, 'sl.cell', 5, 3, rng)
        for gate in layers.GRUCell.GATES:
            store['sl.cell.%s_in.b' % gate].data[...] = rng.uniform(-0.5, 0.5, 3)
        X = rng.standard_normal((3, 5))

        def W(gate, kind):
            return store['sl.cell.%s_%s.W' % (gate, kind)].data

        def b(gate):
            return store['sl.cell.%s_in.b' % gate].data

        h = np.zeros(3)
        expected = []
        for x in X:
            z = 1.0 / (1.0 + np.exp(-(W('update', 'in').dot(x) + b('update') + W('update', 'hidden').dot(h))))
            r = 1.0 / (1.0 + np.exp(-(W('reset', 'in').dot(x) + b('reset') + W('reset', 'hidden').dot(h))))
            n = np.tanh(W('candidate', 'in').dot(x) + b('candidate') + W('candidate', 'hidden').dot(r * h))
            h = (1.0 - z) * n + z * h
            expected.append(h)
        assert np.allclose(cell.run(tn.Tensor(X)).data, np.array(expected), atol=1e-12)

    def test_zero_input_and_biases_stay_at_zero(self, store, rng):
        cell = layers.GRUCell.create(store, 'sl.cell', 6, 4, rng)
        for gate in layers.GRUCell.GATES:
            store['sl.cell.%s_in.b' % gate].data[...] = 0.0
        states = cell.run(tn.Tensor(np.zeros((5, 6)))).data
        assert np.array_equal(states, np.zeros((5, 4)))
        assert np.array_equal(cell.run(tn.Tensor(np.zeros((5, 6))), reverse=True).data, np.zeros((5, 4)))

    def test_reverse_walk_is_forward_walk_of_reversed_input(self, store, rng):
        cell = layers.GRUCell.create(store, 'sl.cell', 8, 4, rng)
        X = rng.standard_normal((6, 8))
        backwards = cell.run(tn.Tensor(X), reverse=True).data
        reversed_input = cell.run(tn.Tensor(X[::-1].copy())).data
        assert np.allclose(backwards, reversed_input[::-1], atol=1e-12)

    def test_first_state_only_depends_on_first_frame(self, store, rng):
        cell = layers.GRUCell.create(store, 'sl.cell', 8, 4, rng)
        X = rng.standard_normal((4, 8))
        changed = X.copy()
        changed[3] += 1.0
        assert np.allclose(cell.run(tn.Tensor(X)).data[0], cell.run(tn.Tensor(changed)).data[0])

    def test_bigru_concatenates_directions(self, store, rng):
        layer = layers.BiGRULayer.create(store, 'sl.gru', 8, rng)
        X = tn.Tensor(rng.standard_normal((5, 8)))
        out = layers.bigru(X, layer).data
        assert out.shape == (5, 8)
        assert np.allclose(out[:, :4], layer.forward.run(X).data)
        assert np.allclose(out[:, 4:], layer.backward.run(X, reverse=True).data)

    def test_bigru_width_must_be_even(self, store, rng):
        with pytest.raises(DimensionError):
            layers.BiGRULayer.create(store, 'sl.gru', 7, rng)
