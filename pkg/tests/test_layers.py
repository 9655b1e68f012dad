import numpy as np
import pytest

from causalmec.graphs import Dag, Skeleton, skeleton_of
from causalmec.nn import tensor as T
from causalmec.nn.layers import (
    ParamStore,
    attention,
    attention_init,
    encoder_layer,
    encoder_layer_init,
    layer_norm,
    layer_norm_init,
    linear,
    linear_init,
    mlp,
    mlp_init,
)
from causalmec.nn.losses import (
    masked_bce,
    node_edge_loss,
    skeleton_labels,
    skeleton_loss,
    ut_mask,
    vstruct_labels,
    vstruct_loss,
)
from nn_checks import fd_gradcheck


def store_params(store):
    return list(store.params.values())


class TestParamStore:
    def test_duplicate_name_rejected(self):
        store = ParamStore()
        store.add("w", np.zeros(3))
        with pytest.raises(Exception):
            store.add("w", np.zeros(3))

    def test_copy_from_prefix(self):
        src = ParamStore()
        src.add("enc.w", np.arange(4.0))
        src.add("head.w", np.ones(2))
        dst = ParamStore()
        dst.copy_from(src, "enc.", "enc.")
        assert dst.names() == ["enc.w"]
        assert np.allclose(dst["enc.w"].data, np.arange(4.0))


class TestLayerGradients:
    def test_linear(self):
        rng = np.random.default_rng(0)
        store = ParamStore()
        linear_init(store, "lin", 4, 3, rng)
        x = T.Tensor(rng.normal(size=(5, 4)), requires_grad=True)
        const = rng.normal(size=(5, 3))

        def forward():
            return T.tsum(T.mul(linear(store, "lin", x), const))

        fd_gradcheck(store_params(store) + [x], forward)

    def test_mlp_three_layers(self):
        rng = np.random.default_rng(1)
        store = ParamStore()
        mlp_init(store, "m", [6, 8, 8, 2], rng)
        x = T.Tensor(rng.normal(size=(7, 6)), requires_grad=True)
        const = rng.normal(size=(7, 2))

        def forward():
            return T.tsum(T.mul(mlp(store, "m", x, 3), const))

        fd_gradcheck(store_params(store) + [x], forward)

    def test_layer_norm(self):
        rng = np.random.default_rng(2)
        store = ParamStore()
        layer_norm_init(store, "ln", 6)
        x = T.Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        const = rng.normal(size=(4, 6))

        def forward():
            return T.tsum(T.mul(layer_norm(store, "ln", x), const))

        fd_gradcheck(store_params(store) + [x], forward)

    def test_self_attention(self):
        rng = np.random.default_rng(3)
        store = ParamStore()
        attention_init(store, "attn", 8, rng)
        x = T.Tensor(rng.normal(size=(2, 5, 8)), requires_grad=True)
        const = rng.normal(size=(2, 5, 8))

        def forward():
            return T.tsum(T.mul(attention(store, "attn", x, x, heads=2), const))

        fd_gradcheck(store_params(store) + [x], forward)

    def test_cross_attention(self):
        rng = np.random.default_rng(4)
        store = ParamStore()
        attention_init(store, "attn", 8, rng)
        q = T.Tensor(rng.normal(size=(3, 6, 8)), requires_grad=True)
        kv = T.Tensor(rng.normal(size=(3, 4, 8)), requires_grad=True)
        const = rng.normal(size=(3, 6, 8))

        def forward():
            return T.tsum(T.mul(attention(store, "attn", q, kv, heads=2), const))

        fd_gradcheck(store_params(store) + [q, kv], forward)

    def test_encoder_layer(self):
        rng = np.random.default_rng(5)
        store = ParamStore()
        encoder_layer_init(store, "enc", 8, 2, rng)
        x = T.Tensor(rng.normal(size=(2, 4, 8)), requires_grad=True)
        const = rng.normal(size=(2, 4, 8))

        def forward():
            return T.tsum(T.mul(encoder_layer(store, "enc", x, heads=2), const))

        fd_gradcheck(store_params(store) + [x], forward)


class TestAttentionWeights:
    def test_rows_are_convex_weights(self):
        rng = np.random.default_rng(6)
        store = ParamStore()
        attention_init(store, "attn", 8, rng)
        x = T.tensor(rng.normal(size=(3, 5, 8)))
        _, weights = attention(store, "attn", x, x, heads=2, return_weights=True)
        assert weights.data.min() >= 0.0
        assert np.abs(weights.data.sum(axis=-1) - 1.0).max() < 1e-12


class TestLosses:
    def test_skeleton_loss_at_labels_is_tiny(self):
        g = Dag.from_edges(3, [(0, 1), (2, 1)])
        S = T.tensor(skeleton_labels(g))
        assert skeleton_loss(S, g).item() <= 1e-6 * 9

    def test_skeleton_loss_at_half_is_ln2(self):
        g = Dag.from_edges(3, [(0, 1), (2, 1)])
        S = T.tensor(np.full((3, 3), 0.5))
        assert abs(skeleton_loss(S, g).item() - np.log(2.0)) < 1e-12

    def test_skeleton_loss_gradcheck(self):
        rng = np.random.default_rng(7)
        g = Dag.from_edges(4, [(0, 1), (2, 1), (2, 3)])
        probs = T.Tensor(rng.uniform(0.05, 0.95, size=(4, 4)), requires_grad=True)

        def forward():
            return skeleton_loss(probs, g)

        worst = fd_gradcheck([probs], forward, rtol=1e-6)
        assert worst < 1e-6

    def test_vstruct_labels_formula(self):
        g = Dag.from_edges(3, [(0, 1), (2, 1)])
        labels = vstruct_labels(g)
        assert labels[1, 0, 2] == 1.0 and labels[1, 2, 0] == 1.0
        assert labels.sum() == 2.0
        chain = Dag.from_edges(3, [(0, 1), (1, 2)])
        assert vstruct_labels(chain).sum() == 0.0

    def test_vstruct_loss_collider_and_chain(self):
        collider = Dag.from_edges(3, [(0, 1), (2, 1)])
        mask = ut_mask(skeleton_of(collider))
        assert mask.sum() == 2.0  # one UT, both leaf orders
        U_good = T.tensor(np.where(vstruct_labels(collider) > 0, 1.0, 0.0))
        assert vstruct_loss(U_good, collider, skeleton_of(collider)).item() < 1e-5
        chain = Dag.from_edges(3, [(0, 1), (1, 2)])
        U_zero = T.tensor(np.zeros((3, 3, 3)))
        assert vstruct_loss(U_zero, chain, skeleton_of(chain)).item() < 1e-5

    def test_vstruct_loss_gradcheck(self):
        rng = np.random.default_rng(8)
        g = Dag.from_edges(4, [(0, 1), (2, 1), (2, 3)])
        U = T.Tensor(rng.uniform(0.05, 0.95, size=(4, 4, 4)), requires_grad=True)

        def forward():
            return vstruct_loss(U, g, skeleton_of(g))

        worst = fd_gradcheck([U], forward, rtol=1e-6, max_entries=32)
        assert worst < 1e-6

    def test_vstruct_loss_mask_invariance_exact(self):
        g = Dag.from_edges(4, [(0, 1), (2, 1), (2, 3)])
        rng = np.random.default_rng(9)
        U_vals = rng.uniform(0.1, 0.9, size=(4, 4, 4))
        base = vstruct_loss(T.tensor(U_vals), g, skeleton_of(g)).item()
        mask = ut_mask(skeleton_of(g))
        perturbed = U_vals.copy()
        changed = 0
        for idx in np.ndindex(4, 4, 4):
            if mask[idx] == 0.0:
                perturbed[idx] = rng.uniform(0.1, 0.9)
                changed += 1
        assert changed > 0
        after = vstruct_loss(T.tensor(perturbed), g, skeleton_of(g)).item()
        assert after == base

    def test_empty_mask_zero_loss_with_warning(self):
        g = Dag.from_edges(3, [(0, 1), (1, 2), (0, 2)])  # triangle: no UTs
        with pytest.warns(UserWarning):
            loss = vstruct_loss(T.tensor(np.full((3, 3, 3), 0.5)), g, skeleton_of(g))
        assert loss.item() == 0.0

    def test_node_edge_loss_gradcheck(self):
        rng = np.random.default_rng(10)
        g = Dag.from_edges(4, [(0, 2), (1, 2)])
        A = T.Tensor(rng.uniform(0.05, 0.95, size=(4, 4)), requires_grad=True)

        def forward():
            return node_edge_loss(A, g)

        assert fd_gradcheck([A], forward, rtol=1e-6) < 1e-6

    def test_masked_bce_requires_matching_shapes(self):
        with pytest.raises(Exception):
            masked_bce(T.tensor(np.full((2, 2), 0.5)), np.zeros((3, 3)), np.ones((2, 2)))
