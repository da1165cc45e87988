import numpy as np
import pytest

from rbmkit import (Dataset, Hyperparams, RbmParams, RngStream,
                    TrainingDivergedError, init_params, one_hot, sigmoid,
                    train_rbm)
from rbmkit.dbn import (DbnModel, FeedforwardNet, classify_free_energy,
                        classify_net, cross_entropy, fine_tune, net_forward,
                        net_gradients, pretrain_stack, propagate_up,
                        train_discriminative_rbm, unroll_to_network)
from rbmkit.oracle import state_index, visible_marginal
from rbmkit.trainer import STREAM_INIT

from synthdata import digit_dataset

TOY_FEATURES = np.array([[1, 1, 0, 0], [1, 1, 1, 0], [1, 1, 0, 1], [1, 0, 0, 0],
                         [0, 0, 1, 1], [0, 1, 1, 1], [1, 0, 1, 1], [0, 0, 0, 1]],
                        dtype=float)
TOY_LABELS = np.array([0, 0, 0, 0, 1, 1, 1, 1])


def second_layer():
    return RbmParams(np.array([[0.5, -0.5], [1.0, 0.3]]),
                     np.array([0.0, 0.1]), np.array([-0.2, 0.4]))


class TestDbnModel:
    def test_dimension_chaining_enforced(self, ref_model):
        bad = RbmParams(np.zeros((3, 2)), np.zeros(3), np.zeros(2))
        with pytest.raises(ValueError):
            DbnModel([ref_model, bad])

    def test_label_augmented_top_chains(self, ref_model):
        top = RbmParams(np.zeros((5, 2)), np.zeros(5), np.zeros(2), label_units=3)
        model = DbnModel([ref_model, top], top_label_units=3)
        assert model.n_layers == 2


class TestPropagateUp:
    def test_zero_layer_outputs_half(self, zero_model):
        dbn = DbnModel([zero_model(4, 3)])
        np.testing.assert_array_equal(propagate_up(dbn, np.zeros(4), 0),
                                      np.full(3, 0.5))

    def test_composition_identity(self, ref_model):
        from rbmkit import hidden_probs
        dbn = DbnModel([ref_model, second_layer()])
        v = np.array([1.0, 0.0])
        lower = propagate_up(dbn, v, 0)
        np.testing.assert_array_equal(propagate_up(dbn, v, 1),
                                      hidden_probs(second_layer(), lower))

    def test_hand_composed_two_layer_stack(self, ref_model):
        dbn = DbnModel([ref_model, second_layer()])
        v = np.array([1.0, 0.0])
        h0 = sigmoid(np.array([0.3 + 1.0, 0.0 - 1.0]))
        h1 = sigmoid(np.array([-0.2 + 0.5 * h0[0] + 1.0 * h0[1],
                               0.4 - 0.5 * h0[0] + 0.3 * h0[1]]))
        np.testing.assert_allclose(propagate_up(dbn, v, 1), h1, atol=1e-12)

    def test_index_out_of_range(self, ref_model):
        with pytest.raises(IndexError):
            propagate_up(DbnModel([ref_model]), np.zeros(2), 1)


class TestPretrainStack:
    def test_single_layer_identical_to_train_rbm(self):
        data = (RngStream(9, 6).uniforms((10, 2)) < 0.5).astype(float)
        hp = Hyperparams(epsilon=0.2, batch_size=5, epochs=4)
        stack, _ = pretrain_stack([2, 3], data, hp, "cd", seed=9)
        init = init_params(2, 3, RngStream(9, STREAM_INIT))
        direct, _ = train_rbm(init, data, hp, "cd", seed=9)
        assert np.array_equal(stack.layers[0].w, direct.w)
        assert np.array_equal(stack.layers[0].a, direct.a)
        assert np.array_equal(stack.layers[0].b, direct.b)

    def test_zero_epoch_stack_is_well_formed(self):
        data = (RngStream(10, 6).uniforms((6, 4)) < 0.5).astype(float)
        hp = Hyperparams(epochs=0)
        stack, metrics = pretrain_stack([4, 3, 2], data, hp, "cd", seed=10)
        assert stack.n_layers == 2
        assert metrics == [[], []]
        out = propagate_up(stack, data[0], 1)
        assert out.shape == (2,)
        assert np.all(np.isfinite(out))

    def test_desk_scale_stack_trains_cleanly(self):
        ds = digit_dataset(500, seed=123)
        hp = Hyperparams(epsilon=0.05, batch_size=20, epochs=3, k=1)
        stack, metrics = pretrain_stack([784, 64, 64], ds, hp, "cd", seed=0)
        for layer in stack.layers:
            assert np.all(np.isfinite(layer.w))
        assert metrics[0][-1].recon_error < metrics[0][0].recon_error

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            pretrain_stack([3, 2], np.zeros((4, 2)), Hyperparams(), "cd", seed=0)

    def test_deterministic(self):
        data = (RngStream(11, 6).uniforms((8, 3)) < 0.5).astype(float)
        hp = Hyperparams(epsilon=0.3, batch_size=4, epochs=3)
        a, _ = pretrain_stack([3, 3, 2], data, hp, ["cd", "pcd"], seed=11)
        b, _ = pretrain_stack([3, 3, 2], data, hp, ["cd", "pcd"], seed=11)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.w, lb.w)


class TestDiscriminativeRbm:
    def test_separable_toy_reaches_high_accuracy(self):
        hp = Hyperparams(epsilon=0.3, batch_size=4, epochs=150, k=1)
        p, _ = train_discriminative_rbm(Dataset(TOY_FEATURES, TOY_LABELS), 6,
                                        hp, "cd", seed=0)
        pred, _ = classify_free_energy(p, TOY_FEATURES)
        assert np.mean(pred == TOY_LABELS) >= 0.95

    def test_label_units_equal_class_count(self):
        hp = Hyperparams(epochs=1, batch_size=4)
        p, _ = train_discriminative_rbm(Dataset(TOY_FEATURES, TOY_LABELS), 3,
                                        hp, "cd", seed=1)
        assert p.label_units == 2
        assert p.n_visible == TOY_FEATURES.shape[1] + 2

    def test_one_hot_rows_have_single_active_unit(self):
        block = one_hot(TOY_LABELS, 2)
        np.testing.assert_array_equal(block.sum(axis=1), np.ones(len(TOY_LABELS)))
        assert set(np.unique(block)) == {0.0, 1.0}

    def test_missing_labels_rejected(self):
        with pytest.raises(ValueError):
            train_discriminative_rbm(Dataset(TOY_FEATURES), 4, Hyperparams(),
                                     "cd", seed=0)


class TestClassifyFreeEnergy:
    def test_zero_parameters_uniform_scores(self):
        p = RbmParams(np.zeros((6, 3)), np.zeros(6), np.zeros(3), label_units=3)
        pred, scores = classify_free_energy(p, np.zeros(3))
        np.testing.assert_allclose(scores, np.full(3, 1 / 3), atol=1e-15)
        assert pred == 0  # tie broken toward the lowest class index

    def test_shift_invariance(self):
        rng = RngStream(20, 0)
        p = RbmParams(rng.normals((5, 4)), rng.normals(5), rng.normals(4),
                      label_units=2)
        # adding a constant to every label bias shifts all class free
        # energies equally and must leave the scores alone
        a_shift = p.a.copy()
        a_shift[3:] += 2.5
        shifted = RbmParams(p.w, a_shift, p.b, label_units=2)
        v = (rng.uniforms(3) < 0.5).astype(float)
        _, base_scores = classify_free_energy(p, v)
        _, shift_scores = classify_free_energy(shifted, v)
        np.testing.assert_allclose(shift_scores, base_scores, rtol=1e-12)

    def test_matches_enumerated_posterior(self):
        rng = RngStream(77, 0)
        d, n_classes, n_hidden = 4, 3, 5
        p = RbmParams(rng.normals((d + n_classes, n_hidden)),
                      rng.normals(d + n_classes), rng.normals(n_hidden),
                      label_units=n_classes)
        marg = visible_marginal(p)
        for _ in range(20):
            v = (rng.uniforms(d) < 0.5).astype(float)
            joint = np.array([
                marg[state_index(np.concatenate([v, one_hot([c], n_classes)[0]]))]
                for c in range(n_classes)])
            exact = joint / joint.sum()
            pred, scores = classify_free_energy(p, v)
            np.testing.assert_allclose(scores, exact, atol=1e-8)
            assert pred == int(np.argmax(exact))

    def test_batch_and_single_agree(self):
        p = RbmParams(np.ones((4, 2)), np.zeros(4), np.zeros(2), label_units=2)
        batch = np.array([[1.0, 0.0], [0.0, 1.0]])
        preds, scores = classify_free_energy(p, batch)
        for i, v in enumerate(batch):
            pred_i, scores_i = classify_free_energy(p, v)
            assert preds[i] == pred_i
            np.testing.assert_array_equal(scores[i], scores_i)

    def test_model_without_labels_rejected(self, ref_model):
        with pytest.raises(ValueError):
            classify_free_energy(ref_model, np.zeros(2))


class TestUnroll:
    def build_stack(self):
        rng = RngStream(30, 0)
        l0 = RbmParams(rng.normals((4, 3)), rng.normals(4), rng.normals(3))
        l1 = RbmParams(rng.normals((3, 2)), rng.normals(3), rng.normals(2))
        return DbnModel([l0, l1])

    def test_hidden_forward_equals_propagate_up(self):
        dbn = self.build_stack()
        net = unroll_to_network(dbn, n_classes=2, seed=0)
        x = (RngStream(30, 1).uniforms((5, 4)) < 0.5).astype(float)
        acts = net_forward(net, x)
        np.testing.assert_array_equal(acts[2], propagate_up(dbn, x, 1))

    def test_scores_sum_to_one(self):
        net = unroll_to_network(self.build_stack(), n_classes=4, seed=1)
        scores = net_forward(net, np.zeros((3, 4)))[-1]
        np.testing.assert_allclose(scores.sum(axis=1), 1.0, atol=1e-12)

    def test_zero_epoch_dbn_yields_working_classifier(self):
        data = (RngStream(31, 6).uniforms((6, 4)) < 0.5).astype(float)
        stack, _ = pretrain_stack([4, 3], data, Hyperparams(epochs=0), "cd", seed=31)
        net = unroll_to_network(stack, n_classes=3, seed=31)
        pred = classify_net(net, data)
        assert pred.shape == (6,)
        assert np.all((0 <= pred) & (pred < 3))

    def test_label_augmented_top_drops_label_weights(self):
        lower = RbmParams(np.zeros((4, 3)), np.zeros(4), np.zeros(3))
        top = RbmParams(np.arange(10.0).reshape(5, 2), np.zeros(5), np.zeros(2),
                        label_units=2)
        dbn = DbnModel([lower, top], top_label_units=2)
        net = unroll_to_network(dbn, n_classes=2, seed=2)
        np.testing.assert_array_equal(net.weights[1], top.w[:3])


class TestBackprop:
    def test_gradients_match_finite_differences(self):
        # standing property check: fresh random probes every run
        run_seed = int(np.random.SeedSequence().entropy % (2 ** 32))
        print(f"backprop probe seed: {run_seed}")
        for probe in range(10):
            rng = RngStream(run_seed, probe)
            net = FeedforwardNet(
                [rng.normals((4, 3)), rng.normals((3, 2))],
                [rng.normals(3), rng.normals(2)])
            x = rng.uniforms((5, 4))
            y = (rng.uniforms(5) * 2).astype(np.int64)
            gw, gb = net_gradients(net, x, y)
            step = 1e-5
            for which, grads in (("w", gw), ("b", gb)):
                for layer in range(2):
                    param = net.weights[layer] if which == "w" else net.biases[layer]
                    flat = param.reshape(-1)
                    for idx in range(flat.size):
                        orig = flat[idx]
                        flat[idx] = orig + step
                        hi = cross_entropy(net, x, y)
                        flat[idx] = orig - step
                        lo = cross_entropy(net, x, y)
                        flat[idx] = orig
                        fd = (hi - lo) / (2 * step)
                        got = grads[layer].reshape(-1)[idx]
                        assert got == pytest.approx(fd, rel=1e-5, abs=1e-8)

    def test_zero_learning_rate_is_noop(self):
        net = unroll_to_network(TestUnroll().build_stack(), 2, seed=3)
        data = Dataset((RngStream(32, 6).uniforms((6, 4)) < 0.5).astype(float),
                       np.array([0, 1, 0, 1, 0, 1]))
        tuned, _ = fine_tune(net, data, Hyperparams(epsilon=0.0, epochs=3,
                                                    batch_size=2), seed=32)
        for w_new, w_old in zip(tuned.weights, net.weights):
            np.testing.assert_array_equal(w_new, w_old)

    def test_training_cross_entropy_decreases(self):
        data = Dataset(TOY_FEATURES, TOY_LABELS)
        stack, _ = pretrain_stack([4, 3], TOY_FEATURES,
                                  Hyperparams(epsilon=0.2, batch_size=4, epochs=20),
                                  "cd", seed=33)
        net = unroll_to_network(stack, n_classes=2, seed=33)
        before = cross_entropy(net, TOY_FEATURES, TOY_LABELS)
        tuned, losses = fine_tune(net, data,
                                  Hyperparams(epsilon=0.5, epochs=30, batch_size=4),
                                  seed=33)
        assert losses[-1] < before
        assert losses[-1] < losses[0]

    def test_divergence_detected(self):
        net = unroll_to_network(TestUnroll().build_stack(), 2, seed=4)
        data = Dataset((RngStream(34, 6).uniforms((6, 4)) < 0.5).astype(float),
                       np.array([0, 1, 0, 1, 0, 1]))
        with pytest.raises(TrainingDivergedError):
            fine_tune(net, data, Hyperparams(epsilon=1e200, weight_decay=1.0,
                                             epochs=3, batch_size=2), seed=34)

    def test_missing_labels_rejected(self):
        net = unroll_to_network(TestUnroll().build_stack(), 2, seed=5)
        with pytest.raises(ValueError):
            fine_tune(net, Dataset(np.zeros((3, 4))), Hyperparams(), seed=0)
