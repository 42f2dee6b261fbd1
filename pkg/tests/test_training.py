import io
import json

import numpy as np
import pytest

from kpgan import corpus as cp
from kpgan import discriminator as dsc
from kpgan import generator as gen
from kpgan import training


def _config(**kw):
    base = dict(lr=0.05, batch_size=4, max_decode_len=8, max_phrase_len=3, seed=0)
    base.update(kw)
    return training.TrainConfig(**base)


@pytest.fixture
def models(copy_corpus):
    _, vocab, examples = copy_corpus
    rng = np.random.default_rng(1)
    g = gen.init_generator(gen.GeneratorDims(len(vocab), 8, 16), rng)
    d = dsc.init_discriminator(dsc.DiscriminatorDims(len(vocab), 8, 16), rng)
    return examples, g, d


def _same(a, b):
    return all(np.array_equal(a.arrays()[k], b.arrays()[k]) for k in a.tensors)


class TestAdagrad:
    def test_first_step_value(self):
        p, _ = training.adagrad_update({"w": np.array([0.0])}, {"w": np.array([3.0])},
                                       {"w": np.array([0.1])}, lr=0.1)
        assert p["w"][0] == pytest.approx(-0.1 * 3 / np.sqrt(9.1 + 1e-10), abs=1e-15)
        assert p["w"][0] == pytest.approx(-0.09945, abs=1e-5)

    def test_zero_gradient_is_bit_exact_noop(self):
        w = np.array([0.3, -1.7])
        p, acc = training.adagrad_update({"w": w}, {"w": np.zeros(2)}, {"w": np.full(2, 0.1)}, lr=0.5)
        np.testing.assert_array_equal(p["w"], w)
        np.testing.assert_array_equal(acc["w"], [0.1, 0.1])

    def test_repeated_gradient_shrinks_steps(self):
        p, acc = {"w": np.array([0.0])}, {"w": np.array([0.1])}
        g = {"w": np.array([1.0])}
        p1, acc = training.adagrad_update(p, g, acc, 0.1)
        p2, acc2 = training.adagrad_update(p1, g, acc, 0.1)
        assert abs(p2["w"][0] - p1["w"][0]) < abs(p1["w"][0])
        assert np.all(acc2["w"] >= acc["w"])

    def test_non_finite_gradient_names_tensor(self):
        with pytest.raises(training.NonFiniteGradientError, match="'emb'"):
            training.adagrad_update({"emb": np.zeros(2)}, {"emb": np.array([np.nan, 0.0])},
                                    {"emb": np.zeros(2)}, 0.1)

    def test_clip_by_global_norm(self):
        grads = training.clip_by_global_norm({"a": np.array([3.0]), "b": np.array([4.0])}, 1.0)
        np.testing.assert_allclose([grads["a"][0], grads["b"][0]], [0.6, 0.8], rtol=1e-15)


class TestConfig:
    def test_defaults(self):
        cfg = training.TrainConfig()
        assert (cfg.lr, cfg.adagrad_init, cfg.clip_norm) == (0.0005, 0.1, 1.0)

    @pytest.mark.parametrize("kw", [{"lr": 0.0}, {"lr": -1.0}, {"gan_rounds": -1}, {"batch_size": 0}])
    def test_invalid(self, kw):
        with pytest.raises(cp.ConfigError):
            training.TrainConfig(**kw)


class TestPretrain:
    def test_zero_epochs_returns_initial_params(self, models):
        examples, g, _ = models
        result = training.pretrain_generator(examples, _config(pretrain_epochs=0), params=g)
        assert result.params is g and result.losses == []

    def test_empty_corpus(self, models):
        with pytest.raises(cp.ConfigError):
            training.pretrain_generator([], _config(), params=models[1])


class TestDiscriminatorTraining:
    def test_zero_epochs_noop(self, models):
        examples, g, d = models
        out, losses = training.train_discriminator(examples, g, d, _config(d_epochs=0))
        assert out is d and losses == []

    def test_one_fake_per_real(self, models):
        examples, g, _ = models
        triples = training.generated_pairs(examples, g, _config())
        assert len(triples) == len(examples)
        assert all(len(real) >= 1 and len(fake) >= 1 for _, real, fake in triples)

    def test_all_empty_fakes_is_data_error(self, models):
        examples, g, _ = models
        arrays = g.arrays()
        arrays["gate.w"] = np.zeros_like(arrays["gate.w"])
        arrays["gate.b"] = np.array([50.0])
        arrays["out.b"] = np.full_like(arrays["out.b"], -50.0)
        arrays["out.b"][cp.EOS] = 50.0
        with pytest.raises(training.DataError):
            training.generated_pairs(examples, g.replace(arrays), _config())

    def test_loss_decreases(self, models):
        examples, g, d = models
        triples = training.generated_pairs(examples, g, _config())
        _, losses = training.fit_discriminator(triples, d, _config(lr=0.1, batch_size=2), np.random.default_rng(0),
                                               epochs=5)
        assert losses[-1] < losses[0]


class TestPolicyGradient:
    def test_baseline_rule(self):
        np.testing.assert_allclose(training.greedy_baseline([0.2, 0.6], 4), [0.2, 0.6, 0.4, 0.4])
        np.testing.assert_allclose(training.greedy_baseline([0.2, 0.6, 0.9], 2), [0.2, 0.6])
        np.testing.assert_array_equal(training.greedy_baseline([], 3), [0.0, 0.0, 0.0])

    def test_sample_equal_to_greedy_changes_nothing(self, models):
        examples, g, d = models
        docs = [ex.document for ex in examples[:4]]
        new, stats = training.policy_gradient_step(docs, g, dsc.Scorer(d), _config(lr=1.0), np.random.default_rng(0),
                                                   sampler=gen.greedy_sample)
        assert stats.used == 4 and _same(new, g)

    def test_constant_reward_changes_nothing(self, models):
        examples, g, _ = models
        docs = [ex.document for ex in examples[:4]]

        def half(doc, phrases):
            return np.full(len(phrases), 0.5)

        new, stats = training.policy_gradient_step(docs, g, half, _config(lr=1.0), np.random.default_rng(0))
        assert stats.used > 0 and _same(new, g)

    def test_discriminator_frozen(self, models):
        examples, g, d = models
        before = {k: v.copy() for k, v in d.arrays().items()}
        docs = [ex.document for ex in examples]
        new, _ = training.policy_gradient_step(docs, g, dsc.Scorer(d), _config(lr=0.5), np.random.default_rng(0))
        assert not _same(new, g)
        for k, v in d.arrays().items():
            np.testing.assert_array_equal(v, before[k])

    def test_empty_samples_are_skipped(self, models):
        examples, g, d = models
        arrays = g.arrays()
        arrays["gate.w"] = np.zeros_like(arrays["gate.w"])
        arrays["gate.b"] = np.array([50.0])
        arrays["out.b"] = np.full_like(arrays["out.b"], -50.0)
        arrays["out.b"][cp.EOS] = 50.0
        g = g.replace(arrays)
        docs = [ex.document for ex in examples[:3]]
        new, stats = training.policy_gradient_step(docs, g, dsc.Scorer(d), _config(), np.random.default_rng(0))
        assert (stats.used, stats.skipped) == (0, 3) and new is g


class TestGanLoop:
    def test_zero_rounds(self, models):
        examples, g, d = models
        result = training.gan_train(examples, _config(gan_rounds=0), g, d)
        assert result.gen_params is g and result.disc_params is d and result.log == []

    def test_round_log(self, models):
        examples, g, d = models
        fh = io.StringIO()
        result = training.gan_train(examples, _config(gan_rounds=2, plateau_rounds=10), g, d, log_fh=fh)
        assert [e.round for e in result.log] == [1, 2]
        lines = [json.loads(line) for line in fh.getvalue().splitlines()]
        assert lines[0] == {"round": 0, "mean_reward": result.initial_reward, "d_loss": None, "g_loss": None}
        assert set(lines[1]) == {"round", "mean_reward", "d_loss", "g_loss"}

    def test_plateau_stops_early(self, models):
        examples, g, d = models
        cfg = _config(gan_rounds=6, plateau_tol=10.0, plateau_rounds=2)
        assert len(training.gan_train(examples, cfg, g, d).log) == 2
