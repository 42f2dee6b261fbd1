"""MLE pretraining, discriminator training and adversarial policy-gradient rounds."""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import discriminator as dsc
from . import generator as gen
from . import numerics as nm
from .corpus import ConfigError, KeyphraseSequence

logger = logging.getLogger(__name__)


class NonFiniteGradientError(ArithmeticError):
    pass


class DataError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.0005
    adagrad_init: float = 0.1
    adagrad_eps: float = 1e-10
    batch_size: int = 16
    pretrain_epochs: int = 10
    d_epochs: int = 1
    g_epochs: int = 1
    gan_rounds: int = 5
    max_decode_len: int = 60
    max_phrase_len: int = 6
    seed: int = 0
    clip_norm: float = 1.0
    plateau_tol: float = 1e-3
    plateau_rounds: int = 3

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        for name in ("batch_size", "max_decode_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("pretrain_epochs", "d_epochs", "g_epochs", "gan_rounds"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.adagrad_init < 0 or self.clip_norm < 0:
            raise ConfigError("adagrad_init and clip_norm must be non-negative")


# ----------------------------------------------------------------- optimiser

def init_accumulators(arrays, init=0.1):
    return {k: np.full(v.shape, init) for k, v in arrays.items()}


def adagrad_update(params, grads, accumulators, lr, eps=1e-10):
    """``acc += g**2; p -= lr * g / sqrt(acc + eps)``; returns new dicts."""
    new_params, new_acc = {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise nm.DimensionError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient in tensor {name!r}")
        acc = accumulators[name] + g * g
        new_acc[name] = acc
        new_params[name] = p - lr * g / np.sqrt(acc + eps)
    return new_params, new_acc


def clip_by_global_norm(grads, max_norm):
    if max_norm <= 0:
        return grads
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


class Optimizer:
    """Adagrad state bound to one parameter set."""

    def __init__(self, arrays, config):
        self.config = config
        self.acc = init_accumulators(arrays, config.adagrad_init)

    def step(self, params, grads):
        grads = clip_by_global_norm(grads, self.config.clip_norm)
        arrays, self.acc = adagrad_update(params.arrays(), grads, self.acc,
                                          self.config.lr, self.config.adagrad_eps)
        return params.replace(arrays)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _mean_grads(grad_list, params):
    total = {k: np.zeros(t.shape) for k, t in params.tensors.items()}
    for grads in grad_list:
        for k, g in grads.items():
            total[k] += g
    n = max(len(grad_list), 1)
    return {k: g / n for k, g in total.items()}


# ------------------------------------------------------------------ pretrain

@dataclass
class PretrainResult:
    params: gen.GeneratorParams
    losses: list = field(default_factory=list)
    optimizer: Optimizer = None


def token_accuracy(corpus, params):
    correct = total = 0
    for ex in corpus:
        c, t = gen.teacher_forced_accuracy(ex.document, ex.target, params)
        correct += c
        total += t
    return correct / max(total, 1)


def pretrain_generator(corpus, config, params=None, dims=None, rng=None, callback=None):
    """Minimise mean teacher-forced NLL with minibatch Adagrad.

    ``losses`` holds the mean training loss of each epoch.
    """
    if not corpus:
        raise ConfigError("pretraining corpus is empty")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    if params is None:
        if dims is None:
            raise ConfigError("either params or dims is required")
        params = gen.init_generator(dims, rng)
    result = PretrainResult(params)
    if config.pretrain_epochs == 0:
        return result
    opt = Optimizer(params.arrays(), config)
    for epoch in range(config.pretrain_epochs):
        epoch_loss = 0.0
        for batch in _batches(len(corpus), config.batch_size, rng):
            grads = []
            for i in batch:
                ex = corpus[i]
                loss = gen.teacher_forced_nll(ex.document, ex.target, params)
                epoch_loss += loss.item()
                grads.append(nm.gradients(loss, params.tensors))
            params = opt.step(params, _mean_grads(grads, params))
        result.losses.append(epoch_loss / len(corpus))
        logger.info("pretrain epoch %d loss %.4f", epoch + 1, result.losses[-1])
        if callback is not None:
            callback(epoch, params, result.losses[-1])
    result.params = params
    result.optimizer = opt
    return result


# ------------------------------------------------------------- discriminator

def target_phrases(example):
    return KeyphraseSequence.split(example.target).phrases


def fit_discriminator(triples, params, config, rng, epochs=None):
    """Train on ``(doc, real_phrases, fake_phrases)`` triples; returns (params, losses)."""
    epochs = config.d_epochs if epochs is None else epochs
    losses = []
    if epochs == 0 or not triples:
        return params, losses
    opt = Optimizer(params.arrays(), config)
    for _ in range(epochs):
        epoch_loss, count = 0.0, 0
        for batch in _batches(len(triples), config.batch_size, rng):
            grads = []
            for i in batch:
                doc, real, fake = triples[i]
                loss = dsc.disc_loss([dsc.score_sequence(doc.ids, real, params)],
                                     [dsc.score_sequence(doc.ids, fake, params)])
                epoch_loss += loss.item()
                count += 1
                grads.append(nm.gradients(loss, params.tensors))
            params = opt.step(params, _mean_grads(grads, params))
        losses.append(epoch_loss / count)
    return params, losses


def generated_pairs(corpus, gen_params, config):
    """One greedy fake per document alongside its curated sequence.

    Documents whose fake (or curated) sequence is empty are skipped as a pair.
    """
    triples, empty = [], 0
    for ex in corpus:
        fake = gen.greedy_decode(ex.document, gen_params, config.max_decode_len,
                                 config.max_phrase_len).phrases
        real = target_phrases(ex)
        if not fake:
            empty += 1
            continue
        if real:
            triples.append((ex.document, real, fake))
    if corpus and empty == len(corpus):
        raise DataError("every generated sequence is empty; cannot train the discriminator")
    return triples


def train_discriminator(corpus, gen_params, disc_params, config, rng=None):
    rng = np.random.default_rng(config.seed) if rng is None else rng
    if config.d_epochs == 0:
        return disc_params, []
    return fit_discriminator(generated_pairs(corpus, gen_params, config), disc_params, config, rng)


# ------------------------------------------------------------ policy gradient

@dataclass
class RewardBatch:
    rewards: np.ndarray
    baselines: np.ndarray

    @property
    def advantages(self):
        return self.rewards - self.baselines


def greedy_baseline(greedy_scores, m):
    """Per-keyphrase baseline: i-th greedy score, mean greedy score past its end."""
    greedy_scores = np.asarray(greedy_scores, dtype=float)
    fill = greedy_scores.mean() if greedy_scores.size else 0.0
    base = np.full(m, fill)
    k = min(m, greedy_scores.size)
    base[:k] = greedy_scores[:k]
    return base


def surrogate_loss(doc, sample, advantages, params):
    """``-sum_i A_i * sum_{t in phrase i} log G(y_t | ...)`` with constant advantages."""
    weights = np.zeros(len(sample.tokens))
    for a, group in zip(advantages, sample.groups):
        weights[group] = a
    log_probs = gen.sequence_log_probs(doc, sample.tokens, params)
    return -nm.sum(log_probs * nm.Tensor(weights))


@dataclass
class StepStats:
    mean_reward: float = 0.0
    loss: float = 0.0
    used: int = 0
    skipped: int = 0


def policy_gradient_step(batch, gen_params, scorer, config, rng, optimizer=None, sampler=None):
    """One REINFORCE update with a self-critical greedy baseline.

    ``scorer(doc, phrases)`` is the frozen reward model; it is only ever
    called, never updated.  Returns ``(params, stats)``.
    """
    sampler = gen.sample_decode if sampler is None else sampler
    optimizer = Optimizer(gen_params.arrays(), config) if optimizer is None else optimizer
    grads, rewards, losses = [], [], []
    stats = StepStats()
    for doc in batch:
        sample = sampler(doc, gen_params, config.max_decode_len, rng, config.max_phrase_len)
        phrases = sample.phrases.phrases
        if not phrases:
            stats.skipped += 1
            continue
        reward = np.asarray(scorer(doc, phrases), dtype=float)
        greedy = gen.greedy_decode(doc, gen_params, config.max_decode_len, config.max_phrase_len).phrases
        greedy_scores = scorer(doc, greedy) if greedy else []
        rb = RewardBatch(reward, greedy_baseline(greedy_scores, len(phrases)))
        rewards.append(reward.mean())
        loss = surrogate_loss(doc, sample, rb.advantages, gen_params)
        losses.append(loss.item())
        if np.any(rb.advantages != 0):
            grads.append(nm.gradients(loss, gen_params.tensors))
        else:
            grads.append({k: np.zeros(t.shape) for k, t in gen_params.tensors.items()})
    stats.used = len(rewards)
    if not grads:
        return gen_params, stats
    stats.mean_reward = float(np.mean(rewards))
    stats.loss = float(np.mean(losses))
    return optimizer.step(gen_params, _mean_grads(grads, gen_params)), stats


def mean_sampled_reward(docs, gen_params, scorer, config, rng):
    rewards = []
    for doc in docs:
        sample = gen.sample_decode(doc, gen_params, config.max_decode_len, rng, config.max_phrase_len)
        if sample.phrases.phrases:
            rewards.append(float(np.mean(scorer(doc, sample.phrases.phrases))))
    return float(np.mean(rewards)) if rewards else 0.0


# ------------------------------------------------------------------ GAN loop

@dataclass
class RoundLog:
    round: int
    mean_reward: float
    d_loss: float = None      # None for round 0, before any update
    g_loss: float = None

    def to_json(self):
        return json.dumps({"round": self.round, "mean_reward": self.mean_reward,
                           "d_loss": self.d_loss, "g_loss": self.g_loss})


@dataclass
class GanResult:
    gen_params: gen.GeneratorParams
    disc_params: dsc.DiscriminatorParams
    initial_reward: float
    log: list = field(default_factory=list)


def gan_train(corpus, config, gen_params, disc_params, validation=None, rng=None, log_fh=None):
    """Alternate frozen-D policy-gradient epochs with D retraining on fresh fakes.

    ``disc_params`` must already be trained once (see
    :func:`train_discriminator`).  Rewards are measured on ``validation``
    (defaults to the training corpus).  Stops after ``gan_rounds`` or when the
    validation reward moved less than ``plateau_tol`` for ``plateau_rounds``
    consecutive rounds.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    validation = corpus if validation is None else validation
    val_docs = [ex.document for ex in validation]
    reward0 = mean_sampled_reward(val_docs, gen_params, dsc.Scorer(disc_params), config, rng)
    result = GanResult(gen_params, disc_params, reward0)
    if log_fh is not None:
        log_fh.write(RoundLog(0, reward0).to_json() + "\n")
    if config.gan_rounds == 0:
        return result
    previous, flat = reward0, 0
    g_opt = Optimizer(gen_params.arrays(), config)
    for rnd in range(1, config.gan_rounds + 1):
        scorer = dsc.Scorer(disc_params)
        g_losses = []
        for _ in range(config.g_epochs):
            for batch in _batches(len(corpus), config.batch_size, rng):
                docs = [corpus[i].document for i in batch]
                gen_params, stats = policy_gradient_step(docs, gen_params, scorer, config, rng, g_opt)
                if stats.used:
                    g_losses.append(stats.loss)
        reward = mean_sampled_reward(val_docs, gen_params, scorer, config, rng)
        disc_params, d_losses = train_discriminator(corpus, gen_params, disc_params, config, rng)
        entry = RoundLog(rnd, reward, float(d_losses[-1]) if d_losses else 0.0,
                         float(np.mean(g_losses)) if g_losses else 0.0)
        result.log.append(entry)
        if log_fh is not None:
            log_fh.write(entry.to_json() + "\n")
        logger.info("round %d reward %.4f d_loss %.4f g_loss %.4f", rnd, entry.mean_reward,
                    entry.d_loss, entry.g_loss)
        flat = flat + 1 if abs(reward - previous) < config.plateau_tol else 0
        previous = reward
        if flat >= config.plateau_rounds:
            break
    result.gen_params = gen_params
    result.disc_params = disc_params
    return result
