"""Finite-difference verification of every differentiable op and model loss."""

from dataclasses import dataclass

import numpy as np

from . import discriminator as dsc
from . import generator as gen
from . import numerics as nm
from . import training
from .corpus import EOS, SEP, Document, KeyphraseSequence

EPS = 1e-5
TOLERANCE = 1e-4
# Inputs are drawn from U(-scale, scale).  A wider range than the training
# initialisation keeps gradients well above central-difference round-off.
SCALE = 1.0


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    worst_param: str
    passed: bool


def _contract(out, rng):
    """Scalar ``sum(out * W)`` with a fixed random ``W``; exercises every output entry."""
    weights = nm.Tensor(rng.uniform(-1.0, 1.0, size=out.shape))
    return nm.sum(out * weights)


def _check(name, loss_fn, tensors, corrupt=None):
    analytic = nm.gradients(loss_fn(), tensors)
    if corrupt == name:
        analytic = {k: g * 1.01 + 1e-3 for k, g in analytic.items()}
    numeric = nm.finite_difference(lambda: loss_fn().item(), {k: t.data for k, t in tensors.items()}, EPS)
    worst, worst_name = 0.0, ""
    for key in tensors:
        err = float(nm.relative_error(analytic[key], numeric[key]).max(initial=0.0))
        if err > worst:
            worst, worst_name = err, key
    return CheckResult(name, worst, worst_name, worst < TOLERANCE)


def _uniform(rng, *shape):
    return nm.parameter(rng.uniform(-SCALE, SCALE, size=shape))


def _rescaled(params, rng):
    return params.replace({k: rng.uniform(-SCALE, SCALE, size=v.shape) for k, v in params.arrays().items()})


def _op_cases(rng):
    a, b = _uniform(rng, 3, 4), _uniform(rng, 4, 2)
    yield "matmul", {"a": a, "b": b}, lambda: _contract(nm.matmul(a, b), rng_fixed(1))

    x, y = _uniform(rng, 3, 4), _uniform(rng, 4)
    yield "add_mul_broadcast", {"x": x, "y": y}, lambda: _contract((x + y) * x - y, rng_fixed(2))

    s = _uniform(rng, 2, 5)
    yield "sigmoid", {"s": s}, lambda: _contract(nm.sigmoid(s * 3.0), rng_fixed(3))
    yield "tanh", {"s": s}, lambda: _contract(nm.tanh(s * 2.0), rng_fixed(4))
    yield "exp_softplus", {"s": s}, lambda: _contract(nm.exp(s) + nm.softplus(s * 2.0), rng_fixed(5))

    mask = np.array([[True, False, True, True, True], [False, True, True, False, True]])
    yield "softmax_masked", {"s": s}, lambda: _contract(nm.softmax(s * 2.0, mask), rng_fixed(6))

    pos = nm.parameter(rng.uniform(0.5, 2.0, size=(4,)))
    yield "log", {"p": pos}, lambda: _contract(nm.log(pos), rng_fixed(7))

    table = _uniform(rng, 6, 3)
    ids = [4, 1, 4, 0]
    yield "embedding_concat_pick", {"table": table, "x": x}, lambda: _contract(
        nm.concat([nm.embedding(table, ids), x[:, :3]], axis=0)
        + nm.reshape(nm.pick(x, [0, 2, 1], [3, 0, 0]), (1, 3)), rng_fixed(8))

    gp = nm.GRUParams(_uniform(rng, 3, 12), _uniform(rng, 4, 12), _uniform(rng, 12))
    xv, hv = _uniform(rng, 3), _uniform(rng, 4)
    grads = {"x": xv, "h": hv, "wx": gp.wx, "wh": gp.wh, "b": gp.b}
    yield "gru_cell", grads, lambda: _contract(nm.gru_cell(xv, hv, gp), rng_fixed(9))

    xs = _uniform(rng, 5, 3)
    seq = {"xs": xs, "h": hv, "wx": gp.wx, "wh": gp.wh, "b": gp.b}
    yield "gru_sequence_fwd", seq, lambda: _contract(nm.gru_sequence(xs, hv, gp), rng_fixed(10))
    yield "gru_sequence_rev", seq, lambda: _contract(nm.gru_sequence(xs, hv, gp, reverse=True), rng_fixed(11))


def rng_fixed(seed):
    return np.random.default_rng(1000 + seed)


def _toy_document():
    # vocab 13, two source OOV tokens at extended ids 13 and 14; n = 7
    return Document(tuple("abcdefg"), (5, 6, 1, 7, 8, 1, 9), (5, 6, 13, 7, 8, 14, 9), ("x", "y"))


def _toy_generator(rng):
    return _rescaled(gen.init_generator(gen.GeneratorDims(13, 4, 5), rng), rng)


def _generator_case(rng):
    doc, gparams = _toy_document(), _toy_generator(rng)
    target = KeyphraseSequence([[5, 13], [9]]).flatten()
    return "generator_nll", gparams.tensors, lambda: gen.teacher_forced_nll(doc, target, gparams)


def _discriminator_case(rng):
    doc = _toy_document()
    dparams = _rescaled(dsc.init_discriminator(dsc.DiscriminatorDims(13, 3, 2), rng), rng)
    real, fake = [[5], [7, 8]], [[11, 12, 10]]
    return "discriminator_bce", dparams.tensors, lambda: dsc.disc_loss(
        [dsc.score_sequence(doc.ids, real, dparams)], [dsc.score_sequence(doc.ids, fake, dparams)])


def _surrogate_case(rng):
    doc, gparams = _toy_document(), _toy_generator(rng)
    tokens = [5, 13, SEP, SEP, 9, 7, EOS]
    sample = gen.SampledSequence(tokens, np.zeros(len(tokens)), KeyphraseSequence.split(tokens),
                                 gen._group_positions(tokens))
    advantages = np.array([0.7, -0.4])
    return "rl_surrogate", gparams.tensors, lambda: training.surrogate_loss(doc, sample, advantages, gparams)


def run_gradcheck(seed=0, corrupt=None):
    """Run every check; ``corrupt`` names a check whose analytic gradient is perturbed."""
    results = []
    op_rng = np.random.default_rng([seed, 0])
    for name, tensors, fn in _op_cases(op_rng):
        results.append(_check(name, fn, tensors, corrupt))
    for index, case in enumerate((_generator_case, _discriminator_case, _surrogate_case), start=1):
        name, tensors, fn = case(np.random.default_rng([seed, index]))
        results.append(_check(name, fn, tensors, corrupt))
    return results


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  {'max rel err':>12}  {'worst tensor':<14} status"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.max_rel_error:12.3e}  {r.worst_param:<14} "
                     f"{'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
