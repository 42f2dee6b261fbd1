import math

import numpy as np
import pytest

from kpgan import discriminator as dsc
from kpgan import numerics as nm

from _oracles import ref_gru, sigmoid


def _params(seed=0, vocab=12, emb=2, hidden=2, scale=None):
    params = dsc.init_discriminator(dsc.DiscriminatorDims(vocab, emb, hidden), np.random.default_rng(seed))
    if scale is None:
        return params
    rng = np.random.default_rng(seed + 100)
    return params.replace({k: rng.uniform(-scale, scale, v.shape) for k, v in params.arrays().items()})


def _oracle_scores(doc, phrases, a):
    """Score each keyphrase straight from the array dictionary ``a``."""
    hid = a["final.w"].size

    def bigru(ids, prefix):
        x = a["emb"][ids]
        fwd = ref_gru(x, np.zeros(hid), a[f"{prefix}_fwd.wx"], a[f"{prefix}_fwd.wh"], a[f"{prefix}_fwd.b"])
        bwd = ref_gru(x[::-1], np.zeros(hid), a[f"{prefix}_bwd.wx"], a[f"{prefix}_bwd.wh"],
                      a[f"{prefix}_bwd.b"])[::-1]
        return fwd, bwd

    fwd, bwd = bigru(doc, "doc")
    h = np.hstack([fwd, bwd])
    es = []
    for phrase in phrases:
        pf, pb = bigru(phrase, "kp")
        k = np.concatenate([pf[-1], pb[0]])
        scores = np.array([k @ a["attn.w"] @ hi for hi in h])
        w = np.exp(scores - scores.max())
        w /= w.sum()
        es.append(np.concatenate([w @ h, k]))
    top_in = np.vstack([np.hstack([h, np.zeros_like(h)]), np.array(es)])
    s = ref_gru(top_in, np.zeros(hid), a["top.wx"], a["top.wh"], a["top.b"])
    return sigmoid(s[len(doc):] @ a["final.w"])


def test_matches_direct_recomputation():
    params = _params(scale=1.0)
    doc, phrases = [5, 6, 7], [[8, 9], [6]]
    got = dsc.score_sequence(doc, phrases, params).scores.data
    np.testing.assert_allclose(got, _oracle_scores(doc, phrases, params.arrays()), rtol=1e-12)


def test_zero_final_weight_scores_half():
    params = _params()
    arrays = params.arrays()
    arrays["final.w"] = np.zeros_like(arrays["final.w"])
    params = params.replace(arrays)
    trace = dsc.score_sequence([5, 6, 7, 8], [[5], [9, 10]], params)
    np.testing.assert_array_equal(trace.scores.data, [0.5, 0.5])
    loss = dsc.disc_loss([trace], [dsc.score_sequence([5, 6], [[7]], params)])
    assert loss.item() == pytest.approx(math.log(2.0), abs=1e-15)


def test_earlier_scores_ignore_later_phrases():
    params = _params(scale=1.0)
    full = dsc.score_sequence([5, 6, 7], [[8], [9, 10], [11]], params).scores.data
    prefix = dsc.score_sequence([5, 6, 7], [[8], [9, 10]], params).scores.data
    np.testing.assert_array_equal(full[:2], prefix)


def test_oov_ids_read_as_unk():
    params = _params(scale=1.0)
    a = dsc.score_sequence([5, 40, 6], [[41]], params).scores.data
    b = dsc.score_sequence([5, 1, 6], [[1]], params).scores.data
    np.testing.assert_array_equal(a, b)


def test_attention_weights_sum_to_one():
    params = _params(scale=1.0)
    h = dsc.encode_document([5, 6, 7, 8], params)
    k = dsc.encode_keyphrases([[9]], params)[0]
    _, w = dsc.context_vector(h, k, params)
    assert w.data.sum() == pytest.approx(1.0, abs=1e-14)


def test_scorer_is_read_only():
    params = _params(scale=1.0)
    before = {k: v.copy() for k, v in params.arrays().items()}

    class Doc:
        ids = (5, 6, 7)

    scores = dsc.Scorer(params)(Doc(), [[8], [9]])
    assert scores.shape == (2,)
    for k, v in params.arrays().items():
        np.testing.assert_array_equal(v, before[k])
    assert not any(t.parents for t in params.tensors.values())


def test_empty_inputs_rejected():
    params = _params()
    with pytest.raises(dsc.EmptyInputError):
        dsc.score_sequence([5], [], params)
    with pytest.raises(dsc.EmptyInputError):
        dsc.score_sequence([5], [[]], params)
    with pytest.raises(dsc.EmptyInputError):
        dsc.score_sequence([], [[5]], params)


def test_loss_gradient_reaches_every_tensor():
    params = _params(scale=1.0)
    loss = dsc.disc_loss([dsc.score_sequence([5, 6, 7], [[8, 9]], params)],
                         [dsc.score_sequence([5, 6, 7], [[10]], params)])
    grads = nm.gradients(loss, params.tensors)
    for name in ("attn.w", "top.wh", "final.w", "kp_fwd.wx", "doc_bwd.wh"):
        assert np.abs(grads[name]).sum() > 0, name


def test_single_position_context_is_that_state():
    params = _params(scale=1.0)
    h = dsc.encode_document([7], params)
    c, _ = dsc.context_vector(h, dsc.encode_keyphrases([[5]], params)[0], params)
    np.testing.assert_array_equal(c.data, h.data[0])


def test_zero_attention_matrix_averages():
    params = _params(scale=1.0)
    arrays = params.arrays()
    arrays["attn.w"] = np.zeros_like(arrays["attn.w"])
    params = params.replace(arrays)
    h = dsc.encode_document([5, 6, 7], params)
    c, w = dsc.context_vector(h, dsc.encode_keyphrases([[8]], params)[0], params)
    np.testing.assert_allclose(w.data, 1 / 3, rtol=1e-15)
    np.testing.assert_allclose(c.data, h.data.mean(axis=0), rtol=1e-12, atol=1e-15)


def test_shared_phrase_encoder():
    params = _params(scale=1.0)
    a, b, c = dsc.encode_keyphrases([[5, 6], [7], [5, 6]], params)
    np.testing.assert_array_equal(a.data, c.data)
    assert not np.array_equal(a.data, b.data)


def test_zero_params_give_zero_phrase_vectors():
    params = _params()
    params = params.replace({k: np.zeros_like(v) for k, v in params.arrays().items()})
    for k in dsc.encode_keyphrases([[5, 6, 7]], params):
        np.testing.assert_array_equal(k.data, 0.0)


def test_loss_symmetric_under_label_swap():
    params = _params(scale=1.0)
    t1 = dsc.score_sequence([5, 6], [[7], [8]], params)
    t2 = dsc.score_sequence([5, 6], [[9]], params)
    flipped = [dsc.DiscriminatorTrace(t.states, -t.logits, nm.sigmoid(-t.logits)) for t in (t1, t2)]
    assert dsc.disc_loss([t1], [t2]).item() == pytest.approx(dsc.disc_loss([flipped[1]], [flipped[0]]).item(),
                                                             abs=1e-15)
