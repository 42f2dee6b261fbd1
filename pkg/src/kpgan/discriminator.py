"""Hierarchical-attention discriminator.

Layer one encodes the document with a bi-GRU (``h_1..h_n``) and every
keyphrase with a second, shared bi-GRU (``k_j``).  Each keyphrase attends over
``h`` to get ``c_j`` and forms ``e_j = [c_j; k_j]``.  Layer two is a forward
GRU reading ``h_1..h_n`` and then ``e_1..e_m`` from a zero state; keyphrase
``i`` is scored by ``sigmoid(w_f . s_{n+i})``.

``h_t`` has half the width of ``e_j``, so document steps are fed to the
second layer zero-padded as ``[h_t; 0]``.
"""

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .corpus import UNK


class EmptyInputError(ValueError):
    pass


@dataclass(frozen=True)
class DiscriminatorDims:
    vocab_size: int
    emb_dim: int = 64
    hidden_dim: int = 128


@dataclass
class DiscriminatorParams:
    dims: DiscriminatorDims
    tensors: dict

    def __getitem__(self, name):
        return self.tensors[name]

    def arrays(self):
        return {k: t.data for k, t in self.tensors.items()}

    def replace(self, arrays):
        return DiscriminatorParams(self.dims, {k: nm.parameter(arrays[k], name=k) for k in self.tensors})


def init_discriminator(dims, rng):
    v, e, h = dims.vocab_size, dims.emb_dim, dims.hidden_dim
    t = {"emb": nm.uniform_init(rng, (v, e), name="emb")}
    t.update(nm.init_gru(rng, e, h, "doc_fwd"))
    t.update(nm.init_gru(rng, e, h, "doc_bwd"))
    t.update(nm.init_gru(rng, e, h, "kp_fwd"))
    t.update(nm.init_gru(rng, e, h, "kp_bwd"))
    t["attn.w"] = nm.uniform_init(rng, (2 * h, 2 * h), name="attn.w")
    t.update(nm.init_gru(rng, 4 * h, h, "top"))
    t["final.w"] = nm.uniform_init(rng, (h,), name="final.w")
    return DiscriminatorParams(dims, t)


@dataclass
class DiscriminatorTrace:
    states: nm.Tensor   # (n + m, H) second-layer states s_1..s_{n+m}
    logits: nm.Tensor   # (m,)
    scores: nm.Tensor   # (m,) = sigmoid(logits)

    def __len__(self):
        return self.scores.shape[0]


def _ids(ids, vocab_size):
    ids = np.asarray(ids, dtype=np.int64)
    return np.where(ids >= vocab_size, UNK, ids)


def _bigru(ids, params, prefix):
    x = nm.embedding(params["emb"], _ids(ids, params.dims.vocab_size))
    zero = nm.Tensor(np.zeros(params.dims.hidden_dim))
    fwd = nm.gru_sequence(x, zero, nm.gru_from(params.tensors, f"{prefix}_fwd"))
    bwd = nm.gru_sequence(x, zero, nm.gru_from(params.tensors, f"{prefix}_bwd"), reverse=True)
    return fwd, bwd


def encode_document(doc_ids, params):
    if len(doc_ids) == 0:
        raise EmptyInputError("cannot encode an empty document")
    fwd, bwd = _bigru(doc_ids, params, "doc")
    return nm.concat([fwd, bwd], axis=1)


def encode_keyphrases(phrases, params):
    """``k_j = [final forward state; final backward state]`` per phrase."""
    if len(phrases) == 0:
        raise EmptyInputError("need at least one keyphrase")
    out = []
    for phrase in phrases:
        if len(phrase) == 0:
            raise EmptyInputError("keyphrases must be non-empty")
        fwd, bwd = _bigru(phrase, params, "kp")
        out.append(nm.concat([fwd[len(phrase) - 1], bwd[0]]))
    return out


def context_vector(h, k, params):
    """Attention-weighted average of ``h`` rows with scores ``k W_a h_i``."""
    weights = nm.softmax(h @ (k @ params["attn.w"]))
    return weights @ h, weights


def score_sequence(doc_ids, phrases, params):
    if len(phrases) == 0:
        raise EmptyInputError("score_sequence needs m >= 1 keyphrases")
    h = encode_document(doc_ids, params)
    ks = encode_keyphrases(phrases, params)
    es = [nm.concat([context_vector(h, k, params)[0], k]) for k in ks]
    n, width = h.shape
    padded = nm.concat([h, nm.Tensor(np.zeros((n, width)))], axis=1)
    inputs = nm.concat([padded, nm.stack_rows(es)], axis=0)
    states = nm.gru_sequence(inputs, nm.Tensor(np.zeros(params.dims.hidden_dim)),
                             nm.gru_from(params.tensors, "top"))
    logits = states[n:] @ params["final.w"]
    return DiscriminatorTrace(states, logits, nm.sigmoid(logits))


def disc_loss(real_traces, fake_traces):
    """Mean binary cross-entropy over every keyphrase score (real=1, fake=0)."""
    terms = [nm.sum(nm.softplus(-t.logits)) for t in real_traces]
    terms += [nm.sum(nm.softplus(t.logits)) for t in fake_traces]
    if not terms:
        raise EmptyInputError("disc_loss needs at least one trace")
    count = sum(len(t) for t in real_traces) + sum(len(t) for t in fake_traces)
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total * (1.0 / count)


class Scorer:
    """Frozen reward model: ``scorer(doc, phrases)`` -> per-keyphrase scores."""

    def __init__(self, params):
        self.params = params

    def __call__(self, doc, phrases):
        with nm.no_grad():
            return score_sequence(doc.ids, phrases, self.params).scores.data.copy()
