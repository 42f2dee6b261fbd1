"""catSeq generator: bi-GRU encoder, attentive GRU decoder, pointer-style copy.

At decoder step ``t`` with state ``s_t``::

    a_t   = softmax(s_t W_a h_i)                 over source positions
    c_t   = sum_i a_t[i] h_i
    o_t   = tanh([s_t; c_t] W_c + b_c)
    p_gen = softmax(o_t W_o + b_o)                over the base vocabulary
    g_t   = sigmoid([s_t; c_t] . w_g + b_g)
    p     = g_t * p_gen (zero-padded to V + |oov|) + (1 - g_t) * copy(a_t)

``copy`` sums attention mass per extended id, so repeated source tokens pool
their weight and source OOV tokens are reachable only through it.
"""

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .corpus import BOS, EOS, SEP, UNK, KeyphraseSequence


class EmptyInputError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorDims:
    vocab_size: int
    emb_dim: int = 64
    hidden_dim: int = 128


@dataclass
class GeneratorParams:
    dims: GeneratorDims
    tensors: dict

    def __getitem__(self, name):
        return self.tensors[name]

    def arrays(self):
        return {k: t.data for k, t in self.tensors.items()}

    def replace(self, arrays):
        """New params holding ``arrays`` (same names)."""
        return GeneratorParams(self.dims, {k: nm.parameter(arrays[k], name=k) for k in self.tensors})


def init_generator(dims, rng):
    v, e, h = dims.vocab_size, dims.emb_dim, dims.hidden_dim
    t = {}
    t["emb"] = nm.uniform_init(rng, (v, e), name="emb")
    t.update(nm.init_gru(rng, e, h, "enc_fwd"))
    t.update(nm.init_gru(rng, e, h, "enc_bwd"))
    t["init.w"] = nm.uniform_init(rng, (2 * h, h), name="init.w")
    t["init.b"] = nm.zeros_init((h,), name="init.b")
    t.update(nm.init_gru(rng, e, h, "dec"))
    t["attn.w"] = nm.uniform_init(rng, (h, 2 * h), name="attn.w")
    t["out.wc"] = nm.uniform_init(rng, (3 * h, h), name="out.wc")
    t["out.bc"] = nm.zeros_init((h,), name="out.bc")
    t["out.w"] = nm.uniform_init(rng, (h, v), name="out.w")
    t["out.b"] = nm.zeros_init((v,), name="out.b")
    t["gate.w"] = nm.uniform_init(rng, (3 * h,), name="gate.w")
    t["gate.b"] = nm.zeros_init((1,), name="gate.b")
    return GeneratorParams(dims, t)


@dataclass
class DocumentEncoding:
    h: nm.Tensor            # (n, 2H) concatenated forward/backward states
    keys: nm.Tensor         # (n, H) = h W_a^T, reused by every attention step
    init_state: nm.Tensor   # (H,)
    copy_matrix: np.ndarray  # (n, V + |oov|) one-hot rows of extended ids

    def __len__(self):
        return self.h.shape[0]


def _input_ids(ids, vocab_size):
    ids = np.asarray(ids, dtype=np.int64)
    return np.where(ids >= vocab_size, UNK, ids)


def encode_document(doc, params):
    n = len(doc.ids)
    if n == 0:
        raise EmptyInputError("cannot encode an empty document")
    hid = params.dims.hidden_dim
    vsize = params.dims.vocab_size
    x = nm.embedding(params["emb"], _input_ids(doc.ids, vsize))
    zero = nm.Tensor(np.zeros(hid))
    fwd = nm.gru_sequence(x, zero, nm.gru_from(params.tensors, "enc_fwd"))
    bwd = nm.gru_sequence(x, zero, nm.gru_from(params.tensors, "enc_bwd"), reverse=True)
    h = nm.concat([fwd, bwd], axis=1)
    final = nm.concat([fwd[n - 1], bwd[0]])
    init_state = nm.tanh(final @ params["init.w"] + params["init.b"])
    keys = h @ nm.transpose(params["attn.w"])
    copy = np.zeros((n, vsize + len(doc.oov_list)))
    copy[np.arange(n), np.asarray(doc.extended_ids)] = 1.0
    return DocumentEncoding(h, keys, init_state, copy)


def output_distribution(states, enc, params):
    """Final distributions for the decoder state rows ``states`` (T x H).

    Returns ``(probs (T x V_ext), attention (T x n), gate (T x 1))``.
    """
    attn = nm.softmax(states @ nm.transpose(enc.keys))
    context = attn @ enc.h
    sc = nm.concat([states, context], axis=1)
    hidden = nm.tanh(sc @ params["out.wc"] + params["out.bc"])
    p_gen = nm.softmax(hidden @ params["out.w"] + params["out.b"])
    gate = nm.sigmoid(nm.reshape(sc @ params["gate.w"], (-1, 1)) + params["gate.b"])
    n_oov = enc.copy_matrix.shape[1] - params.dims.vocab_size
    if n_oov:
        p_gen = nm.concat([p_gen, nm.Tensor(np.zeros((states.shape[0], n_oov)))], axis=1)
    p_copy = attn @ nm.Tensor(enc.copy_matrix)
    probs = gate * p_gen + (1.0 - gate) * p_copy
    return probs, attn, gate


def decode_step(state, prev_token_id, enc, params):
    """One decoder step; returns ``(dist, new_state, attention)`` as Tensors."""
    vsize = params.dims.vocab_size
    limit = enc.copy_matrix.shape[1]
    if not 0 <= prev_token_id < limit:
        raise nm.DimensionError(f"token id {prev_token_id} outside extended vocabulary of size {limit}")
    x = params["emb"][int(_input_ids([prev_token_id], vsize)[0])]
    new_state = nm.gru_cell(x, state, nm.gru_from(params.tensors, "dec"))
    probs, attn, _ = output_distribution(nm.reshape(new_state, (1, -1)), enc, params)
    return probs[0], new_state, attn[0]


def sequence_log_probs(doc, target_ids, params, enc=None):
    """Teacher-forced ``log p(target[t] | target[:t], doc)`` for every position."""
    target = np.asarray(target_ids, dtype=np.int64)
    if target.size == 0:
        raise EmptyInputError("target sequence is empty")
    if enc is None:
        enc = encode_document(doc, params)
    inputs = np.concatenate([[BOS], target[:-1]])
    x = nm.embedding(params["emb"], _input_ids(inputs, params.dims.vocab_size))
    states = nm.gru_sequence(x, enc.init_state, nm.gru_from(params.tensors, "dec"))
    probs, _, _ = output_distribution(states, enc, params)
    return nm.log(nm.pick(probs, np.arange(target.size), target))


def teacher_forced_nll(doc, target_ids, params):
    target = list(target_ids)
    if not target:
        raise EmptyInputError("target sequence is empty")
    if target[-1] != EOS:
        raise ValueError("target must end with EOS")
    return -nm.mean(sequence_log_probs(doc, target, params))


def teacher_forced_accuracy(doc, target_ids, params):
    """(correct, total) argmax predictions under teacher forcing."""
    target = np.asarray(target_ids, dtype=np.int64)
    with nm.no_grad():
        enc = encode_document(doc, params)
        inputs = np.concatenate([[BOS], target[:-1]])
        x = nm.embedding(params["emb"], _input_ids(inputs, params.dims.vocab_size))
        states = nm.gru_sequence(x, enc.init_state, nm.gru_from(params.tensors, "dec"))
        probs, _, _ = output_distribution(states, enc, params)
    pred = probs.data.argmax(axis=1)
    return int((pred == target).sum()), int(target.size)


@dataclass
class SampledSequence:
    tokens: list              # emitted ids, including the terminating EOS if reached
    log_probs: np.ndarray     # log-probability of each emitted token
    phrases: KeyphraseSequence
    groups: list              # per-phrase lists of positions into ``tokens``

    def phrase_log_probs(self):
        return np.array([self.log_probs[g].sum() for g in self.groups])


def _group_positions(tokens):
    """Assign every emitted position to a phrase.

    A phrase owns its tokens and the delimiter that closes it; delimiters of
    empty phrases go to the next non-empty phrase (or the last one).
    """
    groups, pending, current = [], [], []
    for pos, tok in enumerate(tokens):
        if tok in (SEP, EOS):
            if current:
                groups.append(pending + current + [pos])
                pending, current = [], []
            else:
                pending.append(pos)
            if tok == EOS:
                break
        else:
            current.append(pos)
    if current:
        groups.append(pending + current)
        pending = []
    if pending and groups:
        groups[-1].extend(pending)
    return groups


def _run_decoder(doc, params, max_len, choose):
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    tokens, log_probs = [], []
    with nm.no_grad():
        enc = encode_document(doc, params)
        state, prev = enc.init_state, BOS
        for _ in range(max_len):
            dist, state, _ = decode_step(state, prev, enc, params)
            p = dist.data
            tok = choose(p)
            tokens.append(tok)
            log_probs.append(np.log(p[tok]) if p[tok] > 0 else -np.inf)
            if tok == EOS:
                break
            prev = tok
    return tokens, np.array(log_probs)


def greedy_decode(doc, params, max_len, max_phrase_len=None):
    tokens, _ = _run_decoder(doc, params, max_len, lambda p: int(np.argmax(p)))
    return KeyphraseSequence.split(tokens, max_phrase_len=max_phrase_len)


def draw_token(p, rng):
    """Inverse-CDF draw from the probability vector ``p`` (one uniform per call)."""
    cdf = np.cumsum(p)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), p.size - 1))


def sample_decode(doc, params, max_len, rng, max_phrase_len=None):
    return _as_sample(_run_decoder(doc, params, max_len, lambda p: draw_token(p, rng)), max_phrase_len)


def greedy_sample(doc, params, max_len, rng=None, max_phrase_len=None):
    """The greedy decode packaged as a :class:`SampledSequence` (``rng`` is unused)."""
    return _as_sample(_run_decoder(doc, params, max_len, lambda p: int(np.argmax(p))), max_phrase_len)


def _as_sample(decoded, max_phrase_len):
    tokens, log_probs = decoded
    phrases = KeyphraseSequence.split(tokens, max_phrase_len=max_phrase_len)
    return SampledSequence(tokens, log_probs, phrases, _group_positions(tokens))
