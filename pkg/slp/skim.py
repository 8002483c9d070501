"""
Skimming and locating: encode both modalities, fuse the query into every
frame, reason over a query-conditioned frame graph and score each frame's
probability of lying inside the queried segment.
"""
from collections import namedtuple
import logging

import numpy as np

from slp import tensor as tn
from slp.exceptions import ContractError, DimensionError
from slp.layers import (
    AttentionBlock, BiGRULayer, LinearLayer, MLP3, bigru, self_attention
)


logger = logging.getLogger(__name__)

EPSILON = 1e-7

EncodedPair = namedtuple('EncodedPair', ['V', 'Q'])

# every intermediate of one forward pass, frame scores last
SkimResult = namedtuple('SkimResult', ['V', 'Q', 'M', 'Vhat', 'A', 'Vtilde', 'p'])


def create_params(params, config, rng):
    d, d_in = config.d_model, config.d_in
    for modality in ('video', 'query'):
        prefix = 'sl.%s' % modality
        LinearLayer.create(params, prefix + '.proj', d_in, d, rng, bias='bias_uniform')
        if config.use_attention:
            AttentionBlock.create(params, prefix + '.attention', d, config.heads, rng)
        BiGRULayer.create(params, prefix + '.gru', d, rng)
    LinearLayer.create(params, 'sl.qcc.frame', d, d, rng)
    LinearLayer.create(params, 'sl.qcc.word', d, d, rng, bias=None)
    params.add('sl.qcc.score.w', (d,), 'xavier_uniform', rng)
    LinearLayer.create(params, 'sl.qcc.context', d, d, rng, bias=None)
    LinearLayer.create(params, 'sl.graph.frame', 2 * d, d, rng, bias=None)
    LinearLayer.create(params, 'sl.graph.query', d, d, rng, bias=None)
    LinearLayer.create(params, 'sl.graph.out', 2 * d, d, rng, bias=None)
    for layer in range(2, config.graph_layers + 1):
        LinearLayer.create(params, 'sl.graph.layer%s' % layer, d, d, rng, bias=None)
    MLP3.create(params, 'sl.classifier', d, rng)


def _encode_modality(raw, params, prefix, config):
    raw = tn.as_tensor(raw)
    if raw.ndim != 2 or raw.shape[1] != config.d_in:
        raise DimensionError('encode %s' % prefix, raw.shape, (raw.shape[0], config.d_in))
    x = LinearLayer.bind(params, prefix + '.proj')(raw)
    if config.use_attention:
        x = self_attention(x, AttentionBlock.bind(params, prefix + '.attention', config.heads))
    return bigru(x, BiGRULayer.bind(params, prefix + '.gru'))


def encode_query(query_raw, params, config):
    return _encode_modality(query_raw, params, 'sl.query', config)


def encode(video_raw, query_raw, params, config):
    """
    Input projection, one self-attention layer (unless disabled) and a Bi-GRU
    per modality, with separate weights for video and query.
    """
    return EncodedPair(
        _encode_modality(video_raw, params, 'sl.video', config),
        encode_query(query_raw, params, config),
    )


def frame_word_attention(V, Q, params):
    """ m[t, n] = wᵀ tanh(W₁ v_t + W₂ q_n + b) """
    V, Q = tn.as_tensor(V), tn.as_tensor(Q)
    if V.ndim != 2 or Q.ndim != 2 or V.shape[1] != Q.shape[1]:
        raise DimensionError('frame_word_attention', V.shape, Q.shape)
    frames = LinearLayer.bind(params, 'sl.qcc.frame')(V)
    words = LinearLayer.bind(params, 'sl.qcc.word')(Q)
    w = params['sl.qcc.score.w']
    # row t * N + n of the pairwise sums is W₁ v_t + b + W₂ q_n
    scores = tn.matmul(tn.tanh(tn.pairwise_sum(frames, words)), w)
    return tn.reshape(scores, (V.shape[0], Q.shape[0]))


def fuse(V, Q, M, params):
    """
    v̂_t = [v_t ; Σ_n softmax_n(m[t, ·]) W^Q q_n]. The first D columns of the
    result are V itself.
    """
    V, Q, M = tn.as_tensor(V), tn.as_tensor(Q), tn.as_tensor(M)
    if M.shape != [V.shape[0], Q.shape[0]] or V.shape[1] != Q.shape[1]:
        raise DimensionError('fuse', V.shape, Q.shape, M.shape)
    weights = tn.softmax(M, axis=1)
    context = tn.matmul(weights, LinearLayer.bind(params, 'sl.qcc.context')(Q))
    return tn.concat(V, context, axis=1)


def build_graph(Vhat, Q, params):
    """
    B = (V̂ W₁)(Q W₂)ᵀ and A = softmax_rows(B) · softmax_rows(Bᵀ). Both
    factors are row-stochastic so every row of A sums to one.
    """
    Vhat, Q = tn.as_tensor(Vhat), tn.as_tensor(Q)
    if Vhat.ndim != 2 or Q.ndim != 2 or Vhat.shape[1] != 2 * Q.shape[1]:
        raise DimensionError('build_graph', Vhat.shape, Q.shape)
    frames = LinearLayer.bind(params, 'sl.graph.frame')(Vhat)
    words = LinearLayer.bind(params, 'sl.graph.query')(Q)
    B = tn.matmul(frames, tn.transpose(words))
    return tn.matmul(tn.softmax(B, axis=1), tn.softmax(tn.transpose(B), axis=1))


def graph_reason(A, Vhat, params, layers=1):
    """
    Ṽ = (A + I) V̂ W₃. ``layers=0`` leaves only the V̂ W₃ projection and
    ``layers=2`` applies one more (A + I) X W propagation on top.
    """
    A, Vhat = tn.as_tensor(A), tn.as_tensor(Vhat)
    T = Vhat.shape[0]
    if A.shape != [T, T]:
        raise DimensionError('graph_reason', A.shape, Vhat.shape)
    out = LinearLayer.bind(params, 'sl.graph.out')
    if layers == 0:
        return out(Vhat)
    propagate = tn.add(A, tn.constant(np.eye(T)))
    X = out(tn.matmul(propagate, Vhat))
    for layer in range(2, layers + 1):
        X = LinearLayer.bind(params, 'sl.graph.layer%s' % layer)(tn.matmul(propagate, X))
    return X


def classify_frames(Vtilde, params):
    return MLP3.bind(params, 'sl.classifier')(Vtilde)


def frame_labels(gt, T):
    labels = np.zeros(T)
    labels[gt.start:gt.end + 1] = 1.0
    return labels


def bce_loss(p, y_gt):
    """ Mean binary cross-entropy with p clamped into [1e-7, 1 - 1e-7] """
    p = tn.as_tensor(p)
    y_gt = np.asarray(y_gt, dtype=np.float64)
    if p.ndim != 1 or y_gt.shape != tuple(p.shape):
        raise DimensionError('bce_loss', p.shape, y_gt.shape)
    p = tn.clip(p, EPSILON, 1.0 - EPSILON)
    positive = tn.mul(tn.log(p), y_gt)
    negative = tn.mul(tn.log(1.0 - p), 1.0 - y_gt)
    return -tn.reduce_mean(positive + negative)


def topk_frames(p, K):
    """
    Indices of the K highest scores, best first; equal scores go to the
    smaller index.
    """
    scores = p.data if isinstance(p, tn.Tensor) else np.asarray(p, dtype=np.float64)
    T = scores.shape[0]
    if not 1 <= K <= T:
        raise ContractError('K must lie in [1, %s], got %s' % (T, K))
    order = np.lexsort((np.arange(T), -scores))
    return [int(t) for t in order[:K]]


def skim(video_raw, query_raw, params, config):
    V, Q = encode(video_raw, query_raw, params, config)
    M = frame_word_attention(V, Q, params)
    Vhat = fuse(V, Q, M, params)
    A = build_graph(Vhat, Q, params)
    Vtilde = graph_reason(A, Vhat, params, layers=config.graph_layers)
    return SkimResult(V, Q, M, Vhat, A, Vtilde, classify_frames(Vtilde, params))
