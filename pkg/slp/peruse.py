"""
Boundary perusing: grow a segment outward from an anchor frame one neighbour
at a time, absorbing a frame into the running segment state whenever it
matches both the query and what has been absorbed so far.
"""
from collections import namedtuple
import logging

import numpy as np

from slp import tensor as tn
from slp.configuration import DIRECTIONS
from slp.exceptions import ContractError, DegenerateInputError, DimensionError
from slp.layers import LinearLayer, MLP3
from slp.recurrent import gated_scan


logger = logging.getLogger(__name__)

LEFT = 'left'
RIGHT = 'right'

UPDATE_GATES = ('reset1', 'reset2', 'candidate', 'gate')

Step = namedtuple('Step', ['side', 'frame', 'score', 'accepted'])

# the six cosine scores one margin-loss sample is built from; the two
# mismatched-query/mismatched-segment entries may be None when no such
# partner exists, which drops that hinge term
Triplet = namedtuple('Triplet', ['vq', 'vbar_q', 'v_qbar', 'vH', 'vbar_H', 'v_Hbar'])


class Segment(object):
    """
    Inclusive frame interval ``[start, end]`` grown from ``anchor``. Ground
    truth segments have no meaningful anchor and use their start.
    """

    def __init__(self, start, end, anchor=None):
        self.start = int(start)
        self.end = int(end)
        self.anchor = self.start if anchor is None else int(anchor)
        if not self.start <= self.anchor <= self.end:
            raise ContractError('invalid segment start=%s anchor=%s end=%s' % (
                self.start, self.anchor, self.end))

    @property
    def length(self):
        return self.end - self.start + 1

    def contains(self, frame):
        return self.start <= frame <= self.end

    def validate(self, T):
        if self.start < 0 or self.end >= T:
            raise ContractError('segment [%s, %s] does not fit in %s frames' % (self.start, self.end, T))
        return self

    def as_dict(self):
        return {'start': self.start, 'end': self.end, 'anchor': self.anchor}

    def __eq__(self, other):
        return (isinstance(other, Segment) and
                (self.start, self.end, self.anchor) == (other.start, other.end, other.anchor))

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash((self.start, self.end, self.anchor))

    def __repr__(self):
        return '<Segment [%s, %s] anchor=%s>' % (self.start, self.end, self.anchor)


def temporal_iou(a, b):
    """ Overlap over union of two inclusive integer intervals """
    overlap = max(0, min(a.end, b.end) - max(a.start, b.start) + 1)
    return overlap / float(a.length + b.length - overlap)


def create_params(params, config, rng):
    d = config.d_model
    if config.update_strategy == 'gated':
        for gate in UPDATE_GATES:
            LinearLayer.create(params, 'bp.update.%s_frame' % gate, d, d, rng)
            LinearLayer.create(params, 'bp.update.%s_state' % gate, d, d, rng, bias=None)
    elif config.update_strategy == 'concat':
        LinearLayer.create(params, 'bp.update.concat', 2 * d, d, rng)
    MLP3.create(params, 'bp.confidence', d, rng)
    MatchingSpace.create(params, d, rng)


def linguistic_score(v, Q):
    """ Mean cosine between a frame and every query word """
    return tn.reduce_mean(tn.row_cosines(Q, v))


def visual_score(v, H):
    return tn.cosine(v, H)


def matching_score(v, H, Q, alpha1, alpha2):
    if alpha1 < 0 or alpha2 < 0:
        raise ContractError('alpha weights must be >= 0, got %s and %s' % (alpha1, alpha2))
    return alpha1 * linguistic_score(v, Q) + alpha2 * visual_score(v, H)


class MatchingSpace(object):
    """
    Bias-free linear maps taking frames (and segment states, which live with
    the frames) and query words into the space the matching score compares
    them in. Both maps start as the identity, so an untrained space scores
    the features themselves, and a positive rescaling of the inputs leaves
    every score unchanged.
    """

    def __init__(self, frame, query):
        self.frame = frame
        self.query = query

    @classmethod
    def create(cls, params, d, rng):
        return cls(
            LinearLayer.create(params, 'bp.match.frame', d, d, rng, bias=None, weight='identity'),
            LinearLayer.create(params, 'bp.match.query', d, d, rng, bias=None, weight='identity'),
        )

    @classmethod
    def bind(cls, params):
        return cls(LinearLayer.bind(params, 'bp.match.frame'), LinearLayer.bind(params, 'bp.match.query'))

    def frames(self, x):
        return self.frame(x)

    def words(self, Q):
        return self.query(Q)

    def score(self, v, H, Q, alpha1, alpha2):
        """ Matching score of an already projected frame and query """
        return matching_score(v, self.frames(H), Q, alpha1, alpha2)


def _hinge(margin, positive, negative):
    if negative is None:
        return None
    return tn.relu(margin - tn.as_tensor(positive) + negative)


def triplet_losses(triplets, beta1, beta2, gamma1=1.0, gamma2=0.5):
    """
    γ₁ℒ^{vq} + γ₂ℒ^{vH} averaged over ``triplets``, each ℒ the sum of its two
    hinge terms with margin β. Hinges whose negative is missing are dropped.
    """
    if beta1 < 0 or beta2 < 0:
        raise ContractError('margins must be >= 0, got %s and %s' % (beta1, beta2))
    if not triplets:
        raise ContractError('no triplets to score')
    total = None
    for t in triplets:
        terms = []
        for weight, margin, positive, negatives in (
                (gamma1, beta1, t.vq, (t.vbar_q, t.v_qbar)),
                (gamma2, beta2, t.vH, (t.vbar_H, t.v_Hbar))):
            for negative in negatives:
                hinge = _hinge(margin, positive, negative)
                if hinge is not None:
                    terms.append(weight * hinge)
        for term in terms:
            total = term if total is None else total + term
    if total is None:
        return tn.constant(0.0)
    return total / float(len(triplets))


def threshold_loss(accepted, rejected, theta, margin):
    """
    Mean hinge pushing the matching scores in ``accepted`` to at least
    ``theta + margin`` and those in ``rejected`` to at most ``theta - margin``.
    """
    if margin < 0:
        raise ContractError('threshold margin must be >= 0, got %s' % margin)
    terms = [tn.relu(theta + margin - tn.as_tensor(s)) for s in accepted]
    terms += [tn.relu(tn.as_tensor(s) - theta + margin) for s in rejected]
    if not terms:
        raise ContractError('no scores to place around the threshold')
    return tn.reduce_mean(tn.stack(terms))


def segment_update(H, v, params, strategy='gated'):
    """
    Fold frame ``v`` into segment state ``H``.

    ``gated`` uses two reset gates (one per operand) and an update gate:
    H' = z ⊙ tanh(W r₁⊙v + U r₂⊙H + b) + (1 - z) ⊙ H. ``maxpool`` keeps the
    elementwise maximum and ``concat`` projects [H ; v] back to D.
    """
    H, v = tn.as_tensor(H), tn.as_tensor(v)
    if H.ndim != 1 or H.shape != v.shape:
        raise DimensionError('segment_update', H.shape, v.shape)
    if strategy == 'maxpool':
        return tn.maximum(H, v)
    if strategy == 'concat':
        return tn.tanh(LinearLayer.bind(params, 'bp.update.concat')(tn.concat(H, v)))
    if strategy != 'gated':
        raise ContractError('unknown update strategy %r' % strategy)

    return gated_scan(H, tn.reshape(v, (1, v.shape[0])), update_weights(params))


def update_weights(params):
    """ The gated update's tensors in the order :func:`gated_scan` takes them """
    weights = []
    for gate in UPDATE_GATES:
        frame = LinearLayer.bind(params, 'bp.update.%s_frame' % gate)
        weights.extend([frame.W, frame.b, params['bp.update.%s_state.W' % gate]])
    return weights


def confidence(H, params):
    return MLP3.bind(params, 'bp.confidence')(H)


def conf_loss(c, c_gt):
    """ Smooth-L1 of a confidence, or a vector of them, against IoU targets """
    c_gt = np.asarray(c_gt, dtype=np.float64)
    if np.any((c_gt < 0.0) | (c_gt > 1.0)):
        raise ContractError('confidence target must lie in [0, 1], got %s' % c_gt)
    return tn.smooth_l1(tn.as_tensor(c) - c_gt)


def absorption_order(segment):
    """
    Frames of ``segment`` other than its anchor, outward from the anchor
    alternately left then right until the interval is covered.
    """
    order = []
    left = right = segment.anchor
    while left > segment.start or right < segment.end:
        if left > segment.start:
            left -= 1
            order.append(left)
        if right < segment.end:
            right += 1
            order.append(right)
    return order


def absorbed(trace):
    """ Frames a perusal absorbed, in the order it absorbed them """
    return [step.frame for step in trace if step.accepted]


def fold(Vtilde, anchor, frames, params, strategy='gated'):
    """ State grown from ``anchor`` by absorbing ``frames`` in order """
    Vtilde = tn.as_tensor(Vtilde)
    H = Vtilde[anchor]
    if not frames:
        return H
    if strategy == 'gated':
        return gated_scan(H, Vtilde[list(frames)], update_weights(params))
    for frame in frames:
        H = segment_update(H, Vtilde[frame], params, strategy)
    return H


def grow_state(Vtilde, segment, params, strategy='gated'):
    """ Segment state for a known interval, see :func:`absorption_order` """
    Vtilde = tn.as_tensor(Vtilde)
    segment.validate(Vtilde.shape[0])
    return fold(Vtilde, segment.anchor, absorption_order(segment), params, strategy)


class PeruseResult(object):

    def __init__(self, segment, state, confidence, trace):
        self.segment = segment
        self.state = state
        self.confidence = confidence
        self.trace = trace

    @property
    def score(self):
        return self.confidence.item()

    def as_dict(self):
        return {
            'segment': self.segment.as_dict(),
            'confidence': self.score,
            'trace': [dict(p._asdict()) for p in self.trace],
        }

    def __repr__(self):
        return '<PeruseResult %r confidence=%.4f steps=%s>' % (self.segment, self.score, len(self.trace))


class _Perusal(object):
    """ Mutable state of one expansion; the public entry point is :func:`peruse` """

    def __init__(self, anchor, Vtilde, Q, theta, params, alpha, strategy):
        self.Vtilde = Vtilde
        self.theta = theta
        self.params = params
        self.alpha = alpha
        self.strategy = strategy
        self.T = Vtilde.shape[0]
        self.start = self.end = anchor
        self.H = Vtilde[anchor]
        self.trace = []
        self.space = MatchingSpace.bind(params)
        with tn.no_tape():
            self.frames = self.space.frames(Vtilde)
            self.words = self.space.words(Q)

    def candidate(self, side):
        frame = self.start - 1 if side == LEFT else self.end + 1
        if 0 <= frame < self.T:
            return frame

    def score(self, frame):
        # decisions are discrete, scoring never needs gradients
        with tn.no_tape():
            try:
                return self.space.score(self.frames[frame], self.H, self.words, *self.alpha).item()
            except DegenerateInputError:
                logger.debug('zero-norm vector while scoring frame %s, closing side', frame)
                return None

    def consider(self, side, frame, score):
        accepted = score is not None and score >= self.theta
        self.trace.append(Step(side, frame, score, accepted))
        return accepted

    def absorb(self, side, frame):
        if side == LEFT:
            self.start = frame
        else:
            self.end = frame
        self.H = segment_update(self.H, self.Vtilde[frame], self.params, self.strategy)

    def sequential(self, sides):
        for side in sides:
            while True:
                frame = self.candidate(side)
                if frame is None:
                    break
                if not self.consider(side, frame, self.score(frame)):
                    break
                self.absorb(side, frame)

    def simultaneous(self, left_first):
        open_sides = [LEFT, RIGHT] if left_first else [RIGHT, LEFT]
        while open_sides:
            proposals = []
            for side in list(open_sides):
                frame = self.candidate(side)
                if frame is None:
                    open_sides.remove(side)
                    continue
                # both sides are judged against the state before either absorbs
                proposals.append((side, frame, self.score(frame)))
            for side, frame, score in proposals:
                if self.consider(side, frame, score):
                    self.absorb(side, frame)
                else:
                    open_sides.remove(side)


def peruse(anchor, Vtilde, Q, direction, theta, params, alpha=(0.6, 0.4),
           strategy='gated', left_first=True):
    """
    Expand from ``anchor`` in the given direction. A side stops at the first
    rejected frame, at the edge of the video, or when a zero-norm vector makes
    the score undefined. Returns the segment, the final state, its confidence
    and the ordered trace of every step.
    """
    Vtilde = tn.as_tensor(Vtilde)
    T = Vtilde.shape[0]
    if not 0 <= anchor < T:
        raise ContractError('anchor %s is outside of [0, %s)' % (anchor, T))
    if direction not in DIRECTIONS:
        raise ContractError('unknown direction %r' % direction)
    perusal = _Perusal(anchor, Vtilde, Q, theta, params, alpha, strategy)
    if direction == 'left_then_right':
        perusal.sequential((LEFT, RIGHT))
    elif direction == 'right_then_left':
        perusal.sequential((RIGHT, LEFT))
    else:
        perusal.simultaneous(left_first)
    segment = Segment(perusal.start, perusal.end, anchor)
    return PeruseResult(segment, perusal.H, confidence(perusal.H, params), perusal.trace)


def replay(anchor, trace):
    """ Rebuild the segment a trace describes, checking every accepted step """
    start = end = anchor
    for step in trace:
        if not step.accepted:
            continue
        if step.side == LEFT and step.frame == start - 1:
            start = step.frame
        elif step.side == RIGHT and step.frame == end + 1:
            end = step.frame
        else:
            raise ContractError('trace step %r does not extend [%s, %s]' % (step, start, end))
    return Segment(start, end, anchor)
