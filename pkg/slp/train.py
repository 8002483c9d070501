"""
Three-stage training.

1. warm up the skimming module on the frame classification loss alone
2. freeze it and train the perusing module on the margin and confidence
   losses, growing segments from random positive frames
3. fine-tune everything on the weighted sum of all three losses

Every random choice (batch order, sampled frames and segments, query
partners) comes from one generator whose state travels with the checkpoint,
so a resumed run continues exactly as an uninterrupted one would.
"""
from collections import OrderedDict, namedtuple
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
import csv
import io
import logging

import numpy as np

from slp import peruse as bp
from slp import skim as sl
from slp import tensor as tn
from slp.checkpoint import Checkpoint, model_params_from
from slp.configuration import ModelConfig
from slp.exceptions import ContractError, NumericError
from slp.model import build_params
from slp.optim import Adam, AdamState, PlateauSchedule
from slp.util import atomic_write


logger = logging.getLogger(__name__)

STAGE_LOSSES = {
    1: ('class',),
    2: ('match', 'threshold', 'conf'),
    3: ('class', 'match', 'threshold', 'conf'),
}

LOSS_COLUMNS = ('stage', 'epoch', 'loss', 'class', 'match', 'threshold', 'conf', 'lr')

# one margin-loss sample: a positive and a negative frame, a segment inside
# the ground truth, one entirely outside of it and one reaching from a
# positive frame to any other frame (for the confidence regression)
Sample = namedtuple('Sample', ['positive', 'negative', 'matched', 'mismatched', 'spanning'])
ExamplePlan = namedtuple('ExamplePlan', ['anchor', 'samples', 'partner'])


def _outside_frame(gt, T, k):
    """ The k-th frame outside of ``gt`` counting from the left """
    return k if k < gt.start else k + gt.length


def sample_plan(record, rng, config, partner=None):
    """
    Draw the perusal anchor and ``config.triplets`` margin samples for one
    example. A ground truth spanning the whole video has no negatives, so it
    gets no margin samples.
    """
    gt, T = record.gt, record.T
    anchor = int(rng.integers(gt.start, gt.end + 1))
    samples = []
    outside = T - gt.length
    if outside:
        for _ in range(config.triplets):
            positive = int(rng.integers(gt.start, gt.end + 1))
            negative = _outside_frame(gt, T, int(rng.integers(outside)))
            start, end = sorted(rng.integers(gt.start, gt.end + 1, size=2))
            matched = bp.Segment(start, end, rng.integers(start, end + 1))
            first = _outside_frame(gt, T, int(rng.integers(outside)))
            low, high = (0, gt.start - 1) if first < gt.start else (gt.end + 1, T - 1)
            start, end = sorted((first, int(rng.integers(low, high + 1))))
            mismatched = bp.Segment(start, end, rng.integers(start, end + 1))
            inside = int(rng.integers(gt.start, gt.end + 1))
            start, end = sorted((inside, int(rng.integers(T))))
            spanning = bp.Segment(start, end, inside)
            samples.append(Sample(positive, negative, matched, mismatched, spanning))
    return ExamplePlan(anchor, samples, partner)


def pick_partners(batch, rng):
    """
    For every example of the batch, the position of another example with a
    different activity (its query is the mismatched query), or None.
    """
    partners = []
    for i, record in enumerate(batch):
        candidates = [j for j, other in enumerate(batch)
                      if j != i and other.activity_id != record.activity_id]
        partners.append(int(candidates[rng.integers(len(candidates))]) if candidates else None)
    return partners


def margin_loss(Vtilde, Q, partner_Q, gt, plan, params, train_config, model_config):
    """
    Triplet ranking loss and threshold loss over the plan's samples, with
    frames, states and words mapped into the matching space. The threshold
    loss also rejects the two frames just outside the ground truth against
    the state of the whole ground truth.

    Returns ``(match, threshold, states)``; ``states`` pairs every grown
    state with its segment and both losses are None without samples.
    """
    if not plan.samples:
        return None, None, []
    alpha1, alpha2 = train_config.alpha1, train_config.alpha2
    strategy = model_config.update_strategy
    space = bp.MatchingSpace.bind(params)
    frames, words = space.frames(Vtilde), space.words(Q)
    partner_words = space.words(partner_Q) if partner_Q is not None else None

    def combined(linguistic, visual):
        return alpha1 * linguistic + alpha2 * visual

    triplets, states, accepted, rejected = [], [], [], []
    for sample in plan.samples:
        v, vbar = frames[sample.positive], frames[sample.negative]
        H = bp.grow_state(Vtilde, sample.matched, params, strategy)
        Hbar = bp.grow_state(Vtilde, sample.mismatched, params, strategy)
        spanning = bp.grow_state(Vtilde, sample.spanning, params, strategy)
        states.extend([(H, sample.matched), (Hbar, sample.mismatched), (spanning, sample.spanning)])
        H, Hbar = space.frames(H), space.frames(Hbar)
        triplet = bp.Triplet(
            bp.linguistic_score(v, words),
            bp.linguistic_score(vbar, words),
            bp.linguistic_score(v, partner_words) if partner_words is not None else None,
            bp.visual_score(v, H),
            bp.visual_score(vbar, H),
            bp.visual_score(v, Hbar),
        )
        triplets.append(triplet)
        accepted.append(combined(triplet.vq, triplet.vH))
        rejected.append(combined(triplet.vbar_q, triplet.vbar_H))

    whole = bp.Segment(gt.start, gt.end, plan.anchor)
    H = bp.grow_state(Vtilde, whole, params, strategy)
    states.append((H, whole))
    H = space.frames(H)
    for frame in (gt.start - 1, gt.end + 1):
        if 0 <= frame < Vtilde.shape[0]:
            v = frames[frame]
            rejected.append(combined(bp.linguistic_score(v, words), bp.visual_score(v, H)))

    match = bp.triplet_losses(triplets, train_config.beta1, train_config.beta2,
                              train_config.gamma1, train_config.gamma2)
    threshold = bp.threshold_loss(accepted, rejected, train_config.theta, train_config.theta_margin)
    return match, threshold, states


def confidence_loss(Vtilde, Q, gt, plan, states, params, train_config, model_config):
    """
    Smooth-L1 between predicted confidence and true IoU, averaged over the
    segment perused from the plan's anchor and every sampled segment state.
    The perusal only decides the segment; its state is grown again on the
    tape for the gradient.
    """
    strategy = model_config.update_strategy
    with tn.no_tape():
        perused = bp.peruse(
            plan.anchor, Vtilde, Q, train_config.direction, train_config.theta, params,
            alpha=(train_config.alpha1, train_config.alpha2),
            strategy=strategy, left_first=train_config.left_first)
    H = bp.fold(Vtilde, plan.anchor, bp.absorbed(perused.trace), params, strategy)
    pairs = [(H, perused.segment)] + list(states)
    predicted = bp.confidence(tn.stack([state for state, _ in pairs]), params)
    targets = [bp.temporal_iou(segment, gt) for _, segment in pairs]
    return tn.reduce_mean(bp.conf_loss(tn.reshape(predicted, (len(pairs),)), targets))


def example_losses(stage, skimmed, record, plan, partner_Q, params, train_config, model_config):
    losses = OrderedDict()
    if 'class' in STAGE_LOSSES[stage]:
        losses['class'] = sl.bce_loss(skimmed.p, sl.frame_labels(record.gt, record.T))
    if 'match' in STAGE_LOSSES[stage]:
        Vtilde, Q = skimmed.Vtilde, skimmed.Q
        match, threshold, states = margin_loss(Vtilde, Q, partner_Q, record.gt, plan, params,
                                               train_config, model_config)
        if match is not None:
            losses['match'] = match
            losses['threshold'] = threshold
        losses['conf'] = confidence_loss(Vtilde, Q, record.gt, plan, states, params,
                                         train_config, model_config)
    return losses


def weighted_total(losses, config):
    weights = {
        'class': config.weight_class,
        'match': config.weight_match,
        'threshold': config.weight_threshold,
        'conf': config.weight_conf,
    }
    total = None
    for name, loss in losses.items():
        term = weights[name] * loss
        total = term if total is None else total + term
    return total


def skim_example(stage, record, params, model_config):
    """ Forward pass of the skimming module, cut off the tape in stage 2 """
    if stage == 2:
        with tn.no_tape():
            skimmed = sl.skim(record.features, record.query, params, model_config)
        return skimmed._replace(Vtilde=skimmed.Vtilde.detach(), Q=skimmed.Q.detach())
    return sl.skim(record.features, record.query, params, model_config)


def partner_query(stage, partner, params, model_config):
    if partner is None:
        return None
    if stage == 2:
        with tn.no_tape():
            return sl.encode_query(partner.query, params, model_config).detach()
    return sl.encode_query(partner.query, params, model_config)


def example_gradients(params, stage, record, plan, partner, names, train_config, model_config):
    """
    Loss components of one example and the gradient of their weighted total
    with respect to ``names``. ``partner`` is the record whose query is the
    mismatched query, or None.
    """
    params.clear_grad()
    params.zero_grad(names)
    with tn.Tape():
        skimmed = skim_example(stage, record, params, model_config)
        partner_Q = partner_query(stage, partner, params, model_config)
        losses = example_losses(stage, skimmed, record, plan, partner_Q, params,
                                train_config, model_config)
        total = weighted_total(losses, train_config)
        value = total.item()
        if not np.isfinite(value):
            logger.error('non-finite loss at stage %s on %r: %s', stage, record, value)
            raise NumericError('training diverged: loss is %s' % value)
        tn.backward(total)
    components = OrderedDict((name, loss.item()) for name, loss in losses.items())
    return value, components, [params[name].grad.copy() for name in names]


# state of a gradient worker process, set once by _start_worker
_worker = {}


def _start_worker(model_config, train_config, debug):
    tn.set_debug(debug)
    _worker.update(params=build_params(model_config), model_config=model_config,
                   train_config=train_config)


def _worker_gradients(arrays, stage, items, names):
    params = _worker['params']
    params.load(arrays)
    return [example_gradients(params, stage, record, plan, partner, names,
                              _worker['train_config'], _worker['model_config'])
            for record, plan, partner in items]


def _rng_from_state(state):
    bit_generator = np.random.PCG64()
    bit_generator.state = state
    return np.random.Generator(bit_generator)


class Trainer(object):
    """
    Runs the epochs of one stage. The trainable tensors are the skimming
    module in stage 1, the perusing module in stage 2 and all of them in
    stage 3; nothing else is ever stepped.
    """

    def __init__(self, params, model_config, train_config, stage, rng,
                 optimizer=None, schedule=None, epoch=0, history=None):
        if stage not in STAGE_LOSSES:
            raise ContractError('stage must be 1, 2 or 3, got %s' % stage)
        self.params = params
        self.model_config = model_config
        self.config = train_config
        self.stage = stage
        self.rng = rng
        self.optimizer = optimizer or Adam(train_config.learning_rate)
        self.schedule = schedule or PlateauSchedule(
            train_config.lr_decay, train_config.plateau_patience, train_config.plateau_tolerance)
        self.epoch = epoch
        self.history = list(history or [])
        self.pool = None

    @classmethod
    def from_checkpoint(cls, checkpoint, stage, train_config=None):
        """
        Continue ``stage`` from a checkpoint of the same stage, or start it
        from a completed checkpoint of the stage before.
        """
        config = train_config or checkpoint.train_config
        params = model_params_from(checkpoint)
        rng = _rng_from_state(checkpoint.rng_state)
        if checkpoint.stage == stage:
            state = AdamState(checkpoint.optimizer['step'],
                              OrderedDict(checkpoint.optimizer['m']),
                              OrderedDict(checkpoint.optimizer['v']))
            optimizer = Adam(checkpoint.optimizer['lr'], state=state)
            schedule = PlateauSchedule(config.lr_decay, config.plateau_patience,
                                       config.plateau_tolerance, checkpoint.schedule['window'])
            return cls(params, checkpoint.model_config, config, stage, rng, optimizer,
                       schedule, checkpoint.epoch, checkpoint.history)
        if checkpoint.stage == stage - 1 and checkpoint.complete:
            return cls(params, checkpoint.model_config, config, stage, rng,
                       history=checkpoint.history)
        raise ContractError('stage %s cannot start from a stage %s checkpoint at epoch %s' % (
            stage, checkpoint.stage, checkpoint.epoch))

    def trainable(self):
        if self.stage == 1:
            return self.params.names('sl')
        if self.stage == 2:
            return self.params.names('bp')
        return self.params.names()

    @contextmanager
    def gradient_workers(self):
        """
        Process pool computing per-example gradients while the block runs.
        Without one (``workers`` is 1) examples run in this process.
        """
        if self.config.workers <= 1:
            yield
            return
        initargs = (self.model_config, self.config, tn.debug_enabled())
        with ProcessPoolExecutor(max_workers=self.config.workers, initializer=_start_worker,
                                 initargs=initargs) as pool:
            logger.debug('started %s gradient workers', self.config.workers)
            self.pool = pool
            try:
                yield
            finally:
                self.pool = None

    def _gradients(self, items, names):
        if self.pool is None:
            return [example_gradients(self.params, self.stage, record, plan, partner, names,
                                      self.config, self.model_config)
                    for record, plan, partner in items]
        arrays = self.params.snapshot()
        chunks = [chunk for chunk in np.array_split(np.arange(len(items)), self.config.workers) if len(chunk)]
        futures = [self.pool.submit(_worker_gradients, arrays, self.stage,
                                    [items[i] for i in chunk], names)
                   for chunk in chunks]
        results = []
        for future in futures:
            results.extend(future.result())
        return results

    def batch_step(self, batch, apply=True):
        """
        Forward and backward over one batch, then one optimizer step over the
        trainable tensors. Per-example gradients are summed in batch order
        whether or not workers computed them. Returns the mean of every loss
        component.
        """
        partners = pick_partners(batch, self.rng) if self.stage > 1 else [None] * len(batch)
        plans = [sample_plan(record, self.rng, self.config, partner) if self.stage > 1 else None
                 for record, partner in zip(batch, partners)]
        items = [(record, plan, batch[partner] if partner is not None else None)
                 for record, plan, partner in zip(batch, plans, partners)]
        names = self.trainable()
        results = self._gradients(items, names)

        totals = [value for value, _, _ in results]
        self.params.clear_grad()
        for i, name in enumerate(names):
            grad = results[0][2][i].copy()
            for _, _, grads in results[1:]:
                grad += grads[i]
            self.params[name].grad = grad / len(batch)
        if apply:
            self.optimizer.step(self.params, names)
        summary = OrderedDict([('loss', float(np.mean(totals)))])
        for column in LOSS_COLUMNS[3:-1]:
            values = [components[column] for _, components, _ in results if column in components]
            if values:
                summary[column] = float(np.mean(values))
        return summary

    def run_epoch(self, corpus):
        order = self.rng.permutation(len(corpus))
        size = self.config.batch_size
        batches = []
        for first in range(0, len(order), size):
            batch = [corpus[i] for i in order[first:first + size]]
            batches.append(self.batch_step(batch))
        self.epoch += 1
        entry = OrderedDict([('stage', self.stage), ('epoch', self.epoch)])
        for column in LOSS_COLUMNS[2:-1]:
            values = [b[column] for b in batches if column in b]
            entry[column] = float(np.mean(values)) if values else None
        entry['lr'] = self.optimizer.lr
        self.history.append(entry)
        logger.info('stage %s epoch %s loss %.6f (class %s match %s conf %s) lr %.2e',
                    self.stage, self.epoch, entry['loss'], _fmt(entry['class']),
                    _fmt(entry['match']), _fmt(entry['conf']), entry['lr'])
        self.schedule.update(self.optimizer, entry['loss'])
        return entry

    def run(self, corpus, on_epoch=None):
        if not corpus:
            raise ContractError('cannot train on an empty corpus')
        total = self.config.epochs(self.stage)
        if self.epoch >= total:
            logger.info('stage %s already has %s of %s epochs', self.stage, self.epoch, total)
        with self.gradient_workers():
            while self.epoch < total:
                self.run_epoch(corpus)
                if on_epoch is not None:
                    on_epoch(self.checkpoint())
        return self.checkpoint()

    def checkpoint(self):
        state = self.optimizer.state
        optimizer = {
            'lr': self.optimizer.lr,
            'step': state.step,
            'm': OrderedDict((n, a.copy()) for n, a in state.m.items()),
            'v': OrderedDict((n, a.copy()) for n, a in state.v.items()),
        }
        return Checkpoint(
            self.params.snapshot(), self.model_config, self.config, self.stage, self.epoch,
            self.rng.bit_generator.state, optimizer, {'window': list(self.schedule.window)},
            self.history)


def _fmt(value):
    return '-' if value is None else '%.6f' % value


def train_stage1(corpus, config, model_config=None, checkpoint=None, on_epoch=None):
    """
    Warm up the skimming module. Starts from freshly initialized parameters
    unless ``checkpoint`` is an unfinished stage 1 checkpoint to resume.
    """
    if checkpoint is not None:
        trainer = Trainer.from_checkpoint(checkpoint, 1, config)
    else:
        model_config = model_config or ModelConfig()
        rng = np.random.Generator(np.random.PCG64(config.seed))
        trainer = Trainer(build_params(model_config), model_config, config, 1, rng)
    return trainer.run(corpus, on_epoch)


def train_stage2(checkpoint, corpus, config=None, on_epoch=None):
    return Trainer.from_checkpoint(checkpoint, 2, config).run(corpus, on_epoch)


def train_stage3(checkpoint, corpus, config=None, on_epoch=None):
    return Trainer.from_checkpoint(checkpoint, 3, config).run(corpus, on_epoch)


def loss_csv(history):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(LOSS_COLUMNS)
    for entry in history:
        writer.writerow(['' if entry.get(c) is None else entry[c] for c in LOSS_COLUMNS])
    return buffer.getvalue()


def write_loss_csv(path, history):
    atomic_write(path, loss_csv(history))
