"""
Inference and the recall-at-IoU harness, plus the reference points the
trained model is compared against: the random-segment baseline, the
skim-only variant and sweeps over the inference settings.
"""
from collections import OrderedDict, namedtuple
from concurrent.futures import ThreadPoolExecutor
import csv
import io
import logging

import numpy as np

from slp import skim as sl
from slp import tensor as tn
from slp.configuration import DIRECTIONS, EvalConfig
from slp.exceptions import ConfigError, ContractError
from slp.model import propose
from slp.peruse import Segment, temporal_iou


logger = logging.getLogger(__name__)

Prediction = namedtuple('Prediction', ['segment', 'confidence', 'scores', 'anchor', 'candidates'])


def infer(params, example, train_config, model_config):
    """
    Skim, peruse from each of the top-K anchors and keep the segment with the
    highest confidence. Equal confidences go to the anchor ranked first.
    ``candidates`` holds every perused segment ranked by confidence.
    """
    skimmed, results = propose(params, example, model_config, train_config)
    ranked = sorted(results, key=lambda r: -r.score)
    best = ranked[0]
    return Prediction(best.segment, best.score, skimmed.p.numpy(), best.segment.anchor, ranked)


class MetricsTable(object):
    """ R@n,IoU=m in percent for every (n, m) pair """

    def __init__(self, recalls, count):
        self.recalls = OrderedDict(sorted(recalls.items()))
        self.count = count

    @property
    def n_list(self):
        return sorted(set(n for n, _ in self.recalls))

    @property
    def m_list(self):
        return sorted(set(m for _, m in self.recalls))

    def __getitem__(self, key):
        return self.recalls[key]

    def __eq__(self, other):
        return isinstance(other, MetricsTable) and self.recalls == other.recalls

    def __ne__(self, other):
        return not self == other

    def check_monotonic(self):
        """ Recall never drops as n grows and never rises as m grows """
        for n in self.n_list:
            for low, high in zip(self.m_list, self.m_list[1:]):
                if self.recalls[(n, high)] > self.recalls[(n, low)]:
                    raise ContractError('R@%s rises from IoU=%s to IoU=%s' % (n, low, high))
        for m in self.m_list:
            for low, high in zip(self.n_list, self.n_list[1:]):
                if self.recalls[(high, m)] < self.recalls[(low, m)]:
                    raise ContractError('R@%s,IoU=%s is below R@%s' % (high, m, low))
        return self

    def rows(self):
        return [(n, m, recall) for (n, m), recall in self.recalls.items()]

    def as_csv(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(('n', 'm', 'recall'))
        for n, m, recall in self.rows():
            writer.writerow((n, m, '%.2f' % recall))
        return buffer.getvalue()

    def as_text(self):
        header = ['%-8s' % ''] + ['%10s' % ('IoU=%s' % m) for m in self.m_list]
        lines = [' '.join(header)]
        for n in self.n_list:
            cells = ['%-8s' % ('R@%s' % n)] + ['%10.2f' % self.recalls[(n, m)] for m in self.m_list]
            lines.append(' '.join(cells))
        return '\n'.join(lines) + '\n'

    def __repr__(self):
        return '<MetricsTable %s over %s examples>' % (
            ', '.join('R@%s,%s=%.2f' % (n, m, r) for n, m, r in self.rows()), self.count)


def recall_table(candidates, gts, n_list, m_list):
    """
    ``candidates[i]`` is the ranked list of segments for ground truth
    ``gts[i]``. An example counts at (n, m) when any of its first n
    candidates reaches IoU m.
    """
    if not gts:
        raise ContractError('cannot evaluate an empty corpus')
    ious = [[temporal_iou(c, gt) for c in ranked] for ranked, gt in zip(candidates, gts)]
    recalls = OrderedDict()
    for n in n_list:
        for m in m_list:
            hits = sum(1 for row in ious if any(iou >= m for iou in row[:n]))
            recalls[(n, m)] = 100.0 * hits / len(gts)
    return MetricsTable(recalls, len(gts)).check_monotonic()


def predict_all(params, corpus, train_config, model_config, threads=1):
    """ Predictions in corpus order whatever the number of worker threads """
    def run(example):
        return infer(params, example, train_config, model_config)

    if threads <= 1:
        return [run(example) for example in corpus]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, corpus))


def evaluate(params, corpus, train_config, model_config, eval_config=None):
    eval_config = eval_config or EvalConfig()
    too_large = [n for n in eval_config.n_list if n > train_config.K]
    if too_large:
        raise ConfigError('R@%s needs at least %s candidates but K is %s' % (
            max(too_large), max(too_large), train_config.K))
    predictions = predict_all(params, corpus, train_config, model_config, eval_config.threads)
    table = recall_table(
        [[r.segment for r in p.candidates] for p in predictions],
        [example.gt for example in corpus], eval_config.n_list, eval_config.m_list)
    logger.info('evaluated %s examples: %r', len(corpus), table)
    return table


def valid_intervals(T, min_len, max_len):
    for length in range(min_len, max_len + 1):
        for start in range(T - length + 1):
            yield Segment(start, start + length - 1)


def random_baseline(corpus, corpus_config, m_list):
    """
    Exact expected R@1 of a segment drawn uniformly among valid intervals,
    by enumerating every interval for every example.
    """
    if not corpus:
        raise ContractError('cannot evaluate an empty corpus')
    recalls = OrderedDict(((1, m), 0.0) for m in m_list)
    for example in corpus:
        intervals = list(valid_intervals(example.T, corpus_config.min_len, corpus_config.max_len))
        ious = np.array([temporal_iou(s, example.gt) for s in intervals])
        for m in m_list:
            recalls[(1, m)] += 100.0 * np.mean(ious >= m) / len(corpus)
    return MetricsTable(recalls, len(corpus)).check_monotonic()


def mean_half_width(corpus):
    """ Mean ground truth half-length, rounded half up """
    half = np.mean([(example.gt.length - 1) / 2.0 for example in corpus])
    return int(np.floor(half + 0.5))


def sl_only_segment(p, half_width):
    anchor = sl.topk_frames(p, 1)[0]
    T = len(p)
    return Segment(max(0, anchor - half_width), min(T - 1, anchor + half_width), anchor)


def evaluate_sl_only(params, corpus, model_config, m_list, half_width=None):
    """ R@1 when the segment is the top anchor widened by a fixed half-width """
    half_width = mean_half_width(corpus) if half_width is None else half_width
    candidates = []
    with tn.no_tape():
        for example in corpus:
            p = sl.skim(example.features, example.query, params, model_config).p.numpy()
            candidates.append([sl_only_segment(p, half_width)])
    return recall_table(candidates, [e.gt for e in corpus], (1,), m_list)


def frame_scores(params, corpus, model_config):
    with tn.no_tape():
        return [sl.skim(e.features, e.query, params, model_config).p.numpy() for e in corpus]


def frame_auc(params, corpus, model_config):
    """ Area under the ROC curve of frame classification, pooled over the corpus """
    scores = np.concatenate(frame_scores(params, corpus, model_config))
    labels = np.concatenate([sl.frame_labels(e.gt, e.T) for e in corpus]).astype(bool)
    return auc(scores[labels], scores[~labels])


def auc(positives, negatives):
    """ P(positive > negative) with ties counting one half """
    negatives = np.sort(negatives)
    below = np.searchsorted(negatives, positives, side='left')
    tied = np.searchsorted(negatives, positives, side='right') - below
    return float((below + 0.5 * tied).sum() / (len(positives) * len(negatives)))


def _ranks(values):
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind='mergesort')
    ranks = np.empty(len(values))
    ranks[order] = np.arange(len(values))
    # ties share the mean of their ranks
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=ranks)
    return sums[inverse] / counts[inverse]


def spearman(a, b):
    return float(np.corrcoef(_ranks(a), _ranks(b))[0, 1])


def confidence_iou_pairs(params, corpus, train_config, model_config):
    """ (confidence, IoU with ground truth) for every perused candidate """
    pairs = []
    for example in corpus:
        for result in propose(params, example, model_config, train_config)[1]:
            pairs.append((result.score, temporal_iou(result.segment, example.gt)))
    return pairs


SWEEPS = OrderedDict([
    ('K', (1, 3, 5, 8)),
    ('alpha', ((1.0, 0.0), (0.6, 0.4), (0.5, 0.5), (0.0, 1.0))),
    ('theta', (0.5, 0.65, 0.75, 0.85)),
    ('direction', DIRECTIONS),
])


def _sweep_config(train_config, variable, value):
    if variable == 'alpha':
        return train_config.replace(alpha1=value[0], alpha2=value[1]), '%s/%s' % value
    return train_config.replace(**{variable: value}), str(value)


def ablate(params, corpus, corpus_config, train_config, model_config, eval_config=None, sweeps=None):
    """
    Evaluate one set of parameters under every setting of ``sweeps``, one
    variable at a time, plus the skim-only variant and the random baseline.
    Returns rows of (variable, value, n, m, recall).
    """
    eval_config = eval_config or EvalConfig()
    sweeps = SWEEPS if sweeps is None else sweeps
    rows = []
    for variable, values in sweeps.items():
        for value in values:
            config, label = _sweep_config(train_config, variable, value)
            n_list = [n for n in eval_config.n_list if n <= config.K]
            table = evaluate(params, corpus, config, model_config, eval_config.replace(n_list=n_list))
            rows.extend((variable, label, n, m, r) for n, m, r in table.rows())
    for label, table in (
            ('sl_only', evaluate_sl_only(params, corpus, model_config, eval_config.m_list)),
            ('random', random_baseline(corpus, corpus_config, eval_config.m_list))):
        rows.extend(('variant', label, n, m, r) for n, m, r in table.rows())
    return rows


def ablation_csv(rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(('variable', 'value', 'n', 'm', 'recall'))
    for variable, value, n, m, recall in rows:
        writer.writerow((variable, value, n, m, '%.2f' % recall))
    return buffer.getvalue()
