import json
import logging

from slp.commands import COMMON_ARGUMENTS, SLPCommand, out
from slp.commands.evaluate import CHECKPOINT_ARGUMENTS, CheckpointCommand, inference_arguments
from slp.evaluate import infer
from slp.exceptions import ConfigError
from slp.peruse import temporal_iou
from slp.util import atomic_write, scores_svg


logger = logging.getLogger(__name__)


def report(index, example, prediction):
    lines = [
        'example %s: activity %s, ground truth [%s, %s]' % (
            index, example.activity_id, example.gt.start, example.gt.end),
        'predicted [%s, %s] from anchor %s, confidence %.4f, IoU %.4f' % (
            prediction.segment.start, prediction.segment.end, prediction.anchor,
            prediction.confidence, temporal_iou(prediction.segment, example.gt)),
        'trace:',
    ]
    best = prediction.candidates[0]
    for number, entry in enumerate(best.trace):
        score = '-' if entry.score is None else '%.4f' % entry.score
        lines.append('  %3s %-5s frame %3s score %s %s' % (
            number, entry.side, entry.frame, score, 'accept' if entry.accepted else 'reject'))
    lines.append('candidates:')
    for rank, result in enumerate(prediction.candidates):
        lines.append('  %s. [%s, %s] anchor %s confidence %.4f' % (
            rank + 1, result.segment.start, result.segment.end, result.segment.anchor, result.score))
    return '\n'.join(lines)


class InferCommand(CheckpointCommand, SLPCommand):
    """
    Localize one corpus example and report the segment with its trace.
    """

    name = 'infer'
    arguments = COMMON_ARGUMENTS + CHECKPOINT_ARGUMENTS + inference_arguments() + (
        {'name': '--index', 'type': int, 'required': True, 'help': 'corpus index of the example'},
        {'name': '--svg', 'default': None, 'help': 'write the per-frame scores as SVG to this path'},
    )

    def execute(self, args):
        checkpoint, params, config, corpus = self.load_inputs(args)
        if not 0 <= args.index < len(corpus):
            raise ConfigError('index %s is out of range for %s examples' % (args.index, len(corpus)))
        example = corpus[args.index]
        with self.phase('infer'):
            prediction = infer(params, example, config, checkpoint.model_config)
        print(report(args.index, example, prediction))
        details = {
            'index': args.index,
            'gt': example.gt.as_dict(),
            'scores': [float(s) for s in prediction.scores],
            'candidates': [result.as_dict() for result in prediction.candidates],
        }
        atomic_write(self.path('report', None, 'infer-%s.json' % args.index),
                     json.dumps(details, indent=2) + '\n')
        if args.svg:
            self.paths['svg'] = args.svg
            atomic_write(args.svg, scores_svg(prediction.scores, example.gt, prediction.segment))
            out("scores written to %s" % args.svg)
