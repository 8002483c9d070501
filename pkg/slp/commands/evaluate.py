import logging

from slp.checkpoint import Checkpoint, model_params_from
from slp.commands import COMMON_ARGUMENTS, SLPCommand, out, settings_arguments
from slp.configuration import EvalConfig, TrainConfig
from slp.corpus import load_corpus
from slp.evaluate import evaluate
from slp.util import atomic_write


logger = logging.getLogger(__name__)

INFERENCE_FIELDS = ('K', 'alpha1', 'alpha2', 'theta', 'direction', 'left_first')

CHECKPOINT_ARGUMENTS = (
    {'name': '--checkpoint', 'required': True, 'help': 'a checkpoint written by train'},
    {'name': '--corpus', 'default': None,
     'help': 'corpus to run on (default: <out-dir>/heldout.slpc)'},
)


def inference_arguments():
    """ Only the training fields that change how inference runs are exposed """
    return tuple(a for a in settings_arguments(TrainConfig) if a['dest'].split('__')[1] in INFERENCE_FIELDS)


class CheckpointCommand(object):
    """ Shared loading for the commands that run a trained checkpoint """

    def load_inputs(self, args):
        with self.phase('load'):
            self.paths['checkpoint'] = args.checkpoint
            checkpoint = Checkpoint.load(args.checkpoint)
            corpus = load_corpus(self.path('corpus', args.corpus, 'heldout.slpc'))
        params = model_params_from(checkpoint)
        config = self.settings(TrainConfig, args, base=checkpoint.train_config.as_dict())
        self.resolved['model'] = checkpoint.model_config.as_dict()
        return checkpoint, params, config, corpus


class EvalCommand(CheckpointCommand, SLPCommand):
    """
    Evaluate a checkpoint: R@n,IoU=m as a text table and a CSV.
    """

    name = 'eval'
    arguments = COMMON_ARGUMENTS + CHECKPOINT_ARGUMENTS + inference_arguments() + \
        settings_arguments(EvalConfig)

    def execute(self, args):
        checkpoint, params, config, corpus = self.load_inputs(args)
        eval_config = self.settings(EvalConfig, args)
        with self.phase('evaluate'):
            table = evaluate(params, corpus, config, checkpoint.model_config, eval_config)
        self.record('eval', table)
        atomic_write(self.path('metrics_text', None, 'metrics.txt'), table.as_text())
        atomic_write(self.path('metrics_csv', None, 'metrics.csv'), table.as_csv())
        print(table.as_text())
        out("metrics written to %s and %s" % (self.paths['metrics_text'], self.paths['metrics_csv']))
