import logging

from slp.commands import COMMON_ARGUMENTS, SLPCommand, out, settings_arguments
from slp.commands.evaluate import CHECKPOINT_ARGUMENTS, CheckpointCommand
from slp.configuration import CorpusConfig, EvalConfig
from slp.evaluate import ablate, ablation_csv
from slp.util import atomic_write


logger = logging.getLogger(__name__)


class AblateCommand(CheckpointCommand, SLPCommand):
    """
    Sweep inference settings of one checkpoint against the baselines.
    """

    name = 'ablate'
    arguments = COMMON_ARGUMENTS + CHECKPOINT_ARGUMENTS + settings_arguments(EvalConfig) + tuple(
        a for a in settings_arguments(CorpusConfig) if a['dest'] in ('corpus__min_len', 'corpus__max_len'))

    def execute(self, args):
        checkpoint, params, config, corpus = self.load_inputs(args)
        eval_config = self.settings(EvalConfig, args)
        corpus_config = self.settings(CorpusConfig, args)
        with self.phase('ablate'):
            rows = ablate(params, corpus, corpus_config, config, checkpoint.model_config, eval_config)
        path = self.path('ablation', None, 'ablation.csv')
        atomic_write(path, ablation_csv(rows))
        out("%s ablation rows written to %s" % (len(rows), path))
