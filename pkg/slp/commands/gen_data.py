import logging

from slp.commands import COMMON_ARGUMENTS, SLPCommand, out, settings_arguments
from slp.configuration import CorpusConfig
from slp.corpus import generate_corpus, save_corpus


logger = logging.getLogger(__name__)


class GenDataCommand(SLPCommand):
    """
    Generate the synthetic training and held-out corpora.
    """

    name = 'gen-data'
    arguments = COMMON_ARGUMENTS + settings_arguments(CorpusConfig) + (
        {'name': '--train-file', 'dest': 'train_file', 'default': None,
         'help': 'training corpus path (default: <out-dir>/train.slpc)'},
        {'name': '--heldout-file', 'dest': 'heldout_file', 'default': None,
         'help': 'held-out corpus path (default: <out-dir>/heldout.slpc)'},
    )

    def execute(self, args):
        config = self.settings(CorpusConfig, args)
        dims = (config.T, config.N, config.d_in)
        train_path = self.path('train', args.train_file, 'train.slpc')
        heldout_path = self.path('heldout', args.heldout_file, 'heldout.slpc')
        with self.phase('generate'):
            train = generate_corpus(config, config.count)
            # held-out examples continue the index sequence, so they never repeat a training example
            heldout = generate_corpus(config, config.heldout, offset=config.count)
        with self.phase('write'):
            save_corpus(train_path, train, dims)
            save_corpus(heldout_path, heldout, dims)
        out("wrote %s training examples to %s" % (len(train), train_path))
        out("wrote %s held-out examples to %s" % (len(heldout), heldout_path))
