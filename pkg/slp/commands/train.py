import logging
import os

from slp import train
from slp.checkpoint import Checkpoint, model_params_from
from slp.commands import COMMON_ARGUMENTS, SLPCommand, out, settings_arguments
from slp.configuration import CorpusConfig, EvalConfig, ModelConfig, TrainConfig
from slp.corpus import load_corpus
from slp.evaluate import evaluate, random_baseline
from slp.exceptions import ConfigError, DataError


logger = logging.getLogger(__name__)


def parse_stages(value):
    try:
        stages = sorted(set(int(s) for s in value.split(',') if s.strip()))
    except ValueError:
        raise ConfigError('--stages takes a comma separated list such as 1,2,3, got %r' % value)
    if not stages or any(s not in (1, 2, 3) for s in stages):
        raise ConfigError('--stages may only name stages 1, 2 and 3, got %r' % value)
    return stages


def checkpoint_name(stage):
    return 'checkpoint-stage%s.slpk' % stage


class TrainCommand(SLPCommand):
    """
    Train the model in three stages, writing a checkpoint per stage.
    """

    name = 'train'
    arguments = COMMON_ARGUMENTS + settings_arguments(ModelConfig, exclude=('seed', 'd_in')) + \
        settings_arguments(TrainConfig) + (
            {'name': '--corpus', 'default': None,
             'help': 'training corpus (default: <out-dir>/train.slpc)'},
            {'name': '--heldout', 'default': None,
             'help': 'held-out corpus evaluated after the last stage, when it exists'},
            {'name': '--stages', 'default': '1,2,3',
             'help': 'comma separated stages to run (default: 1,2,3)'},
            {'name': '--resume', 'default': None,
             'help': 'checkpoint to continue from'},
        )

    def execute(self, args):
        stages = parse_stages(args.stages)
        corpus_path = self.path('corpus', args.corpus, 'train.slpc')
        if not os.path.exists(corpus_path):
            raise DataError('training corpus not found: %s' % corpus_path)
        with self.phase('load'):
            corpus = load_corpus(corpus_path)
            checkpoint = None
            if args.resume:
                self.paths['resume'] = args.resume
                checkpoint = Checkpoint.load(args.resume)
        d_in = corpus[0].d_in if corpus else None
        if checkpoint is not None:
            model_config = checkpoint.model_config
            config = self.settings(TrainConfig, args, base=checkpoint.train_config.as_dict())
            self.resolved['model'] = model_config.as_dict()
        else:
            model_config = self.settings(ModelConfig, args, **({'d_in': d_in} if d_in else {}))
            config = self.settings(TrainConfig, args)

        for stage in stages:
            if checkpoint is not None and (checkpoint.stage > stage or
                                           (checkpoint.stage == stage and checkpoint.complete)):
                logger.info('stage %s is already done, skipping it', stage)
                continue
            if stage > 1 and checkpoint is None:
                previous = os.path.join(self.out_dir, checkpoint_name(stage - 1))
                if not os.path.exists(previous):
                    raise ConfigError('stage %s needs a stage %s checkpoint, pass one with --resume' % (
                        stage, stage - 1))
                checkpoint = Checkpoint.load(previous)
            path = self.path('checkpoint_stage%s' % stage, None, checkpoint_name(stage))
            with self.phase('stage%s' % stage):
                if stage == 1:
                    checkpoint = train.train_stage1(corpus, config, model_config, checkpoint,
                                                    on_epoch=lambda c: c.save(path))
                elif stage == 2:
                    checkpoint = train.train_stage2(checkpoint, corpus, config, on_epoch=lambda c: c.save(path))
                else:
                    checkpoint = train.train_stage3(checkpoint, corpus, config, on_epoch=lambda c: c.save(path))
            checkpoint.save(path)
            out("stage %s checkpoint written to %s" % (stage, path))
            train.write_loss_csv(self.path('losses', None, 'losses.csv'), checkpoint.history)

        heldout_path = args.heldout or os.path.join(self.out_dir, 'heldout.slpc')
        if checkpoint is not None and checkpoint.stage == 3 and os.path.exists(heldout_path):
            self.report(checkpoint, heldout_path, args)

    def report(self, checkpoint, heldout_path, args):
        self.paths['heldout'] = heldout_path
        with self.phase('evaluate'):
            heldout = load_corpus(heldout_path)
            if not heldout:
                return
            eval_config = self.settings(EvalConfig, args)
            table = evaluate(model_params_from(checkpoint), heldout, checkpoint.train_config,
                             checkpoint.model_config, eval_config)
            baseline = random_baseline(heldout, self.settings(CorpusConfig, args), eval_config.m_list)
        self.record('heldout', table)
        self.record('random', baseline)
        out("held-out metrics\n%s" % table.as_text())
        out("random baseline\n%s" % baseline.as_text())
