"""
Command line surface. Every command is a pecan command (registered under the
``pecan.command`` entry point group) and is also reachable through the
``slp`` console script, which maps errors onto exit codes: 0 on success,
1 for usage errors, 2 for unreadable data and 3 for numeric failures.
"""
from collections import OrderedDict
from contextlib import contextmanager
import argparse
import json
import logging
import os
import sys
import time

from pecan.commands.base import BaseCommand
from sqlalchemy.exc import SQLAlchemyError

from slp import models, util
from slp.exceptions import SLPError, USAGE


logger = logging.getLogger(__name__)


def out(string):
    print("==> %s" % string)


def boolean(value):
    lowered = str(value).lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise argparse.ArgumentTypeError('expected true or false, got %r' % value)


def flag_name(key):
    return '--' + key.replace('_', '-')


def flag_dest(settings, key):
    return '%s__%s' % (settings.section, key)


def settings_arguments(settings, exclude=('seed', 'threads')):
    """
    One flag per configuration field, named after the field. Flags default to
    None so only the ones given on the command line override anything.
    """
    arguments = []
    for key, default in settings.defaults.items():
        if key in exclude:
            continue
        argument = {'name': flag_name(key), 'dest': flag_dest(settings, key), 'default': None,
                    'help': '%s.%s (default: %s)' % (settings.section, key, default)}
        if isinstance(default, bool):
            argument['type'] = boolean
        elif isinstance(default, tuple):
            argument['type'] = type(default[0])
            argument['nargs'] = '+'
        elif default is None or isinstance(default, int):
            argument['type'] = int
        elif isinstance(default, float):
            argument['type'] = float
        arguments.append(argument)
    return tuple(arguments)


COMMON_ARGUMENTS = (
    {'name': ['-c', '--config'], 'dest': 'config_file', 'default': None,
     'help': 'a pecan configuration file, or a run manifest (.json) to reproduce'},
    {'name': '--seed', 'type': int, 'default': None,
     'help': 'seed for every random choice of the command'},
    {'name': '--out-dir', 'dest': 'out_dir', 'default': None,
     'help': 'directory for outputs (default: current directory)'},
    {'name': '--threads', 'type': int, 'default': None,
     'help': 'worker threads for evaluation'},
)


class SLPCommand(BaseCommand):
    """
    Base for every slp command: loads the configuration, sets up logging,
    times phases and writes the run manifest once the command ends.
    """

    name = None
    arguments = COMMON_ARGUMENTS

    def run(self, args):
        super(SLPCommand, self).run(args)
        self.resolved = OrderedDict()
        self.paths = OrderedDict()
        self.timings = OrderedDict()
        self.tables = []
        self.out_dir = args.out_dir or '.'
        self.registry_run = None
        code = 0
        try:
            with self.phase('setup'):
                util.load_config(args.config_file)
                util.configure_logging()
                self.open_run(args)
            self.execute(args)
        except SLPError as error:
            logger.error('%s failed: %s', self.name, error)
            code = error.exit_code
        finally:
            self.finish(args, code)
        if code:
            raise SystemExit(code)

    def execute(self, args):
        raise NotImplementedError

    def settings(self, cls, args, base=None, **fixed):
        """
        Resolve one configuration section: built-in defaults (or ``base``),
        then the configuration file, then command line flags.
        """
        values = dict(base or {})
        values.update(util.get_section(cls.section))
        for key in cls.defaults:
            flag = getattr(args, flag_dest(cls, key), None)
            if flag is not None:
                values[key] = flag
        if args.seed is not None and 'seed' in cls.defaults:
            values['seed'] = args.seed
        if args.threads is not None and 'threads' in cls.defaults:
            values['threads'] = args.threads
        values.update(fixed)
        resolved = cls.from_dict(values)
        self.resolved[cls.section] = resolved.as_dict()
        return resolved

    def path(self, role, value, default=None):
        path = value or os.path.join(self.out_dir, default)
        self.paths[role] = path
        return path

    @contextmanager
    def phase(self, name):
        started = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round(time.perf_counter() - started, 6)

    def manifest(self, args, code):
        return OrderedDict([
            ('command', self.name),
            ('status', code),
            ('config', self.resolved),
            ('paths', self.paths),
            ('seed', args.seed),
            ('build', util.build_id()),
            ('timings', self.timings),
        ])

    def open_run(self, args):
        if not models.is_configured():
            return
        try:
            models.init_model()
            models.start()
            self.registry_run = models.Run(self.name, args.seed, util.build_id(), {})
            models.commit()
        except SQLAlchemyError:
            logger.exception('run registry is unavailable, continuing without it')
            models.rollback()
            self.registry_run = None

    def finish(self, args, code):
        manifest = self.manifest(args, code)
        path = os.path.join(self.out_dir, 'manifest-%s.json' % self.name)
        try:
            util.atomic_write(path, json.dumps(manifest, indent=2) + '\n')
        except (IOError, OSError) as error:
            logger.error('unable to write manifest %s: %s', path, error)
        if self.registry_run is None:
            return
        try:
            self.registry_run.config = json.dumps(self.resolved, sort_keys=True)
            self.registry_run.finish(code, self.timings)
            for label, table in self.tables:
                self.registry_run.record_table(label, table)
            models.commit()
        except SQLAlchemyError:
            logger.exception('unable to record run in the registry')
            models.rollback()
        finally:
            models.clear()

    def record(self, label, table):
        self.tables.append((label, table))


def command_classes():
    from slp.commands.ablate import AblateCommand
    from slp.commands.evaluate import EvalCommand
    from slp.commands.gen_data import GenDataCommand
    from slp.commands.grad_check import GradCheckCommand
    from slp.commands.infer import InferCommand
    from slp.commands.populate import PopulateCommand
    from slp.commands.train import TrainCommand
    classes = (GenDataCommand, TrainCommand, EvalCommand, InferCommand,
               GradCheckCommand, AblateCommand, PopulateCommand)
    return OrderedDict((cls.name, cls) for cls in classes)


class UsageParser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, '%s: error: %s\n' % (self.prog, message))


def parser():
    """ Same sub-command layout pecan's command runner builds """
    top = UsageParser(prog='slp', description=__doc__.strip().splitlines()[0])
    subparsers = top.add_subparsers(dest='command_name', metavar='command', parser_class=UsageParser)
    for name, cmd in command_classes().items():
        sub = subparsers.add_parser(name, help=cmd.summary)
        for arg in getattr(cmd, 'arguments', tuple()):
            arg = arg.copy()
            names = arg.pop('name')
            if isinstance(names, str):
                names = [names]
            sub.add_argument(*names, **arg)
    return top


def run(argv=None):
    """ Parse ``argv`` and run the chosen command; returns the exit code """
    top = parser()
    try:
        args = top.parse_args(argv)
        if args.command_name is None:
            top.print_help()
            return USAGE
        command_classes()[args.command_name]().run(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else USAGE
    return 0


def main():
    sys.exit(run())
