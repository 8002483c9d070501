import argparse
import logging

from slp import checks
from slp.commands import COMMON_ARGUMENTS, SLPCommand, out


logger = logging.getLogger(__name__)


class GradCheckCommand(SLPCommand):
    """
    Compare analytic gradients with finite differences on a tiny model.
    """

    name = 'grad-check'
    arguments = COMMON_ARGUMENTS + (
        {'name': '--update-strategy', 'dest': 'update_strategy', 'default': 'gated',
         'help': 'segment update strategy of the checked model'},
        {'name': '--group', 'dest': 'groups', 'action': 'append', 'default': None,
         'help': 'check only this parameter group (repeatable)'},
        # test hook: perturb the analytic gradients of one group
        {'name': '--corrupt-group', 'dest': 'corrupt_group', 'default': None,
         'help': argparse.SUPPRESS},
    )

    def execute(self, args):
        seed = 3 if args.seed is None else args.seed
        instance = checks.TinyInstance(seed=seed, update_strategy=args.update_strategy)
        self.resolved['model'] = instance.model_config.as_dict()
        corrupt = checks.corrupt_group(args.corrupt_group) if args.corrupt_group else None
        with self.phase('check'):
            report = checks.gradient_report(instance.params(), instance.loss, corrupt, only=args.groups)
        for group, error in report.items():
            status = 'ok' if error < checks.TOLERANCE else 'FAIL'
            print('%-40s %.3e %s' % (group, error, status))
        failures = dict((g, e) for g, e in report.items() if not e < checks.TOLERANCE)
        if failures:
            raise checks.GradientCheckError(failures)
        out("all %s parameter groups within %.0e" % (len(report), checks.TOLERANCE))
