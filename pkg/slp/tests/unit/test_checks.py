import numpy as np
import pytest

from slp import checks
from slp import tensor as tn
from slp.exceptions import NumericError


@pytest.fixture(scope='module')
def instance():
    return checks.TinyInstance()


class TestTinyInstance(object):

    def test_examples_have_different_activities(self, instance):
        first, second = instance.examples
        assert first.activity_id != second.activity_id
        assert (first.T, first.N, first.d_in) == (6, 3, 8)

    def test_loss_is_deterministic(self, instance):
        with tn.no_tape():
            assert instance.loss(instance.params()).item() == instance.loss(instance.params()).item()

    def test_plans_pair_the_examples(self, instance):
        assert [plan.partner for plan in instance.plans] == [1, 0]


class TestGradientCheck(object):

    def test_every_group_passes_once(self, instance):
        report = checks.check_gradients(instance)
        assert list(report) == list(instance.params().groups())
        assert max(report.values()) < checks.TOLERANCE

    @pytest.mark.parametrize('strategy', ['maxpool', 'concat'])
    def test_other_update_strategies(self, strategy):
        instance = checks.TinyInstance(update_strategy=strategy)
        groups = [g for g in instance.params().groups() if g.startswith('bp.')]
        report = checks.check_gradients(instance, only=groups)
        assert list(report) == groups

    def test_corrupted_group_is_reported(self, instance):
        with pytest.raises(checks.GradientCheckError) as error:
            checks.check_gradients(instance, corrupt=checks.corrupt_group('bp.confidence.fc3'),
                                   only=['bp.confidence.fc3', 'sl.classifier.fc3'])
        assert list(error.value.failures) == ['bp.confidence.fc3']
        assert 'bp.confidence.fc3' in str(error.value)
        assert isinstance(error.value, NumericError)

    def test_only_filters_groups(self, instance):
        report = checks.gradient_report(instance.params(), instance.loss, only=['sl.qcc.score'])
        assert list(report) == ['sl.qcc.score']


class TestHelpers(object):

    def test_relative_error(self):
        assert checks.relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
        assert checks.relative_error(np.array([1.0, 2.0]), np.array([1.0, 1.0])) == 0.5
        assert checks.relative_error(np.zeros(2), np.zeros(2)) == 0.0

    def test_corrupt_group_only_touches_its_group(self):
        gradients = {'bp.confidence.fc3.W': np.ones(2), 'bp.confidence.fc2.W': np.ones(2)}
        checks.corrupt_group('bp.confidence.fc3')(gradients)
        assert np.allclose(gradients['bp.confidence.fc3.W'], 1.5 + 1e-3)
        assert np.array_equal(gradients['bp.confidence.fc2.W'], np.ones(2))

    def test_numeric_gradient_of_a_quadratic(self, params):
        name = 'sl.qcc.score.w'
        target = params[name].data.copy()

        def loss(p):
            return tn.reduce_sum(p[name] * p[name])
        numeric = checks.numeric_gradient(params, name, loss)
        assert np.allclose(numeric, 2 * target, atol=1e-8)
        assert np.array_equal(params[name].data, target)
