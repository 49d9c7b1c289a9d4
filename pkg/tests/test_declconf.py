"""Tests for declarative document processing"""
from collections import namedtuple

import pytest

from fatformer import declconf as conf
from fatformer.errors import ConfigError

from .helpers import assert_can_roundtrip_config_value


_Optimizer = namedtuple('_Optimizer', ['lr', 'epochs', 'groups'])


def _optimizer_processor(**hooks):
    return conf.named_tuple('optimizer', _Optimizer, [
        conf.floating_point('lr'),
        conf.integer('epochs', required=False, default=10),
        conf.array(conf.string('groups')),
    ], **hooks)


class TestParsing(object):
    """Reading documents"""

    def test_primitives(self):
        """Every primitive type is read from its key."""
        processor = conf.dictionary('run', [
            conf.boolean('balanced'),
            conf.floating_point('split'),
            conf.integer('samples'),
            conf.string('name'),
        ])
        text = '[run]\nbalanced = True\nsplit = 0.75\nsamples = 64\nname =  udiva \n'

        assert conf.parse_from_string(processor, text) == {
            'balanced': True, 'split': 0.75, 'samples': 64, 'name': 'udiva'}

    def test_defaults(self):
        """Optional keys that are absent take their defaults."""
        text = '[optimizer]\nlr = 0.1\ngroups = transformer\n'

        assert conf.parse_from_string(_optimizer_processor(), text) == _Optimizer(
            0.1, 10, ['transformer'])

    def test_nested_sections(self):
        """Aggregate children read the dotted section below their parent."""
        processor = conf.dictionary('model', [
            conf.integer('classes'),
            conf.dictionary('stages', [
                conf.array(conf.integer('depths')),
            ]),
        ])
        text = '[model]\nclasses = 3\n\n[model.stages]\ndepths = 2, 2\n'

        assert conf.parse_from_string(processor, text) == {
            'classes': 3, 'stages': {'depths': [2, 2]}}

    def test_optional_section(self):
        """An optional section that is absent parses as all defaults."""
        processor = conf.dictionary('experiment', [
            conf.dictionary('outputs', [
                conf.string('directory', required=False, default='runs'),
            ], required=False),
        ])

        assert conf.parse_from_string(processor, '[experiment]\n') == {
            'outputs': {'directory': 'runs'}}

    def test_empty_optional_array(self):
        """An optional array without items is empty."""
        processor = conf.dictionary('fusion', [
            conf.array(conf.string('order', required=False)),
        ])

        assert conf.parse_from_string(processor, '[fusion]\norder =\n') == {'order': []}

    def test_file(self, tmpdir):
        """Documents round-trip through files."""
        path = str(tmpdir.join('optimizer.cfg'))
        value = _Optimizer(0.5, 2, ['backbone', 'transformer'])

        conf.serialize_to_file(_optimizer_processor(), value, path)

        assert conf.parse_from_file(_optimizer_processor(), path) == value


class TestSerialization(object):
    """Writing documents"""

    def test_stable_text(self):
        """Keys are written in declaration order."""
        text = conf.serialize_to_string(_optimizer_processor(), _Optimizer(0.25, 4, ['a', 'b']))

        assert text == '[optimizer]\nlr = 0.25\nepochs = 4\ngroups = a, b\n\n'

    def test_floats_round_trip(self):
        """Floats are written with full precision."""
        processor = conf.dictionary('values', [conf.floating_point('x')])

        assert_can_roundtrip_config_value(processor, {'x': 0.1 + 0.2})
        assert_can_roundtrip_config_value(processor, {'x': 1e-300})

    def test_omit_empty(self):
        """Empty optional values can be left out."""
        processor = conf.dictionary('spec', [
            conf.integer('classes'),
            conf.array(conf.floating_point('class_weights', required=False), omit_empty=True),
        ])

        text = conf.serialize_to_string(processor, {'classes': 3, 'class_weights': []})

        assert 'class_weights' not in text
        assert_can_roundtrip_config_value(processor, {'classes': 3, 'class_weights': []})
        assert_can_roundtrip_config_value(processor, {'classes': 3, 'class_weights': [1.0, 2.0]})

    def test_nested_round_trip(self):
        """Nested sections round-trip."""
        processor = conf.dictionary('model', [
            conf.boolean('use_backbone'),
            conf.dictionary('backbone', [conf.integer('kernel')]),
        ])

        assert_can_roundtrip_config_value(
            processor, {'use_backbone': False, 'backbone': {'kernel': 3}})


class TestErrors(object):
    """Errors name where they happened"""

    def test_invalid_number(self):
        """Invalid numbers report the key."""
        text = '[optimizer]\nlr = 0.1\nepochs = many\ngroups = a\n'

        with pytest.raises(conf.InvalidPrimitiveValue) as error:
            conf.parse_from_string(_optimizer_processor(), text)

        assert 'at optimizer/epochs' in str(error.value)

    def test_invalid_boolean(self):
        """Booleans are true or false."""
        processor = conf.dictionary('data', [conf.boolean('balanced')])

        with pytest.raises(conf.InvalidPrimitiveValue):
            conf.parse_from_string(processor, '[data]\nbalanced = yes\n')

    def test_invalid_array_item(self):
        """Array items report their index."""
        processor = conf.dictionary('stages', [conf.array(conf.integer('depths'))])

        with pytest.raises(conf.InvalidPrimitiveValue) as error:
            conf.parse_from_string(processor, '[stages]\ndepths = 2, two\n')

        assert 'depths[1]' in str(error.value)

    def test_missing_key(self):
        """Required keys must be present."""
        with pytest.raises(conf.MissingValue) as error:
            conf.parse_from_string(_optimizer_processor(), '[optimizer]\ngroups = a\n')

        assert 'at optimizer/lr' in str(error.value)

    def test_missing_nested_section(self):
        """Required nested sections must be present."""
        processor = conf.dictionary('model', [
            conf.dictionary('stages', [conf.integer('depth', required=False)]),
        ])

        with pytest.raises(conf.MissingValue) as error:
            conf.parse_from_string(processor, '[model]\n')

        assert '"model.stages"' in str(error.value)

    def test_missing_root(self):
        """The root section must be present."""
        with pytest.raises(conf.MissingValue):
            conf.parse_from_string(_optimizer_processor(), '[other]\nlr = 1\n')

    def test_missing_value_on_serialize(self):
        """Required values must be given when writing."""
        with pytest.raises(conf.MissingValue):
            conf.serialize_to_string(_optimizer_processor(), _Optimizer(None, 1, ['a']))

    def test_malformed(self):
        """Text that is not a sectioned document is rejected."""
        with pytest.raises(conf.InvalidPrimitiveValue):
            conf.parse_from_string(_optimizer_processor(), 'lr = 1\n')

    def test_invalid_root_processor(self):
        """Primitive processors cannot be roots."""
        with pytest.raises(conf.InvalidRootProcessor):
            conf.parse_from_string(conf.integer('epochs'), '[x]\nepochs = 1\n')

    def test_array_of_sections(self):
        """Arrays hold primitive values only."""
        with pytest.raises(conf.InvalidRootProcessor):
            conf.array(conf.dictionary('stage', []))

    def test_configuration_errors(self):
        """Every processing error is a configuration error."""
        for error_type in (conf.InvalidPrimitiveValue, conf.InvalidRootProcessor,
                           conf.MissingValue):
            assert issubclass(error_type, ConfigError)


class TestHooks(object):
    """Hooks transform and validate values"""

    def test_after_parse_transforms(self):
        """The after_parse result replaces the parsed value."""
        hooks = conf.Hooks(after_parse=lambda _, value: value._replace(groups=tuple(value.groups)))

        value = conf.parse_from_string(
            _optimizer_processor(hooks=hooks), '[optimizer]\nlr = 1.0\ngroups = a, b\n')

        assert value.groups == ('a', 'b')

    def test_before_serialize_transforms(self):
        """The before_serialize result is what gets written."""
        processor = conf.dictionary('data', [
            conf.integer('samples', hooks=conf.Hooks(before_serialize=lambda _, v: v * 2)),
        ])

        assert 'samples = 8' in conf.serialize_to_string(processor, {'samples': 4})

    def test_validation_error_location(self):
        """Hooks can raise errors located at their section."""
        def _check(state, value):
            if value.lr <= 0:
                state.raise_error(ConfigError, 'lr must be positive')
            return value

        processor = conf.dictionary('experiment', [
            _optimizer_processor(hooks=conf.Hooks(after_parse=_check)),
        ])
        text = '[experiment]\n\n[optimizer]\nlr = -1.0\ngroups = a\n'

        with pytest.raises(ConfigError) as error:
            conf.parse_from_string(processor, text)

        assert str(error.value) == 'lr must be positive at experiment/optimizer'

    def test_state_locations(self):
        """Hooks see where they are."""
        seen = []

        def _record(state, value):
            seen.append([location.path for location in state.locations])
            return value

        processor = conf.dictionary('model', [
            conf.integer('classes', hooks=conf.Hooks(after_parse=_record)),
        ])
        conf.parse_from_string(processor, '[model]\nclasses = 3\n')

        assert seen == [['model', 'classes']]
