# -*- coding: utf-8 -*-
"""
declconf is a small library for declaratively processing sectioned ``key = value`` documents.

Experiment files, checkpoint manifests and dataset manifests all use this format. A document
is a sequence of ``[section]`` headers, each followed by ``key = value`` lines. Sections can
be nested by dotted name (``[model.backbone]``).

Processors
---------------
Processors define the structure of a document and are used both to parse and to serialize it.

Primitive processors read a single key of the current section:

.. autofunction:: fatformer.declconf.boolean
.. autofunction:: fatformer.declconf.floating_point
.. autofunction:: fatformer.declconf.integer
.. autofunction:: fatformer.declconf.string

Aggregate processors are composed of other processors:

.. autofunction:: fatformer.declconf.array
.. autofunction:: fatformer.declconf.dictionary
.. autofunction:: fatformer.declconf.named_tuple

>>> from collections import namedtuple
>>> Optimizer = namedtuple('Optimizer', ['lr', 'epochs', 'groups'])
>>> processor = named_tuple('optimizer', Optimizer, [
...     floating_point('lr'),
...     integer('epochs', required=False, default=10),
...     array(string('groups')),
... ])
>>> parse_from_string(processor, '[optimizer]\\nlr = 3e-4\\ngroups = backbone, transformer\\n')
Optimizer(lr=0.0003, epochs=10, groups=['backbone', 'transformer'])
>>> print(serialize_to_string(processor, Optimizer(0.0003, 3, ['backbone'])).strip())
[optimizer]
lr = 0.0003
epochs = 3
groups = backbone

Hooks
------------------
.. autoclass:: fatformer.declconf.Hooks
.. autoclass:: fatformer.declconf.ProcessorStateView
    :members:
"""
import configparser
import io
from typing import (  # noqa pylint: disable=unused-import
    Any,
    Callable,
    Dict,
    Iterable,
    List,
    NamedTuple,
    NoReturn,
    Optional,
    Text,
    Tuple,
    Type,
)
import warnings

from .errors import ConfigError


class InvalidPrimitiveValue(ConfigError):
    """Represents errors due to invalid primitive values."""


class InvalidRootProcessor(ConfigError):
    """Represents errors due to invalid root processors."""


class MissingValue(ConfigError):
    """Represents errors due to missing required values."""


ProcessorLocation = NamedTuple('ProcessorLocation', [
    ('path', Text),  # Section or key name relative to the previous location.
    ('array_index', Optional[int]),  # Index of the item if in an array, None otherwise.
])

# The raw document: section name -> key -> raw text, in document order.
_Document = Dict[Text, Dict[Text, Text]]

# Where a processor currently reads and writes. Primitive children use `section`; nested
# section children resolve their names against `prefix`.
_Scope = NamedTuple('_Scope', [
    ('document', Dict[Text, Dict[Text, Text]]),
    ('section', Text),
    ('prefix', Text),
])


class ProcessorStateView(object):
    """Provides an immutable view of the processor state."""

    def __init__(
            self,
            processor_state  # type: _ProcessorState
    ):
        # type: (...) -> None
        self._processor_state = processor_state

    @property
    def locations(self):
        # type: () -> Iterable[ProcessorLocation]
        """
        Get iterator of the ProcessorLocations visited by the processor.

        :return: Iterator of ProcessorLocation objects.
        """
        return self._processor_state.locations

    def raise_error(
            self,
            exception_type,  # type: Type[Exception]
            message=''  # type: Text
    ):
        # type: (...) -> None
        """
        Raise an error with the processor state included in the error message.

        :param exception_type: Type of exception to raise
        :param message: Error message
        """
        self._processor_state.raise_error(exception_type, message)

    def __repr__(self):
        return repr(self._processor_state)


HookFunction = Callable[[ProcessorStateView, Any], Any]


class Hooks(object):
    """
    Contains functions to be invoked during parsing and serialization.

    The after_parse function receives the state view and the parsed value and returns the value
    to use as the parse result. The before_serialize function receives the state view and the
    value about to be serialized and returns the value to serialize. Both are optional. Hooks are
    the place to validate values and to convert between document and domain representations.
    """

    def __init__(
            self,
            after_parse=None,  # type: Optional[HookFunction]
            before_serialize=None  # type: Optional[HookFunction]
    ):
        # type: (...) -> None
        self.after_parse = after_parse
        self.before_serialize = before_serialize


class Processor(object):  # pragma: no cover
    """Abstract protocol for processors."""

    @property
    def alias(self):
        # type: (...) -> Text
        """Get processor's alias."""
        pass

    @property
    def name(self):
        # type: (...) -> Text
        """Get the key or section name the processor reads."""
        pass

    @property
    def required(self):
        # type: (...) -> bool
        """Get whether the processor's value is required."""
        pass

    def parse_from_scope(
            self,
            scope,  # type: _Scope
            state  # type: _ProcessorState
    ):
        # type: (...) -> Any
        """Parse value from the enclosing scope."""
        pass

    def serialize_on_scope(
            self,
            scope,  # type: _Scope
            value,  # type: Any
            state  # type: _ProcessorState
    ):
        # type: (...) -> None
        """Serialize value into the enclosing scope."""
        pass


class RootProcessor(Processor):  # pragma: no cover
    """Abstract protocol for root processors."""

    def parse_at_root(
            self,
            document,  # type: _Document
            state  # type: _ProcessorState
    ):
        # type: (...) -> Any
        """Parse value from the whole document."""
        pass

    def serialize_at_root(
            self,
            document,  # type: _Document
            value,  # type: Any
            state  # type: _ProcessorState
    ):
        # type: (...) -> None
        """Serialize value as the whole document."""
        pass


def parse_from_file(
        root_processor,  # type: RootProcessor
        file_path,  # type: Text
        encoding='utf-8'  # type: Text
):
    # type: (...) -> Any
    """
    Parse the document file using the processor starting from the root of the document.

    :param root_processor: Root processor of the document.
    :param file_path: Path to the file to parse.
    :param encoding: Encoding of the file.

    :return: Parsed value.
    """
    with io.open(file_path, 'r', encoding=encoding) as config_file:
        text = config_file.read()

    return parse_from_string(root_processor, text)


def parse_from_string(
        root_processor,  # type: RootProcessor
        text  # type: Text
):
    # type: (...) -> Any
    """
    Parse the document text using the processor starting from the root of the document.

    See also :func:`fatformer.declconf.parse_from_file`
    """
    if not _is_valid_root_processor(root_processor):
        raise InvalidRootProcessor('Invalid root processor')

    document = _document_from_text(text)

    state = _ProcessorState()
    state.push_location(root_processor.name)
    return root_processor.parse_at_root(document, state)


def serialize_to_file(
        root_processor,  # type: RootProcessor
        value,  # type: Any
        file_path,  # type: Text
        encoding='utf-8'  # type: Text
):
    # type: (...) -> None
    """
    Serialize the value to a document file using the root processor.

    :param root_processor: Root processor of the document.
    :param value: Value to serialize.
    :param file_path: Path of the file to write.
    :param encoding: Encoding of the file.
    """
    serialized_value = serialize_to_string(root_processor, value)

    with io.open(file_path, 'w', encoding=encoding, newline='\n') as config_file:
        config_file.write(serialized_value)


def serialize_to_string(
        root_processor,  # type: RootProcessor
        value  # type: Any
):
    # type: (...) -> Text
    """
    Serialize the value to document text using the root processor.

    Sections are written in the order the processors declare them, so equal values always
    serialize to identical text.

    See also :func:`fatformer.declconf.serialize_to_file`
    """
    if not _is_valid_root_processor(root_processor):
        raise InvalidRootProcessor('Invalid root processor')

    state = _ProcessorState()
    state.push_location(root_processor.name)

    document = {}  # type: _Document
    root_processor.serialize_at_root(document, value, state)

    state.pop_location()

    return _document_to_text(document)


def array(
        item_processor,  # type: Processor
        alias=None,  # type: Optional[Text]
        omit_empty=False,  # type: bool
        hooks=None  # type: Optional[Hooks]
):
    # type: (...) -> Processor
    """
    Create an array processor for comma-separated values stored under a single key.

    .. sourcecode:: ini

        [model.fusion]
        order = fullframe_target, audio, transcript

    The array is considered required when its item processor is required; a required array
    must not be empty.

    :param item_processor: A primitive processor for the items. Its name is the key.
    :param alias: If specified, the name given to the array value. If not specified, the alias
        of the item processor is used.
    :param omit_empty: If True, empty arrays are omitted when serializing. Ignored for required
        arrays.
    :param hooks: A Hooks object.

    :return: A declconf processor object.
    """
    processor = _Array(item_processor, alias, omit_empty)
    return _processor_wrap_if_hooks(processor, hooks)


def boolean(
        key,  # type: Text
        required=True,  # type: bool
        alias=None,  # type: Optional[Text]
        default=False,  # type: Optional[bool]
        omit_empty=False,  # type: bool
        hooks=None  # type: Optional[Hooks]
):
    # type: (...) -> Processor
    """
    Create a processor for boolean values (``true`` or ``false``, any case).

    :param key: Name of the key holding the value.
    :param required: Indicates whether the value is required when parsing and serializing.
    :param alias: If specified, the name of the parsed value. Defaults to the key.
    :param default: Value used when the key is absent. Only meaningful if not required.
    :param omit_empty: If True, falsey values are omitted when serializing.
    :param hooks: A Hooks object.

    :return: A declconf processor object.
    """
    return _PrimitiveValue(
        key, _parse_boolean, _format_boolean, required, alias, default, omit_empty, hooks
    )


def dictionary(
        section,  # type: Text
        children,  # type: List[Processor]
        required=True,  # type: bool
        alias=None,  # type: Optional[Text]
        hooks=None  # type: Optional[Hooks]
):
    # type: (...) -> RootProcessor
    """
    Create a processor for a section parsed into a dictionary.

    Primitive children read keys of this section. Section children read the nested section
    ``<this section>.<child name>``; children of the root processor read top-level sections.

    A section that is absent and not required parses as if it were empty, so every child takes
    its default.

    :param section: Name of the section.
    :param children: List of processors for the section's values.
    :param required: Indicates whether the section is required.
    :param alias: If specified, the name of the parsed value. Defaults to the section name.
    :param hooks: A Hooks object.

    :return: A declconf processor object.
    """
    processor = _Section(section, children, required, alias)
    return _processor_wrap_if_hooks(processor, hooks)


def floating_point(
        key,  # type: Text
        required=True,  # type: bool
        alias=None,  # type: Optional[Text]
        default=0.0,  # type: Optional[float]
        omit_empty=False,  # type: bool
        hooks=None  # type: Optional[Hooks]
):
    # type: (...) -> Processor
    """
    Create a processor for floating point values. Values serialize with ``repr`` and round-trip.

    See also :func:`fatformer.declconf.boolean`
    """
    return _PrimitiveValue(
        key, _number_parser(float), repr, required, alias, default, omit_empty, hooks
    )


def integer(
        key,  # type: Text
        required=True,  # type: bool
        alias=None,  # type: Optional[Text]
        default=0,  # type: Optional[int]
        omit_empty=False,  # type: bool
        hooks=None  # type: Optional[Hooks]
):
    # type: (...) -> Processor
    """
    Create a processor for integer values.

    See also :func:`fatformer.declconf.boolean`
    """
    return _PrimitiveValue(
        key, _number_parser(int), Text, required, alias, default, omit_empty, hooks
    )


def named_tuple(
        section,  # type: Text
        tuple_type,  # type: Type[Tuple]
        child_processors,  # type: List[Processor]
        required=True,  # type: bool
        alias=None,  # type: Optional[Text]
        hooks=None  # type: Optional[Hooks]
):
    # type: (...) -> RootProcessor
    """
    Create a processor for namedtuple values.

    :param tuple_type: The namedtuple type.

    See also :func:`fatformer.declconf.dictionary`
    """
    converter = _named_tuple_converter(tuple_type)
    processor = _Aggregate(section, converter, child_processors, required, alias)
    return _processor_wrap_if_hooks(processor, hooks)


def string(
        key,  # type: Text
        required=True,  # type: bool
        alias=None,  # type: Optional[Text]
        default='',  # type: Optional[Text]
        omit_empty=False,  # type: bool
        hooks=None  # type: Optional[Hooks]
):
    # type: (...) -> Processor
    """
    Create a processor for string values. Leading and trailing whitespace is stripped.

    See also :func:`fatformer.declconf.boolean`
    """
    return _PrimitiveValue(
        key, _parse_string, Text, required, alias, default, omit_empty, hooks
    )


# Defines pair of functions to convert between aggregates and dictionaries
_AggregateConverter = NamedTuple('_AggregateConverter', [
    ('from_dict', Callable[[Dict], Any]),
    ('to_dict', Callable[[Any], Dict]),
])


class _Aggregate(RootProcessor):
    """A processor for sections converted to and from aggregate values."""

    def __init__(
            self,
            section,  # type: Text
            converter,  # type: _AggregateConverter
            child_processors,  # type: List[Processor]
            required=True,  # type: bool
            alias=None  # type: Optional[Text]
    ):
        # type: (...) -> None
        self._converter = converter
        self._section = _Section(section, child_processors, required, alias)

    @property
    def alias(self):
        # type: (...) -> Text
        """Get processor's alias."""
        return self._section.alias

    @property
    def name(self):
        # type: (...) -> Text
        """Get the section name."""
        return self._section.name

    @property
    def required(self):
        # type: (...) -> bool
        """Get whether the processor's value is required."""
        return self._section.required

    def parse_at_root(
            self,
            document,  # type: _Document
            state  # type: _ProcessorState
    ):
        # type: (...) -> Any
        """Parse the document as an aggregate."""
        parsed_dict = self._section.parse_at_root(document, state)
        return self._converter.from_dict(parsed_dict)

    def parse_from_scope(
            self,
            scope,  # type: _Scope
            state  # type: _ProcessorState
    ):
        # type: (...) -> Any
        """Parse the aggregate from its nested section."""
        parsed_dict = self._section.parse_from_scope(scope, state)
        return self._converter.from_dict(parsed_dict)

    def serialize_at_root(
            self,
            document,  # type: _Document
            value,  # type: Any
            state  # type: _ProcessorState
    ):
        # type: (...) -> None
        """Serialize the aggregate as the whole document."""
        self._section.serialize_at_root(document, self._converter.to_dict(value), state)

    def serialize_on_scope(
            self,
            scope,  # type: _Scope
            value,  # type: Any
            state  # type: _ProcessorState
    ):
        # type: (...) -> None
        """Serialize the aggregate into its nested section."""
        self._section.serialize_on_scope(scope, self._converter.to_dict(value), state)


class _Array(Processor):
    """A processor for comma-separated array values."""

    def __init__(
            self,
            item_processor,  # type: Processor
            alias=None,  # type: Optional[Text]
            omit_empty=False  # type: bool
    ):
        # type: (...) -> None
        if not isinstance(item_processor, _PrimitiveValue):
            raise InvalidRootProcessor(
                'Array items must be primitive values, got "{}"'.format(item_processor.name))

        self._item_processor = item_processor
        self._required = item_processor.required
        self._alias = alias or item_processor.alias

        if self.required:
            self.omit_empty = False
            if omit_empty:
                warnings.warn('omit_empty ignored for required arrays')
        else:
            self.omit_empty = omit_empty

    @property
    def alias(self):
        # type: (...) -> Text
        """Get processor's alias."""
        return self._alias

    @property
    def name(self):
        # type: (...) -> Text
        """Get the key holding the array."""
        return self._item_processor.name

    @property
    def required(self):
        # type: (...) -> bool
        """Get whether the processor's value is required."""
        return self._required

    def parse_from_scope(
            self,
            scope,  # type: _Scope
            state  # type: _ProcessorState
    ):
        # type: (...) -> Any
        """Parse the array from its key in the current section."""
        raw = scope.document.get(scope.section, {}).get(self.name)
        parsed_array = []  # type: List

        if raw is not None and raw.strip():
            for i, item_text in enumerate(raw.split(',')):
                state.push_location(self.name, i)
                parsed_array.append(self._item_processor.parse_text(item_text.strip(), state))
                state.pop_location()

        if not parsed_array and self.required:
            state.raise_error(MissingValue, 'Missing required array "{}"'.format(self.alias))

        return parsed_array

    def serialize_on_scope(
            self,
            scope,  # type: _Scope
            value,  # type: Any
            state  # type: _ProcessorState
    ):
        # type: (...) -> None
        """Serialize the array as a comma-separated value."""
        if not value and self.required:
            state.raise_error(MissingValue, 'Missing required array: "{}"'.format(self.alias))

        if not value and self.omit_empty:
            return  # Do nothing

        item_texts = []
        for i, item_value in enumerate(value or []):
            state.push_location(self.name, i)
            item_texts.append(self._item_processor.format_value(item_value, state))
            state.pop_location()

        _section_get_or_add(scope.document, scope.section)[self.name] = ', '.join(item_texts)


class _Section(RootProcessor):
    """A processor for sections parsed into dictionaries."""

    def __init__(
            self,
            section,  # type: Text
            child_processors,  # type: List[Processor]
            required=True,  # type: bool
            alias=None  # type: Optional[Text]
    ):
        # type: (...) -> None
        self._section = section
        self._child_processors = child_processors
        self._required = required
        self._alias = alias or section

    @property
    def alias(self):
        # type: (...) -> Text
        """Get processor's alias."""
        return self._alias

    @property
    def name(self):
        # type: (...) -> Text
        """Get the section name."""
        return self._section

    @property
    def required(self):
        # type: (...) -> bool
        """Get whether the processor's value is required."""
        return self._required

    def parse_at_root(
            self,
            document,  # type: _Document
            state  # type: _ProcessorState
    ):
        # type: (...) -> Any
        """Parse the document with this section as the root."""
        if self.name not in document and self.required:
            raise MissingValue('Missing required root section "{}"'.format(self.name))

        scope = _Scope(document=document, section=self.name, prefix='')
        return self._parse_children(scope, state)

    def parse_from_scope(
            self,
            scope,  # type: _Scope
            state  # type: _ProcessorState
    ):
        # type: (...) -> Any
        """Parse the nested section resolved against the enclosing scope."""
        full_name = scope.prefix + self.name

        if full_name not in scope.document and self.required:
            state.raise_error(MissingValue, 'Missing required section "{}"'.format(full_name))

        child_scope = _Scope(document=scope.document, section=full_name, prefix=full_name + '.')
        return self._parse_children(child_scope, state)

    def serialize_at_root(
            self,
            document,  # type: _Document
            value,  # type: Any
            state  # type: _ProcessorState
    ):
        # type: (...) -> None
        """Serialize the dictionary as the whole document."""
        if not value and self.required:
            state.raise_error(
                MissingValue, 'Missing required section "{}"'.format(self.name)
            )

        _section_get_or_add(document, self.name)
        scope = _Scope(document=document, section=self.name, prefix='')
        self._serialize_children(scope, value or {}, state)

    def serialize_on_scope(
            self,
            scope,  # type: _Scope
            value,  # type: Any
            state  # type: _ProcessorState
    ):
        # type: (...) -> None
        """Serialize the dictionary as a nested section."""
        full_name = scope.prefix + self.name

        if not value and self.required:
            state.raise_error(MissingValue, 'Missing required section "{}"'.format(full_name))

        if not value:
            return  # Do Nothing

        _section_get_or_add(scope.document, full_name)
        child_scope = _Scope(document=scope.document, section=full_name, prefix=full_name + '.')
        self._serialize_children(child_scope, value, state)

    def _parse_children(
            self,
            scope,  # type: _Scope
            state  # type: _ProcessorState
    ):
        # type: (...) -> Dict
        parsed_dict = {}

        for child in self._child_processors:
            state.push_location(child.name)
            parsed_dict[child.alias] = child.parse_from_scope(scope, state)
            state.pop_location()

        return parsed_dict

    def _serialize_children(
            self,
            scope,  # type: _Scope
            value,  # type: Dict
            state  # type: _ProcessorState
    ):
        # type: (...) -> None
        for child in self._child_processors:
            state.push_location(child.name)
            child.serialize_on_scope(scope, value.get(child.alias), state)
            state.pop_location()


class _HookedAggregate(RootProcessor):
    """A processor which decorates a processor and applies hooks to all values processed."""

    def __init__(
            self,
            processor,  # type: Any
            hooks  # type: Hooks
    ):
        # type: (...) -> None
        self._processor = processor
        self._hooks = hooks

    @property
    def alias(self):
        # type: (...) -> Text
        """Get processor's alias."""
        return self._processor.alias

    @property
    def name(self):
        # type: (...) -> Text
        """Get the key or section name."""
        return self._processor.name

    @property
    def required(self):
        # type: (...) -> bool
        """Get whether the processor's value is required."""
        return self._processor.required

    def parse_at_root(
            self,
            document,  # type: _Document
            state  # type: _ProcessorState
    ):
        # type: (...) -> Any
        """Parse the document and apply the after_parse hook."""
        value = self._processor.parse_at_root(document, state)
        return _hooks_apply_after_parse(self._hooks, state, value)

    def parse_from_scope(
            self,
            scope,  # type: _Scope
            state  # type: _ProcessorState
    ):
        # type: (...) -> Any
        """Parse from the scope and apply the after_parse hook."""
        value = self._processor.parse_from_scope(scope, state)
        return _hooks_apply_after_parse(self._hooks, state, value)

    def serialize_at_root(
            self,
            document,  # type: _Document
            value,  # type: Any
            state  # type: _ProcessorState
    ):
        # type: (...) -> None
        """Apply the before_serialize hook and serialize as the whole document."""
        hooked_value = _hooks_apply_before_serialize(self._hooks, state, value)
        self._processor.serialize_at_root(document, hooked_value, state)

    def serialize_on_scope(
            self,
            scope,  # type: _Scope
            value,  # type: Any
            state  # type: _ProcessorState
    ):
        # type: (...) -> None
        """Apply the before_serialize hook and serialize into the scope."""
        hooked_value = _hooks_apply_before_serialize(self._hooks, state, value)
        self._processor.serialize_on_scope(scope, hooked_value, state)


class _PrimitiveValue(Processor):
    """A processor for primitive values stored under a single key."""

    def __init__(
            self,
            key,  # type: Text
            parser_func,  # type: Callable[[Text, _ProcessorState], Any]
            formatter_func,  # type: Callable[[Any], Text]
            required=True,  # type: bool
            alias=None,  # type: Optional[Text]
            default=None,  # type: Optional[Any]
            omit_empty=False,  # type: bool
            hooks=None  # type: Optional[Hooks]
    ):
        # type: (...) -> None
        """
        Create a new processor for primitive values.

        :param key: Key holding the value.
        :param parser_func: Function to parse the raw text.
        :param formatter_func: Function to format a value as raw text.
        :param required: Indicates whether the value is required.
        :param alias: Alternative name to give to the value. If not specified, key is used.
        :param default: Default value. Only valid if required is False.
        :param omit_empty: Omit the value when serializing if it is falsey. Only valid if
            required is False.
        :param hooks: A Hooks object.
        """
        self._key = key
        self._parser_func = parser_func
        self._formatter_func = formatter_func
        self._required = required
        self._default = default
        self._hooks = hooks
        self._alias = alias or key

        # Required values are never omitted, so that everything serialized can be parsed back.
        if required:
            self.omit_empty = False
            if omit_empty:
                warnings.warn('omit_empty ignored on primitive values when required is specified')
        else:
            self.omit_empty = omit_empty

    @property
    def alias(self):
        # type: (...) -> Text
        """Get processor's alias."""
        return self._alias

    @property
    def name(self):
        # type: (...) -> Text
        """Get the key."""
        return self._key

    @property
    def required(self):
        # type: (...) -> bool
        """Get whether the processor's value is required."""
        return self._required

    def format_value(
            self,
            value,  # type: Any
            state  # type: _ProcessorState
    ):
        # type: (...) -> Text
        """Apply the before_serialize hook and format the value as raw text."""
        hooked_value = _hooks_apply_before_serialize(self._hooks, state, value)

        # Only None counts as missing and is replaced by the default.
        if hooked_value is None:
            if self._default is None:
                return Text('')
            hooked_value = self._default

        return self._formatter_func(hooked_value)

    def parse_text(
            self,
            text,  # type: Text
            state  # type: _ProcessorState
    ):
        # type: (...) -> Any
        """Parse raw text and apply the after_parse hook."""
        parsed_value = self._parser_func(text, state)
        return _hooks_apply_after_parse(self._hooks, state, parsed_value)

    def parse_from_scope(
            self,
            scope,  # type: _Scope
            state  # type: _ProcessorState
    ):
        # type: (...) -> Any
        """Parse the value of the key in the current section."""
        raw = scope.document.get(scope.section, {}).get(self._key)

        if raw is None and self.required:
            state.raise_error(MissingValue, 'Missing required key "{}"'.format(self._key))
        elif raw is not None:
            return self.parse_text(raw, state)

        return _hooks_apply_after_parse(self._hooks, state, self._default)

    def serialize_on_scope(
            self,
            scope,  # type: _Scope
            value,  # type: Any
            state  # type: _ProcessorState
    ):
        # type: (...) -> None
        """Serialize the value under its key in the current section."""
        # Falsey values are not treated as missing, but they may be omitted.
        if value is None and self.required:
            state.raise_error(
                MissingValue, 'Missing required value for key "{}"'.format(self._key))

        if not value and self.omit_empty:
            return  # Do Nothing

        section = _section_get_or_add(scope.document, scope.section)
        section[self._key] = self.format_value(value, state)


class _ProcessorState(object):
    """Keeps track of the state of the processor in order to provide useful error messages."""

    def __init__(self):
        self._locations = []  # type: List[ProcessorLocation]

    @property
    def locations(self):
        # type: () -> Iterable[ProcessorLocation]
        """Get iterator of locations representing current location of the processor."""
        return iter(self._locations)

    def pop_location(self):
        # type: () -> ProcessorLocation
        """Pop the most recently pushed location from the state's stack of locations."""
        return self._locations.pop()

    def push_location(
            self,
            path,  # type: Text
            array_index=None  # type: Optional[int]
    ):
        # type: (...) -> None
        """Push an item onto the state's stack of locations."""
        self._locations.append(ProcessorLocation(path=path, array_index=array_index))

    def raise_error(
            self,
            exception_type,  # type: Type[Exception]
            message  # type: Text
    ):
        # type: (...) -> NoReturn
        """Raise an exception with the current processor location and error message."""
        error_message = '{} at {}'.format(message, repr(self))
        raise exception_type(error_message)

    def __repr__(self):
        return '/'.join(self._location_to_string(location) for location in self._locations)

    @staticmethod
    def _location_to_string(location):
        # type: (ProcessorLocation) -> Text
        if location.array_index is not None:
            return u'{}[{}]'.format(location.path, location.array_index)

        return location.path


def _document_from_text(text):
    # type: (Text) -> _Document
    """Read raw document text into an ordered mapping of sections."""
    parser = configparser.ConfigParser(
        interpolation=None, default_section='\x00defaults', strict=True
    )
    parser.optionxform = str  # type: ignore

    try:
        parser.read_string(text)
    except configparser.Error as error:
        raise InvalidPrimitiveValue('Malformed document: {}'.format(error))

    return {name: dict(parser.items(name)) for name in parser.sections()}


def _document_to_text(document):
    # type: (_Document) -> Text
    """Write an ordered mapping of sections as document text."""
    parser = configparser.ConfigParser(interpolation=None, default_section='\x00defaults')
    parser.optionxform = str  # type: ignore
    parser.read_dict(document)

    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


def _format_boolean(value):
    # type: (bool) -> Text
    return 'true' if value else 'false'


def _hooks_apply_after_parse(
        hooks,  # type: Optional[Hooks]
        state,  # type: _ProcessorState
        value  # type: Any
):
    # type: (...) -> Any
    """Apply the after parse hook."""
    if hooks and hooks.after_parse:
        return hooks.after_parse(ProcessorStateView(state), value)

    return value


def _hooks_apply_before_serialize(
        hooks,  # type: Optional[Hooks]
        state,  # type: _ProcessorState
        value  # type: Any
):
    # type: (...) -> Any
    """Apply the before serialize hook."""
    if hooks and hooks.before_serialize:
        return hooks.before_serialize(ProcessorStateView(state), value)

    return value


def _is_valid_root_processor(processor):
    # type: (Processor) -> bool
    """Return True if the given processor can be used as a root processor."""
    return hasattr(processor, 'parse_at_root')


def _named_tuple_converter(tuple_type):
    # type: (Type[Tuple]) -> _AggregateConverter
    """Return an _AggregateConverter for named tuples of the given type."""
    def _from_dict(dict_value):
        return tuple_type(**dict_value)

    def _to_dict(value):
        if value:
            return value._asdict()

        return {}

    return _AggregateConverter(from_dict=_from_dict, to_dict=_to_dict)


def _number_parser(str_to_number_func):
    """Return a function to parse numbers."""
    def _parse_number_value(text, state):
        value = None

        try:
            value = str_to_number_func(text)
        except (ValueError, TypeError):
            state.raise_error(InvalidPrimitiveValue, 'Invalid numeric value "{}"'.format(text))

        return value

    return _parse_number_value


def _parse_boolean(text, state):
    """Parse the raw text as a boolean value."""
    value = None

    lowered_text = text.strip().lower()
    if lowered_text == 'true':
        value = True
    elif lowered_text == 'false':
        value = False
    else:
        state.raise_error(InvalidPrimitiveValue, 'Invalid boolean value "{}"'.format(text))

    return value


def _parse_string(text, _state):
    """Parse the raw text as a string value."""
    if text is None:
        return ''

    return text.strip()


def _processor_wrap_if_hooks(
        processor,  # type: Any
        hooks  # type: Optional[Hooks]
):
    # type: (...) -> Any
    """Create a hooked processor if a valid hooks object is provided."""
    if hooks:
        return _HookedAggregate(processor, hooks)

    return processor


def _section_get_or_add(
        document,  # type: _Document
        section  # type: Text
):
    # type: (...) -> Dict[Text, Text]
    """Return the named section of the document, adding it if it does not exist yet."""
    if section not in document:
        document[section] = {}

    return document[section]
