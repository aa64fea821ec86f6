"""Experiment configuration files

Configuration files are JSON documents (YAML works as well, JSON being a
subset of it) mirroring :py:class:`ubf.bench.ExperimentConfig`::

    {
      "sys": {"k_users": 4, "m_antennas": 8, "p_max": 1.0, "noise_var": 0.1},
      "train_sizes": [100, 1000],
      "seeds": [42, 678, 888],
      ...
    }

They are read into a :py:class:`ConfigDict`, which addresses nested values
with dotted keys, so single values can be overridden from the command line::

    $ ubf bench --set sys.p_max=2 --set train.epochs=50 samples/desk.json out/

"""

import logging

import yaml

from .errors import ContractViolation, DatasetFormatError, DatasetIOError

log = logging.getLogger('ubf.config')


class ConfigDict(dict):
    '''dictionary with dotted-key access

    >>> c = ConfigDict()
    >>> c['sys.p_max'] = 2.0
    >>> c
    {'sys': {'p_max': 2.0}}
    >>> c['sys.p_max']
    2.0

    '''

    def __init__(self, E=None, **F):
        super(ConfigDict, self).__init__()
        self.update(E, **F)

    def __getitem__(self, name):
        key_parts = name.split('.')
        value = super(ConfigDict, self).__getitem__(key_parts[0])
        for k in key_parts[1:]:
            if not isinstance(value, dict):
                raise KeyError(name)
            value = value[k]
        return value

    def __setitem__(self, name, value):
        head, _, rest = name.partition('.')
        if not rest:
            super(ConfigDict, self).__setitem__(head, self.assimilate(value))
            return
        if not isinstance(self.get(head), ConfigDict):
            super(ConfigDict, self).__setitem__(head, ConfigDict())
        super(ConfigDict, self).__getitem__(head)[rest] = value

    def __contains__(self, name):
        try:
            self[name]
            return True
        except KeyError:
            return False

    def get(self, name, default=None):
        try:
            return self[name]
        except KeyError:
            return default

    def assimilate(self, value):
        '''turn plain nested dictionaries into ConfigDicts'''
        if isinstance(value, dict) and not isinstance(value, ConfigDict):
            return ConfigDict(value)
        return value

    def flatten(self, D=None):
        '''flat dictionary of dotted keys'''
        D = self if D is None else D
        result = {}
        for k, v in D.items():
            if isinstance(v, dict) and v:
                for _k, _v in self.flatten(v).items():
                    result['.'.join([k, _k])] = _v
            else:
                result[k] = v
        return result

    def update(self, E=None, **F):
        '''update pathwise, nested dictionaries are merged

        >>> ConfigDict({'sys': {'k_users': 4}}).update({'sys': {'p_max': 2}})
        {'sys': {'k_users': 4, 'p_max': 2}}

        '''
        def _update(D):
            for k, v in D.items():
                current = dict.get(self, k)
                if isinstance(current, ConfigDict) and isinstance(v, dict):
                    current.update(v)
                else:
                    self[k] = v

        if E is not None:
            _update(E if hasattr(E, 'keys') else dict(E))
        _update(F)
        return self

    def to_dict(self):
        return {k: v.to_dict() if isinstance(v, ConfigDict) else v for k, v in self.items()}


def load_config(path):
    '''read a JSON (or YAML) configuration file'''
    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise DatasetIOError("cannot read config %s: %s", path, e)
    except yaml.YAMLError as e:
        raise DatasetFormatError("%s is not a valid config document: %s", path, e)

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise DatasetFormatError("%s: config must be a mapping, got %s", path, type(data).__name__)
    log.debug("loaded config %s", path)
    return ConfigDict(data)


def parse_override(text):
    '''split ``key=value``, the value is parsed as a YAML scalar'''
    key, sep, value = text.partition('=')
    if not sep or not key.strip():
        raise ContractViolation("override must look like key=value, got %r", text)
    try:
        return key.strip(), yaml.safe_load(value) if value.strip() else None
    except yaml.YAMLError as e:
        raise ContractViolation("cannot parse value of override %r: %s", text, e)


def apply_overrides(cfg, overrides):
    for text in overrides or ():
        key, value = parse_override(text)
        log.info("config override %s = %r", key, value)
        cfg[key] = value
    return cfg
