"""
Run-file parsing.

A run file is sectioned key = value text:

    # comment
    [grid]
    n_z = 128
    half_width = 4pi
    [run]
    initial_data = modes
    modes = 1:12:1.0, 0:1:0.5

Values are overlaid on settings.SHEARFLOW_DEFAULTS and every invariant is
checked here, so errors carry the file name and line number.
"""
import copy
import json
import logging
import math
import re
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

from django.conf import settings

from .exceptions import ConfigurationError
from .multipliers import WeightContext, validate_weight_parameters
from .solver import InitialData, SimConfig, validate_sim_config
from .spectral_core import Grid, validate_grid

logger = logging.getLogger(__name__)

TRUE_WORDS = {'true', 'yes', 'on', '1'}
FALSE_WORDS = {'false', 'no', 'off', '0'}
PI_PATTERN = re.compile(r'^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)?\s*\*?\s*pi$', re.IGNORECASE)

# keys whose line is reported for a violated rule, most specific first
RULE_KEYS = {
    'β + 3α + 8 < σ': [('weights', 'sigma'), ('weights', 'beta'), ('weights', 'alpha')],
    'β > 3α + 2': [('weights', 'beta'), ('weights', 'alpha')],
    'λ(∞) > (λ + λ′)/2': [('weights', 'delta_lambda'), ('weights', 'lambda0'), ('weights', 'lambda_prime')],
    'λ > λ′ > 0': [('weights', 'lambda0'), ('weights', 'lambda_prime')],
    'q̃ ∈ (1/2, s/8 + 7/16)': [('weights', 'q_tilde'), ('weights', 's')],
    's ∈ (1/2, 1)': [('weights', 's')],
    'κ ∈ (0, 1/2)': [('weights', 'kappa')],
    'n_z is a power of two >= 8': [('grid', 'n_z')],
    'n_v is a power of two >= 8': [('grid', 'n_v')],
    'L > 0': [('grid', 'half_width')],
    'dealias_fraction in (0, 1]': [('grid', 'dealias_fraction')],
    'ν ≥ 0': [('physics', 'nu')],
    'ε ≥ 0': [('physics', 'epsilon')],
    't_max > 0': [('run', 't_max')],
}


class ConfigBundle(NamedTuple):
    """Validated configuration: the resolved sections plus the objects built from them"""
    resolved: Dict
    grid: Grid
    weights: WeightContext
    sim: SimConfig
    source: str

    @property
    def diagnostics(self) -> Dict:
        return self.resolved['diagnostics']

    @property
    def sweep(self) -> Dict:
        return self.resolved['sweep']


def _parse_float(text: str) -> float:
    match = PI_PATTERN.match(text.strip())
    if match:
        factor = match.group(1)
        return (float(factor) if factor else 1.0) * math.pi
    return float(text)


def _parse_bool(text: str) -> bool:
    word = text.strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ValueError(f"'{text}' is not a boolean")


def _split_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(',') if item.strip()]


def _parse_mode(text: str) -> Tuple[int, int, float]:
    parts = text.split(':')
    if len(parts) != 3:
        raise ValueError(f"'{text}' is not a k:j:amp triple")
    return int(parts[0]), int(parts[1]), _parse_float(parts[2])


def coerce_value(section: str, key: str, text: str, default):
    """Parses text to the type of the default value"""
    if key == 'modes':
        return [list(_parse_mode(item)) for item in _split_list(text)]
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return _parse_float(text)
    if isinstance(default, list):
        items = _split_list(text)
        if default and all(isinstance(d, int) for d in default):
            return [int(item) for item in items]
        return [_parse_float(item) for item in items]
    return text.strip()


def _strip_comment(line: str) -> str:
    for marker in ('#', ';'):
        position = line.find(marker)
        if position == 0 or (position > 0 and line[position - 1].isspace()):
            line = line[:position]
    return line.strip()


def read_run_file(path: Union[str, Path], strict: bool = True) -> Tuple[Dict, Dict]:
    """
    Reads a run file.

    Returns:
        Tuple[Dict, Dict]: the values per section, and the line number of each
        (section, key)

    Raises:
        ConfigurationError: on a missing file, a syntax error, an unknown
        section or key (strict mode), or a value of the wrong type
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError("config file not found", rule='config file exists', path=str(path))
    defaults = settings.SHEARFLOW_DEFAULTS
    values: Dict[str, Dict] = {}
    lines: Dict[Tuple[str, str], int] = {}
    section = None
    for number, raw in enumerate(path.read_text(encoding='utf-8').splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if line.startswith('['):
            if not line.endswith(']'):
                raise ConfigurationError(f"malformed section header '{line}'", line=number, path=str(path))
            section = line[1:-1].strip().lower()
            if section not in defaults:
                if strict:
                    raise ConfigurationError(f"unknown section [{section}]", rule='known sections only',
                                             line=number, path=str(path))
                logger.warning("%s:%d: ignoring unknown section [%s]", path, number, section)
            continue
        if '=' not in line:
            raise ConfigurationError(f"expected key = value, got '{line}'", line=number, path=str(path))
        if section is None:
            raise ConfigurationError("key outside of any section", line=number, path=str(path))
        if section not in defaults:
            continue
        key, _, text = line.partition('=')
        key = key.strip().lower()
        if key not in defaults[section]:
            if strict:
                raise ConfigurationError(f"unknown key '{key}' in [{section}]", rule='known keys only',
                                         line=number, path=str(path))
            logger.warning("%s:%d: ignoring unknown key '%s' in [%s]", path, number, key, section)
            continue
        if (section, key) in lines and strict:
            raise ConfigurationError(f"duplicate key '{key}' in [{section}], first set on line "
                                     f"{lines[(section, key)]}", rule='keys set once', line=number, path=str(path))
        try:
            values.setdefault(section, {})[key] = coerce_value(section, key, text, defaults[section][key])
        except ValueError as e:
            raise ConfigurationError(f"bad value for {key}: {e}", line=number, path=str(path))
        lines[(section, key)] = number
    return values, lines


def _merge(values: Dict, overrides: Optional[Dict]) -> Dict:
    resolved = copy.deepcopy(settings.SHEARFLOW_DEFAULTS)
    for source in (values, overrides or {}):
        for section, entries in source.items():
            resolved.setdefault(section, {}).update(copy.deepcopy(entries))
    return resolved


def _fail(validation: Dict, lines: Dict, path: str):
    line = None
    for key in RULE_KEYS.get(validation['rule'], []):
        if key in lines:
            line = lines[key]
            break
    raise ConfigurationError(validation['error'], rule=validation['rule'], line=line, path=path)


def build_bundle(resolved: Dict, lines: Optional[Dict] = None, source: str = '') -> ConfigBundle:
    """
    Validates resolved sections and builds the Grid, WeightContext and SimConfig.

    Raises:
        ConfigurationError: naming the violated rule (and its line when known)
    """
    lines = lines or {}
    g = resolved['grid']
    validation = validate_grid(g['n_z'], g['n_v'], g['half_width'], g['dealias_fraction'])
    if not validation['valid']:
        _fail(validation, lines, source)
    grid = Grid(int(g['n_z']), int(g['n_v']), float(g['half_width']), float(g['dealias_fraction']))

    physics = resolved['physics']
    weight_values = dict(resolved['weights'], nu=float(physics['nu']))
    validation = validate_weight_parameters(weight_values)
    if not validation['valid']:
        _fail(validation, lines, source)
    weights = WeightContext(**weight_values)

    run = resolved['run']
    initial = InitialData(
        kind=run['initial_data'],
        modes=tuple((int(k), int(j), float(a)) for k, j, a in run['modes']),
        width=float(run['gaussian_width']),
        wavenumbers=tuple(int(k) for k in run['gaussian_wavenumbers']),
        eta_center=float(run['gaussian_eta_center']),
    )
    sim = SimConfig(
        grid=grid,
        nu=float(physics['nu']),
        epsilon=float(physics['epsilon']),
        initial_data=initial,
        t_max=float(run['t_max']),
        cfl_safety=float(run['cfl_safety']),
        dt_max=float(run['dt_max']),
        integrator=run['integrator'],
        remap_enabled=bool(run['remap_enabled']),
        diagnostics_stride=int(run['diagnostics_stride']),
        seed=int(run['seed']),
        nonlinear=bool(physics['nonlinear']),
        snapshot_every=int(run['snapshot_every']),
        seam_threshold=float(resolved['diagnostics']['seam_threshold']),
    )
    validation = validate_sim_config(sim)
    if not validation['valid']:
        _fail(validation, lines, source)

    sweep = resolved['sweep']
    if not (sweep['nu_max'] >= sweep['nu_min'] > 0 and int(sweep['points']) >= 1):
        line = lines.get(('sweep', 'nu_min'), lines.get(('sweep', 'points')))
        raise ConfigurationError(f"sweep needs nu_max >= nu_min > 0 and points >= 1, got {sweep}",
                                 rule='ν_max ≥ ν_min > 0', line=line, path=source)
    return ConfigBundle(resolved, grid, weights, sim, source)


def parse_config(path: Optional[Union[str, Path]] = None, strict: bool = True,
                 overrides: Optional[Dict] = None) -> ConfigBundle:
    """
    Parses and validates a run file on top of the defaults.

    Args:
        path: run file; None uses the defaults alone
        strict: reject unknown sections and keys instead of warning
        overrides: section -> key -> value applied after the file (command-line flags)

    Returns:
        ConfigBundle: resolved, validated configuration

    Raises:
        ConfigurationError: with the path, line and violated rule
    """
    values, lines = read_run_file(path, strict) if path is not None else ({}, {})
    bundle = build_bundle(_merge(values, overrides), lines, str(path) if path is not None else '')
    logger.info("resolved configuration%s:\n%s", f" from {path}" if path else '', format_config(bundle.resolved))
    return bundle


def with_viscosity(bundle: ConfigBundle, nu: float) -> ConfigBundle:
    """Same configuration at another viscosity"""
    resolved = copy.deepcopy(bundle.resolved)
    resolved['physics']['nu'] = float(nu)
    return build_bundle(resolved, source=bundle.source)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        if value and isinstance(value[0], list):
            return ', '.join(':'.join(_format_value(part) for part in item) for item in value)
        return ', '.join(_format_value(item) for item in value)
    return str(value)


def format_config(resolved: Dict) -> str:
    """The resolved configuration in run-file syntax"""
    blocks = []
    for section, entries in resolved.items():
        body = '\n'.join(f"{key} = {_format_value(value)}" for key, value in entries.items())
        blocks.append(f"[{section}]\n{body}")
    return '\n\n'.join(blocks) + '\n'


def config_json(resolved: Dict) -> str:
    """Compact, key-sorted JSON of the resolved configuration"""
    return json.dumps(resolved, sort_keys=True, separators=(',', ':'), ensure_ascii=False)
