import json
import math
import tempfile
from pathlib import Path

from django.test import TestCase

from shearflow.config import (
    config_json,
    format_config,
    parse_config,
    read_run_file,
    with_viscosity,
)
from shearflow.exceptions import ConfigurationError

SMALL_RUN = """\
# tiny grid
[grid]
n_z = 16
n_v = 64
half_width = 4pi   ; box half-width

[physics]
nu = 0
epsilon = 1e-4
"""


class ConfigTestCase(TestCase):
    """Base test case writing run files into a temporary directory"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def run_file(self, text, name='run.cfg'):
        path = Path(self.tmp.name) / name
        path.write_text(text, encoding='utf-8')
        return path


class TestParseConfig(ConfigTestCase):
    """Test cases for reading and validating run files"""

    def test_defaults(self):
        """Test that no file gives the defaults"""
        bundle = parse_config()
        self.assertEqual(bundle.grid.n_z, 256)
        self.assertEqual(bundle.sim.integrator, 'rk4_integrating_factor')
        self.assertEqual(bundle.weights.nu, bundle.sim.nu)
        self.assertEqual(bundle.source, '')

    def test_small_file(self):
        """Test overlaying a file on the defaults, with comments and pi multiples"""
        bundle = parse_config(self.run_file(SMALL_RUN))
        self.assertEqual(bundle.grid.shape, (16, 64))
        self.assertAlmostEqual(bundle.grid.half_width, 4 * math.pi)
        self.assertEqual(bundle.sim.nu, 0.0)
        self.assertEqual(bundle.weights.nu, 0.0)
        self.assertEqual(bundle.sim.epsilon, 1e-4)
        # untouched sections keep their defaults
        self.assertEqual(bundle.sim.t_max, 50.0)

    def test_line_numbers(self):
        """Test that read_run_file records the line of each key"""
        _, lines = read_run_file(self.run_file(SMALL_RUN))
        self.assertEqual(lines[('grid', 'n_z')], 3)
        self.assertEqual(lines[('physics', 'epsilon')], 9)

    def test_modes(self):
        """Test k:j:amp triples"""
        path = self.run_file("[run]\ninitial_data = modes\nmodes = 1:12:1.0, 0:1:0.5\n")
        bundle = parse_config(path)
        self.assertEqual(bundle.resolved['run']['modes'], [[1, 12, 1.0], [0, 1, 0.5]])
        self.assertEqual(bundle.sim.initial_data.modes, ((1, 12, 1.0), (0, 1, 0.5)))

    def test_overrides(self):
        """Test that command-line overrides win over the file"""
        bundle = parse_config(self.run_file("[run]\nseed = 3\n"), overrides={'run': {'seed': 7}})
        self.assertEqual(bundle.sim.seed, 7)

    def test_format_reparses(self):
        """Test that the resolved configuration written as a run file reads back the same"""
        bundle = parse_config(self.run_file(SMALL_RUN))
        again = parse_config(self.run_file(format_config(bundle.resolved), name='resolved.cfg'))
        self.assertEqual(again.resolved, bundle.resolved)

    def test_config_json(self):
        """Test compact key-sorted JSON"""
        bundle = parse_config()
        text = config_json(bundle.resolved)
        self.assertTrue(text.startswith('{"diagnostics":{'))
        self.assertNotIn(', ', text)
        self.assertNotIn('": ', text)
        self.assertEqual(json.loads(text), bundle.resolved)

    def test_with_viscosity(self):
        """Test that only nu changes"""
        bundle = parse_config()
        other = with_viscosity(bundle, 1e-4)
        self.assertEqual(other.sim.nu, 1e-4)
        self.assertEqual(other.weights.nu, 1e-4)
        self.assertEqual(bundle.sim.nu, 1e-3)
        self.assertEqual(other.grid, bundle.grid)


class TestConfigErrors(ConfigTestCase):
    """Test cases for rejected run files"""

    def test_missing_file(self):
        """Test that a missing file names the rule and path"""
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config(Path(self.tmp.name) / 'absent.cfg')
        self.assertEqual(ctx.exception.rule, 'config file exists')
        self.assertIn('absent.cfg', str(ctx.exception))

    def test_rule_and_line(self):
        """Test that a violated weight rule reports the line of sigma"""
        path = self.run_file("[weights]\nbeta = 5\nsigma = 10\n")
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config(path)
        self.assertEqual(ctx.exception.rule, 'β + 3α + 8 < σ')
        self.assertEqual(ctx.exception.line, 3)
        self.assertIn('run.cfg:3:', str(ctx.exception))

    def test_grid_rule(self):
        """Test that a bad grid size reports its line"""
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config(self.run_file("[grid]\nn_z = 12\n"))
        self.assertEqual(ctx.exception.rule, 'n_z is a power of two >= 8')
        self.assertEqual(ctx.exception.line, 2)

    def test_unknown_key(self):
        """Test that unknown keys fail in strict mode and warn in lenient mode"""
        path = self.run_file("[grid]\nn_x = 16\n")
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config(path)
        self.assertEqual(ctx.exception.rule, 'known keys only')
        with self.assertLogs('shearflow.config', 'WARNING'):
            bundle = parse_config(path, strict=False)
        self.assertEqual(bundle.grid.n_z, 256)

    def test_unknown_section(self):
        """Test that unknown sections fail in strict mode"""
        path = self.run_file("[output]\nformat = csv\n")
        with self.assertRaises(ConfigurationError):
            parse_config(path)
        with self.assertLogs('shearflow.config', 'WARNING'):
            parse_config(path, strict=False)

    def test_duplicate_key(self):
        """Test that a key set twice is refused"""
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config(self.run_file("[physics]\nnu = 1e-3\nnu = 1e-4\n"))
        self.assertEqual(ctx.exception.rule, 'keys set once')

    def test_bad_values(self):
        """Test that values of the wrong type are reported with their line"""
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config(self.run_file("[grid]\n\nn_z = sixteen\n"))
        self.assertEqual(ctx.exception.line, 3)
        with self.assertRaises(ConfigurationError):
            parse_config(self.run_file("[physics]\nnonlinear = maybe\n"))
        with self.assertRaises(ConfigurationError):
            parse_config(self.run_file("[run]\nmodes = 1:2\n"))

    def test_syntax(self):
        """Test malformed headers and keys outside sections"""
        with self.assertRaises(ConfigurationError):
            parse_config(self.run_file("[grid\nn_z = 16\n"))
        with self.assertRaises(ConfigurationError):
            parse_config(self.run_file("n_z = 16\n"))
        with self.assertRaises(ConfigurationError):
            parse_config(self.run_file("[grid]\nn_z 16\n"))

    def test_sweep_range(self):
        """Test that the sweep needs a positive viscosity range"""
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config(self.run_file("[sweep]\nnu_min = 0\n"))
        self.assertEqual(ctx.exception.rule, 'ν_max ≥ ν_min > 0')
