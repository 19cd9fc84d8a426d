import json
import tempfile
from pathlib import Path

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, override_settings

from spectral.choices import FDOrder, SystemKind
from spectral.config import build_config, default_spinup, read_config_file
from spectral.exceptions import ConfigError


class BuildConfigTests(SimpleTestCase):
    """Layering of settings defaults, TOML files and flags."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def write_toml(self, text):
        path = self.root / 'run.toml'
        path.write_text(text)
        return path

    def test_defaults_come_from_settings(self):
        config = build_config()
        self.assertEqual(config.system, SystemKind.FAYAD_TORUS_PRODUCT)
        self.assertEqual(config.n, settings.KOOPMAN['N'])
        self.assertEqual(config.q, tuple(settings.KOOPMAN['Q']))
        self.assertTrue(config.auto_epsilon)
        self.assertEqual(config.scheme, FDOrder.FIRST_FORWARD)
        self.assertEqual(config.spinup, 0.0)
        self.assertFalse(config.is_external)

    @override_settings(KOOPMAN={**settings.KOOPMAN, 'N': 123, 'Q': [7]})
    def test_settings_override(self):
        config = build_config()
        self.assertEqual((config.n, config.q), (123, (7,)))

    def test_file_values_and_flag_precedence(self):
        path = self.write_toml('system = "circle_rotation"\nn = 500\nq = [10, 20]\ntheta = 0.001\n')
        config = build_config(path, n=600, theta=None)
        self.assertEqual(config.system, SystemKind.CIRCLE_ROTATION)
        self.assertEqual(config.n, 600)
        self.assertEqual(config.q, (10, 20))
        self.assertEqual(config.theta, 0.001)

    def test_single_q_in_file(self):
        config = build_config(self.write_toml('q = 12\n'))
        self.assertEqual(config.q, (12,))

    def test_unknown_file_keys(self):
        with self.assertRaises(ConfigError) as ctx:
            build_config(self.write_toml('bogus = 1\nn = 10\n'))
        self.assertEqual(ctx.exception.keys, ('bogus',))
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_unknown_flag_keys(self):
        with self.assertRaises(ConfigError):
            build_config(bogus=1)

    def test_missing_and_malformed_files(self):
        with self.assertRaises(ConfigError) as ctx:
            read_config_file(self.root / 'absent.toml')
        self.assertEqual(ctx.exception.keys, ('config',))
        with self.assertRaises(ConfigError):
            read_config_file(self.write_toml('n = = 3\n'))

    def test_every_invalid_key_is_reported(self):
        with self.assertRaises(ConfigError) as ctx:
            build_config(n=1, dt=-1.0, m=0, theta=-1.0, scheme='backward')
        self.assertTrue({'n', 'dt', 'm', 'theta', 'scheme'} <= set(ctx.exception.keys))
        for key in ('dt', 'theta', 'scheme'):
            self.assertIn(key, str(ctx.exception))

    def test_unparseable_values(self):
        with self.assertRaises(ConfigError) as ctx:
            build_config(epsilon='wide', n='many')
        self.assertEqual(set(ctx.exception.keys), {'epsilon', 'n'})

    def test_epsilon_parsing(self):
        self.assertTrue(build_config(epsilon='AUTO').auto_epsilon)
        self.assertEqual(build_config(epsilon='0.5').epsilon, 0.5)
        with self.assertRaises(ConfigError):
            build_config(epsilon='-2')

    def test_q_must_leave_embedded_samples(self):
        with self.assertRaises(ConfigError) as ctx:
            build_config(system='circle_rotation', n=100, q=[10, 100])
        self.assertEqual(ctx.exception.keys, ('q',))

    def test_zero_neighbours_means_dense(self):
        self.assertIsNone(build_config(k_nn=0).k_nn)
        self.assertEqual(build_config(k_nn=15).k_nn, 15)

    def test_system_parameters_are_validated(self):
        with self.assertRaises(ConfigError) as ctx:
            build_config(system='l63_pure', sigma=-1.0)
        self.assertIn('sigma', ctx.exception.keys)
        with self.assertRaises(ConfigError):
            build_config(system='pendulum')

    def test_full_scale(self):
        config = build_config(system='l63_product', full_scale=True)
        self.assertEqual(config.n, settings.KOOPMAN['FULL_N'])
        self.assertEqual(config.q, tuple(settings.KOOPMAN['FULL_Q']))
        self.assertEqual(config.spinup, settings.KOOPMAN['FULL_SPINUP_L63'])
        self.assertEqual(build_config(system='l63_product', full_scale=True, n=60000).n, 60000)

    def test_default_spinup(self):
        self.assertEqual(default_spinup(SystemKind.L63_PURE), settings.KOOPMAN['SPINUP_L63'])
        self.assertEqual(default_spinup(SystemKind.CIRCLE_ROTATION, True), settings.KOOPMAN['SPINUP_TORUS'])
        self.assertEqual(build_config(system='l63_pure', spinup=2.5).spinup, 2.5)

    def test_data_implies_external_system(self):
        data = self.root / 'obs.csv'
        data.write_text('x\n1.0\n2.0\n')
        config = build_config(data=str(data))
        self.assertTrue(config.is_external)
        self.assertEqual(config.data, data)
        with self.assertRaises(ConfigError) as ctx:
            build_config(data=str(self.root / 'absent.csv'))
        self.assertEqual(ctx.exception.keys, ('data',))

    def test_data_overrides_named_system(self):
        data = self.root / 'obs.csv'
        data.write_text('1.0\n2.0\n')
        with self.assertLogs('spectral.config', level='WARNING'):
            config = build_config(system='circle_rotation', data=str(data))
        self.assertTrue(config.is_external)
        config = build_config(self.write_toml('system = "l63_pure"\n'), data=str(data))
        self.assertEqual(config.system, SystemKind.EXTERNAL)

    def test_sidecar_dt_ranks_below_explicit_values(self):
        data = self.root / 'obs.csv'
        data.write_text('1.0\n2.0\n')
        (self.root / 'obs.json').write_text('{"dt": 1.0}')
        self.assertEqual(build_config(data=str(data)).dt, 1.0)
        self.assertEqual(build_config(data=str(data), dt=0.05).dt, 0.05)
        self.assertEqual(build_config(self.write_toml('dt = 0.25\n'), data=str(data)).dt, 0.25)

    def test_explicit_initial_state(self):
        config = build_config(system='circle_rotation', x0=[0.5])
        np.testing.assert_array_equal(config.initial_state(), [0.5])

    def test_as_dict_is_json_ready(self):
        data = build_config(system='circle_rotation', q=[3, 4]).as_dict()
        self.assertEqual(json.loads(json.dumps(data))['q'], [3, 4])
        self.assertIsInstance(data['output_dir'], str)
