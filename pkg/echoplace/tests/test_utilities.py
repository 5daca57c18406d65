import logging
import os
from unittest import mock

from django.core.exceptions import ImproperlyConfigured
from django.test import SimpleTestCase, override_settings

from echoplace.conf import get_config
from echoplace.constants import THREADS_ENV
from echoplace.utilities import ListHandler, activate_settings, derive_seed, parallel_map


class ConfigTestCase(SimpleTestCase):

    def test_defaults(self):
        self.assertEqual(get_config('anneal_alpha'), 0.95)
        self.assertEqual(get_config('anneal_k_reject'), 10)

    def test_unknown_setting(self):
        with self.assertRaises(ImproperlyConfigured):
            get_config('warp_factor')

    @override_settings(ECHOPLACE={'rays': 1000})
    def test_settings_override_defaults(self):
        self.assertEqual(get_config('rays'), 1000)
        self.assertEqual(get_config('seed'), 0)

    @override_settings(ECHOPLACE={'rays': 1000})
    def test_activated_overrides_take_precedence(self):
        with activate_settings({'rays': 10}):
            self.assertEqual(get_config('rays'), 10)
            with activate_settings({'seed': 4}):
                self.assertEqual(get_config('rays'), 10)
                self.assertEqual(get_config('seed'), 4)
            self.assertEqual(get_config('seed'), 0)
        self.assertEqual(get_config('rays'), 1000)

    def test_threads(self):
        with mock.patch.dict(os.environ, {THREADS_ENV: '3'}):
            self.assertEqual(get_config('threads'), 3)
        with activate_settings({'threads': 2}):
            self.assertEqual(get_config('threads'), 2)
        with activate_settings({'threads': 0}), self.assertRaises(ImproperlyConfigured):
            get_config('threads')


class SeedTestCase(SimpleTestCase):

    def test_stable(self):
        self.assertEqual(derive_seed(0, 'sources'), derive_seed(0, 'sources'))
        self.assertNotEqual(derive_seed(0, 'sources'), derive_seed(1, 'sources'))
        self.assertNotEqual(derive_seed(0, 'sources'), derive_seed(0, 'listeners'))

    def test_positions(self):
        # Sub-micrometre differences map to the same seed
        self.assertEqual(derive_seed(0, (1.0, 2.0, 3.0)), derive_seed(0, [1.0000000001, 2.0, 3.0]))
        self.assertLess(derive_seed(0, (1.0, 2.0, 3.0)), 2 ** 64)


class ParallelMapTestCase(SimpleTestCase):

    def test_keeps_order(self):
        with activate_settings({'threads': 4}):
            self.assertEqual(parallel_map(lambda x: x * x, range(20)), [x * x for x in range(20)])

    def test_workers_see_overrides(self):
        with activate_settings({'threads': 4, 'rays': 7}):
            self.assertEqual(parallel_map(lambda _: get_config('rays'), range(8)), [7] * 8)

    def test_empty(self):
        self.assertEqual(parallel_map(str, []), [])


class ListHandlerTestCase(SimpleTestCase):

    def test_collects_messages(self):
        messages = []
        logger = logging.getLogger('echoplace.tests.list_handler')
        handler = ListHandler(queue=messages)
        logger.addHandler(handler)
        logger.setLevel(logging.INFO)
        try:
            logger.info("first")
            logger.debug("hidden")
            logger.warning("second")
        finally:
            logger.removeHandler(handler)
        self.assertEqual(messages, ["first", "second"])
