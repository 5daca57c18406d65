import itertools
import math
import tempfile
import warnings
from collections import Counter
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, override_settings

from echoplace.geometry import intersect_rays, plane_groups, points_in_boxes, segments_blocked
from echoplace.models import EnergyHistogram
from echoplace.solvers.geometric import (
    band_synthesis, dump_histogram, histogram_to_rir, image_source_rir, image_sources, late_band_signals, sabine_t60,
    schroeder_t60, trace_histogram,
)
from .utils import free_field_scene, shoebox_scene, two_rooms_scene


class GeometryTestCase(SimpleTestCase):

    def test_intersect_rays(self):
        scene = shoebox_scene(size=(2.0, 2.0, 2.0))
        origins = np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]])
        directions = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -2.0]])

        distance, index = intersect_rays(origins, directions, scene.triangles)
        self.assertTrue(np.allclose(distance, [1.0, 0.5]))
        self.assertTrue((index >= 0).all())

    def test_miss(self):
        distance, index = intersect_rays([[0, 0, 0]], [[1, 0, 0]], np.zeros((0, 3, 3)))
        self.assertEqual(distance[0], math.inf)
        self.assertEqual(index[0], -1)

    def test_segments_blocked(self):
        scene = two_rooms_scene()
        blocked = segments_blocked([[1, 1, 1], [1, 1, 1]], [[3, 1, 1], [1.5, 1, 1]], scene.triangles)
        self.assertEqual(list(blocked), [True, False])

    def test_plane_groups(self):
        self.assertEqual(len(plane_groups(shoebox_scene().triangles)), 6)

    def test_points_in_boxes(self):
        inside = points_in_boxes([[0.5, 0.5, 0.5], [1.5, 0.5, 0.5]], [[0, 0, 0]], [[1, 1, 1]])
        self.assertEqual(list(inside), [True, False])


class ImageSourceTestCase(SimpleTestCase):

    def test_free_field(self):
        images = image_sources(free_field_scene(), (0, 0, 0), (3, 4, 0), max_order=2)

        self.assertEqual(len(images), 1)
        self.assertAlmostEqual(images[0].distance, 5.0)
        self.assertTrue(np.allclose(images[0].amplitudes, 0.2))

    def test_shoebox_orders(self):
        scene = shoebox_scene(size=(4.0, 3.0, 2.5), preset='concrete')
        source, listener = (1.1, 0.9, 1.3), (2.7, 2.2, 0.8)
        images = image_sources(scene, source, listener, max_order=2)

        orders = Counter(image.order for image in images)
        self.assertEqual(orders, {0: 1, 1: 6, 2: 18})

    def test_first_order_reflection(self):
        scene = shoebox_scene(size=(4.0, 3.0, 2.5), preset='concrete')
        source, listener = np.array([1.1, 0.9, 1.3]), np.array([2.7, 2.2, 0.8])
        images = image_sources(scene, source, listener, max_order=1)

        # Floor reflection: the image lies below z = 0
        floor = [image for image in images if image.order == 1 and image.position[2] < 0]
        self.assertEqual(len(floor), 1)
        expected = np.linalg.norm(listener - np.array([1.1, 0.9, -1.3]))
        self.assertAlmostEqual(floor[0].distance, expected)
        concrete = np.array([0.01, 0.01, 0.02, 0.02, 0.02, 0.03, 0.03])
        self.assertTrue(np.allclose(floor[0].amplitudes, np.sqrt(1 - concrete) / expected))

    def test_matches_enumerated_images(self):
        size = np.array([4.0, 3.0, 2.5])
        scene = shoebox_scene(size=tuple(size), preset='concrete')
        source, listener = np.array([1.1, 0.9, 1.3]), np.array([2.7, 2.2, 0.8])
        factor = np.sqrt(1 - np.array([0.01, 0.01, 0.02, 0.02, 0.02, 0.03, 0.03]))

        # Along each axis the images lie at 2nL + x after |2n| reflections and at 2nL - x after |2n - 1|
        axes = []
        for axis in range(3):
            axes.append([
                (2 * n * size[axis] + sign * source[axis], abs(2 * n) if sign > 0 else abs(2 * n - 1))
                for n in range(-2, 3) for sign in (1, -1)
            ])
        expected = []
        for (x, nx), (y, ny), (z, nz) in itertools.product(*axes):
            order = nx + ny + nz
            if order <= 3:
                distance = float(np.linalg.norm(listener - [x, y, z]))
                expected.append((round(distance, 9), order))

        images = image_sources(scene, source, listener, max_order=3)
        found = sorted((round(image.distance, 9), image.order) for image in images)
        self.assertEqual(len(images), 63)
        self.assertEqual(found, sorted(expected))
        for image in images:
            self.assertTrue(np.allclose(image.amplitudes, factor ** image.order / image.distance, atol=1e-6))

    def test_occluded_direct_path(self):
        images = image_sources(two_rooms_scene(), (1, 1, 1), (3, 1, 1), max_order=1)
        self.assertFalse([image for image in images if image.order == 0])

    def test_negative_order(self):
        with self.assertRaises(ValueError):
            image_sources(free_field_scene(), (0, 0, 0), (1, 0, 0), max_order=-1)

    def test_direct_impulse(self):
        scene = free_field_scene()
        h = image_source_rir(scene, (0, 0, 0), (2, 0, 0), max_order=0, duration=0.1)
        delay = int(round(2 / scene.speed_of_sound * scene.sample_rate))

        self.assertEqual(len(h), int(0.1 * scene.sample_rate))
        self.assertAlmostEqual(h.samples[delay], 0.5)
        self.assertAlmostEqual(float(np.abs(np.delete(h.samples, delay)).max()), 0.0)
        self.assertEqual(h.provenance, 'image-source')

    def test_band_synthesis_passes_identical_bands(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(1000)
        self.assertTrue(np.allclose(band_synthesis(np.tile(x, (7, 1)), 32000), x))


class RayTracingTestCase(SimpleTestCase):

    @override_settings(ECHOPLACE={'max_ray_time': 0.2})
    def test_closed_room_does_not_leak(self):
        scene = shoebox_scene()
        histogram = trace_histogram(scene, (0.5, 0.5, 0.5), (1.5, 1.0, 0.7), ray_count=200, duration=0.2)

        self.assertEqual(histogram.escaped_fraction, 0.0)
        self.assertEqual(histogram.energy.shape, (7, 200))
        self.assertTrue((histogram.energy >= 0).all())
        self.assertGreater(histogram.energy.sum(), 0.0)

    def test_free_field_energy(self):
        scene = free_field_scene()
        with self.assertWarns(UserWarning):
            histogram = trace_histogram(scene, (0, 0, 0), (1, 0, 0), ray_count=20000, seed=3, duration=0.05)

        self.assertEqual(histogram.escaped_fraction, 1.0)
        totals = histogram.band_totals
        self.assertTrue(np.allclose(totals, totals[0]), msg="Free-field energy differs between bands")
        # A sphere of radius r at 1 m intercepts r^2 / 4 of the emitted energy
        radius = histogram.detector_radius
        self.assertAlmostEqual(totals[0] / (radius ** 2 / 4), 1.0, delta=0.3)
        self.assertAlmostEqual(totals[0] * histogram.pressure_scale, 1.0, delta=0.3)
        self.assertEqual(int(np.argmax(histogram.energy[0])), 2)

    @override_settings(ECHOPLACE={'rir_duration': 1.0})
    def test_energy_within_emitted(self):
        scene = shoebox_scene(preset='brick')
        histogram = trace_histogram(scene, (0.5, 0.5, 0.5), (1.5, 1.0, 0.7), ray_count=5000, seed=2)

        self.assertTrue((histogram.band_totals > 0).all())
        self.assertTrue((histogram.band_totals <= 1.0).all(), msg=f"Gathered {histogram.band_totals}")

    def test_anechoic_room_only_direct_bin(self):
        scene = shoebox_scene(size=(4.0, 4.0, 4.0), preset='anechoic')
        histogram = trace_histogram(scene, (1.0, 2.0, 2.0), (3.0, 2.0, 2.0), ray_count=5000, seed=1, duration=0.1)

        direct = int(2.0 / scene.speed_of_sound / histogram.bin_width)
        for band in histogram.energy:
            self.assertEqual(list(np.flatnonzero(band)), [direct])

    def test_sabine_decay(self):
        scene = shoebox_scene(
            size=(10.0, 8.0, 3.0),
            materials=[{'name': 'walls', 'absorption': [0.2] * 7, 'scattering': [0.1] * 7}],
        )
        histogram = trace_histogram(scene, (3.0, 2.5, 1.5), (7.0, 5.5, 1.2), ray_count=20000, seed=0, duration=1.0)

        self.assertAlmostEqual(sabine_t60(scene), 0.161 * 240 / 53.6)
        t60 = schroeder_t60(histogram.energy[3], 1 / histogram.bin_width)
        self.assertAlmostEqual(t60 / sabine_t60(scene), 1.0, delta=0.2)

    def test_variance_falls_with_ray_count(self):
        scene = free_field_scene()

        def variance(ray_count):
            totals = []
            with warnings.catch_warnings():
                warnings.simplefilter('ignore')
                for seed in range(400):
                    histogram = trace_histogram(scene, (0, 0, 0), (1, 0, 0), ray_count, seed=seed, duration=0.01)
                    totals.append(histogram.band_totals[0])
            return np.var(totals)

        ratio = variance(2000) / variance(4000)
        self.assertGreater(ratio, 1.4)
        self.assertLess(ratio, 2.8)

    def test_absorption_scales_energy(self):
        rigid = shoebox_scene()
        absorbing = shoebox_scene(preset='carpet')
        kwargs = {'ray_count': 300, 'seed': 5, 'duration': 0.2}

        with override_settings(ECHOPLACE={'max_ray_time': 0.2}):
            rigid_totals = trace_histogram(rigid, (0.5, 0.5, 0.5), (1.5, 1.0, 0.7), **kwargs).band_totals
            absorbing_totals = trace_histogram(absorbing, (0.5, 0.5, 0.5), (1.5, 1.0, 0.7), **kwargs).band_totals

        self.assertTrue((absorbing_totals < rigid_totals).all())
        self.assertGreater(absorbing_totals[0], absorbing_totals[-1], msg="Carpet absorbs more at high frequencies")

    @override_settings(ECHOPLACE={'max_ray_time': 0.1})
    def test_seeded_tracing_is_reproducible(self):
        scene = shoebox_scene()
        args = (scene, (0.5, 0.5, 0.5), (1.5, 1.0, 0.7))

        first = trace_histogram(*args, ray_count=100, seed=7, duration=0.1)
        second = trace_histogram(*args, ray_count=100, seed=7, duration=0.1)
        other = trace_histogram(*args, ray_count=100, seed=8, duration=0.1)

        self.assertTrue(np.array_equal(first.energy, second.energy))
        self.assertFalse(np.array_equal(first.energy, other.energy))

    def test_invalid_ray_count(self):
        with self.assertRaises(ValueError):
            trace_histogram(shoebox_scene(), (0.5, 0.5, 0.5), (1.5, 1.0, 0.7), ray_count=-5)


class SynthesisTestCase(SimpleTestCase):

    def histogram(self):
        bins = 100
        decay = np.exp(-np.arange(bins) * 0.05)
        energy = np.outer(np.linspace(1.0, 0.5, 7), decay) * 1e-3
        return EnergyHistogram(bin_width=0.001, energy=energy)

    def test_late_band_energy(self):
        histogram = self.histogram()
        signals = late_band_signals(histogram, 32000, seed=0)

        self.assertEqual(signals.shape, (7, 3200))
        self.assertTrue(np.allclose(np.sum(signals ** 2, axis=1), histogram.band_totals, rtol=1e-9))

    def test_bins_narrower_than_a_sample(self):
        histogram = EnergyHistogram(bin_width=1e-5, energy=np.ones((7, 10)))
        with self.assertRaises(ValueError):
            late_band_signals(histogram, 32000, seed=0)

    def test_late_response(self):
        h = histogram_to_rir(self.histogram(), sample_rate=32000, seed=4)
        again = histogram_to_rir(self.histogram(), sample_rate=32000, seed=4)

        self.assertEqual(h.provenance, 'ray-tracing')
        self.assertEqual(len(h), 3200)
        self.assertTrue(np.array_equal(h.samples, again.samples))

    def test_late_response_decay(self):
        bin_width = 0.001
        t = np.arange(1000) * bin_width
        energy = np.tile(np.exp(-math.log(1e6) * t / 0.5), (7, 1)) * 1e-3
        h = histogram_to_rir(EnergyHistogram(bin_width=bin_width, energy=energy), sample_rate=32000, seed=2)

        self.assertAlmostEqual(schroeder_t60(h.samples ** 2, h.sample_rate), 0.5, delta=0.05)

    def test_detector_scaling(self):
        histogram = self.histogram()
        gathered = EnergyHistogram(bin_width=0.001, energy=histogram.energy, detector_radius=0.2)
        h = histogram_to_rir(gathered, sample_rate=32000, seed=4)

        self.assertAlmostEqual(gathered.pressure_scale, 100.0)
        self.assertAlmostEqual(h.energy / (100.0 * histogram.energy.sum()), 1.0, delta=0.05)

    def test_early_part_replaces_histogram(self):
        scene = free_field_scene()
        early = image_source_rir(scene, (0, 0, 0), (1, 0, 0), max_order=0, duration=0.1)
        h = histogram_to_rir(self.histogram(), early, seed=4, early_cutoff=0.1)

        self.assertEqual(h.provenance, 'geometric')
        self.assertTrue(np.allclose(h.samples, early.samples))

    def test_sample_rate_required(self):
        with self.assertRaises(ValueError):
            histogram_to_rir(self.histogram())

    def test_dump_histogram(self):
        histogram = EnergyHistogram(bin_width=0.01, energy=np.ones((7, 3)))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'histogram.csv'
            dump_histogram(path, histogram)
            lines = path.read_text().splitlines()

        self.assertEqual(lines[0], 'band_hz,bin_start_s,energy')
        self.assertEqual(len(lines), 1 + 7 * 3)
        self.assertTrue(lines[4].startswith('250,0.000000,'))


class ReverberationTestCase(SimpleTestCase):

    def test_schroeder_t60(self):
        rate = 1000
        t = np.arange(2 * rate) / rate
        energy = np.exp(-math.log(1e6) * t / 0.5)
        self.assertAlmostEqual(schroeder_t60(energy, rate), 0.5, delta=0.005)

    def test_schroeder_silent(self):
        with self.assertRaises(ValueError):
            schroeder_t60(np.zeros(100), 1000)

    def test_sabine_t60(self):
        scene = shoebox_scene(size=(10.0, 5.0, 3.0), preset='acoustic_tile')
        absorption = np.mean([0.50, 0.70, 0.60, 0.70, 0.70, 0.50, 0.50])
        self.assertAlmostEqual(sabine_t60(scene), 0.161 * 150 / (190 * absorption))
