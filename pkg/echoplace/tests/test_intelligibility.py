import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, override_settings

from echoplace.choices import BandUnitChoices
from echoplace.constants import MODULATION_FREQUENCIES, STI_RATING_FLOOR, STI_RATINGS
from echoplace.exceptions import ConfigNotFound, ModelValidityError, SampleRateTooLow
from echoplace.intelligibility import (
    _masking_level, band_energies, band_mean_square, band_snr, empirical_sti, empirical_t60, intensity_to_level,
    level_to_intensity, mtf, octave_filter, propagate_noise, read_noise_csv, sti, sti_from_mtf, sti_rating,
)
from echoplace.models import ImpulseResponse, MtfMatrix
from .utils import shoebox_scene


def delta(length=3200, sample_rate=32000, amplitude=1.0, at=0):
    samples = np.zeros(length)
    samples[at] = amplitude
    return ImpulseResponse(samples, sample_rate)


def decaying_noise(t60, duration=2.0, sample_rate=32000, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(int(duration * sample_rate)) / sample_rate
    return ImpulseResponse(rng.standard_normal(len(t)) * np.exp(-3 * math.log(10) * t / t60), sample_rate)


class LevelTestCase(SimpleTestCase):

    def test_level_conversion(self):
        self.assertAlmostEqual(float(level_to_intensity(0)), 4e-10)
        self.assertAlmostEqual(float(intensity_to_level(level_to_intensity(63.5))), 63.5)
        self.assertEqual(float(intensity_to_level(0)), -math.inf)


class FilterTestCase(SimpleTestCase):

    def test_octave_filter_shape(self):
        bands = octave_filter(delta())
        self.assertEqual(bands.shape, (7, 3200))

    def test_octave_filter_separates_tones(self):
        t = np.arange(32000) / 32000
        tone = np.sin(2 * np.pi * 1000 * t)
        energies = np.sum(octave_filter(tone, 32000) ** 2, axis=1)
        self.assertEqual(int(np.argmax(energies)), 3)
        self.assertLess(energies[1], 1e-3 * energies[3])

    def test_sample_rate_too_low(self):
        with self.assertRaises(SampleRateTooLow):
            octave_filter(np.zeros(100), 16000)

    def test_band_energies_of_unit_impulse(self):
        self.assertTrue(np.allclose(band_energies(ImpulseResponse([1.0], 32000)).values, 1.0))
        self.assertTrue(np.allclose(band_energies(ImpulseResponse([0.5], 32000)).values, 0.25))

    def test_band_mean_square(self):
        t = np.arange(32000) / 32000
        tone = np.sqrt(2) * np.sin(2 * np.pi * 1000 * t)
        self.assertAlmostEqual(band_mean_square(tone, 32000).values[3], 1.0, delta=0.05)


class MtfTestCase(SimpleTestCase):

    def test_exponential_decay(self):
        t60 = 1.0
        fs = 32000
        t = np.arange(2 * fs) / fs
        envelope = np.exp(-3 * math.log(10) * t / t60)

        expected = 1 / np.sqrt(1 + (2 * np.pi * np.array(MODULATION_FREQUENCIES) * t60 / (6 * math.log(10))) ** 2)
        self.assertTrue(np.allclose(mtf(envelope, sample_rate=fs), expected, rtol=1e-3))

    def test_noise_factor(self):
        m = mtf(delta().samples, snr=0.0, sample_rate=32000)
        self.assertTrue(np.allclose(m, 0.5))

    def test_silent_band(self):
        self.assertTrue(np.array_equal(mtf(np.zeros(100), sample_rate=32000), np.zeros(14)))
        self.assertTrue(np.array_equal(mtf(delta().samples, snr=-math.inf, sample_rate=32000), np.zeros(14)))


class StiTestCase(SimpleTestCase):

    def test_sti_from_mtf(self):
        self.assertAlmostEqual(sti_from_mtf(np.ones((7, 14))).sti, 1.0)
        self.assertAlmostEqual(sti_from_mtf(np.zeros((7, 14))).sti, 0.0)
        self.assertAlmostEqual(sti_from_mtf(MtfMatrix(np.full((7, 14), 0.5))).sti, 0.5)

    def test_sti_weighting(self):
        m = np.full((7, 14), 0.5)
        m[0] = 0.1
        male = sti_from_mtf(m, 'male').sti
        female = sti_from_mtf(m, 'female').sti
        self.assertGreater(female, male, msg="Female weighting ignores the 125 Hz band")
        with self.assertRaises(ValueError):
            sti_from_mtf(m, 'child')

    def test_delta_is_perfect(self):
        result = sti(delta())
        self.assertAlmostEqual(result.sti, 1.0, places=6)
        self.assertEqual(result.rating, 'A+')

    @override_settings(ECHOPLACE={'compensate_filter_mtf': False})
    def test_uncompensated_delta(self):
        self.assertLessEqual(sti(delta()).sti, 1.0)
        self.assertGreater(sti(delta()).sti, 0.9)

    def test_reverberation_lowers_sti(self):
        short = sti(decaying_noise(0.3)).sti
        long = sti(decaying_noise(2.0, duration=3.0)).sti
        self.assertGreater(short, long)
        self.assertLess(long, 0.6)

    def test_noise_lowers_sti(self):
        h = delta()
        signal = level_to_intensity(np.full(7, 60.0)) * band_energies(h).values
        snr = band_snr(signal, signal, masking=False, reception_threshold=False)

        self.assertTrue(np.allclose(snr.values, 0.0))
        self.assertAlmostEqual(sti(h, snr).sti, 0.5, places=3)

    def test_rating(self):
        self.assertEqual(sti_rating(0.5601), 'E')
        self.assertEqual(sti_rating(0.77), 'A+')
        self.assertEqual(sti_rating(0.2), 'U')
        self.assertEqual(sti_rating(0.0), 'U')
        self.assertEqual(sti_rating(1.0), 'A+')
        with self.assertRaises(ValueError):
            sti_rating(1.2)

    def test_rating_boundaries(self):
        self.assertEqual(STI_RATINGS, (
            (0.76, 'A+'), (0.72, 'A'), (0.68, 'B'), (0.64, 'C'), (0.60, 'D'), (0.56, 'E'),
            (0.52, 'F'), (0.48, 'G'), (0.44, 'H'), (0.40, 'I'), (0.36, 'J'),
        ))
        ratings = [rating for _, rating in STI_RATINGS] + [STI_RATING_FLOOR]
        for i, (threshold, rating) in enumerate(STI_RATINGS):
            below = ratings[i + 1]
            with self.subTest(rating=rating):
                if i == 0:
                    # A+ lies strictly above its bound
                    self.assertEqual(sti_rating(threshold + 1e-9), rating)
                    self.assertEqual(sti_rating(threshold), below)
                else:
                    self.assertEqual(sti_rating(threshold), rating)
                    self.assertEqual(sti_rating(threshold - 1e-9), below)

    def test_as_dict(self):
        data = sti(delta()).as_dict()
        self.assertEqual(set(data), {'sti', 'rating', 'mti'})
        self.assertEqual(list(data['mti']), ['125', '250', '500', '1000', '2000', '4000', '8000'])


class SnrTestCase(SimpleTestCase):

    def test_no_disturbance(self):
        snr = band_snr(np.full(7, 1e-4), np.zeros(7), masking=False, reception_threshold=False)
        self.assertTrue(np.isinf(snr.values).all())
        self.assertEqual(snr.unit, BandUnitChoices.DB)

    def test_silent_signal(self):
        snr = band_snr(np.zeros(7), np.full(7, 1e-4))
        self.assertTrue((snr.values == -math.inf).all())

    def test_reception_threshold(self):
        # A 40 dB signal sits below the 46 dB threshold of the 125 Hz band
        snr = band_snr(level_to_intensity(np.full(7, 40.0)), np.zeros(7), masking=False)
        self.assertAlmostEqual(snr.values[0], -6.0, places=6)
        self.assertGreater(snr.values[3], 30.0)

    def test_masking_slope(self):
        self.assertAlmostEqual(_masking_level(50), -40.0)
        self.assertAlmostEqual(_masking_level(65), 1.8 * 65 - 146.9)
        self.assertAlmostEqual(_masking_level(80), -20.0)
        self.assertAlmostEqual(_masking_level(120), -10.0)

    def test_masking_reduces_snr(self):
        signal = level_to_intensity(np.full(7, 80.0))
        noise = level_to_intensity(np.full(7, 50.0))
        plain = band_snr(signal, noise, masking=False, reception_threshold=False)
        masked = band_snr(signal, noise, reception_threshold=False)

        self.assertAlmostEqual(masked.values[0], plain.values[0])
        self.assertTrue((masked.values[1:] < plain.values[1:]).all())

    def test_speech_levels(self):
        energies = np.full(7, 0.25)
        noise = level_to_intensity(np.full(7, 40.0))
        levels = np.array([60.0, 62.0, 64.0, 60.0, 55.0, 50.0, 45.0])

        scaled = band_snr(energies, noise, speech_levels=levels)
        folded = band_snr(energies * level_to_intensity(levels), noise)
        self.assertTrue(np.allclose(scaled.values, folded.values))

        # A source 2 m away (a quarter of the energy) at 60 dB against 40 dB of noise
        plain = band_snr(energies, noise, speech_levels=np.full(7, 60.0), masking=False, reception_threshold=False)
        self.assertTrue(np.allclose(plain.values, 20.0 + 10 * math.log10(0.25)))

    def test_doubling_signal(self):
        noise = level_to_intensity(np.full(7, 50.0))
        signal = level_to_intensity(np.full(7, 60.0))
        single = band_snr(signal, noise, masking=False)
        double = band_snr(2 * signal, noise, masking=False)
        self.assertTrue(np.allclose(double.values - single.values, 10 * math.log10(2)))

    def test_negative_intensity(self):
        with self.assertRaises(ValueError):
            band_snr(-np.ones(7), np.ones(7))


class EmpiricalTestCase(SimpleTestCase):

    def test_empirical_t60(self):
        self.assertAlmostEqual(empirical_t60(150), -2e-5 * 150 ** 2 + 0.0048 * 150 + 0.255)
        with self.assertRaises(ModelValidityError):
            empirical_t60(0)
        with self.assertRaises(ModelValidityError):
            empirical_t60(1000)

    def test_empirical_sti(self):
        self.assertAlmostEqual(empirical_sti(1.0), 0.5895)
        self.assertGreater(empirical_sti(0.5), empirical_sti(1.5))
        with self.assertRaises(ModelValidityError):
            empirical_sti(0)

    def test_empirical_sti_clipped(self):
        with self.assertWarns(UserWarning):
            self.assertEqual(empirical_sti(0.01), 1.0)


class NoiseTestCase(SimpleTestCase):

    def test_read_noise_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'noise.csv'
            path.write_text('band_hz,level_db\n' + ''.join(
                f'{fc},{40 + i}\n' for i, fc in enumerate((125, 250, 500, 1000, 2000, 4000, 8000))
            ))
            levels = read_noise_csv(path)
        self.assertEqual(list(levels.values), [40, 41, 42, 43, 44, 45, 46])
        self.assertEqual(levels.unit, BandUnitChoices.DB)

    def test_missing_band(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'noise.csv'
            path.write_text('band_hz,level_db\n125,40\n')
            with self.assertRaises(ValueError):
                read_noise_csv(path)

    def test_missing_file(self):
        with self.assertRaises(ConfigNotFound):
            read_noise_csv('/nonexistent/noise.csv')

    def test_scene_without_noise(self):
        self.assertIsNone(propagate_noise(shoebox_scene(), (1.0, 0.7, 0.6)))

    def test_propagate_noise(self):
        scene = shoebox_scene(noise=[{'position': [0.5, 0.5, 0.5], 'spectrum': 50}])
        responses = [delta(amplitude=0.5)]
        noise = propagate_noise(scene, (1.0, 0.5, 0.5), responses)

        self.assertTrue(np.allclose(noise.values, level_to_intensity(50) * 0.25, rtol=1e-3))
