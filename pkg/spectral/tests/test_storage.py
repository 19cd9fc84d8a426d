import json
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from spectral import storage
from spectral.exceptions import ArtifactError


class CsvTests(SimpleTestCase):
    """Numeric tables written with repr floats and read back strictly."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def test_floats_round_trip_bit_exact(self):
        values = np.random.default_rng(0).normal(size=(20, 3)) * 1e-7
        path = storage.write_csv(self.root / 'values.csv', values, header=['a', 'b', 'c'])
        np.testing.assert_array_equal(storage.read_numeric_csv(path), values)

    def test_header_detection(self):
        path = self.root / 'plain.csv'
        path.write_text('1.5,2\n3,4\n')
        self.assertEqual(storage.read_numeric_csv(path).shape, (2, 2))
        self.assertEqual(storage.read_numeric_csv(path, header=True).shape, (1, 2))
        path.write_text('x,y\n3,4\n')
        with self.assertRaisesMessage(ArtifactError, 'plain.csv:1'):
            storage.read_numeric_csv(path, header=False)

    def test_partly_numeric_first_row_is_not_a_header(self):
        path = self.root / 'typo.csv'
        path.write_text('1.0,oops\n2.0,3.0\n4.0,5.0\n')
        with self.assertRaisesMessage(ArtifactError, 'typo.csv:1'):
            storage.read_numeric_csv(path)

    def test_blank_lines_are_skipped(self):
        path = self.root / 'gaps.csv'
        path.write_text('1,2\n\n3,4\n')
        self.assertEqual(storage.read_numeric_csv(path).shape, (2, 2))

    def test_ragged_rows_rejected(self):
        path = self.root / 'ragged.csv'
        path.write_text('1,2\n3,4,5\n')
        with self.assertRaisesMessage(ArtifactError, 'expected 2 columns, found 3'):
            storage.read_numeric_csv(path)

    def test_non_finite_entries_rejected(self):
        path = self.root / 'nan.csv'
        path.write_text('1,2\nnan,4\n')
        with self.assertRaisesMessage(ArtifactError, 'nan.csv:2'):
            storage.read_numeric_csv(path)

    def test_missing_and_empty_files(self):
        with self.assertRaises(ArtifactError):
            storage.read_numeric_csv(self.root / 'absent.csv')
        path = self.root / 'empty.csv'
        path.write_text('a,b\n')
        with self.assertRaisesMessage(ArtifactError, 'no samples'):
            storage.read_numeric_csv(path)


class JsonTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def test_numpy_values_and_paths(self):
        path = storage.write_json(self.root / 'out' / 'data.json', {
            'array': np.arange(3), 'scalar': np.float64(0.25), 'path': self.root,
            'when': datetime(2024, 1, 2, tzinfo=timezone.utc),
        })
        data = storage.read_json(path)
        self.assertEqual(data['array'], [0, 1, 2])
        self.assertEqual(data['scalar'], 0.25)
        self.assertEqual(data['path'], str(self.root))
        self.assertTrue(data['when'].startswith('2024-01-02T00:00:00'))

    def test_non_finite_values_become_null(self):
        path = storage.write_json(self.root / 'data.json', {
            'ratio': float('nan'), 'weights': np.array([1.0, np.inf]), 'nested': [{'x': -np.inf}],
        })
        self.assertNotIn('NaN', path.read_text())
        self.assertEqual(storage.read_json(path), {'ratio': None, 'weights': [1.0, None], 'nested': [{'x': None}]})

    def test_encoder_for_json_fields(self):
        text = json.dumps({'q': np.int64(4), 'flag': np.bool_(True)}, cls=storage.ArrayJSONEncoder)
        self.assertEqual(json.loads(text), {'q': 4, 'flag': True})

    def test_invalid_json(self):
        path = self.root / 'bad.json'
        path.write_text('{"a": 1,\n')
        with self.assertRaisesMessage(ArtifactError, 'invalid JSON'):
            storage.read_json(path)
        with self.assertRaises(ArtifactError):
            storage.read_json(self.root / 'absent.json')


class MatrixCacheTests(SimpleTestCase):
    """Fixed-header binary matrix files."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.matrix = np.arange(16.0).reshape(4, 4)

    def test_header_and_vectors(self):
        path = storage.write_matrix_cache(
            self.root / 'm.bin', 'kernel', self.matrix, q=7, epsilon=0.5,
            vectors=[np.ones(4), np.arange(4.0)],
        )
        meta, vectors, matrix = storage.read_matrix_cache(path)
        self.assertEqual(meta, {'kind': 'kernel', 'n_emb': 4, 'q': 7, 'epsilon': 0.5})
        np.testing.assert_array_equal(vectors[1], np.arange(4.0))
        np.testing.assert_array_equal(matrix, self.matrix)
        self.assertEqual(path.stat().st_size, storage.HEADER_DTYPE.itemsize + 8 * (8 + 16))

    def test_bad_magic(self):
        path = self.root / 'other.bin'
        path.write_bytes(b'NOTAMATRIX' * 10)
        with self.assertRaisesMessage(ArtifactError, 'not a matrix cache file'):
            storage.read_matrix_cache(path)

    def test_truncated_file(self):
        path = storage.write_matrix_cache(self.root / 'm.bin', 'distance', self.matrix, q=1)
        path.write_bytes(path.read_bytes()[:-8])
        with self.assertRaisesMessage(ArtifactError, 'truncated'):
            storage.read_matrix_cache(path)

    def test_missing_file(self):
        with self.assertRaises(ArtifactError):
            storage.read_matrix_cache(self.root / 'absent.bin')

    def test_sparse_cache_requires_matrix_arrays(self):
        path = storage.save_arrays(self.root / 'arrays.npz', q=np.array(1))
        self.assertTrue(storage.is_sparse_cache(path))
        with self.assertRaisesMessage(ArtifactError, 'not a sparse matrix cache'):
            storage.load_sparse_cache(path)
