"""
File formats: CSV tables, JSON sidecars and manifests, the binary matrix
cache, and npz stage artifacts.
"""
import csv
import json
import logging
from pathlib import Path

import numpy as np
import scipy.sparse
from django.core.serializers.json import DjangoJSONEncoder

from .exceptions import ArtifactError

logger = logging.getLogger(__name__)

MATRIX_MAGIC = b'KOOPMAT1'

MATRIX_KINDS = {'distance': 0, 'kernel': 1, 'markov': 2}

HEADER_DTYPE = np.dtype([
    ('magic', 'S8'),
    ('kind', '<i8'),
    ('n_emb', '<i8'),
    ('q', '<i8'),
    ('epsilon', '<f8'),
    ('n_vectors', '<i8'),
])


class ArrayJSONEncoder(DjangoJSONEncoder):
    """DjangoJSONEncoder that also understands numpy scalars, arrays and paths."""

    def default(self, o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, Path):
            return str(o)
        return super().default(o)


def sidecar_path(path):
    return Path(path).with_suffix('.json')


def finite_or_none(data):
    """Replace NaN and infinities with None so the result is strict JSON."""
    if isinstance(data, dict):
        return {key: finite_or_none(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [finite_or_none(value) for value in data]
    if isinstance(data, np.ndarray):
        return finite_or_none(data.tolist())
    if isinstance(data, (float, np.floating)):
        return float(data) if np.isfinite(data) else None
    return data


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(finite_or_none(data), cls=ArrayJSONEncoder, indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + '\n')
    return path


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ArtifactError(f"missing file {path}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: invalid JSON at line {exc.lineno}") from exc


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, rows, *, header=None):
    """Write a table; floats use repr so that reading back is bit-exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle)
        if header:
            writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
    return path


def _is_float(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _parse_row(row, line_number, path):
    try:
        values = [float(cell) for cell in row]
    except ValueError as exc:
        raise ArtifactError(f"{path}:{line_number}: not a numeric row ({exc})") from exc
    if not all(np.isfinite(values)):
        raise ArtifactError(f"{path}:{line_number}: non-finite entry")
    return values


def read_numeric_csv(path, *, header=None):
    """
    Read a numeric table with one sample per row.

    ``header`` True skips the first row, False parses it, None skips it only
    when none of its cells is numeric.
    """
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing file {path}")
    rows = []
    width = None
    with path.open(newline='') as handle:
        for line_number, row in enumerate(csv.reader(handle), start=1):
            row = [cell.strip() for cell in row]
            if not row or all(not cell for cell in row):
                continue
            if line_number == 1 and (header or (header is None and not any(map(_is_float, row)))):
                continue
            values = _parse_row(row, line_number, path)
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ArtifactError(
                    f"{path}:{line_number}: expected {width} columns, found {len(values)}"
                )
            rows.append(values)
    if not rows:
        raise ArtifactError(f"{path}: no samples")
    return np.array(rows, dtype=float)


def write_matrix_cache(path, kind, matrix, *, q, epsilon=0.0, vectors=()):
    """
    Binary dump: fixed header (magic, kind, N_emb, Q, epsilon, vector count),
    then the vectors, then the matrix, all row-major little-endian float64.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrix = np.ascontiguousarray(matrix, dtype='<f8')
    n_emb = matrix.shape[0]
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header[0] = (MATRIX_MAGIC, MATRIX_KINDS[kind], n_emb, q, epsilon, len(vectors))
    with path.open('wb') as handle:
        header.tofile(handle)
        for vector in vectors:
            np.ascontiguousarray(vector, dtype='<f8').tofile(handle)
        matrix.tofile(handle)
    return path


def read_matrix_cache(path):
    """Return (header dict, list of vectors, matrix) from write_matrix_cache output."""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing cache file {path}")
    with path.open('rb') as handle:
        header = np.fromfile(handle, dtype=HEADER_DTYPE, count=1)
        if header.size != 1 or header[0]['magic'] != MATRIX_MAGIC:
            raise ArtifactError(f"{path}: not a matrix cache file")
        n_emb = int(header[0]['n_emb'])
        vectors = [
            np.fromfile(handle, dtype='<f8', count=n_emb)
            for _ in range(int(header[0]['n_vectors']))
        ]
        matrix = np.fromfile(handle, dtype='<f8', count=n_emb * n_emb)
    if matrix.size != n_emb * n_emb or any(v.size != n_emb for v in vectors):
        raise ArtifactError(f"{path}: truncated matrix cache")
    kinds = {code: name for name, code in MATRIX_KINDS.items()}
    meta = {
        'kind': kinds[int(header[0]['kind'])],
        'n_emb': n_emb,
        'q': int(header[0]['q']),
        'epsilon': float(header[0]['epsilon']),
    }
    return meta, vectors, matrix.reshape(n_emb, n_emb)


def is_sparse_cache(path):
    return Path(path).suffix == '.npz'


def save_sparse_cache(path, matrix, *, q, epsilon=0.0, **vectors):
    """CSR matrix plus named vectors in one npz archive."""
    matrix = scipy.sparse.csr_matrix(matrix)
    return save_arrays(
        path,
        data=matrix.data, indices=matrix.indices, indptr=matrix.indptr,
        shape=np.array(matrix.shape), q=np.array(q), epsilon=np.array(epsilon),
        **{f"vector_{name}": value for name, value in vectors.items()},
    )


def load_sparse_cache(path):
    """Return (header dict, dict of vectors, csr matrix) from save_sparse_cache output."""
    arrays = load_arrays(path)
    try:
        matrix = scipy.sparse.csr_matrix(
            (arrays['data'], arrays['indices'], arrays['indptr']),
            shape=tuple(int(n) for n in arrays['shape']),
        )
    except KeyError as exc:
        raise ArtifactError(f"{path}: not a sparse matrix cache ({exc} missing)") from exc
    meta = {
        'kind': 'markov',
        'n_emb': matrix.shape[0],
        'q': int(arrays['q']),
        'epsilon': float(arrays['epsilon']),
    }
    vectors = {
        key.removeprefix('vector_'): value
        for key, value in arrays.items() if key.startswith('vector_')
    }
    return meta, vectors, matrix


def save_arrays(path, **arrays):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)
    return path


def load_arrays(path):
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}")
    with np.load(path, allow_pickle=False) as data:
        return {key: data[key] for key in data.files}
