"""Tests for the output writers and run manifests."""

import csv
import json

import numpy as np
import pytest

from stefan_lab.core.errors import ConfigurationError
from stefan_lab.core.grid import ScalarField
from stefan_lab.output.writers import (
    CSVWriter, JSONWriter, OutputWriterFactory, PGMWriter, RunDirectory, load_manifest, run_id,
    verify_manifest,
)


def test_json_writer_handles_numpy(tmp_path):
    payload = {'value': np.float64(0.5), 'cells': np.arange(3), 'tags': {'a'}}
    written = JSONWriter().write(payload, str(tmp_path / 'report'))
    assert written == [str(tmp_path / 'report.json')]
    data = json.loads((tmp_path / 'report.json').read_text())
    assert data == {'cells': [0, 1, 2], 'tags': ['a'], 'value': 0.5}


def test_json_writer_rejects_unknown_objects(tmp_path):
    with pytest.raises(RuntimeError):
        JSONWriter().write({'bad': object()}, str(tmp_path / 'bad.json'))


def test_csv_cell_set_lists_cells(tmp_path, box_domain):
    geometry, U = box_domain
    path = CSVWriter().write(U, str(tmp_path / 'u.csv'))[0]
    with open(path, newline='') as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['i', 'j', 'x', 'y']
    assert len(rows) == 1 + 256
    assert rows[1][:2] == ['8', '8']
    assert float(rows[1][2]) == pytest.approx(geometry.centers()[0][8, 8])


def test_csv_field_and_rows(tmp_path, interval_domain):
    geometry, U = interval_domain
    field = ScalarField(np.where(U.mask, 0.25, 0.0), geometry, name='mu')
    path = CSVWriter().write(field, str(tmp_path / 'mu'))[0]
    with open(path, newline='') as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['i', 'x', 'mu']
    assert len(rows) == 1 + geometry.shape[0]

    table = CSVWriter().write([{'t': 0.5, 'n': 3}, {'t': 1.0}], str(tmp_path / 'table.csv'))[0]
    with open(table, newline='') as f:
        rows = list(csv.reader(f))
    assert rows == [['n', 't'], ['3', '0.5'], ['', '1']]


def test_csv_rejects_unknown_payload(tmp_path):
    with pytest.raises(RuntimeError):
        CSVWriter().write('text', str(tmp_path / 'x.csv'))


def test_pgm_mask_orientation(tmp_path, box_domain):
    geometry, U = box_domain
    path = PGMWriter().write(U, str(tmp_path / 'mask'))[0]
    data = open(path, 'rb').read()
    header = b'P5\n32 32\n255\n'
    assert data.startswith(header)
    image = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(32, 32)
    assert image.sum() == 255 * 256
    # top image row is the largest y index
    assert image[0].max() == 0
    assert image[31 - 23, 8] == 255


def test_pgm_sequence_and_infinite_values(tmp_path):
    frames = [np.array([[0.0, 1.0], [np.inf, 0.5]]), np.zeros((2, 2))]
    written = PGMWriter().write(frames, str(tmp_path / 'frames.pgm'))
    assert [p.rsplit('/', 1)[-1] for p in written] == ['frames_0000.pgm', 'frames_0001.pgm']


def test_factory_formats():
    factory = OutputWriterFactory()
    assert factory.get_supported_formats() == ['json', 'csv', 'pgm']
    assert isinstance(factory.create_writer('CSV'), CSVWriter)
    with pytest.raises(ValueError):
        factory.create_writer('png')


def test_run_id_depends_on_config():
    assert run_id('radial', {'n': 64}) == run_id('radial', {'n': 64})
    assert run_id('radial', {'n': 64}) != run_id('radial', {'n': 128})
    assert run_id('radial', {'n': 64}).startswith('radial-')
    assert len(run_id('radial', {'n': 64})) == len('radial-') + 8


def test_run_directory_manifest(tmp_path, box_domain):
    geometry, U = box_domain
    run = RunDirectory(tmp_path, 'demo', {'n': 16})
    run.write('json', 'report.json', {'ok': True})
    run.write('pgm', 'u.pgm', U)
    manifest = run.finalize(seed=3, grid={'n': 16})

    assert sorted(manifest.outputs) == ['report.json', 'u.pgm']
    loaded = load_manifest(run.path)
    assert loaded.seed == 3
    assert loaded.outputs == manifest.outputs
    assert verify_manifest(run.path) == {'report.json': True, 'u.pgm': True}

    (run.path / 'u.pgm').write_bytes(b'tampered')
    assert verify_manifest(run.path / 'manifest.json')['u.pgm'] is False


def test_load_manifest_missing(tmp_path):
    with pytest.raises(RuntimeError):
        load_manifest(tmp_path)


def test_run_directory_skips_disabled_formats(tmp_path, box_domain):
    _, U = box_domain
    run = RunDirectory(tmp_path, 'demo', {'n': 16}, formats=['csv'])
    assert run.write('pgm', 'u.pgm', U) == []
    run.write('csv', 'u.csv', U)
    run.write('json', 'report.json', {'ok': True})
    manifest = run.finalize()
    assert sorted(manifest.outputs) == ['report.json', 'u.csv']
    assert run.skipped == ['u.pgm']
    assert not (run.path / 'u.pgm').exists()


def test_run_directory_rejects_unknown_formats(tmp_path):
    with pytest.raises(ConfigurationError):
        RunDirectory(tmp_path, 'demo', {'n': 16}, formats=['json', 'png'])
    assert not any(tmp_path.iterdir())
