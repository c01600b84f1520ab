import numpy as np
import pytest

from gamma_models.gamma_td import GammaModelTable
from gamma_models.manifest import RunManifest, read_manifest, write_manifest
from gamma_models.mdp import uniform_policy
from gamma_models.model_file import (
    GAMMA_MODEL_TAG,
    SUCCESSOR_TAG,
    format_model_file,
    parse_model_file,
    read_model_file,
    write_gamma_model,
    write_successor,
)
from gamma_models.oracle import exact_occupancy, exact_successor


class TestModelFile:
    def test_layout(self):
        """Test the tag, header and row lines"""
        text = format_model_file(np.array([[[0.25, 0.75]], [[1.0, 0.0]]]), 0.5)
        assert text.splitlines() == [GAMMA_MODEL_TAG, '2 1 0.5', '0 0 0.25 0.75', '1 0 1 0']

    def test_gamma_model_is_exact(self, make_problem, tmp_path):
        """Test a written model reads back bit for bit"""
        mdp, policy = make_problem(seed=40)
        model = GammaModelTable.from_probs(exact_occupancy(mdp, policy, 0.7).mu, 0.7)
        loaded = read_model_file(write_gamma_model(tmp_path / 'model.txt', model))
        assert loaded.tag == GAMMA_MODEL_TAG
        np.testing.assert_array_equal(loaded.rows, model.probs)
        assert loaded.to_model().gamma == 0.7

    @pytest.mark.parametrize('source', ['logits', 'occupancy'])
    def test_rewrite_is_idempotent(self, grid, rng, tmp_path, source):
        """Test write, read, write gives the same text, zero entries included"""
        if source == 'logits':
            model = GammaModelTable(rng.normal(size=(25, 4, 25)), 0.8)
        else:
            model = GammaModelTable.from_probs(exact_occupancy(grid, uniform_policy(25, 4), 0.0).mu, 0.0)
            assert np.any(model.probs == 0.0)
        first = write_gamma_model(tmp_path / 'first.txt', model)
        second = write_gamma_model(tmp_path / 'second.txt', read_model_file(first).to_model())
        assert first.read_text() == second.read_text()

    def test_successor(self, chain, chain_policy, tmp_path):
        """Test successor tables keep their 1 / (1 - gamma) scale"""
        successor = exact_successor(chain, chain_policy, 0.5)
        loaded = read_model_file(write_successor(tmp_path / 'successor.txt', successor))
        assert loaded.tag == SUCCESSOR_TAG
        np.testing.assert_allclose(loaded.to_successor().M.sum(axis=-1), 2.0)
        with pytest.raises(ValueError):
            loaded.to_model()

    @pytest.mark.parametrize('text, message', [
        ('', 'unknown format tag'),
        ('gamma-model v2\n1 1 0.5\n0 0 1\n', 'unknown format tag'),
        ('gamma-model v1\n1 1\n0 0 1\n', 'line 2'),
        ('gamma-model v1\n1 1 1.0\n0 0 1\n', 'invalid dimensions or gamma'),
        ('gamma-model v1\n2 1 0.5\n0 0 0 1\n', 'expected 2 rows'),
        ('gamma-model v1\n2 1 0.5\n1 0 0 1\n0 0 1 0\n', 'expected s=0 a=0'),
        ('gamma-model v1\n2 1 0.5\n0 0 0 1\n1 0 x 0\n', 'line 4'),
        ('gamma-model v1\n2 1 0.5\n0 0 0.5 0.4\n1 0 1 0\n', 'row sum 0.9'),
    ])
    def test_malformed(self, text, message):
        """Test malformed files are rejected with a reason"""
        with pytest.raises(ValueError, match=message):
            parse_model_file(text)

    def test_unknown_tag_on_write(self):
        """Test writing with an unknown tag is rejected"""
        with pytest.raises(ValueError):
            format_model_file(np.ones((1, 1, 1)), 0.5, 'table v9')


class TestManifest:
    def test_write_then_read(self, tmp_path):
        """Test a manifest reads back from its file or directory"""
        manifest = RunManifest('oracle', {'env': 'swap_chain', 'gamma': 0.5}, 3, {'values': 'values.csv'}, 0.1)
        path = write_manifest(manifest, tmp_path / 'run')
        assert path.name == 'manifest.json'
        assert read_manifest(path) == manifest
        assert read_manifest(tmp_path / 'run') == manifest
        assert [p.name for p in (tmp_path / 'run').iterdir()] == ['manifest.json']

    def test_malformed(self, tmp_path):
        """Test a manifest without a command is rejected"""
        path = tmp_path / 'manifest.json'
        path.write_text('{"config": {}, "seed": 0}')
        with pytest.raises(ValueError, match='Manifest malformed'):
            read_manifest(path)
