"""Tests for configuration loading, validation and hashing."""

import pytest

from schwarz_lab.core.config import Config, ExperimentConfig, load_experiment
from schwarz_lab.core.errors import ConfigError


def _write(tmp_path, text, name='experiment.ini'):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfig:
    def test_defaults(self):
        cfg = load_experiment()
        assert (cfg.n0, cfg.n1, cfg.layers) == (20, 400, 6)
        assert cfg.relaxation == 'steepest-descent'
        assert cfg.tolerance == 1e-6
        assert cfg.fault_kind == 'none'

    def test_file_overrides_defaults(self, tmp_path):
        path = _write(tmp_path, "[grid]\nn0 = 2\nn1 = 8\nlayers = 1\n\n"
                                "[method]\nrelaxation = 0.4\n\n[runtime]\nseed = 7\n")
        cfg = load_experiment(path)
        assert (cfg.n0, cfg.n1, cfg.layers) == (2, 8, 1)
        assert cfg.relaxation_value == 0.4
        assert cfg.seed == 7
        assert cfg.max_steps == 200

    def test_weight_list(self, tmp_path):
        path = _write(tmp_path, "[grid]\nn0 = 2\nn1 = 8\nlayers = 1\nweights = 1, 0.5, 0.5, 0.5, 0.5\n")
        assert load_experiment(path).weights == (1.0, 0.5, 0.5, 0.5, 0.5)

    @pytest.mark.parametrize("text", [
        "[colors]\nred = 1\n",
        "[grid]\nsize = 3\n",
        "[grid]\nn0 = two\n",
        "[method]\nname = multigrid\n",
        "[method]\nrelaxation = fast\n",
        "[faults]\nkind = earthquake\n",
        "[faults]\nkind = replay\n",
        "[grid]\nn0 = 3\nn1 = 8\n",
        "[grid]\nn0 = 2\nn1 = 8\nlayers = 4\n",
        "[faults]\nrate = 1.5\n",
        "[termination]\ntolerance = 0\n",
        "[method]\nname = accelerated\nlambda_upper = 1.0\nlambda_lower = 2.0\n",
    ])
    def test_invalid_entries(self, tmp_path, text):
        with pytest.raises(ConfigError):
            load_experiment(_write(tmp_path, text))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_experiment(str(tmp_path / 'absent.ini'))

    def test_save_and_reload(self, tmp_path):
        path = str(tmp_path / 'saved' / 'experiment.ini')
        config = Config()
        config.config_file = path
        config.set('grid', 'weights', (1.0, 2.0))
        config.set('faults', 'kind', 'local-communication')
        reloaded = Config(path)
        assert reloaded.get('grid', 'weights') == (1.0, 2.0)
        assert reloaded.get('faults', 'kind') == 'local-communication'
        assert reloaded.canonical_text() == config.canonical_text()

    def test_set_validates(self):
        config = Config()
        with pytest.raises(ConfigError):
            config.set('sampler', 'mode', 'psychic')


class TestExperimentConfig:
    def test_hash_is_stable(self):
        assert ExperimentConfig().config_hash() == ExperimentConfig().config_hash()
        assert len(ExperimentConfig().config_hash()) == 16

    def test_hash_ignores_output_location(self):
        base = ExperimentConfig()
        moved = base.with_overrides(output_dir='elsewhere', database='runs.db')
        assert moved.config_hash() == base.config_hash()

    def test_hash_tracks_parameters(self):
        base = ExperimentConfig()
        assert base.with_overrides(seed=1).config_hash() != base.config_hash()
        assert base.with_overrides(layers=5).config_hash() != base.config_hash()

    def test_overrides_skip_none(self):
        cfg = ExperimentConfig(seed=4).with_overrides(seed=None, output_dir=None)
        assert cfg.seed == 4
        assert cfg.output_dir == 'results'

    @pytest.mark.parametrize("overrides", [
        {'method': 'multigrid'},
        {'fault_kind': 'meteor'},
        {'sampler_mode': 'sorted'},
        {'group_policy': 'first'},
        {'relaxation': 'fast'},
        {'max_steps': 'many'},
        {'no_such_field': 1},
    ])
    def test_overrides_are_validated(self, overrides):
        with pytest.raises(ConfigError):
            ExperimentConfig().with_overrides(**overrides)

    def test_overrides_are_parsed_like_file_entries(self):
        cfg = ExperimentConfig().with_overrides(relaxation=0.4, fault_rate=0, max_steps='30')
        assert cfg.relaxation == '0.4'
        assert cfg.relaxation_value == 0.4
        assert cfg.fault_rate == 0.0 and isinstance(cfg.fault_rate, float)
        assert cfg.max_steps == 30

    def test_round_trip_through_config(self):
        cfg = ExperimentConfig(n0=2, n1=8, layers=1, fault_kind='constant-rate', fault_rate=0.2)
        assert cfg.to_config().experiment() == cfg

    def test_grid_key_ignores_method(self):
        a = ExperimentConfig(method='one-step')
        b = ExperimentConfig(method='accelerated')
        assert a.grid_key() == b.grid_key()
        assert a.grid_key() != ExperimentConfig(layers=5).grid_key()
