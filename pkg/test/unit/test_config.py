from pathlib import Path

import pytest
from pydantic import ValidationError

from linear_fgw.config import PipelineConfig


def test_defaults():
    config = PipelineConfig.load()
    assert config.alpha is None
    assert config.folds == 10
    assert config.threads == 1


def test_precedence(tmp_path: Path, monkeypatch: pytest.MonkeyPatch):
    config_file = tmp_path / "run.toml"
    config_file.write_text('eta = 0.3\nfolds = 4\nalpha = 0.2\n')
    monkeypatch.setenv("LFGW_FOLDS", "5")
    config = PipelineConfig.load(str(config_file), alpha=0.9, seed=None)
    assert config.alpha == 0.9
    assert config.folds == 5
    assert config.eta == 0.3
    assert config.seed == 0


@pytest.mark.parametrize("override", [{"alpha": 1.5}, {"eta": 0.0}, {"folds": 1}, {"distance": "cosine"}])
def test_ranges_are_enforced(override: dict):
    with pytest.raises(ValidationError):
        PipelineConfig.load(**override)


def test_derived_solver_and_barycenter_configs():
    config = PipelineConfig.load(alpha=0.4, barycenter_nodes=7, seed=3)
    solver = config.solver_config()
    assert solver.alpha == 0.4
    assert config.solver_config(alpha=0.1).alpha == 0.1
    barycenter = config.barycenter_config(num_nodes=12)
    assert barycenter.num_nodes == 7
    assert barycenter.seed == 3
    assert PipelineConfig.load().barycenter_config(num_nodes=12).num_nodes == 12
