# Copyright 2024 linear-fgw developers
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)


class Config(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="LFGW_", env_ignore_empty=True, extra="ignore")

    # logging config: https://docs.python.org/3/library/logging.config.html#logging-config-dictschema
    logging_config: dict = {
        "version": 1,
        "disable_existing_loggers": False,
        "handlers": {
            "console": {
                "class": "logging.StreamHandler",
                "formatter": "standard",
            },
        },
        "formatters": {
            "standard": {
                "format": "[%(levelname)s] [%(run_id)s] %(name)s: %(message)s",
            },
        },
        "root": {
            "level": "WARNING",
            "handlers": ["console"],
            "propagate": True,
        },
        "loggers": {
            "pipeline_runner": {"level": "INFO"},
            "barycenter": {"level": "INFO"},
            "graph_core": {"level": "INFO"},
            "ot_solvers": {"level": "WARNING"},
            "linear_fgw": {"level": "INFO"},
            "kernel_ml": {"level": "INFO"},
            "lemma_checks": {"level": "INFO"},
            "cli": {"level": "INFO"},
        },
    }

    # directory for content-addressed objects (reference barycenters)
    object_storage_path: str = "./.tmp/objects"


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    # trade-off between feature (1 - alpha) and structure (alpha) costs
    alpha: float = Field(default=0.5, ge=0.0, le=1.0)

    # proximal / entropic weight of the KL term
    eta: float = Field(default=0.1, gt=0.0)

    # proximal point outer iterations T
    outer_iters: int = Field(default=5, ge=1)

    # Sinkhorn-Knopp scaling sweeps per outer iteration
    inner_sinkhorn_iters: int = Field(default=50, ge=1)

    # L1 marginal residual at which the inner loop stops early
    sinkhorn_tol: float = Field(default=1e-9, gt=0.0)

    # marginal feasibility tolerance reported on returned plans
    marginal_tol: float = Field(default=1e-7, gt=0.0)


class BarycenterConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    num_nodes: int = Field(ge=1)
    outer_iters: int = Field(default=10, ge=1)
    tol: float = Field(default=1e-5, gt=0.0)
    init: Literal["random-sample-graph", "feature-kmeans"] = "feature-kmeans"
    seed: int = 0


class PipelineConfig(BaseSettings):
    """
    Every knob of a CLI run. Values come from CLI flags, then `LFGW_*` environment variables,
    then an optional TOML file, then the defaults below.
    """

    model_config = SettingsConfigDict(env_prefix="LFGW_", env_ignore_empty=True, extra="ignore")

    # where TU-Dortmund dataset directories live
    dataset_root: str = "./data"

    # TU-Dortmund dataset name, a directory under dataset_root
    dataset_name: str | None = None

    # serialized dataset JSON, used instead of dataset_root/dataset_name when set
    dataset_json: str | None = None

    # structure matrix used for every graph
    structure: Literal["adjacency", "shortest-path"] = "adjacency"

    # WL feature propagation depth H (0 keeps RAW features); `cluster` uses 1 unless set
    wl_depth: int = Field(default=0, ge=0)

    # alpha must be given explicitly for commands that solve FGW problems
    alpha: float | None = Field(default=None, ge=0.0, le=1.0)
    eta: float = Field(default=0.1, gt=0.0)
    outer_iters: int = Field(default=5, ge=1)
    inner_sinkhorn_iters: int = Field(default=50, ge=1)
    sinkhorn_tol: float = Field(default=1e-9, gt=0.0)

    # reference size K, median node count of the dataset when unset
    barycenter_nodes: int | None = Field(default=None, ge=1)
    barycenter_iters: int = Field(default=10, ge=1)
    barycenter_tol: float = Field(default=1e-5, gt=0.0)
    barycenter_init: Literal["random-sample-graph", "feature-kmeans"] = "feature-kmeans"

    # reference JSON file or stored reference id, computed from the dataset when unset
    reference_path: str | None = None

    # Gaussian kernel width for gram / cluster
    gamma: float = Field(default=0.01, gt=0.0)
    gamma_grid: list[float] = [1e-2, 1e-1, 1.0, 1e1, 1e2]
    c_grid: list[float] = [2.0**p for p in range(-5, 11)]
    alpha_grid: list[float] = [0.0, 0.3, 0.5, 0.7, 0.9, 1.0]
    wl_grid: list[int] = [0, 1, 2]

    # distance the kernel is built from
    distance: Literal["linear", "fgw"] = "linear"

    folds: int = Field(default=10, ge=2)
    repeats: int = Field(default=10, ge=1)
    inner_folds: int = Field(default=3, ge=2)

    # number of clusters, number of classes when unset
    clusters: int | None = Field(default=None, ge=1)

    # randomized verification suite
    trials: int = Field(default=100, ge=1)
    max_nodes: int = Field(default=4, ge=1)
    tol: float = Field(default=1e-6, ge=0.0)

    # synthetic Erdős–Rényi generator, used when `synthetic` is set
    synthetic: bool = False
    num_graphs: int = Field(default=100, ge=1)
    synthetic_nodes: int = Field(default=30, ge=1)
    synthetic_edge_probs: list[float] = [0.5, 0.1]
    synthetic_feature_means: list[float] = [0.0, 0.0]
    synthetic_feature_dim: int = Field(default=1, ge=1)

    seed: int = 0
    threads: int = Field(default=1, ge=1)
    output_dir: str = "./out"

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings, env_settings, TomlConfigSettingsSource(settings_cls))

    @classmethod
    def load(cls, config_file: str | None = None, **overrides: Any) -> "PipelineConfig":
        """
        Build a config from an optional TOML file, the environment and explicit overrides (highest priority).
        """
        settings_cls = cls
        if config_file is not None:
            settings_cls = type(
                cls.__name__,
                (cls,),
                {"model_config": SettingsConfigDict(**{**cls.model_config, "toml_file": config_file})},
            )
        return settings_cls(**{key: value for key, value in overrides.items() if value is not None})

    def solver_config(self, alpha: float | None = None) -> SolverConfig:
        return SolverConfig(
            alpha=self.alpha if alpha is None else alpha,
            eta=self.eta,
            outer_iters=self.outer_iters,
            inner_sinkhorn_iters=self.inner_sinkhorn_iters,
            sinkhorn_tol=self.sinkhorn_tol,
        )

    def barycenter_config(self, num_nodes: int) -> BarycenterConfig:
        return BarycenterConfig(
            num_nodes=self.barycenter_nodes or num_nodes,
            outer_iters=self.barycenter_iters,
            tol=self.barycenter_tol,
            init=self.barycenter_init,
            seed=self.seed,
        )
