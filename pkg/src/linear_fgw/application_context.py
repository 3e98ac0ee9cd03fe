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

import logging
import logging.config
from contextvars import ContextVar
from functools import cached_property
from typing import Any

from linear_fgw.config import Config, PipelineConfig
from linear_fgw.services.pipeline_runner import PipelineRunner
from linear_fgw.services.storage import Storage
from linear_fgw.services.worker_pool import WorkerPool

ZERO_RUN_ID = "00000000-0000-0000-0000-000000000000"


class ApplicationContext:
    def __init__(self, config_file: str | None = None, **overrides: Any) -> None:
        self.config_file = config_file
        self.overrides = overrides
        self.setup_logging()

    def setup_logging(self):
        logging.config.dictConfig(self.config.logging_config)
        run_id_context_var = self.run_id_context_var

        class RunIdFilter(logging.Filter):
            def filter(self, record):
                record.run_id = run_id_context_var.get() or ZERO_RUN_ID
                return True

        for handler in logging.root.handlers:
            handler.addFilter(RunIdFilter())

    @cached_property
    def run_id_context_var(self) -> ContextVar[str | None]:
        return ContextVar("run_id", default=None)

    @cached_property
    def config(self) -> Config:
        return Config()

    @cached_property
    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig.load(self.config_file, **self.overrides)

    @cached_property
    def object_storage(self) -> Storage:
        return Storage(storage_path=self.config.object_storage_path)

    @cached_property
    def worker_pool(self) -> WorkerPool:
        return WorkerPool(threads=self.pipeline_config.threads)

    @cached_property
    def pipeline_runner(self) -> PipelineRunner:
        return PipelineRunner(
            config=self.pipeline_config,
            object_storage=self.object_storage,
            worker_pool=self.worker_pool,
            run_id_context_var=self.run_id_context_var,
        )
