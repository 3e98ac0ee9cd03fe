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

import argparse
import logging
import sys
import types
from typing import Literal, Sequence, Union, get_args, get_origin

import anyio
from pydantic import ValidationError

from linear_fgw.application_context import ApplicationContext
from linear_fgw.config import PipelineConfig
from linear_fgw.errors import InputError, NumericalError, UsageError, VerificationFailure
from linear_fgw.services.pipeline_runner import COMMANDS

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

HELP = {
    "barycenter": "fit the FGW barycenter reference of a dataset",
    "embed": "embed every graph against the reference (CSV + JSON sidecar)",
    "gram": "Gaussian kernel matrix from linearFGW or FGW distances",
    "classify": "nested cross-validation of the kernel SVM",
    "cluster": "k-means on embeddings and spectral clustering on the kernel",
    "bench": "time the pairwise FGW matrix against the linearFGW pipeline",
    "verify": "randomized checks of the linearization bounds",
    "generate": "write a synthetic dataset as JSON and TU-Dortmund files",
}


def _strip_optional(annotation):
    if get_origin(annotation) in (Union, types.UnionType):
        (annotation,) = [arg for arg in get_args(annotation) if arg is not type(None)]
    return annotation


def _add_field(parser: argparse.ArgumentParser, name: str, annotation, description: str | None) -> None:
    flag = "--" + name.replace("_", "-")
    annotation = _strip_optional(annotation)
    # every default is None so unset flags fall through to the environment and the TOML file
    if annotation is bool:
        parser.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None, help=description)
    elif get_origin(annotation) is list:
        (item,) = get_args(annotation)
        parser.add_argument(flag, dest=name, type=item, nargs="+", default=None, help=description)
    elif get_origin(annotation) is Literal:
        parser.add_argument(flag, dest=name, choices=get_args(annotation), default=None, help=description)
    else:
        parser.add_argument(flag, dest=name, type=annotation, default=None, help=description)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_file", default=None, help="TOML file with configuration values")
    for name, field in PipelineConfig.model_fields.items():
        _add_field(common, name, field.annotation, field.description)

    parser = argparse.ArgumentParser(prog="linear-fgw", description="linearFGW graph embeddings and kernels")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common], help=HELP[command])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        arguments = vars(build_parser().parse_args(argv))
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    command = arguments.pop("command")
    config_file = arguments.pop("config_file")

    try:
        ctx = ApplicationContext(config_file, **arguments)
        anyio.run(ctx.pipeline_runner.run, command)
    except VerificationFailure as e:
        logger.error("Verification failed: %s", e)
        return EXIT_VERIFICATION_FAILED
    except (InputError, UsageError, FileNotFoundError) as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except ValidationError as e:
        logger.error("Invalid configuration: %s", e)
        return EXIT_USAGE
    except NumericalError as e:
        logger.error("Numerical failure: %s", e)
        return EXIT_NUMERICAL
    return EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
