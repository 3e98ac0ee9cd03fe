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

from dataclasses import dataclass


@dataclass
class LinearFgwError(Exception):
    message: str

    def __str__(self) -> str:
        return self.message


class InputError(LinearFgwError):
    """The data handed to an operation is malformed."""


class UsageError(LinearFgwError):
    """The operation was called with arguments that cannot work together."""


class NumericalError(LinearFgwError):
    """A numerical routine broke down on otherwise valid input."""


@dataclass
class VerificationFailure(LinearFgwError):
    failed_checks: int = 0
