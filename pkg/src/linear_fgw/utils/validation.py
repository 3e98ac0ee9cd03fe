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

from typing import Annotated

try:
    from typing import TypeAliasType
except ImportError:  # Python < 3.12
    from typing_extensions import TypeAliasType

from pydantic import ConfigDict, Field

Hash = TypeAliasType("Hash", Annotated[str, Field(pattern=r"^[0-9a-f]{64}$")])
Alpha = TypeAliasType("Alpha", Annotated[float, Field(ge=0.0, le=1.0)])
PositiveFloat = TypeAliasType("PositiveFloat", Annotated[float, Field(gt=0.0)])
PositiveInt = TypeAliasType("PositiveInt", Annotated[int, Field(ge=1)])
NonNegativeInt = TypeAliasType("NonNegativeInt", Annotated[int, Field(ge=0)])
DatasetName = TypeAliasType(
    "DatasetName", Annotated[str, Field(pattern=r"^[0-9A-Za-z_.-]{1,255}$")]
)

# numpy arrays pass through validate_call untouched
ARRAYS_ALLOWED = ConfigDict(arbitrary_types_allowed=True)
