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

import hashlib
import logging

from anyio import Path
from pydantic import validate_call

from linear_fgw.utils.validation import Hash

logger = logging.getLogger("storage")


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class Storage:
    """
    Storage is a collection of objects. Objects consist of binary data and are identified by the SHA-256 hash of
    their content, so writing the same bytes twice yields the same object.

    This implementation is backed by the filesystem, where each object is stored as a file named by its hash.
    """

    def __init__(self, storage_path: str):
        self.storage_path = Path(storage_path)

    async def write(self, data: bytes) -> str:
        """
        Writes the data to the storage and returns the hash of the object.
        """
        object_hash = content_hash(data)
        target_file = self.storage_path / object_hash
        if await target_file.exists():
            return object_hash
        await self.storage_path.mkdir(parents=True, exist_ok=True)
        # readers never see a partially written object
        partial_file = self.storage_path / f".{object_hash}.partial"
        await partial_file.write_bytes(data)
        await partial_file.rename(target_file)
        logger.debug("Stored object %s (%s bytes)", object_hash, len(data))
        return object_hash

    @validate_call
    async def read(self, object_hash: Hash) -> bytes:
        """
        Reads the object with the given hash and returns it.
        """
        target_file = self.storage_path / object_hash
        if not await target_file.exists():
            raise FileNotFoundError(f"Object not found: {object_hash}")
        return await target_file.read_bytes()

    @validate_call
    async def exists(self, object_hash: Hash) -> bool:
        """
        Check if an object with the given hash exists in the storage.
        """
        return await (self.storage_path / object_hash).exists()
