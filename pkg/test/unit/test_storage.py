from pathlib import Path

import pytest
from pydantic import ValidationError

from linear_fgw.services.storage import Storage, content_hash

pytestmark = pytest.mark.anyio


@pytest.fixture
def storage(tmp_path: Path) -> Storage:
    return Storage(storage_path=str(tmp_path / "objects"))


async def test_write_read_roundtrip(storage: Storage, tmp_path: Path):
    object_hash = await storage.write(b"reference")
    assert object_hash == content_hash(b"reference")
    assert await storage.exists(object_hash)
    assert await storage.read(object_hash) == b"reference"
    assert sorted(p.name for p in (tmp_path / "objects").iterdir()) == [object_hash]


async def test_writing_twice_keeps_one_object(storage: Storage, tmp_path: Path):
    first = await storage.write(b"same")
    second = await storage.write(b"same")
    assert first == second
    assert len(list((tmp_path / "objects").iterdir())) == 1


async def test_missing_objects(storage: Storage):
    missing = content_hash(b"never written")
    assert not await storage.exists(missing)
    with pytest.raises(FileNotFoundError):
        await storage.read(missing)


async def test_hashes_are_validated(storage: Storage):
    with pytest.raises(ValidationError):
        await storage.read("../../etc/passwd")
