"""JSON-Lines files, content hashes, atomic stage outputs and the dataset lock."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import uuid
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List

from .errors import DatasetLockedError

logger = logging.getLogger(__name__)

LOCK_NAME = ".confcurate.lock"


def dumps(row: Dict[str, Any]) -> str:
    return json.dumps(row, ensure_ascii=False)


def write_jsonl(path: Path, rows: Iterable[Dict[str, Any]]) -> int:
    """Write ``rows`` as UTF-8 JSON-Lines, returning the number of rows."""

    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for row in rows:
            handle.write(dumps(row))
            handle.write("\n")
            count += 1
    return count


def append_jsonl(path: Path, row: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8", newline="\n") as handle:
        handle.write(dumps(row))
        handle.write("\n")


def read_jsonl(path: Path) -> List[Dict[str, Any]]:
    if not path.exists():
        return []
    rows = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class StagedOutput:
    """Collects a stage's files in a temp directory and moves them into place on commit.

    Files written through :meth:`path` only replace the live dataset files when the
    ``with`` block exits cleanly, so an interrupted stage leaves prior outputs intact.
    """

    def __init__(self, dataset_dir: Path, stage: str):
        self.dataset_dir = dataset_dir
        self.stage = stage
        self.temp_dir = dataset_dir / f".tmp-{stage}-{uuid.uuid4().hex[:8]}"
        self._written: List[str] = []

    def __enter__(self) -> "StagedOutput":
        self.temp_dir.mkdir(parents=True, exist_ok=False)
        return self

    def path(self, relative: str) -> Path:
        target = self.temp_dir / relative
        target.parent.mkdir(parents=True, exist_ok=True)
        if relative not in self._written:
            self._written.append(relative)
        return target

    @property
    def written(self) -> List[str]:
        return list(self._written)

    def __exit__(self, exc_type, exc, tb) -> None:
        try:
            if exc_type is None:
                for relative in self._written:
                    target = self.dataset_dir / relative
                    target.parent.mkdir(parents=True, exist_ok=True)
                    os.replace(self.temp_dir / relative, target)
                logger.debug("Committed %d files for stage %s", len(self._written), self.stage)
            else:
                logger.warning("Stage %s failed; prior outputs left untouched", self.stage)
        finally:
            shutil.rmtree(self.temp_dir, ignore_errors=True)


def _lock_holder_alive(lock_path: Path) -> bool:
    """Whether the PID recorded in ``lock_path`` still names a running process."""

    try:
        pid = int(lock_path.read_text(encoding="ascii").strip())
    except (OSError, ValueError):
        # Empty or unreadable: the holder may still be writing its PID.
        return True
    if os.name == "nt":
        return True
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


@contextmanager
def dataset_lock(dataset_dir: Path) -> Iterator[Path]:
    """Hold the single-instance lock for ``dataset_dir``.

    The lock file records the holder's PID. A lock left behind by a process that
    no longer exists is removed with a warning; otherwise delete the file by hand
    once no pipeline is running.
    """

    dataset_dir.mkdir(parents=True, exist_ok=True)
    lock_path = dataset_dir / LOCK_NAME
    for attempt in range(2):
        try:
            fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            break
        except FileExistsError as exc:
            if attempt == 0 and not _lock_holder_alive(lock_path):
                logger.warning("Removing stale lock %s left by a finished process", lock_path)
                lock_path.unlink(missing_ok=True)
                continue
            raise DatasetLockedError(
                f"Dataset {dataset_dir} is locked by another pipeline ({lock_path}); "
                "remove the file if no pipeline is running"
            ) from exc
    try:
        os.write(fd, str(os.getpid()).encode("ascii"))
        os.close(fd)
        yield lock_path
    finally:
        lock_path.unlink(missing_ok=True)
