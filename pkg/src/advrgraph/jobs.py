"""Thread-backed job manager with per-cache-key deduplication.

Long computations run asynchronously; clients poll job state. At most one
job is active per cache key, repeat submissions return the existing job,
and terminal states never change.
"""
from __future__ import annotations

import threading
import traceback
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable


@dataclass
class JobStatus:
    job_id: str
    state: str = "queued"           # queued | running | done | failed
    progress: float = 0.0
    result_key: str | None = None
    error: str | None = None

    def to_doc(self) -> dict:
        doc = {"jobId": self.job_id, "state": self.state, "progress": self.progress}
        if self.state == "done":
            doc["resultKey"] = self.result_key
        if self.state == "failed":
            doc["error"] = self.error
        return doc


class JobQueueFull(Exception):
    pass


class JobManager:
    def __init__(self, workers: int = 2, capacity: int = 16):
        self._executor = ThreadPoolExecutor(max_workers=workers)
        self._lock = threading.Lock()
        self._jobs: dict[str, JobStatus] = {}
        self._by_key: dict[str, str] = {}
        self.capacity = capacity

    def get(self, job_id: str) -> JobStatus | None:
        with self._lock:
            return self._jobs.get(job_id)

    def submit(self, cache_key: str, work: Callable[[Callable[[float], None]], str]) -> JobStatus:
        """Run ``work(progress_cb) -> result_key`` once per cache key."""
        with self._lock:
            existing_id = self._by_key.get(cache_key)
            if existing_id is not None:
                existing = self._jobs[existing_id]
                if existing.state in ("queued", "running", "done"):
                    return existing
            active = sum(1 for j in self._jobs.values() if j.state in ("queued", "running"))
            if active >= self.capacity:
                raise JobQueueFull(f"{active} jobs already active")
            status = JobStatus(job_id=uuid.uuid4().hex[:16])
            self._jobs[status.job_id] = status
            self._by_key[cache_key] = status.job_id

        def progress(frac: float) -> None:
            with self._lock:
                if status.state == "running":
                    status.progress = min(max(frac, status.progress), 1.0)

        def runner() -> None:
            with self._lock:
                if status.state != "queued":
                    return
                status.state = "running"
            try:
                result_key = work(progress)
            except Exception as exc:
                with self._lock:
                    status.state = "failed"
                    status.error = f"{type(exc).__name__}: {exc}"
                    status.progress = 1.0
                traceback.print_exc()
                return
            with self._lock:
                status.state = "done"
                status.result_key = result_key
                status.progress = 1.0

        self._executor.submit(runner)
        return status
