"""Job metadata registry: a desk-scale stand-in for a resource manager.

Jobs are fed from a JSON-lines file or injected over REST; the query engine
exposes the set active at a given instant to job operators.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class JobInfo:
    job_id: str
    user_id: str
    node_list: tuple[str, ...]
    start_ns: int
    end_ns: int | None = None  # None = still running

    def __post_init__(self) -> None:
        if not self.job_id:
            raise ValueError("job_id must be non-empty")
        if not self.node_list:
            raise ValueError("node_list must be non-empty")
        if self.end_ns is not None and not (self.start_ns < self.end_ns):
            raise ValueError(f"job {self.job_id}: start must precede end")

    def active_at(self, now_ns: int) -> bool:
        if now_ns < self.start_ns:
            return False
        return self.end_ns is None or now_ns < self.end_ns

    @classmethod
    def from_dict(cls, d: dict) -> "JobInfo":
        return cls(
            job_id=str(d["job_id"]),
            user_id=str(d.get("user_id", "")),
            node_list=tuple(d["node_list"]),
            start_ns=int(d["start_ns"]),
            end_ns=int(d["end_ns"]) if d.get("end_ns") is not None else None,
        )

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "user_id": self.user_id,
            "node_list": list(self.node_list),
            "start_ns": self.start_ns,
            "end_ns": self.end_ns,
        }


class JobRegistry:
    """Thread-safe set of known jobs, keyed by job_id (last write wins)."""

    def __init__(self) -> None:
        self._jobs: dict[str, JobInfo] = {}
        self._lock = threading.Lock()

    def add(self, job: JobInfo) -> None:
        with self._lock:
            self._jobs[job.job_id] = job

    def load_jsonl(self, path: str | Path) -> int:
        n = 0
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            self.add(JobInfo.from_dict(json.loads(line)))
            n += 1
        return n

    def active(self, now_ns: int) -> list[JobInfo]:
        with self._lock:
            out = [j for j in self._jobs.values() if j.active_at(now_ns)]
        out.sort(key=lambda j: j.job_id)
        return out

    def all(self) -> list[JobInfo]:
        with self._lock:
            return sorted(self._jobs.values(), key=lambda j: j.job_id)
