"""Line-delimited metrics stream: one JSON record per logging interval."""

import json
from pathlib import Path

from pydantic import BaseModel, ConfigDict


class MiSnapshot(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: str
    b: str
    mi_bits: float
    coincidence_ratio: float
    n_obs: int


class MetricsRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    step: int
    epoch: int
    loss: float
    accuracy: float | None = None
    edge_count: int
    density: float
    density_by_distance: dict[int, float]
    edges_grown: int = 0
    edges_pruned: int = 0
    rewire_rounds: int = 0
    mean_edge_age: float = 0.0
    mean_abs_update: float = 0.0
    queue_size: int = 0
    queue_strength_max: float = 0.0
    queue_strength_mean: float = 0.0
    mi: list[MiSnapshot] | None = None


class MetricsWriter:
    """Appends records to a ``.jsonl`` file, flushing after every line."""

    def __init__(self, path: Path, append: bool = False) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.path = path
        self._handle = path.open("a" if append else "w", encoding="utf-8")

    def write(self, record: MetricsRecord) -> None:
        self._handle.write(record.model_dump_json() + "\n")
        self._handle.flush()

    def close(self) -> None:
        self._handle.close()


def read_metrics(path: Path) -> list[MetricsRecord]:
    lines = path.read_text(encoding="utf-8").splitlines()
    return [MetricsRecord.model_validate(json.loads(line)) for line in lines if line.strip()]
