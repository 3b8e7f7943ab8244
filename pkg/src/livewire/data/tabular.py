"""CSV ingestion.

Format: UTF-8, comma-separated, a header row, numeric feature columns
followed by a final ``label`` column. Features are standardized per column
with the statistics of the training split; evaluation splits reuse them.
"""

import csv
import logging
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from livewire.data.dataset import Dataset
from livewire.models import LivewireError

logger = logging.getLogger(__name__)


class CsvFormatError(LivewireError):
    """Raised for a CSV file that does not match its schema."""


class CsvSchema(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    features: list[str] = Field(min_length=1)
    label: str = "label"
    classes: list[str] = Field(min_length=1)

    @model_validator(mode="after")
    def _unique_names(self):
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("class names must be unique")
        if len(set(self.features)) != len(self.features) or self.label in self.features:
            raise ValueError("column names must be unique")
        return self

    @property
    def header(self) -> list[str]:
        return [*self.features, self.label]


class FeatureStats(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    mean: list[float]
    std: list[float]

    @classmethod
    def of(cls, features: np.ndarray) -> "FeatureStats":
        std = features.std(axis=0)
        # A constant column is centred but left unscaled.
        std = np.where(std > 0, std, 1.0)
        return cls(mean=features.mean(axis=0).tolist(), std=std.tolist())

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - np.array(self.mean)) / np.array(self.std)


class DataSpec(BaseModel):
    """What evaluation needs to read a CSV the way training did."""

    model_config = ConfigDict(extra="forbid")

    csv_schema: CsvSchema
    stats: FeatureStats


def _read_rows(path: Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            rows = [(reader.line_num, row) for row in reader if row]
    except OSError as exc:
        raise CsvFormatError(f"{path}: cannot be read: {exc}") from exc
    except (csv.Error, UnicodeDecodeError) as exc:
        raise CsvFormatError(f"{path}: not readable as UTF-8 CSV: {exc}") from exc
    if not rows:
        raise CsvFormatError(f"{path}: empty file, expected a header row")
    return [h.strip() for h in rows[0][1]], rows[1:]


def infer_schema(path: Path) -> CsvSchema:
    """Schema from the header plus the sorted set of labels seen in the file."""
    header, rows = _read_rows(path)
    if len(header) < 2:
        raise CsvFormatError(f"{path}: header needs feature columns and a label column")
    labels = sorted({row[-1].strip() for _, row in rows})
    if not labels:
        raise CsvFormatError(f"{path}: no data rows")
    return CsvSchema(features=header[:-1], label=header[-1], classes=labels)


def load_csv(
    path: Path, schema: CsvSchema, stats: FeatureStats | None = None
) -> tuple[Dataset, FeatureStats]:
    """Read ``path`` into a classification dataset with one-hot targets.

    Without ``stats`` the file is treated as the training split and its own
    column statistics are computed and returned.
    """
    header, rows = _read_rows(path)
    if header != schema.header:
        raise CsvFormatError(f"{path}: line 1: header {header} does not match {schema.header}")
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")

    class_index = {name: i for i, name in enumerate(schema.classes)}
    width = len(schema.header)
    features = np.empty((len(rows), len(schema.features)))
    labels = np.empty(len(rows), dtype=np.int64)
    for r, (line, row) in enumerate(rows):
        if len(row) != width:
            raise CsvFormatError(f"{path}: line {line}: expected {width} columns, got {len(row)}")
        for c, cell in enumerate(row[:-1]):
            try:
                value = float(cell)
            except ValueError:
                raise CsvFormatError(
                    f"{path}: line {line} column {c + 1} ({schema.features[c]}): "
                    f"'{cell}' is not a number"
                ) from None
            if not math.isfinite(value):
                raise CsvFormatError(f"{path}: line {line} column {c + 1}: non-finite value")
            features[r, c] = value
        label = row[-1].strip()
        if label not in class_index:
            raise CsvFormatError(f"{path}: line {line}: unknown label '{label}'")
        labels[r] = class_index[label]

    if stats is None:
        stats = FeatureStats.of(features)
    elif len(stats.mean) != features.shape[1]:
        raise CsvFormatError(
            f"{path}: {features.shape[1]} features but statistics for {len(stats.mean)}"
        )
    logger.debug("loaded %d rows from %s", len(rows), path)
    dataset = Dataset.classification(
        stats.apply(features), labels, len(schema.classes), source=str(path)
    )
    return dataset, stats
