"""Labeled result tables and their CSV form."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def fmt(value) -> str:
    """17-significant-digit float text; ints and strings pass through."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


@dataclass
class DistributionTable:
    """Named columns of equal length, e.g. (x, density) or (m, P_c, P_d)."""

    columns: Sequence[str]
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = list(self.columns)
        missing = [c for c in self.columns if c not in self.data]
        if missing:
            raise ValueError(f"missing columns {missing}")
        lengths = {len(self.data[c]) for c in self.columns}
        if len(lengths) > 1:
            raise ValueError(f"ragged columns: lengths {sorted(lengths)}")

    @classmethod
    def from_columns(cls, **cols) -> "DistributionTable":
        return cls(list(cols), {k: np.asarray(v) if not isinstance(v, list) else v
                                for k, v in cols.items()})

    def __len__(self) -> int:
        return len(self.data[self.columns[0]]) if self.columns else 0

    def __getitem__(self, name):
        return self.data[name]

    def rows(self):
        for i in range(len(self)):
            yield tuple(self.data[c][i] for c in self.columns)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows():
            buf.write(",".join(fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv_text())


def stream_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for work item ``index`` of a named stream.

    Philox is keyed by the seed; the item index and stream id sit in the high
    counter words, so streams never overlap and any schedule reproduces them.
    """
    counter = (int(stream) << 192) | (int(index) << 128)
    return np.random.Generator(np.random.Philox(key=int(seed), counter=counter))
