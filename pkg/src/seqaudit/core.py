"""Shared domain types: hypotheses, decisions, thresholds, trial records.

Log-likelihood ratios are carried in nats throughout; information-theoretic
quantities are converted to bits only inside the estimators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, Optional, Union

import numpy as np

STEPS = "steps"
SECONDS = "seconds"


class ValidationError(ValueError):
    """A domain value violates its invariants."""


class SchemaError(ValueError):
    """A records file does not conform to the trial-record CSV schema."""


class EmptyCellError(ValueError):
    """A statistical operation requires samples in a cell that is empty."""


class Hypothesis(IntEnum):
    H1 = 1
    H2 = 2


class Decision(IntEnum):
    D1 = 1
    D2 = 2


@dataclass(frozen=True)
class Thresholds:
    """Exit boundaries for the cumulative log-likelihood ratio, in nats.

    The walk stops as soon as it leaves the open interval (l2, l1);
    crossing l1 decides 1, crossing l2 decides 2.
    """

    l1: float
    l2: float

    def __post_init__(self) -> None:
        if not (self.l1 > 0.0 and math.isfinite(self.l1)):
            raise ValidationError(f"l1 must be a positive finite real, got {self.l1}")
        if not (self.l2 < 0.0 and math.isfinite(self.l2)):
            raise ValidationError(f"l2 must be a negative finite real, got {self.l2}")


@dataclass(frozen=True)
class ErrorSpec:
    """Maximum allowed error probabilities of the two error types.

    alpha1 bounds P(decide 1 | hypothesis 2); alpha2 bounds
    P(decide 2 | hypothesis 1).  Both must lie in (0, 0.5).
    """

    alpha1: float
    alpha2: float

    def __post_init__(self) -> None:
        for name in ("alpha1", "alpha2"):
            a = getattr(self, name)
            if not (0.0 < a < 0.5):
                raise ValidationError(f"{name} must lie in (0, 0.5), got {a}")


def thresholds_from_alphas(spec: ErrorSpec) -> Thresholds:
    """Boundary pair guaranteeing the reliabilities of ``spec``.

    l1 = ln((1-alpha2)/alpha1) and l2 = ln(alpha2/(1-alpha1)); decreasing
    alpha1 raises l1 and decreasing alpha2 lowers l2.
    """
    return Thresholds(
        l1=math.log((1.0 - spec.alpha2) / spec.alpha1),
        l2=math.log(spec.alpha2 / (1.0 - spec.alpha1)),
    )


@dataclass(frozen=True)
class TrialRecord:
    """One black-box outcome: true hypothesis, decision, decision time.

    ``time`` counts observation steps for discrete devices and seconds for
    continuous ones.  ``terminal_llr`` is an optional diagnostic: the value
    of the device's cumulative log-likelihood ratio when it stopped.
    """

    hypothesis: Hypothesis
    decision: Decision
    time: float
    terminal_llr: Optional[float] = None

    def __post_init__(self) -> None:
        if self.time < 0:
            raise ValidationError(f"decision time must be nonnegative, got {self.time}")


class RecordBatch:
    """Columnar container for trial records.

    Equivalent to a sequence of :class:`TrialRecord` but cheap at 10^6+
    records.  ``time_kind`` tags the time representation (``"steps"`` or
    ``"seconds"``); statistical modules dispatch on it.
    """

    __slots__ = ("hypothesis", "decision", "time", "terminal_llr", "time_kind")

    def __init__(
        self,
        hypothesis: np.ndarray,
        decision: np.ndarray,
        time: np.ndarray,
        terminal_llr: Optional[np.ndarray] = None,
        time_kind: str = SECONDS,
    ) -> None:
        n = len(hypothesis)
        if not (len(decision) == n and len(time) == n):
            raise ValidationError("record columns must have equal length")
        if time_kind not in (STEPS, SECONDS):
            raise ValidationError(f"unknown time kind {time_kind!r}")
        self.hypothesis = np.asarray(hypothesis, dtype=np.int8)
        self.decision = np.asarray(decision, dtype=np.int8)
        self.time = np.asarray(time, dtype=np.float64)
        if terminal_llr is None:
            terminal_llr = np.full(n, np.nan)
        self.terminal_llr = np.asarray(terminal_llr, dtype=np.float64)
        self.time_kind = time_kind
        bad = ~np.isin(self.hypothesis, (1, 2)) | ~np.isin(self.decision, (1, 2))
        if bad.any():
            raise ValidationError("hypothesis/decision values must be 1 or 2")
        if (self.time < 0).any():
            raise ValidationError("decision times must be nonnegative")

    @classmethod
    def from_records(
        cls, records: Iterable[TrialRecord], time_kind: str = SECONDS
    ) -> "RecordBatch":
        rows = list(records)
        return cls(
            hypothesis=np.array([int(r.hypothesis) for r in rows], dtype=np.int8),
            decision=np.array([int(r.decision) for r in rows], dtype=np.int8),
            time=np.array([r.time for r in rows], dtype=np.float64),
            terminal_llr=np.array(
                [np.nan if r.terminal_llr is None else r.terminal_llr for r in rows]
            ),
            time_kind=time_kind,
        )

    def __len__(self) -> int:
        return len(self.hypothesis)

    def __iter__(self) -> Iterator[TrialRecord]:
        for h, d, t, s in zip(self.hypothesis, self.decision, self.time, self.terminal_llr):
            yield TrialRecord(
                Hypothesis(int(h)),
                Decision(int(d)),
                float(t),
                None if np.isnan(s) else float(s),
            )

    def cell_times(self, h: int, d: int) -> np.ndarray:
        """Decision times of the records with hypothesis ``h`` and decision ``d``."""
        mask = (self.hypothesis == h) & (self.decision == d)
        return self.time[mask]


Records = Union[RecordBatch, Iterable[TrialRecord]]


def as_batch(records: Records, time_kind: str = SECONDS) -> RecordBatch:
    """Coerce any record sequence to a :class:`RecordBatch`."""
    if isinstance(records, RecordBatch):
        return records
    return RecordBatch.from_records(records, time_kind=time_kind)


@dataclass
class SampleSets:
    """The four decision-time multisets keyed by (hypothesis, decision)."""

    a11: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    a22: np.ndarray

    def get(self, h: int, d: int) -> np.ndarray:
        return getattr(self, f"a{h}{d}")

    def total(self) -> int:
        return len(self.a11) + len(self.a12) + len(self.a21) + len(self.a22)


def partition_records(records: Records) -> SampleSets:
    """Split decision times into the four (hypothesis, decision) subsets."""
    batch = as_batch(records)
    return SampleSets(
        a11=batch.cell_times(1, 1),
        a12=batch.cell_times(1, 2),
        a21=batch.cell_times(2, 1),
        a22=batch.cell_times(2, 2),
    )


CSV_HEADER = "hypothesis,decision,time,terminal_llr"


def _format_time(t: float, time_kind: str) -> str:
    if time_kind == STEPS:
        return str(int(t))
    return repr(float(t))


def write_records_csv(path, batch: RecordBatch) -> None:
    """Write records in the interchange CSV schema.

    Header ``hypothesis,decision,time,terminal_llr``; hypothesis and
    decision serialize as 1 or 2, a missing terminal LLR as an empty field.
    Output bytes depend only on the batch contents.
    """
    with open(path, "w", newline="\n") as f:
        f.write(CSV_HEADER + "\n")
        fmt = _format_time
        kind = batch.time_kind
        lines = []
        for h, d, t, s in zip(
            batch.hypothesis, batch.decision, batch.time, batch.terminal_llr
        ):
            tail = "" if np.isnan(s) else repr(float(s))
            lines.append(f"{h},{d},{fmt(t, kind)},{tail}\n")
        f.writelines(lines)


def read_records_csv(path, time_kind: Optional[str] = None) -> RecordBatch:
    """Read the interchange CSV.

    When ``time_kind`` is not given it is inferred: a file whose times are
    all integral is treated as step-valued.
    """
    hs, ds, ts, ss = [], [], [], []
    with open(path, "r") as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise SchemaError(f"expected header {CSV_HEADER!r}, got {header!r}")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise SchemaError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            try:
                h = int(parts[0])
                d = int(parts[1])
                t = float(parts[2])
                s = np.nan if parts[3] == "" else float(parts[3])
            except ValueError as exc:
                raise SchemaError(f"line {lineno}: {exc}") from exc
            if h not in (1, 2) or d not in (1, 2):
                raise SchemaError(f"line {lineno}: hypothesis/decision must be 1 or 2")
            if t < 0:
                raise SchemaError(f"line {lineno}: negative time")
            hs.append(h)
            ds.append(d)
            ts.append(t)
            ss.append(s)
    time = np.array(ts, dtype=np.float64)
    if time_kind is None:
        integral = time.size == 0 or bool(np.all(time == np.floor(time)))
        time_kind = STEPS if integral else SECONDS
    return RecordBatch(
        hypothesis=np.array(hs, dtype=np.int8),
        decision=np.array(ds, dtype=np.int8),
        time=time,
        terminal_llr=np.array(ss, dtype=np.float64),
        time_kind=time_kind,
    )
