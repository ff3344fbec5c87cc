"""Transaction records -> flows -> single-feature series -> symbols."""

from __future__ import annotations

import csv
import enum
import io
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTrainingError, RecordError, SchemaError, TooShortError

log = logging.getLogger(__name__)

COLUMNS = ("time", "time-taken", "cs-bytes", "sc-bytes", "mime-type", "cat", "hid", "cid")
SECONDS_PER_DAY = 86400
# a backwards jump larger than this is read as a midnight crossing
_WRAP_GAP = SECONDS_PER_DAY // 2


class Label(str, enum.Enum):
    GOOD = "good"
    HOSTILE = "hostile"


class FeatureKind(str, enum.Enum):
    TD = "td"
    TT = "tt"
    CSB = "csb"
    SCB = "scb"

    @classmethod
    def parse(cls, value) -> "FeatureKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class NetworkEvent:
    t: int
    tt: float
    csb: int
    scb: int
    client_id: int
    host_id: int
    label: Label
    mime_type: str = ""


@dataclass
class Flow:
    client_id: int
    host_id: int
    label: Label
    events: list = field(default_factory=list)
    # event times with midnight crossings unwrapped; aligned with ``events``
    times: list = field(default_factory=list)

    @property
    def flow_id(self) -> str:
        return f"{self.client_id}_{self.host_id}"

    @property
    def key(self) -> str:
        return f"{self.flow_id}:{self.label.value}"

    def __len__(self):
        return len(self.events)


def parse_time(text: str) -> int:
    """``HH:MM:SS`` -> seconds of day."""
    parts = text.strip().split(":")
    if len(parts) != 3:
        raise ValueError(f"bad time {text!r}")
    h, m, s = (int(p) for p in parts)
    if not (0 <= h < 24 and 0 <= m < 60 and 0 <= s < 61):
        raise ValueError(f"time out of range {text!r}")
    return h * 3600 + m * 60 + s


def format_time(seconds: int) -> str:
    seconds = int(seconds) % SECONDS_PER_DAY
    return f"{seconds // 3600:02d}:{seconds % 3600 // 60:02d}:{seconds % 60:02d}"


def _nonneg_int(text: str, name: str) -> int:
    value = int(text.strip())
    if value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value}")
    return value


def _parse_row(row: dict) -> NetworkEvent:
    tt = float(row["time-taken"])
    if not np.isfinite(tt) or tt < 0:
        raise ValueError(f"time-taken must be nonnegative, got {row['time-taken']!r}")
    cat = row["cat"].strip().lower()
    try:
        label = Label(cat)
    except ValueError:
        raise ValueError(f"cat must be good or hostile, got {row['cat']!r}") from None
    return NetworkEvent(
        t=parse_time(row["time"]),
        tt=tt,
        csb=_nonneg_int(row["cs-bytes"], "cs-bytes"),
        scb=_nonneg_int(row["sc-bytes"], "sc-bytes"),
        client_id=int(row["cid"]),
        host_id=int(row["hid"]),
        label=label,
        mime_type=row["mime-type"],
    )


@dataclass
class ParseResult:
    events: list
    skipped: int = 0
    errors: list = field(default_factory=list)


def parse_records(stream, strict: bool = True) -> ParseResult:
    """Parse transaction CSV (header required, any column order).

    ``stream`` is a text file object or a string holding the whole file.
    Strict mode raises :class:`RecordError` on the first bad row; lenient
    mode skips bad rows and records them in ``ParseResult.errors``.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.DictReader(stream)
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    reader.fieldnames = header
    result = ParseResult(events=[])
    for i, row in enumerate(reader, start=1):
        try:
            if any(row.get(c) is None for c in COLUMNS):
                raise ValueError("too few fields")
            result.events.append(_parse_row(row))
        except ValueError as exc:
            err = RecordError(i, str(exc))
            if strict:
                raise err from None
            result.skipped += 1
            result.errors.append(err)
    if result.skipped:
        log.warning("skipped %d malformed row(s)", result.skipped)
    return result


def read_records(path, strict: bool = True) -> ParseResult:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_records(fh, strict=strict)


def write_records(events, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(COLUMNS)
    for e in events:
        tt = int(e.tt) if float(e.tt).is_integer() else e.tt
        writer.writerow([format_time(e.t), tt, e.csb, e.scb, e.mime_type, e.label.value, e.host_id, e.client_id])


def build_flows(events) -> list:
    """Group events by (client, host, label), time-sorted, in first-seen order.

    Times that jump backwards by more than half a day are taken to have
    crossed midnight and are shifted forward by a day before sorting.
    The sort is stable, so equal times keep input order.
    """
    groups: OrderedDict = OrderedDict()
    for e in events:
        key = (e.client_id, e.host_id, e.label)
        if key not in groups:
            groups[key] = ([], [], [0, None])  # events, times, [offset, last]
        evs, times, state = groups[key]
        t = e.t + state[0]
        if state[1] is not None and t < state[1] - _WRAP_GAP:
            state[0] += SECONDS_PER_DAY
            t += SECONDS_PER_DAY
        state[1] = t
        evs.append(e)
        times.append(t)
    flows = []
    for (cid, hid, label), (evs, times, _) in groups.items():
        order = sorted(range(len(evs)), key=times.__getitem__)
        flows.append(
            Flow(cid, hid, label, events=[evs[i] for i in order], times=[times[i] for i in order])
        )
    return flows


def extract_feature(flow: Flow, kind) -> np.ndarray:
    kind = FeatureKind.parse(kind)
    if not flow.events:
        raise TooShortError(f"flow {flow.flow_id} is empty")
    if kind is FeatureKind.TD:
        if len(flow.events) < 2:
            raise TooShortError(f"flow {flow.flow_id}: time differences need at least 2 events")
        times = flow.times or [e.t for e in flow.events]
        return np.diff(np.asarray(times, dtype=np.float64))
    attr = {FeatureKind.TT: "tt", FeatureKind.CSB: "csb", FeatureKind.SCB: "scb"}[kind]
    return np.array([getattr(e, attr) for e in flow.events], dtype=np.float64)


@dataclass(frozen=True)
class Quantizer:
    """Nearest-centroid map from real values to ``{0, ..., levels-1}``.

    A degenerate quantizer (constant training data) holds one centroid and
    maps everything to symbol 0.
    """

    centroids: tuple
    method: str = "uniform"
    levels: int = 0

    def __post_init__(self):
        c = tuple(float(x) for x in self.centroids)
        object.__setattr__(self, "centroids", c)
        if not c:
            raise ValueError("quantizer needs at least one centroid")
        if len(c) > 1 and any(b <= a for a, b in zip(c, c[1:])):
            raise ValueError("centroids must be strictly ascending")
        if not self.levels:
            object.__setattr__(self, "levels", len(c))
        if self.levels < 2:
            raise ValueError("quantizer needs at least 2 levels")

    @property
    def degenerate(self) -> bool:
        return len(self.centroids) == 1

    @property
    def boundaries(self) -> np.ndarray:
        c = np.asarray(self.centroids)
        return (c[:-1] + c[1:]) / 2.0

    def __call__(self, values) -> np.ndarray:
        return quantize(values, self)

    def to_document(self) -> dict:
        return {"centroids": list(self.centroids), "quantizer": {"method": self.method, "levels": self.levels}}

    @classmethod
    def from_document(cls, doc) -> "Quantizer":
        meta = doc.get("quantizer") or {}
        centroids = doc["centroids"]
        levels = int(meta.get("levels") or (2 if len(centroids) == 1 else len(centroids)))
        return cls(tuple(centroids), method=meta.get("method", "uniform"), levels=levels)


def fit_uniform_quantizer(training_values, k: int) -> Quantizer:
    """Equal-width bins over ``[min, max]`` of the training values; each
    centroid is its bin's midpoint."""
    if k < 2:
        raise ValueError(f"need at least 2 quantization levels, got {k}")
    values = np.asarray(training_values, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyTrainingError("cannot fit a quantizer on no values")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return Quantizer((lo,), levels=k)
    width = (hi - lo) / k
    centroids = lo + width * (np.arange(k) + 0.5)
    return Quantizer(tuple(centroids), levels=k)


def quantize(values, q: Quantizer) -> np.ndarray:
    """Nearest centroid; exact midpoints go to the lower index; values
    outside the centroid range clamp to the end symbols."""
    values = np.asarray(values, dtype=np.float64)
    if q.degenerate:
        return np.zeros(values.shape, dtype=np.int64)
    return np.searchsorted(q.boundaries, values, side="left").astype(np.int64)


def flows_to_series(flows, kind) -> tuple:
    """Feature series for every flow long enough to yield one; returns
    ``(kept_flows, series, dropped_count)``."""
    kept, series = [], []
    for f in flows:
        try:
            values = extract_feature(f, kind)
        except TooShortError:
            continue
        kept.append(f)
        series.append(values)
    return kept, series, len(flows) - len(kept)
