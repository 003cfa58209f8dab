"""Timestamped detector events: CSV format, coincidence matching, tallies.

File format (UTF-8, ``\\n`` line ends)::

    t_ns,arm,setting_id,channel
    0,1,0,+
    0,2,0,-

Rows are sorted by ``t_ns``, then arm, then channel (``+`` before ``-``).
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Angle, DomainError, Outcome
from .montecarlo import PairSample, RunTally

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

HEADER = "t_ns,arm,setting_id,channel"
DEFAULT_DT_NS = 1000


class EventFormatError(ValueError):
    """Invalid event data; ``line`` is the 1-based file line when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True, order=True)
class EventRecord:
    t_ns: int
    arm: int
    setting_id: int
    channel: Outcome

    def sort_key(self) -> tuple[int, int, int]:
        return (self.t_ns, self.arm, 0 if self.channel is Outcome.PLUS else 1)


@dataclass(frozen=True)
class EventColumns:
    """Column view of a record list; the bulk path for large files."""

    t_ns: np.ndarray
    arm: np.ndarray
    setting_id: np.ndarray
    channel: np.ndarray  # int8, +1 / -1

    def __len__(self) -> int:
        return int(self.t_ns.shape[0])

    @classmethod
    def empty(cls) -> EventColumns:
        return cls(
            np.zeros(0, np.int64), np.zeros(0, np.int8), np.zeros(0, np.int64), np.zeros(0, np.int8)
        )

    @classmethod
    def from_records(cls, records: Iterable[EventRecord]) -> EventColumns:
        recs = list(records)
        return cls(
            np.array([r.t_ns for r in recs], dtype=np.int64),
            np.array([r.arm for r in recs], dtype=np.int8),
            np.array([r.setting_id for r in recs], dtype=np.int64),
            np.array([int(r.channel) for r in recs], dtype=np.int8),
        )

    def records(self) -> list[EventRecord]:
        return [
            EventRecord(t, a, s, Outcome(c))
            for t, a, s, c in zip(
                self.t_ns.tolist(), self.arm.tolist(), self.setting_id.tolist(), self.channel.tolist()
            )
        ]

    def select(self, mask: np.ndarray) -> EventColumns:
        return EventColumns(self.t_ns[mask], self.arm[mask], self.setting_id[mask], self.channel[mask])

    def arm_events(self, arm: int) -> EventColumns:
        return self.select(self.arm == arm)

    def validate(self) -> None:
        """Check field ranges and sort order; errors name the 1-based file line."""
        n = len(self)
        if n == 0:
            return
        bad = np.flatnonzero(
            (self.t_ns < 0)
            | ((self.arm != 1) & (self.arm != 2))
            | (self.setting_id < 0)
            | ((self.channel != 1) & (self.channel != -1))
        )
        if bad.size:
            raise EventFormatError("field out of range", int(bad[0]) + 2)
        # lexicographic (t, arm, channel) with '+' ranked before '-'
        ch_rank = (self.channel < 0).astype(np.int64)
        key_t, key_arm = self.t_ns, self.arm.astype(np.int64)
        dt = np.diff(key_t)
        darm = np.diff(key_arm)
        dch = np.diff(ch_rank)
        out_of_order = (dt < 0) | ((dt == 0) & ((darm < 0) | ((darm == 0) & (dch < 0))))
        bad = np.flatnonzero(out_of_order)
        if bad.size:
            raise EventFormatError("events not sorted by (t_ns, arm, channel)", int(bad[0]) + 3)


def _as_columns(events) -> EventColumns:
    if isinstance(events, EventColumns):
        return events
    return EventColumns.from_records(events)


def format_events(events) -> str:
    cols = _as_columns(events)
    cols.validate()
    lines = [HEADER]
    lines.extend(
        f"{t},{a},{s},{'+' if c > 0 else '-'}"
        for t, a, s, c in zip(
            cols.t_ns.tolist(), cols.arm.tolist(), cols.setting_id.tolist(), cols.channel.tolist()
        )
    )
    return "\n".join(lines) + "\n"


def write_events(events, destination) -> int:
    """Write records (or :class:`EventColumns`) to a path or text stream; return bytes written."""
    data = format_events(events).encode("utf-8")
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as fh:
            fh.write(data)
    elif isinstance(destination, io.TextIOBase):
        destination.write(data.decode("utf-8"))
    else:
        destination.write(data)
    return len(data)


def parse_events(text: str) -> EventColumns:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EventFormatError("missing header", 1)
    if lines[0] != HEADER:
        raise EventFormatError(f"expected header {HEADER!r}", 1)
    n = len(lines) - 1
    t = np.empty(n, np.int64)
    arm = np.empty(n, np.int8)
    sid = np.empty(n, np.int64)
    ch = np.empty(n, np.int8)
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        try:
            if len(parts) != 4:
                raise ValueError("expected 4 comma-separated fields")
            ts, a, s, c = parts
            if not (ts.isdigit() and s.isdigit()):
                raise ValueError("t_ns and setting_id must be unsigned integers")
            if a == "1":
                arm[i] = 1
            elif a == "2":
                arm[i] = 2
            else:
                raise ValueError(f"arm must be 1 or 2, got {a!r}")
            if c == "+":
                ch[i] = 1
            elif c == "-":
                ch[i] = -1
            else:
                raise ValueError(f"channel must be + or -, got {c!r}")
            t[i] = int(ts)
            sid[i] = int(s)
        except (ValueError, OverflowError) as exc:
            raise EventFormatError(f"{exc}: {line!r}", i + 2) from None
    cols = EventColumns(t, arm, sid, ch)
    cols.validate()
    return cols


def read_event_columns(source) -> EventColumns:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EventFormatError(f"not UTF-8: {exc}") from None
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    return parse_events(text)


def read_events(source) -> list[EventRecord]:
    return read_event_columns(source).records()


def merge_columns(parts: Sequence[EventColumns]) -> EventColumns:
    """Concatenate event sets and restore the (t_ns, arm, channel) order."""
    if not parts:
        return EventColumns.empty()
    t = np.concatenate([p.t_ns for p in parts])
    arm = np.concatenate([p.arm for p in parts])
    sid = np.concatenate([p.setting_id for p in parts])
    ch = np.concatenate([p.channel for p in parts])
    order = np.lexsort(((ch < 0).astype(np.int8), arm, t))
    return EventColumns(t[order], arm[order], sid[order], ch[order])


# ---------------------------------------------------------------------------
# Coincidences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoincidenceConfig:
    window_ns: int
    arm1_settings: dict[int, Angle] = field(default_factory=dict)
    arm2_settings: dict[int, Angle] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.window_ns, (int, np.integer)) or self.window_ns <= 0:
            raise DomainError(f"window_ns must be a positive integer, got {self.window_ns!r}")

    def angle(self, arm: int, setting_id: int) -> Angle:
        table = self.arm1_settings if arm == 1 else self.arm2_settings
        try:
            return table[setting_id]
        except KeyError:
            raise EventFormatError(f"unknown setting id {setting_id} on arm {arm}") from None


def _settings_section(doc: dict, arm: str) -> dict[int, Angle]:
    section = doc.get("settings", {}).get(arm, {})
    out: dict[int, Angle] = {}
    for key, deg in section.items():
        try:
            sid = int(key)
        except ValueError:
            raise DomainError(f"setting id must be an integer, got {key!r}") from None
        if sid < 0 or sid in out:
            raise DomainError(f"invalid or duplicate setting id {key!r} on {arm}")
        if isinstance(deg, bool) or not isinstance(deg, (int, float)) or not math.isfinite(deg):
            raise DomainError(f"angle for setting {key!r} on {arm} must be a finite number")
        out[sid] = math.radians(float(deg))
    return out


def config_from_mapping(doc: dict, window_ns: int | None = None) -> CoincidenceConfig:
    w = window_ns if window_ns is not None else doc.get("window_ns", 1)
    return CoincidenceConfig(w, _settings_section(doc, "arm1"), _settings_section(doc, "arm2"))


def load_settings(path, window_ns: int | None = None) -> CoincidenceConfig:
    """Read a settings document (TOML): ``[settings.arm1]`` / ``[settings.arm2]`` tables
    mapping setting id to angle in degrees, plus an optional ``window_ns``."""
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise DomainError(f"{path}: {exc}") from None
    return config_from_mapping(doc, window_ns)


def format_settings(cfg: CoincidenceConfig) -> str:
    lines = [f"window_ns = {int(cfg.window_ns)}", ""]
    for arm, table in (("arm1", cfg.arm1_settings), ("arm2", cfg.arm2_settings)):
        lines.append(f"[settings.{arm}]")
        lines.extend(f"{sid} = {math.degrees(a)!r}" for sid, a in sorted(table.items()))
        lines.append("")
    return "\n".join(lines)


def write_settings(cfg: CoincidenceConfig, path) -> None:
    Path(path).write_text(format_settings(cfg), encoding="utf-8")


@dataclass(frozen=True)
class MatchResult:
    """Index pairs into the arm-1 / arm-2 event sets, plus leftovers."""

    arm1: EventColumns
    arm2: EventColumns
    idx1: np.ndarray
    idx2: np.ndarray

    @property
    def n_matches(self) -> int:
        return int(self.idx1.shape[0])

    @property
    def unmatched_arm1(self) -> int:
        return len(self.arm1) - self.n_matches

    @property
    def unmatched_arm2(self) -> int:
        return len(self.arm2) - self.n_matches

    def pairs(self) -> list[tuple[EventRecord, EventRecord]]:
        r1 = self.arm1.records()
        r2 = self.arm2.records()
        return [(r1[i], r2[j]) for i, j in zip(self.idx1.tolist(), self.idx2.tolist())]


def _check_sorted_times(t: np.ndarray, which: str) -> None:
    bad = np.flatnonzero(np.diff(t) < 0)
    if bad.size:
        raise EventFormatError(f"{which} stream is not sorted by t_ns (at event {int(bad[0]) + 1})")


def match_coincidences(arm1_events, arm2_events, cfg: CoincidenceConfig) -> MatchResult:
    """Greedy nearest-neighbour pairing within ``cfg.window_ns``.

    Arm-1 events are taken in time order; each claims the closest unclaimed
    arm-2 event with ``|t1 - t2| <= window``. Equidistant candidates go to the
    earlier arm-2 event.
    """
    a1 = _as_columns(arm1_events)
    a2 = _as_columns(arm2_events)
    _check_sorted_times(a1.t_ns, "arm-1")
    _check_sorted_times(a2.t_ns, "arm-2")
    w = int(cfg.window_ns)
    t1 = a1.t_ns.tolist()
    t2 = a2.t_ns.tolist()
    n2 = len(t2)
    used = bytearray(n2)
    idx1: list[int] = []
    idx2: list[int] = []
    j = 0
    for i, t in enumerate(t1):
        lo = t - w
        while j < n2 and (used[j] or t2[j] < lo):
            j += 1
        best = -1
        best_d = 0
        k = j
        hi = t + w
        while k < n2:
            tk = t2[k]
            if tk > hi:
                break
            if not used[k]:
                d = tk - t if tk >= t else t - tk
                if best < 0 or d < best_d:
                    best, best_d = k, d
                elif tk >= t:
                    # later candidates only get farther away
                    break
            k += 1
        if best >= 0:
            used[best] = 1
            idx1.append(i)
            idx2.append(best)
    return MatchResult(a1, a2, np.array(idx1, dtype=np.int64), np.array(idx2, dtype=np.int64))


def tally_matches(matches: MatchResult, cfg: CoincidenceConfig) -> dict[tuple[int, int], RunTally]:
    """Four-way counts per (arm-1 setting id, arm-2 setting id), keys sorted."""
    s1 = matches.arm1.setting_id[matches.idx1]
    s2 = matches.arm2.setting_id[matches.idx2]
    for sid in np.unique(s1).tolist():
        if sid not in cfg.arm1_settings:
            raise EventFormatError(f"unknown setting id {sid} on arm 1")
    for sid in np.unique(s2).tolist():
        if sid not in cfg.arm2_settings:
            raise EventFormatError(f"unknown setting id {sid} on arm 2")
    c1 = matches.arm1.channel[matches.idx1]
    c2 = matches.arm2.channel[matches.idx2]
    out: dict[tuple[int, int], RunTally] = {}
    if s1.size == 0:
        return out
    keys = np.stack([s1, s2], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for k, (a, b) in enumerate(uniq.tolist()):
        m = inverse == k
        out[(a, b)] = RunTally.from_outcomes(c1[m], c2[m])
    return out


# ---------------------------------------------------------------------------
# Simulator output as events
# ---------------------------------------------------------------------------


def events_from_samples(
    samples: Sequence[tuple[int, int, PairSample]], dt_ns: int = DEFAULT_DT_NS
) -> EventColumns:
    """Stamp simulated pairs: the k-th pair overall fires both arms at ``k * dt_ns``.

    ``samples`` holds (arm-1 setting id, arm-2 setting id, sample) in emission order.
    """
    if dt_ns <= 0:
        raise DomainError(f"dt_ns must be positive, got {dt_ns}")
    n = sum(len(s.arm1) for _, _, s in samples)
    if n == 0:
        return EventColumns.empty()
    pair_t = np.arange(n, dtype=np.int64) * int(dt_ns)
    sid1 = np.concatenate([np.full(len(s.arm1), a, np.int64) for a, _, s in samples])
    sid2 = np.concatenate([np.full(len(s.arm2), b, np.int64) for _, b, s in samples])
    ch1 = np.concatenate([s.arm1 for _, _, s in samples]).astype(np.int8)
    ch2 = np.concatenate([s.arm2 for _, _, s in samples]).astype(np.int8)
    # interleave: arm 1 then arm 2 at each timestamp keeps the file order
    t = np.repeat(pair_t, 2)
    arm = np.tile(np.array([1, 2], np.int8), n)
    sid = np.empty(2 * n, np.int64)
    sid[0::2], sid[1::2] = sid1, sid2
    ch = np.empty(2 * n, np.int8)
    ch[0::2], ch[1::2] = ch1, ch2
    return EventColumns(t, arm, sid, ch)
