"""Durable append-only event log with snapshot support.

One writer, flush-per-append. The log file holds the canonical event line
serialization; a snapshot file caches a folded state at some cursor so
recovery can skip refolding a long prefix. A snapshot is advisory: when its
checksum or cursor does not line up, recovery falls back to a full replay.
"""

from __future__ import annotations

import hashlib
import logging
import os
from pathlib import Path
from typing import Sequence

from .model import (
    Event,
    GraphState,
    MalformedEvent,
    apply_event,
    event_from_line,
    event_to_line,
    replay,
    state_from_json,
    state_to_json,
)

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = "ASNSNAP1"


class SequenceGapOnAppend(Exception):
    name = "SequenceGap"

    def __init__(self, expected: int, got: int):
        super().__init__(f"append expected seq {expected}, got {got}")
        self.expected = expected
        self.got = got


class CorruptLog(Exception):
    """A non-tail line failed to parse, or the log has a sequence gap."""

    name = "CorruptLog"


class ChecksumMismatch(Exception):
    """Snapshot content does not match its header; fall back to full replay."""

    name = "ChecksumMismatch"


class IoFailure(Exception):
    name = "IoFailure"


class EventLog:
    """Append-only log file; detects and truncates a torn final line on open."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._events: list[Event] = []
        self._fh = None
        self._open()

    def _open(self) -> None:
        if self.path.exists():
            data = self.path.read_bytes()
        else:
            data = b""
        keep = len(data)
        lines = data.split(b"\n")
        tail = lines.pop()  # content after the final newline; b"" when none
        events: list[Event] = []
        for index, raw in enumerate(lines):
            if not raw:
                raise CorruptLog(f"{self.path}: empty line {index + 1}")
            try:
                events.append(event_from_line(raw.decode("utf-8")))
            except (MalformedEvent, UnicodeDecodeError) as exc:
                if index == len(lines) - 1 and not tail:
                    # torn final line (crash mid-write): drop it with a warning
                    keep = sum(len(l) + 1 for l in lines[:-1])
                    logger.warning("%s: truncating torn final line: %s", self.path, exc)
                    break
                raise CorruptLog(f"{self.path}: line {index + 1}: {exc}") from exc
        if tail:
            try:
                events.append(event_from_line(tail.decode("utf-8")))
                # complete event that merely lost its newline; repair below
            except (MalformedEvent, UnicodeDecodeError) as exc:
                keep = len(data) - len(tail)
                logger.warning("%s: truncating torn final line: %s", self.path, exc)
        for expected, event in enumerate(events, start=1):
            if event.seq != expected:
                raise CorruptLog(f"{self.path}: expected seq {expected}, found {event.seq}")
        self._events = events
        if keep != len(data):
            with open(self.path, "r+b") as fh:
                fh.truncate(keep)
        self._fh = open(self.path, "ab")
        if tail and len(events) > 0 and events[-1].seq == len(events) and keep == len(data):
            # last line parsed but had no trailing newline
            self._fh.write(b"\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())

    @property
    def last_seq(self) -> int:
        return self._events[-1].seq if self._events else 0

    @property
    def events(self) -> list[Event]:
        return list(self._events)

    def append(self, event: Event) -> None:
        self.append_batch([event])

    def append_batch(self, events: Sequence[Event]) -> None:
        """Write events as one buffer and flush before returning."""
        if not events:
            return
        expected = self.last_seq + 1
        for offset, event in enumerate(events):
            if event.seq != expected + offset:
                raise SequenceGapOnAppend(expected + offset, event.seq)
        payload = "".join(event_to_line(e) + "\n" for e in events).encode("utf-8")
        try:
            self._fh.write(payload)
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        self._events.extend(events)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "EventLog":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


# ---------------------------------------------------------------------------
# Snapshots


def write_snapshot(path: str | Path, state: GraphState) -> None:
    """Atomically write `state` with a verifiable header."""
    path = Path(path)
    body = state_to_json(state).encode("utf-8")
    checksum = hashlib.sha256(body).hexdigest()
    header = f"{SNAPSHOT_MAGIC} {state.cursor} {checksum}\n".encode("ascii")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header + body + b"\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def read_snapshot(path: str | Path) -> GraphState:
    """Read and verify a snapshot; any mismatch raises ChecksumMismatch."""
    data = Path(path).read_bytes()
    newline = data.find(b"\n")
    if newline < 0:
        raise ChecksumMismatch(f"{path}: missing header")
    fields = data[:newline].decode("ascii", errors="replace").split(" ")
    if len(fields) != 3 or fields[0] != SNAPSHOT_MAGIC:
        raise ChecksumMismatch(f"{path}: bad header")
    try:
        cursor = int(fields[1])
    except ValueError:
        raise ChecksumMismatch(f"{path}: bad cursor") from None
    body = data[newline + 1 :].rstrip(b"\n")
    if hashlib.sha256(body).hexdigest() != fields[2]:
        raise ChecksumMismatch(f"{path}: checksum mismatch")
    state = state_from_json(body.decode("utf-8"))
    if state.cursor != cursor:
        raise ChecksumMismatch(f"{path}: cursor {state.cursor} != header {cursor}")
    return state


def replay_with_snapshot(events: Sequence[Event], snapshot: GraphState | None) -> GraphState:
    """Fold `events`, skipping the prefix a verified snapshot already covers."""
    if snapshot is None:
        return replay(events)
    if snapshot.cursor > len(events):
        raise ChecksumMismatch(
            f"snapshot cursor {snapshot.cursor} beyond log end {len(events)}"
        )
    state = snapshot
    for event in events[snapshot.cursor :]:
        state = apply_event(state, event)
    return state


def open_and_replay(path: str | Path, snapshot_path: str | Path | None = None) -> GraphState:
    """Recover the state from a log file, using a snapshot when it verifies."""
    log = EventLog(path)
    try:
        events = log.events
    finally:
        log.close()
    if snapshot_path is not None and Path(snapshot_path).exists():
        try:
            snapshot = read_snapshot(snapshot_path)
            return replay_with_snapshot(events, snapshot)
        except ChecksumMismatch as exc:
            logger.warning("ignoring snapshot: %s", exc)
    return replay(events)
