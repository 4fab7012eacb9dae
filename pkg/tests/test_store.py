"""Append-only log durability, torn-tail recovery, and snapshots."""

from __future__ import annotations

import pytest

from asncoord.fuzz import simulate
from asncoord.model import Event, replay, serialize_log, state_to_json
from asncoord.store import (
    ChecksumMismatch,
    CorruptLog,
    EventLog,
    SequenceGapOnAppend,
    open_and_replay,
    read_snapshot,
    replay_with_snapshot,
    write_snapshot,
)

from conftest import T0


def make_events(n: int) -> list[Event]:
    events = []
    for seq in range(1, n + 1):
        events.append(
            Event(
                seq=seq,
                ts=T0,
                actor="stan",
                kind="TaskCreated",
                task_id=f"t{seq}",
                payload={"title": f"Task {seq}", "parent": None, "depends_on": []},
            )
        )
    return events


class TestAppend:
    def test_first_append_lands_on_disk(self, tmp_path):
        path = tmp_path / "events.log"
        with EventLog(path) as log:
            log.append(make_events(1)[0])
        assert path.read_text().count("\n") == 1

    def test_sequence_gap_rejected(self, tmp_path):
        with EventLog(tmp_path / "events.log") as log:
            log.append(make_events(1)[0])
            third = make_events(3)[2]
            with pytest.raises(SequenceGapOnAppend):
                log.append(third)

    def test_reopen_recovers_everything(self, tmp_path):
        path = tmp_path / "events.log"
        events = make_events(5)
        with EventLog(path) as log:
            for event in events:
                log.append(event)
        with EventLog(path) as log:
            assert log.events == events
            assert log.last_seq == 5

    def test_batch_append(self, tmp_path):
        path = tmp_path / "events.log"
        with EventLog(path) as log:
            log.append_batch(make_events(4))
        with EventLog(path) as log:
            assert log.last_seq == 4


class TestTornTail:
    def test_truncated_final_line_dropped_with_warning(self, tmp_path, caplog):
        """Crash-sim: cut the last line mid-byte; reopen sees N-1 events."""
        path = tmp_path / "events.log"
        events = make_events(6)
        with EventLog(path) as log:
            for event in events:
                log.append(event)
        data = path.read_bytes()
        path.write_bytes(data[:-7])  # chop into the final line
        with caplog.at_level("WARNING"):
            with EventLog(path) as log:
                assert log.last_seq == 5
        assert any("torn" in record.message for record in caplog.records)
        # the file itself was repaired: a fresh open sees a clean 5-event log
        with EventLog(path) as log:
            assert log.last_seq == 5
            log.append(make_events(6)[5])
            assert log.last_seq == 6

    def test_missing_trailing_newline_repaired(self, tmp_path):
        path = tmp_path / "events.log"
        with EventLog(path) as log:
            log.append_batch(make_events(2))
        data = path.read_bytes()
        path.write_bytes(data[:-1])  # complete line, newline lost
        with EventLog(path) as log:
            assert log.last_seq == 2
            log.append(make_events(3)[2])
        with EventLog(path) as log:
            assert log.last_seq == 3

    def test_corrupt_middle_line_raises(self, tmp_path):
        path = tmp_path / "events.log"
        with EventLog(path) as log:
            log.append_batch(make_events(3))
        lines = path.read_bytes().splitlines(keepends=True)
        lines[1] = b'{"nope": true}\n'
        path.write_bytes(b"".join(lines))
        with pytest.raises(CorruptLog):
            EventLog(path)

    def test_sequence_gap_in_file_raises(self, tmp_path):
        path = tmp_path / "events.log"
        events = make_events(3)
        path.write_text(serialize_log([events[0], events[2]]), encoding="utf-8")
        with pytest.raises(CorruptLog):
            EventLog(path)


class TestSnapshots:
    def test_round_trip(self, tmp_path):
        _, engine = simulate(4, 120, seed=5)
        snap = tmp_path / "state.snap"
        write_snapshot(snap, engine.state)
        restored = read_snapshot(snap)
        assert state_to_json(restored) == state_to_json(engine.state)

    def test_header_format(self, tmp_path):
        _, engine = simulate(3, 50, seed=6)
        snap = tmp_path / "state.snap"
        write_snapshot(snap, engine.state)
        header = snap.read_bytes().split(b"\n", 1)[0].decode()
        magic, cursor, checksum = header.split(" ")
        assert magic == "ASNSNAP1"
        assert int(cursor) == engine.state.cursor
        assert len(checksum) == 64

    def test_corrupted_body_detected(self, tmp_path):
        _, engine = simulate(3, 50, seed=6)
        snap = tmp_path / "state.snap"
        write_snapshot(snap, engine.state)
        data = snap.read_bytes()
        snap.write_bytes(data.replace(b'"cursor"', b'"cursed"', 1))
        with pytest.raises(ChecksumMismatch):
            read_snapshot(snap)

    def test_snapshot_assisted_replay_equals_full(self, tmp_path):
        """Oracle: the plain full replay."""
        _, engine = simulate(5, 200, seed=8)
        events = engine.events
        midpoint = replay(events[: len(events) // 2])
        assisted = replay_with_snapshot(events, midpoint)
        assert state_to_json(assisted) == state_to_json(replay(events))

    def test_stale_snapshot_beyond_log_rejected(self, tmp_path):
        _, engine = simulate(3, 80, seed=12)
        events = engine.events
        with pytest.raises(ChecksumMismatch):
            replay_with_snapshot(events[: len(events) // 2], engine.state)

    def test_open_and_replay_falls_back_on_bad_snapshot(self, tmp_path):
        _, engine = simulate(4, 100, seed=13)
        log_path = tmp_path / "events.log"
        log_path.write_text(serialize_log(engine.events), encoding="utf-8")
        snap = tmp_path / "state.snap"
        write_snapshot(snap, engine.state)
        data = snap.read_bytes()
        snap.write_bytes(data[:-20] + b"x" * 20)
        state = open_and_replay(log_path, snap)
        assert state_to_json(state) == state_to_json(engine.state)

    def test_open_and_replay_empty_file(self, tmp_path):
        log_path = tmp_path / "events.log"
        log_path.touch()
        state = open_and_replay(log_path)
        assert state.cursor == 0


class TestEngineDurability:
    def test_restart_recovers_state_and_users_continue(self, tmp_path):
        from asncoord.engine import Engine

        path = tmp_path / "events.log"
        engine = Engine(log=EventLog(path))
        engine.register_user("stan")
        engine.register_user("alex")
        engine.create_task("stan", "Goal")
        engine.offer_handoff("stan", "t1", "alex")
        engine.close()

        revived = Engine(log=EventLog(path))
        revived.register_user("alex")
        assert revived.state.tasks["t1"].pending_handoff.to == "alex"
        revived.respond_handoff("alex", "t1", "accept")
        assert revived.state.tasks["t1"].owner == "alex"
        revived.close()

    def test_snapshot_interval_writes_snapshots(self, tmp_path):
        from asncoord.engine import Engine

        path = tmp_path / "events.log"
        snap = tmp_path / "events.log.snap"
        engine = Engine(log=EventLog(path), snapshot_path=snap, snapshot_interval=3)
        engine.register_user("stan")
        for i in range(7):
            engine.create_task("stan", f"Task {i}")
        engine.close()
        assert snap.exists()
        restored = read_snapshot(snap)
        assert restored.cursor == 6  # last multiple of the interval

        revived = Engine(log=EventLog(path), snapshot_path=snap, snapshot_interval=3)
        assert state_to_json(revived.state) == state_to_json(replay(engine.events))
        revived.close()
