from __future__ import annotations

from datetime import datetime, timedelta, timezone
from importlib import resources

import pytest

from asncoord.engine import Engine, FixedClock

T0 = datetime(2025, 1, 6, 9, 0, 0, tzinfo=timezone.utc)


def fixed_engine(**kwargs) -> Engine:
    return Engine(clock=FixedClock(T0, timedelta(seconds=1)), **kwargs)


@pytest.fixture
def engine() -> Engine:
    return fixed_engine()


@pytest.fixture
def trio(engine: Engine) -> Engine:
    """Engine with the walkthrough cast registered."""
    for user in ("stan", "alex", "jennifer"):
        engine.register_user(user)
    return engine


def data_text(*parts: str) -> str:
    return resources.files("asncoord").joinpath("data", *parts).read_text(encoding="utf-8")


def corpus_entries() -> list[tuple[str, str]]:
    corpus_dir = resources.files("asncoord").joinpath("data", "templates")
    return sorted(
        (entry.name, entry.read_text(encoding="utf-8"))
        for entry in corpus_dir.iterdir()
        if entry.name.endswith(".tpl")
    )
