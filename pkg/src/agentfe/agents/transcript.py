"""Append-only run transcript (JSON lines) and replay of pool mutations.

Every message, tool call and tool result is logged with a logical
timestamp: the run-wide sequence number plus the loop iteration. No wall
clock is recorded, so scripted runs produce byte-identical transcripts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

from ..dataset import Dataset
from ..dsl import Transformation
from ..pools import FeaturePool, append_features, prune

MUTATING_TOOLS = ("append_new_attribute", "attribute_pruning_tool")


class Transcript:
    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.events: list[dict] = []
        if self.path is not None:
            self.path.write_text("", encoding="utf-8")

    def log(self, iteration: int, role: str, kind: str, **payload: Any) -> dict:
        event = {"seq": len(self.events), "iteration": iteration, "role": role, "kind": kind}
        event.update(payload)
        line = json.dumps(event, sort_keys=True, ensure_ascii=False, allow_nan=False)
        self.events.append(json.loads(line))
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        return event

    def __len__(self) -> int:
        return len(self.events)


def read_transcript(path: str | Path) -> list[dict]:
    events = []
    with Path(path).open(encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"transcript line {n} is not valid JSON: {exc}") from exc
    return events


@dataclass(frozen=True)
class Mutation:
    iteration: int
    action: str  # "append" or "prune"
    payload: dict


def mutations(events: list[dict]) -> Iterator[Mutation]:
    """Pool mutations in the order they were committed."""
    for e in events:
        if e["kind"] == "commit":
            yield Mutation(e["iteration"], e["action"], e["payload"])


def replay(events: list[dict], dataset: Dataset | None = None) -> FeaturePool:
    """Rebuild the Feature Pool by re-applying every committed mutation."""
    pool = FeaturePool()
    for m in mutations(events):
        if m.action == "append":
            ts = [Transformation.from_source(d["name"], d["source_text"], d["justification"],
                                             d["explanation"], m.iteration)
                  for d in m.payload["features"]]
            append_features(pool, ts, m.iteration, dataset)
        elif m.action == "prune":
            prune(pool, m.payload["names"], m.iteration, m.payload["reasons"])
        else:
            raise ValueError(f"unknown mutation {m.action!r}")
    return pool
