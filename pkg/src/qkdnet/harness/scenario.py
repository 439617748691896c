"""Scenario files: timed event scripts replayed by the simulator."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..errors import InvalidArgumentError

EVENT_KINDS = ("attack_on", "attack_off", "link_down", "link_up",
               "session_start", "session_stop", "clear_alarm")


@dataclass(frozen=True)
class ScenarioEvent:
    t_s: float
    kind: str
    params: dict = field(default_factory=dict)
    order: int = 0   # declaration order, tie-break for equal timestamps

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise InvalidArgumentError(f"unknown event kind {self.kind!r}")


@dataclass
class Scenario:
    name: str
    duration_s: float
    tick_s: float
    events: list[ScenarioEvent]
    prefill_bytes: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: (e.t_s, e.order))

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "duration_s": self.duration_s,
            "tick_s": self.tick_s,
            "prefill_bytes": self.prefill_bytes,
            "events": [{"t_s": e.t_s, "kind": e.kind, "params": e.params}
                       for e in self.events],
        }


EMPTY_SCENARIO = Scenario("empty", duration_s=10.0, tick_s=1.0, events=[])


def load_scenario(path: str | Path | None = None, builtin: str | None = None,
                  ) -> Scenario:
    """Load a scenario file, or a bundled one by name."""
    if builtin is not None:
        doc = json.loads((resources.files("qkdnet") / "data" / "scenarios"
                          / f"{builtin}.json").read_text())
    elif path is None:
        return EMPTY_SCENARIO
    else:
        doc = json.loads(Path(path).read_text())
    events = [ScenarioEvent(e["t_s"], e["kind"], e.get("params", {}), order=i)
              for i, e in enumerate(doc.get("events", []))]
    return Scenario(
        name=doc.get("name", "scenario"),
        duration_s=doc.get("duration_s", 60.0),
        tick_s=doc.get("tick_s", 1.0),
        events=events,
        prefill_bytes={k: int(v) for k, v in doc.get("prefill_bytes", {}).items()},
    )
