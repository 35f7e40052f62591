"""Totally ordered event logs produced by simulation runs.

A trace serializes to line-delimited JSON with sorted keys: one meta line,
one line per event, one snapshot line per validator, and a closing line.
Replaying a scenario with the same seed reproduces the file byte for byte,
which is itself one of the checked guarantees.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class Trace:
    meta: dict
    events: list[dict] = field(default_factory=list)
    snapshots: dict[str, dict] = field(default_factory=dict)
    quiesced: bool = True
    ticks: int = 0
    sent: int = 0
    dropped: int = 0

    def to_lines(self) -> list[str]:
        def enc(record):
            return json.dumps(record, sort_keys=True, separators=(",", ":"))

        lines = [enc({"kind": "meta", **self.meta})]
        lines.extend(enc(e) for e in self.events)
        for actor in sorted(self.snapshots):
            lines.append(enc({"kind": "snapshot", "actor": actor,
                              "state": self.snapshots[actor]}))
        lines.append(enc({"kind": "end", "quiesced": self.quiesced,
                          "ticks": self.ticks, "sent": self.sent,
                          "dropped": self.dropped}))
        return lines

    def serialize(self) -> str:
        return "\n".join(self.to_lines()) + "\n"

    def write(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.serialize())

    @staticmethod
    def parse(text: str) -> "Trace":
        lines = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not lines or lines[0].get("kind") != "meta":
            raise ValueError("trace must start with a meta record")
        meta = {k: v for k, v in lines[0].items() if k != "kind"}
        trace = Trace(meta=meta)
        for record in lines[1:]:
            kind = record.get("kind")
            if kind == "snapshot":
                trace.snapshots[record["actor"]] = record["state"]
            elif kind == "end":
                trace.quiesced = record["quiesced"]
                trace.ticks = record["ticks"]
                trace.sent = record.get("sent", 0)
                trace.dropped = record.get("dropped", 0)
            else:
                trace.events.append(record)
        return trace

    @staticmethod
    def load(path: str) -> "Trace":
        with open(path) as fh:
            return Trace.parse(fh.read())

    def select(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["kind"] == kind]


class TraceRecorder:
    def __init__(self):
        self.events: list[dict] = []

    def emit(self, tick: int, actor: str, kind: str, **fields) -> None:
        record = {"tick": tick, "actor": actor, "kind": kind}
        record.update(fields)
        self.events.append(record)
