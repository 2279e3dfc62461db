"""Input sentence records (one JSON object per line)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class SentenceRecord:
    id: str
    source: str
    references: list[str] = field(default_factory=list)
    constraints: list[str] | None = None

    def __post_init__(self) -> None:
        if not self.source.strip():
            raise ValueError(f"record {self.id}: empty source")

    def to_json(self) -> dict:
        out = {"id": self.id, "source": self.source, "references": list(self.references)}
        if self.constraints is not None:
            out["constraints"] = list(self.constraints)
        return out

    @classmethod
    def from_json(cls, obj: dict, line_no: int = 0) -> "SentenceRecord":
        return cls(
            id=str(obj.get("id", line_no)),
            source=obj["source"],
            references=list(obj.get("references", [])),
            constraints=list(obj["constraints"]) if obj.get("constraints") is not None else None,
        )


def load_records(path: str | Path) -> list[SentenceRecord]:
    records = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if line.strip():
            records.append(SentenceRecord.from_json(json.loads(line), n))
    return records


def write_records(records, path: str | Path) -> None:
    lines = [json.dumps(r.to_json(), ensure_ascii=False) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
