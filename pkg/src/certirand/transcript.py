"""Append-only protocol transcripts and their JSON-lines form.

A transcript holds three things: referee/device messages (including batched
ones), per-round results in columnar form, and free-form events (aborts,
flags, selections). The JSON-lines file starts with a ``header`` record,
continues with one ``round`` record per round and any ``event`` records, and
ends with a ``summary`` record.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

REFEREE = 0


@dataclass(frozen=True)
class Message:
    seq: int
    sender: int
    recipient: int
    kind: str
    round: int
    count: int
    refs: tuple
    payload: object = None

    def as_record(self) -> dict:
        payload = self.payload
        if isinstance(payload, np.ndarray):
            payload = "".join(map(str, payload.tolist()))
        return {"type": "message", "seq": self.seq, "sender": self.sender, "recipient": self.recipient,
                "kind": self.kind, "round": self.round, "count": self.count, "refs": list(self.refs),
                "payload": payload}


class ProtocolTranscript:
    def __init__(self, protocol: str, header: dict | None = None):
        self.protocol = protocol
        self.header = dict(header or {})
        self.messages: list[Message] = []
        self.events: list[dict] = []
        self.summary: dict = {}
        self.dev_a: int | None = None
        self.dev_b: int | None = None
        self._cols = {k: [] for k in ("k", "test", "a", "b", "x", "y", "order")}
        self._cache = None
        self._order = 0
        self._seq = 0

    # -- messages -----------------------------------------------------------
    def log_message(self, sender, recipient, kind, round_, count, refs, payload=None) -> Message:
        msg = Message(self._seq, int(sender), int(recipient), kind, int(round_), int(count), tuple(int(r) for r in refs), payload)
        self._seq += 1
        self.messages.append(msg)
        return msg

    # -- rounds -------------------------------------------------------------
    def add_rounds(self, k0, a, b, x, y, test=None):
        a = np.atleast_1d(np.asarray(a, dtype=np.uint8))
        n = a.size
        ks = np.arange(k0, k0 + n, dtype=np.int64)
        cols = self._cols
        cols["k"].append(ks)
        cols["a"].append(a)
        cols["b"].append(np.atleast_1d(np.asarray(b, dtype=np.uint8)))
        cols["x"].append(np.atleast_1d(np.asarray(x, dtype=np.uint8)))
        cols["y"].append(np.atleast_1d(np.asarray(y, dtype=np.uint8)))
        cols["test"].append(np.zeros(n, dtype=bool) if test is None else np.atleast_1d(np.asarray(test, dtype=bool)))
        cols["order"].append(np.arange(self._order, self._order + n, dtype=np.int64))
        self._order += n
        self._cache = None

    def add_round(self, k, a, b, x, y, test=False):
        self.add_rounds(k, [a], [b], [x], [y], [test])

    @property
    def rounds(self) -> dict:
        if self._cache is None:
            self._cache = {key: (np.concatenate(v) if v else np.zeros(0, dtype=np.uint8 if key in "abxy" else np.int64))
                           for key, v in self._cols.items()}
            for key, v in self._cols.items():
                if len(v) > 1:
                    v[:] = [self._cache[key]]
        return self._cache

    @property
    def num_rounds(self) -> int:
        return int(self._order)

    def wins(self) -> np.ndarray:
        r = self.rounds
        return ((r["x"] ^ r["y"]) == (r["a"] & r["b"]))

    # -- events ---------------------------------------------------------------
    def event(self, kind: str, **data):
        rec = {"kind": kind}
        rec.update(data)
        self.events.append(rec)
        return rec

    def has_event(self, kind: str) -> bool:
        return any(e["kind"] == kind for e in self.events)

    # -- persistence -----------------------------------------------------------
    def write_jsonl(self, path, running="all"):
        """``running`` selects what the per-round running count counts:
        ``all`` = wins over every round, ``test`` = wins over test rounds."""
        r = self.rounds
        win = self.wins()
        if running == "test":
            run = np.cumsum(win & r["test"])
        else:
            run = np.cumsum(win)
        head = {"type": "header", "protocol": self.protocol, "dev_a": self.dev_a, "dev_b": self.dev_b}
        head.update(self.header)
        with open(path, "w") as fh:
            fh.write(json.dumps(head, sort_keys=True, default=_json_default) + "\n")
            ks, ts, a, b, x, y = (r[c].tolist() for c in ("k", "test", "a", "b", "x", "y"))
            run = run.tolist()
            lines = [
                f'{{"type":"round","k":{ks[i]},"test":{"true" if ts[i] else "false"},'
                f'"a":{a[i]},"b":{b[i]},"x":{x[i]},"y":{y[i]},"wins":{run[i]}}}\n'
                for i in range(len(ks))
            ]
            fh.writelines(lines)
            for m in self.messages:
                if m.kind not in _ROUND_KINDS:
                    fh.write(json.dumps(m.as_record(), sort_keys=True, default=_json_default) + "\n")
            for e in self.events:
                fh.write(json.dumps({"type": "event", **e}, sort_keys=True, default=_json_default) + "\n")
            fh.write(json.dumps({"type": "summary", **self.summary}, sort_keys=True, default=_json_default) + "\n")

    @classmethod
    def read_jsonl(cls, path) -> "ProtocolTranscript":
        header = None
        cols = {k: [] for k in ("k", "test", "a", "b", "x", "y")}
        events, summary, messages = [], {}, []
        with open(path) as fh:
            for line in fh:
                rec = json.loads(line)
                typ = rec.pop("type")
                if typ == "header":
                    header = rec
                elif typ == "round":
                    for c in cols:
                        cols[c].append(rec[c])
                elif typ == "event":
                    events.append(rec)
                elif typ == "message":
                    messages.append(rec)
                elif typ == "summary":
                    summary = rec
        if header is None:
            raise ValueError(f"{path}: missing header record")
        tr = cls(header.pop("protocol"), {})
        tr.dev_a = header.pop("dev_a")
        tr.dev_b = header.pop("dev_b")
        tr.header = header
        if cols["k"]:
            tr._cols = {k: [np.asarray(cols[k], dtype=np.int64 if k == "k" else (bool if k == "test" else np.uint8))] for k in cols}
            tr._cols["order"] = [np.arange(len(cols["k"]), dtype=np.int64)]
            tr._order = len(cols["k"])
        for m in messages:
            payload = m["payload"]
            tr.log_message(m["sender"], m["recipient"], m["kind"], m["round"], m["count"], m["refs"], payload)
        tr.events = events
        tr.summary = summary
        return tr


# Messages that are fully implied by the round columns and not written out
# individually: referee -> device inputs and device -> referee outputs.
_ROUND_KINDS = {"input", "output", "inputs", "outputs"}


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=_json_default, indent=1)
