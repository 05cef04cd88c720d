#!/usr/bin/env python3
"""Writes tests/fixtures/frames/golden.json with a codec independent of the C++ one.

Body: UTF-8 JSON, keys sorted, no whitespace. Header: 4-byte big-endian body length.
"""
import json
import pathlib
import struct

FRAMES = [
    ("finish_ok", {"id": 1, "kind": "finish", "payload": {"status": "ok"}}),
    ("event_empty", {"id": 0, "kind": "event", "op": "log", "payload": {}}),
    ("init", {"id": 0, "kind": "init", "payload": {"agent_id": "a", "exec_id": "E1", "snapshot": [{"content": "hi", "role": "user"}], "toggles": {"consolidated_tools": True, "dc_enabled": True}}}),
    ("request_llm", {"id": 2, "kind": "request", "op": "llm.invoke", "payload": {"max_tokens": 256, "messages": [{"content": "Zürich → 東京", "role": "user"}], "model": "mock", "temperature": 0.5, "tools": []}}),
    ("request_tool", {"id": 3, "kind": "request", "op": "tool.call", "payload": {"args": {"order_id": "#W1001", "qty": 2}, "name": "get_order_details"}}),
    ("result_ok", {"id": 3, "kind": "result", "ok": True, "payload": {"ok": True, "value": {"nested": [1, 2, {"z": None, "a": False}]}}}),
    ("result_error", {"error": {"class": "transient", "message": "rate limited", "retryable": True}, "id": 4, "kind": "result", "ok": False, "payload": {}}),
    ("request_wait", {"id": 5, "kind": "request", "op": "user.wait", "payload": {}}),
    ("escapes", {"id": 6, "kind": "request", "op": "user.send", "payload": {"content": "line1\nline2\t\"quoted\" \\ back"}}),
]


def encode(doc):
    body = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return struct.pack(">I", len(body)) + body


def main():
    out = []
    for name, doc in FRAMES:
        raw = encode(doc)
        out.append({"name": name, "frame": doc, "hex": raw.hex(), "body_bytes": len(raw) - 4})
    path = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "frames" / "golden.json"
    path.write_text(json.dumps(out, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {len(out)} frames to {path}")


if __name__ == "__main__":
    main()
