#!/usr/bin/env python3
"""Order-independent digest of a domain state file, computed without the engine.

Each entity is serialized as compact sorted-key JSON, prefixed by
"<collection>/<id>\\n", hashed with SHA-256; the sorted hex digests are
concatenated and hashed again. Non-object collections hash as "<name>\\n<json>".
"""
import hashlib
import json
import sys


def canonical(v):
    return json.dumps(v, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def state_hash(state):
    digests = []
    for name, entities in state.items():
        if not isinstance(entities, dict):
            digests.append(hashlib.sha256(f"{name}\n{canonical(entities)}".encode()).hexdigest())
            continue
        for eid, entity in entities.items():
            digests.append(hashlib.sha256(f"{name}/{eid}\n{canonical(entity)}".encode()).hexdigest())
    return hashlib.sha256("".join(sorted(digests)).encode()).hexdigest()


if __name__ == "__main__":
    for path in sys.argv[1:]:
        with open(path, encoding="utf-8") as f:
            print(state_hash(json.load(f)), path)
