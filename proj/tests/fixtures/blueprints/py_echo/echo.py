# Raw-frame client: read init, echo the last user message through user.send, finish.
import json
import os
import socket
import struct


def canonical(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def send(sock, doc):
    body = canonical(doc)
    sock.sendall(struct.pack(">I", len(body)) + body)


def recv(sock):
    def exact(n):
        buf = b""
        while len(buf) < n:
            part = sock.recv(n - len(buf))
            if not part:
                raise SystemExit(65)
            buf += part
        return buf

    (size,) = struct.unpack(">I", exact(4))
    return json.loads(exact(size))


addr = os.environ.get("AGENT_RPC_ADDR")
if not addr:
    raise SystemExit(64)
s = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
s.connect(addr)
init = recv(s)
text = [m["content"] for m in init["payload"]["snapshot"] if m["role"] == "user"][-1]
send(s, {"id": 1, "kind": "request", "op": "user.send", "payload": {"content": "python says: " + text}})
assert recv(s)["ok"]
send(s, {"id": 2, "kind": "finish", "payload": {"status": "ok"}})
s.close()
