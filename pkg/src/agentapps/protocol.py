"""Length-prefixed framing for the wire protocol.

Frame = 4-byte big-endian payload length + UTF-8 JSON body (the canonical
document format). See docs/protocol.md for the message catalogue.
"""

from __future__ import annotations

import json
import socket
import struct
from typing import Any, Optional

MAX_FRAME = 16 * 1024 * 1024

MESSAGE_TYPES = (
    "OPEN", "UTTER", "DISPATCH", "GET", "SUBSCRIBE",
    "SHARE_EXPORT", "SHARE_IMPORT", "REFRESH", "UPDATE",
)


def send_frame(sock: socket.socket, doc: Any) -> None:
    payload = json.dumps(doc, ensure_ascii=False, sort_keys=True,
                         separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME:
        raise ValueError("frame too large")
    sock.sendall(struct.pack("!I", len(payload)) + payload)


def recv_frame(sock: socket.socket) -> Optional[Any]:
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack("!I", header)
    if length == 0 or length > MAX_FRAME:
        raise ValueError(f"bad frame length {length}")
    body = _recv_exact(sock, length)
    if body is None:
        return None
    return json.loads(body.decode("utf-8"))


def _recv_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf.extend(chunk)
    return bytes(buf)
