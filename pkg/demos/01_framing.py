"""
Framing E2-lite messages
========================

Encode a few messages, cut the byte stream at awkward places, and let the
streaming decoder put them back together.
"""

import numpy as np

from e2sec.wire import (E2Frame, EchoPayload, FrameDecoder, MsgType, decode_control,
                        decode_indication, encode_control, encode_frame, encode_indication)

# Three message kinds: an echo probe, a KPI indication, a control action
kpis = np.arange(12, dtype=float).reshape(3, 4)
frames = [
    E2Frame(MsgType.ECHO, EchoPayload.sized(1, 123456789, 62).to_bytes()),
    E2Frame(MsgType.INDICATION, encode_indication(7, kpis)),
    E2Frame(MsgType.CONTROL, encode_control((0, 1, 2), (25, 15, 10))),
]
stream = b"".join(encode_frame(f) for f in frames)
print(f"{len(frames)} frames, {len(stream)} bytes:", [len(f) for f in frames])
print("first header:", stream[:10].hex(" "))

# Feed the stream in 7-byte chunks; frames come out whole
decoder = FrameDecoder()
out = [f for i in range(0, len(stream), 7) for f in decoder.feed(stream[i:i + 7])]
assert out == frames and decoder.pending == 0

tick, got = decode_indication(out[1].payload)
print("indication tick", tick, "row eMBB:", got[0])
print("control:", decode_control(out[2].payload))
