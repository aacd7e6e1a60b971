"""
A sealed E2 channel
===================

Seal frames under different suites, compare the sizes with the overhead
model, then try a forged byte and a replayed record.
"""

from e2sec.attack import replay_record, tamper_record
from e2sec.secchan import (PROFILES, AuthenticationError, channel_pair, ciphertext_length,
                           random_key)

key = random_key()
frame = bytes(62)

# Sizes on the wire for a 62-byte frame
for name, profile in PROFILES.items():
    tx, rx = channel_pair(profile, key)
    record = tx.seal(frame)
    assert rx.open(record) == frame
    print(f"{name:18s} ciphertext {ciphertext_length(62, profile):4d} B   record {record.encoded_length:4d} B")

# One flipped ciphertext byte fails the tag
tx, rx = channel_pair(PROFILES["paper-ccm"], key)
record = tx.seal(frame)
forged = tamper_record(record, 40, record.to_bytes()[40] ^ 1)
try:
    rx.open(forged)
except AuthenticationError as exc:
    print("forged record:", exc)

# The genuine record opens once, then counts as a replay
print("first delivery:", replay_record(record, rx)[0])
print("second delivery:", replay_record(record, rx)[0])
