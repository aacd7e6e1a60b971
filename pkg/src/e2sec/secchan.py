"""ESP-style sealed records with anti-replay, plus the parametric overhead model.

Record layout on the wire (big-endian)::

    u32 total_length | u32 spi | u64 seq | nonce (12 B) | ciphertext | tag (T B)

``total_length`` counts the whole record including itself. The NULL profile
carries no nonce and no tag: the body is the plaintext itself.

For authenticated profiles the ciphertext is the encryption of::

    encap (H - 12 B of zeros) | plaintext | pad | pad_len | next_header | 0 * (P - 2)

``encap`` stands in for the encapsulation headers (outer IP, ESP header, IV)
that the overhead model's ``header_bytes`` accounts for; the 12-byte nonce is
the rest of ``H``. With that layout a sealed record is exactly
``ciphertext_length(len(plaintext)) + RECORD_PREFIX`` bytes.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import os
import struct
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESCCM, AESGCM, ChaCha20Poly1305

NONCE_BYTES = 12
RECORD_PREFIX = 16
MAX_SEQ = (1 << 64) - 1
REPLAY_WINDOW = 64
NEXT_HEADER_E2 = 0xE2

_PREFIX = struct.Struct("!IIQ")


class SecChanError(Exception):
    pass


class AuthenticationError(SecChanError):
    """Record failed integrity checks (tag, length, SPI or padding)."""


class ReplayError(SecChanError):
    """Sequence number already seen or older than the replay window."""


class ChannelExpiredError(SecChanError):
    """Sender sequence space exhausted; the channel must be re-keyed."""


class CalibrationError(SecChanError):
    def __init__(self, message: str, residuals: Sequence[int] = ()):
        super().__init__(f"{message}; residuals={list(residuals)}")
        self.residuals = list(residuals)


class Suite(str, enum.Enum):
    NULL = "NULL"
    AES128_CBC_HMAC = "AES128-CBC-HMAC"
    AES256_CBC_HMAC = "AES256-CBC-HMAC"
    AES128_CCM = "AES128-CCM"
    AES256_CCM = "AES256-CCM"
    AES256_GCM = "AES256-GCM"
    CHACHA20_POLY1305 = "CHACHA20-POLY1305"

    @property
    def key_bytes(self) -> int:
        return 16 if self.value.startswith("AES128") else 32

    @property
    def mode(self) -> str:
        """Cipher family with the key size stripped, e.g. ``"CCM"``."""
        if self is Suite.CHACHA20_POLY1305:
            return "CHACHA20-POLY1305"
        return self.value.split("-", 1)[1] if self is not Suite.NULL else "NULL"


@dataclass(frozen=True)
class SecurityProfile:
    """Cipher suite plus the sizes used by the overhead model.

    ``ciphertext_length(n) = H + ceil((n + P) / B) * B + T`` with
    H = ``header_bytes``, P = ``trailer_bytes``, B = ``pad_block``,
    T = ``tag_bytes``.
    """

    name: str
    suite: Suite
    header_bytes: int
    trailer_bytes: int
    pad_block: int
    tag_bytes: int

    def __post_init__(self):
        if min(self.header_bytes, self.trailer_bytes, self.tag_bytes) < 0 or self.pad_block < 1:
            raise ValueError(f"profile {self.name}: sizes must be non-negative and pad_block >= 1")
        if self.suite is Suite.NULL:
            if (self.header_bytes, self.trailer_bytes, self.pad_block, self.tag_bytes) != (0, 0, 1, 0):
                raise ValueError("NULL profile must have H=P=T=0 and B=1")
            return
        if self.header_bytes < NONCE_BYTES:
            raise ValueError(f"profile {self.name}: header_bytes must cover the {NONCE_BYTES}-byte nonce")
        if self.trailer_bytes < 2:
            raise ValueError(f"profile {self.name}: trailer needs pad_len and next_header bytes")
        if self.pad_block > 256:
            raise ValueError(f"profile {self.name}: pad_block above 256 cannot be encoded")
        if "CBC" in self.suite.value:
            if self.pad_block % 16 or (self.header_bytes - NONCE_BYTES) % 16:
                raise ValueError(f"profile {self.name}: CBC needs 16-byte aligned padding and encap")
            if not 1 <= self.tag_bytes <= 32:
                raise ValueError(f"profile {self.name}: HMAC-SHA256 tag must be 1..32 bytes")
        elif "CCM" in self.suite.value:
            if self.tag_bytes not in (4, 6, 8, 10, 12, 14, 16):
                raise ValueError(f"profile {self.name}: CCM tag length {self.tag_bytes} unsupported")
        elif self.tag_bytes != 16:
            raise ValueError(f"profile {self.name}: {self.suite.value} has a fixed 16-byte tag")

    @property
    def is_null(self) -> bool:
        return self.suite is Suite.NULL

    @property
    def params(self) -> Tuple[int, int, int, int]:
        return (self.header_bytes, self.trailer_bytes, self.pad_block, self.tag_bytes)


def ciphertext_length(pt_len: int, profile: SecurityProfile) -> int:
    if pt_len < 0:
        raise ValueError("pt_len must be non-negative")
    h, p, b, t = profile.params
    return h + -(-(pt_len + p) // b) * b + t


def overhead(pt_len: int, profile: SecurityProfile) -> int:
    return ciphertext_length(pt_len, profile) - pt_len


def record_length(pt_len: int, profile: SecurityProfile) -> int:
    """Bytes a sealed record of ``pt_len`` plaintext occupies on the wire."""
    return ciphertext_length(pt_len, profile) + RECORD_PREFIX


def _aead_profile(suite: Suite) -> SecurityProfile:
    return SecurityProfile(suite.value, suite, header_bytes=39, trailer_bytes=2, pad_block=1, tag_bytes=16)


def _cbc_profile(suite: Suite) -> SecurityProfile:
    return SecurityProfile(suite.value, suite, header_bytes=44, trailer_bytes=2, pad_block=16, tag_bytes=16)


NULL_PROFILE = SecurityProfile("NULL", Suite.NULL, 0, 0, 1, 0)

# H=58/P=2/B=16/T=16 reproduces 62 -> 138 bytes with AES-block padding; see
# tests/test_secchan.py::test_paper_ccm_header_is_the_unique_fit.
PAPER_CCM = SecurityProfile("paper-ccm", Suite.AES256_CCM, 58, 2, 16, 16)

PROFILES: Dict[str, SecurityProfile] = {
    p.name: p
    for p in (
        NULL_PROFILE,
        _cbc_profile(Suite.AES128_CBC_HMAC),
        _cbc_profile(Suite.AES256_CBC_HMAC),
        _aead_profile(Suite.AES128_CCM),
        _aead_profile(Suite.AES256_CCM),
        _aead_profile(Suite.AES256_GCM),
        _aead_profile(Suite.CHACHA20_POLY1305),
        PAPER_CCM,
    )
}


def get_profile(name: str) -> SecurityProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown security profile {name!r}; known: {sorted(PROFILES)}") from None


def profile_from_dict(d: dict) -> SecurityProfile:
    return SecurityProfile(
        name=d["name"],
        suite=Suite(d["suite"]),
        header_bytes=int(d["header_bytes"]),
        trailer_bytes=int(d["trailer_bytes"]),
        pad_block=int(d["pad_block"]),
        tag_bytes=int(d["tag_bytes"]),
    )


def calibrate_profile(observations: Iterable[Tuple[int, int]], tag_bytes: int = 16,
                      max_block: int = 64) -> Tuple[int, int, int, int]:
    """Fit (H, P, B, T) to observed (plaintext, ciphertext) length pairs.

    Length observations only pin down ``H + T`` and ``P mod B``; the split is
    fixed by taking ``T = tag_bytes`` and ``0 <= P < B``. Among exact fits the
    smallest block, then the smallest trailer, wins. Identity observations
    return the NULL parameters.
    """
    obs = np.array(list(observations), dtype=np.int64).reshape(-1, 2)
    if len(obs) < 4:
        raise CalibrationError(f"need at least 4 observations, got {len(obs)}")
    if len(np.unique(obs[:, 0])) < 2:
        raise CalibrationError("observations must span at least two plaintext lengths")
    if (obs < 0).any():
        raise CalibrationError("lengths must be non-negative")
    pt, ct = obs[:, 0], obs[:, 1]
    if np.array_equal(pt, ct):
        return (0, 0, 1, 0)

    best = None
    for block in range(1, max_block + 1):
        for trailer in range(block):
            padded = -(-(pt + trailer) // block) * block
            k = ct - padded
            values, counts = np.unique(k, return_counts=True)
            mode = values[np.argmax(counts)]
            mismatches = int((k != mode).sum())
            if best is None or mismatches < best[0]:
                best = (mismatches, block, trailer, int(mode), k - mode)
            if mismatches == 0:
                header = int(mode) - tag_bytes
                if header < 0:
                    raise CalibrationError(
                        f"fit needs H+T={int(mode)}, smaller than tag_bytes={tag_bytes}")
                return (header, trailer, block, tag_bytes)
    raise CalibrationError(
        f"no exact fit with pad_block <= {max_block} (best B={best[1]}, P={best[2]} "
        f"misses {best[0]} observations)", best[4].tolist())


# -- anti-replay --------------------------------------------------------------

class ReplayWindow:
    """64-entry sliding anti-replay window.

    Bit ``i`` of ``bitmap`` marks ``highest_seq - i`` as seen.
    """

    size = REPLAY_WINDOW

    def __init__(self) -> None:
        self.highest_seq = 0
        self.bitmap = 0

    def check(self, seq: int) -> None:
        if seq == 0:
            raise ReplayError("sequence number 0 is never sent")
        if seq > self.highest_seq:
            return
        offset = self.highest_seq - seq
        if offset >= self.size:
            raise ReplayError(f"seq {seq} is below the window (highest {self.highest_seq})")
        if self.bitmap >> offset & 1:
            raise ReplayError(f"seq {seq} already received")

    def update(self, seq: int) -> None:
        if seq > self.highest_seq:
            shift = seq - self.highest_seq
            self.bitmap = ((self.bitmap << shift) | 1) & ((1 << self.size) - 1) if shift < self.size else 1
            self.highest_seq = seq
        else:
            self.bitmap |= 1 << (self.highest_seq - seq)

    def accept(self, seq: int) -> None:
        self.check(seq)
        self.update(seq)


# -- records ------------------------------------------------------------------

@dataclass(frozen=True)
class SealedRecord:
    spi: int
    seq: int
    nonce: bytes
    ciphertext: bytes
    tag: bytes
    total_length: Optional[int] = None

    def __post_init__(self):
        if self.total_length is None:
            object.__setattr__(self, "total_length", self.encoded_length)

    @property
    def encoded_length(self) -> int:
        return RECORD_PREFIX + len(self.nonce) + len(self.ciphertext) + len(self.tag)

    @property
    def header(self) -> bytes:
        return _PREFIX.pack(self.total_length, self.spi, self.seq)

    def to_bytes(self) -> bytes:
        return b"".join((self.header, self.nonce, self.ciphertext, self.tag))

    @classmethod
    def from_bytes(cls, data: bytes, nonce_bytes: int, tag_bytes: int) -> "SealedRecord":
        """Split one complete record; ``data`` must be exactly the record."""
        if len(data) < RECORD_PREFIX + nonce_bytes + tag_bytes:
            raise AuthenticationError(f"record of {len(data)} bytes is too short")
        total, spi, seq = _PREFIX.unpack_from(data)
        body = data[RECORD_PREFIX:]
        nonce, rest = body[:nonce_bytes], body[nonce_bytes:]
        cut = len(rest) - tag_bytes
        return cls(spi, seq, bytes(nonce), bytes(rest[:cut]), bytes(rest[cut:]), total)

    @classmethod
    def parse(cls, data: bytes, profile: SecurityProfile) -> "SealedRecord":
        nonce = 0 if profile.is_null else NONCE_BYTES
        return cls.from_bytes(data, nonce, profile.tag_bytes)


def split_records(buf: bytearray) -> list:
    """Pop every complete length-prefixed record off the front of ``buf``."""
    out = []
    while len(buf) >= 4:
        (total,) = struct.unpack_from("!I", buf)
        if total < RECORD_PREFIX:
            raise AuthenticationError(f"record length {total} below the fixed prefix")
        if len(buf) < total:
            break
        out.append(bytes(buf[:total]))
        del buf[:total]
    return out


# -- cipher backends ------------------------------------------------------------

class _AeadBackend:
    def __init__(self, suite: Suite, key: bytes, tag_bytes: int):
        if suite in (Suite.AES128_CCM, Suite.AES256_CCM):
            self._aead = AESCCM(key, tag_length=tag_bytes)
        elif suite is Suite.AES256_GCM:
            self._aead = AESGCM(key)
        else:
            self._aead = ChaCha20Poly1305(key)
        self._tag = tag_bytes

    def seal(self, nonce: bytes, data: bytes, aad: bytes) -> Tuple[bytes, bytes]:
        out = self._aead.encrypt(nonce, data, aad)
        return out[: -self._tag], out[-self._tag:]

    def open(self, nonce: bytes, ciphertext: bytes, tag: bytes, aad: bytes) -> bytes:
        try:
            return self._aead.decrypt(nonce, ciphertext + tag, aad)
        except InvalidTag:
            raise AuthenticationError("tag verification failed") from None


class _CbcHmacBackend:
    """AES-CBC encrypt-then-MAC with HMAC-SHA256 truncated to the tag size.

    The CBC IV is the AES encryption of ``nonce || 0^4`` under the cipher key.
    """

    def __init__(self, key: bytes, tag_bytes: int):
        self._key = key
        self._mac_key = hashlib.sha256(b"e2sec-cbc-hmac" + key).digest()
        self._ecb = Cipher(algorithms.AES(key), modes.ECB())
        self._tag = tag_bytes

    def _iv(self, nonce: bytes) -> bytes:
        enc = self._ecb.encryptor()
        return enc.update(nonce + b"\0\0\0\0") + enc.finalize()

    def _mac(self, aad: bytes, ciphertext: bytes) -> bytes:
        return hmac.new(self._mac_key, aad + ciphertext, hashlib.sha256).digest()[: self._tag]

    def seal(self, nonce: bytes, data: bytes, aad: bytes) -> Tuple[bytes, bytes]:
        enc = Cipher(algorithms.AES(self._key), modes.CBC(self._iv(nonce))).encryptor()
        ct = enc.update(data) + enc.finalize()
        return ct, self._mac(aad, ct)

    def open(self, nonce: bytes, ciphertext: bytes, tag: bytes, aad: bytes) -> bytes:
        if not hmac.compare_digest(self._mac(aad, ciphertext), tag):
            raise AuthenticationError("tag verification failed")
        if len(ciphertext) % 16:
            raise AuthenticationError("ciphertext not block aligned")
        dec = Cipher(algorithms.AES(self._key), modes.CBC(self._iv(nonce))).decryptor()
        return dec.update(ciphertext) + dec.finalize()


def _backend(profile: SecurityProfile, key: bytes):
    if profile.is_null:
        return None
    key = key[: profile.suite.key_bytes]
    if "CBC" in profile.suite.value:
        return _CbcHmacBackend(key, profile.tag_bytes)
    return _AeadBackend(profile.suite, key, profile.tag_bytes)


# -- channel --------------------------------------------------------------------

class SecureChannel:
    """One endpoint of a pre-keyed channel: a sending sequence plus a replay window.

    Not thread-safe; callers serialize ``seal``/``open`` on one instance.
    Suites with 128-bit keys use the leading 16 bytes of ``key``.
    """

    def __init__(self, profile: SecurityProfile, key: bytes, spi: int = 0x0000E201,
                 initial_seq: int = 1, salt: Optional[bytes] = None):
        if len(key) != 32:
            raise ValueError("channel keys are 256-bit (32 bytes)")
        if not 1 <= initial_seq:
            raise ValueError("sequence numbers start at 1")
        self.profile = profile
        self.spi = spi
        self.next_seq = initial_seq
        self.window = ReplayWindow()
        # Salt is per (key, SPI) so the two directions of a link never share
        # nonces; deriving it instead of drawing it keeps runs reproducible.
        if salt is None:
            salt = hashlib.sha256(b"e2sec-salt" + key + spi.to_bytes(4, "big")).digest()[:4]
        self._salt = salt
        self._backend = _backend(profile, key)
        h, p, b, _ = profile.params
        self._encap = bytes(max(h - NONCE_BYTES, 0))

    def _nonce(self, seq: int) -> bytes:
        return self._salt + seq.to_bytes(8, "big")

    def seal(self, frame_bytes: bytes) -> SealedRecord:
        seq = self.next_seq
        if seq > MAX_SEQ:
            raise ChannelExpiredError("sequence number space exhausted")
        self.next_seq = seq + 1
        if self._backend is None:
            return SealedRecord(self.spi, seq, b"", bytes(frame_bytes), b"")
        _, p, b, _ = self.profile.params
        n = len(frame_bytes)
        pad = -(-(n + p) // b) * b - n - p
        trailer = bytes([pad, NEXT_HEADER_E2]) + bytes(p - 2)
        inner = b"".join((self._encap, frame_bytes, bytes(pad), trailer))
        nonce = self._nonce(seq)
        total = RECORD_PREFIX + NONCE_BYTES + len(inner) + self.profile.tag_bytes
        aad = _PREFIX.pack(total, self.spi, seq) + nonce
        ciphertext, tag = self._backend.seal(nonce, inner, aad)
        return SealedRecord(self.spi, seq, nonce, ciphertext, tag, total)

    def open(self, record: SealedRecord) -> bytes:
        if record.total_length != record.encoded_length:
            raise AuthenticationError(
                f"length field {record.total_length} != record size {record.encoded_length}")
        if record.spi != self.spi:
            raise AuthenticationError(f"unknown SPI {record.spi:#010x}")
        # Cheap duplicate check first, window only moves once the tag verifies.
        self.window.check(record.seq)
        if self._backend is None:
            self.window.update(record.seq)
            return record.ciphertext
        aad = record.header + record.nonce
        inner = self._backend.open(record.nonce, record.ciphertext, record.tag, aad)
        self.window.update(record.seq)
        _, p, _, _ = self.profile.params
        body = inner[len(self._encap):]
        pad, next_header = body[-p], body[-p + 1]
        if next_header != NEXT_HEADER_E2 or pad + p > len(body):
            raise AuthenticationError("malformed trailer")
        return body[: len(body) - p - pad]

    def open_bytes(self, data: bytes) -> bytes:
        return self.open(SealedRecord.parse(data, self.profile))


def channel_pair(profile: SecurityProfile, key: bytes, spi: int = 0x0000E201):
    """Sender and receiver endpoints of one direction, sharing ``key`` and ``spi``.

    Use a distinct ``spi`` per direction when both directions share a key.
    """
    return SecureChannel(profile, key, spi), SecureChannel(profile, key, spi)


def random_key(rng: Optional[np.random.Generator] = None) -> bytes:
    if rng is None:
        return os.urandom(32)
    return rng.bytes(32)
