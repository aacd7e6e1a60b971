"""Emulated link and the echo / throughput benchmark harnesses.

The link is a single-packet token bucket (a packet leaves once the previous
one has been serialized at ``rate_bps``) followed by a fixed propagation
delay. Because both delays are enforced against the same clock the harness
reads, ``RTT >= 2 * d_prop + 2 * L / R`` holds by construction and the
remainder is what the two endpoints spent processing.
"""

from __future__ import annotations

import csv
import logging
import math
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .secchan import SecureChannel, SecurityProfile, record_length
from .wire import E2Frame, EchoPayload, MsgType, decode_frame, echo_reply, encode_frame

log = logging.getLogger(__name__)

LATENCY_COLUMNS = ["suite", "payload_bytes", "reps", "rtt_p50_us", "rtt_p5_us", "rtt_p95_us",
                   "d_trans_us", "d_prop_us", "d_proc_est_us"]
THROUGHPUT_COLUMNS = ["suite", "attempted_mbps", "achieved_mbps", "cpu_pct_mean", "duration_s"]

UPLINK_SPI = 0x0000E201
DOWNLINK_SPI = 0x0000E202
WARMUP_FRACTION = 0.10
CPU_SAMPLE_INTERVAL = 0.1

clock = time.perf_counter


class BenchError(Exception):
    pass


class BenchAborted(BenchError):
    """A run stopped early; ``partial`` holds whatever was measured."""

    def __init__(self, message: str, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class LinkParams:
    rate_bps: float = math.inf
    prop_delay_s: float = 0.0

    def __post_init__(self):
        if not self.rate_bps > 0:
            raise ValueError("link rate must be positive")
        if self.prop_delay_s < 0:
            raise ValueError("propagation delay must be non-negative")


def transmission_delay(bits: float, rate_bps: float) -> float:
    if not rate_bps > 0:
        raise ValueError(f"rate must be positive, got {rate_bps}")
    return bits / rate_bps


def wait_until(deadline: float) -> None:
    # Coarse sleep, then yield-spin the last stretch; sleep alone overshoots.
    while True:
        remaining = deadline - clock()
        if remaining <= 0:
            return
        if remaining > 5e-4:
            time.sleep(remaining - 3e-4)
        else:
            time.sleep(0)


class EmulatedLink:
    """One direction of a point-to-point link."""

    def __init__(self, params: LinkParams, maxsize: int = 0):
        self.params = params
        self._q: queue.Queue = queue.Queue(maxsize)
        self._free_at = 0.0
        self._lock = threading.Lock()

    def send(self, data: bytes, timeout: Optional[float] = None) -> float:
        """Queue ``data``; returns the time it will be handed to the receiver."""
        with self._lock:
            start = max(clock(), self._free_at)
            depart = start + transmission_delay(8 * len(data), self.params.rate_bps)
            self._free_at = depart
        deliver_at = depart + self.params.prop_delay_s
        self._q.put((deliver_at, data), timeout=timeout)
        return deliver_at

    def recv(self, timeout: Optional[float] = None) -> bytes:
        deliver_at, data = self._q.get(timeout=timeout)
        wait_until(deliver_at)
        return data

    def close(self) -> None:
        self._q.put((0.0, None))


# -- echo benchmark ----------------------------------------------------------------

@dataclass
class DelaySample:
    suite: str
    payload_bytes: int
    reps: int
    wire_bytes: int
    rtts: np.ndarray = field(repr=False)
    d_trans: float
    d_prop: float

    @property
    def rtt_p50(self) -> float:
        return float(np.percentile(self.rtts, 50))

    @property
    def rtt_p5(self) -> float:
        return float(np.percentile(self.rtts, 5))

    @property
    def rtt_p95(self) -> float:
        return float(np.percentile(self.rtts, 95))

    @property
    def d_proc_samples(self) -> np.ndarray:
        """Per-direction processing estimate for every repetition."""
        return (self.rtts - 2 * self.d_prop - 2 * self.d_trans) / 2

    @property
    def d_proc_est(self) -> float:
        return (self.rtt_p50 - 2 * self.d_prop - 2 * self.d_trans) / 2

    def row(self) -> dict:
        us = 1e6
        return {
            "suite": self.suite,
            "payload_bytes": self.payload_bytes,
            "reps": self.reps,
            "rtt_p50_us": f"{self.rtt_p50 * us:.3f}",
            "rtt_p5_us": f"{self.rtt_p5 * us:.3f}",
            "rtt_p95_us": f"{self.rtt_p95 * us:.3f}",
            "d_trans_us": f"{self.d_trans * us:.3f}",
            "d_prop_us": f"{self.d_prop * us:.3f}",
            "d_proc_est_us": f"{self.d_proc_est * us:.3f}",
        }


def _echo_server(up: EmulatedLink, down: EmulatedLink, rx: SecureChannel, tx: SecureChannel,
                 errors: list) -> None:
    try:
        while True:
            data = up.recv()
            if data is None:
                return
            frame, _ = decode_frame(rx.open_bytes(data))
            down.send(tx.seal(encode_frame(echo_reply(frame))).to_bytes())
    except Exception as exc:  # surfaced by the client as an aborted run
        errors.append(exc)


def run_echo_bench(sizes: Sequence[int], reps: int, profile: SecurityProfile, link: LinkParams,
                   key: bytes, timeout: float = 2.0) -> List[DelaySample]:
    """Echo RTT per payload size over a fresh channel pair in each direction.

    ``sizes`` are E2 frame payload lengths (>= 16, the echo header). The first
    10% of each size's exchanges are run as warm-up and discarded, so every
    sample holds exactly ``reps`` measurements.
    """
    if reps < 30:
        raise ValueError("reps must be at least 30")
    up, down = EmulatedLink(link), EmulatedLink(link)
    client_tx = SecureChannel(profile, key, UPLINK_SPI)
    server_rx = SecureChannel(profile, key, UPLINK_SPI)
    server_tx = SecureChannel(profile, key, DOWNLINK_SPI)
    client_rx = SecureChannel(profile, key, DOWNLINK_SPI)
    errors: list = []
    server = threading.Thread(target=_echo_server, args=(up, down, server_rx, server_tx, errors),
                              name="echo-server", daemon=True)
    server.start()

    samples: List[DelaySample] = []
    warmup = math.ceil(reps * WARMUP_FRACTION)
    seq = 0
    try:
        for size in sizes:
            frame_len = len(E2Frame(MsgType.ECHO, bytes(size)))
            wire = record_length(frame_len, profile)
            rtts = np.empty(reps)
            for i in range(warmup + reps):
                seq += 1
                t0 = clock()
                payload = EchoPayload.sized(seq, time.perf_counter_ns(), size).to_bytes()
                up.send(client_tx.seal(encode_frame(E2Frame(MsgType.ECHO, payload))).to_bytes())
                try:
                    data = down.recv(timeout=timeout)
                except queue.Empty:
                    if errors:
                        raise BenchAborted(f"echo server failed: {errors[0]!r}", samples) from errors[0]
                    raise BenchAborted(f"echo timeout at size {size}", samples) from None
                reply, _ = decode_frame(client_rx.open_bytes(data))
                t1 = clock()
                back = EchoPayload.from_bytes(reply.payload)
                if reply.msg_type is not MsgType.ECHO_REPLY or back.seq_no != seq:
                    raise BenchAborted(f"unexpected reply {reply.msg_type.name} seq {back.seq_no}", samples)
                if len(data) != wire:
                    raise BenchError(f"record of {len(data)} bytes, model says {wire}")
                if i >= warmup:
                    rtts[i - warmup] = t1 - t0
            samples.append(DelaySample(
                suite=profile.name, payload_bytes=size, reps=reps, wire_bytes=wire, rtts=rtts,
                d_trans=transmission_delay(8 * wire, link.rate_bps), d_prop=link.prop_delay_s))
    finally:
        up.close()
        server.join(timeout)
    return samples


# -- throughput benchmark ----------------------------------------------------------

@dataclass(frozen=True)
class ThroughputSample:
    suite: str
    attempted_bps: float
    achieved_bps: float
    cpu_pct_mean: float
    duration_s: float
    cpu_samples: tuple = field(default=(), repr=False)

    def row(self) -> dict:
        attempted = "inf" if math.isinf(self.attempted_bps) else f"{self.attempted_bps / 1e6:.3f}"
        return {
            "suite": self.suite,
            "attempted_mbps": attempted,
            "achieved_mbps": f"{self.achieved_bps / 1e6:.3f}",
            "cpu_pct_mean": f"{self.cpu_pct_mean:.2f}",
            "duration_s": f"{self.duration_s:g}",
        }


class _CpuSampler(threading.Thread):
    """Process CPU time over wall time, in percent of one core, every 100 ms."""

    def __init__(self, interval: float = CPU_SAMPLE_INTERVAL):
        super().__init__(name="cpu-sampler", daemon=True)
        self.interval = interval
        self.samples: list = []
        self._halt = threading.Event()

    def run(self) -> None:
        last_wall, last_cpu = clock(), time.process_time()
        while not self._halt.wait(self.interval):
            wall, cpu = clock(), time.process_time()
            self.samples.append((wall, 100.0 * (cpu - last_cpu) / (wall - last_wall)))
            last_wall, last_cpu = wall, cpu

    def stop(self) -> None:
        self._halt.set()
        self.join()


def _stream(rate_bps: float, duration: float, profile: SecurityProfile, link: LinkParams,
            key: bytes, payload_bytes: int) -> ThroughputSample:
    pipe = EmulatedLink(link, maxsize=64)
    tx = SecureChannel(profile, key, UPLINK_SPI)
    rx = SecureChannel(profile, key, UPLINK_SPI)
    frame = encode_frame(E2Frame(MsgType.DATA, bytes(payload_bytes)))
    paced = math.isfinite(rate_bps)
    errors: list = []
    received = []  # (time, payload bytes), written by the receiver only

    def sender(start: float) -> None:
        sent_bits = 0
        end = start + duration
        try:
            while True:
                now = clock()
                if now >= end:
                    break
                if paced and sent_bits >= rate_bps * (now - start):
                    time.sleep(1e-3)
                    continue
                pipe.send(tx.seal(frame).to_bytes(), timeout=max(end - now, 1e-3))
                sent_bits += 8 * payload_bytes
        except queue.Full:
            pass
        except Exception as exc:
            errors.append(exc)
        finally:
            pipe.close()

    def receiver() -> None:
        try:
            while True:
                data = pipe.recv()
                if data is None:
                    return
                got, _ = decode_frame(rx.open_bytes(data))
                received.append((clock(), len(got.payload)))
        except Exception as exc:
            errors.append(exc)

    sampler = _CpuSampler()
    rx_thread = threading.Thread(target=receiver, name="bench-rx", daemon=True)
    start = clock()
    tx_thread = threading.Thread(target=sender, args=(start,), name="bench-tx", daemon=True)
    sampler.start()
    rx_thread.start()
    tx_thread.start()
    tx_thread.join()
    # Drain what is already in flight; it counts only if it lands in the window.
    rx_thread.join(timeout=5.0)
    sampler.stop()
    if errors:
        raise BenchAborted(f"transport failure: {errors[0]!r}", None) from errors[0]

    window_start = start + WARMUP_FRACTION * duration
    window_end = start + duration
    bits = 8 * sum(n for t, n in received if window_start <= t <= window_end)
    achieved = bits / (window_end - window_start)
    cpu = tuple(pct for t, pct in sampler.samples if window_start <= t <= window_end)
    return ThroughputSample(profile.name, rate_bps, achieved, float(np.mean(cpu)) if cpu else 0.0,
                            duration, cpu)


def run_throughput_bench(attempted_rates: Sequence[float], duration: float, profile: SecurityProfile,
                         link: LinkParams, key: bytes, payload_bytes: int = 1400) -> List[ThroughputSample]:
    """Paced DATA stream at each attempted rate (bits/s of E2 payload)."""
    if duration < 1:
        raise ValueError("duration must be at least 1 s")
    out = []
    for rate in attempted_rates:
        if not rate > 0:
            raise ValueError(f"attempted rate must be positive, got {rate}")
        out.append(_stream(float(rate), duration, profile, link, key, payload_bytes))
        log.info("%s %.0f Mb/s -> %.1f Mb/s", profile.name, rate / 1e6, out[-1].achieved_bps / 1e6)
    return out


def run_max_throughput(profile: SecurityProfile, key: bytes, duration: float = 30.0,
                       link: LinkParams = LinkParams(), payload_bytes: int = 1400) -> ThroughputSample:
    """Unpaced stream: the sender pushes as fast as the channel takes it."""
    if duration < 1:
        raise ValueError("duration must be at least 1 s")
    return _stream(math.inf, duration, profile, link, key, payload_bytes)


# -- analysis ---------------------------------------------------------------------

def saturation_index(samples: Sequence[ThroughputSample], tolerance: float = 0.05) -> Optional[int]:
    """Index of the first attempted rate the channel could not keep up with."""
    for i, s in enumerate(samples):
        if s.achieved_bps < (1 - tolerance) * s.attempted_bps:
            return i
    return None


def saturation_rate(samples: Sequence[ThroughputSample]) -> float:
    """Plateau of the sweep: the largest achieved rate."""
    return max(s.achieved_bps for s in samples)


def cpu_linearity(samples: Sequence[ThroughputSample], slack: float = 0.05):
    """(non-decreasing within ``slack``, R^2 of a linear fit) below saturation."""
    stop = saturation_index(samples)
    pre = list(samples[:stop]) if stop is not None else list(samples)
    x = np.array([s.attempted_bps for s in pre])
    y = np.array([s.cpu_pct_mean for s in pre])
    monotone = bool(np.all(y[1:] >= (1 - slack) * y[:-1]))
    if len(pre) < 3:
        return monotone, float("nan"), len(pre)
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return monotone, r2, len(pre)


def write_latency_csv(path, samples: Sequence[DelaySample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, LATENCY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for s in samples:
            w.writerow(s.row())


def write_throughput_csv(path, samples: Sequence[ThroughputSample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, THROUGHPUT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for s in samples:
            w.writerow(s.row())
