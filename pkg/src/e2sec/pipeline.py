"""End-to-end run: gNB KPI indications over the sealed link into the RIC.

Everything runs in one thread with the link used as a FIFO, so every counter
and action is a pure function of the inputs and seeds.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .attack import PerturbationSpec, perturb_window, tamper_record
from .intelligence import AgentAction, Autoencoder, decide
from .kpi import Normalizer
from .linkbench import DOWNLINK_SPI, UPLINK_SPI, EmulatedLink, LinkParams
from .secchan import AuthenticationError, ReplayError, SealedRecord, SecureChannel, SecurityProfile
from .wire import (E2Frame, MsgType, WireError, decode_control, decode_frame, decode_indication,
                   encode_control, encode_frame, encode_indication)


@dataclass
class E2EResult:
    counters: dict
    actions: List[AgentAction] = field(default_factory=list)
    action_ticks: List[int] = field(default_factory=list)


def offline_actions(stream: np.ndarray, normalizer: Normalizer, window: int,
                    ae: Optional[Autoencoder] = None) -> List[AgentAction]:
    """Decisions for every full window of ``stream``, without any transport."""
    return [decide(normalizer.normalize(stream[t - window + 1:t + 1]).reshape(-1), ae)
            for t in range(window - 1, len(stream))]


def run_e2e(stream: np.ndarray, normalizer: Normalizer, window: int, profile: SecurityProfile,
            key: bytes, link: LinkParams = LinkParams(), ae: Optional[Autoencoder] = None,
            tamper_rate: float = 0.0, replay_rate: float = 0.0,
            perturbation: Optional[PerturbationSpec] = None, seed: int = 0) -> E2EResult:
    rng = np.random.default_rng(seed)
    noise_rng = np.random.default_rng(perturbation.seed) if perturbation else None
    uplink, downlink = EmulatedLink(link), EmulatedLink(link)
    gnb_tx, ric_rx = SecureChannel(profile, key, UPLINK_SPI), SecureChannel(profile, key, UPLINK_SPI)
    ric_tx, gnb_rx = SecureChannel(profile, key, DOWNLINK_SPI), SecureChannel(profile, key, DOWNLINK_SPI)

    c = dict.fromkeys([
        "frames_sent", "frames_opened", "frames_rejected", "rejected_auth", "rejected_replay",
        "decode_errors", "tampered_injected", "replays_injected", "replays_delivered",
        "indications_delivered", "actions_taken", "controls_sent", "controls_applied"], 0)
    result = E2EResult(c)
    history: List[SealedRecord] = []
    received = deque(maxlen=window)
    last_tick = -1

    for tick, kpis in enumerate(stream):
        if perturbation is not None:
            z = perturb_window(normalizer.normalize(kpis), perturbation, noise_rng)
            kpis = normalizer.denormalize(z)
        record = gnb_tx.seal(encode_frame(E2Frame(MsgType.INDICATION, encode_indication(tick, kpis))))
        outgoing = [record]
        history.append(record)
        if tamper_rate and rng.random() < tamper_rate:
            i = int(rng.integers(record.encoded_length))
            old = record.to_bytes()[i]
            outgoing[0] = tamper_record(record, i, old ^ int(rng.integers(1, 256)))
            c["tampered_injected"] += 1
        if replay_rate and len(history) > 1 and rng.random() < replay_rate:
            outgoing.append(history[int(rng.integers(len(history) - 1))])
            c["replays_injected"] += 1

        for rec in outgoing:
            uplink.send(rec.to_bytes())
            c["frames_sent"] += 1
            data = uplink.recv()
            try:
                plain = ric_rx.open_bytes(data)
            except AuthenticationError:
                c["rejected_auth"] += 1
                c["frames_rejected"] += 1
                continue
            except ReplayError:
                c["rejected_replay"] += 1
                c["frames_rejected"] += 1
                continue
            c["frames_opened"] += 1
            try:
                frame, _ = decode_frame(plain)
                got_tick, got_kpis = decode_indication(frame.payload)
            except (WireError, TypeError):
                c["decode_errors"] += 1
                continue
            if got_tick <= last_tick:
                c["replays_delivered"] += 1
                continue
            last_tick = got_tick
            c["indications_delivered"] += 1
            received.append(got_kpis)
            if len(received) < window:
                continue
            action = decide(normalizer.normalize(np.array(received)).reshape(-1), ae)
            c["actions_taken"] += 1
            result.actions.append(action)
            result.action_ticks.append(got_tick)

            ctrl = ric_tx.seal(encode_frame(E2Frame(MsgType.CONTROL,
                                                    encode_control(action.scheduling, action.slicing))))
            downlink.send(ctrl.to_bytes())
            c["controls_sent"] += 1
            reply, _ = decode_frame(gnb_rx.open_bytes(downlink.recv()))
            if decode_control(reply.payload) == (action.scheduling, action.slicing):
                c["controls_applied"] += 1
    return result
