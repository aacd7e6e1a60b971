import numpy as np
import pytest

from e2sec.attack import (
    NoiseMode,
    PerturbationSpec,
    field_of,
    perturb_window,
    replay_record,
    tamper_record,
)
from e2sec.secchan import AuthenticationError, ReplayError, channel_pair, get_profile

KEY = bytes(range(32))


def test_literal_mode_at_zero_sigma_doubles():
    x = np.full(12, 0.4)
    out = perturb_window(x, PerturbationSpec(0.0, NoiseMode.PAPER_LITERAL))
    assert np.allclose(out, 0.8)


def test_zero_mean_at_zero_sigma_is_identity():
    x = np.random.default_rng(0).random(120)
    out = perturb_window(x, PerturbationSpec(0.0, NoiseMode.ZERO_MEAN))
    assert np.array_equal(out, x)


def test_zero_mean_moments():
    n, sigma, x0 = 100_000, 0.1, 0.5
    x = np.full(n * 12, x0)
    out = perturb_window(x, PerturbationSpec(sigma, NoiseMode.ZERO_MEAN, seed=3))
    se = sigma / np.sqrt(out.size)
    assert abs(out.mean() - x0) < 3 * se
    assert abs(out.var() / sigma**2 - 1) < 0.05


def test_literal_mode_expectation_doubles():
    x = np.full(12 * 100_000, 0.3)
    out = perturb_window(x, PerturbationSpec(0.1, NoiseMode.PAPER_LITERAL, seed=3, clamp=False))
    assert abs(out.mean() - 0.6) < 3 * 0.1 / np.sqrt(out.size)


def test_clamp_range():
    x = np.full(1200, 1.5)
    out = perturb_window(x, PerturbationSpec(1.0, NoiseMode.PAPER_LITERAL, seed=1))
    assert out.min() >= 0 and out.max() <= 2
    raw = perturb_window(x, PerturbationSpec(1.0, NoiseMode.PAPER_LITERAL, seed=1, clamp=False))
    assert raw.max() > 2


def test_same_seed_same_perturbation():
    x = np.random.default_rng(0).random(120)
    spec = PerturbationSpec(0.2, NoiseMode.ZERO_MEAN, seed=42)
    assert np.array_equal(perturb_window(x, spec), perturb_window(x, spec))


def test_target_mask():
    x = np.full((10, 3, 4), 0.25)
    spec = PerturbationSpec(0.0, NoiseMode.PAPER_LITERAL, target_features={"eMBB.buffer_bytes"})
    out = perturb_window(x, spec)
    assert np.all(out[:, 0, 1] == 0.5)
    out[:, 0, 1] = 0.25
    assert np.all(out == 0.25)
    both = PerturbationSpec(0.0, target_features={"num_ues"}).mask()
    assert both[:, 3].all() and both.sum() == 3
    with pytest.raises(ValueError):
        PerturbationSpec(0.1, target_features={"latency"}).mask()


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        PerturbationSpec(-0.1)


def test_field_map():
    tx, _ = channel_pair(get_profile("AES256-GCM"), KEY)
    rec = tx.seal(b"x" * 20)
    names = [field_of(i, rec) for i in range(rec.encoded_length)]
    assert names[:4] == ["total_length"] * 4 and names[4:8] == ["spi"] * 4
    assert names[8:16] == ["seq"] * 8 and names[16:28] == ["nonce"] * 12
    assert names[-16:] == ["tag"] * 16


@pytest.mark.parametrize("suite", ["AES256-GCM", "CHACHA20-POLY1305", "AES128-CCM", "AES256-CBC-HMAC"])
def test_every_tampered_byte_is_rejected(suite):
    profile = get_profile(suite)
    tx, rx = channel_pair(profile, KEY)
    rec = tx.seal(b"\x01" * 62)
    for i in range(rec.encoded_length):
        bad = tamper_record(rec, i, rec.to_bytes()[i] ^ 0x5A)
        with pytest.raises((AuthenticationError, ReplayError)) as exc:
            rx.open(bad)
        if exc.type is ReplayError:
            assert field_of(i, rec) == "seq"
    assert rx.open(rec) == b"\x01" * 62


def test_seq_tamper_outcomes():
    """A forged seq is either a fresh number (tag fails) or outside the window."""
    tx, rx = channel_pair(get_profile("AES256-GCM"), KEY, spi=7)
    recs = [tx.seal(bytes([i])) for i in range(100)]
    for r in recs:
        rx.open(r)
    target = recs[50]
    outcomes = {}
    for i in range(8, 16):
        for v in (0x00, 0xFF):
            if target.to_bytes()[i] == v:
                continue
            status, _ = replay_record(tamper_record(target, i, v), rx)
            outcomes[(i, v)] = status
    assert "accepted" not in outcomes.values()
    assert outcomes[(15, 0x00)] == "replay"   # seq 0 is far below the window
    assert outcomes[(8, 0xFF)] == "auth"      # seq far above it is fresh


def test_noop_tamper_opens_once():
    tx, rx = channel_pair(get_profile("AES128-CCM"), KEY)
    rec = tx.seal(b"hello")
    same = tamper_record(rec, 20, rec.to_bytes()[20])
    assert replay_record(same, rx) == ("accepted", b"hello")
    assert replay_record(rec, rx) == ("replay", None)


def test_tamper_index_bounds():
    tx, _ = channel_pair(get_profile("AES256-GCM"), KEY)
    rec = tx.seal(b"")
    with pytest.raises(IndexError):
        tamper_record(rec, rec.encoded_length, 0)


@pytest.mark.parametrize("newer,expected", [(62, "replay"), (63, "replay"), (64, "replay"), (65, "replay")])
def test_replay_after_window_advance(newer, expected):
    tx, rx = channel_pair(get_profile("AES256-GCM"), KEY)
    first = tx.seal(b"a")
    rx.open(first)
    for _ in range(newer):
        rx.open(tx.seal(b"b"))
    assert replay_record(first, rx)[0] == expected


@pytest.mark.parametrize("lag,expected", [(62, "accepted"), (63, "accepted"), (64, "replay"), (65, "replay")])
def test_reordered_fresh_record(lag, expected):
    """An unseen record is accepted iff it lies within 64 of the highest seq."""
    tx, rx = channel_pair(get_profile("AES256-GCM"), KEY)
    held = tx.seal(b"late")
    for _ in range(lag):
        rx.open(tx.seal(b"x"))
    assert replay_record(held, rx)[0] == expected
