import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.io import wavfile

from envtransfer.audio_io import (MalformedWav, UnsupportedEncoding, Waveform, WavFileMissing,
                                  read_wav, resample_linear, standardize, write_wav)


def riff(fmt_tag, channels, rate, bits, payload: bytes, extra_chunks=b"") -> bytes:
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", fmt_tag, channels, rate, rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + extra_chunks
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_waveform_validates():
    with pytest.raises(ValueError):
        Waveform(np.array([]), 100)
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, np.nan]), 100)
    with pytest.raises(ValueError):
        Waveform(np.zeros(3), 0)
    w = Waveform([0.0, 0.5], 8000)
    assert w.samples.dtype == np.float64 and not w.samples.flags.writeable
    assert len(w) == 2 and w.duration == pytest.approx(2 / 8000)


def test_read_silence(tmp_path):
    p = tmp_path / "z.wav"
    p.write_bytes(riff(1, 1, 8000, 16, np.zeros(8000, "<i2").tobytes()))
    w = read_wav(p)
    assert w.sample_rate == 8000 and len(w) == 8000 and not w.samples.any()


def test_read_pcm16_extremes(tmp_path):
    p = tmp_path / "x.wav"
    p.write_bytes(riff(1, 1, 16000, 16, np.array([32767, -32768], "<i2").tobytes()))
    w = read_wav(p)
    np.testing.assert_array_equal(w.samples, [32767 / 32768, -1.0])
    assert w.samples[0] == pytest.approx(0.99997, abs=1e-5)


def test_read_stereo_mean(tmp_path):
    frames = np.array([[1.0, 0.0]] * 5, "<f4")
    p = tmp_path / "s.wav"
    p.write_bytes(riff(3, 2, 44100, 32, frames.tobytes()))
    np.testing.assert_allclose(read_wav(p).samples, 0.5)


def test_read_float32_and_skips_unknown_chunks(tmp_path):
    x = np.linspace(-0.5, 0.5, 11).astype("<f4")
    odd = b"LIST" + struct.pack("<I", 3) + b"abc" + b"\0"     # odd size, padded
    p = tmp_path / "f.wav"
    p.write_bytes(riff(3, 1, 22050, 32, x.tobytes(), extra_chunks=odd))
    np.testing.assert_array_equal(read_wav(p).samples, x.astype(np.float64))


def test_read_errors(tmp_path):
    with pytest.raises(WavFileMissing):
        read_wav(tmp_path / "nope.wav")
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFX0000WAVE")
    with pytest.raises(MalformedWav):
        read_wav(bad)
    nodata = tmp_path / "nodata.wav"
    nodata.write_bytes(riff(1, 1, 8000, 16, b"")[:-8])
    with pytest.raises(MalformedWav):
        read_wav(nodata)
    pcm8 = tmp_path / "u8.wav"
    pcm8.write_bytes(riff(1, 1, 8000, 8, bytes(10)))
    with pytest.raises(UnsupportedEncoding, match="8-bit"):
        read_wav(pcm8)
    quad = tmp_path / "quad.wav"
    quad.write_bytes(riff(1, 4, 8000, 16, bytes(32)))
    with pytest.raises(UnsupportedEncoding, match="channels"):
        read_wav(quad)


def test_write_round_trip_ramp(tmp_path):
    w = Waveform(np.linspace(-1, 1, 100), 22050)
    p = tmp_path / "r.wav"
    write_wav(p, w)
    rate, raw = wavfile.read(p)          # independent reader
    assert rate == 22050 and raw.dtype == np.int16
    back = read_wav(p)
    assert np.max(np.abs(back.samples - w.samples)) <= 1 / 32768
    np.testing.assert_array_equal(back.samples, raw / 32768.0)


def test_write_zeros_exact(tmp_path):
    p = tmp_path / "z.wav"
    write_wav(p, Waveform(np.zeros(50), 8000))
    assert read_wav(p) == Waveform(np.zeros(50), 8000)


def test_write_rejects_out_of_range(tmp_path):
    with pytest.raises(ValueError):
        write_wav(tmp_path / "o.wav", Waveform(np.array([0.0, 2.0]), 8000))
    with pytest.raises(OSError):
        write_wav(tmp_path / "missing" / "dir" / "o.wav", Waveform(np.zeros(4), 8000))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=300))
def test_round_trip_property(tmp_path_factory, xs):
    p = tmp_path_factory.mktemp("rt") / "p.wav"
    w = Waveform(np.array(xs), 16000)
    write_wav(p, w)
    assert np.max(np.abs(read_wav(p).samples - w.samples)) <= 1 / 32768 + 1e-15


def test_standardize_identity_and_padding():
    rng = np.random.default_rng(0)
    w = Waveform(rng.uniform(-1, 1, 88200), 22050)
    assert standardize(w, 22050, 4.0) == w
    short = Waveform(rng.uniform(-1, 1, 44100), 22050)
    out = standardize(short, 22050, 4.0)
    assert len(out) == 88200 and not out.samples[44100:].any()
    np.testing.assert_array_equal(out.samples[:44100], short.samples)
    with pytest.raises(ValueError):
        standardize(w, 0, 4.0)


def test_standardize_resample_keeps_peak_frequency():
    t = np.arange(44100) / 44100
    w = Waveform(0.5 * np.sin(2 * np.pi * 440 * t), 44100)
    out = standardize(w, 22050, 1.0)
    for sig, rate in ((w.samples, 44100), (out.samples, 22050)):
        spec = np.abs(np.fft.rfft(sig))
        peak_hz = np.argmax(spec) * rate / len(sig)
        assert abs(peak_hz - 440) <= 1.0


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 3000), rate=st.sampled_from([8000, 11025, 16000, 44100]),
       secs=st.floats(0.01, 0.2))
def test_standardize_length_and_idempotence(n, rate, secs):
    w = Waveform(np.random.default_rng(n).uniform(-1, 1, n), rate)
    once = standardize(w, 22050, secs)
    assert len(once) == round(22050 * secs)
    assert standardize(once, 22050, secs) == once


def test_resample_linear_matches_interp_endpoints():
    x = np.arange(10, dtype=float)
    y = resample_linear(x, 10, 20)
    assert len(y) == 20 and y[0] == 0 and y[2] == 1.0 and y[1] == 0.5
