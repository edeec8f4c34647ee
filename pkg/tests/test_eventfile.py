import numpy as np
import pytest

from dicke_emission.detector import EVENT_DTYPE, make_events
from dicke_emission.errors import EventFileError, EventFileVersionError
from dicke_emission.eventfile import HEADER, export_csv, parse_events, read_events, write_events


def random_events(n, seed=0):
    rng = np.random.default_rng(seed)
    return make_events(rng.integers(1, 3, n), np.sort(rng.integers(0, 2**62, n)),
                       rng.integers(0, 1000, n), rng.integers(0, 1000, n))


def test_empty_file(tmp_path):
    p = tmp_path / "e.phev"
    write_events(np.zeros(0, EVENT_DTYPE), p)
    assert p.stat().st_size == 24
    ev, hdr = read_events(p)
    assert len(ev) == 0 and hdr.count == 0 and hdr.version == 1


def test_round_trip_large(tmp_path):
    ev = random_events(10**6)
    p = tmp_path / "e.phev"
    write_events(ev, p, run_start_ns=1234567890)
    back, hdr = read_events(p)
    assert back.tobytes() == ev.tobytes()
    assert hdr.run_start_ns == 1234567890
    assert p.stat().st_size == 24 + 16 * 10**6


def test_layout_is_little_endian():
    ev = make_events([2], [0x0102030405060708], [0x0a0b], [0x0c0d])
    raw = HEADER.pack(b"PHEV", 1, 1, 0) + ev.tobytes()
    assert raw[:4] == b"PHEV"
    rec = raw[24:]
    assert rec[0] == 2 and rec[2:4] == b"\x0b\x0a" and rec[4:6] == b"\x0d\x0c"
    assert rec[8:16] == bytes(range(8, 0, -1))


def test_truncated_record_offset():
    data = HEADER.pack(b"PHEV", 1, 3, 0) + random_events(3).tobytes()
    with pytest.raises(EventFileError) as e:
        parse_events(data[:-5])
    assert e.value.offset == 24 + 2 * 16
    assert "offset 56" in str(e.value)


def test_header_errors():
    with pytest.raises(EventFileError) as e:
        parse_events(b"PHE")
    assert e.value.offset == 0
    with pytest.raises(EventFileError) as e:
        parse_events(HEADER.pack(b"XXXX", 1, 0, 0))
    assert e.value.offset == 0
    with pytest.raises(EventFileVersionError):
        parse_events(HEADER.pack(b"PHEV", 2, 0, 0))
    # the version error is distinct from generic malformation
    assert not issubclass(EventFileError, EventFileVersionError)


def test_count_mismatch_and_bad_camera():
    body = random_events(2).tobytes()
    with pytest.raises(EventFileError):
        parse_events(HEADER.pack(b"PHEV", 1, 3, 0) + body)
    bad = bytearray(HEADER.pack(b"PHEV", 1, 2, 0) + body)
    bad[24 + 16] = 7
    with pytest.raises(EventFileError) as e:
        parse_events(bytes(bad))
    assert e.value.offset == 40


def test_csv_export(tmp_path):
    ev = random_events(5)
    p = tmp_path / "e.csv"
    export_csv(ev, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "camera,timestamp_ps,x,y"
    cam, ts, x, y = lines[1].split(",")
    assert (int(cam), int(ts), int(x), int(y)) == (ev["camera"][0], ev["timestamp"][0], ev["x"][0], ev["y"][0])
