import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdcircuit import io
from qdcircuit.errors import ConfigError, ParseError, UnitMismatchError, VersionMismatchError
from qdcircuit.simkit import SimConfig
from qdcircuit.types import (AlignmentRecord, CLMap, CorrelationHistogram, DetectorParams,
                             PulseTrain, SplitterParams, Spectrum, TimeTagStream)

from conftest import make_stream


def _stream():
    return make_stream([5, 10, 10, 900], [7, 11, 450], duration_ps=1000)


@pytest.mark.parametrize("suffix", [".ttg", ".csv"])
def test_timetag_round_trip(tmp_path, suffix):
    s = _stream()
    p = io.write_timetags(tmp_path / f"tags{suffix}", s)
    back = io.read_timetags(p)
    assert back == s
    assert back.duration_ps == 1000


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 3), st.integers(0, 10 ** 12)), max_size=60))
def test_timetag_round_trip_property(tmp_path_factory, events):
    events.sort(key=lambda e: e[1])
    ch = np.array([e[0] for e in events], np.uint8)
    ts = np.array([e[1] for e in events], np.int64)
    s = TimeTagStream(ch, ts, 10 ** 12, (1, 2, 3))
    p = tmp_path_factory.mktemp("rt") / "t.ttg"
    io.write_timetags(p, s)
    assert io.read_timetags(p) == s


def test_ttg_truncation_names_byte_offset(tmp_path):
    p = io.write_timetags(tmp_path / "t.ttg", _stream())
    raw = p.read_bytes()
    header_len = len(raw) - 7 * io.RECORD_DTYPE.itemsize
    p.write_bytes(raw[:-4])
    with pytest.raises(ParseError) as exc:
        io.read_timetags(p)
    expected = header_len + 6 * io.RECORD_DTYPE.itemsize
    assert exc.value.location == f"byte {expected}"
    assert f"byte {expected}" in str(exc.value)


def test_ttg_trailing_data_and_disorder(tmp_path):
    p = io.write_timetags(tmp_path / "t.ttg", _stream())
    raw = p.read_bytes()
    (tmp_path / "extra.ttg").write_bytes(raw + b"\x01")
    with pytest.raises(ParseError, match="beyond"):
        io.read_timetags(tmp_path / "extra.ttg")
    # swap the timestamps of the last two records
    n = io.RECORD_DTYPE.itemsize
    body = bytearray(raw)
    last, prev = body[-n:], body[-2 * n:-n]
    body[-2 * n:] = last + prev
    (tmp_path / "swap.ttg").write_bytes(bytes(body))
    with pytest.raises(ParseError, match="decrease"):
        io.read_timetags(tmp_path / "swap.ttg")


def test_version_and_unit_mismatch(tmp_path):
    p = io.write_timetags(tmp_path / "t.ttg", _stream())
    raw = p.read_bytes()
    (tmp_path / "v.ttg").write_bytes(raw.replace(b"qdcircuit-ttg 1", b"qdcircuit-ttg 9", 1))
    with pytest.raises(VersionMismatchError):
        io.read_timetags(tmp_path / "v.ttg")
    (tmp_path / "u.ttg").write_bytes(raw.replace(b"# units ps", b"# units ns", 1))
    with pytest.raises(UnitMismatchError):
        io.read_timetags(tmp_path / "u.ttg")

    h = io.write_histogram(tmp_path / "h.csv", CorrelationHistogram(100, [-50, 50], [3, 4]))
    text = h.read_text().replace("units tau=ps", "units tau=ns")
    h.write_text(text)
    with pytest.raises(UnitMismatchError):
        io.read_histogram(h)


def test_wrong_kind_is_parse_error(tmp_path):
    p = io.write_spectrum(tmp_path / "s.csv", Spectrum([900.0, 910.0], [1.0, 2.0]))
    with pytest.raises(ParseError, match="histogram"):
        io.read_histogram(p)
    (tmp_path / "junk.csv").write_text("1,2\n")
    with pytest.raises(ParseError, match="header"):
        io.read_spectrum(tmp_path / "junk.csv")


def test_streaming_large_file_bounded_chunks(tmp_path):
    n = 10 ** 7
    rng = np.random.default_rng(4)
    ts = np.cumsum(rng.integers(0, 50, n)).astype(np.int64)
    ch = (rng.integers(1, 3, n)).astype(np.uint8)
    chunk = 1 << 18
    p = tmp_path / "big.ttg"
    with io.TimeTagWriter(p, (1, 2)) as w:
        for i in range(0, n, chunk):
            w.write(TimeTagStream(ch[i:i + chunk], ts[i:i + chunk], int(ts[-1]), (1, 2)))
    total = 0
    sizes = []
    for c in io.iter_timetags(p, chunk_records=chunk):
        sizes.append(len(c))
        total += len(c)
    assert total == n
    assert max(sizes) <= chunk
    assert io.read_meta(p)["n_records"].lstrip("0") == str(n)


def test_histogram_round_trip_raw_and_normalized(tmp_path):
    raw = CorrelationHistogram(100.0, [-150.0, -50.0, 50.0, 150.0], [1, 2, 3, 4])
    p = io.write_histogram(tmp_path / "raw.csv", raw, meta={"seed": 7})
    assert io.read_histogram(p) == raw
    assert io.read_meta(p)["seed"] == "7"
    norm = CorrelationHistogram(100.0, [-50.0, 50.0], [2, 4], [0.1 + 0.2, 1 / 3], "cw-poisson",
                                6.0)
    p = io.write_histogram(tmp_path / "n.csv", norm)
    back = io.read_histogram(p)
    assert back == norm
    assert back.norm_constant == 6.0


def test_spectrum_and_alignment_round_trip(tmp_path):
    spec = Spectrum(np.linspace(900, 940, 41), np.abs(np.sin(np.arange(41.0))) * 1e3)
    assert io.read_spectrum(io.write_spectrum(tmp_path / "s.csv", spec)) == spec
    recs = [AlignmentRecord("qd-1", 1.5, -2.25, 0.0, 0.0),
            AlignmentRecord("qd-2", 1 / 3, 1e-9, 10.0, -10.0)]
    assert io.read_alignment(io.write_alignment(tmp_path / "a.csv", recs)) == recs


@pytest.mark.parametrize("suffix", [".txt", ".npz"])
@pytest.mark.parametrize("hyper", [False, True])
def test_clmap_round_trip(tmp_path, suffix, hyper, rng):
    if hyper:
        cmap = CLMap(rng.random((4, 5, 3)), 250.0, (10.0, -20.0), [910.0, 920.0, 930.0])
    else:
        cmap = CLMap(rng.random((4, 5)), 125.5, (0.0, 0.0))
    p = io.write_clmap(tmp_path / f"map{suffix}", cmap)
    back = io.read_clmap(p)
    assert back == cmap
    assert back.origin_nm == cmap.origin_nm


def test_clmap_row_count_checked(tmp_path):
    p = io.write_clmap(tmp_path / "m.txt", CLMap(np.ones((3, 3)), 100.0))
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ParseError, match="rows"):
        io.read_clmap(p)


CONFIG = """\
[sim]
topology = hom-mzi
duration_s = 2.5
seed = 11
polarization = parallel
hom_visibility = 0.9

[emitter]
lifetime_ns = 1.0
coherence_ns = 0.4
brightness = 200000

[pulsing]
rep_period_ns = 12.5
mzi_delay_ns = 4.0
n_pulses = 1000

[detector.2]
efficiency = 0.5
"""


def test_config_parse_and_canonical_round_trip():
    cfg = io.parse_config(CONFIG)
    assert cfg.topology == "hom-mzi"
    assert cfg.seed == 11
    assert cfg.pulsing == PulseTrain(12.5, 4.0, 1000)
    assert cfg.detectors == (DetectorParams(), DetectorParams(efficiency=0.5))
    assert cfg.splitters == SplitterParams()
    text = io.dump_config(cfg)
    assert io.parse_config(text) == cfg
    assert io.dump_config(io.parse_config(text)) == text


def test_config_hash_stable_and_sensitive():
    cfg = io.parse_config(CONFIG)
    h = io.config_hash(cfg)
    assert h == io.config_hash(io.parse_config(CONFIG))
    # reordered keys and formatting do not change the hash
    shuffled = CONFIG.replace("duration_s = 2.5\nseed = 11", "seed=11\nduration_s=2.50")
    assert io.config_hash(io.parse_config(shuffled)) == h
    other = SimConfig(**{**cfg.__dict__, "seed": 12})
    assert io.config_hash(other) != h


@pytest.mark.parametrize("text, match", [
    (CONFIG.replace("seed = 11", "seed = 11\nspeed = 3"), "unknown key 'speed'"),
    (CONFIG.replace("brightness", "brightnes"), "unknown key 'brightnes'"),
    (CONFIG + "\n[extra]\na = 1\n", "unknown sections"),
    (CONFIG.replace("seed = 11", "seed = eleven"), "seed"),
    (CONFIG.replace("topology = hom-mzi", "topology = ring"), "topology"),
    ("[sim]\ntopology = hbt\n", "required"),
], ids=["unknown-key", "misspelled-key", "unknown-section", "bad-seed", "bad-topology",
        "missing-required"])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        io.parse_config(text)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        io.load_config(tmp_path / "nope.ini")


def test_atomic_write_leaves_no_partial_file(tmp_path):
    p = tmp_path / "t.ttg"
    with pytest.raises(ValueError):
        with io.TimeTagWriter(p, (1,)) as w:
            w.write(make_stream([5], [], duration_ps=10))
    assert not p.exists()
    assert list(tmp_path.iterdir()) == []
