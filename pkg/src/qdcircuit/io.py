"""
File formats and configuration.

Every format starts with ``# qdcircuit-<kind> <version>`` followed by
``# key value`` header lines that include explicit units.  Text tables are
comma separated and write floats with 17 significant digits so that a
write/read round trip is lossless.

Time tags go to a compact binary ``.ttg`` file (text header, then packed
little-endian records ``uint8 channel, int64 timestamp_ps``) or to a CSV
debug variant (``.csv``).  Large tag files are read and written in chunks.
"""
from __future__ import annotations

import configparser
import hashlib
import io as _io
import json
import os
import tempfile
from dataclasses import fields
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError, ParseError, UnitMismatchError, VersionMismatchError
from .simkit import SimConfig
from .types import (AlignmentRecord, CLMap, CorrelationHistogram, DetectorParams,
                    EmitterParams, PulseTrain, SplitterParams, Spectrum, TimeTagStream)

FORMAT_VERSION = 1
RECORD_DTYPE = np.dtype([("channel", "u1"), ("timestamp", "<i8")])
DEFAULT_CHUNK_RECORDS = 1 << 20
_COUNT_WIDTH = 20


def _fmt(x) -> str:
    """Integers without a decimal point, other floats round-trippable."""
    return str(int(x)) if float(x).is_integer() else repr(float(x))


# -- atomic writes ----------------------------------------------------------------

class _AtomicFile:
    """Binary file written under a temporary name, renamed into place on
    successful close."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, self.tmp = tempfile.mkstemp(prefix=f".{self.path.name}.", dir=self.path.parent)
        self.fh = os.fdopen(fd, "w+b")

    def commit(self):
        self.fh.flush()
        os.fsync(self.fh.fileno())
        self.fh.close()
        os.replace(self.tmp, self.path)

    def abort(self):
        self.fh.close()
        if os.path.exists(self.tmp):
            os.unlink(self.tmp)


def atomic_write(path, data):
    """Write ``data`` (str or bytes) to ``path`` via temp file + rename."""
    f = _AtomicFile(path)
    try:
        f.fh.write(data.encode() if isinstance(data, str) else data)
    except BaseException:
        f.abort()
        raise
    f.commit()


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


# -- headers ----------------------------------------------------------------------

def _header(kind, items):
    lines = [f"# qdcircuit-{kind} {FORMAT_VERSION}"]
    lines += [f"# {k} {v}" for k, v in items]
    return "\n".join(lines) + "\n"


def _parse_header(lines, kind, path):
    """Parse ``# key value`` lines; returns (dict, number of header lines)."""
    if not lines or not lines[0].startswith("# qdcircuit-"):
        raise ParseError("missing qdcircuit header", path, "line 1")
    magic = lines[0][2:].split()
    if magic[0] != f"qdcircuit-{kind}":
        raise ParseError(f"expected a {kind} file, found {magic[0]}", path, "line 1")
    if len(magic) < 2 or magic[1] != str(FORMAT_VERSION):
        raise VersionMismatchError(f"unsupported version {magic[1:]} (want {FORMAT_VERSION})",
                                   path, "line 1")
    meta = {}
    n = 1
    for line in lines[1:]:
        if not line.startswith("#"):
            break
        n += 1
        body = line[1:].strip()
        if not body:
            continue
        key, _, value = body.partition(" ")
        meta[key] = value.strip()
    return meta, n


def _require_units(meta, expected, path):
    got = meta.get("units")
    if got != expected:
        raise UnitMismatchError(f"units {got!r}, expected {expected!r}", path, "header")


def _require_key(meta, key, path):
    if key not in meta:
        raise ParseError(f"header key {key!r} missing", path, "header")
    return meta[key]


def _read_text(path):
    try:
        return Path(path).read_text().splitlines()
    except UnicodeDecodeError as exc:
        raise ParseError("not a text file", path) from exc


def _parse_rows(lines, start, ncols, path, converters):
    rows = []
    for i, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != ncols:
            raise ParseError(f"expected {ncols} fields, got {len(parts)}", path, f"line {i}")
        try:
            rows.append(tuple(conv(p) for conv, p in zip(converters, parts)))
        except ValueError as exc:
            raise ParseError(str(exc), path, f"line {i}") from exc
    return rows


# -- time tags ----------------------------------------------------------------------

def _meta_items(meta):
    """Extra provenance header lines (sorted, single-token values)."""
    items = []
    for k, v in sorted((meta or {}).items()):
        if not str(k).isidentifier() or any(c.isspace() for c in str(v)) or str(v) == "":
            raise ValueError(f"header metadata {k!r}={v!r} must be single tokens")
        items.append((k, v))
    return items


def _ttg_header(duration_ps, channel_ids, n_records, meta=None):
    items = [("units", "ps"), ("duration_ps", f"{int(duration_ps):0{_COUNT_WIDTH}d}"),
             ("channels", ",".join(str(c) for c in channel_ids)),
             ("n_records", f"{int(n_records):0{_COUNT_WIDTH}d}"),
             ("record", "u1:channel,<i8:timestamp_ps")] + _meta_items(meta) + [("end", "")]
    return _header("ttg", items).encode()


class TimeTagWriter:
    """Incremental ``.ttg`` writer; the header counts are patched on close.

    >>> with TimeTagWriter(path, (1, 2)) as w:      # doctest: +SKIP
    ...     for chunk in iter_chunks(cfg):
    ...         w.write(chunk)
    """

    def __init__(self, path, channel_ids, duration_ps=0, meta=None):
        self.channel_ids = tuple(sorted(int(c) for c in channel_ids))
        self.meta = dict(meta or {})
        self.duration_ps = int(duration_ps)
        self.n_records = 0
        self._last = -1
        self._file = _AtomicFile(path)
        self._file.fh.write(_ttg_header(0, self.channel_ids, 0, self.meta))

    def write(self, chunk: TimeTagStream):
        if len(chunk):
            if int(chunk.timestamps[0]) < self._last:
                raise ValueError("chunks must be written in time order")
            undeclared = set(chunk.channel_ids) - set(self.channel_ids)
            if undeclared:
                raise ValueError(f"channels {sorted(undeclared)} not declared")
            rec = np.empty(len(chunk), RECORD_DTYPE)
            rec["channel"] = chunk.channels
            rec["timestamp"] = chunk.timestamps
            self._file.fh.write(rec.tobytes())
            self.n_records += len(chunk)
            self._last = int(chunk.timestamps[-1])
        self.duration_ps = max(self.duration_ps, chunk.duration_ps)

    def close(self):
        self._file.fh.seek(0)
        self._file.fh.write(_ttg_header(self.duration_ps, self.channel_ids, self.n_records,
                                        self.meta))
        self._file.commit()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._file.abort()


def _read_ttg_header(fh, path):
    lines = []
    offset = 0
    while True:
        raw = fh.readline()
        if not raw:
            raise ParseError("header not terminated", path, f"byte {offset}")
        offset += len(raw)
        line = raw.decode("ascii", errors="replace").rstrip("\n")
        lines.append(line)
        if line.strip() == "# end":
            break
        if not line.startswith("#"):
            raise ParseError("malformed header line", path, f"byte {offset - len(raw)}")
    meta, _ = _parse_header(lines, "ttg", path)
    _require_units(meta, "ps", path)
    try:
        duration = int(_require_key(meta, "duration_ps", path))
        n = int(_require_key(meta, "n_records", path))
        chans = tuple(int(c) for c in _require_key(meta, "channels", path).split(",") if c)
    except ValueError as exc:
        raise ParseError(f"bad header value: {exc}", path, "header") from exc
    return duration, chans, n, offset


def iter_timetags(path, chunk_records=DEFAULT_CHUNK_RECORDS) -> Iterator[TimeTagStream]:
    """Stream a ``.ttg`` (or ``.csv``) file as time-ordered chunks."""
    if Path(path).suffix == ".csv":
        yield read_timetags_csv(path)
        return
    with open(path, "rb") as fh:
        duration, chans, n, offset = _read_ttg_header(fh, path)
        remaining = n
        last = -1
        rec_size = RECORD_DTYPE.itemsize
        while remaining > 0:
            want = min(chunk_records, remaining)
            buf = fh.read(want * rec_size)
            if len(buf) < want * rec_size:
                done = n - remaining + len(buf) // rec_size
                raise ParseError(f"truncated: {n} records declared, {done} complete", path,
                                 f"byte {offset + done * rec_size}")
            rec = np.frombuffer(buf, RECORD_DTYPE)
            ts = rec["timestamp"]
            bad = np.flatnonzero(np.diff(ts, prepend=last) < 0)
            if bad.size:
                at = n - remaining + int(bad[0])
                raise ParseError("timestamps decrease", path, f"byte {offset + at * rec_size}")
            try:
                chunk = TimeTagStream(rec["channel"], ts, duration, chans)
            except ValueError as exc:
                raise ParseError(str(exc), path, f"byte {offset + (n - remaining) * rec_size}")
            yield chunk
            last = int(ts[-1])
            remaining -= want
        trailing = fh.read(1)
        if trailing:
            raise ParseError("data beyond declared records", path,
                             f"byte {offset + n * rec_size}")


def read_timetags(path) -> TimeTagStream:
    """Read a whole tag file (``.ttg`` binary or ``.csv`` text)."""
    if Path(path).suffix == ".csv":
        return read_timetags_csv(path)
    chunks = list(iter_timetags(path))
    with open(path, "rb") as fh:
        duration, chans, _, _ = _read_ttg_header(fh, path)
    return TimeTagStream.concatenate(chunks, duration) if chunks else TimeTagStream(
        np.zeros(0, np.uint8), np.zeros(0, np.int64), duration, chans)


def write_timetags(path, stream_or_chunks, channel_ids=None, duration_ps=None, meta=None):
    """Write a stream (or an iterable of chunks) to ``.ttg`` or ``.csv``."""
    chunks = [stream_or_chunks] if isinstance(stream_or_chunks, TimeTagStream) else stream_or_chunks
    if Path(path).suffix == ".csv":
        chunks = list(chunks)
        stream = TimeTagStream.concatenate(chunks, duration_ps)
        return write_timetags_csv(path, stream)
    chunks = iter(chunks)
    first = next(chunks, None)
    ids = channel_ids if channel_ids is not None else (first.channel_ids if first is not None else ())
    with TimeTagWriter(path, ids, duration_ps or 0, meta) as w:
        if first is not None:
            w.write(first)
        for c in chunks:
            w.write(c)
    return path


def write_timetags_csv(path, stream: TimeTagStream):
    head = _header("ttg-text", [("units", "ps"), ("duration_ps", stream.duration_ps),
                                ("channels", ",".join(map(str, stream.channel_ids)))])
    body = _io.StringIO()
    body.write(head)
    body.write("channel,timestamp_ps\n")
    for c, t in zip(stream.channels.tolist(), stream.timestamps.tolist()):
        body.write(f"{c},{t}\n")
    atomic_write(path, body.getvalue())
    return path


def read_timetags_csv(path) -> TimeTagStream:
    lines = _read_text(path)
    meta, n = _parse_header(lines, "ttg-text", path)
    _require_units(meta, "ps", path)
    if n < len(lines) and lines[n].strip() == "channel,timestamp_ps":
        n += 1
    rows = _parse_rows(lines, n, 2, path, (int, int))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 2)
    chans = tuple(int(c) for c in _require_key(meta, "channels", path).split(",") if c)
    try:
        return TimeTagStream(arr[:, 0], arr[:, 1], int(_require_key(meta, "duration_ps", path)),
                             chans)
    except ValueError as exc:
        raise ParseError(str(exc), path, "data") from exc


def read_meta(path) -> dict:
    """Header key/values of any qdcircuit file (empty for ``.npz`` maps)."""
    if Path(path).suffix == ".npz":
        return {}
    if Path(path).suffix == ".ttg":
        lines = []
        with open(path, "rb") as fh:
            for raw in fh:
                line = raw.decode("ascii", errors="replace").rstrip("\n")
                lines.append(line)
                if line.strip() == "# end" or not line.startswith("#"):
                    break
    else:
        lines = []
        with open(path) as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                lines.append(line.rstrip("\n"))
    if not lines or not lines[0].startswith("# qdcircuit-"):
        raise ParseError("missing qdcircuit header", path, "line 1")
    meta = {}
    for line in lines[1:]:
        key, _, value = line[1:].strip().partition(" ")
        if key:
            meta[key] = value.strip()
    return meta


# -- histograms, spectra, alignment tables ----------------------------------------

def write_histogram(path, hist: CorrelationHistogram, meta=None):
    items = [("units", "tau=ps"), ("bin_width_ps", _fmt(hist.bin_width_ps)),
             ("normalization", hist.normalization)]
    if hist.norm_constant is not None:
        items.append(("norm_constant", repr(hist.norm_constant)))
    items += _meta_items(meta)
    out = _io.StringIO()
    out.write(_header("histogram", items))
    if hist.normalized is None:
        out.write("tau_ps,counts\n")
        for t, c in zip(hist.tau_ps.tolist(), hist.counts.tolist()):
            out.write(f"{t!r},{c}\n")
    else:
        out.write("tau_ps,counts,normalized\n")
        for t, c, v in zip(hist.tau_ps.tolist(), hist.counts.tolist(), hist.normalized.tolist()):
            out.write(f"{t!r},{c},{v!r}\n")
    atomic_write(path, out.getvalue())
    return path


def read_histogram(path) -> CorrelationHistogram:
    lines = _read_text(path)
    meta, n = _parse_header(lines, "histogram", path)
    _require_units(meta, "tau=ps", path)
    norm = meta.get("normalization", "raw")
    ncols = 2 if norm == "raw" else 3
    if n < len(lines) and lines[n].startswith("tau_ps"):
        n += 1
    rows = _parse_rows(lines, n, ncols, path, (float, int, float))
    if not rows:
        raise ParseError("histogram has no bins", path, "data")
    cols = list(zip(*rows))
    try:
        return CorrelationHistogram(
            float(_require_key(meta, "bin_width_ps", path)), cols[0], cols[1],
            None if norm == "raw" else cols[2], norm,
            float(meta["norm_constant"]) if "norm_constant" in meta else None)
    except ValueError as exc:
        raise ParseError(str(exc), path, "data") from exc


def write_spectrum(path, spec: Spectrum):
    out = _io.StringIO()
    out.write(_header("spectrum", [("units", "wavelength=nm")]))
    out.write("wavelength_nm,intensity\n")
    for w, i in zip(spec.wavelength_nm.tolist(), spec.intensity.tolist()):
        out.write(f"{w!r},{i!r}\n")
    atomic_write(path, out.getvalue())
    return path


def read_spectrum(path) -> Spectrum:
    lines = _read_text(path)
    meta, n = _parse_header(lines, "spectrum", path)
    _require_units(meta, "wavelength=nm", path)
    if n < len(lines) and lines[n].startswith("wavelength_nm"):
        n += 1
    rows = _parse_rows(lines, n, 2, path, (float, float))
    if not rows:
        raise ParseError("spectrum has no samples", path, "data")
    wl, it = zip(*rows)
    try:
        return Spectrum(wl, it)
    except ValueError as exc:
        raise ParseError(str(exc), path, "data") from exc


_ALIGN_COLS = ("structure_id", "measured_x_nm", "measured_y_nm", "target_x_nm", "target_y_nm")


def write_alignment(path, records: Iterable[AlignmentRecord]):
    out = _io.StringIO()
    out.write(_header("alignment", [("units", "nm")]))
    out.write(",".join(_ALIGN_COLS) + "\n")
    for r in records:
        if "," in r.structure_id:
            raise ValueError("structure_id must not contain commas")
        out.write(",".join([r.structure_id] + [repr(float(getattr(r, c)))
                                               for c in _ALIGN_COLS[1:]]) + "\n")
    atomic_write(path, out.getvalue())
    return path


def read_alignment(path):
    lines = _read_text(path)
    meta, n = _parse_header(lines, "alignment", path)
    _require_units(meta, "nm", path)
    if n < len(lines) and lines[n].startswith("structure_id"):
        n += 1
    rows = _parse_rows(lines, n, 5, path, (str, float, float, float, float))
    try:
        return [AlignmentRecord(*row) for row in rows]
    except ValueError as exc:
        raise ParseError(str(exc), path, "data") from exc


# -- CL maps ---------------------------------------------------------------------------

def write_clmap(path, cmap: CLMap):
    """Text (any suffix) or binary (``.npz``) CL map."""
    if Path(path).suffix == ".npz":
        buf = _io.BytesIO()
        arrays = {"data": cmap.data, "pitch_nm": np.array(cmap.pixel_pitch_nm),
                  "origin_nm": np.array(cmap.origin_nm),
                  "version": np.array(FORMAT_VERSION), "units": np.array("nm")}
        if cmap.wavelength_nm is not None:
            arrays["wavelength_nm"] = cmap.wavelength_nm
        np.savez(buf, **arrays)
        atomic_write(path, buf.getvalue())
        return path
    items = [("units", "nm"), ("width", cmap.width), ("height", cmap.height),
             ("pitch_nm", repr(cmap.pixel_pitch_nm)),
             ("origin_nm", ",".join(repr(v) for v in cmap.origin_nm)),
             ("wavelength_nm", "none" if cmap.wavelength_nm is None
              else ",".join(repr(v) for v in cmap.wavelength_nm.tolist()))]
    out = _io.StringIO()
    out.write(_header("clmap", items))
    flat = cmap.data.reshape(cmap.height * cmap.width, -1) if cmap.is_hyperspectral else cmap.data
    for row in flat.tolist():
        out.write(",".join(repr(v) for v in row) + "\n")
    atomic_write(path, out.getvalue())
    return path


def read_clmap(path) -> CLMap:
    if Path(path).suffix == ".npz":
        try:
            with np.load(path, allow_pickle=False) as z:
                if int(z["version"]) != FORMAT_VERSION:
                    raise VersionMismatchError(f"unsupported version {int(z['version'])}", path)
                if str(z["units"]) != "nm":
                    raise UnitMismatchError(f"units {str(z['units'])!r}, expected 'nm'", path)
                wl = z["wavelength_nm"] if "wavelength_nm" in z.files else None
                return CLMap(z["data"], float(z["pitch_nm"]), tuple(z["origin_nm"]), wl)
        except (KeyError, OSError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"bad CL map archive: {exc}", path) from exc
    lines = _read_text(path)
    meta, n = _parse_header(lines, "clmap", path)
    _require_units(meta, "nm", path)
    try:
        width = int(_require_key(meta, "width", path))
        height = int(_require_key(meta, "height", path))
        pitch = float(_require_key(meta, "pitch_nm", path))
        origin = tuple(float(v) for v in _require_key(meta, "origin_nm", path).split(","))
        wl_s = _require_key(meta, "wavelength_nm", path)
        wl = None if wl_s == "none" else np.array([float(v) for v in wl_s.split(",")])
    except ValueError as exc:
        raise ParseError(f"bad header value: {exc}", path, "header") from exc
    ncols = width if wl is None else wl.size
    rows = _parse_rows(lines, n, ncols, path, [float] * ncols)
    expected = height if wl is None else height * width
    if len(rows) != expected:
        raise ParseError(f"expected {expected} data rows, got {len(rows)}", path,
                         f"line {n + len(rows) + 1}")
    data = np.array(rows, dtype=float)
    if wl is not None:
        data = data.reshape(height, width, wl.size)
    try:
        return CLMap(data, pitch, origin, wl)
    except ValueError as exc:
        raise ParseError(str(exc), path, "data") from exc


# -- configuration -------------------------------------------------------------------

_SECTIONS = {"emitter": EmitterParams, "pulsing": PulseTrain, "splitters": SplitterParams,
             "detector.1": DetectorParams, "detector.2": DetectorParams}
_SIM_KEYS = {"topology": str, "duration_s": float, "seed": int, "polarization": str,
             "hom_visibility": float, "background_rate_hz": float, "mzi_delay_ns": float}


def _typed(cls, section, items, path):
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, raw in items:
        if key not in types:
            raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
        kind = types[key]
        try:
            out[key] = int(raw) if kind in (int, "int") else float(raw) if kind in (
                float, "float") else raw
        except ValueError as exc:
            raise ConfigError(f"{path}: [{section}] {key}: {exc}") from exc
    return out


def parse_config(text, path="<config>") -> SimConfig:
    """Build a :class:`SimConfig` from INI text (sections ``[sim]``,
    ``[emitter]``, optional ``[pulsing]``, ``[splitters]``, ``[detector.1]``,
    ``[detector.2]``)."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    unknown = set(cp.sections()) - set(_SECTIONS) - {"sim"}
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    if "sim" not in cp or "emitter" not in cp:
        raise ConfigError(f"{path}: [sim] and [emitter] sections are required")
    sim = {}
    for key, raw in cp.items("sim"):
        if key not in _SIM_KEYS:
            raise ConfigError(f"{path}: unknown key {key!r} in [sim]")
        try:
            sim[key] = _SIM_KEYS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{path}: [sim] {key}: {exc}") from exc
    try:
        parts = {name: cls(**_typed(cls, name, cp.items(name), path))
                 for name, cls in _SECTIONS.items() if name in cp}
        return SimConfig(emitter=parts["emitter"], pulsing=parts.get("pulsing"),
                         splitters=parts.get("splitters", SplitterParams()),
                         detectors=(parts.get("detector.1", DetectorParams()),
                                    parts.get("detector.2", DetectorParams())), **sim)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path) -> SimConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path)


def dump_config(cfg: SimConfig) -> str:
    """Canonical INI text; ``parse_config(dump_config(c)) == c``."""
    lines = ["[sim]"]
    for key in _SIM_KEYS:
        value = getattr(cfg, key)
        if value is not None:
            lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    parts = [("emitter", cfg.emitter), ("pulsing", cfg.pulsing), ("splitters", cfg.splitters),
             ("detector.1", cfg.detectors[0]), ("detector.2", cfg.detectors[1])]
    for name, obj in parts:
        if obj is None:
            continue
        lines += ["", f"[{name}]"]
        for f in fields(obj):
            v = getattr(obj, f.name)
            lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: SimConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


__all__ = [
    "TimeTagWriter", "iter_timetags", "read_timetags", "write_timetags",
    "read_timetags_csv", "write_timetags_csv", "read_histogram", "write_histogram",
    "read_spectrum", "write_spectrum", "read_alignment", "write_alignment",
    "read_clmap", "write_clmap", "parse_config", "load_config", "dump_config",
    "config_hash", "file_sha256", "read_meta", "atomic_write", "write_json", "RECORD_DTYPE",
]
