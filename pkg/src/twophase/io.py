"""On-disk formats: tables, spectra, series manifests, checkpoints and CSV outputs.

Binary files start with an 8-byte magic, a little-endian uint32 header
length and a UTF-8 JSON header, followed by little-endian float64 payloads.
Masks follow one convention everywhere: bit i (LSB first) set means
variable i is present.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .interactions import GammaSplit, InteractionSpectrum, MaskedOutputTable
from .toy import ToyNetwork

FORMAT_VERSION = 1
MASK_CONVENTION = "bit i (LSB) = variable i present"
TABLE_MAGIC = b"TPTABLE\x00"
SPECTRUM_MAGIC = b"TPSPECT\x00"
CHECKPOINT_MAGIC = b"TPCKPT\x00\x00"
_LEN = struct.Struct("<I")
_F8 = np.dtype("<f8")

ORDERS_COLUMNS = ("order", "j_pos", "j_neg", "count")
SIMILARITY_COLUMNS = ("order", "similarity")
EPOCH_COLUMNS_BASE = ("epoch", "train_loss", "test_loss", "gap", "mean_order")


class FormatError(ValueError):
    """A file does not follow the expected layout."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason


def atomic_write(path, data):
    """Write bytes or text to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _pack(magic, header, payload):
    head = _json(header).encode("utf-8")
    body = np.ascontiguousarray(payload, dtype=_F8).tobytes()
    return magic + _LEN.pack(len(head)) + head + body


def _unpack(path, raw, magic):
    if not raw.startswith(magic):
        raise FormatError(path, "bad magic bytes")
    start = len(magic) + _LEN.size
    if len(raw) < start:
        raise FormatError(path, "truncated header")
    (hlen,) = _LEN.unpack_from(raw, len(magic))
    try:
        header = json.loads(raw[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(path, f"unreadable header ({exc})") from None
    body = raw[start + hlen :]
    if len(body) % _F8.itemsize:
        raise FormatError(path, f"payload of {len(body)} bytes is not a whole number of float64 values")
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(path, f"unsupported format_version {header.get('format_version')!r}")
    return header, np.frombuffer(body, dtype=_F8).astype(np.float64)


# --- tables ------------------------------------------------------------------


def table_header(table):
    meta = dict(table.meta)
    n = table.n
    return {
        "format_version": FORMAT_VERSION,
        "n": n,
        "variable_ids": list(meta.pop("variables", range(n))),
        "mask_convention": MASK_CONVENTION,
        "score": meta.pop("score", None),
        "baseline": meta.pop("baseline", None),
        "sample_id": meta.pop("sample_id", None),
        "epoch": meta.pop("epoch", None),
        "extra": meta,
    }


def _table_from(path, header, values):
    n = header.get("n")
    if not isinstance(n, int) or not 0 <= n <= 24:
        raise FormatError(path, f"invalid n {n!r}")
    if len(values) != 1 << n:
        raise FormatError(path, f"payload has {len(values)} values, expected 2^{n} = {1 << n}")
    if not np.all(np.isfinite(values)):
        raise FormatError(path, "payload contains non-finite values")
    meta = dict(header.get("extra") or {})
    for key in ("score", "baseline", "sample_id", "epoch"):
        meta[key] = header.get(key)
    meta["variables"] = header.get("variable_ids")
    return MaskedOutputTable(values, meta)


def write_table(path, table, text=False):
    header = table_header(table)
    if text:
        doc = dict(header, values=[float(v) for v in table.values])
        return atomic_write(path, json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return atomic_write(path, _pack(TABLE_MAGIC, header, table.values))


def read_table(path):
    raw = Path(path).read_bytes()
    if raw[:1] == b"{":
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(path, f"unreadable text table ({exc})") from None
        if doc.get("format_version") != FORMAT_VERSION:
            raise FormatError(path, f"unsupported format_version {doc.get('format_version')!r}")
        try:
            values = np.asarray(doc.pop("values"), dtype=np.float64)
        except (KeyError, TypeError, ValueError):
            raise FormatError(path, "missing or non-numeric values") from None
        return _table_from(path, doc, values)
    header, values = _unpack(path, raw, TABLE_MAGIC)
    return _table_from(path, header, values)


# --- spectra -----------------------------------------------------------------


def write_spectrum(path, spectrum):
    meta = {k: v for k, v in spectrum.source_meta.items() if k != "sparsify"}
    header = {
        "format_version": FORMAT_VERSION,
        "n": spectrum.n,
        "mask_convention": MASK_CONVENTION,
        "v_empty": float(spectrum.v_empty),
        "rho": float(spectrum.split.rho),
        "payloads": ["i_and", "i_or", "gamma"],
        "meta": meta,
    }
    payload = np.concatenate([spectrum.i_and, spectrum.i_or, spectrum.split.gamma])
    return atomic_write(path, _pack(SPECTRUM_MAGIC, header, payload))


def read_spectrum(path):
    header, payload = _unpack(path, Path(path).read_bytes(), SPECTRUM_MAGIC)
    n = header.get("n")
    if not isinstance(n, int) or len(payload) != 3 << n:
        raise FormatError(path, f"payload has {len(payload)} values, expected 3 * 2^{n}")
    size = 1 << n
    i_and, i_or, gamma = payload[:size], payload[size : 2 * size], payload[2 * size :]
    split = GammaSplit(gamma.copy(), header["rho"])
    return InteractionSpectrum(n, i_and.copy(), i_or.copy(), header["v_empty"], split, header.get("meta") or {})


# --- checkpoints ---------------------------------------------------------------


def write_checkpoint(path, network, extra=None):
    header = {"format_version": FORMAT_VERSION, "sizes": list(network.sizes), "seed": network.seed, "extra": extra or {}}
    return atomic_write(path, _pack(CHECKPOINT_MAGIC, header, network.flat_params()))


def read_checkpoint(path):
    header, flat = _unpack(path, Path(path).read_bytes(), CHECKPOINT_MAGIC)
    sizes = tuple(header["sizes"])
    net = ToyNetwork.create(sizes, seed=header.get("seed") or 0)
    expected = len(net.flat_params())
    if len(flat) != expected:
        raise FormatError(path, f"payload has {len(flat)} parameters, expected {expected} for sizes {sizes}")
    net.set_flat_params(flat)
    return net


# --- series manifests ------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    epoch: int
    sample_id: int
    file: str


@dataclass(frozen=True)
class SeriesManifest:
    entries: tuple
    losses: dict
    meta: dict

    @property
    def epochs(self):
        return sorted({e.epoch for e in self.entries})

    def tables_at(self, epoch):
        return [e for e in self.entries if e.epoch == epoch]

    def to_json(self):
        doc = {
            "format_version": FORMAT_VERSION,
            "entries": [{"epoch": e.epoch, "sample_id": e.sample_id, "file": e.file} for e in self.entries],
            "losses": {str(k): [float(a), float(b)] for k, (a, b) in sorted(self.losses.items())},
            "meta": self.meta,
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"


class ManifestError(ValueError):
    pass


def write_manifest(path, manifest):
    return atomic_write(path, manifest.to_json())


def read_manifest(path, check_files=True):
    """Parse a manifest; with ``check_files`` every referenced table must parse."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: unreadable manifest ({exc})") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise ManifestError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    try:
        entries = tuple(ManifestEntry(int(e["epoch"]), int(e["sample_id"]), str(e["file"])) for e in doc["entries"])
        losses = {int(k): (float(v[0]), float(v[1])) for k, v in doc["losses"].items()}
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ManifestError(f"{path}: malformed entries or losses ({exc})") from None
    manifest = SeriesManifest(entries, losses, doc.get("meta") or {})
    by_epoch = {}
    for e in entries:
        by_epoch.setdefault(e.epoch, set()).add(e.sample_id)
    if not by_epoch:
        raise ManifestError(f"{path}: manifest lists no tables")
    samples = set.union(*by_epoch.values())
    bad = [ep for ep, ids in by_epoch.items() if ids != samples]
    if bad:
        raise ManifestError(f"{path}: epochs {sorted(bad)} do not cover every sample")
    missing = sorted(set(by_epoch) - set(losses))
    if missing:
        raise ManifestError(f"{path}: no losses for epochs {missing}")
    if check_files:
        for e in entries:
            target = path.parent / e.file
            if not target.exists():
                raise ManifestError(f"{path}: referenced table {e.file} does not exist")
            read_table(target)
    return manifest


# --- CSV -------------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, (int, np.integer)) or isinstance(x, str):
        return str(x)
    if x is None:
        return ""
    return repr(float(x))


def csv_text(schema, columns, rows):
    """CSV with a ``# schema=<name>/<version>`` comment line and fixed columns."""
    buf = io.StringIO()
    buf.write(f"# schema={schema}/{FORMAT_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def orders_csv(profile):
    rows = zip(profile.orders, profile.j_pos, profile.j_neg, profile.counts)
    return csv_text("orders", ORDERS_COLUMNS, rows)


def similarity_csv(curve):
    return csv_text("similarity", SIMILARITY_COLUMNS, sorted(curve.items()))


def epoch_columns(n):
    return EPOCH_COLUMNS_BASE + tuple(f"strength_k{k}" for k in range(1, n + 1))


def epochs_csv(records):
    n = records[0].aggregate.n
    rows = [
        [r.epoch, r.train_loss, r.test_loss, r.gap, r.mean_order] + list(r.aggregate.strength)
        for r in records
    ]
    return csv_text("epochs", epoch_columns(n), rows)


def read_csv(path):
    """Rows of a CSV written here, as a list of dicts of strings."""
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))
