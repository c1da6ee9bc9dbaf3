"""Feature files, text-embedding banks and dataset manifests.

PEYE feature file (little-endian)::

    b"PEYE" | u32 version=1 | u32 T | u32 D | T*D float32, row-major

PTXB text bank (little-endian)::

    b"PTXB" | u32 version=1 | u32 dim | u32 count |
    count * ( u32 len | len bytes UTF-8 video_id | u8 role | dim float32 )

Roles are 0 = positive, 1 = scene-modified negative, 2 = action-modified
negative.  Values are float32 on disk and float64 in memory; every reader
rejects non-finite payloads.

The manifest is UTF-8 JSON: either a list of video entries or an object
``{"videos": [...], "text_bank": "bank.ptxb"}``.  Each entry carries
``video_id``, ``feature_path``, ``video_label`` and optionally
``audio_path``, ``frame_label_path``, ``split`` and ``ambiguous``.  Paths are
relative to the manifest.  Frame labels are stored as a PEYE file with D = 1.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "FormatError",
    "FeatureSequence",
    "TextEntry",
    "TextBank",
    "Dataset",
    "SNIPPET_FRAMES",
    "ROLES",
    "write_peye",
    "read_peye",
    "read_feature_file",
    "write_text_bank",
    "read_text_bank",
    "load_text_bank",
    "write_dataset",
    "load_dataset",
]

SNIPPET_FRAMES = 16
PEYE_MAGIC = b"PEYE"
PTXB_MAGIC = b"PTXB"
VERSION = 1
ROLES = {0: "positive", 1: "scene-modified", 2: "action-modified"}
ROLE_CODES = {v: k for k, v in ROLES.items()}


class DataError(ValueError):
    """Invalid or inconsistent input data."""


class FormatError(DataError):
    def __init__(self, message: str, path=None, offset: int | None = None):
        self.path = None if path is None else str(path)
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{message}" + (f" [{', '.join(where)}]" if where else ""))


@dataclass
class FeatureSequence:
    """One video: snippet features, optional audio, labels."""

    video_id: str
    visual: np.ndarray
    audio: np.ndarray | None = None
    frame_labels: np.ndarray | None = None
    video_label: int = 0
    split: str = "train"
    ambiguous: bool = False

    def __post_init__(self):
        self.visual = np.asarray(self.visual, dtype=np.float64)
        if self.visual.ndim != 2 or self.visual.shape[0] < 1:
            raise DataError(f"{self.video_id}: visual features must be T x D with T >= 1")
        if not np.all(np.isfinite(self.visual)):
            raise DataError(f"{self.video_id}: non-finite visual features")
        if self.audio is not None:
            self.audio = np.asarray(self.audio, dtype=np.float64)
            if self.audio.ndim != 2 or self.audio.shape[0] != self.T:
                raise DataError(f"{self.video_id}: audio must be T x d_A with the visual T")
            if not np.all(np.isfinite(self.audio)):
                raise DataError(f"{self.video_id}: non-finite audio features")
        if self.frame_labels is not None:
            self.frame_labels = np.asarray(self.frame_labels).astype(np.int8).ravel()
            n = len(self.frame_labels)
            if not (SNIPPET_FRAMES * (self.T - 1) < n <= SNIPPET_FRAMES * self.T):
                raise DataError(
                    f"{self.video_id}: {n} frame labels do not fit {self.T} snippets of {SNIPPET_FRAMES} frames"
                )
            if not np.all((self.frame_labels == 0) | (self.frame_labels == 1)):
                raise DataError(f"{self.video_id}: frame labels must be 0/1")
        if self.video_label not in (0, 1):
            raise DataError(f"{self.video_id}: video_label must be 0 or 1")

    @property
    def T(self) -> int:
        return self.visual.shape[0]


@dataclass
class TextEntry:
    positive: np.ndarray | None = None
    negatives: list = field(default_factory=list)  # [(embedding, role)]


@dataclass
class TextBank:
    dim: int
    entries: dict = field(default_factory=dict)

    def add(self, video_id: str, embedding, role: str = "positive") -> None:
        e = np.asarray(embedding, dtype=np.float64).ravel()
        if e.shape[0] != self.dim:
            raise DataError(f"{video_id}: embedding width {e.shape[0]} != bank dim {self.dim}")
        if not np.all(np.isfinite(e)):
            raise DataError(f"{video_id}: non-finite text embedding")
        entry = self.entries.setdefault(video_id, TextEntry())
        if role == "positive":
            if entry.positive is not None:
                raise DataError(f"{video_id}: more than one positive text")
            entry.positive = e
        elif role in ROLE_CODES:
            entry.negatives.append((e, role))
        else:
            raise DataError(f"unknown text role {role!r}")

    def get(self, video_id: str) -> TextEntry | None:
        return self.entries.get(video_id)

    def negatives_matrix(self, video_id: str) -> np.ndarray:
        entry = self.entries.get(video_id)
        if entry is None or not entry.negatives:
            return np.zeros((0, self.dim))
        return np.stack([e for e, _ in entry.negatives])


@dataclass
class Dataset:
    videos: list
    bank: TextBank | None = None
    meta: dict = field(default_factory=dict)

    def split(self, name: str) -> list:
        return [v for v in self.videos if v.split == name]


# ---------------------------------------------------------------------------
# PEYE
# ---------------------------------------------------------------------------


def write_peye(path, matrix) -> None:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1:
        raise DataError("PEYE payload must be a T x D matrix with T >= 1")
    if not np.all(np.isfinite(m)):
        raise DataError("refusing to write non-finite values")
    header = PEYE_MAGIC + struct.pack("<III", VERSION, m.shape[0], m.shape[1])
    Path(path).write_bytes(header + m.astype("<f4").tobytes(order="C"))


def read_peye(path) -> np.ndarray:
    """Read a PEYE matrix as float64, validating header and payload."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"truncated header: expected 16 bytes, got {len(raw)}", path, len(raw))
    if raw[:4] != PEYE_MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}", path, 0)
    version, T, D = struct.unpack_from("<III", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", path, 4)
    if T < 1:
        raise FormatError("T must be >= 1", path, 8)
    if D < 1:
        raise FormatError("D must be >= 1", path, 12)
    expected = 16 + 4 * T * D
    if len(raw) != expected:
        raise FormatError(f"payload length mismatch: expected {expected} bytes, got {len(raw)}", path, len(raw))
    m = np.frombuffer(raw, dtype="<f4", offset=16).reshape(T, D)
    bad = np.flatnonzero(~np.isfinite(m))
    if bad.size:
        raise FormatError("non-finite value", path, 16 + 4 * int(bad[0]))
    return m.astype(np.float64)


def read_feature_file(path, video_id: str | None = None, video_label: int = 0) -> FeatureSequence:
    path = Path(path)
    return FeatureSequence(video_id or path.stem, read_peye(path), video_label=video_label)


# ---------------------------------------------------------------------------
# PTXB
# ---------------------------------------------------------------------------


def write_text_bank(path, bank: TextBank) -> None:
    records = []
    for vid, entry in bank.entries.items():
        items = ([(entry.positive, "positive")] if entry.positive is not None else []) + list(entry.negatives)
        for emb, role in items:
            name = vid.encode("utf-8")
            records.append(
                struct.pack("<I", len(name)) + name + struct.pack("<B", ROLE_CODES[role])
                + np.asarray(emb, dtype="<f4").tobytes()
            )
    header = PTXB_MAGIC + struct.pack("<III", VERSION, bank.dim, len(records))
    Path(path).write_bytes(header + b"".join(records))


def read_text_bank(path) -> TextBank:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"truncated header: expected 16 bytes, got {len(raw)}", path, len(raw))
    if raw[:4] != PTXB_MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}", path, 0)
    version, dim, count = struct.unpack_from("<III", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", path, 4)
    if dim < 1:
        raise FormatError("dim must be >= 1", path, 8)
    bank = TextBank(dim)
    pos = 16
    for _ in range(count):
        if pos + 4 > len(raw):
            raise FormatError("truncated record header", path, pos)
        (n,) = struct.unpack_from("<I", raw, pos)
        end = pos + 4 + n + 1 + 4 * dim
        if end > len(raw):
            raise FormatError(f"truncated record: expected {end} bytes, got {len(raw)}", path, pos)
        try:
            vid = raw[pos + 4 : pos + 4 + n].decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError("video_id is not UTF-8", path, pos + 4) from e
        role = raw[pos + 4 + n]
        if role not in ROLES:
            raise FormatError(f"unknown role code {role}", path, pos + 4 + n)
        emb = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos + 5 + n)
        if not np.all(np.isfinite(emb)):
            raise FormatError("non-finite value", path, pos + 5 + n)
        bank.add(vid, emb.astype(np.float64), ROLES[role])
        pos = end
    if pos != len(raw):
        raise FormatError(f"{len(raw) - pos} trailing bytes", path, pos)
    return bank


def load_text_bank(path, video_ids=None) -> TextBank:
    """Read a bank and check every entry refers to a known video."""
    bank = read_text_bank(path)
    if video_ids is not None:
        known = set(video_ids)
        unknown = sorted(v for v in bank.entries if v not in known)
        if unknown:
            raise DataError(f"text bank {path} references unknown video ids: {unknown[:5]}")
    return bank


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


def write_dataset(dataset: Dataset, out_dir) -> Path:
    """Write features, labels, bank and manifest under ``out_dir``."""
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    entries = []
    for v in dataset.videos:
        entry = {"video_id": v.video_id, "feature_path": f"features/{v.video_id}.peye", "video_label": int(v.video_label)}
        write_peye(out / entry["feature_path"], v.visual)
        if v.audio is not None:
            entry["audio_path"] = f"features/{v.video_id}.audio.peye"
            write_peye(out / entry["audio_path"], v.audio)
        if v.frame_labels is not None:
            entry["frame_label_path"] = f"features/{v.video_id}.labels.peye"
            write_peye(out / entry["frame_label_path"], v.frame_labels.reshape(-1, 1))
        entry["split"] = v.split
        entry["ambiguous"] = bool(v.ambiguous)
        entries.append(entry)
    manifest = {"videos": entries, "text_bank": None, "meta": dataset.meta}
    if dataset.bank is not None:
        write_text_bank(out / "bank.ptxb", dataset.bank)
        manifest["text_bank"] = "bank.ptxb"
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_dataset(manifest_path) -> Dataset:
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise DataError(f"manifest not found: {path}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"manifest {path} is not valid JSON: {e}") from e
    entries = doc if isinstance(doc, list) else doc.get("videos", [])
    root = path.parent
    videos, seen = [], set()
    for e in entries:
        try:
            vid = e["video_id"]
            visual = read_peye(root / e["feature_path"])
            label = int(e["video_label"])
        except KeyError as err:
            raise DataError(f"manifest entry missing field {err}") from err
        if vid in seen:
            raise DataError(f"duplicate video_id {vid!r}")
        seen.add(vid)
        audio = read_peye(root / e["audio_path"]) if e.get("audio_path") else None
        labels = read_peye(root / e["frame_label_path"]).ravel() if e.get("frame_label_path") else None
        videos.append(
            FeatureSequence(vid, visual, audio, labels, label, e.get("split", "train"), bool(e.get("ambiguous", False)))
        )
    if not videos:
        raise DataError(f"manifest {path} lists no videos")
    dims = {(v.visual.shape[1], None if v.audio is None else v.audio.shape[1]) for v in videos}
    if len({d[0] for d in dims}) > 1 or len({d[1] for d in dims if d[1] is not None}) > 1:
        raise DataError(f"inconsistent feature dimensions across videos: {sorted(dims, key=str)}")
    bank = None
    if isinstance(doc, dict) and doc.get("text_bank"):
        bank = load_text_bank(root / doc["text_bank"], seen)
    meta = doc.get("meta", {}) if isinstance(doc, dict) else {}
    return Dataset(videos, bank, meta or {})
