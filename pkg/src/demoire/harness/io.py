"""Image files, dataset manifests and split assignment."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .. import imgcore
from ..errors import ConfigError, EmptyInputDir, MissingFiles, UnwritableOutput
from ..prng import Xoshiro256
from ..synth import SynthConfig

MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".ppm")


def read_image(path) -> np.ndarray:
    """Decode an image file to float64 RGB in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
    except FileNotFoundError as exc:
        raise MissingFiles(f"missing image {path}") from exc
    return imgcore.from_uint8(arr)


def write_png(path, img: np.ndarray) -> None:
    """Store an image as lossless 8-bit RGB PNG."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(imgcore.to_uint8(img), mode="RGB").save(path, format="PNG", optimize=False)
    except OSError as exc:
        raise UnwritableOutput(f"cannot write {path}: {exc}") from exc


def list_images(input_dir) -> list[Path]:
    """Sorted decodable image files directly inside ``input_dir``."""
    root = Path(input_dir)
    if not root.is_dir():
        raise EmptyInputDir(f"{root} is not a directory")
    found = []
    for p in sorted(root.iterdir()):
        if p.suffix.lower() not in IMAGE_SUFFIXES or not p.is_file():
            continue
        try:
            with Image.open(p) as im:
                im.verify()
        except (UnidentifiedImageError, OSError):
            continue
        found.append(p)
    if not found:
        raise EmptyInputDir(f"no decodable images in {root}")
    return found


# --------------------------------------------------------------------------
# splits
# --------------------------------------------------------------------------


def split_sizes(count: int, fractions=DEFAULT_FRACTIONS) -> tuple[int, int, int]:
    """Floor for train and val, remainder to test."""
    if len(fractions) != 3 or min(fractions) < 0 or sum(fractions) > 1 + 1e-9:
        raise ConfigError(f"split fractions must be three non-negative numbers summing to at most 1: {fractions}")
    # the epsilon absorbs representation error such as 1762 * (1234 / 1762)
    n_train = math.floor(count * fractions[0] + 1e-9)
    n_val = math.floor(count * fractions[1] + 1e-9)
    n_train = min(n_train, count)
    n_val = min(n_val, count - n_train)
    return n_train, n_val, count - n_train - n_val


def assign_splits(count: int, global_seed: int, fractions=DEFAULT_FRACTIONS) -> list[str]:
    """Split label per item index, from a seeded Fisher-Yates shuffle of the item order."""
    n_train, n_val, _ = split_sizes(count, fractions)
    order = list(range(count))
    rng = Xoshiro256(global_seed)
    for i in range(count - 1, 0, -1):
        j = rng.randint(0, i)
        order[i], order[j] = order[j], order[i]
    labels = [""] * count
    for rank, idx in enumerate(order):
        labels[idx] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return labels


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    clean_path: str
    moire_path: str
    split: str
    item_seed: int


@dataclass
class DatasetManifest:
    """Index of a synthesized dataset; paths are relative to the manifest file."""

    global_seed: int
    config_snapshot: SynthConfig
    entries: list[ManifestEntry] = field(default_factory=list)
    version: int = MANIFEST_VERSION
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ConfigError("manifest ids must be unique")
        for e in self.entries:
            if e.split not in SPLITS:
                raise ConfigError(f"entry {e.id} has unknown split {e.split!r}")

    @property
    def split_counts(self) -> dict:
        return {s: sum(e.split == s for e in self.entries) for s in SPLITS}

    def select(self, split: str) -> list[ManifestEntry]:
        if split not in SPLITS:
            raise ConfigError(f"unknown split {split!r}")
        return [e for e in self.entries if e.split == split]

    def path(self, rel: str) -> Path:
        return (self.root or Path(".")) / rel

    def validate(self) -> None:
        missing = [
            rel for e in self.entries for rel in (e.clean_path, e.moire_path) if not self.path(rel).is_file()
        ]
        if missing:
            raise MissingFiles(f"{len(missing)} manifest files missing, first: {missing[0]}")

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "global_seed": self.global_seed,
            "config_snapshot": self.config_snapshot.to_dict(),
            "split_counts": self.split_counts,
            "entries": [asdict(e) for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict, root=None) -> "DatasetManifest":
        if d.get("version") != MANIFEST_VERSION:
            raise ConfigError(f"unsupported manifest version {d.get('version')!r}")
        m = cls(
            global_seed=int(d["global_seed"]),
            config_snapshot=SynthConfig.from_dict(d["config_snapshot"]),
            entries=[ManifestEntry(**e) for e in d["entries"]],
            version=d["version"],
            root=None if root is None else Path(root),
        )
        if "split_counts" in d and d["split_counts"] != m.split_counts:
            raise ConfigError("manifest split_counts disagree with its entries")
        return m

    def write(self, path) -> None:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.to_json())
        except OSError as exc:
            raise UnwritableOutput(f"cannot write {path}: {exc}") from exc

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            text = path.read_text()
        except FileNotFoundError as exc:
            raise MissingFiles(f"manifest {path} not found") from exc
        return cls.from_dict(json.loads(text), root=path.parent)

    def load_pair(self, entry: ManifestEntry) -> tuple[np.ndarray, np.ndarray]:
        """(clean, moire) images of one entry."""
        return read_image(self.path(entry.clean_path)), read_image(self.path(entry.moire_path))
