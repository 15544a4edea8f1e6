"""Feature catalogs: ordered (feature_id, modality, group) entries.

:func:`audiovisual_catalog` builds the 792-column layout used for SEWA-style
feature files: 18 GeMAPS and 65 ComParE low-level descriptors from
openSMILE, followed by the 709 per-frame OpenFace 2.2 outputs (gaze, eye
landmarks, head pose, 2-D/3-D face landmarks, PDM parameters, action units).
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

MODALITIES = ("audio", "visual")

GEMAPS_LLD = (
    "Loudness", "alphaRatio", "hammarbergIndex", "slope0-500", "slope500-1500",
    "F0semitoneFrom27.5Hz", "jitterLocal", "shimmerLocaldB", "HNRdBACF",
    "logRelF0-H1-H2", "logRelF0-H1-A3", "F1frequency", "F1bandwidth",
    "F1amplitudeLogRelF0", "F2frequency", "F2amplitudeLogRelF0", "F3frequency",
    "F3amplitudeLogRelF0",
)

COMPARE_LLD = (
    ("audspec_lengthL1norm", "audspecRasta_lengthL1norm", "pcm_RMSenergy", "pcm_zcr")
    + tuple(f"audSpec_Rfilt[{i}]" for i in range(26))
    + (
        "pcm_fftMag_fband250-650", "pcm_fftMag_fband1000-4000",
        "pcm_fftMag_spectralRollOff25.0", "pcm_fftMag_spectralRollOff50.0",
        "pcm_fftMag_spectralRollOff75.0", "pcm_fftMag_spectralRollOff90.0",
        "pcm_fftMag_spectralFlux", "pcm_fftMag_spectralCentroid",
        "pcm_fftMag_spectralEntropy", "pcm_fftMag_spectralVariance",
        "pcm_fftMag_spectralSkewness", "pcm_fftMag_spectralKurtosis",
        "pcm_fftMag_spectralSlope", "pcm_fftMag_psySharpness",
        "pcm_fftMag_spectralHarmonicity",
    )
    + tuple(f"pcm_fftMag_mfcc[{i}]" for i in range(1, 15))
    + ("F0final", "voicingFinalUnclipped", "jitterLocal", "jitterDDP", "shimmerLocal", "logHNR")
)

AU_INTENSITY = (1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 45)
AU_PRESENCE = (1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 28, 45)


@dataclass(frozen=True)
class CatalogEntry:
    feature_id: str
    modality: str
    group: str


class FeatureCatalog:
    """Ordered, duplicate-free list of feature descriptors."""

    def __init__(self, entries: Iterable[CatalogEntry]):
        self.entries: tuple[CatalogEntry, ...] = tuple(entries)
        ids = [e.feature_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate feature ids in catalog: {dupes[:5]}")
        self._index = {fid: j for j, fid in enumerate(ids)}

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureCatalog) and self.entries == other.entries

    def __getitem__(self, j: int) -> CatalogEntry:
        return self.entries[j]

    @property
    def ids(self) -> list[str]:
        return [e.feature_id for e in self.entries]

    def index_of(self, feature_id: str) -> int:
        return self._index[feature_id]

    def subset(self, indices: Sequence[int]) -> "FeatureCatalog":
        for j in indices:
            if not 0 <= j < len(self):
                raise IndexError(f"feature index {j} out of range for catalog of {len(self)}")
        return FeatureCatalog(self.entries[j] for j in indices)

    def display_name(self, j: int) -> str:
        return display_name(self.entries[j].feature_id)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["feature_id", "modality", "group"])
            for e in self.entries:
                w.writerow([e.feature_id, e.modality, e.group])

    @classmethod
    def from_csv(cls, path: str | Path) -> "FeatureCatalog":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if rows and set(rows[0]) != {"feature_id", "modality", "group"}:
            raise ValueError(f"{path}: catalog header must be feature_id,modality,group")
        return cls(CatalogEntry(r["feature_id"], r["modality"], r["group"]) for r in rows)


def audiovisual_catalog() -> FeatureCatalog:
    """The 83 audio + 709 visual per-frame feature layout (D = 792)."""
    entries = [CatalogEntry(f"gemaps_{n}", "audio", "GeMAPS") for n in GEMAPS_LLD]
    entries += [CatalogEntry(f"compare_{n}", "audio", "ComParE") for n in COMPARE_LLD]

    vis: list[tuple[str, str]] = []
    vis += [(f"gaze_{e}_{a}", "gaze") for e in (0, 1) for a in "xyz"]
    vis += [("gaze_angle_x", "gaze"), ("gaze_angle_y", "gaze")]
    vis += [(f"eye_lmk_{a}_{i}", "eye_landmark") for a in "xy" for i in range(56)]
    vis += [(f"eye_lmk_{a}_{i}", "eye_landmark") for a in "XYZ" for i in range(56)]
    vis += [(f"pose_{p}", "pose") for p in ("Tx", "Ty", "Tz", "Rx", "Ry", "Rz")]
    vis += [(f"{a}_{i}", "landmark") for a in "xy" for i in range(68)]
    vis += [(f"{a}_{i}", "landmark") for a in "XYZ" for i in range(68)]
    vis += [(f"p_{r}", "PDM") for r in ("scale", "rx", "ry", "rz", "tx", "ty")]
    vis += [(f"p_{i}", "PDM") for i in range(34)]
    vis += [(f"AU{u:02d}_r", "FAU") for u in AU_INTENSITY]
    vis += [(f"AU{u:02d}_c", "FAU") for u in AU_PRESENCE]
    entries += [CatalogEntry(fid, "visual", group) for fid, group in vis]
    return FeatureCatalog(entries)


_PATTERNS = (
    (re.compile(r"^p_(\d+)$"), lambda m: f"PDM parameter {m[1]}"),
    (re.compile(r"^p_(scale|rx|ry|rz|tx|ty)$"), lambda m: f"PDM rigid {m[1]}"),
    (re.compile(r"^pose_([TR][xyz])$"), lambda m: f"Head pose {m[1]}"),
    (re.compile(r"^gaze_(\d)_([xyz])$"), lambda m: f"Gaze {m[1]} {m[2].upper()}"),
    (re.compile(r"^gaze_angle_([xy])$"), lambda m: f"Gaze angle {m[1].upper()}"),
    (re.compile(r"^AU(\d+)_r$"), lambda m: f"FAU {int(m[1])} intensity"),
    (re.compile(r"^AU(\d+)_c$"), lambda m: f"FAU {int(m[1])} presence"),
    (re.compile(r"^eye_lmk_([xy])_(\d+)$"), lambda m: f"Eye landmark {m[1]} {m[2]}"),
    (re.compile(r"^eye_lmk_([XYZ])_(\d+)$"), lambda m: f"Eye landmark 3D {m[1]} {m[2]}"),
    (re.compile(r"^([xy])_(\d+)$"), lambda m: f"Landmark {m[1].upper()} {m[2]}"),
    (re.compile(r"^([XYZ])_(\d+)$"), lambda m: f"Landmark 3D {m[1]} {m[2]}"),
)


def display_name(feature_id: str) -> str:
    """Human-readable name, e.g. ``p_10`` -> ``PDM parameter 10``."""
    for pattern, fmt in _PATTERNS:
        m = pattern.match(feature_id)
        if m:
            return fmt(m)
    return feature_id


def infer_catalog(feature_ids: Sequence[str]) -> FeatureCatalog:
    """Catalog for a bare header: known audio-visual ids keep their tags, the rest are ``unknown``."""
    known = {e.feature_id: e for e in audiovisual_catalog().entries}
    return FeatureCatalog(known.get(fid, CatalogEntry(fid, "unknown", "unknown")) for fid in feature_ids)
