"""Dataset manifest loading and (identity, expression, pose) sampling."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from reenact.errors import ConfigurationError, DataError, StructuralError
from reenact.images import FaceImage
from reenact.landmarks import FacePart, Landmark

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class SampleKey:
    """Locates one image+landmark record."""

    identity: str
    expression: str
    pose: str


@dataclass(frozen=True)
class UlcPairSample:
    """One converter training example: retarget source expression onto the target."""

    l_target_ref: Landmark
    l_source: Landmark
    l_target_truth: Landmark
    l_source_ref: Landmark
    target: str
    source: str
    expression: str
    pose: str


class FaceDataset:
    """Validated, immutable handle over a manifest and its files."""

    def __init__(self, manifest_path: str | Path):
        self.manifest_path = Path(manifest_path)
        if not self.manifest_path.exists():
            raise DataError(f"manifest not found: {self.manifest_path}")
        try:
            doc = json.loads(self.manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{self.manifest_path}: not valid JSON ({exc})") from exc
        if doc.get("version") != MANIFEST_VERSION:
            raise DataError(f"unsupported manifest version: {doc.get('version')!r}")

        self.root = self.manifest_path.parent
        self.crop = doc.get("crop", {})
        self.reference_expression: str = doc["reference_expression"]
        self.poses: list[str] = list(doc["poses"])
        self.grouping: tuple[FacePart, ...] = tuple(
            FacePart(g["name"], tuple(g["indices"]), bool(g.get("closed", False)))
            for g in doc["grouping"]
        )

        self._records: dict[SampleKey, dict] = {}
        self._landmarks: dict[SampleKey, Landmark] = {}
        self._images: dict[SampleKey, FaceImage] = {}
        for rec in doc["records"]:
            key = SampleKey(rec["identity"], rec["expression"], rec["pose"])
            if key in self._records:
                raise DataError(f"duplicate record for {key}")
            lm_path = self.root / rec["landmarks"]
            if not lm_path.exists():
                raise DataError(f"landmark file missing: {lm_path}")
            try:
                lm = Landmark.load(lm_path)
            except StructuralError as exc:
                raise DataError(str(exc)) from exc
            img_path = self.root / rec["image"]
            if not img_path.exists():
                raise DataError(f"image file missing: {img_path}")
            self._records[key] = rec
            self._landmarks[key] = lm

        self.identities = sorted({k.identity for k in self._records})
        self.expressions = sorted({k.expression for k in self._records})
        for identity in self.identities:
            for pose in self.poses:
                ref = SampleKey(identity, self.reference_expression, pose)
                if ref not in self._records:
                    raise DataError(
                        f"identity {identity} has no reference-expression "
                        f"({self.reference_expression}) record for pose {pose}"
                    )

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> list[SampleKey]:
        return sorted(self._records, key=lambda k: (k.identity, k.expression, k.pose))

    def has(self, key: SampleKey) -> bool:
        return key in self._records

    def landmark(self, key: SampleKey) -> Landmark:
        if key not in self._landmarks:
            raise DataError(f"no record for {key}")
        return self._landmarks[key]

    def image(self, key: SampleKey) -> FaceImage:
        if key not in self._records:
            raise DataError(f"no record for {key}")
        if key not in self._images:
            self._images[key] = FaceImage.load_png(self.root / self._records[key]["image"])
        return self._images[key]

    def reference_key(self, identity: str, pose: str) -> SampleKey:
        return SampleKey(identity, self.reference_expression, pose)

    def to_manifest_json(self) -> dict:
        """Re-serialize the parsed manifest; load -> serialize is idempotent."""
        return {
            "version": MANIFEST_VERSION,
            "crop": self.crop,
            "reference_expression": self.reference_expression,
            "poses": self.poses,
            "grouping": [
                {"name": p.name, "indices": list(p.indices), "closed": p.closed}
                for p in self.grouping
            ],
            "records": [self._records[k] for k in self.records],
        }


def load_dataset(manifest_path: str | Path) -> FaceDataset:
    return FaceDataset(manifest_path)


@dataclass(frozen=True)
class PairCombo:
    """One (target, source, expression, pose) conversion task."""

    target: str
    source: str
    expression: str
    pose: str


def enumerate_pair_combos(dataset: FaceDataset) -> list[PairCombo]:
    """All ordered cross-identity conversion tasks present in the dataset."""
    combos = []
    for pose in dataset.poses:
        for target in dataset.identities:
            for source in dataset.identities:
                if target == source:
                    continue
                for expression in dataset.expressions:
                    needed = (
                        SampleKey(target, dataset.reference_expression, pose),
                        SampleKey(source, expression, pose),
                        SampleKey(target, expression, pose),
                        SampleKey(source, dataset.reference_expression, pose),
                    )
                    if all(dataset.has(k) for k in needed):
                        combos.append(PairCombo(target, source, expression, pose))
    return combos


def pair_sample_from_combo(dataset: FaceDataset, combo: PairCombo) -> UlcPairSample:
    ref = dataset.reference_expression
    return UlcPairSample(
        l_target_ref=dataset.landmark(SampleKey(combo.target, ref, combo.pose)),
        l_source=dataset.landmark(SampleKey(combo.source, combo.expression, combo.pose)),
        l_target_truth=dataset.landmark(SampleKey(combo.target, combo.expression, combo.pose)),
        l_source_ref=dataset.landmark(SampleKey(combo.source, ref, combo.pose)),
        target=combo.target,
        source=combo.source,
        expression=combo.expression,
        pose=combo.pose,
    )


def sample_ulc_pair(
    dataset: FaceDataset,
    rng: random.Random,
    combos: list[PairCombo] | None = None,
) -> UlcPairSample:
    """Draw a uniform conversion task; ``combos`` restricts to a training split."""
    if len(dataset.identities) < 2:
        raise ConfigurationError(
            "converter pair sampling needs at least 2 identities, "
            f"dataset has {len(dataset.identities)}"
        )
    if combos is None:
        combos = enumerate_pair_combos(dataset)
    if not combos:
        raise ConfigurationError("no usable conversion pairs in dataset")
    return pair_sample_from_combo(dataset, rng.choice(combos))
