"""
Line-oriented dataset manifest (UTF-8, LF).

    @class<TAB>index<TAB>name
    @proportions<TAB>0.8<TAB>0.1<TAB>0.1
    @split<TAB>train
    image_id<TAB>relative_path<TAB>class_index<TAB>fixation_file
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

from engine.errors import ManifestError

SPLITS = ("train", "val", "test")
DEFAULT_PROPORTIONS = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    relative_path: str
    class_index: int
    fixation_file: str


@dataclass
class Manifest:
    root: Path
    classes: List[str] = field(default_factory=list)
    splits: Dict[str, List[ManifestEntry]] = field(default_factory=lambda: {s: [] for s in SPLITS})
    proportions: Tuple[float, float, float] = DEFAULT_PROPORTIONS

    @property
    def n_classes(self):
        return len(self.classes)

    def entries(self, split) -> List[ManifestEntry]:
        if split not in self.splits:
            raise ManifestError(f"unknown split {split!r}")
        return self.splits[split]

    def all_entries(self) -> List[ManifestEntry]:
        return [e for s in SPLITS for e in self.splits.get(s, [])]

    def validate(self, path=None):
        seen = {}
        for split in SPLITS:
            for entry in self.splits.get(split, []):
                if entry.image_id in seen:
                    raise ManifestError(
                        f"image {entry.image_id!r} appears in both {seen[entry.image_id]} and {split}", path
                    )
                seen[entry.image_id] = split
                if not 0 <= entry.class_index < self.n_classes:
                    raise ManifestError(
                        f"image {entry.image_id!r} has class {entry.class_index}, manifest has {self.n_classes}", path
                    )
        total = len(seen)
        if total and self.proportions:
            # per class, rounding plus the one-sample minimum for val and test
            tolerance = max(1.0, 1.5 * self.n_classes)
            for split, share in zip(SPLITS, self.proportions):
                count = len(self.splits.get(split, []))
                if abs(count - share * total) > tolerance:
                    raise ManifestError(
                        f"split {split} has {count} of {total} images, recorded proportion {share}", path
                    )
        return self


def load_manifest(path) -> Manifest:
    path = Path(path)
    manifest = Manifest(root=path.parent, splits={s: [] for s in SPLITS})
    declared = {}
    current = None
    with open(path, encoding="utf-8", newline="\n") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields_ = line.split("\t")
            if fields_[0] == "@class":
                if len(fields_) != 3 or not fields_[1].isdigit():
                    raise ManifestError("expected @class<TAB>index<TAB>name", path, line_number)
                declared[int(fields_[1])] = fields_[2]
            elif fields_[0] == "@proportions":
                try:
                    shares = tuple(float(v) for v in fields_[1:])
                except ValueError as exc:
                    raise ManifestError("non-numeric proportion", path, line_number) from exc
                if len(shares) != 3 or abs(sum(shares) - 1.0) > 1e-9:
                    raise ManifestError("expected three proportions summing to 1", path, line_number)
                manifest.proportions = shares
            elif fields_[0] == "@split":
                if len(fields_) != 2 or fields_[1] not in SPLITS:
                    raise ManifestError(f"expected @split<TAB>one of {SPLITS}", path, line_number)
                current = fields_[1]
            elif fields_[0].startswith("@"):
                raise ManifestError(f"unknown directive {fields_[0]!r}", path, line_number)
            else:
                if current is None:
                    raise ManifestError("sample line before any @split directive", path, line_number)
                if len(fields_) != 4:
                    raise ManifestError(f"expected 4 tab-separated fields, got {len(fields_)}", path, line_number)
                image_id, rel, cls, fix = fields_
                try:
                    class_index = int(cls)
                except ValueError as exc:
                    raise ManifestError(f"class index {cls!r} is not an integer", path, line_number) from exc
                manifest.splits[current].append(ManifestEntry(image_id, rel, class_index, fix))

    if sorted(declared) != list(range(len(declared))):
        raise ManifestError("class indices must be 0..n-1 without gaps", path)
    manifest.classes = [declared[i] for i in range(len(declared))]
    return manifest.validate(path)


def save_manifest(manifest: Manifest, path):
    lines = [f"@class\t{i}\t{name}" for i, name in enumerate(manifest.classes)]
    lines.append("@proportions\t" + "\t".join(repr(float(p)) for p in manifest.proportions))
    for split in SPLITS:
        lines.append(f"@split\t{split}")
        for e in manifest.splits.get(split, []):
            lines.append(f"{e.image_id}\t{e.relative_path}\t{e.class_index}\t{e.fixation_file}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
