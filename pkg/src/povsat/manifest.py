"""Dataset manifest: one CSV row per labelled city, pointing at its two tiles."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator

from .errors import InvalidConfigError
from .tiles import ImageTile, read_tile

HEADER = (
    "id", "country", "continent", "lat", "lon", "urban", "raw_wealth",
    "norm_wealth", "day_path", "night_path", "split",
)
SPLITS = ("train", "tune", "test")


@dataclass(frozen=True)
class ManifestRow:
    id: str
    country: str
    continent: str
    lat: float
    lon: float
    urban: bool
    raw_wealth: float
    norm_wealth: float
    day_path: str
    night_path: str
    split: str

    def tile_path(self, kind: str) -> str:
        return self.day_path if kind == "day" else self.night_path


class DatasetManifest:
    """Ordered manifest rows plus the directory their tile paths are relative to."""

    def __init__(self, rows: Iterable[ManifestRow], root="."):
        self.rows = list(rows)
        self.root = Path(root)
        seen = set()
        for row in self.rows:
            if row.id in seen:
                raise InvalidConfigError(f"duplicate example id {row.id!r}")
            seen.add(row.id)
            if not -2.0 <= row.norm_wealth <= 2.0:
                raise InvalidConfigError(f"{row.id}: norm_wealth {row.norm_wealth} outside [-2, 2]")
            if row.split not in SPLITS:
                raise InvalidConfigError(f"{row.id}: unknown split {row.split!r}")
        self._by_id = {row.id: row for row in self.rows}

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[ManifestRow]:
        return iter(self.rows)

    def __getitem__(self, example_id: str) -> ManifestRow:
        return self._by_id[example_id]

    def select(self, split: str | None = None, continent: str | None = None) -> list[ManifestRow]:
        return [
            r for r in self.rows
            if (split is None or r.split == split) and (continent is None or r.continent == continent)
        ]

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def load_tile(self, row: ManifestRow, kind: str) -> ImageTile:
        return read_tile(self.resolve(row.tile_path(kind)), kind)

    def with_splits(self, assignment: dict[str, str]) -> "DatasetManifest":
        return DatasetManifest([replace(r, split=assignment[r.country]) for r in self.rows], self.root)

    def check_files(self) -> None:
        missing = [
            str(self.resolve(p)) for r in self.rows for p in (r.day_path, r.night_path)
            if not self.resolve(p).is_file()
        ]
        if missing:
            raise FileNotFoundError(f"{len(missing)} tile file(s) missing, first: {missing[0]}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HEADER)
        for r in self.rows:
            writer.writerow([
                r.id, r.country, r.continent, repr(r.lat), repr(r.lon), int(r.urban),
                repr(r.raw_wealth), repr(r.norm_wealth), r.day_path, r.night_path, r.split,
            ])
        return buf.getvalue()

    def save(self, path) -> None:
        """Write the CSV at ``path``, rewriting tile paths relative to its directory."""
        path = Path(path)
        new_root = path.parent
        rows = self.rows
        if new_root.resolve() != self.root.resolve():
            rows = [
                replace(
                    r,
                    day_path=_rebase(self.root, new_root, r.day_path),
                    night_path=_rebase(self.root, new_root, r.night_path),
                )
                for r in rows
            ]
        text = DatasetManifest(rows, new_root).to_csv()
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)


def _rebase(old_root: Path, new_root: Path, rel: str) -> str:
    return Path(os.path.relpath((old_root / rel).resolve(), new_root.resolve())).as_posix()


def _parse_bool(text: str) -> bool:
    if text in ("1", "true", "True"):
        return True
    if text in ("0", "false", "False"):
        return False
    raise ValueError(f"not a flag: {text!r}")


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != HEADER:
            raise InvalidConfigError(f"{path}: manifest header must be {','.join(HEADER)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(HEADER):
                raise InvalidConfigError(f"{path}:{lineno}: expected {len(HEADER)} fields, got {len(rec)}")
            try:
                rows.append(ManifestRow(
                    rec[0], rec[1], rec[2], float(rec[3]), float(rec[4]), _parse_bool(rec[5]),
                    float(rec[6]), float(rec[7]), rec[8], rec[9], rec[10],
                ))
            except ValueError as exc:
                raise InvalidConfigError(f"{path}:{lineno}: {exc}") from None
    manifest = DatasetManifest(rows, path.parent)
    if check_files:
        manifest.check_files()
    return manifest
