import numpy as np
import pytest

from povsat.errors import InvalidConfigError
from povsat.manifest import HEADER, DatasetManifest, ManifestRow, load_manifest
from povsat.tiles import ImageTile, write_tile


def _world(tmp_path, n=3):
    rows = []
    for i in range(n):
        day, night = f"day/d{i}.ppm", f"night/n{i}.pgm"
        (tmp_path / "day").mkdir(exist_ok=True)
        (tmp_path / "night").mkdir(exist_ok=True)
        write_tile(ImageTile(f"d{i}", "day", np.full((2, 2, 3), i, np.uint8)), tmp_path / day)
        write_tile(ImageTile(f"n{i}", "night", np.full((2, 2, 1), i, np.uint8)), tmp_path / night)
        rows.append(ManifestRow(f"c{i}", f"K{i}", "Asia", 1.0 + i / 3, -2.5, i % 2 == 0,
                                0.1 * i, -1.0 + i, day, night, "train"))
    return DatasetManifest(rows, tmp_path)


def test_save_load_round_trip(tmp_path):
    m = _world(tmp_path)
    m.save(tmp_path / "manifest.csv")
    back = load_manifest(tmp_path / "manifest.csv")
    assert back.rows == m.rows
    assert (tmp_path / "manifest.csv").read_text().splitlines()[0] == ",".join(HEADER)
    assert back.load_tile(back["c2"], "night").pixels.max() == 2


def test_save_elsewhere_rebases_paths(tmp_path):
    m = _world(tmp_path)
    (tmp_path / "sub").mkdir()
    m.save(tmp_path / "sub" / "m.csv")
    back = load_manifest(tmp_path / "sub" / "m.csv")
    assert back["c0"].night_path == "../night/n0.pgm"


def test_missing_tile_file(tmp_path):
    m = _world(tmp_path)
    m.save(tmp_path / "manifest.csv")
    (tmp_path / "night" / "n1.pgm").unlink()
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path / "manifest.csv")


def test_duplicate_ids_and_range(tmp_path):
    row = ManifestRow("a", "K", "Asia", 0, 0, True, 0, 0, "d", "n", "train")
    with pytest.raises(InvalidConfigError):
        DatasetManifest([row, row])
    from dataclasses import replace
    with pytest.raises(InvalidConfigError):
        DatasetManifest([replace(row, norm_wealth=2.5)])
    with pytest.raises(InvalidConfigError):
        DatasetManifest([replace(row, split="validation")])


def test_bad_line_is_reported_with_number(tmp_path):
    m = _world(tmp_path)
    m.save(tmp_path / "manifest.csv")
    lines = (tmp_path / "manifest.csv").read_text().splitlines()
    lines[2] = lines[2].replace("Asia,", "Asia,notanumber,", 1)
    (tmp_path / "manifest.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(InvalidConfigError, match=":3:"):
        load_manifest(tmp_path / "manifest.csv")


def test_select_and_with_splits(tmp_path):
    m = _world(tmp_path).with_splits({"K0": "test", "K1": "tune", "K2": "train"})
    assert [r.id for r in m.select("test")] == ["c0"]
    assert len(m.select(continent="Asia")) == 3 and m.select(continent="Europe") == []
