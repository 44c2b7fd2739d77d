from dataclasses import replace
import json
from pathlib import Path

import pytest

from curvekit.errors import SnapshotParseError, ValidationError
from curvekit.market_data import MarketSnapshot
from curvekit.snapshot_io import benchmark_path, load_snapshot, save_snapshot, snapshot_from_dict, snapshot_to_dict


@pytest.mark.parametrize("suffix", ["json", "csv"])
def test_save_then_load_is_identity(tmp_path: Path, scenario_snapshot: MarketSnapshot, suffix: str) -> None:
    path = tmp_path / f"day.{suffix}"

    save_snapshot(scenario_snapshot, path)
    loaded = load_snapshot(path)

    assert loaded == scenario_snapshot


def test_csv_writes_benchmark_companion(tmp_path: Path, zero_coupon_snapshot: MarketSnapshot) -> None:
    path = tmp_path / "day.csv"
    save_snapshot(zero_coupon_snapshot, path)

    assert benchmark_path(path) == tmp_path / "day.benchmark.csv"
    assert benchmark_path(path).read_text(encoding="utf-8").splitlines()[0] == "tenor,rate"
    assert path.read_text(encoding="utf-8").splitlines()[0] == "# date=2024-06-03"


def test_explicit_format_overrides_suffix(tmp_path: Path, zero_coupon_snapshot: MarketSnapshot) -> None:
    path = tmp_path / "day.dat"
    save_snapshot(zero_coupon_snapshot, path, "json")

    assert load_snapshot(path, "json") == zero_coupon_snapshot
    with pytest.raises(ValidationError, match="unsupported"):
        load_snapshot(path)


def test_missing_files_raise_os_errors(tmp_path: Path, zero_coupon_snapshot: MarketSnapshot) -> None:
    with pytest.raises(FileNotFoundError):
        load_snapshot(tmp_path / "absent.json")

    path = tmp_path / "day.csv"
    save_snapshot(zero_coupon_snapshot, path)
    benchmark_path(path).unlink()
    with pytest.raises(FileNotFoundError, match="benchmark"):
        load_snapshot(path)


def test_malformed_json_is_a_parse_error(tmp_path: Path) -> None:
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")

    with pytest.raises(SnapshotParseError, match="malformed JSON"):
        load_snapshot(path)


def test_parse_error_names_bond_and_field(zero_coupon_snapshot: MarketSnapshot) -> None:
    payload = snapshot_to_dict(zero_coupon_snapshot)
    payload["bonds"][2].pop("market_price")  # type: ignore[index]

    with pytest.raises(SnapshotParseError) as exc_info:
        snapshot_from_dict(payload)

    assert exc_info.value.bond_id == "Z02"
    assert exc_info.value.field == "market_price"


def test_invalid_values_surface_as_validation_errors(tmp_path: Path, zero_coupon_snapshot: MarketSnapshot) -> None:
    payload = snapshot_to_dict(zero_coupon_snapshot)
    payload["bonds"][0]["market_price"] = -5.0  # type: ignore[index]
    path = tmp_path / "negative.json"
    path.write_text(json.dumps(payload), encoding="utf-8")

    with pytest.raises(ValidationError, match="Z00"):
        load_snapshot(path)


def test_csv_missing_columns(tmp_path: Path, zero_coupon_snapshot: MarketSnapshot) -> None:
    path = tmp_path / "day.csv"
    save_snapshot(zero_coupon_snapshot, path)
    path.write_text("# date=2024-06-03\nid,maturity\nZ00,1.0\n", encoding="utf-8")

    with pytest.raises(SnapshotParseError, match="missing columns"):
        load_snapshot(path)


@pytest.mark.parametrize("suffix", ["json", "csv"])
def test_bond_ids_with_hash_and_comma_round_trip(
    tmp_path: Path, zero_coupon_snapshot: MarketSnapshot, suffix: str
) -> None:
    ids = ["SE#0001", "#1", "A,B"]
    bonds = tuple(replace(bond, id=new_id) for bond, new_id in zip(zero_coupon_snapshot.bonds, ids))
    snapshot = replace(zero_coupon_snapshot, bonds=bonds)
    path = tmp_path / f"hash.{suffix}"

    save_snapshot(snapshot, path)
    loaded = load_snapshot(path)

    assert loaded == snapshot
    assert loaded.bond_ids == ids
