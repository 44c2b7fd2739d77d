import io
import json
import logging
from pathlib import Path
from typing import Literal

import pandas as pd

from curvekit.errors import SnapshotParseError, ValidationError
from curvekit.market_data import BenchmarkCurve, Bond, Cashflow, MarketSnapshot


logger = logging.getLogger(__name__)

SnapshotFormat = Literal["csv", "json"]
BOND_COLUMNS = ["id", "face_value", "maturity", "market_price", "cashflows"]
BENCHMARK_COLUMNS = ["tenor", "rate"]
DATE_PREFIX = "# date="


def resolve_format(path: Path, format: str | None) -> SnapshotFormat:
    chosen = (format or path.suffix.lstrip(".")).lower()
    if chosen not in ("csv", "json"):
        raise ValidationError(f"unsupported snapshot format '{chosen}'", field="format")
    return chosen  # type: ignore[return-value]


def benchmark_path(path: Path) -> Path:
    return path.with_name(f"{path.stem}.benchmark.csv")


def load_snapshot(path: str | Path, format: str | None = None) -> MarketSnapshot:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"snapshot file not found: {path}")
    if resolve_format(path, format) == "json":
        snapshot = _load_json(path)
    else:
        snapshot = _load_csv(path)
    logger.info("snapshot loaded", extra={"path": str(path), "bonds": len(snapshot.bonds)})
    return snapshot


def save_snapshot(snapshot: MarketSnapshot, path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    chosen = resolve_format(path, format)
    path.parent.mkdir(parents=True, exist_ok=True)
    if chosen == "json":
        with path.open("w", encoding="utf-8") as outfile:
            json.dump(snapshot_to_dict(snapshot), outfile, indent=2, sort_keys=True)
            outfile.write("\n")
    else:
        _save_csv(snapshot, path)


def snapshot_to_dict(snapshot: MarketSnapshot) -> dict[str, object]:
    return {
        "date": snapshot.date,
        "benchmark": snapshot.benchmark.to_dict(),
        "bonds": [
            {
                "id": bond.id,
                "face_value": bond.face_value,
                "maturity": bond.maturity,
                "market_price": bond.market_price,
                "cashflows": [{"time": cf.time, "amount": cf.amount} for cf in bond.cashflows],
            }
            for bond in snapshot.bonds
        ],
    }


def snapshot_from_dict(payload: dict[str, object]) -> MarketSnapshot:
    try:
        benchmark_raw = payload["benchmark"]
        benchmark = BenchmarkCurve(
            tenors=tuple(float(x) for x in benchmark_raw["tenors"]),
            rates=tuple(float(x) for x in benchmark_raw["rates"]),
        )
        bonds_raw = payload["bonds"]
        date = str(payload["date"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotParseError(f"snapshot does not match the schema: {exc}") from exc

    if not isinstance(bonds_raw, list):
        raise SnapshotParseError("bonds must be a list", field="bonds")
    bonds = [_bond_from_dict(raw, index) for index, raw in enumerate(bonds_raw)]
    return MarketSnapshot(date=date, bonds=tuple(bonds), benchmark=benchmark)


def _bond_from_dict(raw: object, index: int) -> Bond:
    if not isinstance(raw, dict):
        raise SnapshotParseError(f"bond entry {index} is not an object", field="bonds")
    bond_id = str(raw.get("id", f"#{index}"))
    field = "id"
    try:
        field = "cashflows"
        cashflows = tuple(Cashflow(time=float(cf["time"]), amount=float(cf["amount"])) for cf in raw.get("cashflows", []))
        values: dict[str, float] = {}
        for field in ("face_value", "maturity", "market_price"):
            values[field] = float(raw[field])
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotParseError(f"cannot parse value: {exc}", bond_id=bond_id, field=field) from exc
    return Bond(id=bond_id, cashflows=cashflows, **values)


def _load_json(path: Path) -> MarketSnapshot:
    try:
        with path.open("r", encoding="utf-8") as infile:
            payload = json.load(infile)
    except json.JSONDecodeError as exc:
        raise SnapshotParseError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise SnapshotParseError(f"snapshot root must be an object in {path}")
    return snapshot_from_dict(payload)


def _format_cashflows(bond: Bond) -> str:
    return ";".join(f"{cf.time!r}:{cf.amount!r}" for cf in bond.cashflows)


def _parse_cashflows(cell: str, bond_id: str) -> tuple[Cashflow, ...]:
    cell = cell.strip()
    if not cell:
        return ()
    cashflows: list[Cashflow] = []
    for item in cell.split(";"):
        try:
            time_raw, amount_raw = item.split(":")
            cashflows.append(Cashflow(time=float(time_raw), amount=float(amount_raw)))
        except ValueError as exc:
            raise SnapshotParseError(f"bad cashflow entry '{item}'", bond_id=bond_id, field="cashflows") from exc
    return tuple(cashflows)


def _save_csv(snapshot: MarketSnapshot, path: Path) -> None:
    bonds = pd.DataFrame(
        [
            {
                "id": bond.id,
                "face_value": repr(bond.face_value),
                "maturity": repr(bond.maturity),
                "market_price": repr(bond.market_price),
                "cashflows": _format_cashflows(bond),
            }
            for bond in snapshot.bonds
        ],
        columns=BOND_COLUMNS,
    )
    benchmark = pd.DataFrame(
        {
            "tenor": [repr(t) for t in snapshot.benchmark.tenors],
            "rate": [repr(r) for r in snapshot.benchmark.rates],
        },
        columns=BENCHMARK_COLUMNS,
    )
    with path.open("w", encoding="utf-8", newline="") as outfile:
        outfile.write(f"{DATE_PREFIX}{snapshot.date}\n")
        bonds.to_csv(outfile, index=False, lineterminator="\n")
    with benchmark_path(path).open("w", encoding="utf-8", newline="") as outfile:
        benchmark.to_csv(outfile, index=False, lineterminator="\n")


def _read_table(path: Path, columns: list[str]) -> pd.DataFrame:
    try:
        text = path.read_text(encoding="utf-8")
        if text.startswith(DATE_PREFIX):
            text = text.partition("\n")[2]
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except pd.errors.ParserError as exc:
        raise SnapshotParseError(f"malformed CSV in {path}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise SnapshotParseError(f"empty CSV file {path}") from exc
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise SnapshotParseError(f"{path} is missing columns {missing}")
    return frame


def _load_csv(path: Path) -> MarketSnapshot:
    first_line = path.read_text(encoding="utf-8").splitlines()[:1]
    date = first_line[0][len(DATE_PREFIX):].strip() if first_line and first_line[0].startswith(DATE_PREFIX) else path.stem

    companion = benchmark_path(path)
    if not companion.exists():
        raise FileNotFoundError(f"benchmark file not found: {companion}")
    benchmark_frame = _read_table(companion, BENCHMARK_COLUMNS)
    try:
        benchmark = BenchmarkCurve(
            tenors=tuple(float(x) for x in benchmark_frame["tenor"]),
            rates=tuple(float(x) for x in benchmark_frame["rate"]),
        )
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise SnapshotParseError(f"cannot parse benchmark in {companion}: {exc}") from exc

    frame = _read_table(path, BOND_COLUMNS)
    bonds: list[Bond] = []
    for row in frame.itertuples(index=False):
        bond_id = str(row.id)
        values: dict[str, float] = {}
        for field in ("face_value", "maturity", "market_price"):
            try:
                values[field] = float(getattr(row, field))
            except ValueError as exc:
                raise SnapshotParseError("cannot parse value", bond_id=bond_id, field=field) from exc
        bonds.append(Bond(id=bond_id, cashflows=_parse_cashflows(str(row.cashflows), bond_id), **values))
    return MarketSnapshot(date=date, bonds=tuple(bonds), benchmark=benchmark)
