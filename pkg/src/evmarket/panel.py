"""Zip-code-year panel ingestion and engineered regressors.

The input is one CSV row per (zip, year) with raw market and census fields;
derived fields (burden, saturation, the parking-lot instrument and the stock
lags that feed them) are computed at construction time for every record
whose predecessor year is present.

Log convention: count variables that can be zero (sales, stocks, stations,
parking, populations) are transformed with ``log(x + 1)`` everywhere in this
package so early-year zeros stay defined; strictly positive prices and
incomes use the plain natural log.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DomainError,
    DuplicateKeyError,
    EmptyDerivationError,
    LagUnavailableError,
    SchemaError,
    ValidationError,
)

PANEL_COLUMNS = (
    "zip",
    "year",
    "ev_sales",
    "ev_stock",
    "station_stock",
    "avg_ev_price",
    "median_income",
    "white_pop",
    "asian_pop",
    "oil_price",
    "parking_lots",
    "rebate_pct",
)

DEFAULT_DELTA = 0.95
DEFAULT_EPSILON = 1e-6  # floor for the saturation log denominator


@dataclass(frozen=True)
class PanelRecord:
    """One raw (zip, year) observation."""

    zip: str
    year: int
    ev_sales: float
    ev_stock: float
    station_stock: float
    avg_ev_price: float
    median_income: float
    white_pop: float
    asian_pop: float
    oil_price: float
    parking_lots: float
    rebate_pct: float

    def invariant_violations(self) -> list[str]:
        problems = []
        for name in ("ev_sales", "ev_stock", "station_stock", "parking_lots",
                     "white_pop", "asian_pop"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        for name in ("median_income", "avg_ev_price", "oil_price"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be > 0")
        if not 0.0 <= self.rebate_pct <= 1.0:
            problems.append("rebate_pct must be in [0, 1]")
        for name in PANEL_COLUMNS[2:]:
            if not math.isfinite(getattr(self, name)):
                problems.append(f"{name} must be finite")
        return problems


@dataclass(frozen=True)
class DerivedRecord:
    """Engineered fields for a record whose (zip, year-1) exists."""

    burden: float
    saturation: float
    instrument: float
    lag_ev_stock: float
    lag_station_stock: float


@dataclass(frozen=True)
class RowIssue:
    """Diagnostic for a rejected or dropped CSV row (1-based file line)."""

    line: int
    zip: str | None
    year: int | None
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}"
        if self.zip is not None:
            where += f" ({self.zip}, {self.year})"
        return f"{where}: {self.message}"


@dataclass(frozen=True)
class SaturationNormalizer:
    """Min-max bounds of the raw saturation ratio, frozen for reuse.

    Inside the estimation panel the normalization is exact; when reapplied to
    simulated years the output is clipped to [0, 1] so out-of-sample ratios
    cannot push the regressor outside its estimated range.
    """

    lo: float
    hi: float
    epsilon: float = DEFAULT_EPSILON

    @property
    def degenerate(self) -> bool:
        return not self.hi > self.lo

    def ratio(self, lag_ev_stock: float, lag_station_stock: float) -> float:
        return saturation_ratio(lag_ev_stock, lag_station_stock, self.epsilon)

    def normalize(self, ratio: float) -> float:
        if self.degenerate:
            return 0.0
        return min(max((ratio - self.lo) / (self.hi - self.lo), 0.0), 1.0)

    def saturation(self, lag_ev_stock: float, lag_station_stock: float) -> float:
        return self.normalize(self.ratio(lag_ev_stock, lag_station_stock))


def compute_burden(record: PanelRecord) -> float:
    """Affordability ratio: average EV price over median household income."""
    if record.median_income <= 0:
        raise DomainError(
            "median_income must be positive to compute burden",
            zip=record.zip, year=record.year,
        )
    return record.avg_ev_price / record.median_income


def compute_install_base(sales: float, delta: float, prev_stock: float) -> float:
    """One step of the surviving-fleet recursion ``sales + delta * prev``."""
    if not 0.0 <= delta <= 1.0:
        raise DomainError("delta must be in [0, 1]", delta=delta)
    if sales < 0 or prev_stock < 0:
        raise DomainError("sales and prev_stock must be >= 0")
    return sales + delta * prev_stock


def saturation_ratio(lag_ev_stock: float, lag_station_stock: float,
                     epsilon: float = DEFAULT_EPSILON) -> float:
    """Raw demand-gap ratio ``log(Q+1) / max(log(E+1), epsilon)``.

    The +1 shift keeps zero stocks defined and the epsilon floor keeps the
    ratio finite when a region has no stations yet; both preserve the
    faster-adoption => larger-ratio ordering.
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive", epsilon=epsilon)
    num = math.log1p(lag_ev_stock)
    den = max(math.log1p(lag_station_stock), epsilon)
    return num / den


def minmax_normalize(values: list[float]) -> tuple[list[float], float, float]:
    """Panel-wide min-max scaling; all-equal inputs map to all zeros."""
    lo = min(values)
    hi = max(values)
    if not hi > lo:
        return [0.0 for _ in values], lo, hi
    span = hi - lo
    return [(v - lo) / span for v in values], lo, hi


@dataclass
class Panel:
    """Validated records plus derived fields for every lagged (zip, year).

    Construct with :meth:`from_records` or :func:`load_panel`; instances are
    treated as immutable after construction and are safe to share across
    threads for estimation and simulation.
    """

    records: list[PanelRecord]
    derived: dict[tuple[str, int], DerivedRecord]
    years: list[int]
    zips: list[str]
    saturation_bounds: tuple[float, float] | None
    epsilon: float
    issues: list[RowIssue] = field(default_factory=list)

    @classmethod
    def from_records(cls, records: list[PanelRecord],
                     epsilon: float = DEFAULT_EPSILON,
                     issues: list[RowIssue] | None = None) -> "Panel":
        seen: dict[tuple[str, int], int] = {}
        for i, rec in enumerate(records):
            key = (rec.zip, rec.year)
            if key in seen:
                raise DuplicateKeyError(
                    f"duplicate (zip, year) = {key}",
                    first_index=seen[key], second_index=i, zip=key[0], year=key[1],
                )
            seen[key] = i
            problems = rec.invariant_violations()
            if problems:
                raise ValidationError(
                    f"record {key} violates invariants: {'; '.join(problems)}",
                    zip=rec.zip, year=rec.year, problems=problems, index=i,
                )
        years = sorted({r.year for r in records})
        zips = sorted({r.zip for r in records})
        derived, bounds = _derive(records, epsilon)
        return cls(records=list(records), derived=derived, years=years,
                   zips=zips, saturation_bounds=bounds, epsilon=epsilon,
                   issues=list(issues or []))

    def record(self, zip_code: str, year: int) -> PanelRecord:
        for rec in self.records:
            if rec.zip == zip_code and rec.year == year:
                return rec
        raise KeyError((zip_code, year))

    def derived_records(self) -> list[tuple[PanelRecord, DerivedRecord]]:
        """Record/derived pairs in record order, lagged records only."""
        out = []
        for rec in self.records:
            d = self.derived.get((rec.zip, rec.year))
            if d is not None:
                out.append((rec, d))
        return out

    def saturation_normalizer(self) -> SaturationNormalizer:
        if self.saturation_bounds is None:
            raise EmptyDerivationError("panel has no records with defined lags")
        return SaturationNormalizer(*self.saturation_bounds, epsilon=self.epsilon)

    def records_for_year(self, year: int) -> list[PanelRecord]:
        return [r for r in self.records if r.year == year]


def _derive(records: list[PanelRecord], epsilon: float
            ) -> tuple[dict[tuple[str, int], DerivedRecord], tuple[float, float] | None]:
    by_key = {(r.zip, r.year): r for r in records}
    lagged: list[tuple[PanelRecord, PanelRecord]] = []
    for rec in records:
        prev = by_key.get((rec.zip, rec.year - 1))
        if prev is not None:
            lagged.append((rec, prev))
    if not lagged:
        return {}, None

    # Exclusion sums need, per lagged year t, the station total over every
    # zip observed at t-1.
    lag_totals: dict[int, float] = {}
    for rec in records:
        lag_totals.setdefault(rec.year + 1, 0.0)
        lag_totals[rec.year + 1] += rec.station_stock

    ratios = [saturation_ratio(prev.ev_stock, prev.station_stock, epsilon)
              for _, prev in lagged]
    saturations, lo, hi = minmax_normalize(ratios)

    derived: dict[tuple[str, int], DerivedRecord] = {}
    for (rec, prev), sat in zip(lagged, saturations):
        external = lag_totals[rec.year] - prev.station_stock
        derived[(rec.zip, rec.year)] = DerivedRecord(
            burden=rec.avg_ev_price / rec.median_income,
            saturation=sat,
            instrument=rec.parking_lots * external,
            lag_ev_stock=prev.ev_stock,
            lag_station_stock=prev.station_stock,
        )
    return derived, (lo, hi)


def compute_saturation(panel: Panel, epsilon: float | None = None
                       ) -> dict[tuple[str, int], float]:
    """Recompute min-max normalized saturation for every lagged record.

    Raises EmptyDerivationError when no record has defined lags.
    """
    eps = panel.epsilon if epsilon is None else epsilon
    pairs = _lagged_pairs(panel)
    if not pairs:
        raise EmptyDerivationError("panel has no records with defined lags")
    ratios = [saturation_ratio(prev.ev_stock, prev.station_stock, eps)
              for _, prev in pairs]
    normalized, _, _ = minmax_normalize(ratios)
    return {(rec.zip, rec.year): s for (rec, _), s in zip(pairs, normalized)}


def compute_instrument(panel: Panel) -> dict[tuple[str, int], float]:
    """Parking lots times the lagged out-of-zip station total, per record.

    Only years whose predecessor year exists in the panel are covered; if no
    year qualifies the panel cannot support IV estimation and a
    LagUnavailableError lists the years lacking a predecessor.
    """
    pairs = _lagged_pairs(panel)
    if not pairs:
        missing = [y for y in panel.years if (y - 1) not in panel.years]
        raise LagUnavailableError(
            "no panel year has a predecessor year", years=missing)
    lag_totals: dict[int, float] = {}
    for rec in panel.records:
        lag_totals.setdefault(rec.year + 1, 0.0)
        lag_totals[rec.year + 1] += rec.station_stock
    out = {}
    for rec, prev in pairs:
        external = lag_totals[rec.year] - prev.station_stock
        out[(rec.zip, rec.year)] = rec.parking_lots * external
    return out


def _lagged_pairs(panel: Panel) -> list[tuple[PanelRecord, PanelRecord]]:
    by_key = {(r.zip, r.year): r for r in panel.records}
    pairs = []
    for rec in panel.records:
        prev = by_key.get((rec.zip, rec.year - 1))
        if prev is not None:
            pairs.append((rec, prev))
    return pairs


def load_panel(path, schema: dict[str, str] | None = None,
               mode: str = "strict",
               epsilon: float = DEFAULT_EPSILON) -> Panel:
    """Load and validate a panel CSV.

    Parameters
    ----------
    path : str, Path, or text file object
        CSV with the canonical header (see PANEL_COLUMNS). ``"-"`` reads
        stdin via the caller passing a file object.
    schema : dict, optional
        Maps canonical column names to the names actually used in the file,
        e.g. ``{"zip": "zcta", "ev_sales": "bev_sales"}``. Typically loaded
        from a JSON sidecar.
    mode : {"strict", "lenient"}
        Strict raises on the first class of problem found (schema, duplicate
        keys, invalid rows, listing every offending line). Lenient drops bad
        rows, keeps the first of any duplicate pair, and reports all drops in
        ``Panel.issues``.
    """
    if mode not in ("strict", "lenient"):
        raise DomainError("mode must be 'strict' or 'lenient'", mode=mode)
    if hasattr(path, "read"):
        return _load_panel_file(path, schema, mode, epsilon)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _load_panel_file(fh, schema, mode, epsilon)


def _load_panel_file(fh, schema, mode, epsilon) -> Panel:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty file: no header row")
    header = [h.strip() for h in header]

    rename = dict(schema or {})
    unknown = set(rename) - set(PANEL_COLUMNS)
    if unknown:
        raise SchemaError(f"schema maps unknown columns: {sorted(unknown)}",
                          columns=sorted(unknown))
    positions = {}
    missing = []
    for canonical in PANEL_COLUMNS:
        actual = rename.get(canonical, canonical)
        if actual in header:
            positions[canonical] = header.index(actual)
        else:
            missing.append(actual)
    if missing:
        raise SchemaError(f"missing required column(s): {missing}",
                          columns=missing)

    records: list[PanelRecord] = []
    issues: list[RowIssue] = []
    invalid: list[RowIssue] = []
    seen: dict[tuple[str, int], int] = {}
    duplicates: list[tuple[int, int, str, int]] = []

    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        zip_code = row[positions["zip"]].strip() if len(row) > positions["zip"] else ""
        problems = []
        year = None
        values = {}
        if len(row) < len(header):
            problems.append(f"expected {len(header)} fields, got {len(row)}")
        else:
            try:
                year = int(row[positions["year"]].strip())
            except ValueError:
                problems.append(f"year {row[positions['year']]!r} is not an integer")
            for name in PANEL_COLUMNS[2:]:
                raw = row[positions[name]].strip()
                try:
                    values[name] = float(raw)
                except ValueError:
                    problems.append(f"{name} {raw!r} is not numeric")
        if not zip_code:
            problems.append("zip is empty")
        if not problems:
            rec = PanelRecord(zip=zip_code, year=year, **values)
            problems = rec.invariant_violations()
        if problems:
            invalid.append(RowIssue(line_no, zip_code or None, year,
                                    "; ".join(problems)))
            continue
        key = (zip_code, year)
        if key in seen:
            duplicates.append((seen[key], line_no, zip_code, year))
            continue
        seen[key] = line_no
        records.append(rec)

    if mode == "strict":
        if invalid:
            raise ValidationError(
                f"{len(invalid)} invalid row(s): "
                + "; ".join(str(i) for i in invalid),
                rows=[i.line for i in invalid],
                details=[str(i) for i in invalid],
            )
        if duplicates:
            first, second, z, y = duplicates[0]
            raise DuplicateKeyError(
                f"duplicate (zip, year) = ({z}, {y}) at lines {first} and {second}",
                first_line=first, second_line=second, zip=z, year=y,
                all_duplicates=[(a, b) for a, b, _, _ in duplicates],
            )
    else:
        issues.extend(invalid)
        for first, second, z, y in duplicates:
            issues.append(RowIssue(second, z, y,
                                   f"duplicate of line {first}; dropped"))

    if not records:
        raise ValidationError("no valid rows in panel CSV",
                              rows=[i.line for i in invalid])
    return Panel.from_records(records, epsilon=epsilon, issues=issues)


def panel_to_csv(panel: Panel, path=None) -> str | None:
    """Write records in the canonical CSV schema; returns text if no path."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PANEL_COLUMNS)
    for rec in panel.records:
        writer.writerow([rec.zip, rec.year] + [
            _format_number(getattr(rec, name)) for name in PANEL_COLUMNS[2:]
        ])
    text = buf.getvalue()
    if path is None:
        return text
    Path(path).write_text(text, encoding="utf-8")
    return None


def _format_number(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def load_schema_sidecar(path) -> dict[str, str]:
    """Read a JSON column-remapping sidecar."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in data.items()):
        raise SchemaError("schema sidecar must map column names to column names")
    return data
