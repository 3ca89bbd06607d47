"""Price/IV ingestion, percentage returns, quantization, resampling and histograms."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date, datetime, timezone

import numpy as np

from .pid import DiscreteDistribution


class DataError(Exception):
    """Malformed or inconsistent market data input."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriceBar:
    """One close price at a UTC instant (hourly resolution)."""

    timestamp: datetime
    close: float

    def __post_init__(self):
        if not (self.close > 0 and np.isfinite(self.close)):
            raise DataError(f"non-positive price {self.close!r} at {self.timestamp}")


@dataclass(frozen=True)
class PriceSeries:
    symbol: str
    bars: tuple[PriceBar, ...]

    def __post_init__(self):
        stamps = [b.timestamp for b in self.bars]
        if any(b >= a for a, b in zip(stamps[1:], stamps)):
            raise DataError(f"{self.symbol}: timestamps not strictly increasing")

    def __len__(self) -> int:
        return len(self.bars)

    def closes(self) -> np.ndarray:
        return np.array([b.close for b in self.bars], dtype=np.float64)

    def timestamps(self) -> list[datetime]:
        return [b.timestamp for b in self.bars]


@dataclass(frozen=True)
class ReturnSeries:
    """Per-step percentage returns, one point per consecutive bar pair."""

    symbol: str
    points: tuple[tuple[datetime, float], ...]

    def __post_init__(self):
        if any(not np.isfinite(pr) for _, pr in self.points):
            raise DataError(f"{self.symbol}: non-finite return")

    def __len__(self) -> int:
        return len(self.points)

    def values(self) -> np.ndarray:
        return np.array([pr for _, pr in self.points], dtype=np.float64)

    def timestamps(self) -> list[datetime]:
        return [t for t, _ in self.points]


@dataclass(frozen=True)
class QuantizerSpec:
    """Uniform binning of returns over [lo, hi); out-of-range values clamp to edge bins."""

    lo: float = -0.128
    hi: float = 0.128
    bins: int = 64

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"lo {self.lo} must be < hi {self.hi}")
        if self.bins < 2:
            raise ValueError(f"bins must be >= 2, got {self.bins}")

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bins


@dataclass(frozen=True)
class IvSeries:
    """Daily annualized implied volatility fractions (0.45 = 45%)."""

    symbol: str
    points: tuple[tuple[date, float], ...]

    def __post_init__(self):
        dates = [d for d, _ in self.points]
        if any(b >= a for a, b in zip(dates[1:], dates)):
            raise DataError(f"{self.symbol}: IV dates not strictly increasing")
        if any(v < 0 for _, v in self.points):
            raise DataError(f"{self.symbol}: negative IV")

    def as_dict(self) -> dict[date, float]:
        return dict(self.points)


@dataclass(frozen=True)
class AlignedPanel:
    """Return matrix on a shared timestamp grid; column 0 is the target symbol."""

    timestamps: tuple[datetime, ...]
    symbols: tuple[str, ...]
    returns: np.ndarray = field(repr=False)  # [T x S] float64

    def __post_init__(self):
        if self.returns.shape != (len(self.timestamps), len(self.symbols)):
            raise DataError(
                f"panel shape {self.returns.shape} inconsistent with "
                f"{len(self.timestamps)} timestamps x {len(self.symbols)} symbols"
            )

    def __len__(self) -> int:
        return len(self.timestamps)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _parse_timestamp(raw: str, lineno: int) -> datetime:
    try:
        ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError:
        raise DataError(f"line {lineno}: unparseable timestamp {raw!r}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def load_price_csv(path, symbol: str | None = None) -> PriceSeries:
    """Load a `timestamp,close` CSV into a sorted, duplicate-checked PriceSeries."""
    sym = symbol if symbol is not None else _stem(path)
    rows = _read_csv(path, ("timestamp", "close"))
    bars = []
    for lineno, rec in rows:
        ts = _parse_timestamp(rec["timestamp"], lineno)
        try:
            close = float(rec["close"])
        except ValueError:
            raise DataError(f"line {lineno}: unparseable price {rec['close']!r}") from None
        if not (close > 0 and np.isfinite(close)):
            raise DataError(f"line {lineno}: non-positive price {rec['close']!r}")
        bars.append(PriceBar(ts, close))
    if not bars:
        raise DataError(f"{path}: no data rows")
    bars.sort(key=lambda b: b.timestamp)
    for prev, cur in zip(bars, bars[1:]):
        if prev.timestamp == cur.timestamp:
            raise DataError(f"{path}: duplicate timestamp {cur.timestamp.isoformat()}")
    return PriceSeries(sym, tuple(bars))


def load_iv_csv(path, symbol: str | None = None) -> IvSeries:
    """Load a `date,iv` CSV into a sorted IvSeries."""
    sym = symbol if symbol is not None else _stem(path)
    rows = _read_csv(path, ("date", "iv"))
    points = []
    for lineno, rec in rows:
        try:
            d = date.fromisoformat(rec["date"])
        except ValueError:
            raise DataError(f"line {lineno}: unparseable date {rec['date']!r}") from None
        try:
            iv = float(rec["iv"])
        except ValueError:
            raise DataError(f"line {lineno}: unparseable iv {rec['iv']!r}") from None
        if not (iv >= 0 and np.isfinite(iv)):
            raise DataError(f"line {lineno}: negative or non-finite iv {rec['iv']!r}")
        points.append((d, iv))
    if not points:
        raise DataError(f"{path}: no data rows")
    points.sort(key=lambda p: p[0])
    for (d0, _), (d1, _) in zip(points, points[1:]):
        if d0 == d1:
            raise DataError(f"{path}: duplicate date {d1.isoformat()}")
    return IvSeries(sym, tuple(points))


def _read_csv(path, expected_header: tuple[str, ...]):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != expected_header:
            raise DataError(
                f"{path}: expected header {','.join(expected_header)!r}, got {','.join(header)!r}"
            )
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected_header):
                raise DataError(f"line {lineno}: expected {len(expected_header)} fields, got {len(row)}")
            out.append((lineno, dict(zip(expected_header, (c.strip() for c in row)))))
        return out


def _stem(path) -> str:
    name = str(path).rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0]


# ---------------------------------------------------------------------------
# Returns, resampling, filtering
# ---------------------------------------------------------------------------


def compute_returns(series: PriceSeries, denominator: str = "current") -> ReturnSeries:
    """Percentage return per bar: (price(t) - price(t-1)) / price(t).

    `denominator="previous"` switches the divisor to price(t-1), the more common
    definition; the default divides by the current price.
    """
    if len(series) < 2:
        raise DataError(f"{series.symbol}: need >= 2 bars to compute returns")
    if denominator not in ("current", "previous"):
        raise ValueError(f"unknown denominator {denominator!r}")
    closes = series.closes()
    diffs = closes[1:] - closes[:-1]
    denom = closes[1:] if denominator == "current" else closes[:-1]
    prs = diffs / denom
    stamps = series.timestamps()[1:]
    return ReturnSeries(series.symbol, tuple(zip(stamps, prs.tolist())))


def resample_hold(series: PriceSeries, k: int) -> PriceSeries:
    """Zero-order hold over k-bar blocks anchored at the series start.

    Keeps the original timestamps; the price at index i is the input price at
    index k*floor(i/k), simulating a k-hour trade frequency on the hourly grid.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k == 1:
        return series
    bars = tuple(
        PriceBar(bar.timestamp, series.bars[k * (i // k)].close)
        for i, bar in enumerate(series.bars)
    )
    return PriceSeries(series.symbol, bars)


def lowpass_ma(series: PriceSeries, k: int) -> PriceSeries:
    """Trailing moving average of window k; shorter windows at the head."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k == 1:
        return series
    closes = series.closes()
    csum = np.concatenate(([0.0], np.cumsum(closes)))
    idx = np.arange(len(closes))
    start = np.maximum(idx - k + 1, 0)
    means = (csum[idx + 1] - csum[start]) / (idx + 1 - start)
    bars = tuple(
        PriceBar(bar.timestamp, float(m)) for bar, m in zip(series.bars, means)
    )
    return PriceSeries(series.symbol, bars)


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------


def quantize(pr: float, spec: QuantizerSpec = QuantizerSpec()) -> int:
    """Map a return to its bin index; values outside [lo, hi) clamp to the edge bins."""
    if not np.isfinite(pr):
        raise ValueError(f"non-finite return {pr!r}")
    idx = int(np.floor((pr - spec.lo) / spec.width))
    return max(0, min(spec.bins - 1, idx))


def quantize_array(prs: np.ndarray, spec: QuantizerSpec = QuantizerSpec()) -> np.ndarray:
    """Vectorized `quantize`."""
    prs = np.asarray(prs, dtype=np.float64)
    if not np.all(np.isfinite(prs)):
        raise ValueError("non-finite return in input")
    idx = np.floor((prs - spec.lo) / spec.width).astype(np.int64)
    return np.clip(idx, 0, spec.bins - 1)


def dequantize(bin_index: int, spec: QuantizerSpec = QuantizerSpec()) -> float:
    """Center of the given bin."""
    if not 0 <= bin_index < spec.bins:
        raise ValueError(f"bin index {bin_index} out of range [0, {spec.bins})")
    return spec.lo + (bin_index + 0.5) * spec.width


def bin_centers(spec: QuantizerSpec = QuantizerSpec()) -> np.ndarray:
    return spec.lo + (np.arange(spec.bins) + 0.5) * spec.width


def histogram(
    returns: ReturnSeries, spec: QuantizerSpec = QuantizerSpec(), alpha: float = 1.0
) -> DiscreteDistribution:
    """Smoothed bin histogram: p(b) = (count(b) + alpha) / (T + alpha * bins)."""
    if len(returns) == 0:
        raise DataError(f"{returns.symbol}: empty return series")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    idx = quantize_array(returns.values(), spec)
    counts = np.bincount(idx, minlength=spec.bins).astype(np.float64)
    p = (counts + alpha) / (len(returns) + alpha * spec.bins)
    return DiscreteDistribution(p)


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------


def align(series: list[ReturnSeries], min_length: int = 1) -> AlignedPanel:
    """Intersect timestamps across series; column order follows input order."""
    if not series:
        raise DataError("align requires at least one series")
    shared = set(series[0].timestamps())
    for s in series[1:]:
        shared &= set(s.timestamps())
    stamps = tuple(sorted(shared))
    if len(stamps) < min_length:
        raise DataError(
            f"aligned panel has {len(stamps)} timestamps, need at least {min_length}"
        )
    cols = []
    for s in series:
        lookup = dict(s.points)
        cols.append([lookup[t] for t in stamps])
    returns = np.array(cols, dtype=np.float64).T
    return AlignedPanel(stamps, tuple(s.symbol for s in series), returns)
