"""Option-quote schema, CSV I/O, synthetic chains, chronological split,
z-score normalization and (C, N, D) windowing."""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateInputError, DomainError
from .pricing import bsm_delta_array, bsm_price_array
from .volatility import TRADING_DAYS, volatility_series

log = logging.getLogger(__name__)

CSV_COLUMNS = ("contract_id", "date", "ttm_years", "opt_type", "delta", "strike", "spot",
               "theo_price", "div_rate", "rf_rate", "garch_vol", "target_price")
FEATURES = CSV_COLUMNS[2:11]
N_FEATURES = len(FEATURES)
CHANNELS = 1


@dataclass(frozen=True)
class OptionQuote:
    contract_id: str
    date: dt.date
    time_to_maturity: float
    option_type: int
    delta: float
    strike: float
    spot: float
    theoretical_price: float
    dividend_rate: float
    risk_free_rate: float
    garch_vol: float
    target_price: float

    def problems(self) -> list[str]:
        out = []
        nums = self.features() + (self.target_price,)
        if not all(math.isfinite(v) for v in nums):
            out.append("non-finite value")
        if self.time_to_maturity < 0:
            out.append("ttm_years < 0")
        if self.option_type not in (1, -1):
            out.append("opt_type must be +1 (call) or -1 (put)")
        if not self.strike > 0:
            out.append("strike <= 0")
        if not self.spot > 0:
            out.append("spot <= 0")
        if not self.garch_vol > 0:
            out.append("garch_vol <= 0")
        return out

    def features(self) -> tuple:
        return (self.time_to_maturity, float(self.option_type), self.delta, self.strike,
                self.spot, self.theoretical_price, self.dividend_rate, self.risk_free_rate,
                self.garch_vol)


# --- CSV -----------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, quotes) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for q in quotes:
            w.writerow([q.contract_id, q.date.isoformat(), _fmt(q.time_to_maturity),
                        q.option_type, _fmt(q.delta), _fmt(q.strike), _fmt(q.spot),
                        _fmt(q.theoretical_price), _fmt(q.dividend_rate),
                        _fmt(q.risk_free_rate), _fmt(q.garch_vol), _fmt(q.target_price)])
    return path


def load_csv_report(path) -> tuple[list[OptionQuote], list[str]]:
    """Parse a quote CSV. Returns the valid quotes and per-row rejection notes."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        pos = {c: header.index(c) for c in CSV_COLUMNS}
        quotes, rejected = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                q = OptionQuote(
                    contract_id=row[pos["contract_id"]],
                    date=dt.date.fromisoformat(row[pos["date"]]),
                    time_to_maturity=float(row[pos["ttm_years"]]),
                    option_type=int(float(row[pos["opt_type"]])),
                    delta=float(row[pos["delta"]]),
                    strike=float(row[pos["strike"]]),
                    spot=float(row[pos["spot"]]),
                    theoretical_price=float(row[pos["theo_price"]]),
                    dividend_rate=float(row[pos["div_rate"]]),
                    risk_free_rate=float(row[pos["rf_rate"]]),
                    garch_vol=float(row[pos["garch_vol"]]),
                    target_price=float(row[pos["target_price"]]),
                )
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: cannot parse row ({exc})") from None
            bad = q.problems()
            if bad:
                rejected.append(f"{path}:{lineno}: rejected ({'; '.join(bad)})")
            else:
                quotes.append(q)
    return quotes, rejected


def load_csv(path) -> list[OptionQuote]:
    quotes, rejected = load_csv_report(path)
    for msg in rejected:
        log.warning(msg)
    if not quotes and not rejected:
        log.warning("%s: no data rows", path)
    return quotes


# --- synthetic generator ---------------------------------------------------------

@dataclass
class GeneratorConfig:
    """Synthetic option-chain settings. All keys may appear in a flat config file."""

    start_date: dt.date = dt.date(2020, 1, 1)
    end_date: dt.date = dt.date(2020, 12, 31)
    issue_anchor: dt.date = dt.date(2020, 8, 31)
    issue_every: int = 10                  # business days between issue dates
    life_days: int = 30                    # business days from issue to expiry
    moneyness: tuple = (0.9, 0.95, 1.0, 1.05, 1.1)
    strike_step: float = 0.05
    spot0: float = 4.0
    drift: float = 0.08
    volatility: float = 0.22
    history_days: int = 500                # pre-sample days for the GARCH fit
    rf_low: float = 0.015
    rf_high: float = 0.03
    div_monthly_low: float = 0.0005
    div_monthly_high: float = 0.0030
    div_to_annual: float = 12.0
    noise_level: float = 0.05
    price_tick: float = 0.0                # > 0 rounds market prices to the tick, floor one tick
    trading_days: int = TRADING_DAYS

    def validate(self) -> "GeneratorConfig":
        if self.end_date <= self.start_date:
            raise DomainError("end_date must be after start_date")
        if self.issue_every < 1 or self.life_days < 1:
            raise DomainError("issue_every and life_days must be >= 1")
        if not self.moneyness:
            raise DomainError("strike grid is empty (zero contracts)")
        if self.spot0 <= 0 or self.volatility < 0 or self.noise_level < 0:
            raise DomainError("invalid GBM or noise parameters")
        if self.history_days < 100:
            raise DomainError("history_days must be >= 100 for the GARCH fit")
        return self

    @classmethod
    def from_mapping(cls, mapping: dict) -> "GeneratorConfig":
        kwargs = {}
        known = {f.name: f for f in fields(cls)}
        for key, raw in mapping.items():
            if key not in known:
                continue
            default = getattr(cls(), key)
            kwargs[key] = _coerce(raw, default)
        return cls(**kwargs)

    def as_mapping(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(raw, default):
    if not isinstance(raw, str):
        return raw
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, dt.date):
        return dt.date.fromisoformat(raw.strip())
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(float(x) for x in raw.replace(",", " ").split())
    return raw


def business_days(start: dt.date, end: dt.date) -> list[dt.date]:
    days = np.arange(np.datetime64(start), np.datetime64(end) + 1)
    return [d.astype(object) for d in days[np.is_busday(days)]]


@dataclass
class SyntheticMarket:
    quotes: list
    dates: list
    spots: np.ndarray
    log_returns: np.ndarray
    garch: object
    sigma: np.ndarray


def generate_synthetic(config: GeneratorConfig, seed: int) -> list[OptionQuote]:
    return generate_market(config, seed).quotes


def generate_market(config: GeneratorConfig, seed: int) -> SyntheticMarket:
    """One GBM underlying, staggered call/put issues on a moneyness grid.

    Market prices are the dividend-adjusted closed-form price times
    ``1 + eta`` with ``eta ~ N(0, noise_level^2)``. Volatility is a GARCH(1,1)
    fit on the simulated daily log returns (history included).
    """
    cfg = config.validate()
    rng = np.random.default_rng(seed)
    dates = business_days(cfg.start_date, cfg.end_date)
    if not dates:
        raise DomainError("date range contains no business days")
    n_hist, n = cfg.history_days, len(dates)
    step = 1.0 / cfg.trading_days
    z = rng.standard_normal(n_hist + n)
    log_ret = (cfg.drift - 0.5 * cfg.volatility ** 2) * step + cfg.volatility * math.sqrt(step) * z
    path = cfg.spot0 * np.exp(np.cumsum(log_ret) - log_ret[:n_hist].sum())
    spots = path[n_hist:]
    first = np.busday_offset(np.datetime64(dates[0]), -n_hist, roll="forward")
    hist_dates = business_days(first.astype(object), dates[0] - dt.timedelta(days=1))
    garch, vols = volatility_series(hist_dates + dates, log_ret, trading_days=cfg.trading_days)
    sigma = vols.sigma[n_hist:]

    months = sorted({(d.year, d.month) for d in dates})
    rf_by_month = dict(zip(months, rng.uniform(cfg.rf_low, cfg.rf_high, len(months))))
    div_by_month = dict(zip(months, rng.uniform(cfg.div_monthly_low, cfg.div_monthly_high,
                                                len(months))))

    anchor = _nearest_index(dates, cfg.issue_anchor)
    issue_idx = [i for i in range(n) if (i - anchor) % cfg.issue_every == 0]
    all_days = business_days(cfg.start_date, cfg.end_date + dt.timedelta(days=3 * cfg.life_days))

    rows = []
    for i0 in issue_idx:
        issue = dates[i0]
        expiry = all_days[all_days.index(issue) + cfg.life_days]
        for m in cfg.moneyness:
            strike = max(round(spots[i0] * m / cfg.strike_step) * cfg.strike_step, cfg.strike_step)
            strike = round(strike, 10)
            for sign in (1, -1):
                cid = f"{'C' if sign > 0 else 'P'}{issue:%Y%m%d}-K{strike:g}"
                for i in range(i0, n):
                    if dates[i] >= expiry:
                        break
                    rows.append((cid, i, (expiry - dates[i]).days / 365.0, sign, strike))

    idx = np.array([r[1] for r in rows])
    ttm = np.array([r[2] for r in rows])
    kind = np.array([r[3] for r in rows], dtype=float)
    strike = np.array([r[4] for r in rows])
    spot = spots[idx]
    vol = sigma[idx]
    rf = np.array([rf_by_month[(dates[i].year, dates[i].month)] for i in idx])
    div_m = np.array([div_by_month[(dates[i].year, dates[i].month)] for i in idx])
    q = div_m * cfg.div_to_annual
    theo = bsm_price_array(spot, strike, rf, q, vol, ttm, kind)
    delta = bsm_delta_array(spot, strike, rf, q, vol, ttm, kind)
    noise = rng.normal(0.0, cfg.noise_level, size=len(rows)) if cfg.noise_level > 0 else 0.0
    target = theo * (1.0 + noise)
    if cfg.price_tick > 0:
        target = np.maximum(np.round(target / cfg.price_tick) * cfg.price_tick, cfg.price_tick)

    quotes = [OptionQuote(r[0], dates[r[1]], float(ttm[j]), int(r[3]), float(delta[j]),
                          float(strike[j]), float(spot[j]), float(theo[j]), float(div_m[j]),
                          float(rf[j]), float(vol[j]), float(target[j]))
              for j, r in enumerate(rows)]
    return SyntheticMarket(sort_quotes(quotes), dates, spots, log_ret[n_hist:], garch, sigma)


def _nearest_index(dates, target) -> int:
    return min(range(len(dates)), key=lambda i: (abs((dates[i] - target).days), i))


def sort_quotes(quotes):
    return sorted(quotes, key=lambda q: (q.date, q.contract_id))


# --- split / normalization / windows --------------------------------------------

@dataclass
class DatasetSplit:
    train: list
    test: list
    cutoff: dt.date


def split_by_cutoff(quotes, cutoff: dt.date) -> DatasetSplit:
    """Partition by observation date only: date <= cutoff goes to train.

    A contract alive across the cutoff lands on both sides; one issued on
    the cutoff date contributes a single training observation.
    """
    if not quotes:
        raise DataError("no quotes to split")
    ordered = sort_quotes(quotes)
    return DatasetSplit([q for q in ordered if q.date <= cutoff],
                        [q for q in ordered if q.date > cutoff], cutoff)


def feature_matrix(quotes) -> np.ndarray:
    return np.array([q.features() for q in quotes], dtype=float).reshape(-1, N_FEATURES)


def target_vector(quotes) -> np.ndarray:
    return np.array([q.target_price for q in quotes], dtype=float)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    target_mean: float
    target_std: float

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean

    def apply_target(self, y):
        return (np.asarray(y, dtype=float) - self.target_mean) / self.target_std

    def invert_target(self, z):
        return np.asarray(z, dtype=float) * self.target_std + self.target_mean


def fit_norm(train_quotes) -> NormStats:
    """Population (1/n) mean and std per feature, from the training side only."""
    x = feature_matrix(train_quotes)
    y = target_vector(train_quotes)
    if x.shape[0] == 0:
        raise DataError("cannot fit normalization on an empty training set")
    std = x.std(axis=0)
    for name, s in zip(FEATURES, std):
        if not s > 0:
            raise DegenerateInputError(f"feature {name!r} has zero variance in the training set")
    if not y.std() > 0:
        raise DegenerateInputError("target_price has zero variance in the training set")
    return NormStats(x.mean(axis=0), std, float(y.mean()), float(y.std()))


def apply_norm(stats: NormStats, quotes) -> tuple[np.ndarray, np.ndarray]:
    return stats.apply(feature_matrix(quotes)), stats.apply_target(target_vector(quotes))


@dataclass(frozen=True)
class WindowedSample:
    features: np.ndarray      # [C, N, D]
    label: float


@dataclass
class WindowedSet:
    """Windows of one split side, ordered by (final date, contract id)."""

    features: np.ndarray      # [S, C, N, D]
    labels: np.ndarray        # [S] normalized target of the last observation
    last: list                # OptionQuote at each window's final step
    dropped_contracts: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> WindowedSample:
        return WindowedSample(self.features[i], float(self.labels[i]))


def _window_side(quotes, stats: NormStats, n: int) -> WindowedSet:
    by_contract: dict[str, list] = {}
    for q in quotes:
        by_contract.setdefault(q.contract_id, []).append(q)
    feats, labels, last, dropped = [], [], [], 0
    for cid in sorted(by_contract):
        series = sorted(by_contract[cid], key=lambda q: q.date)
        if len(series) < n:
            dropped += 1
            continue
        x, y = apply_norm(stats, series)
        for end in range(n, len(series) + 1):
            feats.append(x[end - n:end])
            labels.append(y[end - 1])
            last.append(series[end - 1])
    order = sorted(range(len(last)), key=lambda i: (last[i].date, last[i].contract_id))
    if feats:
        f = np.stack([feats[i] for i in order])[:, None, :, :]
    else:
        f = np.zeros((0, CHANNELS, n, N_FEATURES))
    return WindowedSet(f, np.array([labels[i] for i in order]), [last[i] for i in order],
                       dropped, {"window": n, "channels": CHANNELS})


def window(split: DatasetSplit, stats: NormStats, n: int) -> tuple[WindowedSet, WindowedSet]:
    """Sliding windows of ``n`` consecutive observations per contract and side."""
    if n < 1:
        raise DomainError("window length must be >= 1")
    return _window_side(split.train, stats, n), _window_side(split.test, stats, n)
