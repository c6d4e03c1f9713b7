"""Monthly average volatility and correlation of a panel of daily returns."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import InsufficientDataWarning, SchemaError, ZeroVarianceWarning

logger = logging.getLogger(__name__)

ANNUALIZATION = 252
MIN_MONTH_ROWS = 15
HUBER_T = 1.345


@dataclass
class ReturnsTable:
    """Daily simple returns, one row per date and one column per ticker.

    ``dropped`` counts input rows removed because of missing values.
    """

    returns: pd.DataFrame
    dropped: int = 0

    def __post_init__(self):
        df = self.returns
        if not isinstance(df.index, pd.DatetimeIndex):
            raise ValueError("returns must be indexed by date")
        if df.shape[1] < 2:
            raise ValueError("at least two tickers are needed for correlations")
        if not df.index.is_monotonic_increasing:
            self.returns = df.sort_index()

    @property
    def tickers(self):
        return list(self.returns.columns)

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "ReturnsTable":
        full = df.apply(pd.to_numeric, errors="coerce")
        clean = full.dropna(how="any")
        dropped = len(full) - len(clean)
        if dropped:
            logger.info("dropped %d rows with missing values", dropped)
        return cls(clean, dropped)

    @classmethod
    def read_csv(cls, path) -> "ReturnsTable":
        """Read ``date,<ticker1>,<ticker2>,...`` with ISO-8601 dates."""
        df = pd.read_csv(path)
        if df.columns[0] != "date":
            raise SchemaError("first column must be 'date'", "/columns/0")
        try:
            idx = pd.to_datetime(df["date"], format="ISO8601")
        except (ValueError, TypeError) as exc:
            raise SchemaError(f"unparseable date: {exc}", "/date") from exc
        return cls.from_frame(df.drop(columns="date").set_index(idx.rename("date")))


def _avg_offdiag_corr(x):
    c = np.corrcoef(x, rowvar=False)
    iu = np.triu_indices(c.shape[0], 1)
    return float(c[iu].mean())


def monthly_vol_corr(table: ReturnsTable, *, min_rows=MIN_MONTH_ROWS,
                     annualization=ANNUALIZATION) -> pd.DataFrame:
    """Per calendar month: mean annualized volatility and mean pairwise correlation.

    Volatility is the per-asset sample standard deviation times
    ``sqrt(annualization)``, averaged over assets. Correlation is the Pearson
    coefficient averaged over unordered asset pairs. Months with fewer than
    ``min_rows`` rows, or with a constant asset, are skipped with a warning.

    Returns
    -------
    DataFrame with columns ``month``, ``avg_volatility``, ``avg_correlation``.
    """
    rows = []
    df = table.returns
    for period, grp in df.groupby(df.index.to_period("M"), sort=True):
        x = grp.to_numpy(dtype=float)
        if x.shape[0] < min_rows:
            warnings.warn(f"{period}: {x.shape[0]} rows < {min_rows}; month skipped",
                          InsufficientDataWarning, stacklevel=2)
            continue
        sd = x.std(axis=0, ddof=1)
        # rounding leaves ~1e-19 spread in a constant column
        if np.any(sd <= 1e-12 * np.max(np.abs(x), axis=0, initial=0.0)):
            warnings.warn(f"{period}: constant returns, correlation undefined; month skipped",
                          ZeroVarianceWarning, stacklevel=2)
            continue
        rows.append((str(period), float(sd.mean() * np.sqrt(annualization)),
                     _avg_offdiag_corr(x)))
    return pd.DataFrame(rows, columns=["month", "avg_volatility", "avg_correlation"])


def huber_fit(x, y, *, t=HUBER_T, maxiter=100):
    """Robust line ``y ~ intercept + slope x`` with Huber loss (IRLS).

    Returns
    -------
    slope, intercept : float
    """
    import statsmodels.api as sm

    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("need at least three points for a robust fit")
    model = sm.RLM(y, sm.add_constant(x, has_constant="add"), M=sm.robust.norms.HuberT(t=t))
    res = model.fit(maxiter=maxiter)
    return float(res.params[1]), float(res.params[0])
