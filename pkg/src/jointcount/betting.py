"""Betting backtests on three-way forecasts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from jointcount.errors import DataError
from jointcount.inference import OUTCOMES, ThreeWay

# expected returns closer than this are treated as equal, so that the fixed
# outcome order decides
TIE_TOL = 1e-12
DEFAULT_EPSILONS = np.round(np.arange(0, 21) * 0.05, 10)


def _probs(pred) -> np.ndarray:
    if isinstance(pred, ThreeWay):
        return pred.as_array()
    return np.asarray(pred, dtype=float)


def expected_returns(pred, odds) -> np.ndarray:
    """pi * odds - 1 for win, draw and loss."""
    o = np.asarray(odds, dtype=float)
    if np.any(o < 1.0):
        raise DataError(f"decimal odds must be at least 1, got {o.tolist()}")
    return _probs(pred) * o - 1.0


def kelly_stake(pi: float, odds: float) -> float:
    """Kelly fraction of a unit bankroll, ``max(0, (pi * odds - 1) / (odds - 1))``."""
    if odds <= 1.0:
        raise DataError("Kelly staking needs odds above 1")
    f = (pi * odds - 1.0) / (odds - 1.0)
    return min(max(0.0, f), math.nextafter(1.0, 0.0))


def choose_outcome(er: np.ndarray) -> int:
    """Index of the largest expected return; near-ties go to the earlier outcome."""
    best = float(np.max(er))
    return int(np.flatnonzero(er >= best - TIE_TOL)[0])


@dataclass
class BetLedger:
    rows: pd.DataFrame
    epsilon: float
    staking: str
    invested: float
    returned: float
    net: float

    @property
    def n_bets(self) -> int:
        return int((self.rows["stake"] > 0).sum())

    @property
    def return_ratio(self) -> float:
        return self.net / self.invested if self.invested > 0 else math.nan


def run_backtest(predictions, odds, epsilon: float, staking: str = "constant", outcomes=None,
                 match_ids=None) -> BetLedger:
    """Bet on the outcome with the largest expected return when it exceeds ``epsilon``.

    Constant staking wagers one unit; Kelly staking wagers the Kelly
    fraction of one unit, with no compounding between matches.  Matches
    with missing odds are skipped and flagged in the ledger.
    """
    if staking not in ("constant", "kelly"):
        raise DataError(f"unknown staking rule {staking!r}")
    n = len(predictions)
    if outcomes is None or len(outcomes) != n or len(odds) != n:
        raise DataError("predictions, odds and outcomes must be aligned")
    ids = list(range(n)) if match_ids is None else list(match_ids)
    rows = []
    for i in range(n):
        o = np.asarray(odds[i], dtype=float)
        res = outcomes[i] if isinstance(outcomes[i], str) else OUTCOMES[int(outcomes[i])]
        if o.shape != (3,) or np.any(np.isnan(o)):
            rows.append((ids[i], "", math.nan, 0.0, math.nan, res, 0.0, 0.0, "missing odds"))
            continue
        er = expected_returns(predictions[i], o)
        j = choose_outcome(er)
        stake = 0.0
        if er[j] > epsilon:
            if staking == "constant":
                stake = 1.0
            else:
                stake = kelly_stake(float(_probs(predictions[i])[j]), float(o[j]))
        won = OUTCOMES[j] == res
        payout = stake * o[j] if (won and stake > 0) else 0.0
        realized = stake * (o[j] - 1.0) if won else -stake
        rows.append((ids[i], OUTCOMES[j], float(er[j]), stake, float(o[j]), res, payout, realized, ""))
    df = pd.DataFrame(rows, columns=["match_id", "bet_on", "expected_return", "stake", "odds", "result",
                                     "payout", "realized", "note"])
    invested = math.fsum(df["stake"].tolist())
    returned = math.fsum(df["payout"].tolist())
    net = math.fsum(df["realized"].tolist())
    return BetLedger(df, float(epsilon), staking, invested, returned, net)


def return_curve(predictions, odds, outcomes, epsilons=DEFAULT_EPSILONS) -> pd.DataFrame:
    """Return ratios of both staking rules and the bet count for each threshold."""
    rows = []
    for eps in epsilons:
        c = run_backtest(predictions, odds, eps, "constant", outcomes)
        k = run_backtest(predictions, odds, eps, "kelly", outcomes)
        rows.append((float(eps), c.return_ratio, k.return_ratio, c.n_bets))
    return pd.DataFrame(rows, columns=["epsilon", "return_ratio_constant", "return_ratio_kelly", "n_bets"])
