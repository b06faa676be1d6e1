"""Leave-one-tournament-out forecasts, scoring rules and a betting backtest.

Run: python3 demos/04_forecast_and_bet.py
"""

import warnings

import numpy as np

from jointcount.betting import return_curve
from jointcount.cli import bundled_path
from jointcount.data import ODDS_COLUMNS, load_matches, load_odds, parse_model_spec
from jointcount.inference import ThreeWay, cross_validate, metrics_table, rank_aggregate

warnings.simplefilter("ignore", RuntimeWarning)

model = parse_model_spec(bundled_path("worldcup_model.txt"))
data = load_matches(bundled_path("worldcup_synthetic.csv"), model)
odds = (load_odds(bundled_path("worldcup_odds.csv")).set_index("match_id")
        .reindex(data.frame["match_id"].to_numpy())[list(ODDS_COLUMNS)].to_numpy(dtype=float))

md = model.design(data)
seasons = data.frame["WorldCup"].to_numpy()
# equal-coefficient penalty on, as in the model file
results = [cross_validate(md, seasons, fam, opts=model.solver_options(), penalized=True, odds=odds)
           for fam in ("indep", "N", "F")]
table = metrics_table(results)
print(table.to_string(index=False))
print(rank_aggregate(table).to_string(index=False))

best = results[2]
m = best.matches
preds = [ThreeWay(*r) for r in m[["pi_win", "pi_draw", "pi_loss"]].to_numpy()]
curve = return_curve(preds, odds[m["row"].to_numpy()], m["outcome"].tolist())
print("\nFrank forecasts against the synthetic odds:")
print(curve.iloc[::4].to_string(index=False))
print("bets placed never increase with the threshold:", bool(np.all(np.diff(curve["n_bets"]) <= 0)))
