"""Match data ingestion, model specification files and CSV serialisation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from jointcount.copulas import get_copula
from jointcount.errors import ConfigError, DataError, StructuralError
from jointcount.joint import ModelData
from jointcount.margins import MarginSpec

FLOAT_FORMAT = "%.17g"
ID_COLUMNS = ("match_id", "Team1", "Team2")
ODDS_COLUMNS = ("odds_win", "odds_draw", "odds_loss")


@dataclass
class Dataset:
    """Typed match table.

    Attributes
    ----------
    frame : DataFrame
        Columns as loaded; responses are integer typed.
    response1, response2 : str
        Names of the two count columns.
    categorical : dict
        Column name -> sorted levels; the first level is the reference and
        gets no indicator.
    notes : list of str
        Informational messages produced while loading.
    """

    frame: pd.DataFrame
    response1: str = "y1"
    response2: str = "y2"
    categorical: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.frame)

    @property
    def y1(self) -> np.ndarray:
        return self.frame[self.response1].to_numpy(dtype=np.int64)

    @property
    def y2(self) -> np.ndarray:
        return self.frame[self.response2].to_numpy(dtype=np.int64)

    def indicator_names(self, column: str) -> list:
        levels = self.categorical[column]
        return [f"{column}{lev}" for lev in levels[1:]]

    def resolve(self, name: str) -> list:
        """Design column names produced by ``name``."""
        if name in self.categorical:
            return self.indicator_names(name)
        for col, levels in self.categorical.items():
            if name in self.indicator_names(col):
                return [name]
        if name not in self.frame.columns or name in (self.response1, self.response2):
            raise StructuralError(f"covariate column {name!r} is not in the dataset")
        if not pd.api.types.is_numeric_dtype(self.frame[name]):
            raise StructuralError(f"covariate column {name!r} is not numeric")
        return [name]

    def column_values(self, name: str) -> np.ndarray:
        for col, levels in self.categorical.items():
            if name in self.indicator_names(col):
                lev = name[len(col):]
                _check_missing(self.frame, col)
                return (self.frame[col].astype(str) == lev).to_numpy(dtype=float)
        _check_missing(self.frame, name)
        return self.frame[name].to_numpy(dtype=float)

    def subset(self, mask) -> "Dataset":
        return replace(self, frame=self.frame.loc[np.asarray(mask)].reset_index(drop=True), notes=list(self.notes))

    def odds(self) -> np.ndarray | None:
        if all(c in self.frame.columns for c in ODDS_COLUMNS):
            return self.frame[list(ODDS_COLUMNS)].to_numpy(dtype=float)
        return None


def _check_missing(frame: pd.DataFrame, col: str) -> None:
    miss = frame[col].isna().to_numpy()
    if miss.any():
        i = int(np.flatnonzero(miss)[0])
        raise DataError(f"missing value in column {col!r} at data row {i + 1}")


@dataclass(frozen=True)
class ModelSpec:
    """Equations of a bivariate count model.

    The copula equation is intercept only.  With ``linear_equal`` the two
    margins must list the same number of covariates, paired by position.
    """

    margin1: MarginSpec
    margin2: MarginSpec
    family: str = "N"
    linear_equal: bool = False
    xi: float = 0.0
    response1: str = "y1"
    response2: str = "y2"
    copula_equation: str = "~ 1"
    solver: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "family", get_copula(self.family).code)
        if self.linear_equal and self.margin1.p != self.margin2.p:
            raise StructuralError(
                f"linear_equal needs equal covariate counts, got {self.margin1.p} and {self.margin2.p}"
            )
        if not self.xi >= 0:
            raise ConfigError("xi must be nonnegative")

    @property
    def p(self) -> int:
        return self.margin1.p

    def solver_options(self, **overrides):
        from jointcount.solver import SolverOptions

        kw = dict(self.solver)
        kw.setdefault("xi", self.xi if self.linear_equal else 0.0)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return SolverOptions(**kw)

    def design(self, data: Dataset) -> ModelData:
        """Response vectors and design matrices with intercept columns."""
        for r in (self.response1, self.response2):
            if r not in data.frame.columns:
                raise StructuralError(f"response column {r!r} missing")
            _check_missing(data.frame, r)
        mats = []
        names = []
        for margin in (self.margin1, self.margin2):
            cols = []
            for name in margin.covariate_columns:
                cols.extend(data.resolve(name))
            X = np.column_stack([np.ones(data.n)] + [data.column_values(c) for c in cols])
            mats.append(X)
            names.append(("(Intercept)",) + tuple(cols))
        if self.linear_equal and mats[0].shape[1] != mats[1].shape[1]:
            raise StructuralError("paired margins expand to different numbers of design columns")
        y1 = data.frame[self.response1].to_numpy(dtype=float)
        y2 = data.frame[self.response2].to_numpy(dtype=float)
        return ModelData(y1, y2, mats[0], mats[1], names[0], names[1])


_SOLVER_KEYS = {
    "initial_radius": float,
    "max_radius": float,
    "accept_ratio": float,
    "shrink": float,
    "grow": float,
    "gradient_tol": float,
    "max_inner_iter": int,
    "max_outer_iter": int,
    "weight_tol": float,
}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _split_list(text: str) -> tuple:
    return tuple(c.strip() for c in text.split(",") if c.strip())


def parse_model_text(text: str) -> ModelSpec:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val
    known = {"response1", "response2", "margin1_covariates", "margin2_covariates", "copula",
             "copula_equation", "linear_equal", "xi"} | set(_SOLVER_KEYS)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    if "copula" not in values:
        raise ConfigError("missing key: copula")
    eq = values.get("copula_equation", "~ 1").replace(" ", "")
    if eq != "~1":
        raise ConfigError("only an intercept-only copula equation (~ 1) is supported")
    solver = []
    for key, typ in _SOLVER_KEYS.items():
        if key in values:
            try:
                solver.append((key, typ(values[key])))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {values[key]!r}") from exc
    try:
        xi = float(values.get("xi", "0"))
    except ValueError as exc:
        raise ConfigError(f"bad value for xi: {values['xi']!r}") from exc
    return ModelSpec(
        margin1=MarginSpec(_split_list(values.get("margin1_covariates", ""))),
        margin2=MarginSpec(_split_list(values.get("margin2_covariates", ""))),
        family=values["copula"],
        linear_equal=_parse_bool(values.get("linear_equal", "false")),
        xi=xi,
        response1=values.get("response1", "y1"),
        response2=values.get("response2", "y2"),
        solver=tuple(solver),
    )


def parse_model_spec(path) -> ModelSpec:
    return parse_model_text(Path(path).read_text())


def format_model_spec(spec: ModelSpec) -> str:
    lines = [
        f"response1 = {spec.response1}",
        f"response2 = {spec.response2}",
        f"margin1_covariates = {', '.join(spec.margin1.covariate_columns)}",
        f"margin2_covariates = {', '.join(spec.margin2.covariate_columns)}",
        f"copula = {spec.family}",
        "copula_equation = ~ 1",
        f"linear_equal = {str(spec.linear_equal).lower()}",
        f"xi = {spec.xi:.17g}",
    ]
    lines += [f"{k} = {v!r}" for k, v in spec.solver]
    return "\n".join(lines) + "\n"


def _coerce_counts(frame: pd.DataFrame, col: str) -> pd.Series:
    if col not in frame.columns:
        raise DataError(f"required column {col!r} missing")
    s = frame[col]
    num = pd.to_numeric(s, errors="coerce")
    for i in range(len(s)):
        v = num.iloc[i]
        if pd.isna(s.iloc[i]):
            raise DataError(f"missing value in column {col!r} at data row {i + 1}")
        if pd.isna(v) or not float(v).is_integer():
            raise DataError(f"non-integer count {s.iloc[i]!r} in column {col!r} at data row {i + 1}")
        if v < 0:
            raise DataError(f"negative count {s.iloc[i]!r} in column {col!r} at data row {i + 1}")
    return num.astype(np.int64)


def dataset_from_frame(frame: pd.DataFrame, model: ModelSpec | None = None, response1: str = "y1",
                       response2: str = "y2", id_columns=ID_COLUMNS) -> Dataset:
    if model is not None:
        response1, response2 = model.response1, model.response2
    frame = frame.copy()
    frame[response1] = _coerce_counts(frame, response1)
    frame[response2] = _coerce_counts(frame, response2)
    categorical = {}
    for col in frame.columns:
        if col in (response1, response2) or col in id_columns:
            continue
        if not pd.api.types.is_numeric_dtype(frame[col]):
            levels = sorted(frame[col].dropna().astype(str).unique())
            categorical[col] = tuple(levels)
    ds = Dataset(frame, response1, response2, categorical, [])
    for col, levels in categorical.items():
        ds.notes.append(f"{col}: reference level {levels[0]!r}")
    if model is not None:
        used = set()
        for m in (model.margin1, model.margin2):
            for c in m.covariate_columns:
                used.update(ds.resolve(c))
                base = next((k for k in categorical if c == k or c in ds.indicator_names(k)), c)
                _check_missing(frame, base)
                used.add(base)
        ignored = [c for c in frame.columns if c not in used and c not in (response1, response2)]
        for c in ignored:
            ds.notes.append(f"column {c!r} not used by the model")
    return ds


def load_matches(path, model: ModelSpec | None = None, response1: str = "y1", response2: str = "y2") -> Dataset:
    """Read a match CSV.

    Responses are coerced to integers; non-numeric columns other than the
    identifier columns become categorical with an alphabetical reference
    level.  Errors name the offending data row (1-based) and column.
    """
    try:
        frame = pd.read_csv(path, float_precision="round_trip", keep_default_na=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return dataset_from_frame(frame, model, response1, response2)


def write_frame(frame: pd.DataFrame, path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_matches(data: Dataset, path) -> None:
    write_frame(data.frame, path)


def load_odds(path) -> pd.DataFrame:
    """Read decimal odds with columns match_id, odds_win, odds_draw, odds_loss."""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in ("match_id",) + ODDS_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"odds file lacks columns: {', '.join(missing)}")
    for c in ODDS_COLUMNS:
        vals = pd.to_numeric(frame[c], errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~(vals >= 1.0))
        if bad.size and not np.isnan(vals[bad[0]]):
            raise DataError(f"odds below 1 in column {c!r} at data row {int(bad[0]) + 1}")
        frame[c] = vals
    return frame
