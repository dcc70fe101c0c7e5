"""Invertible preprocessing pipeline for multivariate time series.

A pipeline is an ordered list of steps (log, log1p, centered moving average,
first difference, per-variable min-max scaling). ``apply_pipeline`` returns
the transformed frame together with a *fitted* copy of the pipeline that
records everything needed to undo it: initial/terminal values for
differencing, per-variable min/max, and how many time points each step
dropped.
"""

import logging
import re
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from nmfvar.errors import ConfigurationError, InputError, ShapeError

logger = logging.getLogger("nmfvar.preprocessing")

STEP_KINDS = ("log", "log1p", "moving_average", "first_difference", "minmax_scale")

Spacing = Union[float, str]


def infer_spacing(timestamps: Sequence[Any]) -> Spacing:
    """Check that time labels are strictly increasing and equally spaced.

    Numeric labels return their common step. Date-like labels return a pandas
    frequency string (or the common Timedelta). Labels that parse as neither
    are treated as ordinal positions with spacing 1.0.
    """
    labels = [str(t) for t in timestamps]
    if len(labels) < 2:
        return 1.0

    numeric = pd.to_numeric(pd.Series(labels), errors="coerce")
    if not numeric.isna().any():
        steps = np.diff(numeric.to_numpy(dtype=float))
        if np.any(steps <= 0):
            raise InputError("timestamps must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise InputError("timestamps must be equally spaced")
        return float(steps[0])

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            index = pd.DatetimeIndex(pd.to_datetime(labels))
    except (ValueError, TypeError, OverflowError):
        logger.debug("timestamps are not date-like; treating them as ordinal labels")
        return 1.0

    if not index.is_monotonic_increasing or index.has_duplicates:
        raise InputError("timestamps must be strictly increasing")
    if len(index) >= 3:
        freq = pd.infer_freq(index)
        if freq is not None:
            return freq
    deltas = np.diff(index.asi8)
    if np.all(deltas == deltas[0]):
        return str(pd.Timedelta(int(deltas[0])))
    raise InputError("timestamps must be equally spaced")


@dataclass
class TimeSeriesFrame:
    """P variables observed at T equally spaced time points (values is P×T)."""

    variable_names: List[str]
    timestamps: List[str]
    values: np.ndarray
    spacing: Optional[Spacing] = None
    smoothed: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ShapeError(f"frame values must be P x T, got shape {self.values.shape}")
        self.variable_names = [str(v) for v in self.variable_names]
        self.timestamps = [str(t) for t in self.timestamps]
        p, t = self.values.shape
        if p < 1 or t < 2:
            raise InputError(f"frame needs P >= 1 and T >= 2, got P={p}, T={t}")
        if len(self.variable_names) != p:
            raise ShapeError(f"{len(self.variable_names)} variable names for {p} rows")
        if len(self.timestamps) != t:
            raise ShapeError(f"{len(self.timestamps)} timestamps for {t} columns")
        if not np.all(np.isfinite(self.values)):
            row, col = np.argwhere(~np.isfinite(self.values))[0]
            raise InputError(f"non-finite value for {self.variable_names[row]} at {self.timestamps[col]}")
        if self.spacing is None:
            self.spacing = infer_spacing(self.timestamps)

    @property
    def n_variables(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray, timestamps: Optional[List[str]] = None, **changes) -> "TimeSeriesFrame":
        """Copy with new values (and optionally a new time span)."""
        return replace(
            self,
            values=values,
            timestamps=list(self.timestamps if timestamps is None else timestamps),
            **changes,
        )


@dataclass
class PipelineStep:
    kind: str
    window: Optional[int] = None
    state: Optional[Dict[str, Any]] = None

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise ConfigurationError(f"unknown preprocessing step '{self.kind}'")
        if self.kind == "moving_average":
            if self.window is None or self.window < 1 or self.window % 2 == 0:
                raise ConfigurationError(f"moving_average window must be an odd positive integer, got {self.window}")

    @property
    def label(self) -> str:
        return f"ma{self.window}" if self.kind == "moving_average" else self.kind

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind}
        if self.window is not None:
            data["window"] = self.window
        if self.state is not None:
            data["state"] = self.state
        return data


@dataclass
class PipelineSpec:
    """Ordered preprocessing steps; fitted once every step carries its state."""

    steps: List[PipelineStep] = field(default_factory=list)

    @property
    def fitted(self) -> bool:
        return all(step.state is not None for step in self.steps)

    @property
    def smoothing(self) -> bool:
        return any(step.kind == "moving_average" for step in self.steps)

    @property
    def total_dropped(self) -> int:
        return sum(step.state.get("dropped", 0) for step in self.steps if step.state)

    def describe(self) -> str:
        return ",".join(step.label for step in self.steps) or "none"

    def to_dict(self) -> Dict[str, Any]:
        return {"steps": [step.to_dict() for step in self.steps]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineSpec":
        try:
            return cls(steps=[
                PipelineStep(kind=s["kind"], window=s.get("window"), state=s.get("state"))
                for s in data.get("steps", [])
            ])
        except (KeyError, TypeError, AttributeError) as exc:
            raise InputError(f"malformed pipeline description: {exc}") from exc


_ALIASES = {
    "log": "log",
    "ln": "log",
    "log1p": "log1p",
    "diff": "first_difference",
    "first_difference": "first_difference",
    "minmax": "minmax_scale",
    "minmax_scale": "minmax_scale",
}
_MA_PATTERN = re.compile(r"^(?:ma|moving_average)\(?(\d+)\)?$")


def parse_pipeline(text: Optional[str]) -> PipelineSpec:
    """Parse a comma list such as ``"log1p,ma7,diff,minmax"``."""
    steps = []
    for token in (text or "").split(","):
        token = token.strip().lower()
        if not token or token == "none":
            continue
        match = _MA_PATTERN.match(token)
        if match:
            steps.append(PipelineStep("moving_average", window=int(match.group(1))))
        elif token in _ALIASES:
            steps.append(PipelineStep(_ALIASES[token]))
        else:
            raise ConfigurationError(f"unknown transform '{token}' (expected log, log1p, maN, diff, minmax)")
    return PipelineSpec(steps=steps)


def _apply_step(frame: TimeSeriesFrame, step: PipelineStep) -> Tuple[TimeSeriesFrame, PipelineStep]:
    values = frame.values
    names = frame.variable_names
    p, t = values.shape

    if step.kind == "log":
        bad = np.argwhere(values <= 0)
        if bad.size:
            row, col = bad[0]
            raise InputError(f"log requires positive values: {names[row]} at {frame.timestamps[col]} is {values[row, col]}")
        return frame.with_values(np.log(values)), replace(step, state={"dropped": 0})

    if step.kind == "log1p":
        bad = np.argwhere(values < 0)
        if bad.size:
            row, col = bad[0]
            raise InputError(f"log1p requires non-negative values: {names[row]} at {frame.timestamps[col]} is {values[row, col]}")
        return frame.with_values(np.log1p(values)), replace(step, state={"dropped": 0})

    if step.kind == "moving_average":
        window = step.window
        if window > t:
            raise ConfigurationError(f"moving_average window {window} is larger than T={t}")
        half = window // 2
        smoothed = np.lib.stride_tricks.sliding_window_view(values, window, axis=1).mean(axis=2)
        if smoothed.shape[1] < 2:
            raise ConfigurationError(f"moving_average window {window} leaves fewer than two time points")
        state = {
            "dropped": 2 * half,
            "dropped_head": half,
            "dropped_tail": half,
            "head_timestamps": frame.timestamps[:half],
            "tail_timestamps": frame.timestamps[t - half:],
        }
        return frame.with_values(smoothed, frame.timestamps[half:t - half], smoothed=True), replace(step, state=state)

    if step.kind == "first_difference":
        if t < 3:
            raise ConfigurationError(f"first_difference needs T >= 3, got T={t}")
        state = {
            "dropped": 1,
            "dropped_head": 1,
            "initial": values[:, 0].tolist(),
            "terminal": values[:, -1].tolist(),
            "head_timestamps": frame.timestamps[:1],
            "length": t - 1,
        }
        return frame.with_values(np.diff(values, axis=1), frame.timestamps[1:]), replace(step, state=state)

    # minmax_scale
    lo = values.min(axis=1)
    hi = values.max(axis=1)
    flat = np.flatnonzero(hi <= lo)
    if flat.size:
        raise InputError(f"minmax_scale: variable '{names[flat[0]]}' is constant")
    scaled = (values - lo[:, None]) / (hi - lo)[:, None]
    return frame.with_values(scaled), replace(step, state={"dropped": 0, "minimum": lo.tolist(), "maximum": hi.tolist()})


def _anchor_differences(steps: List[PipelineStep], inputs: List[np.ndarray],
                        timestamps: List[List[str]]) -> List[PipelineStep]:
    """Point each difference step at the level just before the span that survives later smoothing.

    Moving averages after a difference drop points that inversion cannot
    restore, so the cumulative sum has to start at the pre-difference value
    sitting right before the first retained difference.
    """
    anchored = list(steps)
    for i, step in enumerate(steps):
        if step.kind != "first_difference":
            continue
        later = [s.state for s in steps[i + 1:] if s.kind == "moving_average"]
        head = sum(s["dropped_head"] for s in later)
        tail = sum(s["dropped_tail"] for s in later)
        state = dict(step.state)
        state.update({
            "anchor": inputs[i][:, head].tolist(),
            "head_timestamps": [timestamps[i][head]],
            "length": state["length"] - head - tail,
        })
        anchored[i] = replace(step, state=state)
    return anchored


def apply_pipeline(frame: TimeSeriesFrame, spec: PipelineSpec) -> Tuple[TimeSeriesFrame, PipelineSpec]:
    """Run every step in order, returning the output frame and the fitted spec."""
    fitted_steps = []
    inputs, input_timestamps = [], []
    current = frame
    for step in spec.steps:
        inputs.append(current.values)
        input_timestamps.append(current.timestamps)
        current, fitted = _apply_step(current, PipelineStep(step.kind, step.window))
        fitted_steps.append(fitted)
        logger.debug(f"applied {fitted.label}: T={current.n_times}")
    fitted_spec = PipelineSpec(steps=_anchor_differences(fitted_steps, inputs, input_timestamps))
    logger.info(f"preprocessing '{fitted_spec.describe()}': T {frame.n_times} -> {current.n_times}")
    return current, fitted_spec


def invert_values(values: np.ndarray, fitted: PipelineSpec, continuation: bool = False) -> Tuple[np.ndarray, bool]:
    """Undo a fitted pipeline on a raw P×n array.

    Returns the inverted array and a flag telling whether a moving average
    was crossed (the result is then on the smoothed scale). With
    ``continuation=True`` differencing is undone from the last value the step
    saw, for values that continue past the fitted span (forecasts);
    otherwise from the first value, and the inverted output regains the
    dropped leading point.
    """
    if not fitted.fitted:
        raise InputError("pipeline has no inversion state; it was not produced by apply_pipeline")
    out = np.asarray(values, dtype=float)
    if out.ndim != 2:
        raise ShapeError(f"values must be P x n, got shape {out.shape}")
    p = out.shape[0]
    smoothed = False
    for step in reversed(fitted.steps):
        state = step.state
        if step.kind == "minmax_scale":
            lo = np.asarray(state["minimum"], dtype=float)
            hi = np.asarray(state["maximum"], dtype=float)
            if lo.size != p:
                raise ShapeError(f"minmax state has {lo.size} variables, data has {p}")
            out = out * (hi - lo)[:, None] + lo[:, None]
        elif step.kind == "first_difference":
            key = "terminal" if continuation else "anchor"
            anchor = np.asarray(state.get(key, state["initial"]), dtype=float)
            if anchor.size != p:
                raise ShapeError(f"difference state has {anchor.size} variables, data has {p}")
            if continuation:
                out = anchor[:, None] + np.cumsum(out, axis=1)
            else:
                if out.shape[1] != state["length"]:
                    raise ShapeError(f"differenced span has {state['length']} points, data has {out.shape[1]}")
                out = np.concatenate([anchor[:, None], anchor[:, None] + np.cumsum(out, axis=1)], axis=1)
        elif step.kind == "log":
            out = np.exp(out)
        elif step.kind == "log1p":
            out = np.expm1(out)
        else:
            smoothed = True
    return out, smoothed


def invert_pipeline(frame: TimeSeriesFrame, fitted: PipelineSpec, continuation: bool = False) -> TimeSeriesFrame:
    """Map a frame in preprocessed space back to original units.

    Exact for log, log1p, minmax and first differences; a moving average is
    not invertible, so it passes through unchanged and the result is flagged
    ``smoothed``.
    """
    values, smoothed = invert_values(frame.values, fitted, continuation=continuation)
    timestamps = list(frame.timestamps)
    if not continuation:
        for step in reversed(fitted.steps):
            if step.kind == "first_difference":
                timestamps = list(step.state["head_timestamps"]) + timestamps
    return TimeSeriesFrame(
        variable_names=frame.variable_names,
        timestamps=timestamps,
        values=values,
        smoothed=smoothed or frame.smoothed,
    )
