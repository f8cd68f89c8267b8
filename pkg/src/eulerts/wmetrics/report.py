"""MetricReport: the bundle of evaluation numbers for one (real, generated) pair."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import ENVELOPE_KEYS, corr_mse, envelope_mse, fid_avg, qvar_mse
from .scores import SCORE_DEVIATION, ScoreConfig, ScoreError, discriminative_score, predictive_score

METRIC_NAMES = ("fid", "qvar", "corr", "envelope", "disc", "pred")


@dataclass
class MetricReport:
    fid_avg: float | None = None
    qvar_mse: float | None = None
    corr_mse: float | None = None
    envelope: dict[str, float] = field(default_factory=dict)
    disc_score: float | None = None
    pred_score: float | None = None
    metadata: dict = field(default_factory=dict)
    deviations: list[str] = field(default_factory=list)

    def flat(self) -> dict[str, float]:
        out = {}
        for key in ("fid_avg", "qvar_mse", "corr_mse", "disc_score", "pred_score"):
            v = getattr(self, key)
            if v is not None:
                out[key] = float(v)
        for k in ENVELOPE_KEYS:
            if k in self.envelope:
                out[f"envelope_{k}"] = float(self.envelope[k])
        return out

    def check(self) -> None:
        for k, v in self.flat().items():
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"metric {k} = {v} is not finite and non-negative")

    def to_text(self) -> str:
        """Flat ``key<TAB>value`` table, one metric per line."""
        return "".join(f"{k}\t{v!r}\n" for k, v in self.flat().items())

    def to_dict(self) -> dict:
        return {
            "metrics": [{"name": k, "value": v} for k, v in self.flat().items()],
            "metadata": self.metadata,
            "deviations": list(self.deviations),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        rep = cls(metadata=dict(data.get("metadata", {})), deviations=list(data.get("deviations", [])))
        for item in data.get("metrics", []):
            name, value = item["name"], item["value"]
            if name.startswith("envelope_"):
                rep.envelope[name[len("envelope_"):]] = value
            else:
                setattr(rep, name, value)
        return rep


def evaluate(real, gen, metrics=("fid", "qvar", "corr", "envelope"), seed: int = 0,
             score_config: ScoreConfig = ScoreConfig()) -> MetricReport:
    """Compute the requested metrics; inapplicable ones are recorded in metadata."""
    unknown = set(metrics) - set(METRIC_NAMES)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}; choose from {METRIC_NAMES}")
    rep = MetricReport(metadata={"seed": seed, "metrics": list(metrics)})
    skipped = {}
    dim = np.shape(getattr(real, "values", real))[-1]
    if "fid" in metrics:
        rep.fid_avg = fid_avg(real, gen)
    if "qvar" in metrics:
        rep.qvar_mse = qvar_mse(real, gen)
    if "corr" in metrics:
        if dim >= 2:
            rep.corr_mse = corr_mse(real, gen)
        else:
            skipped["corr"] = "needs d >= 2"
    if "envelope" in metrics:
        rep.envelope = envelope_mse(real, gen)
    for key, fn, attr in (("disc", discriminative_score, "disc_score"), ("pred", predictive_score, "pred_score")):
        if key in metrics:
            try:
                setattr(rep, attr, fn(real, gen, seed, score_config))
            except ScoreError as exc:
                skipped[key] = str(exc)
            if SCORE_DEVIATION not in rep.deviations:
                rep.deviations.append(SCORE_DEVIATION)
    if skipped:
        rep.metadata["skipped"] = skipped
    return rep
