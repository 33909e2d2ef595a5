"""MetricReport assembly and its JSON / CSV serializations."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from ..data import Dataset
from .bivariate import trend_scores
from .learners import ONE_HOT_LIMIT, detection_score, mle_score
from .privacy import dcr_share, mia_score
from .univariate import shape_scores

SCALARS = ("shape", "shape_cat", "shape_num", "wd_num", "jsd_cat", "trend", "trend_mixed",
           "detection", "mle", "dcr_share", "mia")


@dataclass
class MetricReport:
    shape: float
    shape_cat: float | None = None
    shape_num: float | None = None
    wd_num: float | None = None
    jsd_cat: float | None = None
    trend: float | None = None
    trend_mixed: float | None = None
    detection: float | None = None
    mle: float | None = None
    dcr_share: float | None = None
    mia: float | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCALARS)
        w.writerow(["" if getattr(self, k) is None else repr(float(getattr(self, k))) for k in SCALARS])
        return buf.getvalue()


def report_schema() -> dict:
    return json.loads(resources.files("cascadeflow.metrics").joinpath("report_schema.json").read_text())


def evaluate(real_train: Dataset, real_test: Dataset | None, synth: Dataset, seed: int = 0,
             detection: bool = True, mle: bool = True, privacy: bool = True, n_iter: int = 500,
             one_hot_limit: int = ONE_HOT_LIMIT) -> MetricReport:
    sh = shape_scores(real_train, synth)
    tr = trend_scores(real_train, synth)
    rep = MetricReport(sh.shape, sh.shape_cat, sh.shape_num, sh.wd_num, sh.jsd_cat, tr.trend, tr.trend_mixed)
    rep.details = {
        "shape_per_feature": sh.per_feature,
        "wd_per_feature": sh.wd_per_feature,
        "jsd_per_feature": sh.jsd_per_feature,
        "trend_per_pair": tr.per_pair,
        "trend_skipped": tr.skipped,
    }
    if detection:
        det = detection_score(real_train, synth, seed=seed, n_iter=n_iter, one_hot_limit=one_hot_limit)
        rep.detection = det.score
        rep.details["detection_auc"] = det.best_auc
        rep.details["detection_best_iteration"] = det.best_iteration
    if real_test is not None:
        if mle and real_train.schema.target is not None:
            m = mle_score(real_train, real_test, synth, seed=seed, n_iter=n_iter, one_hot_limit=one_hot_limit)
            rep.mle = m.score
            rep.details["mle"] = {"synthetic": m.synthetic, "real": m.real, "task": m.task}
        if privacy:
            rep.dcr_share = dcr_share(real_train, real_test, synth).share
            mi = mia_score(real_train, real_test, synth, seed=seed, n_iter=n_iter, one_hot_limit=one_hot_limit)
            rep.mia = mi.score
            rep.details["mia_aucs"] = mi.aucs
    return rep


def write_report(rep: MetricReport, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(rep.to_json(), encoding="utf-8")
    (out / "report.csv").write_text(rep.csv_row(), encoding="utf-8")
