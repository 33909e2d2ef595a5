"""End-to-end commands: fit, sample, simulate missingness, evaluate, transport report."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import NUMERICAL, Dataset, FeatureSchema, Preprocessor, fit_preprocessor, load_dataset, write_dataset
from .encoders import DT, EncoderSet, fit_encoders
from .errors import EncoderHashMismatch, SchemaError
from .highres import HighResModel, assemble_mixed, cfm_loss, sample_highres, transport_cost_gap, wasserstein_trace
from .lowres import LowResModel
from .metrics import evaluate, write_report
from .missing import simulate_mnar
from .nn import Adam, Ema, load_arrays, save_arrays

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "cascadeflow-bundle"
BUNDLE_VERSION = 1
HIST_BINS = 20


def load_inputs(data_path: str | Path, schema_path: str | Path) -> Dataset:
    for p in (schema_path, data_path):
        if not p or not Path(p).is_file():
            raise SchemaError(f"file not found: {p or '(no path given)'}")
    return load_dataset(data_path, FeatureSchema.load(schema_path))


@dataclass
class ModelBundle:
    schema: FeatureSchema
    preprocessor: Preprocessor
    encoders: EncoderSet
    lowres: LowResModel
    highres: HighResModel | None
    config: RunConfig
    loss_log: list[tuple[int, float, float]] = field(default_factory=list)

    def sample(self, n: int, steps: int = 200, seed: int = 0) -> Dataset:
        """Low-resolution row first, then numerical details, then special values and inverse scaling."""
        s_low, s_high = (int(v) for v in np.random.SeedSequence(seed).generate_state(2))
        x_low = self.lowres.sample(n, steps=steps, seed=s_low)
        k_cat = len(self.schema.cat_columns)
        k_num = len(self.schema.num_columns)
        cat = x_low[:, :k_cat]
        if k_num:
            x_tilde = sample_highres(self.highres, self.encoders, x_low, steps=steps, seed=s_high)
            num, missing = assemble_mixed(x_low[:, k_cat:], x_tilde, self.encoders, self.preprocessor)
        else:
            num, missing = np.zeros((n, 0)), np.zeros((n, 0), dtype=bool)
        return Dataset(self.schema, cat.astype(np.int64), num.reshape(n, k_num), missing.reshape(n, k_num))

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "schema.json", self.schema.to_dict())
        _write_json(out / "preprocessor.json", self.preprocessor.to_dict())
        (out / "encoders.json").write_text(self.encoders.to_json() + "\n", encoding="utf-8")
        save_arrays(out / "lowres", self.lowres.state())
        _write_json(out / "lowres_model.json", self.lowres.config())
        files = ["schema.json", "preprocessor.json", "encoders.json", "lowres.bin", "lowres.json",
                 "lowres_model.json", "config.json", "loss.csv"]
        if self.highres is not None:
            save_arrays(out / "highres", self.highres.state())
            _write_json(out / "highres_model.json", {**self.highres.config(), "encoder_hash": self.encoders.digest()})
            files += ["highres.bin", "highres.json", "highres_model.json"]
        self.config.save(out / "config.json")
        with open(out / "loss.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "lowres_loss", "highres_loss"])
            for step, lo, hi in self.loss_log:
                w.writerow([step, repr(lo), repr(hi)])
        manifest = {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "config_hash": self.config.digest(),
            "encoder_hash": self.encoders.digest(),
            "files": {name: _sha256(out / name) for name in sorted(files)},
        }
        _write_json(out / "manifest.json", manifest)

    @classmethod
    def load(cls, bundle_dir: str | Path) -> "ModelBundle":
        from .config import load_config

        d = Path(bundle_dir)
        if not (d / "manifest.json").is_file():
            raise SchemaError(f"not a model bundle (no manifest.json): {d}")
        manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
        if manifest.get("format") != BUNDLE_FORMAT or manifest.get("version") != BUNDLE_VERSION:
            raise SchemaError(f"{d}: unsupported bundle format")
        schema = FeatureSchema.from_dict(_read_json(d / "schema.json"))
        pre = Preprocessor.from_dict(_read_json(d / "preprocessor.json"))
        encoders = EncoderSet.from_dict(_read_json(d / "encoders.json"))
        cfg = load_config(d / "config.json")
        lc = _read_json(d / "lowres_model.json")
        if lc["cardinalities"] != encoders.low_cardinalities:
            raise EncoderHashMismatch("low-resolution model cardinalities do not match the encoders")
        rng = np.random.default_rng(0)
        low = LowResModel(lc["cardinalities"], rng, lc["emb_dim"], lc["time_dim"], lc["hidden"])
        low.load_state(load_arrays(d / "lowres"))
        high = None
        if (d / "highres_model.json").is_file():
            hc = _read_json(d / "highres_model.json")
            if hc["encoder_hash"] != encoders.digest():
                raise EncoderHashMismatch("encoders.json does not match the encoders the flow was trained on")
            high = HighResModel(hc["low_cardinalities"], hc["n_num"], rng, hc["cond_dim"], hc["time_dim"],
                                hc["hidden"], hc["schedule_hidden"])
            high.load_state(load_arrays(d / "highres"))
        loss_log = []
        if (d / "loss.csv").is_file():
            with open(d / "loss.csv", newline="", encoding="utf-8") as fh:
                for row in list(csv.reader(fh))[1:]:
                    loss_log.append((int(row[0]), float(row[1]), float(row[2])))
        return cls(schema, pre, encoders, low, high, cfg, loss_log)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _lr_factor(step: int, total: int, decay_from: float) -> float:
    """1 until ``decay_from * total`` steps, then linear decay reaching 0 after the last step."""
    start = decay_from * total
    if step <= start or total <= start:
        return 1.0
    return max(0.0, (total - step + 1) / (total - start))


def fit_bundle(raw: Dataset, cfg: RunConfig) -> ModelBundle:
    """Fit scaling and encoders, then train both models jointly on the real low-resolution rows."""
    tc, mc, ec = cfg.training, cfg.model, cfg.encoder
    start = time.monotonic()
    pre = fit_preprocessor(raw)
    pds = pre.apply(raw)
    encoders = fit_encoders(pds, raw=raw, kind=ec.kind, max_depth=ec.max_depth,
                            max_components=ec.max_components, min_leaf=ec.min_leaf, seed=tc.seed)
    x_low = encoders.low_resolution(pds)
    x1 = pds.num
    n, k_num = x1.shape
    log.info("encoders fitted in %.1fs; low-resolution cardinalities %s",
             time.monotonic() - start, encoders.low_cardinalities)

    rng = np.random.default_rng(tc.seed)
    low = LowResModel(encoders.low_cardinalities, rng, mc.emb_dim, mc.time_dim, mc.hidden)
    high = None
    if k_num:
        high = HighResModel(encoders.low_cardinalities, k_num, rng, mc.cond_dim, mc.time_dim, mc.hidden,
                            mc.schedule_hidden)
    opt_low = Adam(low.params, lr=tc.lr)
    opt_high = Adam(high.params, lr=tc.lr) if high is not None else None
    ema_low = Ema(low.params, tc.ema) if tc.ema else None
    ema_high = Ema(high.params, tc.ema) if tc.ema and high is not None else None
    k_low = len(encoders.low_cardinalities)
    window_low, window_high, loss_log = [], [], []
    for step in range(1, tc.steps + 1):
        lr = tc.lr * _lr_factor(step, tc.steps, tc.decay_from)
        opt_low.lr = lr
        if opt_high is not None:
            opt_high.lr = lr
        idx = rng.integers(0, n, tc.batch)
        t = rng.random(tc.batch)
        noise = rng.standard_normal((tc.batch, k_low, mc.emb_dim))
        lo, grads = low.loss_and_grads(x_low[idx], t, noise)
        opt_low.step(low.params, grads)
        low.renormalize()
        if ema_low is not None:
            ema_low.update(low.params)
        hi = 0.0
        if high is not None:
            t2 = rng.random(tc.batch)
            eps = rng.standard_normal((tc.batch, k_num))
            hi, grads = cfm_loss(high, encoders, x1[idx], x_low[idx], t2, eps)
            opt_high.step(high.params, grads)
            if ema_high is not None:
                ema_high.update(high.params)
        window_low.append(lo)
        window_high.append(hi)
        if step % tc.log_every == 0 or step == tc.steps:
            loss_log.append((step, float(np.mean(window_low)), float(np.mean(window_high))))
            window_low, window_high = [], []
        if tc.max_seconds and time.monotonic() - start > tc.max_seconds:
            log.warning("wall-clock cap of %.0fs reached after %d steps", tc.max_seconds, step)
            if window_low:
                loss_log.append((step, float(np.mean(window_low)), float(np.mean(window_high))))
            break
    if ema_low is not None:
        ema_low.copy_to(low.params)
        low.renormalize()
    if ema_high is not None:
        ema_high.copy_to(high.params)
    return ModelBundle(raw.schema, pre, encoders, low, high, cfg, loss_log)


def cmd_fit(cfg: RunConfig) -> ModelBundle:
    raw = load_inputs(cfg.paths.data, cfg.paths.schema)
    bundle = fit_bundle(raw, cfg)
    bundle.save(cfg.paths.out)
    return bundle


def cmd_sample(bundle_dir: str | Path, n: int, steps: int, seed: int, out_csv: str | Path) -> Dataset:
    bundle = ModelBundle.load(bundle_dir)
    ds = bundle.sample(n, steps=steps, seed=seed)
    Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out_csv)
    return ds


def cmd_simulate_missing(cfg: RunConfig) -> Path:
    """Write masked.csv, mask.csv (1 = missing cell) and mnar.json into the output directory."""
    raw = load_inputs(cfg.paths.data, cfg.paths.schema)
    res = simulate_mnar(raw, cfg.mnar.p, cfg.mnar.seed)
    out = Path(cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(res.dataset, out / "masked.csv")
    ds = res.dataset
    names = ds.schema.names
    cols = []
    for name in names:
        col = ds.schema.column(name)
        if col.kind == NUMERICAL:
            cols.append(ds.missing[:, ds.num_index(name)])
        else:
            cols.append(ds.column_values(name) == "")
    with open(out / "mask.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        w.writerows(zip(*[c.astype(int) for c in cols]))
    _write_json(out / "mnar.json", {
        "p": cfg.mnar.p,
        "seed": cfg.mnar.seed,
        "inputs": list(res.inputs),
        "masked": list(res.masked),
        "stage1_rate": {name: float(res.stage1_mask[:, k].mean()) for k, name in enumerate(res.masked)},
    })
    return out


def _hist2d_rows(real: Dataset, synth: Dataset, a: str, b: str, bins: int = HIST_BINS):
    ra, rb = real.column_values(a), real.column_values(b)
    sa, sb = synth.column_values(a), synth.column_values(b)
    keep_r = ~(np.isnan(ra) | np.isnan(rb))
    keep_s = ~(np.isnan(sa) | np.isnan(sb))
    if keep_r.sum() < 2:
        return []
    ex = np.linspace(ra[keep_r].min(), ra[keep_r].max(), bins + 1)
    ey = np.linspace(rb[keep_r].min(), rb[keep_r].max(), bins + 1)
    hr, _, _ = np.histogram2d(ra[keep_r], rb[keep_r], bins=[ex, ey])
    sx = np.clip(sa[keep_s], ex[0], ex[-1])
    sy = np.clip(sb[keep_s], ey[0], ey[-1])
    hs, _, _ = np.histogram2d(sx, sy, bins=[ex, ey])
    rows = []
    for i in range(bins):
        for j in range(bins):
            rows.append([repr(ex[i]), repr(ex[i + 1]), repr(ey[j]), repr(ey[j + 1]), int(hr[i, j]), int(hs[i, j])])
    return rows


def cmd_evaluate(train_csv, test_csv, synth_csv, schema_path, cfg: RunConfig, seed: int = 0) -> Path:
    """report.json / report.csv, per-feature shape scores and 2-D histogram grids for numerical pairs."""
    real = load_inputs(train_csv, schema_path)
    schema = real.schema
    test = load_inputs(test_csv, schema_path) if test_csv else None
    synth = load_inputs(synth_csv, schema_path)
    mc = cfg.metrics
    rep = evaluate(real, test, synth, seed=seed, detection=mc.detection, mle=mc.mle, privacy=mc.privacy,
                   n_iter=mc.n_iter, one_hot_limit=mc.one_hot_limit)
    out = Path(cfg.paths.out)
    write_report(rep, out)
    with open(out / "shape_per_feature.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "kind", "shape", "wd", "jsd"])
        det = rep.details
        for col in schema.columns:
            wd = det["wd_per_feature"].get(col.name)
            js = det["jsd_per_feature"].get(col.name)
            w.writerow([col.name, col.kind, repr(det["shape_per_feature"][col.name]),
                        "" if wd is None else repr(wd), "" if js is None else repr(js)])
    hist_dir = out / "hist2d"
    hist_dir.mkdir(exist_ok=True)
    nums = [c.name for c in schema.num_columns]
    for a, b in combinations(nums, 2):
        rows = _hist2d_rows(real, synth, a, b)
        with open(hist_dir / f"{a}__{b}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_lo", "x_hi", "y_lo", "y_hi", "real_count", "synth_count"])
            w.writerows(rows)
    return out


def transport_report(bundle: ModelBundle, raw: Dataset, n_mc: int, seed: int) -> dict:
    pds = bundle.preprocessor.apply(raw)
    names = [c.name for c in raw.schema.num_columns]
    gap = transport_cost_gap(pds.num, pds.missing, bundle.encoders, n_mc=n_mc, seed=seed)
    trace = wasserstein_trace(pds.num, pds.missing, bundle.encoders, n_mc=min(n_mc, 10_000), seed=seed + 1)
    guaranteed = all(e.kind == DT for e in bundle.encoders.encoders)
    return {
        "encoder_kind": sorted({e.kind for e in bundle.encoders.encoders}),
        "bound_guaranteed": guaranteed,
        "note": "" if guaranteed else "bound not guaranteed for mixture encoders",
        "cost_coupled": gap.cost_coupled,
        "cost_independent": gap.cost_independent,
        "gap_standard_error": gap.gap_se,
        "features": {
            name: {
                "cost_coupled": float(gap.per_feature_coupled[i]),
                "cost_independent": float(gap.per_feature_independent[i]),
                "residual_second_moment": float(gap.residual_second_moment[i]),
                "residual_second_moment_le_1": bool(gap.residual_second_moment[i] <= 1.0 + 0.02),
                "source_variance": float(gap.source_variance[i]),
                "source_variance_le_1": bool(gap.source_variance[i] <= 1.0 + 0.02),
            }
            for i, name in enumerate(names)
        },
        "wasserstein_trace": {
            "times": trace["times"],
            "coupled": {name: trace["coupled"][i].tolist() for i, name in enumerate(names)},
            "independent": {name: trace["independent"][i].tolist() for i, name in enumerate(names)},
        },
    }


def cmd_transport_report(bundle_dir, cfg: RunConfig, n_mc: int, seed: int) -> Path:
    bundle = ModelBundle.load(bundle_dir)
    raw = load_inputs(cfg.paths.data or bundle.config.paths.data, cfg.paths.schema or bundle.config.paths.schema)
    rep = transport_report(bundle, raw, n_mc, seed)
    out = Path(cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "transport.json", rep)
    return out / "transport.json"
