"""Training loop, evaluation protocol, baseline, ablations, upsampling.

Corpus layout on disk: a directory of `<subject_id>.hrir` bundles with
optional `<subject_id>.labels.json` cue sidecars. Subjects used for
batched training must share one direction grid; missing sidecars fall
back to estimating labels from the waveforms.
"""

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import model as M
from .bundle import read_bundle, read_labels, write_bundle, write_labels
from .cues import CueLabels, label_field
from .domain import (
    Direction,
    StackedHrirs,
    _pairwise_great_circle_deg,
    canonical_order,
    sample_sparsity,
)
from .engine import AdamW, load_checkpoint, parameter, save_checkpoint
from .errors import ConfigError, DataError
from .losses import (
    CueStats,
    LossWeights,
    loss_cues,
    loss_hrtf,
    loss_rec,
    loss_total,
)
from .metrics import cosine_distance, ild_e_db, itd_e_us, nmse_db
from .synthetic import minimum_phase

METRIC_COLUMNS = ("subject_id", "M", "nmse_db", "cd", "itd_e_us", "ild_e_db")


@dataclass(frozen=True)
class AblationFlags:
    no_sinusoidal: bool = False
    no_cue_heads: bool = False
    no_refine: bool = False
    no_hrtf_loss: bool = False
    mp_preprocess: bool = False
    additive_tokens: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "AblationFlags":
        bad = set(d) - {f for f in cls.__dataclass_fields__}
        if bad:
            raise ConfigError(f"unknown ablation flags {sorted(bad)}")
        return cls(**{k: bool(v) for k, v in d.items()})


@dataclass(frozen=True)
class ExperimentConfig:
    corpus_dir: str
    train_subjects: object = 16  # count or explicit id list
    val_subjects: object = 4
    sparsity: tuple = (5, 9, 27)
    model: Optional[M.ModelConfig] = None  # K filled from corpus when None
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 3e-4
    batch_size: int = 8
    epochs: int = 200
    seed: int = 0
    steps_per_epoch: Optional[int] = None
    val_every: int = 10
    exclude_subjects: tuple = ()
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"lr={self.lr} must be >= 0")
        if self.batch_size < 1 or self.epochs < 1 or self.val_every < 1:
            raise ConfigError("batch_size, epochs, val_every must be >= 1")
        if len(self.sparsity) == 0 or any(m < 1 for m in self.sparsity):
            raise ConfigError(f"bad sparsity list {self.sparsity}")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigError("steps_per_epoch must be >= 1")

    @classmethod
    def from_dict(cls, d: dict, corpus_dir: str) -> "ExperimentConfig":
        d = dict(d)
        kwargs = {"corpus_dir": corpus_dir}
        for key in ("train_subjects", "val_subjects", "lr", "batch_size",
                    "epochs", "seed", "steps_per_epoch", "val_every"):
            if key in d:
                kwargs[key] = d.pop(key)
        if "sparsity" in d:
            kwargs["sparsity"] = tuple(int(m) for m in d.pop("sparsity"))
        if "exclude_subjects" in d:
            kwargs["exclude_subjects"] = tuple(d.pop("exclude_subjects"))
        if "model" in d:
            kwargs["model"] = M.ModelConfig.from_dict(d.pop("model"))
        if "weights" in d:
            kwargs["weights"] = LossWeights(**d.pop("weights"))
        if "ablation" in d:
            kwargs["ablation"] = AblationFlags.from_dict(d.pop("ablation"))
        if d:
            raise ConfigError(f"unknown experiment keys {sorted(d)}")
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigError(f"bad experiment config: {e}") from e


@dataclass
class CorpusSubject:
    stacked: StackedHrirs
    labels: CueLabels


def load_corpus(corpus_dir: str):
    """All subjects in a corpus directory, sorted by subject id."""
    if not os.path.isdir(corpus_dir):
        raise DataError(f"corpus directory {corpus_dir!r} not found")
    names = sorted(n for n in os.listdir(corpus_dir) if n.endswith(".hrir"))
    if not names:
        raise DataError(f"no .hrir bundles in {corpus_dir!r}")
    subjects = []
    for name in names:
        stacked = read_bundle(os.path.join(corpus_dir, name))
        sidecar = os.path.join(corpus_dir, name[: -len(".hrir")] + ".labels.json")
        if os.path.exists(sidecar):
            sid, itd, ild = read_labels(sidecar, expect_l=stacked.n_directions)
            labels = CueLabels(itd_us=itd, ild_db=ild)
        else:
            labels = label_field(_as_field(stacked))
        subjects.append(CorpusSubject(stacked=stacked, labels=labels))
    return subjects


def _as_field(stacked: StackedHrirs):
    from .domain import BinauralHrir, SubjectField

    k = stacked.n_taps
    hrirs = []
    for i in range(stacked.n_directions):
        az, el, r = stacked.directions[i]
        hrirs.append(
            BinauralHrir(
                direction=Direction(az, el, r),
                left=stacked.payload[i, :k].astype(np.float64),
                right=stacked.payload[i, k:].astype(np.float64),
                sample_rate_hz=stacked.sample_rate_hz,
            )
        )
    return SubjectField(subject_id=stacked.subject_id, hrirs=tuple(hrirs))


def mp_transform(subject: CorpusSubject) -> CorpusSubject:
    """Map both ears of every row through minimum_phase and re-estimate
    labels on the transformed waveforms."""
    st = subject.stacked
    k = st.n_taps
    payload = np.empty_like(st.payload)
    for i in range(st.n_directions):
        payload[i, :k] = minimum_phase(st.payload[i, :k].astype(np.float64))
        payload[i, k:] = minimum_phase(st.payload[i, k:].astype(np.float64))
    stacked = StackedHrirs(
        subject_id=st.subject_id,
        directions=st.directions,
        payload=payload,
        sample_rate_hz=st.sample_rate_hz,
    )
    return CorpusSubject(stacked=stacked, labels=label_field(_as_field(stacked)))


def split_corpus(subjects, exp: ExperimentConfig):
    """(train, val) lists per the config split; disjointness enforced."""
    subjects = [s for s in subjects
                if s.stacked.subject_id not in set(exp.exclude_subjects)]
    by_id = {s.stacked.subject_id: s for s in subjects}
    ids = [s.stacked.subject_id for s in subjects]

    def pick(spec, taken):
        if isinstance(spec, int):
            avail = [i for i in ids if i not in taken]
            if spec > len(avail):
                raise ConfigError(f"asked for {spec} subjects, {len(avail)} left")
            return avail[:spec]
        chosen = list(spec)
        for sid in chosen:
            if sid not in by_id:
                raise ConfigError(f"unknown subject {sid!r}")
            if sid in taken:
                raise ConfigError(f"subject {sid!r} in both splits")
        return chosen

    train_ids = pick(exp.train_subjects, set())
    val_ids = pick(exp.val_subjects, set(train_ids))
    if not train_ids or not val_ids:
        raise ConfigError("empty train or val split")
    return [by_id[i] for i in train_ids], [by_id[i] for i in val_ids]


def derive_variant(exp: ExperimentConfig, k: int):
    """Resolve the effective (ModelConfig, LossWeights) for the run,
    applying ablation flags to a fresh config."""
    base = exp.model if exp.model is not None else M.ModelConfig(K=k)
    if base.K != k:
        raise DataError(f"model K={base.K} but corpus K={k}")
    ab = exp.ablation
    cfg = replace(
        base,
        with_sinusoidal=base.with_sinusoidal and not ab.no_sinusoidal,
        with_cue_heads=base.with_cue_heads and not ab.no_cue_heads,
        with_refine=base.with_refine and not ab.no_refine,
        token_mode="add" if ab.additive_tokens else base.token_mode,
    )
    w = exp.weights
    if ab.no_cue_heads:
        w = replace(w, lambda_itd=0.0, lambda_ild=0.0)
    if ab.no_hrtf_loss:
        w = replace(w, lambda_hrtf=0.0)
    return cfg, w


def _shared_grid(subjects):
    dirs = subjects[0].stacked.directions
    fs = subjects[0].stacked.sample_rate_hz
    k = subjects[0].stacked.n_taps
    for s in subjects[1:]:
        if (s.stacked.directions.shape != dirs.shape
                or not np.array_equal(s.stacked.directions, dirs)
                or s.stacked.sample_rate_hz != fs
                or s.stacked.n_taps != k):
            raise DataError(
                f"subject {s.stacked.subject_id} does not share the common grid"
            )
    return dirs, fs, k


def masks_for(directions, ms) -> dict:
    return {m: sample_sparsity(directions, m) for m in ms}


def train(exp: ExperimentConfig, out_dir: str):
    """Run the optimizer loop; returns a result dict with paths and the
    per-epoch history. Deterministic given exp.seed.

    Writes out_dir/checkpoint.ckpt (best validation NMSE) and
    out_dir/training_log.csv. The returned "params" are the final-step
    parameters; the checkpoint holds the best-validation snapshot.
    """
    os.makedirs(out_dir, exist_ok=True)
    subjects = load_corpus(exp.corpus_dir)
    if exp.ablation.mp_preprocess:
        subjects = [mp_transform(s) for s in subjects]
    train_set, val_set = split_corpus(subjects, exp)
    dirs, fs, k = _shared_grid(train_set + val_set)
    l = dirs.shape[0]
    for m in exp.sparsity:
        if not 1 <= m < l:
            raise ConfigError(f"sparsity M={m} must satisfy 1 <= M < L={l}")

    cfg, weights = derive_variant(exp, k)
    stats = CueStats.from_labels(
        np.concatenate([s.labels.itd_us for s in train_set]),
        np.concatenate([s.labels.ild_db for s in train_set]),
    )
    params = M.init_params(cfg, exp.seed)
    opt = AdamW(params, lr=exp.lr)
    masks = masks_for(dirs, exp.sparsity)

    n_train = len(train_set)
    steps = exp.steps_per_epoch
    if steps is None:
        steps = math.ceil(n_train / exp.batch_size) * max(1, len(exp.sparsity))
    rng = np.random.default_rng(exp.seed)

    payloads = np.stack([s.stacked.payload for s in train_set])  # (S, L, 2K)
    labmats = np.stack([s.labels.as_matrix() for s in train_set])  # (S, L, 2)

    ckpt_path = os.path.join(out_dir, "checkpoint.ckpt")
    log_path = os.path.join(out_dir, "training_log.csv")
    history = []
    best_val = None
    step_count = 0

    def run_validation():
        vals = []
        for s in val_set:
            for m in exp.sparsity:
                pred = predict_field(s.stacked, masks[m], params, cfg)
                vals.append(nmse_db(pred, s.stacked.payload, masks[m]))
        return float(np.mean(vals))

    with open(log_path, "w", newline="") as logf:
        writer = csv.writer(logf)
        writer.writerow(["epoch", "l_rec", "l_hrtf", "l_itd", "l_ild",
                         "l_itd_us", "l_ild_db", "l_total", "val_nmse_db"])
        for epoch in range(1, exp.epochs + 1):
            reports = []
            for _ in range(steps):
                idx = rng.choice(n_train, size=exp.batch_size,
                                 replace=n_train < exp.batch_size)
                ms = rng.choice(np.asarray(exp.sparsity), size=exp.batch_size)
                h = payloads[idx].astype(np.float32)
                lab = labmats[idx]
                mask = np.stack([masks[int(m)] for m in ms]).astype(np.float32)
                out, cues = M.forward(h, mask, dirs, params, cfg)
                l_r = loss_rec(out, h, mask)
                l_h = loss_hrtf(out, h, cfg.K)
                if cues is not None:
                    l_i, l_l = loss_cues(cues, lab, mask, stats)
                else:
                    l_i = l_l = None
                total, report = loss_total(l_r, l_h, l_i, l_l, weights, stats)
                opt.zero_grad()
                total.backward()  # raises NumericError on non-finite loss
                opt.step()
                step_count += 1
                reports.append(report)
            row = {
                "epoch": epoch,
                "l_rec": float(np.mean([r.l_rec for r in reports])),
                "l_hrtf": float(np.mean([r.l_hrtf for r in reports])),
                "l_itd": float(np.mean([r.l_itd for r in reports])),
                "l_ild": float(np.mean([r.l_ild for r in reports])),
                "l_itd_us": float(np.mean([r.l_itd_us for r in reports])),
                "l_ild_db": float(np.mean([r.l_ild_db for r in reports])),
                "l_total": float(np.mean([r.l_total for r in reports])),
                "val_nmse_db": "",
            }
            if epoch % exp.val_every == 0 or epoch == exp.epochs:
                val = run_validation()
                row["val_nmse_db"] = val
                if best_val is None or val < best_val:
                    best_val = val
                    save_checkpoint(
                        ckpt_path, params, opt.hyperparams(), step_count,
                        cfg.to_dict(),
                        extra={"cue_stats": stats.to_dict(),
                               "seed": exp.seed,
                               "sample_rate_hz": fs,
                               "val_nmse_db": val},
                    )
            history.append(row)
            writer.writerow([row[c] for c in
                             ("epoch", "l_rec", "l_hrtf", "l_itd", "l_ild",
                              "l_itd_us", "l_ild_db", "l_total", "val_nmse_db")])
    if best_val is None:  # epochs < val_every edge: still save the final state
        save_checkpoint(
            ckpt_path, params, opt.hyperparams(), step_count, cfg.to_dict(),
            extra={"cue_stats": stats.to_dict(), "seed": exp.seed,
                   "sample_rate_hz": fs},
        )
    return {
        "checkpoint": ckpt_path,
        "log": log_path,
        "history": history,
        "best_val_nmse_db": best_val,
        "params": params,
        "config": cfg,
        "stats": stats,
    }


def predict_field(stacked: StackedHrirs, mask, params, cfg: M.ModelConfig):
    """Model prediction for one subject as a (L, 2K) float32 array."""
    h = stacked.payload.astype(np.float32)[None]
    m = np.asarray(mask, dtype=np.float32)[None]
    out, _ = M.forward(h, m, stacked.directions, params, cfg)
    return out.data[0]


def load_model(checkpoint_path: str):
    """(params, config, stats, extra) from a checkpoint file."""
    arrays, manifest = load_checkpoint(checkpoint_path)
    cfg = M.ModelConfig.from_dict(manifest.get("model_config", {}))
    params = {name: parameter(arr) for name, arr in arrays.items()}
    M.validate_params(params, cfg)
    extra = manifest.get("extra", {})
    stats = CueStats.from_dict(extra["cue_stats"]) if "cue_stats" in extra \
        else CueStats()
    return params, cfg, stats, extra


def nearest_neighbor_baseline(payload, directions, mask) -> np.ndarray:
    """Copy each missing row from the nearest measured direction
    (great-circle; ties to the lower index)."""
    payload = np.asarray(payload)
    mask = np.asarray(mask)
    measured = np.nonzero(mask != 0)[0]
    if measured.size == 0:
        raise ConfigError("baseline needs at least one measured direction")
    dist = _pairwise_great_circle_deg(np.asarray(directions, dtype=np.float64))
    out = payload.copy()
    for l in np.nonzero(mask == 0)[0]:
        j = measured[int(np.argmin(dist[l, measured]))]  # argmin ties: lowest
        out[l] = payload[j]
    return out


def evaluate_subjects(subjects, ms, predict, fs) -> list:
    """Metric rows for a prediction function over fixed per-M masks.

    predict(stacked, mask) -> (L, 2K). Returns one dict per (subject, M)
    plus an aggregate row per M with subject_id 'aggregate'.
    """
    dirs, _, _ = _shared_grid(subjects)
    masks = masks_for(dirs, ms)
    rows = []
    for m in ms:
        per_subject = []
        for s in subjects:
            pred = predict(s.stacked, masks[m])
            ref = s.stacked.payload
            row = {
                "subject_id": s.stacked.subject_id,
                "M": m,
                "nmse_db": nmse_db(pred, ref, masks[m]),
                "cd": cosine_distance(pred, ref, masks[m]),
                "itd_e_us": itd_e_us(pred, ref, masks[m], fs),
                "ild_e_db": ild_e_db(pred, ref, masks[m]),
            }
            per_subject.append(row)
            rows.append(row)
        rows.append({
            "subject_id": "aggregate",
            "M": m,
            "nmse_db": float(np.mean([r["nmse_db"] for r in per_subject])),
            "cd": float(np.mean([r["cd"] for r in per_subject])),
            "itd_e_us": float(np.mean([r["itd_e_us"] for r in per_subject])),
            "ild_e_db": float(np.mean([r["ild_e_db"] for r in per_subject])),
        })
    return rows


def write_metric_csv(rows, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row[c] for c in METRIC_COLUMNS})


def evaluate_checkpoint(checkpoint_path: str, corpus_dir: str, ms,
                        subject_ids=None, mp: bool = False) -> list:
    """Standard evaluation: fixed farthest-point masks per M."""
    params, cfg, _, _ = load_model(checkpoint_path)
    subjects = load_corpus(corpus_dir)
    if subject_ids:
        wanted = set(subject_ids)
        subjects = [s for s in subjects if s.stacked.subject_id in wanted]
        if len(subjects) != len(wanted):
            got = {s.stacked.subject_id for s in subjects}
            raise ConfigError(f"subjects not in corpus: {sorted(wanted - got)}")
    if mp:
        subjects = [mp_transform(s) for s in subjects]
    _, fs, k = _shared_grid(subjects)
    if cfg.K != k:
        raise DataError(f"checkpoint K={cfg.K} but corpus K={k}")
    return evaluate_subjects(
        subjects, ms, lambda st, mask: predict_field(st, mask, params, cfg), fs
    )


ABLATION_VARIANTS = (
    ("full", AblationFlags()),
    ("no_sinusoidal", AblationFlags(no_sinusoidal=True)),
    ("no_cue_heads", AblationFlags(no_cue_heads=True)),
    ("no_refine", AblationFlags(no_refine=True)),
    ("no_hrtf_loss", AblationFlags(no_hrtf_loss=True)),
    ("mp_preprocess", AblationFlags(mp_preprocess=True)),
)


def run_ablation(exp: ExperimentConfig, out_dir: str, eval_m: int = 5) -> list:
    """Train and evaluate the six standard variants with a shared seed.

    Returns rows of {variant, nmse_db, cd, itd_e_us, ild_e_db} (aggregate
    over validation subjects at M=eval_m) and writes ablation.csv plus a
    per-variant run directory. Never mutates the base config.
    """
    os.makedirs(out_dir, exist_ok=True)
    table = []
    for name, flags in ABLATION_VARIANTS:
        variant = replace(exp, ablation=flags)
        run_dir = os.path.join(out_dir, name)
        result = train(variant, run_dir)
        # evaluate from the saved best checkpoint, exactly as `eval` would
        _, val_set = split_corpus(load_corpus(exp.corpus_dir), variant)
        val_ids = [s.stacked.subject_id for s in val_set]
        rows = evaluate_checkpoint(result["checkpoint"], exp.corpus_dir,
                                   [eval_m], subject_ids=val_ids,
                                   mp=flags.mp_preprocess)
        agg = [r for r in rows if r["subject_id"] == "aggregate"][0]
        table.append({
            "variant": name,
            "nmse_db": agg["nmse_db"],
            "cd": agg["cd"],
            "itd_e_us": agg["itd_e_us"],
            "ild_e_db": agg["ild_e_db"],
        })
    path = os.path.join(out_dir, "ablation.csv")
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=("variant", "nmse_db", "cd", "itd_e_us", "ild_e_db"))
        writer.writeheader()
        for row in table:
            writer.writerow(row)
    return table


def render_heatmap(stacked: StackedHrirs, out_path: str) -> np.ndarray:
    """Write an amplitude heatmap as a binary PGM (P5, maxval 255).

    Columns are directions in canonical order, rows are the 2K time
    samples (left ear stacked above right). Amplitudes map symmetrically
    around mid-gray: 0 -> 128, +max -> 255, -max -> 0. An all-zero field
    renders flat mid-gray.
    """
    order = canonical_order(stacked.directions)
    img = stacked.payload[order].T.astype(np.float64)  # (2K, L)
    peak = float(np.max(np.abs(img)))
    if peak > 0:
        pixels = np.round(127.5 * (1.0 + img / peak))
    else:
        pixels = np.full_like(img, 128.0)
    pixels = np.clip(pixels, 0, 255).astype(np.uint8)
    h, w = pixels.shape
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    with open(out_path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
    return pixels


def upsample(checkpoint_path: str, bundle_path: str, targets, out_path: str):
    """Predict HRIRs at arbitrary target directions.

    The output bundle holds the measured rows (bit-exact pass-through)
    followed by predictions at targets not already measured. Targets that
    exactly match a measured direction are deduplicated, so requesting
    the measured set returns the input bundle.
    """
    params, cfg, _, _ = load_model(checkpoint_path)
    st = read_bundle(bundle_path)
    if cfg.K != st.n_taps:
        raise DataError(f"checkpoint K={cfg.K} but bundle K={st.n_taps}")
    measured_keys = {tuple(row) for row in st.directions}
    novel = []
    seen = set()
    for t in targets:
        d = Direction.of(float(t[0]), float(t[1]),
                         float(t[2]) if len(t) > 2 else 1.5)
        key = (d.azimuth_deg, d.elevation_deg, d.radius_m)
        if key in measured_keys or key in seen:
            continue
        seen.add(key)
        novel.append(key)
    l0 = st.n_directions
    directions = np.concatenate(
        [st.directions, np.asarray(novel, dtype=np.float64).reshape(-1, 3)]
    )
    payload = np.concatenate(
        [st.payload,
         np.zeros((len(novel), st.payload.shape[1]), dtype=st.payload.dtype)]
    )
    mask = np.concatenate([np.ones(l0), np.zeros(len(novel))])
    if novel:
        out, _ = M.forward(payload.astype(np.float32)[None], mask[None],
                           directions, params, cfg)
        payload = out.data[0].astype(np.float32)
    result = StackedHrirs(
        subject_id=st.subject_id,
        directions=directions,
        payload=payload.astype(np.float32),
        sample_rate_hz=st.sample_rate_hz,
    )
    write_bundle(result, out_path)
    return result
