"""Experiment orchestration behind the ``ambsec`` command line.

Every random draw comes from a ``Prng`` stream addressed by the run seed, a
namespace for the kind of experiment, the grid point and the trial index.
Trials are grouped into fixed-size chunks that may run in worker processes;
results are merged in chunk order, so outputs do not depend on the number of
workers.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, nn
from .channel import ChannelParams, FadingModel, draw_channel, synthesize_frame
from .codec import SplitConfig, build_frames, merge_message, split_message, strip_frames
from .features import (
    feature_length,
    featurize_frame,
    read_dataset,
    write_dataset,
)
from .meta import MetaConfig, MetaTask, fine_tune, meta_train, write_episode_csv
from .mlk import PerfectCsi, build_covariances, energy_decide, mlk_decide
from .numerics import Prng, db_to_linear
from .rate import AXES, RateConfig, rate_sweep
from .security import uniform_bound_sweep

DETECTORS = ("mlk", "energy", "dl-pcsi", "dl-ecsi")
DATASET_MODES = {"pcsi": "perfect-csi", "ecsi": "estimated-csi"}
CHUNK_TRIALS = 32

# stream namespaces keep datasets, sweeps and demos statistically independent
NS_DATASET = 1
NS_BER = 2
NS_E2E = 3
NS_RATE = 4
NS_MODEL = 5


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration (exit code 2)."""


@dataclass
class DatasetSection:
    count: int = 10_000
    mode: str = "pcsi"
    alpha_dt_db: float = 5.0
    fading: dict | None = None


@dataclass
class TrainSection:
    hidden: list = field(default_factory=lambda: list(nn.DEFAULT_HIDDEN))
    learning_rate: float = 0.001
    batch_size: int = 1000
    epochs: int = 30
    seed: int | None = None


@dataclass
class MetaSection:
    eta: float = 0.1
    inner_steps: int = 5
    episodes: int = 1000
    inner_learning_rate: float = 0.01
    inner_batch_size: int = 100
    fine_tune_learning_rate: float = 0.01
    fine_tune_batch_size: int = 10
    fine_tune_epochs: int = 20


@dataclass
class RateSection:
    axis: str = "theta0"
    grid: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    alpha_dt_db: float = 5.0
    trials_signal: int = 1000
    trials_channel: int = 100


@dataclass
class SecuritySection:
    P: int = 100
    beta_grid: list = field(default_factory=lambda: [round(0.01 * i, 2) for i in range(1, 51)])


@dataclass
class E2ESection:
    message_len: int = 1000
    detector: str = "mlk"


@dataclass
class ExperimentConfig:
    seed: int = 0
    M: int = 10
    N: int = 50
    frame_I: int = 100
    pilot_F: int = 10
    stride_K: int = 10
    alpha_dt_grid: list = field(default_factory=lambda: [1.0, 5.0, 9.0])
    alpha_bt: float = -10.0
    alpha_bt_grid: list | None = None
    alpha_bt_mode: str = "relative"
    antennas_grid: list | None = None
    theta0: float = 0.5
    trials: int = 100_000
    detectors: list = field(default_factory=lambda: ["mlk"])
    fading: dict = field(default_factory=lambda: {"family": "rayleigh"})
    models: dict = field(default_factory=dict)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    train: TrainSection = field(default_factory=TrainSection)
    meta: MetaSection = field(default_factory=MetaSection)
    rate: RateSection = field(default_factory=RateSection)
    security: SecuritySection = field(default_factory=SecuritySection)
    e2e: E2ESection = field(default_factory=E2ESection)
    output: str | None = None

    _SECTIONS = {"dataset": DatasetSection, "train": TrainSection, "meta": MetaSection,
                 "rate": RateSection, "security": SecuritySection, "e2e": E2ESection}

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.alpha_dt_grid:
            raise ConfigError("alpha_dt_grid must not be empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.M < 1 or self.N < 1:
            raise ConfigError("M and N must be >= 1")
        if self.alpha_bt_mode not in ("relative", "absolute"):
            raise ConfigError("alpha_bt_mode must be 'relative' or 'absolute'")
        if not 0.0 <= self.theta0 <= 1.0:
            raise ConfigError("theta0 must be in [0, 1]")
        unknown = set(self.detectors) - set(DETECTORS)
        if unknown:
            raise ConfigError(f"unknown detectors {sorted(unknown)}; known: {DETECTORS}")
        if "dl-ecsi" in self.detectors and self.pilot_F < 2:
            raise ConfigError("dl-ecsi needs at least two pilot bits")
        if self.dataset.mode not in DATASET_MODES:
            raise ConfigError(f"dataset mode must be one of {sorted(DATASET_MODES)}")
        if self.rate.axis not in AXES:
            raise ConfigError(f"rate axis must be one of {AXES}")
        try:
            self.split_config
            self.fading_model
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for name, section in cls._SECTIONS.items():
            if name in d and isinstance(d[name], dict):
                sub_known = {f.name for f in dataclasses.fields(section)}
                bad = set(d[name]) - sub_known
                if bad:
                    raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
                d[name] = section(**d[name])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def header(self) -> str:
        return (f"ambsec {__version__} seed={self.seed} config_hash={self.config_hash()} "
                f"pilot_F={self.pilot_F} alpha_bt_mode={self.alpha_bt_mode}")

    @property
    def split_config(self) -> SplitConfig:
        return SplitConfig(self.stride_K, self.pilot_F, self.frame_I)

    @property
    def fading_model(self) -> FadingModel:
        return FadingModel.from_dict(self.fading)

    def channel_params(self, alpha_dt_db: float, alpha_bt_db: float | None = None,
                       M: int | None = None, fading: FadingModel | None = None,
                       N: int | None = None) -> ChannelParams:
        """Linear SNRs for a grid point.

        In ``relative`` mode the configured backscatter figure is the ratio of
        backscatter to direct SNR, so the backscatter SNR rises with transmit
        power; in ``absolute`` mode it is the backscatter SNR itself.
        """
        bt_db = self.alpha_bt if alpha_bt_db is None else alpha_bt_db
        if self.alpha_bt_mode == "relative":
            bt_db = bt_db + alpha_dt_db
        return ChannelParams(
            alpha_dt=db_to_linear(alpha_dt_db),
            alpha_bt=db_to_linear(bt_db),
            M=self.M if M is None else M,
            N=self.N if N is None else N,
            fading=self.fading_model if fading is None else fading,
        )


def _run_chunks(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _chunks(total: int, size: int = CHUNK_TRIALS) -> list[tuple[int, int]]:
    return [(start, min(start + size, total)) for start in range(0, total, size)]


# ---------------------------------------------------------------- datasets

def _draw_bit(rng: Prng, theta0: float) -> int:
    return int(rng.random() >= theta0)


def make_record(rng: Prng, params: ChannelParams, mode: str, pilot_F: int,
                theta0: float) -> tuple[np.ndarray, int]:
    """One labelled feature vector; each record has its own channel draw."""
    chan = draw_channel(rng, params)
    e = _draw_bit(rng, theta0)
    if mode == "ecsi":
        half = pilot_F // 2
        bits = [0] * half + [1] * half + [e]
        blocks = synthesize_frame(rng, chan, params, bits)
        feats = featurize_frame(blocks, "estimated-csi", F=pilot_F)
    else:
        blocks = synthesize_frame(rng, chan, params, [e])
        feats = featurize_frame(blocks, "perfect-csi", PerfectCsi.from_channel(chan, params), F=0)
    return feats[0], e


def _dataset_chunk(job) -> tuple[np.ndarray, np.ndarray]:
    seed, start, stop, params, mode, pilot_F, theta0, stream = job
    root = Prng(seed, NS_DATASET).substream(stream)
    X = np.empty((stop - start, feature_length(params.M)))
    y = np.empty(stop - start, dtype=np.uint8)
    for j, r in enumerate(range(start, stop)):
        X[j], y[j] = make_record(root.substream(r), params, mode, pilot_F, theta0)
    return X, y


def generate_dataset(cfg: ExperimentConfig, count: int, mode: str, *, alpha_dt_db: float | None = None,
                     fading: FadingModel | None = None, stream: int = 0,
                     workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    if count < 1:
        raise ConfigError("dataset count must be >= 1")
    if mode not in DATASET_MODES:
        raise ConfigError(f"dataset mode must be one of {sorted(DATASET_MODES)}")
    if mode == "ecsi" and cfg.pilot_F < 2:
        raise ConfigError("ecsi datasets need pilot_F >= 2")
    ds = cfg.dataset
    if fading is None and ds.fading is not None:
        fading = FadingModel.from_dict(ds.fading)
    params = cfg.channel_params(ds.alpha_dt_db if alpha_dt_db is None else alpha_dt_db, fading=fading)
    jobs = [(cfg.seed, a, b, params, mode, cfg.pilot_F, cfg.theta0, stream)
            for a, b in _chunks(count, 256)]
    parts = _run_chunks(_dataset_chunk, jobs, workers)
    return np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def gen_dataset(cfg: ExperimentConfig, count: int, mode: str, out, workers: int = 1, **kw) -> Path:
    X, y = generate_dataset(cfg, count, mode, workers=workers, **kw)
    out = Path(out)
    write_dataset(out, X, y, cfg.M)
    return out


# ---------------------------------------------------------------- BER sweep

@dataclass
class BerRow:
    detector: str
    M: int
    alpha_dt_db: float
    alpha_bt_db: float
    trials: int
    bits_tested: int
    bit_errors: int
    ber: float
    seed: int

    @property
    def stderr(self) -> float:
        return float(np.sqrt(max(self.ber * (1 - self.ber), 1e-300) / self.bits_tested))


BER_COLUMNS = [f.name for f in dataclasses.fields(BerRow)]


def _frame_bits(rng: Prng, split: SplitConfig, theta0: float) -> np.ndarray:
    payload = (rng.random(split.payload_per_frame) >= theta0).astype(np.uint8)
    return np.concatenate([split.pilots, payload])


def detect_frame(detector: str, blocks: np.ndarray, csi: PerfectCsi, F: int,
                 model: nn.MlpModel | None = None) -> np.ndarray:
    """Payload decisions of one detector for one received frame."""
    payload = blocks[F:]
    if detector in ("mlk", "energy"):
        cov = build_covariances(csi)
        decide = mlk_decide if detector == "mlk" else energy_decide
        return np.atleast_1d(decide(payload, cov))
    mode = "perfect-csi" if detector == "dl-pcsi" else "estimated-csi"
    feats = featurize_frame(blocks, mode, csi, F)
    return np.atleast_1d(nn.predict(model, feats))


def _ber_chunk(job) -> dict:
    seed, point, start, stop, params, split, theta0, detectors, models = job
    root = Prng(seed, NS_BER).substream(point)
    F = split.pilot_F
    errors = dict.fromkeys(detectors, 0)
    feats = {d: [] for d in detectors if d.startswith("dl-")}
    truth = []
    for t in range(start, stop):
        rng = root.substream(t)
        chan = draw_channel(rng, params)
        bits = _frame_bits(rng, split, theta0)
        blocks = synthesize_frame(rng, chan, params, bits)
        csi = PerfectCsi.from_channel(chan, params)
        payload_bits = bits[F:]
        truth.append(payload_bits)
        for det in detectors:
            if det in feats:
                mode = "perfect-csi" if det == "dl-pcsi" else "estimated-csi"
                feats[det].append(featurize_frame(blocks, mode, csi, F))
            else:
                errors[det] += int(np.sum(detect_frame(det, blocks, csi, F) != payload_bits))
    truth = np.concatenate(truth)
    for det, chunks in feats.items():
        decisions = np.atleast_1d(nn.predict(models[det], np.vstack(chunks)))
        errors[det] += int(np.sum(decisions != truth))
    return errors


def _load_models(cfg: ExperimentConfig, detectors) -> dict:
    models = {}
    for det in detectors:
        if not det.startswith("dl-"):
            continue
        path = cfg.models.get(det)
        if not path:
            raise ConfigError(f"detector {det} needs a model file (models.{det})")
        if not Path(path).exists():
            raise ConfigError(f"model file for {det} not found: {path}")
        model = _read_file(nn.load_model, path)
        if model.layer_sizes[0] != feature_length(cfg.M):
            raise ConfigError(f"model {path} expects {model.layer_sizes[0]} inputs, "
                              f"M={cfg.M} gives {feature_length(cfg.M)}")
        models[det] = model
    return models


def ber_grid(cfg: ExperimentConfig) -> list[tuple[int, float, float]]:
    Ms = cfg.antennas_grid or [cfg.M]
    bts = cfg.alpha_bt_grid or [cfg.alpha_bt]
    return [(int(M), float(dt), float(bt)) for M in Ms for dt in cfg.alpha_dt_grid for bt in bts]


def run_ber_sweep(cfg: ExperimentConfig, workers: int = 1) -> list[BerRow]:
    detectors = list(cfg.detectors)
    grid = ber_grid(cfg)
    if any(d.startswith("dl-") for d in detectors) and len({M for M, _, _ in grid}) > 1:
        raise ConfigError("DL detectors are trained for one antenna count; use a single M")
    models = _load_models(cfg, detectors)
    split = cfg.split_config
    rows = []
    for point, (M, dt_db, bt_db) in enumerate(grid):
        params = cfg.channel_params(dt_db, bt_db, M=M)
        jobs = [(cfg.seed, point, a, b, params, split, cfg.theta0, detectors, models)
                for a, b in _chunks(cfg.trials)]
        totals = dict.fromkeys(detectors, 0)
        for part in _run_chunks(_ber_chunk, jobs, workers):
            for det, n in part.items():
                totals[det] += n
        bits = cfg.trials * split.payload_per_frame
        for det in detectors:
            rows.append(BerRow(det, M, dt_db, bt_db, cfg.trials, bits, totals[det],
                               totals[det] / bits, cfg.seed))
    return rows


def write_ber_csv(rows: list[BerRow], path, header_comment: str = "") -> None:
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BER_COLUMNS)
        for r in rows:
            writer.writerow([r.detector, r.M, repr(r.alpha_dt_db), repr(r.alpha_bt_db), r.trials,
                             r.bits_tested, r.bit_errors, repr(r.ber), r.seed])


# ---------------------------------------------------------------- training

def train_config(cfg: ExperimentConfig) -> nn.TrainConfig:
    t = cfg.train
    return nn.TrainConfig(t.learning_rate, t.batch_size, t.epochs,
                          cfg.seed if t.seed is None else t.seed)


def fresh_model(cfg: ExperimentConfig, n_inputs: int) -> nn.MlpModel:
    sizes = (n_inputs, *cfg.train.hidden, 2)
    return nn.init_model(Prng(cfg.seed, NS_MODEL), sizes)


def _read_file(reader, path):
    """Run a binary-format reader; malformed content is reported as an I/O error."""
    try:
        return reader(path)
    except ValueError as exc:
        raise OSError(f"{path}: {exc}") from exc


def _load_training_set(cfg: ExperimentConfig, path) -> tuple[np.ndarray, np.ndarray]:
    X, y, M = _read_file(read_dataset, path)
    if len(y) == 0:
        raise ConfigError(f"dataset {path} is empty")
    if M != cfg.M:
        raise ConfigError(f"dataset {path} has M={M} but the config says M={cfg.M}")
    return X, y


def write_history_csv(history: list[nn.EpochStats], path, header_comment: str = "") -> None:
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss", "accuracy"])
        for h in history:
            writer.writerow([h.epoch, repr(h.loss), repr(h.accuracy)])


def run_train(cfg: ExperimentConfig, dataset_path, model_out,
              history_out=None) -> tuple[nn.MlpModel, list[nn.EpochStats]]:
    X, y = _load_training_set(cfg, dataset_path)
    model, history = nn.train(fresh_model(cfg, X.shape[1]), X, y, train_config(cfg))
    if not model.all_finite():
        raise FloatingPointError("training diverged to non-finite parameters")
    nn.save_model(model, model_out)
    if history_out is not None:
        write_history_csv(history, history_out, cfg.header())
    return model, history


def meta_config(cfg: ExperimentConfig) -> MetaConfig:
    m = cfg.meta
    inner = nn.TrainConfig(m.inner_learning_rate, m.inner_batch_size, 1, cfg.seed)
    return MetaConfig(m.eta, m.inner_steps, m.episodes, inner, cfg.seed)


def fine_tune_config(cfg: ExperimentConfig) -> nn.TrainConfig:
    m = cfg.meta
    return nn.TrainConfig(m.fine_tune_learning_rate, m.fine_tune_batch_size, m.fine_tune_epochs,
                          cfg.seed)


def run_meta_train(cfg: ExperimentConfig, task_datasets: dict, model_out, history_out=None,
                   fine_tune_dataset=None, fine_tuned_out=None):
    """Meta-train on labelled task datasets (``{task_id: path}``), optionally fine-tune."""
    if not task_datasets:
        raise ConfigError("meta-training needs at least one task dataset")
    tasks = []
    for task_id, path in task_datasets.items():
        X, y = _load_training_set(cfg, path)
        tasks.append(MetaTask(task_id, cfg.fading_model, X, y))
    model = fresh_model(cfg, tasks[0].X.shape[1])
    model, history = meta_train(model, tasks, meta_config(cfg))
    nn.save_model(model, model_out)
    if history_out is not None:
        write_episode_csv(history, history_out, cfg.header())
    tuned = None
    if fine_tune_dataset is not None:
        X, y = _load_training_set(cfg, fine_tune_dataset)
        tuned, _ = fine_tune(model, X, y, fine_tune_config(cfg))
        if fine_tuned_out is not None:
            nn.save_model(tuned, fine_tuned_out)
    return model, history, tuned


# ---------------------------------------------------------------- rate / security

def run_rate_sweep(cfg: ExperimentConfig) -> list:
    r = cfg.rate
    params = cfg.channel_params(r.alpha_dt_db, N=1)
    rcfg = RateConfig(cfg.theta0, params, r.trials_signal, r.trials_channel,
                      couple_backscatter=cfg.alpha_bt_mode == "relative")
    grid = [db_to_linear(x) for x in r.grid] if r.axis == "alpha_dt" else list(r.grid)
    rows = rate_sweep(r.axis, grid, rcfg, seed=cfg.seed, namespace=NS_RATE)
    if r.axis == "alpha_dt":
        rows = [dataclasses.replace(row, axis_value=float(x)) for row, x in zip(rows, r.grid)]
    return rows


def run_guess_entropy(cfg: ExperimentConfig) -> list:
    return uniform_bound_sweep(cfg.security.P, cfg.security.beta_grid)


# ---------------------------------------------------------------- end to end

def run_e2e_demo(cfg: ExperimentConfig, alpha_dt_db: float | None = None,
                 model: nn.MlpModel | None = None) -> dict:
    """Split a random message, send the AmB part over the simulated link, detect, merge.

    The active part is assumed delivered intact; only backscatter errors can
    corrupt the reconstruction.
    """
    det = cfg.e2e.detector
    if det not in DETECTORS:
        raise ConfigError(f"unknown e2e detector {det!r}")
    if det.startswith("dl-") and model is None:
        model = _load_models(cfg, [det])[det]
    split = cfg.split_config
    dt_db = cfg.alpha_dt_grid[0] if alpha_dt_db is None else alpha_dt_db
    params = cfg.channel_params(dt_db)
    root = Prng(cfg.seed, NS_E2E)
    message = root.substream(0).integers(0, 2, cfg.e2e.message_len).astype(np.uint8)
    parts = split_message(message, split)
    frames = build_frames(parts.amb_bits, split)
    received = []
    for i, frame in enumerate(frames):
        rng = root.substream(i + 1)
        chan = draw_channel(rng, params)
        blocks = synthesize_frame(rng, chan, params, frame.bits)
        decided = detect_frame(det, blocks, PerfectCsi.from_channel(chan, params),
                               split.pilot_F, model)
        received.append(dataclasses.replace(frame, payload=decided.astype(np.uint8)))
    amb_hat = strip_frames(received, len(parts.amb_bits))
    rebuilt = merge_message(dataclasses.replace(parts, amb_bits=amb_hat), split)
    return {
        "version": __version__,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "detector": det,
        "alpha_dt_db": dt_db,
        "alpha_bt_db": cfg.alpha_bt,
        "alpha_bt_mode": cfg.alpha_bt_mode,
        "message_bits": int(message.size),
        "amb_bits": int(parts.amb_bits.size),
        "active_bits": int(parts.active_bits.size),
        "beta": parts.beta,
        "frames": len(frames),
        "amb_bit_errors": int(np.sum(amb_hat != parts.amb_bits)),
        "message_bit_errors": int(np.sum(rebuilt != message)),
        "reconstructed": bool(np.array_equal(rebuilt, message)),
    }


def write_json(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
