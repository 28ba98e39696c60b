"""Experiment orchestration.

A run is described entirely by an ExperimentConfig; everything downstream
(subset selection, model init, attack noise, purifier init) derives from
its single seed, so rerunning a config reproduces the same RunReport bit
for bit, timestamp metadata aside.

Stages (classifier training, attack batches, purifier training) are cached
as checkpoints under out_dir/cache, keyed by a SHA-256 digest of the exact
inputs that determine the artifact: data fingerprints, model spec, train
and attack settings, and upstream stage digests. Reruns and overlapping
experiments (same attacker, different epsilon) reuse artifacts instead of
recomputing them.

The report has one row per epsilon in the grid:

    epsilon, clean_acc, adv_acc, recon_acc

clean_acc is the evaluator's accuracy on untouched test images, adv_acc on
attacked ones, recon_acc on attacked-then-purified ones. White-box means
the attacked model is the evaluator; black-box crafts on the attacker and
scores a separately trained evaluator.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__, cednet, dataio, qvc
from .attacks import AdversarialBatch, AttackConfig, attack_batch
from .errors import ShapeMismatch
from .rng import derive

DEFAULT_GRID = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)


@dataclass(frozen=True)
class ModelSpec:
    n_layers: int
    seed: int
    n_qubits: int = 10
    topology: str = "ring"

    @property
    def tag(self) -> str:
        return f"qvc-L{self.n_layers}-q{self.n_qubits}-{self.topology}-s{self.seed}"


@dataclass
class ExperimentConfig:
    data_dir: str
    out_dir: str
    dataset: str = "mnist"
    box: str = "white"
    attack: AttackConfig = field(default_factory=AttackConfig)
    attacker: ModelSpec = field(default_factory=lambda: ModelSpec(20, 0))
    evaluator: ModelSpec = field(default_factory=lambda: ModelSpec(20, 0))
    epsilon_grid: tuple = DEFAULT_GRID
    qvc_train: qvc.TrainConfig = field(default_factory=qvc.TrainConfig)
    ae_train: cednet.AeTrainConfig = field(default_factory=cednet.AeTrainConfig)
    train_per_class: int = 0  # 0 = full split
    test_per_class: int = 0
    shared_ae: bool = False
    grad_mode: str = "adjoint"
    workers: int = 1
    seed: int = 0

    def validate(self) -> "ExperimentConfig":
        if self.box not in ("white", "black"):
            raise ShapeMismatch(f"box must be white or black, got {self.box!r}")
        if not self.epsilon_grid:
            raise ShapeMismatch("epsilon grid is empty")
        grid = tuple(float(e) for e in self.epsilon_grid)
        if any(e < 0 for e in grid):
            raise ShapeMismatch("epsilon grid has negative entries")
        if list(grid) != sorted(grid):
            raise ShapeMismatch("epsilon grid must be sorted ascending")
        same = self.attacker == self.evaluator
        if self.box == "white" and not same:
            raise ShapeMismatch("white-box requires attacker and evaluator to match")
        if self.box == "black" and same:
            raise ShapeMismatch("black-box requires a distinct evaluator model")
        self.attack.validate()
        if self.grad_mode not in qvc.GRAD_MODES:
            raise ShapeMismatch(f"unknown grad_mode {self.grad_mode!r}")
        if self.workers < 1:
            raise ShapeMismatch(f"workers must be >= 1, got {self.workers}")
        return self


def desk_config(
    data_dir: str,
    out_dir: str,
    box: str = "white",
    attack_kind: str = "pgd",
    dataset: str = "mnist",
    seed: int = 1,
    **overrides,
) -> ExperimentConfig:
    """The small-but-meaningful preset: 200/50 per class, 20-layer attacker,
    10 training epochs, PGD eps 0.3 with 10 steps; black-box evaluates a
    40-layer model trained on the same data.
    """
    attacker = ModelSpec(20, derive(seed, "attacker"))
    evaluator = attacker if box == "white" else ModelSpec(40, derive(seed, "evaluator"))
    cfg = ExperimentConfig(
        data_dir=data_dir,
        out_dir=out_dir,
        dataset=dataset,
        box=box,
        attack=AttackConfig(kind=attack_kind, epsilon=0.3, steps=10),
        attacker=attacker,
        evaluator=evaluator,
        qvc_train=qvc.TrainConfig(learning_rate=0.005, batch_size=64, epochs=10, seed=0),
        ae_train=cednet.AeTrainConfig(learning_rate=0.005, batch_size=64, epochs=30, seed=0),
        train_per_class=200,
        test_per_class=50,
        seed=seed,
    )
    for key, value in overrides.items():
        if not hasattr(cfg, key):
            raise ShapeMismatch(f"unknown config field {key!r}")
        setattr(cfg, key, value)
    return cfg


@dataclass
class ReportRow:
    epsilon: float
    clean_acc: float
    adv_acc: float
    recon_acc: float


@dataclass
class RunReport:
    rows: list
    metadata: dict

    def row(self, epsilon: float) -> ReportRow:
        for r in self.rows:
            if abs(r.epsilon - epsilon) < 1e-12:
                return r
        raise KeyError(f"no row for epsilon {epsilon}")


def config_digest(payload) -> str:
    """SHA-256 of the canonical JSON form of a plain dict payload."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def data_fingerprint(images: np.ndarray, labels: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(images).tobytes())
    h.update(np.ascontiguousarray(labels).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------- checkpoints

def save_qvc(path: str, params: qvc.QvcParams, meta: dict | None = None) -> None:
    m = dict(meta or {})
    m.update(
        n_qubits=params.n_qubits,
        n_layers=params.n_layers,
        topology=params.topology,
        version=params.version,
    )
    dataio.write_checkpoint(path, dataio.KIND_QVC, m, {"angles": params.angles})


def load_qvc(path: str) -> tuple[qvc.QvcParams, dict]:
    kind, meta, arrays = dataio.read_checkpoint(path)
    if kind != dataio.KIND_QVC:
        raise ShapeMismatch(f"{path} holds {dataio.KIND_NAMES[kind]}, expected qvc")
    params = qvc.QvcParams(
        arrays["angles"],
        int(meta["n_qubits"]),
        int(meta["n_layers"]),
        str(meta["topology"]),
        str(meta.get("version", qvc.VERSION)),
    )
    return params.validate(), meta


def save_autoencoder(path: str, params: cednet.AeParams, meta: dict | None = None) -> None:
    m = dict(meta or {})
    m["version"] = params.version
    arrays = {name: getattr(params, name) for name in cednet.AeParams.FIELDS}
    dataio.write_checkpoint(path, dataio.KIND_AUTOENCODER, m, arrays)


def load_autoencoder(path: str) -> tuple[cednet.AeParams, dict]:
    kind, meta, arrays = dataio.read_checkpoint(path)
    if kind != dataio.KIND_AUTOENCODER:
        raise ShapeMismatch(
            f"{path} holds {dataio.KIND_NAMES[kind]}, expected autoencoder"
        )
    missing = [n for n in cednet.AeParams.FIELDS if n not in arrays]
    if missing:
        raise ShapeMismatch(f"{path} is missing arrays {missing}")
    params = cednet.AeParams(
        **{n: arrays[n] for n in cednet.AeParams.FIELDS},
        version=str(meta.get("version", "ced-1")),
    )
    return params.validate(), meta


def save_adversarial(path: str, batch: AdversarialBatch, meta: dict | None = None) -> None:
    m = dict(meta or {})
    m["attack"] = asdict(batch.config)
    m["model_tag"] = batch.model_tag
    arrays = {
        "originals": batch.originals,
        "adversarials": batch.adversarials,
        "labels": batch.labels.astype(np.float64),
    }
    dataio.write_checkpoint(path, dataio.KIND_ADVERSARIAL, m, arrays)


def load_adversarial(path: str) -> tuple[AdversarialBatch, dict]:
    kind, meta, arrays = dataio.read_checkpoint(path)
    if kind != dataio.KIND_ADVERSARIAL:
        raise ShapeMismatch(
            f"{path} holds {dataio.KIND_NAMES[kind]}, expected adversarial_batch"
        )
    att = meta.get("attack", {})
    batch = AdversarialBatch(
        originals=arrays["originals"],
        adversarials=arrays["adversarials"],
        labels=arrays["labels"].astype(np.int64),
        config=AttackConfig(**att) if att else AttackConfig(),
        model_tag=str(meta.get("model_tag", "")),
    )
    if batch.originals.shape != batch.adversarials.shape:
        raise ShapeMismatch("originals and adversarials disagree in shape")
    return batch, meta


# ------------------------------------------------------------- cached stages

def _cache_path(cache_dir: str, stage: str, digest: str) -> str:
    return os.path.join(cache_dir, f"{stage}-{digest[:16]}.ckpt")


def train_or_load_qvc(
    cfg: ExperimentConfig,
    spec: ModelSpec,
    train_x: np.ndarray,
    train_y: np.ndarray,
    eval_x: np.ndarray,
    eval_y: np.ndarray,
) -> tuple[qvc.QvcModel, str]:
    train_cfg = replace(cfg.qvc_train, seed=spec.seed)
    key = {
        "stage": "qvc",
        "dataset": cfg.dataset,
        "data": data_fingerprint(train_x, train_y),
        "spec": asdict(spec),
        "train": asdict(train_cfg),
        "grad_mode": cfg.grad_mode,
    }
    digest = config_digest(key)
    path = _cache_path(os.path.join(cfg.out_dir, "cache"), "qvc", digest)
    if os.path.exists(path):
        params, meta = load_qvc(path)
        if params.n_layers != spec.n_layers or params.n_qubits != spec.n_qubits:
            raise ShapeMismatch(f"cached model at {path} does not match {spec}")
    else:
        params, metrics = qvc.train_qvc(
            train_x,
            train_y,
            spec.n_layers,
            train_cfg,
            eval_x,
            eval_y,
            n_qubits=spec.n_qubits,
            topology=spec.topology,
            grad_mode=cfg.grad_mode,
            workers=cfg.workers,
        )
        os.makedirs(os.path.dirname(path), exist_ok=True)
        save_qvc(
            path,
            params,
            {
                "cache_key": digest,
                "tag": spec.tag,
                "train": asdict(train_cfg),
                "epoch_losses": metrics.epoch_losses,
                "epoch_accuracies": metrics.epoch_accuracies,
                "n_steps": metrics.n_steps,
            },
        )
    model = qvc.QvcModel(params, cfg.grad_mode, cfg.workers, tag=spec.tag)
    return model, digest


def attack_or_load(
    cfg: ExperimentConfig,
    model: qvc.QvcModel,
    model_digest: str,
    images: np.ndarray,
    labels: np.ndarray,
    attack_cfg: AttackConfig,
) -> tuple[AdversarialBatch, str]:
    key = {
        "stage": "adv",
        "model": model_digest,
        "data": data_fingerprint(images, labels),
        "attack": asdict(attack_cfg),
    }
    digest = config_digest(key)
    path = _cache_path(os.path.join(cfg.out_dir, "cache"), "adv", digest)
    if os.path.exists(path):
        batch, _ = load_adversarial(path)
    else:
        batch = attack_batch(model, images, labels, attack_cfg)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        save_adversarial(path, batch, {"cache_key": digest})
    return batch, digest


def ae_or_load(
    cfg: ExperimentConfig,
    pair_digests: list,
    adv_images: np.ndarray,
    clean_images: np.ndarray,
    seed: int,
) -> tuple[cednet.AeParams, str]:
    train_cfg = replace(cfg.ae_train, seed=seed)
    key = {
        "stage": "ae",
        "pairs": sorted(pair_digests),
        "train": asdict(train_cfg),
    }
    digest = config_digest(key)
    path = _cache_path(os.path.join(cfg.out_dir, "cache"), "ae", digest)
    if os.path.exists(path):
        params, _ = load_autoencoder(path)
    else:
        params, losses = cednet.train_autoencoder(adv_images, clean_images, train_cfg)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        save_autoencoder(
            path, params, {"cache_key": digest, "losses": losses, "train": asdict(train_cfg)}
        )
    return params, digest


# ------------------------------------------------------------------ the runs

def _utc_stamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Execute the full grid for one config; see the module docstring.

    If a stage dies partway through the grid, rows computed so far land in
    out_dir/partial-report.json before the exception continues up.
    """
    cfg.validate()
    split = dataio.load_split(cfg.data_dir, cfg.dataset)
    sub = dataio.subset(
        split, (cfg.train_per_class, cfg.test_per_class), derive(cfg.seed, "subset")
    )
    train_x, train_y = sub.train_images.pixels, sub.train_labels.labels
    test_x, test_y = sub.test_images.pixels, sub.test_labels.labels

    attacker, att_digest = train_or_load_qvc(cfg, cfg.attacker, train_x, train_y, test_x, test_y)
    if cfg.box == "white":
        evaluator, eval_digest = attacker, att_digest
    else:
        evaluator, eval_digest = train_or_load_qvc(
            cfg, cfg.evaluator, train_x, train_y, test_x, test_y
        )
    clean_acc = evaluator.accuracy(test_x, test_y)

    grid = tuple(float(e) for e in cfg.epsilon_grid)
    rows: list[ReportRow] = []

    def train_attack(eps: float) -> tuple[AdversarialBatch, str]:
        acfg = replace(cfg.attack, epsilon=eps, seed=derive(cfg.seed, f"attack-train-{eps}"))
        return attack_or_load(cfg, attacker, att_digest, train_x, train_y, acfg)

    shared = None
    if cfg.shared_ae:
        batches, digests = zip(*(train_attack(eps) for eps in grid))
        adv_pool = np.concatenate([b.adversarials for b in batches])
        clean_pool = np.concatenate([b.originals for b in batches])
        shared, _ = ae_or_load(
            cfg, list(digests), adv_pool, clean_pool, derive(cfg.seed, "ae-shared")
        )

    try:
        for eps in grid:
            acfg = replace(
                cfg.attack, epsilon=eps, seed=derive(cfg.seed, f"attack-test-{eps}")
            )
            adv_test, _ = attack_or_load(cfg, attacker, att_digest, test_x, test_y, acfg)
            adv_acc = evaluator.accuracy(adv_test.adversarials, test_y)
            if shared is not None:
                ae = shared
            else:
                tr_batch, tr_digest = train_attack(eps)
                ae, _ = ae_or_load(
                    cfg,
                    [tr_digest],
                    tr_batch.adversarials,
                    tr_batch.originals,
                    derive(cfg.seed, f"ae-{eps}"),
                )
            recon = cednet.reconstruct_batch(ae, adv_test.adversarials)
            recon_acc = evaluator.accuracy(recon, test_y)
            rows.append(ReportRow(eps, clean_acc, adv_acc, recon_acc))
    except Exception:
        if rows:
            partial = RunReport(rows, {"partial": True, "timestamp": _utc_stamp()})
            os.makedirs(cfg.out_dir, exist_ok=True)
            with open(os.path.join(cfg.out_dir, "partial-report.json"), "w") as fh:
                fh.write(report_to_json(partial))
        raise

    metadata = {
        "dataset": cfg.dataset,
        "box": cfg.box,
        "attack": asdict(cfg.attack),
        "epsilon_grid": list(grid),
        "attacker": cfg.attacker.tag,
        "evaluator": cfg.evaluator.tag,
        "attacker_digest": att_digest,
        "evaluator_digest": eval_digest,
        "train_per_class": cfg.train_per_class,
        "test_per_class": cfg.test_per_class,
        "shared_ae": cfg.shared_ae,
        "grad_mode": cfg.grad_mode,
        "seed": cfg.seed,
        "qvc_train": asdict(cfg.qvc_train),
        "ae_train": asdict(cfg.ae_train),
        "package_version": __version__,
        "timestamp": _utc_stamp(),
    }
    return RunReport(rows, metadata)


def run_whitebox(cfg: ExperimentConfig) -> RunReport:
    if cfg.box != "white":
        raise ShapeMismatch("run_whitebox wants a white-box config")
    return run_experiment(cfg)


def run_blackbox(cfg: ExperimentConfig) -> RunReport:
    if cfg.box != "black":
        raise ShapeMismatch("run_blackbox wants a black-box config")
    return run_experiment(cfg)


# -------------------------------------------------------------------- output

CSV_HEADER = "epsilon,clean_acc,adv_acc,recon_acc"


def report_to_csv(report: RunReport) -> str:
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(f"{r.epsilon!r},{r.clean_acc!r},{r.adv_acc!r},{r.recon_acc!r}")
    return "\n".join(lines) + "\n"


def report_to_json(report: RunReport) -> str:
    payload = {
        "rows": [asdict(r) for r in report.rows],
        "metadata": report.metadata,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def report_from_json(text: str) -> RunReport:
    payload = json.loads(text)
    rows = [ReportRow(**r) for r in payload["rows"]]
    return RunReport(rows, payload.get("metadata", {}))


def strip_volatile(metadata: dict) -> dict:
    """Metadata minus the timestamp, for determinism comparisons."""
    return {k: v for k, v in metadata.items() if k != "timestamp"}


def write_report(report: RunReport, out_dir: str, stem: str = "report") -> dict:
    """Write CSV and JSON side by side; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, f"{stem}.csv"),
        "json": os.path.join(out_dir, f"{stem}.json"),
    }
    with open(paths["csv"], "w") as fh:
        fh.write(report_to_csv(report))
    with open(paths["json"], "w") as fh:
        fh.write(report_to_json(report))
    return paths
