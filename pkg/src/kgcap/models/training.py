"""Two-phase training loop shared by both decoders."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..corpus import CaptionRecord, Vocabulary
from ..errors import ConfigError, NumericError
from ..numerics import Adam
from ..seeds import derive_seed
from ..vlcf import FeatureStore
from .batches import make_batches, make_prefix_batches
from .checkpoint import save_checkpoint


@dataclass
class TrainSchedule:
    """Exploration phase at a higher learning rate, then fine-tuning."""

    phase1_lr: float = 1e-3
    phase1_epochs: int = 10
    phase2_lr: float = 1e-4
    phase2_epochs: int = 5
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.phase2_epochs > 0 and not self.phase2_lr < self.phase1_lr:
            raise ConfigError(
                f"phase2 lr ({self.phase2_lr}) must be below phase1 lr ({self.phase1_lr})"
            )

    def to_dict(self) -> dict:
        return {
            "phase1_lr": self.phase1_lr,
            "phase1_epochs": self.phase1_epochs,
            "phase2_lr": self.phase2_lr,
            "phase2_epochs": self.phase2_epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }


@dataclass
class TrainResult:
    curve: list[tuple[int, int, float]] = field(default_factory=list)  # (epoch, phase, loss)
    checkpoints: list[Path] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.curve[-1][2] if self.curve else float("nan")

    def write_log(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "phase", "loss"])
            for epoch, phase, loss in self.curve:
                writer.writerow([epoch, phase, repr(loss)])


def _epoch_batches(model, records, features, vocab, batch_size, rng):
    if model.kind == "transformer":
        return make_batches(records, features, vocab, batch_size, rng)
    return make_prefix_batches(records, features, vocab, batch_size, rng)


def train(
    model,
    schedule: TrainSchedule,
    records: list[CaptionRecord],
    features: FeatureStore,
    vocab: Vocabulary,
    out_dir: str | Path | None = None,
    stem: str = "model",
) -> TrainResult:
    """Run both phases; deterministic for a fixed schedule seed.

    Per-epoch loss is the sample mean (batch losses weighted by size), so
    it does not depend on shuffle order for fixed parameters. Checkpoints
    are written at each phase boundary when ``out_dir`` is given.
    """
    shuffle_rng = np.random.default_rng(derive_seed(schedule.seed, "shuffle"))
    model.set_dropout_rng(np.random.default_rng(derive_seed(schedule.seed, "dropout")))
    optimizer = Adam(dict(model.parameters()), lr=schedule.phase1_lr)
    result = TrainResult()
    epoch = 0
    step = 0
    phases = [(1, schedule.phase1_lr, schedule.phase1_epochs)]
    if schedule.phase2_epochs > 0:
        phases.append((2, schedule.phase2_lr, schedule.phase2_epochs))
    for phase, lr, n_epochs in phases:
        optimizer.lr = lr
        for _ in range(n_epochs):
            batches = _epoch_batches(
                model, records, features, vocab, schedule.batch_size, shuffle_rng
            )
            total_loss = 0.0
            total_n = 0
            for batch in batches:
                step += 1
                loss = model.loss(batch, train=True)
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericError(
                        f"non-finite loss at step {step} (epoch {epoch}, "
                        f"batch ids {batch.ids[:3]}...)"
                    )
                model.zero_grad()
                loss.backward()
                model.pre_step()
                optimizer.step()
                n = len(batch.ids)
                total_loss += value * n
                total_n += n
            result.curve.append((epoch, phase, total_loss / total_n))
            epoch += 1
        if out_dir is not None:
            base = Path(out_dir) / f"{stem}_phase{phase}"
            result.checkpoints.append(
                save_checkpoint(model, base, meta=_train_meta(schedule, epoch, optimizer))
            )
    if out_dir is not None:
        final = save_checkpoint(
            model, Path(out_dir) / stem, meta=_train_meta(schedule, epoch, optimizer)
        )
        result.checkpoints.append(final)
        result.write_log(Path(out_dir) / "training_log.csv")
    return result


def _train_meta(schedule: TrainSchedule, epoch: int, optimizer: Adam) -> dict:
    state = optimizer.state
    return {
        "schedule": schedule.to_dict(),
        "epoch": epoch,
        "optimizer": {
            "kind": "adam",
            "step_count": state.step_count,
            "lr": state.lr,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "eps": state.eps,
        },
    }


def evaluate_loss(model, records, features, vocab, batch_size: int = 32) -> float:
    """Sample-mean loss with dropout off and a fixed batch order."""
    batches = _epoch_batches(model, records, features, vocab, batch_size, np.random.default_rng(0))
    total_loss = 0.0
    total_n = 0
    for batch in batches:
        value = model.loss(batch, train=False).item()
        total_loss += value * len(batch.ids)
        total_n += len(batch.ids)
    return total_loss / total_n
