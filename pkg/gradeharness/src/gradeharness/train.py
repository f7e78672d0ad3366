"""Single-split training: AdamW, cross-entropy, cosine-annealed lr 0.001,
class-weighted sampling, no layer freezing.

``train_one`` also accumulates per-parameter update norms (the summed L2 of
each optimizer step's delta), which is how the no-freezing guarantee is
asserted: after training, every parameter tensor must have moved.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, TensorDataset, WeightedRandomSampler

from .dataset import Sample
from .errors import ConfigError, TrainingError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 50
    batch_size: int = 2
    seed: int = 0
    optimizer: str = "adamw"
    loss: str = "cross-entropy"
    scheduler: str = "cosine"
    sampler: str = "class-weighted"
    freeze_layers: str = "none"

    def __post_init__(self):
        if not (isinstance(self.learning_rate, (int, float))
                and self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate!r}",
                              tag="config.learning-rate")
        if not (isinstance(self.epochs, int) and self.epochs >= 1):
            raise ConfigError(f"epochs must be an integer >= 1, got {self.epochs!r}",
                              tag="config.epochs")
        if not (isinstance(self.batch_size, int) and self.batch_size >= 1):
            raise ConfigError(f"batch_size must be an integer >= 1, "
                              f"got {self.batch_size!r}", tag="config.batch-size")
        fixed = {"optimizer": "adamw", "loss": "cross-entropy",
                 "scheduler": "cosine", "sampler": "class-weighted",
                 "freeze_layers": "none"}
        for field, only in fixed.items():
            if getattr(self, field) != only:
                raise ConfigError(f"{field} must be {only!r}, "
                                  f"got {getattr(self, field)!r}",
                                  tag=f"config.{field.replace('_', '-')}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrainResult:
    model: nn.Module
    losses: tuple[float, ...]        # mean loss per epoch run
    lrs: tuple[float, ...]           # lr in effect during each epoch run
    update_norms: dict[str, float]   # per-parameter cumulative step L2
    epochs_run: int


def class_weights(labels: np.ndarray) -> np.ndarray:
    """Per-sample weights 1/class_count; equalizes expected class draws."""
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=2)
    if (counts[:2] == 0).any():
        raise TrainingError(f"training split is single-class "
                            f"(counts {dict(enumerate(counts[:2]))})",
                            tag="train.single-class")
    return 1.0 / counts[labels]


def make_sampler(labels: np.ndarray,
                 generator: torch.Generator) -> WeightedRandomSampler:
    weights = torch.as_tensor(class_weights(labels), dtype=torch.double)
    return WeightedRandomSampler(weights, num_samples=len(weights),
                                 replacement=True, generator=generator)


def _tensors(samples: list[Sample]) -> tuple[torch.Tensor, torch.Tensor]:
    x = torch.from_numpy(np.stack([s.data for s in samples])).float()
    y = torch.from_numpy(np.array([s.label for s in samples], dtype=np.int64))
    return x, y


def _train_accuracy(model: nn.Module, x: torch.Tensor, y: torch.Tensor) -> float:
    model.eval()
    with torch.no_grad():
        predicted = model(x).argmax(dim=1)
    model.train()
    return float((predicted == y).double().mean())


def train_one(model: nn.Module, samples: list[Sample], cfg: TrainConfig,
              stop_at_train_accuracy: float | None = None) -> TrainResult:
    """Train ``model`` in place on ``samples``; deterministic given cfg.seed.

    ``stop_at_train_accuracy`` ends training at the first epoch whose
    post-epoch training accuracy reaches the threshold; the cosine schedule
    is still laid out over cfg.epochs.
    """
    x, y = _tensors(list(samples))
    labels = y.numpy()
    generator = torch.Generator().manual_seed(cfg.seed)
    sampler = make_sampler(labels, generator)
    loader = DataLoader(TensorDataset(x, y), batch_size=cfg.batch_size,
                        sampler=sampler)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer,
                                                           T_max=cfg.epochs)
    criterion = nn.CrossEntropyLoss()
    update_norms = {name: 0.0 for name, _ in model.named_parameters()}

    losses = []
    lrs = []
    model.train()
    for epoch in range(cfg.epochs):
        lrs.append(float(optimizer.param_groups[0]["lr"]))
        epoch_losses = []
        for bx, by in loader:
            optimizer.zero_grad()
            loss = criterion(model(bx), by)
            loss.backward()
            before = {name: p.detach().clone()
                      for name, p in model.named_parameters()}
            optimizer.step()
            for name, p in model.named_parameters():
                update_norms[name] += float(torch.linalg.vector_norm(
                    p.detach() - before[name]))
            epoch_losses.append(float(loss.detach()))
        scheduler.step()
        losses.append(float(np.mean(epoch_losses)))
        if (stop_at_train_accuracy is not None
                and _train_accuracy(model, x, y) >= stop_at_train_accuracy):
            break
    return TrainResult(model, tuple(losses), tuple(lrs), update_norms,
                       epochs_run=len(losses))


def predict(model: nn.Module, samples: list[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(labels, scores)``; scores are softmax rows summing to 1."""
    x, _ = _tensors(list(samples))
    model.eval()
    with torch.no_grad():
        scores = torch.softmax(model(x), dim=1).numpy()
    return scores.argmax(axis=1), scores
