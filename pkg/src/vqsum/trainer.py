"""Two-group Adam training with inverse-square-root warmup schedules.

The embedder group (E) and the remaining parameters (R: generator, conv,
codebook) run separate Adam optimizers with their own base rate and warmup,
stepping together once per accumulation window. "step" counts optimizer steps,
not micro-batches.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import text
from .errors import EmptyCorpus, NonFiniteLoss, NonFiniteValue
from .numerics import GradTape


@dataclass(frozen=True)
class ScheduleConfig:
    base_lr: float
    warmup: int

    def __post_init__(self):
        if self.warmup < 1 or self.base_lr <= 0:
            raise ValueError("schedule needs warmup >= 1 and base_lr > 0")


# Full-scale settings: slow lane for the pretrained embedder, fast lane for the rest.
PAPER_SCHEDULE_E = ScheduleConfig(base_lr=7e-4, warmup=3000)
PAPER_SCHEDULE_R = ScheduleConfig(base_lr=4e-2, warmup=1500)


def lr_at(schedule, step):
    """base_lr * min(step^-0.5, step * warmup^-1.5), for step >= 1."""
    if step < 1:
        raise ValueError("step counts from 1")
    return schedule.base_lr * min(step**-0.5, step * schedule.warmup**-1.5)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    accumulation: int = 10  # micro-batches per optimizer step
    seed: int = 0
    beta: float = 0.25
    max_len: int = 64
    schedule_e: ScheduleConfig = field(default_factory=lambda: PAPER_SCHEDULE_E)
    schedule_r: ScheduleConfig = field(default_factory=lambda: PAPER_SCHEDULE_R)

    def __post_init__(self):
        if self.epochs < 1 or self.accumulation < 1 or self.batch_size < 1:
            raise ValueError("epochs, accumulation and batch_size must be >= 1")


def desk_train_config(**overrides):
    """Desk-scale defaults: tiny corpora see a few hundred steps, so the
    full-scale warmups (3000/1500) would never leave the ramp; scale them down
    and step every micro-batch."""
    base = dict(
        accumulation=1,
        schedule_e=ScheduleConfig(base_lr=7e-4, warmup=200),
        schedule_r=ScheduleConfig(base_lr=4e-2, warmup=100),
    )
    base.update(overrides)
    return TrainConfig(**base)


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.t = 0

    def step(self, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1**self.t)
            v_hat = self.v[name] / (1 - b2**self.t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EpochStats:
    epoch: int
    xent: float
    dict_loss: float
    commit_loss: float
    total: float
    lr_e: float
    lr_r: float
    dead_code_fraction: float


def _encode_pool(pool, vocab, max_len):
    encoded = []
    for utt in pool:
        seq = text.encode(utt.text, vocab, max_len=max_len)
        encoded.append((utt.utt_id, seq.ids))
    return encoded


def _batch_ids(items):
    width = max(len(ids) for _, ids in items)
    batch = np.full((len(items), width), text.PAD, dtype=np.int64)
    for row, (_, ids) in enumerate(items):
        batch[row, : len(ids)] = ids
    utt_ids = [utt_id for utt_id, _ in items]
    return batch, utt_ids


def train(pool, vocab, model, config):
    """Optimize the model over a pool of utterances; returns per-epoch stats.

    A non-finite loss restores the parameters of the last completed epoch and
    raises NonFiniteLoss.
    """
    if not pool:
        raise EmptyCorpus("training pool is empty")
    encoded = _encode_pool(pool, vocab, config.max_len)
    rng = np.random.default_rng(config.seed)
    adam_e = Adam(model.group_e())
    adam_r = Adam(model.group_r())
    all_params = list(model.params.named().values())

    def zero_grads():
        for p in all_params:
            p.zero_grad()

    def apply_step(n_micro, step):
        scale = 1.0 / n_micro
        for p in all_params:
            if p.grad is not None:
                p.grad *= scale
        lr_e = lr_at(config.schedule_e, step)
        lr_r = lr_at(config.schedule_r, step)
        adam_e.step(lr_e)
        adam_r.step(lr_r)
        zero_grads()
        return lr_e, lr_r

    history = []
    snapshot = model.params.export_arrays()
    step = 0
    lr_e = lr_r = 0.0
    k = model.profile.codebook_size
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(encoded))
        sums = np.zeros(4)
        n_batches = 0
        used_codes = np.zeros(k, dtype=bool)
        micro = 0
        zero_grads()
        for start in range(0, len(order), config.batch_size):
            items = [encoded[i] for i in order[start : start + config.batch_size]]
            ids, utt_ids = _batch_ids(items)
            try:
                with GradTape() as tape:
                    total, breakdown, z = model.loss(
                        ids, utt_ids=utt_ids if model.file_backed else None, beta=config.beta
                    )
                    tape.backward(total)
            except NonFiniteValue as exc:
                model.params.load_arrays(snapshot)
                raise NonFiniteLoss(f"loss diverged in epoch {epoch}: {exc}") from exc
            used_codes[np.unique(z)] = True
            sums += (breakdown.xent, breakdown.dict_loss, breakdown.commit_loss, breakdown.total)
            n_batches += 1
            micro += 1
            if micro == config.accumulation:
                step += 1
                lr_e, lr_r = apply_step(micro, step)
                micro = 0
        if micro:  # flush the partial accumulation window at epoch end
            step += 1
            lr_e, lr_r = apply_step(micro, step)
        means = sums / max(1, n_batches)
        history.append(
            EpochStats(
                epoch=epoch,
                xent=float(means[0]),
                dict_loss=float(means[1]),
                commit_loss=float(means[2]),
                total=float(means[3]),
                lr_e=lr_e,
                lr_r=lr_r,
                dead_code_fraction=float(1.0 - used_codes.sum() / k),
            )
        )
        snapshot = model.params.export_arrays()
    return history


HISTORY_COLUMNS = ["epoch", "xent", "dict", "commit", "total", "lr_E", "lr_R", "dead_code_fraction"]


def write_history_csv(history, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow(
                [
                    row.epoch,
                    f"{row.xent:.6f}",
                    f"{row.dict_loss:.6f}",
                    f"{row.commit_loss:.6f}",
                    f"{row.total:.6f}",
                    f"{row.lr_e:.8g}",
                    f"{row.lr_r:.8g}",
                    f"{row.dead_code_fraction:.4f}",
                ]
            )
