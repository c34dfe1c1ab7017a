"""Training loops: supervised (spectral or rotation signals) and unsupervised.

Single-threaded, fully seeded, one mesh pair per optimizer step (the
smoothing layer is mesh-global). Per-epoch term losses go to a
line-delimited log; parameters land in a binary checkpoint.
"""

import json
import time

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .features import FeatureExtractor
from .losses import LossWeights, UnsupervisedModel, supervised_loss
from .network import JacobianNet, NetworkConfig

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; the last good checkpoint was preserved."""

    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


def learning_rate(epoch, n_epochs, lr_start=1e-3, lr_end=1e-5):
    """Geometric decay hitting ``lr_start`` at epoch 0 and ``lr_end`` at the last."""
    if n_epochs <= 1:
        return lr_start
    ratio = lr_end / lr_start
    return lr_start * ratio ** (epoch / (n_epochs - 1))


def _set_lr(optimizer, lr):
    for group in optimizer.param_groups:
        group["lr"] = lr


def _log_record(fh, record):
    if fh is not None:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        fh.flush()


def model_state_arrays(module):
    return {
        name: param.detach().numpy().copy()
        for name, param in module.state_dict().items()
    }


def optimizer_state_arrays(optimizer, module):
    names = [name for name, _ in module.named_parameters()]
    arrays = {}
    for name, param in zip(names, module.parameters()):
        state = optimizer.state.get(param)
        if not state:
            continue
        arrays[f"{name}.step"] = np.asarray(float(state["step"]))
        arrays[f"{name}.exp_avg"] = state["exp_avg"].detach().numpy().copy()
        arrays[f"{name}.exp_avg_sq"] = state["exp_avg_sq"].detach().numpy().copy()
    return arrays


def save_network_checkpoint(path, model, extra_config=None, optimizer=None):
    config = {
        "kind": "supervised",
        "network": model.config.to_dict(),
        "adam_betas": list(ADAM_BETAS),
        "adam_eps": ADAM_EPS,
    }
    if extra_config:
        config.update(extra_config)
    opt_state = optimizer_state_arrays(optimizer, model) if optimizer else None
    save_checkpoint(path, config, model_state_arrays(model), opt_state)


def load_network_checkpoint(path):
    """Rebuild a :class:`JacobianNet` from a checkpoint; returns (model, config)."""
    config, arrays, _ = load_checkpoint(path)
    model = JacobianNet(NetworkConfig.from_dict(config["network"]))
    state = {name: torch.from_numpy(arr) for name, arr in arrays.items()}
    model.load_state_dict(state)
    return model, config


def train_supervised(samples, config, weights=None, epochs=50, lr_start=1e-3,
                     lr_end=1e-5, seed=0, mode="spectral", log_path=None,
                     checkpoint_path=None):
    """Fit the detail network on same-connectivity pairs.

    ``mode='spectral'`` draws the augmentation level ``k`` per sample per
    epoch from ``config.k_augmentation``; ``mode='editing'`` feeds the
    vertex-averaged rotation factors of the ground truth instead.

    Returns
    -------
    (model, history) : (JacobianNet, list of per-epoch records)
    """
    if not samples:
        raise ValueError("empty training set")
    if mode not in ("spectral", "editing"):
        raise ValueError(f"unknown training mode {mode!r}")
    weights = weights or LossWeights()
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = JacobianNet(config)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=lr_start, betas=ADAM_BETAS, eps=ADAM_EPS
    )
    rotation_signals = (
        [sample.rotation_signal() for sample in samples] if mode == "editing" else None
    )

    history = []
    last_good = model_state_arrays(model)
    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(epochs):
            _set_lr(optimizer, learning_rate(epoch, epochs, lr_start, lr_end))
            epoch_parts = {"jacobian": 0.0, "vertex": 0.0, "integrated": 0.0, "total": 0.0}
            ks = []
            start = time.perf_counter()
            for index, sample in enumerate(samples):
                optimizer.zero_grad(set_to_none=True)
                try:
                    if mode == "editing":
                        loss, parts = supervised_loss(
                            model, sample, weights, signal_t=rotation_signals[index]
                        )
                        ks.append(None)
                    else:
                        k = int(rng.choice(sample.k_values))
                        ks.append(k)
                        loss, parts = supervised_loss(model, sample, weights, k=k)
                except ArithmeticError as exc:
                    path = checkpoint_path
                    if path:
                        save_checkpoint(
                            path,
                            {"kind": "supervised", "network": config.to_dict(),
                             "diverged_at_epoch": epoch},
                            last_good,
                        )
                    raise TrainingDiverged(str(exc), path) from exc
                loss.backward()
                optimizer.step()
                for name in epoch_parts:
                    epoch_parts[name] += parts[name]
            record = {
                "epoch": epoch,
                "lr": learning_rate(epoch, epochs, lr_start, lr_end),
                "k_drawn": ks,
                "wall_time": time.perf_counter() - start,
                **epoch_parts,
            }
            history.append(record)
            _log_record(log_fh, record)
            last_good = model_state_arrays(model)
        if checkpoint_path:
            save_network_checkpoint(
                checkpoint_path,
                model,
                extra_config={
                    "mode": mode,
                    "epochs": epochs,
                    "seed": seed,
                    "lr_start": lr_start,
                    "lr_end": lr_end,
                    "loss_weights": vars(weights),
                },
                optimizer=optimizer,
            )
    finally:
        if log_fh:
            log_fh.close()
    return model, history


def build_unsupervised_model(config, temperature=0.07, seed=0):
    from .features import WKS_ENERGY_LEVELS

    torch.manual_seed(seed)
    extractor = FeatureExtractor(in_dim=WKS_ENERGY_LEVELS, seed=seed + 1)
    k_coord = config.k_coord
    return UnsupervisedModel(config, extractor, k_coord, temperature=temperature)


def train_unsupervised(pairs, model, weights=None, iterations=300, lr_start=1e-3,
                       lr_end=1e-5, seed=0, log_path=None, checkpoint_path=None):
    """Jointly optimize correspondence and deformation on unlabeled pairs.

    With a single pair this is the zero-shot regime. Both map directions
    are optimized at every step; the log keeps the term breakdown.

    Returns
    -------
    (model, history)
    """
    if not pairs:
        raise ValueError("no pairs to train on")
    weights = weights or LossWeights()
    torch.manual_seed(seed)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=lr_start, betas=ADAM_BETAS, eps=ADAM_EPS
    )
    history = []
    last_good = model_state_arrays(model)
    log_fh = open(log_path, "w") if log_path else None
    try:
        for step in range(iterations):
            _set_lr(optimizer, learning_rate(step, iterations, lr_start, lr_end))
            start = time.perf_counter()
            total = 0.0
            parts_acc = {}
            for pair in pairs:
                optimizer.zero_grad(set_to_none=True)
                try:
                    loss, parts = model.objective(pair, weights)
                except ArithmeticError as exc:
                    path = checkpoint_path
                    if path:
                        save_checkpoint(
                            path,
                            {"kind": "unsupervised", "diverged_at_step": step,
                             "network": model.net.config.to_dict()},
                            last_good,
                        )
                    raise TrainingDiverged(str(exc), path) from exc
                loss.backward()
                optimizer.step()
                total += parts["total"]
                for name, value in parts.items():
                    parts_acc[name] = parts_acc.get(name, 0.0) + value
            record = {
                "step": step,
                "lr": learning_rate(step, iterations, lr_start, lr_end),
                "wall_time": time.perf_counter() - start,
                **parts_acc,
            }
            history.append(record)
            _log_record(log_fh, record)
            last_good = model_state_arrays(model)
        if checkpoint_path:
            save_checkpoint(
                checkpoint_path,
                {
                    "kind": "unsupervised",
                    "network": model.net.config.to_dict(),
                    "temperature": model.temperature,
                    "iterations": iterations,
                    "seed": seed,
                    "loss_weights": vars(weights),
                },
                model_state_arrays(model),
                optimizer_state_arrays(optimizer, model),
            )
    finally:
        if log_fh:
            log_fh.close()
    return model, history
