"""
Adam training loop with step-decay learning rate, early stopping on the best
loss, warm starting from a parameter snapshot and a loss-history export.
"""

from __future__ import annotations

import csv
import logging
import time
from pathlib import Path

import numpy as np
import torch
from pydantic import BaseModel

from dedem import environment
from dedem.autodiff import Recording, backward
from dedem.common.instrument import instrument
from dedem.energy import EnergyBreakdown, EnergyFunctional
from dedem.errors import (
    NetworkShapeError,
    NonFiniteGradientError,
    NonFiniteLossError,
    WarmStartError,
)
from dedem.models import NetConfig, Scenario, TrainConfig
from dedem.network import NetParams, init_params, load_snapshot
from dedem.quadrature import QuadGrid, build_scenario_grid

logger = logging.getLogger(__name__)

IMPROVEMENT_TOLERANCE = 1e-12


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    return config.lr0 * config.decay_factor ** (epoch // config.decay_every)


def configure_torch(deterministic: bool) -> None:
    """Thread count and algorithm determinism for the next run."""
    threads = 1 if deterministic else environment.get_settings().threads
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(deterministic)


class AdamState:
    """Bias-corrected Adam moments over the flat parameter vector."""

    def __init__(self, values: np.ndarray, config: TrainConfig):
        self.theta = torch.tensor(
            np.asarray(values, dtype=np.float64), dtype=torch.float64
        ).requires_grad_(True)
        self.optimizer = torch.optim.Adam(
            [self.theta],
            lr=config.lr0,
            betas=(config.beta1, config.beta2),
            eps=config.eps,
            foreach=False,
        )
        self.epoch = 0

    @property
    def values(self) -> np.ndarray:
        return self.theta.detach().numpy().copy()

    def _moment(self, key: str) -> np.ndarray:
        state = self.optimizer.state.get(self.theta)
        if not state:
            return np.zeros(self.theta.shape, dtype=np.float64)
        return state[key].detach().numpy().copy()

    @property
    def first_moment(self) -> np.ndarray:
        return self._moment("exp_avg")

    @property
    def second_moment(self) -> np.ndarray:
        return self._moment("exp_avg_sq")


def adam_step(
    params: np.ndarray, grad: np.ndarray, state: AdamState, lr: float
) -> np.ndarray:
    """One Adam update; returns the new parameter values."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != tuple(state.theta.shape) or grad.shape != params.shape:
        raise NetworkShapeError(
            f"shape mismatch: params {params.shape}, grad {grad.shape}, "
            f"state {tuple(state.theta.shape)}"
        )
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError(
            f"non-finite gradient entries at {np.flatnonzero(~np.isfinite(grad))[:5].tolist()}"
        )
    with torch.no_grad():
        state.theta.copy_(torch.from_numpy(params))
    state.theta.grad = torch.from_numpy(grad.copy())
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.step()
    state.epoch += 1
    return state.values


class HistoryEntry(BaseModel, frozen=True):
    epoch: int
    loss: float
    lr: float


class TrainReport(BaseModel, frozen=True):
    history: list[HistoryEntry] = []
    best_epoch: int | None = None
    best_loss: float | None = None
    best_params: NetParams
    breakdown: EnergyBreakdown | None = None
    wall_time: float = 0.0
    stopped_early: bool = False
    flagged_epochs: list[int] = []

    @property
    def losses(self) -> list[float]:
        return [entry.loss for entry in self.history]

    @property
    def epochs_run(self) -> int:
        return len(self.history)


def warm_start(source: TrainReport | NetParams | str | Path, config: NetConfig) -> NetParams:
    """Initial parameters taken from an earlier run's best snapshot."""
    if isinstance(source, TrainReport):
        params = source.best_params
    elif isinstance(source, NetParams):
        params = source
    else:
        params = load_snapshot(source)
    if params.config != config:
        raise WarmStartError(
            f"snapshot network {params.config.model_dump()} does not match "
            f"scenario network {config.model_dump()}"
        )
    return params


@instrument(prefix="optimizer")
def train(
    scenario: Scenario,
    init: NetParams | str | Path | None = None,
    grid: QuadGrid | None = None,
) -> TrainReport:
    """Minimize the potential energy of `scenario` with Adam."""
    config = scenario.train
    configure_torch(config.deterministic or environment.get_settings().deterministic)
    net_config = scenario.net_config
    if init is None:
        params = init_params(net_config, scenario.seed)
    else:
        params = warm_start(init, net_config)
    grid = grid if grid is not None else build_scenario_grid(scenario)
    functional = EnergyFunctional(scenario, grid)

    started = time.perf_counter()
    state = AdamState(params.values, config)
    values = params.values
    best_values, best_loss, best_epoch, best_breakdown = values, None, None, None
    history: list[HistoryEntry] = []
    flagged: list[int] = []
    stopped_early = False

    for epoch in range(config.max_epochs):
        recording = Recording(values)
        try:
            loss, breakdown = functional(recording.parameters(), params)
        except NonFiniteLossError as exception:
            logger.error("Non-finite loss", extra={"epoch": epoch, "node": exception.node})
            raise
        gradient = backward(loss)
        lr = lr_at_epoch(config, epoch)
        loss_value = loss.item()
        history.append(HistoryEntry(epoch=epoch, loss=loss_value, lr=lr))

        if best_loss is None or loss_value < best_loss - IMPROVEMENT_TOLERANCE * abs(best_loss):
            best_values, best_loss, best_epoch = values, loss_value, epoch
            best_breakdown = breakdown
        elif epoch - best_epoch >= config.patience:
            stopped_early = True
            logger.info(
                "Early stop: no improvement for %d epochs",
                config.patience,
                extra={"epoch": epoch, "best_epoch": best_epoch, "loss": best_loss},
            )
            break

        if epoch % config.log_every == 0:
            logger.info(
                "Epoch %d loss %.6e",
                epoch,
                loss_value,
                extra={"epoch": epoch, "loss": loss_value, "lr": lr},
            )
        try:
            values = adam_step(values, gradient, state, lr)
        except NonFiniteGradientError as exception:
            logger.warning(
                "Skipping update: %s", exception, extra={"epoch": epoch, "lr": lr}
            )
            flagged.append(epoch)

    report = TrainReport(
        history=history,
        best_epoch=best_epoch,
        best_loss=best_loss,
        best_params=params.with_values(best_values),
        breakdown=best_breakdown,
        wall_time=time.perf_counter() - started,
        stopped_early=stopped_early,
        flagged_epochs=flagged,
    )
    logger.info(
        "Training finished",
        extra={
            "epochs": report.epochs_run,
            "best_epoch": best_epoch,
            "loss": best_loss,
            "wall_time": report.wall_time,
        },
    )
    return report


def write_loss_history(report: TrainReport, destination: str | Path) -> None:
    with open(destination, "w", encoding="utf8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(["epoch", "loss", "lr"])
        for entry in report.history:
            writer.writerow([entry.epoch, format(entry.loss, ".17g"), format(entry.lr, ".17g")])
