"""
stepfold.train
==============

Teacher training, single-fold distillation of a teacher into a student
on an arbitrary sub-sequence of its steps, and the from-scratch student
baseline.

All three loops share one implementation. Each optimizer step draws a
minibatch x_0 (with replacement), one student step t and one noise
vector per sample, forms z = sqrt(a_t) x_0 + sqrt(1 - a_t) eps and
regresses the network output at (z, t / T') onto a target:

* teacher training: the true noise (the teacher is its own student with
  the identity sub-sequence),
* distillation: the frozen teacher's prediction at (z, phi_t / T),
* scratch baseline: the true noise on the student chain.

"""

import copy
import json
import logging
import time
from collections import namedtuple
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np
from tqdm.auto import tqdm

from .exceptions import (
    DimensionMismatchError,
    InvalidParameterError,
    NonFiniteLossError,
)
from .net import AdamState, EpsilonNet, adam_step, regression_loss
from .process import gamma_weights
from .schedule import check_pair, identity_subsequence

logger = logging.getLogger(__name__)

LOSS_NORMS = ("l1", "l2")
WEIGHTINGS = ("unit", "gamma")
BUNDLE_KINDS = ("teacher", "student")
HISTORY_TAIL = 20


@dataclass
class TrainConfig:
    """Hyper-parameters of a training or distillation run.

    Parameters
    ----------
    steps : int
        Number of optimizer steps; 0 returns the initialized network.
    batch_size : int
    lr : float
        Adam learning rate.
    loss_norm : string
        ``"l2"`` (squared Euclidean) or ``"l1"`` (sum of absolute values).
    weighting : string
        ``"unit"`` or ``"gamma"`` (variational-bound weights normalized to
        mean one over the steps).
    seed : int
    log_every : int
        Interval, in steps, of the training log lines.
    ema_decay : float
        Decay of the exponential moving average of the loss.
    hidden_widths : list of int
        Architecture of freshly initialized networks.
    time_embed_dim : int
    activation : string
    warm_start : boolean
        Distillation only: start the student from a copy of the teacher.
    """

    steps: int = 10000
    batch_size: int = 256
    lr: float = 2e-4
    loss_norm: str = "l2"
    weighting: str = "unit"
    seed: int = 0
    log_every: int = 100
    ema_decay: float = 0.99
    hidden_widths: List[int] = field(default_factory=lambda: [128, 128, 128])
    time_embed_dim: int = 32
    activation: str = "quick_gelu"
    warm_start: bool = False

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 0:
            raise InvalidParameterError("steps must be a non-negative integer")
        for name in ("batch_size", "log_every"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidParameterError(
                    "{0} must be a positive integer".format(name)
                )
        if not self.lr > 0:
            raise InvalidParameterError("lr must be positive")
        if self.loss_norm not in LOSS_NORMS:
            raise InvalidParameterError("loss_norm must be 'l1' or 'l2'")
        if self.weighting not in WEIGHTINGS:
            raise InvalidParameterError("weighting must be 'unit' or 'gamma'")
        if not 0 <= self.ema_decay < 1:
            raise InvalidParameterError("ema_decay must lie in [0, 1)")
        self.hidden_widths = [int(w) for w in self.hidden_widths]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        """Builds a config, rejecting unknown keys."""
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(values) - known)
        if unknown:
            raise InvalidParameterError(
                "unknown config keys: {0}".format(", ".join(unknown))
            )
        return cls(**values)


class ModelBundle(object):
    """A schedule, a sub-sequence and the network trained on them.

    Parameters
    ----------
    kind : string
        ``"teacher"`` or ``"student"``.
    schedule : AlphaSchedule
        The teacher schedule (students keep their teacher's).
    phi : SubSequence
        Identity for a teacher.
    net : EpsilonNet
    metadata : dict, optional
        Dataset name, config echo, loss history tail.

    Raises
    ------
    InvalidParameterError
        if the kind is unknown, phi does not end on schedule.T or a
        teacher carries a non-identity phi
    """

    def __init__(self, kind, schedule, phi, net, metadata=None):
        if kind not in BUNDLE_KINDS:
            raise InvalidParameterError(
                "kind must be 'teacher' or 'student', got {0!r}".format(kind)
            )
        check_pair(schedule, phi)
        if kind == "teacher" and not phi.is_identity:
            raise InvalidParameterError(
                "a teacher bundle must carry the identity sub-sequence"
            )
        self.kind = kind
        self.schedule = schedule
        self.phi = phi
        self.net = net
        self.metadata = dict(metadata or {})

    @property
    def input_dim(self):
        return self.net.input_dim

    def __repr__(self):
        return "ModelBundle(kind={0!r}, T={1}, T_prime={2}, d={3})".format(
            self.kind, self.schedule.T, self.phi.T_prime, self.input_dim
        )


Batch = namedtuple("Batch", ["x0", "t", "eps"])


def draw_batch(rng, data, T_prime, batch_size):
    """Draws (x_0, t, eps) for one optimizer step.

    Rows of `data` are drawn with replacement; t is uniform on
    {1, ..., T'} and eps standard normal, independently per sample.
    """
    index = rng.integers(0, data.shape[0], batch_size)
    t = rng.integers(1, T_prime + 1, batch_size)
    eps = rng.standard_normal((batch_size, data.shape[1]))
    return Batch(data[index], t, eps)


def noised_inputs(schedule, phi, batch):
    """z = sqrt(a_t) x_0 + sqrt(1 - a_t) eps with a_t = alpha[phi_t]."""
    a = schedule.full[phi.phi[batch.t]][:, None]
    return np.sqrt(a) * batch.x0 + np.sqrt(1.0 - a) * batch.eps


def step_weight_table(schedule, phi, weighting):
    """Per-step loss weights for t = 1..T', or None for unit weights."""
    if weighting == "unit":
        return None
    gammas = gamma_weights(schedule, phi)
    return gammas / gammas.mean()


def _teacher_target(teacher_net, schedule, phi):
    def target(z, batch):
        return teacher_net.forward(z, phi.phi[batch.t] / float(schedule.T))

    return target


def _noise_target(z, batch):
    return batch.eps


def _batch_loss(net, schedule, phi, batch, config, target, table=None):
    z = noised_inputs(schedule, phi, batch)
    if table is None:
        table = step_weight_table(schedule, phi, config.weighting)
    weights = None if table is None else table[batch.t - 1]
    return net.loss_and_grads(
        z,
        batch.t / float(phi.T_prime),
        target(z, batch),
        norm=config.loss_norm,
        weights=weights,
    )


def _loss_value(net, schedule, phi, batch, config, target):
    z = noised_inputs(schedule, phi, batch)
    table = step_weight_table(schedule, phi, config.weighting)
    weights = None if table is None else table[batch.t - 1]
    outputs = net.forward(z, batch.t / float(phi.T_prime))
    return regression_loss(
        outputs - target(z, batch), config.loss_norm, weights
    )[0]


def scratch_student_loss_step(student, batch, config):
    """Loss of the student regressing onto the true noise of `batch`.

    Parameters
    ----------
    student : ModelBundle
    batch : Batch
    config : TrainConfig

    Returns
    -------
    float
    """
    return _loss_value(
        student.net,
        student.schedule,
        student.phi,
        batch,
        config,
        _noise_target,
    )


def distill_loss_step(student, teacher_net, batch, config):
    """Loss of the student regressing onto the teacher's prediction.

    The teacher network is evaluated at the teacher step phi_t of each
    sample, the student at student step t, on the same noised input.
    Only ``forward`` is called on either network.
    """
    target = _teacher_target(teacher_net, student.schedule, student.phi)
    return _loss_value(
        student.net, student.schedule, student.phi, batch, config, target
    )


class TrainingLog(object):
    """JSON-lines writer of ``{step, loss_ema, wall_ms}`` records."""

    def __init__(self, path=None):
        self.path = path
        self._handle = open(path, "w") if path else None
        self._start = time.perf_counter()

    def write(self, step, loss_ema):
        wall_ms = int(round((time.perf_counter() - self._start) * 1000))
        logger.info("step %d loss_ema %.6f", step, loss_ema)
        if self._handle:
            record = {"step": step, "loss_ema": loss_ema, "wall_ms": wall_ms}
            self._handle.write(json.dumps(record, sort_keys=True) + "\n")
            self._handle.flush()

    def close(self):
        if self._handle:
            self._handle.close()
            self._handle = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fit(net, data, schedule, phi, config, target, rng, log_path, progress):
    """Runs the optimizer loop; returns the EMA loss history."""
    state = AdamState.for_net(net, lr=config.lr)
    table = step_weight_table(schedule, phi, config.weighting)
    history = []
    ema = None
    with TrainingLog(log_path) as log, tqdm(
        total=config.steps, disable=not progress, desc="train"
    ) as bar:
        for step in range(1, config.steps + 1):
            batch = draw_batch(rng, data, phi.T_prime, config.batch_size)
            try:
                loss, grads = _batch_loss(
                    net, schedule, phi, batch, config, target, table
                )
            except NonFiniteLossError as e:
                logger.error("non-finite loss at step %d", step)
                raise NonFiniteLossError(step, batch.t, e.loss)
            adam_step(net, state, grads)
            ema = loss if ema is None else (
                config.ema_decay * ema + (1.0 - config.ema_decay) * loss
            )
            history.append(ema)
            if step % config.log_every == 0 or step == config.steps:
                log.write(step, ema)
                bar.set_postfix(loss_ema="{0:.4f}".format(ema))
            bar.update(1)
    return history


def _check_data(data, input_dim=None):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise DimensionMismatchError("data must be a non-empty (n, d) matrix")
    if not np.all(np.isfinite(data)):
        raise InvalidParameterError("data must be finite")
    if input_dim is not None and data.shape[1] != input_dim:
        raise DimensionMismatchError(
            "data has dimension {0}, the network expects {1}".format(
                data.shape[1], input_dim
            )
        )
    return data


def _rngs(seed):
    init_seq, loop_seq = np.random.SeedSequence(seed).spawn(2)
    return (
        int(init_seq.generate_state(1)[0]),
        np.random.default_rng(loop_seq),
    )


def _metadata(config, history, dataset, **extra):
    metadata = {
        "dataset": dataset,
        "config": config.to_dict(),
        "loss_history_tail": [float(v) for v in history[-HISTORY_TAIL:]],
    }
    metadata.update(extra)
    return metadata


def _fresh_net(input_dim, config, init_seed):
    return EpsilonNet(
        input_dim,
        hidden_widths=config.hidden_widths,
        time_embed_dim=config.time_embed_dim,
        activation=config.activation,
        seed=init_seed,
    )


def train_teacher(
    data, schedule, config, dataset="unnamed", log_path=None, progress=False
):
    """Trains a T-step DDPM teacher on `data`.

    Parameters
    ----------
    data : array of shape (n, d)
    schedule : AlphaSchedule
    config : TrainConfig
    dataset : string
        Name recorded in the bundle metadata.
    log_path : string, optional
        Destination of the JSON-lines training log.
    progress : boolean
        Show a progress bar.

    Returns
    -------
    ModelBundle
        kind ``"teacher"`` with the identity sub-sequence

    Raises
    ------
    NonFiniteLossError
        if a loss evaluation is not finite
    """
    data = _check_data(data)
    if data.shape[0] < config.batch_size:
        logger.warning(
            "batch_size %d exceeds the %d data rows; rows are drawn with "
            "replacement",
            config.batch_size,
            data.shape[0],
        )
    phi = identity_subsequence(schedule.T)
    init_seed, rng = _rngs(config.seed)
    net = _fresh_net(data.shape[1], config, init_seed)
    history = _fit(
        net,
        data,
        schedule,
        phi,
        config,
        _noise_target,
        rng,
        log_path,
        progress,
    )
    return ModelBundle(
        "teacher", schedule, phi, net, _metadata(config, history, dataset)
    )


def distill(
    teacher,
    phi,
    config,
    data,
    dataset="unnamed",
    log_path=None,
    progress=False,
):
    """Distills `teacher` into a student on the sub-sequence `phi`.

    Each step the frozen teacher is evaluated at teacher step phi_t on the
    noised input and the student is regressed onto that prediction at
    student step t. Only the student is updated.

    Parameters
    ----------
    teacher : ModelBundle
        kind ``"teacher"``.
    phi : SubSequence
        Must end on the teacher's T.
    config : TrainConfig
        ``warm_start`` starts the student from a copy of the teacher.
    data : array of shape (n, d)

    Returns
    -------
    ModelBundle
        kind ``"student"`` carrying `phi`
    """
    if teacher.kind != "teacher":
        raise InvalidParameterError("distill expects a teacher bundle")
    check_pair(teacher.schedule, phi)
    data = _check_data(data, teacher.input_dim)
    init_seed, rng = _rngs(config.seed)
    if config.warm_start:
        student_net = teacher.net.copy()
    else:
        student_net = _fresh_net(teacher.input_dim, config, init_seed)
    target = _teacher_target(teacher.net, teacher.schedule, phi)
    history = _fit(
        student_net,
        data,
        teacher.schedule,
        phi,
        config,
        target,
        rng,
        log_path,
        progress,
    )
    metadata = _metadata(
        config,
        history,
        dataset,
        origin="distilled",
        teacher_dataset=teacher.metadata.get("dataset"),
    )
    return ModelBundle("student", teacher.schedule, phi, student_net, metadata)


def train_scratch_student(
    data,
    schedule,
    phi,
    config,
    dataset="unnamed",
    log_path=None,
    progress=False,
):
    """Trains a T'-step student directly on data, without a teacher.

    The baseline against which distillation is compared: same chain,
    same network, the true noise as regression target.
    """
    check_pair(schedule, phi)
    data = _check_data(data)
    init_seed, rng = _rngs(config.seed)
    net = _fresh_net(data.shape[1], config, init_seed)
    history = _fit(
        net,
        data,
        schedule,
        phi,
        config,
        _noise_target,
        rng,
        log_path,
        progress,
    )
    metadata = _metadata(config, history, dataset, origin="scratch")
    return ModelBundle("student", schedule, phi, net, metadata)


def copy_bundle(bundle, kind=None, phi=None):
    """Deep copy of a bundle, optionally relabelled."""
    return ModelBundle(
        kind or bundle.kind,
        bundle.schedule,
        phi if phi is not None else bundle.phi,
        bundle.net.copy(),
        copy.deepcopy(bundle.metadata),
    )
