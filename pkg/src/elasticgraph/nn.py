"""Semi-supervised node classifier: MLP + elastic propagation, trained end to end.

The model is decoupled: a 2-layer MLP maps node features to class scores,
then the parameter-free elastic propagation (see :mod:`elasticgraph.solver`)
smooths the scores over the graph.  Training backpropagates through the
unrolled propagation steps; the propagation itself adds no learnable
parameters.

Gradients are computed by a handwritten reverse sweep.  The linear pieces
transpose directly (``A_tilde`` is symmetric, ``Delta_tilde`` swaps with its
transpose); the dual projection contributes a mode-dependent Jacobian:

* l1 clip: the gradient passes where ``|Zbar| < lambda1`` and is blocked
  where ``|Zbar| >= lambda1`` (the boundary counts as clipped).
* l21 row projection: identity on rows with ``||Zbar_i|| < lambda1``, the
  radial Jacobian ``(lambda1/r) (I - u u^T)`` on rows with ``r > lambda1``
  (``u`` the row direction), and zero on rows exactly at the boundary.

Everything is deterministic given the seed; repeated runs produce
bit-identical reports.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import InputError
from .graphs import NormalizedOperators, as_signal
from .solver import Penalty, EMPConfig, default_stepsizes, prox_linf_clip, prox_l2ball_rows

__all__ = [
    "MLPModel",
    "TrainConfig",
    "MLPGrads",
    "AdamState",
    "Tape",
    "TrainReport",
    "init_model",
    "forward",
    "loss",
    "backward",
    "adam_step",
    "train",
    "evaluate",
    "propagate_forward",
    "propagate_backward",
    "flatten_params",
    "with_params",
    "save_checkpoint",
    "load_checkpoint",
]

PARAM_FIELDS = ("W1", "b1", "W2", "b2")


@dataclass(frozen=True)
class MLPModel:
    """2-layer rectifier MLP: ``X -> relu(X W1 + b1) W2 + b2``."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    dropout_rate: float = 0.0

    @property
    def num_classes(self) -> int:
        return self.W2.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``lambda1``/``lambda2``/``k``/``mode`` configure the propagation; the
    stepsizes are always the defaults ``gamma = 1/(1+lambda2)``,
    ``beta = (1+lambda2)/2``.  Early stopping watches validation accuracy
    with the given patience.
    """

    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    k: int = 10
    lambda1: float = 3.0
    lambda2: float = 3.0
    mode: Penalty = Penalty.L21
    epochs: int = 1000
    patience: int = 100
    seed: int = 0
    hidden: int = 64

    def __post_init__(self):
        object.__setattr__(self, "mode", Penalty(self.mode))
        if self.lr <= 0:
            raise InputError(f"learning rate must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise InputError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.dropout < 1.0:
            raise InputError(f"dropout must be in [0, 1), got {self.dropout}")
        # Validates lambda1/lambda2/k through the solver config rules.
        self.prop_config()

    def prop_config(self) -> EMPConfig:
        return EMPConfig.with_default_steps(self.lambda1, self.lambda2,
                                            self.k, self.mode)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mode"] = self.mode.value
        return out


@dataclass(frozen=True)
class MLPGrads:
    """Gradients aligned with :data:`PARAM_FIELDS`."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like :data:`PARAM_FIELDS`."""

    m: dict
    v: dict

    @classmethod
    def zeros_like(cls, model: MLPModel) -> "AdamState":
        return cls(m={f: np.zeros_like(getattr(model, f)) for f in PARAM_FIELDS},
                   v={f: np.zeros_like(getattr(model, f)) for f in PARAM_FIELDS})


@dataclass(frozen=True)
class PropStep:
    """Projection data recorded for one propagation step.

    l1 mode fills ``interior`` (entries strictly inside the clip range);
    l21 mode fills ``zbar`` and its row ``norms``.
    """

    interior: np.ndarray | None = None
    zbar: np.ndarray | None = None
    norms: np.ndarray | None = None


@dataclass
class Tape:
    """Forward-pass record sufficient to replay the output and run backward.

    Binds the model and operators it was recorded with; :func:`backward`
    rejects a tape whose config no longer matches.
    """

    cfg: TrainConfig
    train_mode: bool
    model: MLPModel
    ops: NormalizedOperators
    X_drop: np.ndarray            # input after dropout (n, d_in)
    relu_mask: np.ndarray         # (n, hidden) bool
    drop_mask_hidden: np.ndarray | None  # (n, hidden) scaled mask, None if p=0
    hidden_drop: np.ndarray       # (n, hidden) post-relu, post-dropout
    mlp_out: np.ndarray           # (n, C) scores before propagation
    steps: list                   # list[PropStep], one per propagation step
    logits: np.ndarray            # (n, C) propagated scores


@dataclass
class TrainReport:
    """Per-run training record; serializes to JSON."""

    seed: int
    config: dict
    train_losses: list
    train_accuracies: list
    val_losses: list
    val_accuracies: list
    best_epoch: int
    epochs_run: int
    test_accuracy: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def init_model(rng: np.random.Generator, d_in: int, hidden: int,
               num_classes: int, dropout: float = 0.0) -> MLPModel:
    """Fan-based uniform weights, zero biases."""
    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    return MLPModel(W1=glorot(d_in, hidden), b1=np.zeros(hidden),
                    W2=glorot(hidden, num_classes), b2=np.zeros(num_classes),
                    dropout_rate=dropout)


def _dropout_mask(rng, shape, p):
    # inverted dropout: scaling at train time keeps eval untouched
    return (rng.random(shape) >= p) / (1.0 - p)


def propagate_forward(X0, ops: NormalizedOperators, lambda1: float,
                      lambda2: float, mode: Penalty, k: int):
    """Unrolled elastic propagation; returns ``(F, steps)`` with prox records.

    Numerically identical to running :func:`elasticgraph.solver.emp_step`
    ``k`` times with the default stepsizes.
    """
    gamma, beta = default_stepsizes(lambda2)
    F = X0
    Z = np.zeros((ops.m, X0.shape[1]))
    delta = ops.Delta_tilde
    delta_t = delta.T
    steps: list[PropStep] = []
    for _ in range(k):
        Y = gamma * X0 + (1.0 - gamma) * (ops.A_tilde @ F)
        F_bar = Y - gamma * (delta_t @ Z)
        Z_bar = Z + beta * (delta @ F_bar)
        if mode is Penalty.L1:
            steps.append(PropStep(interior=np.abs(Z_bar) < lambda1))
            Z = prox_linf_clip(Z_bar, lambda1)
        else:
            steps.append(PropStep(zbar=Z_bar,
                                  norms=np.linalg.norm(Z_bar, axis=1)))
            Z = prox_l2ball_rows(Z_bar, lambda1)
        F = Y - gamma * (delta_t @ Z)
    return F, steps


def _projection_backward(G, step: PropStep, lambda1: float, mode: Penalty):
    if lambda1 == 0.0:
        # the projection is constantly zero; nothing flows through the dual
        return np.zeros_like(G)
    if mode is Penalty.L1:
        return np.where(step.interior, G, 0.0)
    out = np.zeros_like(G)
    norms = step.norms
    interior = norms < lambda1
    out[interior] = G[interior]
    active = norms > lambda1
    if np.any(active):
        u = step.zbar[active] / norms[active, None]
        radial = (u * G[active]).sum(axis=1)
        out[active] = (lambda1 / norms[active])[:, None] * (G[active] - u * radial[:, None])
    # rows exactly at the boundary stay zero
    return out


def propagate_backward(G_out, steps, ops: NormalizedOperators, lambda1: float,
                       lambda2: float, mode: Penalty) -> np.ndarray:
    """Adjoint of :func:`propagate_forward`: gradient w.r.t. the MLP output.

    The input enters every step through the Y update, so its gradient
    accumulates ``gamma * G_Y`` per step plus the initial-state contribution.
    Four sparse products per reversed step, mirroring the forward pass.
    """
    gamma, _beta = default_stepsizes(lambda2)
    beta = _beta
    delta = ops.Delta_tilde
    delta_t = delta.T
    G_F = G_out
    G_Z = np.zeros((ops.m, G_out.shape[1]))
    G_X = np.zeros_like(G_out)
    for step in reversed(steps):
        # F' = Y - gamma * Delta^T Z'
        G_Y = G_F.copy()
        G_Znext = G_Z - gamma * (delta @ G_F)
        # Z' = projection(Zbar)
        G_Zbar = _projection_backward(G_Znext, step, lambda1, mode)
        # Zbar = Z + beta * Delta Fbar
        G_Zk = G_Zbar
        G_Fbar = beta * (delta_t @ G_Zbar)
        # Fbar = Y - gamma * Delta^T Z
        G_Y += G_Fbar
        G_Zk = G_Zk - gamma * (delta @ G_Fbar)
        # Y = gamma * X + (1 - gamma) * A_tilde F
        G_X += gamma * G_Y
        G_F = (1.0 - gamma) * (ops.A_tilde @ G_Y)
        G_Z = G_Zk
    # F_0 = X; Z_0 is the zero constant
    return G_X + G_F


def forward(model: MLPModel, dataset, ops: NormalizedOperators,
            cfg: TrainConfig, train_mode: bool,
            rng: np.random.Generator | None = None):
    """MLP then propagation.  Returns ``(logits, tape)``; tape only in train mode.

    Dropout (input features and hidden activation) is active only in train
    mode and consumes ``rng``; pass the training loop's generator for
    reproducible streams.  Eval mode is deterministic and returns no tape.
    """
    X = as_signal(dataset.X_fea, rows=ops.n, name="features")
    p = cfg.dropout
    if train_mode and p > 0.0:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        X_drop = X * _dropout_mask(rng, X.shape, p)
    else:
        X_drop = X

    pre_act = X_drop @ model.W1 + model.b1
    relu_mask = pre_act > 0.0
    hidden = np.where(relu_mask, pre_act, 0.0)
    if train_mode and p > 0.0:
        drop_mask_hidden = _dropout_mask(rng, hidden.shape, p)
        hidden_drop = hidden * drop_mask_hidden
    else:
        drop_mask_hidden = None
        hidden_drop = hidden
    mlp_out = hidden_drop @ model.W2 + model.b2

    if cfg.k > 0:
        logits, steps = propagate_forward(mlp_out, ops, cfg.lambda1,
                                          cfg.lambda2, cfg.mode, cfg.k)
    else:
        logits, steps = mlp_out, []

    if not train_mode:
        return logits, None
    tape = Tape(cfg=cfg, train_mode=True, model=model, ops=ops,
                X_drop=X_drop, relu_mask=relu_mask,
                drop_mask_hidden=drop_mask_hidden, hidden_drop=hidden_drop,
                mlp_out=mlp_out, steps=steps, logits=logits)
    return logits, tape


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss(logits, labels, mask, model: MLPModel, weight_decay: float) -> float:
    """Mean softmax cross-entropy over masked nodes + l2 penalty on weights.

    The penalty is ``weight_decay * (||W1||_F^2 + ||W2||_F^2) / 2``; biases
    are not penalized.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise InputError("loss mask selects no nodes")
    labels = np.asarray(labels)
    ls = _log_softmax(np.asarray(logits)[mask])
    ce = -float(ls[np.arange(ls.shape[0]), labels[mask]].mean())
    reg = 0.5 * weight_decay * (float(np.sum(model.W1 ** 2)) +
                                float(np.sum(model.W2 ** 2)))
    return ce + reg


def backward(tape: Tape, labels, train_mask, cfg: TrainConfig) -> MLPGrads:
    """Reverse sweep: loss -> propagation -> MLP.  Needs a train-mode tape."""
    if tape is None or not tape.train_mode:
        raise InputError("backward requires a tape from a train-mode forward")
    if tape.cfg != cfg:
        raise InputError("stale tape: config does not match the recorded forward")
    mask = np.asarray(train_mask, dtype=bool)
    if not mask.any():
        raise InputError("train mask selects no nodes")
    labels = np.asarray(labels)
    model = tape.model
    weight_decay = cfg.weight_decay

    idx = np.flatnonzero(mask)
    probs = np.exp(_log_softmax(tape.logits[idx]))
    probs[np.arange(idx.size), labels[idx]] -= 1.0
    G_logits = np.zeros_like(tape.logits)
    G_logits[idx] = probs / idx.size

    if cfg.k > 0:
        G_out = propagate_backward(G_logits, tape.steps, tape.ops,
                                   cfg.lambda1, cfg.lambda2, cfg.mode)
    else:
        G_out = G_logits

    dW2 = tape.hidden_drop.T @ G_out + weight_decay * model.W2
    db2 = G_out.sum(axis=0)
    G_hidden = G_out @ model.W2.T
    if tape.drop_mask_hidden is not None:
        G_hidden = G_hidden * tape.drop_mask_hidden
    G_pre = np.where(tape.relu_mask, G_hidden, 0.0)
    dW1 = tape.X_drop.T @ G_pre + weight_decay * model.W1
    db1 = G_pre.sum(axis=0)
    return MLPGrads(W1=dW1, b1=db1, W2=dW2, b2=db2)


def adam_step(model: MLPModel, grads: MLPGrads, state: AdamState, lr: float,
              t: int, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    """One Adam update with bias correction; ``t`` is the 1-based step count."""
    if t < 1:
        raise InputError(f"Adam step count must be >= 1, got {t}")
    new_params = {}
    for name in PARAM_FIELDS:
        g = getattr(grads, name)
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        new_params[name] = getattr(model, name) - lr * m_hat / (np.sqrt(v_hat) + eps)
    return replace(model, **new_params), state


def evaluate(model: MLPModel, dataset, ops: NormalizedOperators,
             cfg: TrainConfig, mask) -> float:
    """Accuracy of argmax predictions over ``mask`` (eval-mode forward).

    Ties resolve to the lowest class index.
    """
    logits, _ = forward(model, dataset, ops, cfg, train_mode=False)
    return _accuracy(logits, dataset.labels, mask)


def _accuracy(logits, labels, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise InputError("accuracy mask selects no nodes")
    pred = np.argmax(logits[mask], axis=1)   # argmax takes the first maximum
    return float(np.mean(pred == np.asarray(labels)[mask]))


def train(dataset, ops: NormalizedOperators, cfg: TrainConfig):
    """Full-graph training loop with early stopping on validation accuracy.

    Returns ``(best_model, report)`` where the model is the parameter
    snapshot at the best validation epoch and the report carries the loss
    and accuracy curves plus the test accuracy of that snapshot.
    Deterministic given ``cfg.seed``.
    """
    rng = np.random.default_rng(cfg.seed)
    d_in = dataset.X_fea.shape[1]
    num_classes = int(np.max(dataset.labels)) + 1
    model = init_model(rng, d_in, cfg.hidden, num_classes, cfg.dropout)
    state = AdamState.zeros_like(model)

    best_val = -np.inf
    best_model = model
    best_epoch = 0
    since_best = 0
    train_losses, train_accs, val_losses, val_accs = [], [], [], []

    epochs_run = 0
    for epoch in range(1, cfg.epochs + 1):
        epochs_run = epoch
        logits, tape = forward(model, dataset, ops, cfg, train_mode=True, rng=rng)
        train_losses.append(loss(logits, dataset.labels, dataset.train_mask,
                                 model, cfg.weight_decay))
        train_accs.append(_accuracy(logits, dataset.labels, dataset.train_mask))
        grads = backward(tape, dataset.labels, dataset.train_mask, cfg)
        model, state = adam_step(model, grads, state, cfg.lr, epoch)

        val_logits, _ = forward(model, dataset, ops, cfg, train_mode=False)
        val_losses.append(loss(val_logits, dataset.labels, dataset.val_mask,
                               model, 0.0))
        val_acc = _accuracy(val_logits, dataset.labels, dataset.val_mask)
        val_accs.append(val_acc)

        if val_acc > best_val:
            best_val = val_acc
            best_model = model
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    test_acc = evaluate(best_model, dataset, ops, cfg, dataset.test_mask)
    report = TrainReport(seed=cfg.seed, config=cfg.to_dict(),
                         train_losses=train_losses, train_accuracies=train_accs,
                         val_losses=val_losses, val_accuracies=val_accs,
                         best_epoch=best_epoch, epochs_run=epochs_run,
                         test_accuracy=test_acc)
    return best_model, report


def flatten_params(model: MLPModel) -> np.ndarray:
    """All parameters as one flat vector (order: W1, b1, W2, b2)."""
    return np.concatenate([getattr(model, f).ravel() for f in PARAM_FIELDS])


def with_params(model: MLPModel, vec: np.ndarray) -> MLPModel:
    """Model with parameters replaced from a flat vector."""
    vec = np.asarray(vec, dtype=np.float64)
    out = {}
    offset = 0
    for name in PARAM_FIELDS:
        arr = getattr(model, name)
        out[name] = vec[offset:offset + arr.size].reshape(arr.shape).copy()
        offset += arr.size
    if offset != vec.size:
        raise InputError(f"parameter vector has {vec.size} entries, expected {offset}")
    return replace(model, **out)


def save_checkpoint(model: MLPModel, cfg: TrainConfig, path) -> None:
    """Parameter arrays plus a JSON config echo, in npz form."""
    np.savez(path, W1=model.W1, b1=model.b1, W2=model.W2, b2=model.b2,
             dropout_rate=np.float64(model.dropout_rate),
             config_json=np.array(json.dumps(cfg.to_dict())))


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(model, TrainConfig)``."""
    with np.load(path, allow_pickle=False) as data:
        cfg_dict = json.loads(str(data["config_json"]))
        model = MLPModel(W1=data["W1"], b1=data["b1"], W2=data["W2"],
                         b2=data["b2"],
                         dropout_rate=float(data["dropout_rate"]))
    return model, TrainConfig(**cfg_dict)
