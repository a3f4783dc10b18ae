"""Feature embedding with a sigmoid plausibility head, trained on the
evidential objective with plain momentum SGD.

Two embeddings are available:

``rbf`` (default)
    One layer of Gaussian radial-basis units with learned centres and
    precisions.  Far from every centre the features vanish, all logits go to
    zero and the opinion relaxes to pl = 0.5 for every class, so ignorance
    rises to 0.5**K away from the training data.
``mlp``
    A stack of dense relu/tanh layers.  It classifies just as well but
    extrapolates confident plausibilities far from the data, so its
    ignorance does not flag out-of-distribution inputs.

Everything is float64 numpy.  Randomness (initialisation and shuffling)
comes from a single ``numpy.random.Generator`` seeded from the config, so a
run is reproducible bit for bit on one thread.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, loss, sl_core

log = logging.getLogger(__name__)

MODEL_FORMAT = "flexrec-model"
MODEL_FORMAT_VERSION = 1
SATURATION_LOGIT = 15.0
ACTIVATIONS = ("relu", "tanh")
EMBEDDINGS = ("rbf", "mlp")


class DimensionMismatchError(ValueError):
    pass


class DivergedTrainingError(FloatingPointError):
    def __init__(self, step: int, epoch: int, detail: str):
        super().__init__(f"training diverged at step {step} (epoch {epoch}): {detail}")
        self.step = step
        self.epoch = epoch


@dataclass
class NetworkConfig:
    input_dim: int = 2
    hidden_dims: tuple = (64,)
    num_classes: int = 3
    embedding: str = "rbf"
    activation: str = "relu"
    rbf_width: float = 4.0
    seed: int = 0
    learning_rate: float = 0.004
    momentum: float = 0.9
    batch_size: int = 128
    epochs: int = 300
    lambda_reg: float = 1.0
    lambda_kl_max: float = 0.05
    kl_warmup_fraction: float = 0.5

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError("layer dimensions must be >= 1")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.embedding not in EMBEDDINGS:
            raise ValueError(f"embedding must be one of {EMBEDDINGS}")
        if self.embedding == "rbf":
            if len(self.hidden_dims) != 1:
                raise ValueError("the rbf embedding takes exactly one hidden size (the number of units)")
            if not self.rbf_width > 0:
                raise ValueError("rbf_width must be > 0")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        loss.LossWeights(self.lambda_reg, self.lambda_kl_max, self.kl_warmup_fraction)

    @property
    def loss_weights(self) -> loss.LossWeights:
        return loss.LossWeights(self.lambda_reg, self.lambda_kl_max, self.kl_warmup_fraction)

    @property
    def variant(self) -> str:
        return "reg" if self.lambda_reg > 0 else "no-reg"


@dataclass
class ModelState:
    config: NetworkConfig
    weights: list
    biases: list
    head: np.ndarray
    centers: np.ndarray | None = None
    log_precision: np.ndarray | None = None
    velocity: list = field(default_factory=list)
    epoch: int = 0
    rng: np.random.Generator | None = None
    history: list = field(default_factory=list)

    def parameters(self) -> list:
        """Every trainable array, in a fixed order (embedding then head)."""
        out = [] if self.centers is None else [self.centers, self.log_precision]
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        out.append(self.head)
        return out

    def parameter_names(self) -> list:
        names = [] if self.centers is None else ["rbf.centers", "rbf.log_precision"]
        for i in range(len(self.weights)):
            names += [f"hidden.{i}.weight", f"hidden.{i}.bias"]
        names.append("head.weight")
        return names


def init_state(config: NetworkConfig, features=None) -> ModelState:
    """Fresh parameters drawn from the config's seed.

    Dense layers and the head get Glorot-uniform weights and zero biases.  RBF
    centres are rows of ``features`` drawn without replacement when given (standard normal
    draws otherwise), with every width set to ``rbf_width``.
    """
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    centers = log_precision = None
    if config.embedding == "rbf":
        units = config.hidden_dims[0]
        if features is not None and len(features):
            feats = np.asarray(features, dtype=np.float64)
            pick = rng.choice(len(feats), units, replace=units > len(feats))
            centers = feats[pick].copy()
        else:
            centers = rng.standard_normal((units, config.input_dim))
        log_precision = np.full(units, -math.log(2.0 * config.rbf_width ** 2))
    else:
        dims = [config.input_dim, *config.hidden_dims]
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
    width = config.hidden_dims[-1]
    lim = math.sqrt(6.0 / (width + config.num_classes))
    head = rng.uniform(-lim, lim, (config.num_classes, width))
    state = ModelState(config, weights, biases, head, centers, log_precision, rng=rng)
    state.velocity = [np.zeros_like(p) for p in state.parameters()]
    return state


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(name, z, h):
    return (z > 0).astype(np.float64) if name == "relu" else 1.0 - h * h


def _as_batch(state: ModelState, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != state.config.input_dim:
        raise DimensionMismatchError(
            f"expected features of length {state.config.input_dim}, got shape {np.shape(x)}"
        )
    return x, single


def _rbf_features(state: ModelState, x: np.ndarray):
    c = state.centers
    diff = x[:, None, :] - c[None, :, :]
    d2 = np.einsum("nmd,nmd->nm", diff, diff)
    return d2, np.exp(-np.exp(state.log_precision) * d2)


def _forward_cache(state: ModelState, x: np.ndarray):
    act = state.config.activation
    zs, hs = [], [x]
    h = x
    if state.centers is not None:
        d2, h = _rbf_features(state, x)
        zs.append(d2)
        hs.append(h)
    for w, b in zip(state.weights, state.biases):
        z = h @ w + b
        h = _act(act, z)
        zs.append(z)
        hs.append(h)
    logits = h @ state.head.T
    return zs, hs, logits, sigmoid(logits)


def logits(state: ModelState, x) -> np.ndarray:
    x, single = _as_batch(state, x)
    out = _forward_cache(state, x)[2]
    return out[0] if single else out


def forward(state: ModelState, x) -> np.ndarray:
    """Plausibility of every class: sigma(w_i . Phi(x)).  Accepts (D,) or (N, D)."""
    x, single = _as_batch(state, x)
    pl = _forward_cache(state, x)[3]
    return pl[0] if single else pl


def _backward(state: ModelState, cache, dpl: np.ndarray, want_input: bool = False):
    zs, hs, _, pl = cache
    act = state.config.activation
    dlogit = dpl * pl * (1.0 - pl)
    grads_head = dlogit.T @ hs[-1]
    dh = dlogit @ state.head
    grads = []
    if state.centers is not None:
        x, h = hs[0], hs[1]
        d2, c = zs[0], state.centers
        prec = np.exp(state.log_precision)
        dd2 = -dh * h * prec                     # dL/d(squared distance)
        col = dd2.sum(axis=0)
        grads = [
            -2.0 * (dd2.T @ x - col[:, None] * c),
            -(dh * h * d2).sum(axis=0) * prec,
            grads_head,
        ]
        dx = 2.0 * (dd2.sum(axis=1)[:, None] * x - dd2 @ c) if want_input else None
        return grads, dx
    gw, gb = [None] * len(state.weights), [None] * len(state.weights)
    for i in range(len(state.weights) - 1, -1, -1):
        dz = dh * _act_grad(act, zs[i], hs[i + 1])
        gw[i] = hs[i].T @ dz
        gb[i] = dz.sum(axis=0)
        if i or want_input:
            dh = dz @ state.weights[i].T
    for w, b in zip(gw, gb):
        grads += [w, b]
    grads.append(grads_head)
    return grads, (dh if want_input else None)


def batch_loss_and_grads(state: ModelState, x: np.ndarray, labels: np.ndarray, lambda_kl: float):
    """Mean loss terms over the batch and gradients of the mean total w.r.t. all parameters."""
    cache = _forward_cache(state, x)
    pl = cache[3]
    edl, reg, kl, dpl = kernels.loss_grad_batch(pl, labels, state.config.lambda_reg, lambda_kl)
    n = len(labels)
    grads, _ = _backward(state, cache, dpl / n)
    terms = {
        "edl": float(np.mean(edl)),
        "reg": float(np.mean(reg)),
        "kl": float(np.mean(kl)),
    }
    terms["total"] = terms["edl"] + state.config.lambda_reg * terms["reg"] + lambda_kl * terms["kl"]
    return terms, grads, pl


def accuracy(state: ModelState, x, labels, top: int = 1) -> float:
    """Top-k accuracy ranking classes by plausibility (equivalently by belief for k=1)."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        return float("nan")
    pl = forward(state, np.atleast_2d(x))
    # stable sort, so ties go to the lower class index
    ranked = np.argsort(-pl, axis=1, kind="stable")[:, :top]
    return float(np.mean((ranked == labels[:, None]).any(axis=1)))


def train(config: NetworkConfig, features, labels, progress=None) -> ModelState:
    """Minibatch momentum SGD on the mean evidential loss.

    Appends one dict per epoch to ``state.history`` with the mean loss terms,
    the KL coefficient in force and the training accuracy after the epoch.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("cannot train on an empty dataset")
    if y.min() < 0 or y.max() >= config.num_classes:
        raise ValueError("labels must lie in 0..num_classes-1")
    state = init_state(config, x)
    _as_batch(state, x)
    weights = config.loss_weights
    n = len(y)
    step = 0
    lr, mu = config.learning_rate, config.momentum
    for epoch in range(config.epochs):
        lam_kl = loss.kl_weight(weights, epoch / config.epochs)
        order = state.rng.permutation(n)
        sums = {"edl": 0.0, "reg": 0.0, "kl": 0.0, "total": 0.0}
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            try:
                terms, grads, _ = batch_loss_and_grads(state, x[idx], y[idx], lam_kl)
            except kernels.DegenerateOpinionError as exc:
                raise DivergedTrainingError(step, epoch, str(exc)) from exc
            if not math.isfinite(terms["total"]):
                raise DivergedTrainingError(step, epoch, f"loss is {terms['total']}")
            for p, v, g in zip(state.parameters(), state.velocity, grads):
                v *= mu
                v += g
                p -= lr * v
                if not np.all(np.isfinite(p)):
                    raise DivergedTrainingError(step, epoch, "non-finite parameter after update")
            for key in sums:
                sums[key] += terms[key] * len(idx)
            step += 1
        state.epoch = epoch + 1
        record = {"epoch": epoch + 1, "lambda_kl": lam_kl, "lambda_reg": config.lambda_reg}
        record.update({k: v / n for k, v in sums.items()})
        record["train_accuracy"] = accuracy(state, x, y)
        state.history.append(record)
        log.debug("epoch %d: %s", epoch + 1, record)
        if progress is not None:
            progress(record)
    return state


# -- gradient checking ---------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_parameter: str
    low_signal: bool
    max_abs_logit: float
    kinks_skipped: int = 0
    tolerance: float = 1e-3

    @property
    def passed(self) -> bool:
        return self.low_signal or self.max_rel_error < self.tolerance


def _relu_pattern(state, x):
    if state.centers is not None or state.config.activation != "relu":
        return None
    return [z > 0 for z in _forward_cache(state, x)[0]]


def _same_pattern(a, b) -> bool:
    return a is None or all(np.array_equal(u, v) for u, v in zip(a, b))


def _sample_total(state, x, t, lambda_kl, i_hat):
    pl = forward(state, x)
    b = sl_core.singleton_beliefs(pl)
    u = 1.0 - math.fsum(b)
    alpha = loss.dirichlet_params(b, u)
    return (loss.edl_loss(alpha, t)
            + state.config.lambda_reg * loss.reg_loss(pl, t, i_hat)
            + lambda_kl * loss.kl_uniform_dirichlet(loss.mask_alpha(alpha, t)))


def grad_check(state: ModelState, features, label: int, epoch_fraction: float = 1.0,
               step: float = 1e-5, floor: float = 1e-6) -> GradCheckReport:
    """Compare backprop gradients with central differences for one sample.

    The regulariser's ignorance estimate is frozen at its unperturbed value on
    both sides, as in training.  Saturated heads (|logit| > 15) are reported
    as low-signal rather than failed.  With relu layers, entries whose
    perturbation flips any unit across its kink have no usable central
    difference; they are skipped and counted in ``kinks_skipped``.
    """
    x, _ = _as_batch(state, features)
    lam_kl = loss.kl_weight(state.config.loss_weights, epoch_fraction)
    cache = _forward_cache(state, x)
    i_hat = sl_core.ignorance(cache[3][0])
    _, _, _, dpl = kernels.loss_grad_batch(cache[3], np.array([label]), state.config.lambda_reg, lam_kl)
    analytic, _ = _backward(state, cache, dpl)

    worst, worst_name, kinks = 0.0, "", 0
    for name, p, g in zip(state.parameter_names(), state.parameters(), analytic):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = _sample_total(state, x[0], label, lam_kl, i_hat)
            pat_up = _relu_pattern(state, x)
            flat[j] = orig - step
            down = _sample_total(state, x[0], label, lam_kl, i_hat)
            pat_down = _relu_pattern(state, x)
            flat[j] = orig
            if not _same_pattern(pat_up, pat_down):
                kinks += 1
                continue
            num = (up - down) / (2 * step)
            rel = abs(num - gflat[j]) / max(abs(num), abs(gflat[j]), floor)
            if rel > worst:
                worst, worst_name = rel, f"{name}[{j}]"
    max_logit = float(np.max(np.abs(cache[2])))
    return GradCheckReport(worst, worst_name, max_logit > SATURATION_LOGIT, max_logit, kinks)


# -- adversarial perturbation -------------------------------------------------

def input_gradient(state: ModelState, features, labels, epoch_fraction: float = 1.0) -> np.ndarray:
    """Per-sample d(total loss)/d(x)."""
    x, single = _as_batch(state, features)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    lam_kl = loss.kl_weight(state.config.loss_weights, epoch_fraction)
    cache = _forward_cache(state, x)
    _, _, _, dpl = kernels.loss_grad_batch(cache[3], labels, state.config.lambda_reg, lam_kl)
    _, dx = _backward(state, cache, dpl, want_input=True)
    return dx[0] if single else dx


def fgsm_attack(state: ModelState, features, labels, epsilon: float,
                epoch_fraction: float = 1.0) -> np.ndarray:
    """One signed-gradient step of size epsilon on the loss at the true label (no clipping)."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    x = np.asarray(features, dtype=np.float64)
    if epsilon == 0:
        return x.copy()
    return x + epsilon * np.sign(input_gradient(state, x, labels, epoch_fraction))


# -- persistence ----------------------------------------------------------------

def weights_digest(arrays) -> str:
    """SHA-256 over the little-endian float64 bytes of every array, as a decimal integer."""
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return str(int(h.hexdigest(), 16))


def model_document(state: ModelState) -> dict:
    cfg = asdict(state.config)
    cfg["hidden_dims"] = list(state.config.hidden_dims)
    return {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "variant": state.config.variant,
        "config": cfg,
        "epochs_trained": state.epoch,
        "arrays": [
            {"name": name, "shape": list(p.shape), "values": p.reshape(-1).tolist()}
            for name, p in zip(state.parameter_names(), state.parameters())
        ],
        "digest": weights_digest(state.parameters()),
    }


def save_model(state: ModelState, path) -> None:
    text = json.dumps(model_document(state), indent=1)
    Path(path).write_text(text + "\n")


class ModelFormatError(ValueError):
    pass


def load_model(path) -> ModelState:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} document")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {doc.get('format_version')}")
    config = NetworkConfig(**doc["config"])
    state = init_state(config)
    by_name = {a["name"]: a for a in doc["arrays"]}
    for name, p in zip(state.parameter_names(), state.parameters()):
        if name not in by_name:
            raise ModelFormatError(f"{path}: missing array {name}")
        entry = by_name[name]
        if list(p.shape) != entry["shape"]:
            raise ModelFormatError(f"{path}: {name} has shape {entry['shape']}, expected {list(p.shape)}")
        p[...] = np.asarray(entry["values"], dtype=np.float64).reshape(p.shape)
    if weights_digest(state.parameters()) != doc["digest"]:
        raise ModelFormatError(f"{path}: weight digest mismatch")
    state.epoch = int(doc.get("epochs_trained", 0))
    return state
