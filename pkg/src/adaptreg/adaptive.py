"""Adaptive regularization engine: granularity-aware coefficient tensors,
gradient composition, the validation-loss hypergradient through an assumed
optimizer step, the clip-then-clamp projection, the alternating training loop,
and trajectory recording."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import frequency_groups, sample_triplets
from .errors import AdaptRegError, ConfigError
from .mf import Embeddings, SparseGrad, bpr_gradient, bpr_loss
from .optim import make_optimizer

GRANULARITIES = ("global", "dim", "user", "item", "user-dim", "item-dim", "full")

# short names used in experiment tables / configs
GRANULARITY_ALIASES = {
    "d": "dim", "u": "user", "i": "item",
    "du": "user-dim", "di": "item-dim", "dui": "full",
}


def canonical_granularity(name):
    name = name.lower()
    name = GRANULARITY_ALIASES.get(name, name)
    if name not in GRANULARITIES:
        raise ConfigError(f"unknown granularity {name!r}")
    return name


@dataclass
class RegCoefficients:
    """Nonnegative L2 coefficients at a chosen granularity.

    Stored as a flat parameter vector plus (|U|,K)/(|I|,K) index maps into it;
    broadcasting and chain-rule aggregation both go through the index maps, so
    tied granularities are exact special cases of the fully fine-grained form.
    """

    granularity: str
    values: np.ndarray      # flat float64, always >= 0
    user_index: np.ndarray  # (|U|, K) int64 into values
    item_index: np.ndarray  # (|I|, K)

    @classmethod
    def create(cls, granularity, num_users, num_items, dim, init=0.0):
        granularity = canonical_granularity(granularity)
        U, I, K = num_users, num_items, dim
        uu, kk = np.meshgrid(np.arange(U), np.arange(K), indexing="ij")
        ii, ki = np.meshgrid(np.arange(I), np.arange(K), indexing="ij")
        if granularity == "global":
            n = 1
            uidx = np.zeros((U, K), dtype=np.int64)
            iidx = np.zeros((I, K), dtype=np.int64)
        elif granularity == "dim":
            n = K
            uidx = kk.astype(np.int64)
            iidx = ki.astype(np.int64)
        elif granularity == "user":
            n = U + 1
            uidx = uu.astype(np.int64)
            iidx = np.full((I, K), U, dtype=np.int64)
        elif granularity == "item":
            n = I + 1
            uidx = np.full((U, K), I, dtype=np.int64)
            iidx = ii.astype(np.int64)
        elif granularity == "user-dim":
            n = U * K + K
            uidx = (uu * K + kk).astype(np.int64)
            iidx = (U * K + ki).astype(np.int64)
        elif granularity == "item-dim":
            n = K + I * K
            uidx = kk.astype(np.int64)
            iidx = (K + ii * K + ki).astype(np.int64)
        else:  # full
            n = U * K + I * K
            uidx = (uu * K + kk).astype(np.int64)
            iidx = (U * K + ii * K + ki).astype(np.int64)
        values = np.full(n, float(init))
        if init < 0:
            raise ConfigError("initial coefficient must be nonnegative")
        return cls(granularity=granularity, values=values,
                   user_index=uidx, item_index=iidx)

    @property
    def num_entries(self):
        return len(self.values)

    def user_dense(self, num_users=None, dim=None):
        return self.values[self.user_index]

    def item_dense(self, num_items=None, dim=None):
        return self.values[self.item_index]

    def copy(self):
        return RegCoefficients(self.granularity, self.values.copy(),
                               self.user_index, self.item_index)

    def with_values(self, values):
        return RegCoefficients(self.granularity, np.asarray(values, dtype=np.float64),
                               self.user_index, self.item_index)


def compose_gradient(grad, emb, lam):
    """Non-regularized gradient plus 2*lambda*theta, restricted to touched rows."""
    gu = grad.user_vals + 2.0 * lam.values[lam.user_index[grad.user_rows]] * emb.user[grad.user_rows]
    gi = grad.item_vals + 2.0 * lam.values[lam.item_index[grad.item_rows]] * emb.item[grad.item_rows]
    return SparseGrad(user_rows=grad.user_rows, user_vals=gu,
                      item_rows=grad.item_rows, item_vals=gi)


def hypergradient(lam, emb, optimizer, train_batch, val_batch):
    """Gradient of validation BPR loss w.r.t. each coefficient entry, via the
    assumed next-step parameters.

    Separate non-regularized pass on the train batch, composition with the
    penalty gradient, a side-effect-free optimizer step, a validation backward
    pass at the assumed parameters, then chain-rule aggregation per entry.
    Coordinates untouched by the train batch contribute zero.
    """
    g_bar = bpr_gradient(emb, train_batch)
    composed = compose_gradient(g_bar, emb, lam)
    theta_bar = optimizer.assumed_step(emb, composed)
    v = bpr_gradient(theta_bar, val_batch)
    j_user, j_item = optimizer.lambda_jacobian(emb, composed)

    G = np.zeros(lam.num_entries)
    for rows, J, v_rows, v_vals, index in (
        (composed.user_rows, j_user, v.user_rows, v.user_vals, lam.user_index),
        (composed.item_rows, j_item, v.item_rows, v.item_vals, lam.item_index),
    ):
        shared, ia, ib = np.intersect1d(rows, v_rows, assume_unique=True,
                                        return_indices=True)
        if len(shared) == 0:
            continue
        contrib = v_vals[ib] * J[ia]
        _kernels.scatter_add(G, index[shared].ravel(), contrib.ravel())
    if not np.isfinite(G).all():
        bad = int(np.flatnonzero(~np.isfinite(G))[0])
        raise AdaptRegError(f"non-finite hypergradient at coefficient entry {bad}")
    return G


def project_and_step(lam, G, step_size, clip):
    """Clamp G to [-clip, clip], take a gradient step, project onto lambda >= 0."""
    g = np.clip(G, -clip, clip)
    values = lam.values - step_size * g
    np.maximum(values, 0.0, out=values)
    return lam.with_values(values)


class LambdaAdam:
    """Optional Adam state for the coefficient updates (config-gated)."""

    def __init__(self, n, beta1=0.9, beta2=0.999, eps=1e-8):
        self.s = np.zeros(n)
        self.r = np.zeros(n)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def direction(self, g):
        self.t += 1
        self.s = self.beta1 * self.s + (1 - self.beta1) * g
        self.r = self.beta2 * self.r + (1 - self.beta2) * g * g
        c = math.sqrt(1 - self.beta2 ** self.t) / (1 - self.beta1 ** self.t)
        return c * self.s / (np.sqrt(self.r) + self.eps)


# ---------------------------------------------------------------------------
# Trajectory recording
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryRow:
    step: int
    user_mean: float
    item_mean: float
    user_var: float
    item_var: float
    user_group_stats: list  # (group, size, mean, var) population variance
    item_group_stats: list
    user_entity_means: np.ndarray = None
    item_entity_means: np.ndarray = None


def record_trajectory(lam, split, step, user_groups, item_groups, keep_entities=False):
    """Per-entity mean coefficient over dims plus per-frequency-group mean/variance."""
    u_means = lam.user_dense().mean(axis=1)
    i_means = lam.item_dense().mean(axis=1)
    rows = []
    for groups, means in ((user_groups, u_means), (item_groups, i_means)):
        stats = []
        for g in range(int(groups.max()) + 1 if len(groups) else 0):
            members = means[groups == g]
            if len(members) == 0:
                continue
            stats.append((g, len(members), float(members.mean()),
                          float(members.var())))
        rows.append(stats)
    return TrajectoryRow(
        step=step,
        user_mean=float(u_means.mean()),
        item_mean=float(i_means.mean()),
        user_var=float(u_means.var()),
        item_var=float(i_means.var()),
        user_group_stats=rows[0],
        item_group_stats=rows[1],
        user_entity_means=u_means if keep_entities else None,
        item_entity_means=i_means if keep_entities else None,
    )


# ---------------------------------------------------------------------------
# Alternating training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    emb: Embeddings
    lam: RegCoefficients
    optimizer: object
    history: list            # dicts: epoch, step, train_loss, val_auc (when evaluated)
    trajectory: list         # TrajectoryRow per epoch
    best_epoch: int
    aborted: bool = False
    abort_reason: str = ""


def train_model(split, cfg, eval_fn=None):
    """Alternating theta/lambda optimization per the run config.

    cfg is a resolved RunConfig. eval_fn(emb) -> validation AUC may be injected
    (defaults to full validation AUC); evaluation runs every
    ``training.eval_every`` epochs with early stopping on it.
    """
    from .evaluate import corpus_auc  # local import to avoid a cycle

    tr = cfg.training
    reg = cfg.regularization
    rng = np.random.default_rng(tr.seed)
    emb = Embeddings.init(split.num_users, split.num_items, cfg.model.dim,
                          cfg.model.init_scale, rng)
    adaptive = reg.mode in ("opt", "sgda")
    granularity = reg.granularity if adaptive else "global"
    init = reg.init if adaptive else reg.fixed_value
    lam = RegCoefficients.create(granularity, split.num_users, split.num_items,
                                 cfg.model.dim, init=init)
    optimizer = make_optimizer(cfg.optimizer.kind, lr=cfg.optimizer.lr,
                               beta1=cfg.optimizer.beta1, beta2=cfg.optimizer.beta2,
                               eps=cfg.optimizer.eps, r_decay=cfg.optimizer.r_decay)
    lam_opt = LambdaAdam(lam.num_entries) if (adaptive and reg.adam_on_lambda) else None

    user_groups = frequency_groups(split.user_frequency, cfg.groups.user_boundaries)
    item_groups = frequency_groups(split.item_frequency, cfg.groups.item_boundaries)

    if eval_fn is None:
        eval_fn = lambda e: corpus_auc(e, split, stage="validation")

    steps_per_epoch = max(1, math.ceil(split.num_train_events / tr.batch_size))
    history = []
    trajectory = []
    best_auc = -np.inf
    best_epoch = 0
    best_emb = emb.copy()
    best_lam = lam.copy()
    bad_evals = 0
    global_step = 0
    aborted = False
    abort_reason = ""

    for epoch in range(1, tr.epochs + 1):
        loss_sum = 0.0
        triplets = 0
        try:
            for _ in range(steps_per_epoch):
                batch = sample_triplets(split, rng, tr.batch_size, "train")
                grad = bpr_gradient(emb, batch)
                loss_sum += bpr_loss(emb, batch)
                triplets += len(batch.users)
                if reg.dense_penalty:
                    full = SparseGrad(
                        user_rows=np.arange(split.num_users),
                        user_vals=np.zeros_like(emb.user),
                        item_rows=np.arange(split.num_items),
                        item_vals=np.zeros_like(emb.item))
                    full.user_vals[grad.user_rows] = grad.user_vals
                    full.item_vals[grad.item_rows] = grad.item_vals
                    composed = compose_gradient(full, emb, lam)
                else:
                    composed = compose_gradient(grad, emb, lam)
                optimizer.step(emb, composed, step_index=global_step)
                if adaptive and global_step % reg.every == 0:
                    tb = sample_triplets(split, rng, tr.lambda_batch_size, "train")
                    vb = sample_triplets(split, rng, tr.lambda_batch_size, "validation")
                    G = hypergradient(lam, emb, optimizer, tb, vb)
                    if lam_opt is not None:
                        G = lam_opt.direction(np.clip(G, -reg.clip, reg.clip))
                    lam = project_and_step(lam, G, reg.step_size, reg.clip)
                global_step += 1
        except AdaptRegError as exc:
            aborted = True
            abort_reason = str(exc)
            emb, lam = best_emb, best_lam
            break
        mean_loss = loss_sum / max(triplets, 1)
        trajectory.append(record_trajectory(lam, split, epoch, user_groups, item_groups))
        row = {"epoch": epoch, "step": global_step, "train_loss": mean_loss}
        if epoch % tr.eval_every == 0 or epoch == tr.epochs:
            if not np.isfinite(mean_loss):
                aborted = True
                abort_reason = f"non-finite training loss at epoch {epoch}"
                emb, lam = best_emb, best_lam
                history.append(row)
                break
            val_auc = eval_fn(emb)
            row["val_auc"] = val_auc
            if val_auc > best_auc:
                best_auc = val_auc
                best_epoch = epoch
                best_emb = emb.copy()
                best_lam = lam.copy()
                bad_evals = 0
            else:
                bad_evals += 1
            history.append(row)
            if bad_evals >= tr.patience:
                break
        else:
            history.append(row)

    if best_epoch:
        emb, lam = best_emb, best_lam
    return TrainResult(emb=emb, lam=lam, optimizer=optimizer, history=history,
                       trajectory=trajectory, best_epoch=best_epoch,
                       aborted=aborted, abort_reason=abort_reason)
