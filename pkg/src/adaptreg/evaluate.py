"""Full-catalog ranking metrics: AUC, HR@K, NDCG@K, item-side metrics and
frequency-group improvement reports."""

import csv
from dataclasses import dataclass, field

import numpy as np


def average_ranks(scores):
    """1-based ranks ascending by score, ties averaged (midranks)."""
    uniq, inv, counts = np.unique(scores, return_inverse=True, return_counts=True)
    csum = np.cumsum(counts)
    start = csum - counts + 1
    mean_rank = (start + csum) / 2.0
    return mean_rank[inv]


def auc_from_scores(pos_scores, neg_scores):
    """Mann-Whitney AUC with ties counting one half."""
    npos, nneg = len(pos_scores), len(neg_scores)
    allsc = np.concatenate([pos_scores, neg_scores])
    ranks = average_ranks(allsc)
    rsum = ranks[:npos].sum()
    return (rsum - npos * (npos + 1) / 2.0) / (npos * nneg)


def _candidates(split, u, stage):
    """Candidate item ids (ascending) and this user's positives for the stage."""
    if stage == "test":
        excluded = split.user_pos_train_val[u]
        positives = split.test[u]
    elif stage == "validation":
        excluded = split.user_pos_train[u]
        positives = split.val[u]
    else:
        raise ValueError(f"unknown stage {stage!r}")
    mask = np.ones(split.num_items, dtype=bool)
    mask[excluded] = False
    return np.flatnonzero(mask), positives


def user_auc(emb, split, u, stage="test"):
    """Probability a random test positive outranks a random non-interacted item."""
    cands, positives = _candidates(split, u, stage)
    if len(positives) == 0:
        return None
    scores = emb.item[cands] @ emb.user[u]
    pos_mask = np.isin(cands, positives)
    if (~pos_mask).sum() == 0:
        return None
    return float(auc_from_scores(scores[pos_mask], scores[~pos_mask]))


def user_topk_ranks(emb, split, u, stage="test"):
    """1-based ranks of the user's positives in the full-catalog candidate
    ranking (score descending, ties by ascending item id)."""
    cands, positives = _candidates(split, u, stage)
    if len(positives) == 0:
        return None
    scores = emb.item[cands] @ emb.user[u]
    order = np.lexsort((cands, -scores))
    rank_of = np.empty(len(cands), dtype=np.int64)
    rank_of[order] = np.arange(1, len(cands) + 1)
    pos_idx = np.searchsorted(cands, positives)
    return rank_of[pos_idx]


def user_topk(emb, split, u, k, stage="test"):
    """(HR@k, NDCG@k) averaged over the user's test items."""
    ranks = user_topk_ranks(emb, split, u, stage)
    if ranks is None:
        return None
    hits = ranks <= k
    gains = np.where(hits, 1.0 / np.log2(ranks + 1.0), 0.0)
    return float(hits.mean()), float(gains.mean())


@dataclass
class MetricReport:
    ks: tuple
    auc: float
    hr: dict                      # k -> corpus mean
    ndcg: dict
    user_ids: np.ndarray          # users with >= 1 test item
    user_auc: np.ndarray
    user_hr: dict                 # k -> per-user vector
    user_ndcg: dict
    item_ids: dict = field(default_factory=dict)    # k -> item id vector
    item_hr: dict = field(default_factory=dict)     # k -> per-item vector
    item_ndcg: dict = field(default_factory=dict)
    skipped_users: int = 0


def corpus_metrics(emb, split, ks=(50, 100), stage="test",
                   item_metric_mode="item-specific"):
    """Unweighted per-user means over users with at least one positive, plus
    item-side aggregates.

    item_metric_mode: "item-specific" averages the hit/gain of the item itself
    in each test user's ranking; "user-average" averages the whole-user HR/NDCG
    of the item's test users.
    """
    ks = tuple(ks)
    user_ids, aucs = [], []
    per_user_hr = {k: [] for k in ks}
    per_user_ndcg = {k: [] for k in ks}
    item_hits = {k: {} for k in ks}   # item -> list of values
    item_gains = {k: {} for k in ks}
    skipped = 0
    for u in range(split.num_users):
        ranks = user_topk_ranks(emb, split, u, stage)
        if ranks is None:
            skipped += 1
            continue
        a = user_auc(emb, split, u, stage)
        if a is None:
            skipped += 1
            continue
        user_ids.append(u)
        aucs.append(a)
        positives = split.test[u] if stage == "test" else split.val[u]
        for k in ks:
            hits = ranks <= k
            gains = np.where(hits, 1.0 / np.log2(ranks + 1.0), 0.0)
            hr_u = float(hits.mean())
            ndcg_u = float(gains.mean())
            per_user_hr[k].append(hr_u)
            per_user_ndcg[k].append(ndcg_u)
            for it, h, g in zip(positives, hits, gains):
                it = int(it)
                if item_metric_mode == "item-specific":
                    item_hits[k].setdefault(it, []).append(float(h))
                    item_gains[k].setdefault(it, []).append(float(g))
                else:
                    item_hits[k].setdefault(it, []).append(hr_u)
                    item_gains[k].setdefault(it, []).append(ndcg_u)
    user_ids = np.asarray(user_ids, dtype=np.int64)
    aucs = np.asarray(aucs)
    item_ids = {}
    item_hr = {}
    item_ndcg = {}
    for k in ks:
        ids = np.asarray(sorted(item_hits[k]), dtype=np.int64)
        item_ids[k] = ids
        item_hr[k] = np.asarray([np.mean(item_hits[k][i]) for i in ids])
        item_ndcg[k] = np.asarray([np.mean(item_gains[k][i]) for i in ids])
    return MetricReport(
        ks=ks,
        auc=float(aucs.mean()) if len(aucs) else float("nan"),
        hr={k: float(np.mean(per_user_hr[k])) for k in ks},
        ndcg={k: float(np.mean(per_user_ndcg[k])) for k in ks},
        user_ids=user_ids,
        user_auc=aucs,
        user_hr={k: np.asarray(per_user_hr[k]) for k in ks},
        user_ndcg={k: np.asarray(per_user_ndcg[k]) for k in ks},
        item_ids=item_ids, item_hr=item_hr, item_ndcg=item_ndcg,
        skipped_users=skipped,
    )


def corpus_auc(emb, split, stage="validation"):
    """Mean per-user AUC only (cheap loop for in-training evaluation)."""
    vals = []
    for u in range(split.num_users):
        a = user_auc(emb, split, u, stage)
        if a is not None:
            vals.append(a)
    return float(np.mean(vals)) if vals else float("nan")


def group_improvement_report(values_a, values_b, entity_ids_a, entity_ids_b, groups):
    """Per-group relative deltas (mean_b - mean_a) / mean_a over the shared
    entity universe; empty or zero-baseline groups carry a note instead."""
    shared, ia, ib = np.intersect1d(entity_ids_a, entity_ids_b, return_indices=True)
    va, vb = np.asarray(values_a)[ia], np.asarray(values_b)[ib]
    glabels = np.asarray(groups)[shared]
    out = []
    for g in range(int(np.asarray(groups).max()) + 1 if len(groups) else 0):
        mask = glabels == g
        size = int(mask.sum())
        if size == 0:
            out.append({"group": g, "size": 0, "delta": None, "note": "empty group"})
            continue
        ma, mb = float(va[mask].mean()), float(vb[mask].mean())
        if ma == 0.0:
            out.append({"group": g, "size": size, "mean_a": ma, "mean_b": mb,
                        "delta": None, "note": "zero baseline"})
        else:
            out.append({"group": g, "size": size, "mean_a": ma, "mean_b": mb,
                        "delta": (mb - ma) / ma, "note": ""})
    return out


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def write_report_summary(path, report):
    with open(path, "w") as fh:
        fh.write(f"auc {report.auc:.6f}\n")
        for k in report.ks:
            fh.write(f"hr@{k} {report.hr[k]:.6f}\n")
            fh.write(f"ndcg@{k} {report.ndcg[k]:.6f}\n")
        fh.write(f"users_evaluated {len(report.user_ids)}\n")
        fh.write(f"users_skipped {report.skipped_users}\n")


def write_per_entity(path_prefix, report):
    """Per-user and per-item delimited metric files."""
    upath = f"{path_prefix}_users.csv"
    with open(upath, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["user", "auc"]
        for k in report.ks:
            header += [f"hr@{k}", f"ndcg@{k}"]
        w.writerow(header)
        for n, u in enumerate(report.user_ids):
            row = [int(u), f"{report.user_auc[n]:.6f}"]
            for k in report.ks:
                row += [f"{report.user_hr[k][n]:.6f}", f"{report.user_ndcg[k][n]:.6f}"]
            w.writerow(row)
    ipath = f"{path_prefix}_items.csv"
    with open(ipath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item", "k", "hr", "ndcg"])
        for k in report.ks:
            for n, it in enumerate(report.item_ids[k]):
                w.writerow([int(it), k, f"{report.item_hr[k][n]:.6f}",
                            f"{report.item_ndcg[k][n]:.6f}"])
    return upath, ipath
