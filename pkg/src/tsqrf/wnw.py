"""Weighted Nadaraya-Watson conditional-CDF baseline and its inversion.

Uses a Gaussian product kernel with uniform point weights 1/T; quantiles
invert the kernel-weighted empirical CDF over the training responses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LagDataset

__all__ = [
    "WnwConfig",
    "WnwModel",
    "bandwidth_rule_of_thumb",
    "select_bandwidth_cv",
    "wnw_cdf",
    "wnw_quantile",
    "fit_wnw",
    "wnw_to_doc",
    "wnw_from_doc",
    "WNW_FORMAT",
    "WNW_FORMAT_VERSION",
]

WNW_FORMAT = "tsqrf-wnw"
WNW_FORMAT_VERSION = 1

CV_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class WnwConfig:
    """Bandwidth policy: "rule_of_thumb", "cv", or explicit per-dimension values."""

    bandwidth: str | tuple[float, ...] = "rule_of_thumb"
    cv_taus: tuple[float, ...] = (0.1, 0.5, 0.9)

    def __post_init__(self):
        bw = self.bandwidth
        if isinstance(bw, str):
            if bw not in ("rule_of_thumb", "cv"):
                raise ValueError("bandwidth must be 'rule_of_thumb', 'cv' or explicit values")
        else:
            bw = tuple(float(h) for h in bw)
            if not bw or any(h <= 0 for h in bw):
                raise ValueError("bandwidths must be strictly positive")
            object.__setattr__(self, "bandwidth", bw)


def bandwidth_rule_of_thumb(train: LagDataset) -> np.ndarray:
    """Per-dimension h_j = 1.06 * sigma_j * N^(-1/(4+p)), floored at sigma=1."""
    n = len(train)
    if n < 2:
        raise ValueError("need at least 2 training points for a bandwidth")
    scale = 1.06 * n ** (-1.0 / (4 + train.p))
    sigma = train.x.std(axis=0, ddof=1)
    return np.where(sigma > 0, sigma, 1.0) * scale


def _log_kernel_weights(train_x: np.ndarray, queries: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Log Gaussian product-kernel weights, shape (n_queries, n_train)."""
    z = (queries[:, None, :] - train_x[None, :, :]) / h[None, None, :]
    return -0.5 * np.sum(z * z, axis=2)


def _normalized_weights(train: LagDataset, queries: np.ndarray, h: np.ndarray) -> np.ndarray:
    logw = _log_kernel_weights(train.x, queries, h)
    logw -= logw.max(axis=1, keepdims=True)  # keeps the denominator positive
    w = np.exp(logw)
    return w / w.sum(axis=1, keepdims=True)


def _resolve_bandwidth(train: LagDataset, config: WnwConfig) -> np.ndarray:
    if isinstance(config.bandwidth, tuple):
        h = np.asarray(config.bandwidth, dtype=float)
        if h.size != train.p:
            raise ValueError(f"expected {train.p} bandwidths, got {h.size}")
        return h
    if config.bandwidth == "cv":
        return select_bandwidth_cv(train, config.cv_taus)
    return bandwidth_rule_of_thumb(train)


def wnw_cdf(train: LagDataset, x, y: float, config: WnwConfig = WnwConfig()) -> float:
    """Kernel-weighted empirical conditional CDF estimate at (x, y)."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != train.p:
        raise ValueError(f"query must have dimension {train.p}")
    h = _resolve_bandwidth(train, config)
    w = _normalized_weights(train, x, h)[0]
    return float(np.sum(w[train.y <= y]))


def _invert_cdf_rows(y: np.ndarray, weights: np.ndarray, taus: list[float]) -> np.ndarray:
    """Per-row smallest response whose weighted CDF reaches each tau."""
    order = np.argsort(y)
    ys = y[order]
    starts = np.r_[0, np.flatnonzero(ys[1:] > ys[:-1]) + 1]
    group_values = ys[starts]
    cum = np.cumsum(np.add.reduceat(weights[:, order], starts, axis=1), axis=1)
    out = np.empty((weights.shape[0], len(taus)))
    for j, tau in enumerate(taus):
        mask = cum >= tau * cum[:, -1:]
        idx = mask.argmax(axis=1)
        idx = np.where(mask.any(axis=1), idx, starts.size - 1)
        out[:, j] = group_values[idx]
    return out


def wnw_quantile(train: LagDataset, x, tau: float, config: WnwConfig = WnwConfig()) -> float:
    """Smallest training response y with wnw_cdf(train, x, y) >= tau."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    h = _resolve_bandwidth(train, config)
    w = _normalized_weights(train, x, h)
    return float(_invert_cdf_rows(train.y, w, [tau])[0, 0])


def _pinball(residuals: np.ndarray, tau: float) -> np.ndarray:
    return residuals * (tau - (residuals < 0))


def select_bandwidth_cv(train: LagDataset, taus=(0.1, 0.5, 0.9),
                        multipliers=CV_MULTIPLIERS) -> np.ndarray:
    """Leave-one-out pinball-loss grid search over rule-of-thumb multiples."""
    base = bandwidth_rule_of_thumb(train)
    n = len(train)
    best = None
    for mult in multipliers:
        h = base * mult
        logw = _log_kernel_weights(train.x, train.x, h)
        np.fill_diagonal(logw, -np.inf)  # leave one out
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        w /= w.sum(axis=1, keepdims=True)
        preds = _invert_cdf_rows(train.y, w, [float(t) for t in taus])
        loss = sum(
            float(_pinball(train.y - preds[:, j], tau).sum())
            for j, tau in enumerate(taus)
        ) / n
        if best is None or loss < best[0]:
            best = (loss, h)
    return best[1]


@dataclass
class WnwModel:
    """Fitted baseline: training pairs plus resolved bandwidths."""

    train: LagDataset
    bandwidths: np.ndarray

    @property
    def p(self) -> int:
        return self.train.p

    def predict(self, queries, taus) -> np.ndarray:
        queries = np.asarray(queries, dtype=float)
        if queries.ndim != 2 or queries.shape[1] != self.p:
            raise ValueError(f"queries must have {self.p} columns")
        taus = [float(t) for t in np.asarray(taus, dtype=float).reshape(-1)]
        if any(not 0.0 < t < 1.0 for t in taus):
            raise ValueError("taus must lie in (0, 1)")
        out = np.empty((queries.shape[0], len(taus)))
        chunk = 1024
        for lo in range(0, queries.shape[0], chunk):
            hi = min(lo + chunk, queries.shape[0])
            w = _normalized_weights(self.train, queries[lo:hi], self.bandwidths)
            out[lo:hi] = _invert_cdf_rows(self.train.y, w, taus)
        return out


def fit_wnw(train: LagDataset, config: WnwConfig = WnwConfig()) -> WnwModel:
    return WnwModel(train=train, bandwidths=_resolve_bandwidth(train, config))


def wnw_to_doc(model: WnwModel) -> dict:
    return {
        "format": WNW_FORMAT,
        "version": WNW_FORMAT_VERSION,
        "p": model.p,
        "bandwidths": model.bandwidths.tolist(),
        "train": {
            "x": model.train.x.tolist(),
            "y": model.train.y.tolist(),
            "t_index": model.train.t_index.tolist(),
        },
    }


def wnw_from_doc(doc: dict) -> WnwModel:
    if doc.get("format") != WNW_FORMAT:
        raise ValueError(f"not a {WNW_FORMAT} document")
    if doc.get("version") != WNW_FORMAT_VERSION:
        raise ValueError(
            f"unsupported baseline format version {doc.get('version')!r}; "
            f"this build reads version {WNW_FORMAT_VERSION}"
        )
    p = int(doc["p"])
    train = LagDataset(
        x=np.array(doc["train"]["x"], dtype=float).reshape(-1, p),
        y=np.array(doc["train"]["y"], dtype=float),
        p=p,
        t_index=np.array(doc["train"]["t_index"], dtype=int),
    )
    return WnwModel(train=train, bandwidths=np.array(doc["bandwidths"], dtype=float))
