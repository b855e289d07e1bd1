"""Affine aggregate demand ``d = b - A pi + w`` and its two-state Markov variant."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataFileError, InputError, ModelError
from .traces import atomic_write_text

MODEL_FILE_MAGIC = "# drprice affine demand model v1"


@dataclass(frozen=True, eq=False)
class AffineDemandModel:
    """Ground-truth demand parameters.

    ``A`` is the price sensitivity (kWh per $/kWh), ``b`` the base demand
    (kWh) and ``sigma_w`` the covariance of the zero-mean Gaussian noise.
    """

    A: np.ndarray
    b: np.ndarray
    sigma_w: np.ndarray = None
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        H = b.size
        A = np.asarray(self.A, dtype=float).reshape(H, H) if np.size(self.A) == H * H else None
        if A is None or b.ndim != 1:
            raise InputError(f"A has shape {np.shape(self.A)} but b has shape {np.shape(self.b)}")
        S = np.zeros((H, H)) if self.sigma_w is None else np.asarray(self.sigma_w, dtype=float)
        S = S.reshape(H, H) if S.size == H * H else S
        if S.shape != (H, H):
            raise InputError(f"sigma_w has shape {S.shape}, expected ({H}, {H})")
        if not np.allclose(S, S.T, rtol=1e-10, atol=1e-12):
            raise InputError("sigma_w must be symmetric")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sigma_w", S)
        object.__setattr__(self, "_chol", _psd_factor(S))

    @property
    def horizon(self):
        return self.b.size

    @property
    def noise_trace(self):
        """``E ||w||^2 = tr(Sigma_w)``, the loss floor under the optimal price."""
        return float(np.trace(self.sigma_w))

    @property
    def noise_factor(self):
        """Matrix ``L`` with ``L L^T = Sigma_w``; ``w = L z`` for standard normal ``z``."""
        return self._chol

    def mean_demand(self, pi):
        return self.b - self.A @ pi

    def scaled(self, factor):
        """Same base demand and noise, sensitivity multiplied by ``factor``."""
        return replace(self, A=factor * self.A)


def _psd_factor(S):
    if not S.any():
        return np.zeros_like(S)
    vals, vecs = np.linalg.eigh(S)
    if vals.min() < -1e-8 * max(1.0, vals.max()):
        raise InputError("sigma_w must be positive semidefinite")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def isotropic(A, b, sigma):
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return AffineDemandModel(A=A, b=b, sigma_w=sigma**2 * np.eye(b.size))


def _check_vec(x, H, name):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (H,):
        raise InputError(f"{name} has shape {x.shape}, expected ({H},)")
    return x


def sample_demand(model: AffineDemandModel, pi, rng) -> np.ndarray:
    pi = _check_vec(pi, model.horizon, "pi")
    z = rng.standard_normal(model.horizon)
    return model.b - model.A @ pi + model.noise_factor @ z


def optimal_price(model: AffineDemandModel, d_da) -> np.ndarray:
    """Price that makes expected demand equal the dispatch: ``A^-1 (b - d_da)``."""
    d_da = _check_vec(d_da, model.horizon, "d_da")
    try:
        if np.linalg.cond(model.A) > 1e14:
            raise np.linalg.LinAlgError("singular")
        return np.linalg.solve(model.A, model.b - d_da)
    except np.linalg.LinAlgError as exc:
        raise ModelError("price sensitivity matrix A is singular") from exc


def expected_loss(model: AffineDemandModel, pi, d_da) -> float:
    """``E ||d_rt - d_da||^2`` at price ``pi``: bias term plus ``tr(Sigma_w)``."""
    r = model.b - model.A @ pi - d_da
    return float(r @ r) + model.noise_trace


@dataclass
class MarkovModelProcess:
    """Day-to-day switching between demand models.

    With two states the chain jumps to the other state with probability
    ``transition_prob``; with more states it jumps uniformly to one of the
    others.
    """

    states: list
    transition_prob: float
    current: int = 0

    def __post_init__(self):
        if not self.states:
            raise InputError("Markov process needs at least one state")
        H = self.states[0].horizon
        if any(s.horizon != H for s in self.states):
            raise InputError("all Markov states must share the horizon")
        if not 0.0 <= self.transition_prob <= 1.0:
            raise InputError(f"transition_prob must lie in [0, 1], got {self.transition_prob}")

    @property
    def horizon(self):
        return self.states[0].horizon

    @property
    def model(self):
        return self.states[self.current]


def step_markov(process: MarkovModelProcess, rng) -> AffineDemandModel:
    """Advance one day and return the model in force for that day."""
    n = len(process.states)
    if n > 1 and rng.random() < process.transition_prob:
        offset = 1 if n == 2 else 1 + int(rng.integers(n - 1))
        process.current = (process.current + offset) % n
    return process.model


def save_model(model: AffineDemandModel, path) -> None:
    """Write a model as plain text.

    Layout: a magic comment line, ``H <n>``, then the labelled blocks ``A``
    (n rows, row-major), ``b`` (one row) and ``sigma_w`` (n rows).  Values
    use ``%.17g`` so a write/read cycle is bit-exact.
    """
    atomic_write_text(path, dumps_model(model))


def dumps_model(model: AffineDemandModel) -> str:
    def rows(M):
        return ["  ".join(f"{v:.17g}" for v in row) for row in np.atleast_2d(M)]

    lines = [MODEL_FILE_MAGIC, f"H {model.horizon}", "A", *rows(model.A), "b", *rows(model.b),
             "sigma_w", *rows(model.sigma_w)]
    return "\n".join(lines) + "\n"


def load_model(path) -> AffineDemandModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFileError(f"{path}: {exc}") from exc
    return loads_model(text)


def loads_model(text: str) -> AffineDemandModel:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    try:
        key, H = lines[0].split()
        H = int(H)
        if key != "H":
            raise ValueError("missing H header")
        blocks = {}
        i = 1
        for name, nrows in (("A", H), ("b", 1), ("sigma_w", H)):
            if lines[i] != name:
                raise ValueError(f"expected block {name!r}, found {lines[i]!r}")
            blocks[name] = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + nrows]])
            i += 1 + nrows
        return AffineDemandModel(A=blocks["A"], b=blocks["b"].ravel(), sigma_w=blocks["sigma_w"])
    except (IndexError, ValueError) as exc:
        raise DataFileError(f"malformed model file: {exc}") from exc
