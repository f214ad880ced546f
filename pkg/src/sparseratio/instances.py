"""Seeded random problem families, recovery metrics, and JSON persistence.

Three generators, one per constraint family:

* ``gen_robust_cs``: Gaussian matrix with unit columns, sparse Gaussian
  signal, a handful of gross outliers plus small Gaussian noise; solved
  under the sparse-outlier (RobustCS) constraint.
* ``gen_cauchy``: same matrix/signal recipe, Cauchy measurement noise via
  the inverse-CDF transform; solved under the Lorentzian constraint.
* ``gen_badly_scaled``: cosine rows with random frequencies (columns are
  deliberately not normalized) and signal magnitudes spread over D decades;
  solved under the least-squares constraint.

Randomness is split into named substreams (matrix / support / values /
noise) so each component draws an independent, order-insensitive stream
from the single 64-bit seed. Instances regenerate bit-for-bit from
(family, params, seed) on the same numpy build.
"""

from __future__ import annotations

import json
import operator
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .models import (
    ConstraintModel,
    LeastSquares,
    Lorentzian,
    RobustCS,
    SensingMatrix,
    lorentzian_norm,
    q_value,
)

__all__ = [
    "GenSpec",
    "ProblemInstance",
    "gen_robust_cs",
    "gen_cauchy",
    "gen_badly_scaled",
    "generate",
    "rec_err",
    "residual_metric",
    "save_instance",
    "load_instance",
    "instance_to_dict",
    "instance_from_dict",
    "save_result",
    "load_result",
]

FORMAT_VERSION = 1

FAMILY_ROBUST_CS = "robust_cs"
FAMILY_CAUCHY = "cauchy"
FAMILY_BADLY_SCALED = "badly_scaled"
FAMILIES = (FAMILY_ROBUST_CS, FAMILY_CAUCHY, FAMILY_BADLY_SCALED)

# substream ids hashed together with the seed
_STREAM_MATRIX = 0
_STREAM_SUPPORT = 1
_STREAM_VALUES = 2
_STREAM_NOISE = 3

_MAX_RANK_RETRIES = 10


@dataclass(frozen=True)
class GenSpec:
    """Family name plus every parameter needed to regenerate an instance.

    Fields not used by a family stay None. sigma_factor scales the realized
    noise magnitude into the constraint budget sigma.
    """

    family: str
    n: int
    k: int
    seed: int
    m: int | None = None
    p: int | None = None
    iota: int | None = None
    r: int | None = None
    gamma: float | None = None
    F: float | None = None
    D: float | None = None
    sigma_factor: float = 1.2

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n < 1 or self.k < 1:
            raise ValueError("n and k must be positive")
        if self.k > self.n:
            raise ValueError("k must not exceed n")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if not self.sigma_factor > 0:
            raise ValueError("sigma_factor must be positive")
        if self.family == FAMILY_ROBUST_CS:
            if self.p is None or self.iota is None:
                raise ValueError("robust_cs needs p and iota")
        elif self.family == FAMILY_CAUCHY:
            if self.m is None:
                raise ValueError("cauchy needs m")
        else:
            if self.m is None or self.F is None or self.D is None:
                raise ValueError("badly_scaled needs m, F and D")


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    model: ConstraintModel
    x_orig: np.ndarray
    gen_spec: GenSpec
    noise_record: dict


def _rng(seed: int, *stream) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def _unit_column_gaussian(m: int, n: int, seed: int) -> np.ndarray:
    A = _rng(seed, _STREAM_MATRIX).standard_normal((m, n))
    return A / np.linalg.norm(A, axis=0)


def _sparse_support(n: int, k: int, seed: int) -> np.ndarray:
    return _rng(seed, _STREAM_SUPPORT).permutation(n)[:k]


def gen_robust_cs(n: int, p: int, k: int, iota: int, seed: int,
                  sigma_factor: float = 1.2) -> ProblemInstance:
    """Sparse recovery with iota gross outliers among p + iota measurements.

    b = A x_orig - z + 0.01 eps, where z carries the outliers (magnitude 2,
    random signs, confined to the last iota rows) and eps is standard
    normal. The outlier budget is r = 2 iota and sigma = sigma_factor *
    ||0.01 eps||.
    """
    if p < 1 or iota < 0:
        raise ValueError("need p >= 1 and iota >= 0")
    spec = GenSpec(family=FAMILY_ROBUST_CS, n=n, k=k, seed=seed, p=p,
                   iota=iota, r=2 * iota, sigma_factor=sigma_factor)
    m = p + iota
    A = _unit_column_gaussian(m, n, seed)
    support = _sparse_support(n, k, seed)
    x_orig = np.zeros(n)
    x_orig[support] = _rng(seed, _STREAM_VALUES).standard_normal(k)

    rng_noise = _rng(seed, _STREAM_NOISE)
    z = np.zeros(m)
    if iota > 0:
        raw = rng_noise.standard_normal(iota)
        z[p:] = 2.0 * np.where(raw < 0, -1.0, 1.0)
    eps = rng_noise.standard_normal(m)
    small = 0.01 * eps
    b = A @ x_orig - z + small
    sigma = sigma_factor * float(np.linalg.norm(small))
    model = RobustCS(SensingMatrix(A), b, sigma, 2 * iota)
    return ProblemInstance(model=model, x_orig=x_orig, gen_spec=spec,
                           noise_record={"z": z, "epsilon": eps})


def gen_cauchy(n: int, m: int, k: int, seed: int, gamma: float = 0.02,
               sigma_factor: float = 1.2) -> ProblemInstance:
    """Sparse recovery under heavy-tailed noise: eps_i = tan(pi (u_i - 1/2))
    with u_i uniform on (0, 1), i.e. standard Cauchy. The budget is
    sigma_factor times the Lorentzian norm of the realized 0.01 eps."""
    if m < 1:
        raise ValueError("need m >= 1")
    spec = GenSpec(family=FAMILY_CAUCHY, n=n, k=k, seed=seed, m=m,
                   gamma=gamma, sigma_factor=sigma_factor)
    A = _unit_column_gaussian(m, n, seed)
    support = _sparse_support(n, k, seed)
    x_orig = np.zeros(n)
    x_orig[support] = _rng(seed, _STREAM_VALUES).standard_normal(k)

    rng_noise = _rng(seed, _STREAM_NOISE)
    u = rng_noise.random(m)
    while True:
        bad = (u <= 0.0) | (u >= 1.0)
        if not bad.any():
            break
        u[bad] = rng_noise.random(int(bad.sum()))
    eps = np.tan(np.pi * (u - 0.5))
    small = 0.01 * eps
    b = A @ x_orig + small
    sigma = sigma_factor * lorentzian_norm(small, gamma)
    model = Lorentzian(SensingMatrix(A), b, sigma, gamma)
    return ProblemInstance(model=model, x_orig=x_orig, gen_spec=spec,
                           noise_record={"epsilon": eps})


def gen_badly_scaled(n: int, m: int, k: int, F: float, D: float, seed: int,
                     sigma_factor: float = 1.2) -> ProblemInstance:
    """Cosine rows, unnormalized columns, signal magnitudes across D decades.

    A_{ij} = cos(2 pi w_i j / F) / sqrt(m) with w uniform on [0, 1]^m and
    1-indexed j. Nonzero signal entries are sign * 10^(D * u). If the drawn
    matrix fails the rank check, a fresh frequency vector is drawn (up to
    10 attempts).
    """
    if m < 1:
        raise ValueError("need m >= 1")
    if not F > 0:
        raise ValueError("F must be positive")
    if D < 0:
        raise ValueError("D must be nonnegative")
    spec = GenSpec(family=FAMILY_BADLY_SCALED, n=n, k=k, seed=seed, m=m,
                   F=F, D=D, sigma_factor=sigma_factor)

    cols = np.arange(1, n + 1)
    A_mat = None
    w = None
    for attempt in range(_MAX_RANK_RETRIES):
        w = _rng(seed, _STREAM_MATRIX, attempt).random(m)
        A_try = np.cos(2.0 * np.pi * np.outer(w, cols) / F) / np.sqrt(m)
        sm = SensingMatrix(A_try)
        if sm.has_full_row_rank:
            A_mat = sm
            break
    if A_mat is None:
        raise RuntimeError(
            f"could not draw a full-rank cosine matrix in {_MAX_RANK_RETRIES} attempts"
        )

    support = _sparse_support(n, k, seed)
    rng_values = _rng(seed, _STREAM_VALUES)
    signs = np.where(rng_values.standard_normal(k) < 0, -1.0, 1.0)
    mags = 10.0 ** (D * rng_values.random(k))
    x_orig = np.zeros(n)
    x_orig[support] = signs * mags

    eps = _rng(seed, _STREAM_NOISE).standard_normal(m)
    small = 0.01 * eps
    b = A_mat.entries @ x_orig + small
    sigma = sigma_factor * float(np.linalg.norm(small))
    model = LeastSquares(A_mat, b, sigma)
    return ProblemInstance(model=model, x_orig=x_orig, gen_spec=spec,
                           noise_record={"epsilon": eps, "w": w})


def generate(spec: GenSpec) -> ProblemInstance:
    """Regenerate the instance described by a GenSpec."""
    if spec.family == FAMILY_ROBUST_CS:
        return gen_robust_cs(spec.n, spec.p, spec.k, spec.iota, spec.seed,
                             spec.sigma_factor)
    if spec.family == FAMILY_CAUCHY:
        gamma = 0.02 if spec.gamma is None else spec.gamma
        return gen_cauchy(spec.n, spec.m, spec.k, spec.seed, gamma,
                          spec.sigma_factor)
    if spec.family == FAMILY_BADLY_SCALED:
        return gen_badly_scaled(spec.n, spec.m, spec.k, spec.F, spec.D,
                                spec.seed, spec.sigma_factor)
    raise ValueError(f"unknown family {spec.family!r}")


def rec_err(x_out, x_orig) -> float:
    """||x_out - x_orig|| / max(1, ||x_orig||)."""
    x_out = np.asarray(x_out, dtype=float)
    x_orig = np.asarray(x_orig, dtype=float)
    if x_out.shape != x_orig.shape:
        raise ValueError("x_out and x_orig must have the same shape")
    return float(np.linalg.norm(x_out - x_orig) /
                 max(1.0, float(np.linalg.norm(x_orig))))


def residual_metric(model: ConstraintModel, x) -> float:
    """Constraint residual of a recovered point; nonpositive means feasible."""
    return q_value(model, x)


# ---------------------------------------------------------------------------
# persistence

_VARIANT_NAMES = {
    LeastSquares: "least_squares",
    Lorentzian: "lorentzian",
    RobustCS: "robust_cs",
}


def _model_params(model: ConstraintModel) -> dict:
    params = {"variant": _VARIANT_NAMES[type(model)], "sigma": model.sigma}
    if isinstance(model, Lorentzian):
        params["gamma"] = model.gamma
    if isinstance(model, RobustCS):
        params["r"] = model.r
    return params


def _model_from_params(params: dict, A: SensingMatrix, b: np.ndarray) -> ConstraintModel:
    variant = params["variant"]
    if variant == "least_squares":
        return LeastSquares(A, b, params["sigma"])
    if variant == "lorentzian":
        return Lorentzian(A, b, params["sigma"], params["gamma"])
    if variant == "robust_cs":
        return RobustCS(A, b, params["sigma"], operator.index(params["r"]))
    raise ValueError(f"unknown model variant {variant!r}")


def instance_to_dict(inst: ProblemInstance) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "gen_spec": asdict(inst.gen_spec),
        "matrix": inst.model.A.entries.tolist(),
        "b": inst.model.b.tolist(),
        "x_orig": inst.x_orig.tolist(),
        "model": _model_params(inst.model),
        "noise_record": {k: np.asarray(v).tolist()
                         for k, v in inst.noise_record.items()},
    }


def instance_from_dict(doc: dict) -> ProblemInstance:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {version!r}")
    A = SensingMatrix(np.array(doc["matrix"], dtype=float))
    b = np.array(doc["b"], dtype=float)
    model = _model_from_params(doc["model"], A, b)
    x_orig = np.array(doc["x_orig"], dtype=float)
    spec = GenSpec(**doc["gen_spec"])
    noise = {k: np.array(v, dtype=float)
             for k, v in doc["noise_record"].items()}
    return ProblemInstance(model=model, x_orig=x_orig, gen_spec=spec,
                           noise_record=noise)


def _write_json(path, doc: dict):
    # json's float repr is the shortest round-trip decimal, so numeric
    # fields survive a save/load cycle bit for bit
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def _read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def save_instance(inst: ProblemInstance, path):
    _write_json(path, instance_to_dict(inst))


def load_instance(path) -> ProblemInstance:
    return instance_from_dict(_read_json(path))


def save_result(payload: dict, path):
    """Persist a solve result envelope.

    The payload must carry run_config, status and metrics; x_final and the
    optional trace ride along for later verification.
    """
    missing = {"run_config", "status", "metrics"} - payload.keys()
    if missing:
        raise ValueError(f"result payload missing fields: {sorted(missing)}")
    doc = {"format_version": FORMAT_VERSION, **payload}
    _write_json(path, doc)


def load_result(path) -> dict:
    doc = _read_json(path)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {version!r}")
    return doc
