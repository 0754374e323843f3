"""Synthetic chain graph data and support-recovery benchmarks."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg

from .ecm import EcmOptions
from .model import Dataset, cholesky
from .path import dcpe, default_config, default_ladders, dpe

PATTERNS = ("ar1", "ar2", "block", "star", "dense")


@dataclass(frozen=True)
class OmegaPattern:
    kind: str
    q: int

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in PATTERNS:
            raise ValueError(f"unknown pattern {self.kind!r}; expected one of {PATTERNS}")
        if self.q < 2:
            raise ValueError("q must be at least 2")
        if kind == "ar2" and self.q < 3:
            raise ValueError("AR2 pattern needs q >= 3")
        if kind == "block" and self.q % 2:
            raise ValueError("block pattern needs an even q")
        object.__setattr__(self, "kind", kind)


def _banded(q, values):
    out = np.zeros((q, q))
    for offset, v in enumerate(values):
        idx = np.arange(q - offset)
        out[idx, idx + offset] = v
        out[idx + offset, idx] = v
    return out


def gen_omega(pattern: OmegaPattern) -> np.ndarray:
    """Precision matrix of one of the five benchmark regimes, with exact zeros."""
    q, kind = pattern.q, pattern.kind
    if kind == "ar1":
        # inverse of 0.7^|k-k'| in closed form
        rho = 0.7
        om = _banded(q, (1.0 + rho * rho, -rho))
        om[0, 0] = om[-1, -1] = 1.0
        om /= 1.0 - rho * rho
    elif kind == "ar2":
        om = _banded(q, (1.0, 0.5, 0.25))
    elif kind == "block":
        m, rho = q // 2, 0.5
        # ((1-rho) I + rho J)^{-1} = (I - rho/(1+(m-1)rho) J) / (1-rho)
        blk = (np.eye(m) - rho / (1.0 + (m - 1) * rho)) / (1.0 - rho)
        om = linalg.block_diag(blk, blk)
    elif kind == "star":
        om = np.eye(q)
        om[0, 1:] = om[1:, 0] = 0.1
    else:
        om = np.full((q, q), 2.0)
        np.fill_diagonal(om, 2.0 * q - 1.0)
    return om


def gen_psi(p: int, q: int, density: float = 0.2, rng=None) -> np.ndarray:
    if not (0.0 < density <= 1.0):
        raise ValueError("density must lie in (0, 1]")
    rng = np.random.default_rng(rng)
    k = int(round(density * p * q))
    psi = np.zeros(p * q)
    idx = rng.choice(p * q, size=k, replace=False)
    psi[np.sort(idx)] = rng.uniform(-2.0, 2.0, size=k)
    return psi.reshape(p, q)


def sample_noise(Omega0, n: int, rng) -> np.ndarray:
    """``n`` rows from ``N(0, Omega0^{-1})`` by solving ``L^T z = u``."""
    L = cholesky(np.asarray(Omega0, dtype=float))
    u = rng.standard_normal((L.shape[0], n))
    return linalg.solve_triangular(L, u, lower=True, trans="T").T


def gen_dataset(Psi0, Omega0, n: int, rng=None):
    """Returns ``(Dataset, raw_X)``; ``Y = X Psi0 Omega0^{-1} + E`` on the raw scale."""
    rng = np.random.default_rng(rng)
    Psi0 = np.asarray(Psi0, dtype=float)
    p = Psi0.shape[0]
    if n <= p:
        raise ValueError(f"need n > p, got n={n}, p={p}")
    chol = cholesky(np.asarray(Omega0, dtype=float))
    raw_X = rng.standard_normal((n, p))
    E = sample_noise(Omega0, n, rng)
    mean = linalg.cho_solve((chol, True), (raw_X @ Psi0).T).T
    return Dataset.from_raw(raw_X, mean + E), raw_X


@dataclass(frozen=True)
class SupportMetrics:
    tp: int
    tn: int
    fp: int
    fn: int
    sensitivity: float | None
    precision: float | None
    frob: float


def support_metrics(estimate, truth, off_diagonal_only: bool = False) -> SupportMetrics:
    """Exact-nonzero support comparison; the Omega variant scores the strict lower triangle."""
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch: estimate {est.shape}, truth {tru.shape}")
    frob = float(np.linalg.norm(est - tru))
    if off_diagonal_only:
        il = np.tril_indices(est.shape[0], k=-1)
        est, tru = est[il], tru[il]
    e, t = est != 0.0, tru != 0.0
    tp = int(np.sum(e & t))
    fp = int(np.sum(e & ~t))
    fn = int(np.sum(~e & t))
    tn = int(np.sum(~e & ~t))
    sen = tp / (tp + fn) if tp + fn else None
    prec = tp / (tp + fp) if tp + fp else None
    return SupportMetrics(tp, tn, fp, fn, sen, prec, frob)


_MASK64 = (1 << 64) - 1


def replicate_seed(seed: int, index: int) -> int:
    """splitmix64 output for state ``seed + index``."""
    z = (seed + index + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class BenchmarkConfig:
    n: int = 100
    p: int = 10
    q: int = 10
    pattern: str = "ar1"
    replicates: int = 20
    method: str = "dpe"
    seed: int = 0
    density: float = 0.2

    def __post_init__(self):
        OmegaPattern(self.pattern, self.q)
        if self.method not in ("dpe", "dcpe"):
            raise ValueError(f"method must be 'dpe' or 'dcpe', got {self.method!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.n <= self.p:
            raise ValueError("need n > p")


def run_replicate(cfg: BenchmarkConfig, index: int) -> dict:
    """Generate, fit and score one replicate; failures are reported, not raised."""
    rng = np.random.default_rng(replicate_seed(cfg.seed, index))
    omega0 = gen_omega(OmegaPattern(cfg.pattern, cfg.q))
    psi0 = gen_psi(cfg.p, cfg.q, cfg.density, rng)
    data, _ = gen_dataset(psi0, omega0, cfg.n, rng)
    ladders = default_ladders(cfg.n, cfg.p, cfg.q)
    base = default_config(cfg.n, cfg.p, cfg.q, ladders)
    try:
        if cfg.method == "dpe":
            _, fit = dpe(data, ladders, base, EcmOptions())
        else:
            fit = dcpe(data, ladders, base, EcmOptions())
    except Exception as exc:  # noqa: BLE001 - any solver failure is one failed replicate
        return {"replicate": index, "ok": False, "error": f"{type(exc).__name__}: {exc}"}
    return {
        "replicate": index,
        "ok": True,
        "guardrail_triggered": fit.guardrail_triggered,
        "psi": asdict(support_metrics(fit.params.Psi, psi0)),
        "omega": asdict(support_metrics(fit.params.Omega, omega0, off_diagonal_only=True)),
    }


def _mean_sd(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return {"mean": None, "sd": None, "count": 0}
    sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
    return {"mean": float(np.mean(vals)), "sd": sd, "count": len(vals)}


def aggregate(rows) -> dict:
    ok = [r for r in rows if r["ok"]]
    out = {"replicates_ok": len(ok), "replicates_failed": len(rows) - len(ok)}
    for block in ("psi", "omega"):
        out[block] = {m: _mean_sd([r[block][m] for r in ok])
                      for m in ("sensitivity", "precision", "frob")}
    return out


def worker_count() -> int:
    env = os.environ.get("CGSSL_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"CGSSL_THREADS must be a positive integer, got {env!r}") from None
        if value < 1:
            raise ValueError(f"CGSSL_THREADS must be a positive integer, got {env!r}")
        return value
    return os.cpu_count() or 1


def run_benchmark(cfg: BenchmarkConfig, workers: int | None = None) -> dict:
    """Per-replicate metrics plus mean and sample sd over successful replicates."""
    workers = worker_count() if workers is None else workers
    workers = max(1, min(workers, cfg.replicates))
    indices = range(cfg.replicates)
    if workers == 1:
        rows = [run_replicate(cfg, i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_replicate, [cfg] * cfg.replicates, indices))
    return {"config": asdict(cfg), "replicates": rows, "aggregate": aggregate(rows)}


def _fmt(stat):
    if stat["mean"] is None:
        return "NA"
    sd = "NA" if stat["sd"] is None else f"{stat['sd']:.2f}"
    return f"{stat['mean']:.2f} ({sd})"


def format_report(result: dict) -> str:
    """Aligned text table of aggregated benchmark metrics."""
    cfg, agg = result["config"], result["aggregate"]
    header = ["matrix", "SEN", "PREC", "FROB"]
    rows = [[label] + [_fmt(agg[block][m]) for m in ("sensitivity", "precision", "frob")]
            for label, block in (("Psi", "psi"), ("Omega", "omega"))]
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    line = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
    title = (f"pattern={cfg['pattern']} n={cfg['n']} p={cfg['p']} q={cfg['q']} "
             f"method={cfg['method']} replicates={cfg['replicates']} seed={cfg['seed']}")
    failed = f"failed replicates: {agg['replicates_failed']}"
    return "\n".join([title, line(header)] + [line(r) for r in rows] + [failed]) + "\n"

