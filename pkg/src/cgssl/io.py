"""File formats: matrix CSVs, run configurations and JSON documents."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .ecm import EcmOptions
from .model import SslConfig
from .path import PenaltyLadders, default_config, default_ladders
from .psi import PsiSolveOptions

SCHEMA_VERSION = 1


class FormatError(ValueError):
    pass


def read_matrix_csv(path, with_header: bool = False):
    """Read a headed numeric CSV. Returns the matrix, or ``(matrix, names)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    names = rows[0]
    width = len(names)
    values = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise FormatError(f"row {line_no}: expected {width} fields, got {len(row)}")
        parsed = []
        for col, cell in enumerate(row, start=1):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise FormatError(
                    f"row {line_no}, column {col}: non-numeric value {cell!r}") from None
        values.append(parsed)
    mat = np.array(values, dtype=float).reshape(len(values), width)
    return (mat, names) if with_header else mat


def write_matrix_csv(path, matrix, names=None) -> None:
    """Write with a header row and 17 significant digits so reads are exact."""
    mat = np.atleast_2d(np.asarray(matrix, dtype=float))
    names = list(names) if names is not None else [f"V{j + 1}" for j in range(mat.shape[1])]
    if len(names) != mat.shape[1]:
        raise ValueError(f"{len(names)} column names for {mat.shape[1]} columns")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        writer.writerows([format(v, ".17g") for v in row] for row in mat)


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n",
                          encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class RunConfig:
    """Settings for one ``fit``; unset penalties resolve to the data-driven defaults."""

    method: str = "dpe"
    lambda1: float | None = None
    xi1: float | None = None
    lambda0_ladder: tuple | None = None
    xi0_ladder: tuple | None = None
    ladder_length: int = 10
    xi_diag: float = 1.0
    a_theta: float | None = None
    b_theta: float | None = None
    a_eta: float | None = None
    b_eta: float | None = None
    ecm_tol: float = 1e-3
    max_ecm_iter: int = 500
    guard_multiplier: float = 10.0
    inner_tol: float = 1e-3
    max_inner_iter: int = 10000

    def __post_init__(self):
        if self.method not in ("dpe", "dcpe", "single"):
            raise ValueError(f"method must be one of dpe, dcpe, single; got {self.method!r}")
        for name in ("lambda0_ladder", "xi0_ladder"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(float(v) for v in val))

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("lambda0_ladder", "xi0_ladder"):
            if d[name] is not None:
                d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - {"schema_version"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    def render(self) -> str:
        return json.dumps({"schema_version": SCHEMA_VERSION, **self.to_dict()},
                          indent=2, sort_keys=True) + "\n"

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def resolve(self, n: int, p: int, q: int) -> "RunConfig":
        """Fill every unset field with its default for data of size ``(n, p, q)``."""
        lad = default_ladders(n, p, q, self.ladder_length)
        base = default_config(n, p, q, lad, self.xi_diag)
        lambda1 = lad.lambda1 if self.lambda1 is None else self.lambda1
        xi1 = lad.xi1 if self.xi1 is None else self.xi1
        pick = lambda v, d: d if v is None else v
        return replace(
            self, lambda1=lambda1, xi1=xi1,
            lambda0_ladder=pick(self.lambda0_ladder,
                                tuple(np.linspace(lambda1 + 1.0, n, self.ladder_length).tolist())),
            xi0_ladder=pick(self.xi0_ladder,
                            tuple(np.linspace(xi1 + 1.0, n, self.ladder_length).tolist())),
            a_theta=pick(self.a_theta, base.a_theta), b_theta=pick(self.b_theta, base.b_theta),
            a_eta=pick(self.a_eta, base.a_eta), b_eta=pick(self.b_eta, base.b_eta))

    def ladders(self) -> PenaltyLadders:
        return PenaltyLadders(self.lambda0_ladder, self.xi0_ladder, self.lambda1, self.xi1)

    def ssl_config(self) -> SslConfig:
        return SslConfig(self.lambda0_ladder[0], self.lambda1, self.xi0_ladder[0], self.xi1,
                         self.xi_diag, self.a_theta, self.b_theta, self.a_eta, self.b_eta)

    def ecm_options(self) -> EcmOptions:
        return EcmOptions(self.ecm_tol, self.max_ecm_iter, self.guard_multiplier,
                          PsiSolveOptions(self.inner_tol, self.max_inner_iter))
