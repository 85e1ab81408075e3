"""Problem instances: source distribution plus encoder and decoder costs.

Numbers are kept exactly as given: JSON integers and rational strings such
as ``"1/3"`` become :class:`fractions.Fraction`, JSON floats stay floats.
The game oracle uses exact arithmetic whenever every entry is a Fraction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionError, SpecError
from .prob import STRUCT_TOL


class SpecDimensionError(SpecError, DimensionError):
    """Cost tables are ragged or disagree with the source alphabet."""


def _number(x, path):
    if isinstance(x, bool):
        raise SpecError("expected a number, got a boolean", path)
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        if not np.isfinite(x):
            raise SpecError("non-finite number", path)
        return x
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError):
            raise SpecError(f"not a rational literal: {x!r}", path) from None
    raise SpecError(f"expected a number, got {type(x).__name__}", path)


def _vector(x, path):
    if not isinstance(x, (list, tuple)):
        raise SpecError("expected an array", path)
    if not x:
        raise SpecError("array is empty", path)
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(x))


def _matrix(x, path):
    if not isinstance(x, (list, tuple)):
        raise SpecError("expected an array of arrays", path)
    rows = tuple(_vector(r, f"{path}[{i}]") for i, r in enumerate(x))
    if not rows:
        raise SpecError("matrix is empty", path)
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise SpecDimensionError(f"ragged row: length {len(r)}, expected {width}", f"{path}[{i}]")
    return rows


def _labels(x, n, path):
    if x is None:
        return None
    if not isinstance(x, (list, tuple)) or not all(isinstance(s, str) for s in x):
        raise SpecError("labels must be an array of strings", path)
    if len(x) != n:
        raise SpecDimensionError(f"expected {n} labels, got {len(x)}", path)
    return tuple(x)


@dataclass(frozen=True)
class ProblemSpec:
    source: tuple
    cost_encoder: tuple
    cost_decoder: tuple
    labels_u: tuple | None = None
    labels_v: tuple | None = None

    def __post_init__(self):
        src = _vector(list(self.source), "$.source")
        ce = _matrix([list(r) for r in self.cost_encoder], "$.cost_encoder")
        cd = _matrix([list(r) for r in self.cost_decoder], "$.cost_decoder")
        for i, p in enumerate(src):
            if p < 0:
                raise SpecError(f"negative probability {p}", f"$.source[{i}]")
        total = sum(src)
        if isinstance(total, Fraction):
            bad = total != 1
        else:
            bad = abs(float(total) - 1.0) > STRUCT_TOL
        if bad:
            raise SpecError(f"source sums to {total}, not 1", "$.source")
        if len(ce) != len(src):
            raise SpecDimensionError(f"{len(ce)} rows for {len(src)} source symbols", "$.cost_encoder")
        if len(cd) != len(src):
            raise SpecDimensionError(f"{len(cd)} rows for {len(src)} source symbols", "$.cost_decoder")
        if len(ce[0]) != len(cd[0]):
            raise SpecDimensionError(
                f"encoder costs have {len(ce[0])} columns, decoder costs {len(cd[0])}",
                "$.cost_decoder",
            )
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "cost_encoder", ce)
        object.__setattr__(self, "cost_decoder", cd)
        object.__setattr__(self, "labels_u", _labels(self.labels_u, len(src), "$.labels_u"))
        object.__setattr__(self, "labels_v", _labels(self.labels_v, len(ce[0]), "$.labels_v"))

    @property
    def n_u(self):
        return len(self.source)

    @property
    def n_v(self):
        return len(self.cost_encoder[0])

    @property
    def exact(self):
        """True when every number is rational (enables exact oracle arithmetic)."""
        cells = list(self.source)
        for m in (self.cost_encoder, self.cost_decoder):
            for r in m:
                cells.extend(r)
        return all(isinstance(x, Fraction) for x in cells)

    @property
    def pu(self):
        return np.array([float(x) for x in self.source])

    @property
    def ce(self):
        return np.array([[float(x) for x in r] for r in self.cost_encoder])

    @property
    def cd(self):
        return np.array([[float(x) for x in r] for r in self.cost_decoder])

    def stripped(self):
        """Copy without zero-mass source symbols."""
        keep = [i for i, p in enumerate(self.source) if p > 0]
        if len(keep) == self.n_u:
            return self
        return ProblemSpec(
            source=tuple(self.source[i] for i in keep),
            cost_encoder=tuple(self.cost_encoder[i] for i in keep),
            cost_decoder=tuple(self.cost_decoder[i] for i in keep),
            labels_u=None if self.labels_u is None else tuple(self.labels_u[i] for i in keep),
            labels_v=self.labels_v,
        )

    @classmethod
    def from_arrays(cls, pu, ce, cd, **labels):
        def conv(x):
            return x if isinstance(x, Fraction) else float(x)

        return cls(
            source=tuple(conv(x) for x in pu),
            cost_encoder=tuple(tuple(conv(x) for x in r) for r in ce),
            cost_decoder=tuple(tuple(conv(x) for x in r) for r in cd),
            **labels,
        )


def parse_spec(text):
    """Parse and validate a JSON problem document; zero-mass source symbols are dropped."""
    if isinstance(text, (bytes, str)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON: {exc.msg} at line {exc.lineno}") from None
    else:
        doc = text
    if not isinstance(doc, dict):
        raise SpecError("document must be an object")
    allowed = {"source", "cost_encoder", "cost_decoder", "labels_u", "labels_v"}
    for key in doc:
        if key not in allowed:
            raise SpecError(f"unknown key {key!r}", f"$.{key}")
    for key in ("source", "cost_encoder", "cost_decoder"):
        if key not in doc:
            raise SpecError(f"missing required key {key!r}")
    spec = ProblemSpec(
        source=_vector(doc["source"], "$.source"),
        cost_encoder=_matrix(doc["cost_encoder"], "$.cost_encoder"),
        cost_decoder=_matrix(doc["cost_decoder"], "$.cost_decoder"),
        labels_u=doc.get("labels_u"),
        labels_v=doc.get("labels_v"),
    )
    return spec.stripped()


def _encode(x):
    if isinstance(x, Fraction):
        return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return float(x)


def to_document(spec):
    doc = {
        "source": [_encode(x) for x in spec.source],
        "cost_encoder": [[_encode(x) for x in r] for r in spec.cost_encoder],
        "cost_decoder": [[_encode(x) for x in r] for r in spec.cost_decoder],
    }
    if spec.labels_u is not None:
        doc["labels_u"] = list(spec.labels_u)
    if spec.labels_v is not None:
        doc["labels_v"] = list(spec.labels_v)
    return doc


def serialize(spec):
    return json.dumps(to_document(spec), sort_keys=True)
