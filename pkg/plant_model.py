"""
Plant Model
Transfer-matrix process models built from FOPDT/SOPDT channels, the plant
document loader/serializer, and the scalar quantities every interaction array
starts from: steady-state gain, average residence time and normalized gain.

Times are in seconds, gains are dimensionless deviation-variable gains.
"""

import json
import logging
import tomllib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from gain_arrays import ArrayRole, GainArray, shape_of

logger = logging.getLogger(__name__)


class PlantValidationError(ValueError):
    """The plant document or a channel violates the model invariants."""


class ElementKind(str, Enum):
    FOPDT = "fopdt"
    SOPDT = "sopdt"


def _cell(i: int, j: int) -> str:
    return f"cell (output {i + 1}, input {j + 1})"


@dataclass(frozen=True)
class TransferElement:
    """One SISO channel k e^(-td s) / ((1 + tau s)(1 + tau2 s)), tau2 only for SOPDT."""
    kind: ElementKind
    gain: float
    tau: float
    deadtime: float = 0.0
    tau2: Optional[float] = None

    def __post_init__(self):
        kind = ElementKind(self.kind)
        object.__setattr__(self, "kind", kind)
        for name in ("gain", "tau", "deadtime"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise PlantValidationError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.tau <= 0:
            raise PlantValidationError(f"tau must be > 0, got {self.tau}")
        if self.deadtime < 0:
            raise PlantValidationError(f"deadtime must be >= 0, got {self.deadtime}")
        if kind is ElementKind.SOPDT:
            if self.tau2 is None:
                raise PlantValidationError("sopdt element needs tau2")
            if not np.isfinite(self.tau2) or self.tau2 <= 0:
                raise PlantValidationError(f"tau2 must be > 0, got {self.tau2}")
            object.__setattr__(self, "tau2", float(self.tau2))
        elif self.tau2 is not None:
            raise PlantValidationError("fopdt element must not carry tau2")

    @property
    def residence_time(self) -> float:
        lags = self.tau + (self.tau2 or 0.0)
        return lags + self.deadtime

    def to_dict(self, output: int, input_: int) -> Dict:
        data = {
            "output": output + 1,
            "input": input_ + 1,
            "kind": self.kind.value,
            "gain": self.gain,
            "tau": self.tau,
        }
        if self.tau2 is not None:
            data["tau2"] = self.tau2
        data["deadtime"] = self.deadtime
        return data


@dataclass(frozen=True)
class TransferMatrix:
    """r x s grid of channels; rows are outputs, columns are inputs."""
    name: str
    output_names: Tuple[str, ...]
    input_names: Tuple[str, ...]
    elements: Tuple[Tuple[TransferElement, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "output_names", tuple(self.output_names))
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "elements", tuple(tuple(row) for row in self.elements))
        rows, cols = len(self.output_names), len(self.input_names)
        if rows < 1 or cols < 1:
            raise PlantValidationError("a plant needs at least one output and one input")
        if len(self.elements) != rows or any(len(row) != cols for row in self.elements):
            raise PlantValidationError(
                f"element grid does not match {rows} outputs x {cols} inputs"
            )

    @property
    def rows(self) -> int:
        return len(self.output_names)

    @property
    def cols(self) -> int:
        return len(self.input_names)

    @property
    def shape(self):
        return shape_of(self.rows, self.cols)

    def element(self, i: int, j: int) -> TransferElement:
        return self.elements[i][j]

    def cells(self) -> Iterable[Tuple[int, int, TransferElement]]:
        for i, row in enumerate(self.elements):
            for j, el in enumerate(row):
                yield i, j, el


# ---------------- Document loading ----------------

def _parse_index(raw, limit: int, what: str, position: int) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise PlantValidationError(f"element #{position}: {what} must be an integer, got {raw!r}")
    if not 1 <= raw <= limit:
        raise PlantValidationError(f"element #{position}: {what} {raw} outside 1..{limit}")
    return raw - 1


def _parse_number(entry: Dict, key: str, where: str, required: bool = True):
    if key not in entry:
        if required:
            raise PlantValidationError(f"{where}: missing '{key}'")
        return None
    value = entry[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise PlantValidationError(f"{where}: '{key}' must be a number, got {value!r}")
    return float(value)


def _labels(block: Dict, key: str) -> Tuple[str, ...]:
    labels = block.get(key)
    if not isinstance(labels, list) or not labels or not all(isinstance(x, str) for x in labels):
        raise PlantValidationError(f"plant.{key} must be a non-empty list of names")
    if len(set(labels)) != len(labels):
        raise PlantValidationError(f"plant.{key} contains duplicate names")
    return tuple(labels)


def plant_from_document(doc: Dict) -> TransferMatrix:
    """Validate a parsed plant document (plant block + element list)."""
    if not isinstance(doc, dict) or not isinstance(doc.get("plant"), dict):
        raise PlantValidationError("document needs a 'plant' block")
    block = doc["plant"]
    name = block.get("name")
    if not isinstance(name, str) or not name.strip():
        raise PlantValidationError("plant.name must be a non-empty string")
    outputs = _labels(block, "outputs")
    inputs = _labels(block, "inputs")
    entries = doc.get("element")
    if not isinstance(entries, list):
        raise PlantValidationError("document needs a list of 'element' entries")

    grid: List[List[Optional[TransferElement]]] = [[None] * len(inputs) for _ in outputs]
    for position, entry in enumerate(entries, start=1):
        if not isinstance(entry, dict):
            raise PlantValidationError(f"element #{position} is not a table")
        i = _parse_index(entry.get("output"), len(outputs), "output", position)
        j = _parse_index(entry.get("input"), len(inputs), "input", position)
        where = _cell(i, j)
        if grid[i][j] is not None:
            raise PlantValidationError(f"{where}: duplicate element")
        kind = entry.get("kind")
        if kind not in {k.value for k in ElementKind}:
            raise PlantValidationError(f"{where}: kind must be 'fopdt' or 'sopdt', got {kind!r}")
        try:
            grid[i][j] = TransferElement(
                kind=ElementKind(kind),
                gain=_parse_number(entry, "gain", where),
                tau=_parse_number(entry, "tau", where),
                deadtime=_parse_number(entry, "deadtime", where),
                tau2=_parse_number(entry, "tau2", where, required=(kind == "sopdt")),
            )
        except PlantValidationError as exc:
            if str(exc).startswith(where):
                raise
            raise PlantValidationError(f"{where}: {exc}") from exc

    missing = [_cell(i, j) for i, row in enumerate(grid) for j, el in enumerate(row) if el is None]
    if missing:
        raise PlantValidationError(f"missing {', '.join(missing)}")
    return TransferMatrix(name=name, output_names=outputs, input_names=inputs, elements=grid)


def load_plant(config_text: str, fmt: str = "json") -> TransferMatrix:
    """Parse and validate plant document text ('json' or 'toml')."""
    try:
        if fmt == "json":
            doc = json.loads(config_text)
        elif fmt == "toml":
            doc = tomllib.loads(config_text)
        else:
            raise PlantValidationError(f"unknown plant document format {fmt!r}")
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise PlantValidationError(f"cannot parse plant document: {exc}") from exc
    tm = plant_from_document(doc)
    logger.info("Loaded plant '%s' (%dx%d, %s)", tm.name, tm.rows, tm.cols, tm.shape.value)
    return tm


def load_plant_file(path) -> TransferMatrix:
    path = Path(path)
    fmt = "toml" if path.suffix.lower() == ".toml" else "json"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PlantValidationError(f"cannot read plant file {path}: {exc}") from exc
    return load_plant(text, fmt)


def serialize_plant(tm: TransferMatrix) -> str:
    """JSON plant document that load_plant reads back to an identical model."""
    doc = {
        "plant": {
            "name": tm.name,
            "outputs": list(tm.output_names),
            "inputs": list(tm.input_names),
        },
        "element": [el.to_dict(i, j) for i, j, el in tm.cells()],
    }
    return json.dumps(doc, indent=2) + "\n"


# ---------------- Derived quantities ----------------

def steady_state_gain(tm: TransferMatrix) -> GainArray:
    """K = G(0): the gain field of every channel."""
    k = np.array([[el.gain for el in row] for row in tm.elements], dtype=np.float64)
    return GainArray(ArrayRole.K, k, tm.output_names, tm.input_names)


def residence_time(tm: TransferMatrix) -> np.ndarray:
    """B with b_ij = lag time constant(s) + dead time, in seconds."""
    return np.array([[el.residence_time for el in row] for row in tm.elements], dtype=np.float64)


def normalized_gain(tm: TransferMatrix) -> GainArray:
    """A_ij = k_ij / b_ij."""
    k = steady_state_gain(tm).matrix
    return GainArray(ArrayRole.NGA, k / residence_time(tm), tm.output_names, tm.input_names)
