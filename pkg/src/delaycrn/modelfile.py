"""JSON model files: schema validation, histories, and serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .dde import History
from .network import Network, NetworkError, build_network

_NUMBER = {"type": "number"}
_GAMMA = {
    "type": "object",
    "properties": {"alpha": _NUMBER, "p": _NUMBER, "c": _NUMBER, "q": _NUMBER},
    "additionalProperties": False,
}
_STOICH = {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}}
_VECTOR = {"type": "array", "items": _NUMBER, "minItems": 1}

SCHEMA = {
    "type": "object",
    "required": ["species", "reactions"],
    "properties": {
        "name": {"type": "string"},
        "species": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name"],
                "properties": {"name": {"type": "string", "minLength": 1}, "gamma": _GAMMA},
                "additionalProperties": False,
            },
        },
        "reactions": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["reactants", "products", "rate"],
                "properties": {
                    "reactants": _STOICH,
                    "products": _STOICH,
                    "rate": _NUMBER,
                    "delay": _NUMBER,
                },
                "additionalProperties": False,
            },
        },
        "histories": {
            "type": "object",
            "additionalProperties": {
                "oneOf": [
                    {
                        "type": "object",
                        "required": ["constant"],
                        "properties": {"constant": _VECTOR},
                        "additionalProperties": False,
                    },
                    {
                        "type": "object",
                        "required": ["knots"],
                        "properties": {"knots": {"type": "array", "minItems": 1, "items": _VECTOR}},
                        "additionalProperties": False,
                    },
                ]
            },
        },
        "metadata": {"type": "object"},
    },
    "additionalProperties": False,
}

_VALIDATOR = Draft202012Validator(SCHEMA)


class ModelFileError(ValueError):
    """Raised for unreadable or schema-invalid model files."""


def _path_str(path) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


@dataclass
class ModelFile:
    species: list[dict]
    reactions: list[dict]
    histories: dict[str, dict] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    name: str = ""
    source: str = ""

    def network(self) -> Network:
        return build_network({"species": self.species, "reactions": self.reactions})

    @property
    def reference(self):
        ref = self.metadata.get("reference")
        return None if ref is None else np.asarray(ref, dtype=float)

    def history(self, name: str, net: Network) -> History:
        if name not in self.histories:
            raise ModelFileError(f"histories: no history named {name!r}")
        return history_from_spec(self.histories[name], net, f"histories.{name}")

    def to_dict(self) -> dict:
        out = {}
        if self.name:
            out["name"] = self.name
        out["species"] = self.species
        out["reactions"] = self.reactions
        if self.histories:
            out["histories"] = self.histories
        if self.metadata:
            out["metadata"] = self.metadata
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def history_from_spec(spec: dict, net: Network, where: str = "history") -> History:
    tau = max(net.max_delay, 1.0)
    if "constant" in spec:
        x = np.asarray(spec["constant"], dtype=float)
        if x.shape != (net.n_species,):
            raise ModelFileError(f"{where}.constant: expected {net.n_species} values, got {x.size}")
        if np.any(x <= 0):
            raise ModelFileError(f"{where}.constant: values must be positive")
        return History.constant(x, -tau)
    rows = np.asarray(spec["knots"], dtype=float)
    if rows.ndim != 2 or rows.shape[1] != net.n_species + 1:
        raise ModelFileError(f"{where}.knots: each knot must be [t, x_1, ..., x_{net.n_species}]")
    if rows[-1, 0] != 0.0:
        raise ModelFileError(f"{where}.knots: last knot must be at t = 0")
    if np.any(np.diff(rows[:, 0]) <= 0):
        raise ModelFileError(f"{where}.knots: times must be strictly increasing")
    hist = History.from_knots(rows[:, 0], rows[:, 1:])
    if hist.min_value(1025) <= 0:
        raise ModelFileError(f"{where}.knots: interpolated history is not strictly positive")
    return hist


def loads(text: str, source: str = "<string>") -> ModelFile:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{source}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        msgs = [f"{source}: {_path_str(e.absolute_path)}: {e.message}" for e in errors[:5]]
        raise ModelFileError("; ".join(msgs))
    names = {s["name"] for s in data["species"]}
    for k, r in enumerate(data["reactions"]):
        for side in ("reactants", "products"):
            for name in r[side]:
                if name not in names:
                    raise ModelFileError(f"{source}: reactions[{k}].{side}: unknown species {name!r}")
    model = ModelFile(
        species=data["species"],
        reactions=data["reactions"],
        histories=data.get("histories", {}),
        metadata=data.get("metadata", {}),
        name=data.get("name", ""),
        source=source,
    )
    try:
        net = model.network()
    except NetworkError as exc:
        raise ModelFileError(f"{source}: {exc}") from None
    for hname, hspec in model.histories.items():
        history_from_spec(hspec, net, f"{source}: histories.{hname}")
    ref = model.metadata.get("reference")
    if ref is not None and (len(ref) != net.n_species or min(ref) <= 0):
        raise ModelFileError(f"{source}: metadata.reference must be {net.n_species} positive numbers")
    return model


def bundled_models() -> list[str]:
    root = resources.files("delaycrn") / "models"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def resolve_model_path(name: str | Path):
    path = Path(name)
    if path.exists():
        return path
    candidate = str(name) if str(name).endswith(".json") else f"{name}.json"
    res = resources.files("delaycrn") / "models" / Path(candidate).name
    if res.is_file():
        return res
    raise ModelFileError(f"{name}: no such model file")


def parse_model(path) -> ModelFile:
    resolved = resolve_model_path(path)
    try:
        text = resolved.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ModelFileError(f"{path}: cannot read model file: {exc}") from None
    return loads(text, str(path))
