"""Versioned JSON persistence for trained mixtures.

Floats are serialized with repr precision, so save -> load round-trips are
lossless and repeated saves of the same model are byte-identical.  Files
are written atomically (temp file + rename).
"""

from __future__ import annotations

import json
import os
from typing import Optional

import numpy as np

from .ctbn import CtbnExpert, TreeStructure
from .dataset import Standardizer
from .errors import SchemaError
from .logreg import LinearModel
from .mixture import GatingModel, MixtureModel

FORMAT_VERSION = "mlme-model/1"


def model_to_dict(model: MixtureModel,
                  standardizer: Optional[Standardizer] = None) -> dict:
    experts = []
    for expert in model.experts:
        experts.append({
            "parent": [None if p is None else int(p)
                       for p in expert.structure.parent],
            "cpds": [
                [{"params": m.params.tolist(), "lambda": m.lam} for m in models]
                for models in expert.cpds
            ],
        })
    return {
        "format": FORMAT_VERSION,
        "m": model.n_features - 1,
        "d": model.d,
        "k": model.k,
        "gating": model.gating.theta.tolist(),
        "experts": experts,
        "standardizer": standardizer.to_dict() if standardizer else None,
        "meta": model.meta,
    }


def model_from_dict(doc: dict) -> tuple[MixtureModel, Optional[Standardizer]]:
    if doc.get("format") != FORMAT_VERSION:
        raise SchemaError(
            f"unsupported model format {doc.get('format')!r}; "
            f"expected {FORMAT_VERSION!r}")
    experts = []
    for edoc in doc["experts"]:
        structure = TreeStructure(tuple(edoc["parent"]))
        cpds = tuple(
            tuple(LinearModel(np.asarray(m["params"]), m["lambda"])
                  for m in models)
            for models in edoc["cpds"])
        experts.append(CtbnExpert(structure, cpds))
    gating = GatingModel(np.asarray(doc["gating"], dtype=np.float64))
    model = MixtureModel(tuple(experts), gating, doc.get("meta") or {})
    scaler = None
    if doc.get("standardizer"):
        scaler = Standardizer.from_dict(doc["standardizer"])
    return model, scaler


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_model(model: MixtureModel, path,
               standardizer: Optional[Standardizer] = None) -> None:
    doc = model_to_dict(model, standardizer)
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_model(path) -> tuple[MixtureModel, Optional[Standardizer]]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not a valid model file: {exc}") from None
    return model_from_dict(doc)
