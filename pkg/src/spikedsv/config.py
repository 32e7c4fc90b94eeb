"""Model configuration files.

INI-style key/value text.  ``[model] type`` selects the constructor; all
numbers are plain decimals and lists are comma separated::

    [model]
    type = block            # block | rank1 | genetics | explicit

    [noise]
    family = uniform        # gaussian | uniform (block, rank1, explicit)
    sigma2 = 1.0            # rank1 / explicit: common entry variance

    [block]
    M = 20                  # rows per block
    N = 50                  # columns per block
    mu = 0, 1, 1, 1
    sigma2 = 0.3333333333333333     # one value or four

    [rank1]
    M = 300
    N = 300
    mu = 1.0                # one value (constant) or N values

    [genetics]
    sizes = 20, 40, 60
    markers = 2500
    spectrum = u-squared    # u-squared | uniform
    p_seed = 1
    p_csv = p.csv           # optional; overrides spectrum/p_seed

    [explicit]
    F_csv = F.csv
    G_csv = G.csv
    sigma2_csv = var.csv    # optional per-entry variances

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass

from .ensembles import (
    AllelicModel,
    BlockSpec,
    block_model,
    genetics_model,
    rank1_model,
    sample_allelic_probabilities,
)
from .errors import ModelError
from .matrix_io import read_matrix_csv
from .model import NoiseProfile, PerturbationModel


@dataclass
class LoadedModel:
    kind: str
    model: PerturbationModel
    block: BlockSpec | None = None
    allelic: AllelicModel | None = None


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _section(cp, name):
    if not cp.has_section(name):
        raise ModelError(f"config is missing the [{name}] section")
    return cp[name]


def load_allelic(sizes, markers=None, spectrum="u-squared", p_seed=0, p_csv=None) -> AllelicModel:
    """Allelic model from a ``markers x K`` CSV or from ``K`` independent spectrum draws."""
    sizes = tuple(int(s) for s in sizes)
    if p_csv is not None:
        p = read_matrix_csv(p_csv).T
        if markers is not None and p.shape[1] != markers:
            raise ModelError(f"{p_csv} has {p.shape[1]} markers, expected {markers}")
    else:
        if markers is None:
            raise ModelError("markers is required when sampling probabilities")
        p = sample_allelic_probabilities(len(sizes), int(markers), int(p_seed), spectrum)
    return AllelicModel(sizes=sizes, p=p)


def load_config(path) -> LoadedModel:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        cp.read_file(fh)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    kind = _section(cp, "model").get("type", "").strip().lower()
    noise = cp["noise"] if cp.has_section("noise") else {}
    family = noise.get("family", "gaussian").strip()
    try:
        if kind == "block":
            sec = _section(cp, "block")
            s2 = _floats(sec.get("sigma2", noise.get("sigma2", "1")))
            spec = BlockSpec(
                mu=tuple(_floats(sec["mu"])),
                sigma2=tuple(s2 if len(s2) == 4 else s2 * 4),
                M=sec.getint("M"),
                N=sec.getint("N"),
                entry_family=family,
            )
            return LoadedModel(kind, block_model(spec), block=spec)
        if kind == "rank1":
            sec = _section(cp, "rank1")
            sigma2 = float(sec.get("sigma2", noise.get("sigma2", "1")))
            mu = _floats(sec["mu"])
            model, _ = rank1_model(mu, sigma2, sec.getint("M"), sec.getint("N"), family=family)
            return LoadedModel(kind, model)
        if kind == "genetics":
            sec = _section(cp, "genetics")
            allelic = load_allelic(
                _ints(sec["sizes"]),
                markers=sec.getint("markers"),
                spectrum=sec.get("spectrum", "u-squared").strip(),
                p_seed=sec.getint("p_seed", 0),
                p_csv=resolve(sec["p_csv"].strip()) if "p_csv" in sec else None,
            )
            return LoadedModel(kind, genetics_model(allelic), allelic=allelic)
        if kind == "explicit":
            sec = _section(cp, "explicit")
            F = read_matrix_csv(resolve(sec["F_csv"].strip()))
            G = read_matrix_csv(resolve(sec["G_csv"].strip()))
            shape = (F.shape[0], G.shape[0])
            if "sigma2_csv" in sec:
                var = read_matrix_csv(resolve(sec["sigma2_csv"].strip()))
            else:
                var = float(sec.get("sigma2", noise.get("sigma2", "1")))
            if family == "gaussian":
                profile = NoiseProfile.gaussian(shape, var)
            elif family in ("uniform", "uniform_centered"):
                profile = NoiseProfile.uniform(shape, var)
            else:
                raise ModelError(f"unsupported entry family {family!r}")
            return LoadedModel(kind, PerturbationModel(F, G, profile))
    except KeyError as exc:
        raise ModelError(f"config is missing key {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"bad value in config: {exc}") from exc
    raise ModelError(f"unknown model type {kind!r}; expected block, rank1, genetics or explicit")
