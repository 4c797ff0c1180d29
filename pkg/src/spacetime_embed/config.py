"""INI experiment configuration.

Sections ``[manifold]``, ``[likelihood]``, ``[train]``, ``[data]``,
``[output]`` and ``[sweep]``.  Unset manifold/likelihood/train keys fall back
to the duplication-divergence preset of the chosen manifold.  In a sweep, any
value holding a comma-separated list becomes a grid axis.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, fields
from pathlib import Path

from .graphs import (
    DirectedGraph,
    DupDivParams,
    generate_chain,
    generate_common_neighbors,
    generate_cycle,
    generate_duplication_divergence,
    generate_transitive_chain,
    load_edge_list,
)
from .likelihood import Likelihood
from .manifolds import Kind, ManifoldSpec
from .optimizer import TrainConfig

SECTIONS = ("manifold", "likelihood", "train", "data", "output", "sweep")

GENERATORS = ("dupdiv", "cycle", "chain", "transitive_chain", "common_neighbors", "edgelist")

_DATA_DEFAULTS = {
    "generator": "dupdiv",
    "n": "5",
    "n_i": "3",
    "n_f": "100",
    "p1": "0.7",
    "p2": "0.7",
    "graph_seed": "18",
    "dag_seed": "false",
    "n_pred": "10",
    "n_succ": "10",
    "path": "",
    "train_frac": "0.85",
    "valid_frac": "0.0",
    "split_seed": "0",
}
_SWEEP_DEFAULTS = {"trials": "3", "workers": "0", "metric": "ap"}
_TRAIN_KEYS = [f.name for f in fields(TrainConfig)]
_LIK_KEYS = ("kind", "tau1", "tau2", "alpha", "r", "k", "wrap_m")


class ConfigError(ValueError):
    pass


def _preset_defaults(kind: Kind) -> dict[str, dict[str, str]]:
    from .experiments import DUPDIV_PRESETS

    name = {Kind.CYLINDRICAL_EUCLIDEAN: "cylindrical_minkowski",
            Kind.ANTI_DE_SITTER: "anti_de_sitter"}.get(kind, kind.value)
    p = DUPDIV_PRESETS.get(name)
    if p is None:
        raise ConfigError(f"no preset for manifold {kind.value}")
    lik = p.likelihood
    lik_kind = "wrapped_tfd" if lik.wrap_m > 0 else lik.kind
    return {
        "manifold": {"dim": "10", "circumference": "" if p.circumference is None else repr(p.circumference)},
        "likelihood": {"kind": lik_kind, "tau1": repr(lik.tau1), "tau2": repr(lik.tau2),
                       "alpha": repr(lik.alpha), "r": repr(lik.r), "k": "auto",
                       "wrap_m": str(lik.wrap_m)},
        "train": {**{k: str(v) for k, v in vars(TrainConfig()).items()},
                  "lr": repr(p.lr), "batch_size": str(p.batch_size), "epochs": str(p.epochs)},
    }


@dataclass
class ExperimentConfig:
    """Fully resolved configuration; every value is stored as its INI string."""

    sections: dict[str, dict[str, str]]

    # --- construction ----------------------------------------------------
    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser) -> "ExperimentConfig":
        unknown = [s for s in parser.sections() if s not in SECTIONS]
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
        user = {s: dict(parser[s]) if parser.has_section(s) else {} for s in SECTIONS}
        kind_text = user["manifold"].get("kind", "cylindrical_minkowski")
        if "," in kind_text:
            raise ConfigError("manifold kind cannot be a sweep axis")
        kind = Kind.parse(kind_text)
        base = _preset_defaults(kind)
        merged = {
            "manifold": {"kind": kind.value, **base["manifold"], **user["manifold"]},
            "likelihood": {**base["likelihood"], **user["likelihood"]},
            "train": {**base["train"], **user["train"]},
            "data": {**_DATA_DEFAULTS, **user["data"]},
            "output": {"dir": "runs/latest", **user["output"]},
            "sweep": {**_SWEEP_DEFAULTS, **user["sweep"]},
        }
        if kind not in (Kind.CYLINDRICAL_MINKOWSKI, Kind.CYLINDRICAL_EUCLIDEAN):
            merged["manifold"]["circumference"] = ""
        for key in merged["train"]:
            if key not in _TRAIN_KEYS:
                raise ConfigError(f"unknown [train] key {key!r}")
        for key in merged["likelihood"]:
            if key not in _LIK_KEYS:
                raise ConfigError(f"unknown [likelihood] key {key!r}")
        cfg = cls(merged)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None, overrides: list[str] | None = None) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        if path is not None:
            if not Path(path).is_file():
                raise ConfigError(f"config file not found: {path}")
            parser.read(path, encoding="utf-8")
        for item in overrides or []:
            key, sep, value = item.partition("=")
            section, dot, option = key.strip().partition(".")
            if not sep or not dot:
                raise ConfigError(f"override must look like section.key=value, got {item!r}")
            if not parser.has_section(section):
                parser.add_section(section)
            parser[section][option] = value.strip()
        return cls.from_parser(parser)

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for s in SECTIONS:
            parser[s] = self.sections[s]
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_ini(), encoding="utf-8")

    # --- sweeps ------------------------------------------------------------
    def sweep_axes(self) -> dict[str, list[str]]:
        axes = {}
        for s in ("likelihood", "train", "manifold", "data"):
            for k, v in self.sections[s].items():
                if "," in v:
                    axes[f"{s}.{k}"] = [x.strip() for x in v.split(",")]
        return axes

    def with_values(self, point: dict[str, str]) -> "ExperimentConfig":
        sections = {s: dict(v) for s, v in self.sections.items()}
        for dotted, value in point.items():
            s, k = dotted.split(".", 1)
            sections[s][k] = str(value)
        return ExperimentConfig(sections)

    def validate(self) -> None:
        if self.sweep_axes():
            return  # each grid point is validated when it runs
        self.spec()
        self.likelihood_unscaled()
        self.train_config()
        g = self.sections["data"]["generator"]
        if g not in GENERATORS:
            raise ConfigError(f"unknown generator {g!r}; choose from {', '.join(GENERATORS)}")
        if g == "edgelist" and not Path(self.sections["data"]["path"]).is_file():
            raise ConfigError(f"edge list not found: {self.sections['data']['path']!r}")

    # --- typed views ---------------------------------------------------------
    def _get(self, section, key, conv):
        raw = self.sections[section][key]
        try:
            return conv(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None

    def spec(self) -> ManifoldSpec:
        m = self.sections["manifold"]
        circ = float(m["circumference"]) if m.get("circumference") else None
        try:
            return ManifoldSpec.from_embedding_dim(Kind.parse(m["kind"]), self._get("manifold", "dim", int),
                                                   circ)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def likelihood_unscaled(self) -> Likelihood:
        lk = self.sections["likelihood"]
        kind = lk["kind"].strip().lower()
        tau1 = self._get("likelihood", "tau1", float)
        r = self._get("likelihood", "r", float)
        alpha = self._get("likelihood", "alpha", float)
        try:
            if kind == "fd":
                return Likelihood.fd(tau1, r, alpha)
            k = 1.0 if lk["k"] == "auto" else self._get("likelihood", "k", float)
            m = self._get("likelihood", "wrap_m", int)
            if kind == "wrapped_tfd" and m == 0:
                m = 3
            if kind == "tfd":
                m = 0
            return Likelihood(kind, tau1, self._get("likelihood", "tau2", float), alpha, r, k, m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def likelihood(self) -> Likelihood:
        """The likelihood with ``k`` calibrated when it is set to ``auto``."""
        lik = self.likelihood_unscaled()
        if lik.kind != "fd" and self.sections["likelihood"]["k"] == "auto":
            lik = lik.calibrated(self.spec())
        return lik

    def train_config(self) -> TrainConfig:
        t = self.sections["train"]
        conv = {"lr": float, "burnin_factor": float, "lr_final_fraction": float, "init_scale": float,
                "negatives": str}
        kwargs = {k: self._get("train", k, conv.get(k, int)) for k in t}
        try:
            return TrainConfig(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def set_seed(self, seed: int) -> None:
        self.sections["train"]["seed"] = str(int(seed))

    @property
    def output_dir(self) -> Path:
        return Path(self.sections["output"]["dir"])

    def graph(self) -> DirectedGraph:
        d = self.sections["data"]
        g = d["generator"]
        geti = lambda k: self._get("data", k, int)  # noqa: E731
        if g == "dupdiv":
            return generate_duplication_divergence(DupDivParams(
                geti("n_i"), geti("n_f"), self._get("data", "p1", float),
                self._get("data", "p2", float), geti("graph_seed"),
                d["dag_seed"].strip().lower() in ("1", "true", "yes")))
        if g == "cycle":
            return generate_cycle(geti("n"))
        if g == "chain":
            return generate_chain(geti("n"))
        if g == "transitive_chain":
            return generate_transitive_chain(geti("n"))
        if g == "common_neighbors":
            return generate_common_neighbors(geti("n_pred"), geti("n_succ"))
        if g == "edgelist":
            return load_edge_list(d["path"])
        raise ConfigError(f"unknown generator {g!r}")
