"""Plain-text ``key = value`` run configuration with a fixed schema."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .graphstore import (DatasetManifest, Graph, adjacency_feature_graph, load_citation_dataset,
                         load_generic_dataset, load_multilabel_dataset, make_fraction_splits, make_splits)
from .routing import RoutingConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _optional(fn):
    def parse(text: str):
        return None if text.strip().lower() in ("", "none") else fn(text)
    return parse


_PATH = _optional(str)

# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "dataset": (str, "dataset"),
    "format": (_choice("citation", "generic", "multilabel", "synthetic-sbm", "synthetic-multilabel"), "citation"),
    "content_path": (_PATH, None),
    "cites_path": (_PATH, None),
    "edges_path": (_PATH, None),
    "features_path": (_PATH, None),
    "labels_path": (_PATH, None),
    "num_classes": (_optional(int), None),
    "num_nodes": (int, 200),
    "split_seed": (int, 0),
    "per_class_train": (int, 20),
    "val_size": (int, 500),
    "test_size": (int, 1000),
    "train_fraction": (float, 0.5),
    "row_normalize": (_bool, True),
    "K": (int, 4),
    "d_out": (int, 64),
    "L": (int, 4),
    "T": (int, 6),
    "dropout": (float, 0.35),
    "learning_rate": (float, 0.01),
    "l2_coefficient": (float, 5e-4),
    "max_epochs": (int, 1000),
    "patience": (int, 50),
    "lambda": (float, 1.0),
    "seed": (int, 0),
    "task": (_choice("single-label", "multi-label"), "single-label"),
    "C": (int, 8),
    "paths": (_choice("capped", "dense"), "capped"),
    "shared_projection": (_bool, True),
    "multilabel_loss": (_choice("bce", "verbatim"), "bce"),
    "sweep_C": (_int_list, (0, 2, 5, 8)),
    "sweep_seeds": (_int_list, (0,)),
    "cluster_restarts": (int, 20),
    "nmi_average": (_choice("arithmetic", "geometric"), "arithmetic"),
    "out": (str, "runs/latest"),
}

PATH_KEYS = ("content_path", "cites_path", "edges_path", "features_path", "labels_path")


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, text: str) -> None:
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parser, _ = SCHEMA[key]
        try:
            self.values[key] = parser(text.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None

    def update_lines(self, lines, source: str = "<config>") -> None:
        for lineno, raw in enumerate(lines, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            try:
                self.set(key, value)
            except ConfigError as exc:
                raise ConfigError(f"{source}:{lineno}: {exc}") from None

    @classmethod
    def load(cls, path=None, overrides=(), defaults: dict | None = None) -> "RunConfig":
        cfg = cls()
        for key, value in (defaults or {}).items():
            cfg.set(key, value)
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            cfg.base_dir = path.resolve().parent
            cfg.update_lines(path.read_text(encoding="utf-8").splitlines(), str(path))
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            cfg.set(*item.split("=", 1))
        return cfg

    def path(self, key: str) -> str | None:
        value = self.values[key]
        if value is None:
            return None
        p = Path(value)
        return str(p if p.is_absolute() else self.base_dir / p)

    def manifest(self) -> DatasetManifest:
        v = self.values
        return DatasetManifest(**{k: self.path(k) for k in PATH_KEYS}, num_classes=v["num_classes"],
                               split_seed=v["split_seed"], per_class_train=v["per_class_train"],
                               val_size=v["val_size"], test_size=v["test_size"],
                               row_normalize=v["row_normalize"])

    def routing(self) -> RoutingConfig:
        v = self.values
        try:
            return RoutingConfig(K=v["K"], d_out=v["d_out"], L=v["L"], T=v["T"], dropout_rate=v["dropout"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def training(self, **changes) -> TrainConfig:
        v = self.values
        kw = dict(learning_rate=v["learning_rate"], l2_coefficient=v["l2_coefficient"],
                  max_epochs=v["max_epochs"], patience=v["patience"], lam=v["lambda"], seed=v["seed"],
                  task=v["task"], C=v["C"], paths=v["paths"], shared_projection=v["shared_projection"],
                  multilabel_verbatim=v["multilabel_loss"] == "verbatim")
        kw.update(changes)
        try:
            return TrainConfig(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def load_graph(self) -> Graph:
        """Load the configured dataset and draw its splits."""
        from . import synthetic

        v = self.values
        fmt, name = v["format"], v["dataset"]
        if fmt == "citation":
            self._require("content_path", "cites_path")
            graph = load_citation_dataset(self.manifest(), name=name)
        elif fmt == "generic":
            self._require("edges_path", "features_path", "labels_path")
            graph = load_generic_dataset(self.manifest(), name=name)
        elif fmt == "multilabel":
            self._require("edges_path", "labels_path", "num_classes")
            graph = load_multilabel_dataset(self.path("edges_path"), self.path("labels_path"),
                                            v["num_classes"], name=name)
        elif fmt == "synthetic-sbm":
            graph = synthetic.sbm(v["num_nodes"], v["num_classes"] or 3, v["split_seed"], name=name)
        else:
            edges, labels = synthetic.multilabel_sbm(v["num_nodes"], v["num_classes"] or 5, v["split_seed"])
            graph = adjacency_feature_graph(edges, labels, name=name)
        if graph.multilabel:
            return make_fraction_splits(graph, v["split_seed"], v["train_fraction"])
        return make_splits(graph, v["split_seed"], v["per_class_train"], v["val_size"], v["test_size"])

    def _require(self, *keys: str) -> None:
        missing = [k for k in keys if self.values[k] is None]
        if missing:
            raise ConfigError(f"format {self.values['format']!r} needs {', '.join(missing)}")
