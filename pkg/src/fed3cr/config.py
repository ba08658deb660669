"""Experiment configuration: a flat sectioned key=value file, overridable
key-by-key from the command line, resolved to explicit defaults and written
back out as a manifest JSON that reproduces the run when loaded again."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .datasets import InteractionDataset, leave_one_out_split, load_dataset
from .errors import ConfigurationError
from .federation import HyperParams, VariantConfig
from .toy import generate_toy_dataset

VERSION = "fed3cr-0.1.0"

SECTIONS = ("dataset", "training", "variant", "eval")


def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_tuple(s) -> tuple[int, ...]:
    if isinstance(s, (list, tuple)):
        return tuple(int(x) for x in s)
    return tuple(int(x) for x in str(s).split(",") if x.strip())


# section -> key -> (caster, default)
SCHEMA: dict[str, dict] = {
    "dataset": {
        "path": (str, ""),
        "format": (str, "toy"),
        "min_interactions": (int, 10),
        "holdout": (str, "timestamp"),
        "toy_clients": (int, 24),
        "toy_items": (int, 96),
        "toy_blocks": (int, 4),
        "toy_min_positives": (int, 6),
        "toy_max_positives": (int, 10),
        "toy_own_fraction": (float, 0.75),
        "toy_sharpness": (float, 2.5),
    },
    "training": {
        "rounds": (int, 100),
        "local_iters": (int, 10),
        "dim": (int, 32),
        "batch_size": (int, 2048),
        "negatives_per_positive": (int, 4),
        "client_fraction": (float, 1.0),
        "lr": (float, 0.1),
        "lr_gamma": (float, 0.999),
        "beta_a": (float, 0.5),
        "beta_o": (float, 0.5),
        "ace_init": (str, "zero"),
        "ace_scale": (float, 1.0),
        "eq12_mode": (str, "softmax"),
        "transfer_layers": (_parse_int_tuple, (2, 4)),
        "consistency_sample": (_parse_bool, False),
        "dtype": (str, "float32"),
        "seed": (int, 0),
    },
    "variant": {
        "label": (str, "Fed3CR"),
        "enhancement": (str, None),
        "consistency": (_parse_bool, None),
        "orthogonality": (_parse_bool, None),
        "complementarity": (str, None),
    },
    "eval": {
        "interval": (int, 1),
        "top_k": (int, 10),
        "rbo_k": (int, 50),
        "rbo_p": (float, 0.99),
        "rbo_enabled": (_parse_bool, True),
        "negatives": (int, 99),
    },
}


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description."""

    dataset: dict = field(default_factory=dict)
    hp: HyperParams = field(default_factory=HyperParams)
    variant: VariantConfig = field(default_factory=VariantConfig)
    variant_label: str = "Fed3CR"

    def resolved(self) -> dict:
        """Snapshot of every knob, defaults included, as plain JSON data."""
        return {
            "version": VERSION,
            "dataset": dict(self.dataset),
            "training": {
                "rounds": self.hp.rounds,
                "local_iters": self.hp.local_iters,
                "dim": self.hp.dim,
                "batch_size": self.hp.batch_size,
                "negatives_per_positive": self.hp.negatives_per_positive,
                "client_fraction": self.hp.client_fraction,
                "lr": self.hp.lr,
                "lr_gamma": self.hp.lr_gamma,
                "beta_a": self.hp.beta_a,
                "beta_o": self.hp.beta_o,
                "ace_init": self.hp.ace_init,
                "ace_scale": self.hp.ace_scale,
                "eq12_mode": self.hp.eq12_mode,
                "transfer_layers": list(self.hp.transfer_schedule),
                "consistency_sample": self.hp.consistency_sample,
                "dtype": self.hp.dtype,
                "seed": self.hp.seed,
            },
            "variant": {
                "label": self.variant_label,
                "enhancement": self.variant.enhancement_kind,
                "consistency": self.variant.consistency_enabled,
                "orthogonality": self.variant.orthogonality_enabled,
                "complementarity": self.variant.complementarity_kind,
            },
            "eval": {
                "interval": self.hp.eval_interval,
                "top_k": self.hp.top_k,
                "rbo_k": self.hp.rbo_k,
                "rbo_p": self.hp.rbo_p,
                "rbo_enabled": self.hp.rbo_enabled,
                "negatives": self.hp.eval_negatives,
            },
        }

    def build_dataset(self) -> InteractionDataset:
        """Materialize and split the configured dataset."""
        d = self.dataset
        if d["format"] == "toy":
            ds = generate_toy_dataset(
                num_clients=d["toy_clients"],
                num_items=d["toy_items"],
                num_blocks=d["toy_blocks"],
                min_positives=d["toy_min_positives"],
                max_positives=d["toy_max_positives"],
                own_block_fraction=d["toy_own_fraction"],
                sharpness=d["toy_sharpness"],
                seed=self.hp.seed,
            )
        else:
            if not d["path"]:
                raise ConfigurationError("dataset.path is required for file-backed formats")
            ds = load_dataset(d["path"], d["format"], d["min_interactions"])
        return leave_one_out_split(ds, self.hp.seed, holdout=d["holdout"])


def _read_sectioned(path: str) -> dict[str, dict[str, str]]:
    raw: dict[str, dict[str, str]] = {}
    section = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                raw.setdefault(section, {})
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{line_no}: expected key = value, got {line!r}")
            if section is None:
                raise ConfigurationError(f"{path}:{line_no}: key outside of any [section]")
            key, value = (part.strip() for part in line.split("=", 1))
            raw[section][key] = value
    return raw


def _validate_and_cast(raw: dict[str, dict]) -> dict[str, dict]:
    values: dict[str, dict] = {s: {} for s in SECTIONS}
    for section, entries in raw.items():
        if section not in SCHEMA:
            raise ConfigurationError(f"unknown config section {section!r}")
        for key, value in entries.items():
            if key not in SCHEMA[section]:
                raise ConfigurationError(f"unknown key {section}.{key}")
            caster, _ = SCHEMA[section][key]
            try:
                values[section][key] = value if not isinstance(value, str) else caster(value)
            except (ValueError, TypeError) as exc:
                raise ConfigurationError(f"bad value for {section}.{key}: {exc}") from exc
    return values


def _apply_defaults(values: dict[str, dict]) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for section, keys in SCHEMA.items():
        out[section] = {}
        for key, (_, default) in keys.items():
            out[section][key] = values.get(section, {}).get(key, default)
    return out


def resolve_config(values: dict[str, dict], overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Cast, apply overrides and defaults, and build the typed config."""
    values = _validate_and_cast(values)
    if overrides:
        for dotted, value in overrides.items():
            if "." not in dotted:
                raise ConfigurationError(f"override {dotted!r} must be section.key")
            section, key = dotted.split(".", 1)
            if section not in SCHEMA or key not in SCHEMA[section]:
                raise ConfigurationError(f"unknown key {dotted}")
            caster, _ = SCHEMA[section][key]
            try:
                values.setdefault(section, {})[key] = caster(value)
            except (ValueError, TypeError) as exc:
                raise ConfigurationError(f"bad value for {dotted}: {exc}") from exc
    full = _apply_defaults(values)

    env_seed = os.environ.get("FED3CR_SEED")
    if env_seed is not None:
        try:
            full["training"]["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigurationError(f"FED3CR_SEED must be an integer, got {env_seed!r}") from exc

    t, e = full["training"], full["eval"]
    hp = HyperParams(
        rounds=t["rounds"],
        local_iters=t["local_iters"],
        dim=t["dim"],
        batch_size=t["batch_size"],
        negatives_per_positive=t["negatives_per_positive"],
        client_fraction=t["client_fraction"],
        lr=t["lr"],
        lr_gamma=t["lr_gamma"],
        beta_a=t["beta_a"],
        beta_o=t["beta_o"],
        ace_init=t["ace_init"],
        ace_scale=t["ace_scale"],
        eq12_mode=t["eq12_mode"],
        transfer_schedule=tuple(t["transfer_layers"]),
        consistency_sample=t["consistency_sample"],
        dtype=t["dtype"],
        seed=t["seed"],
        eval_interval=e["interval"],
        top_k=e["top_k"],
        rbo_k=e["rbo_k"],
        rbo_p=e["rbo_p"],
        rbo_enabled=e["rbo_enabled"],
        eval_negatives=e["negatives"],
    )
    hp.validate()

    v = full["variant"]
    variant = VariantConfig.from_label(v["label"])
    if v["enhancement"] is not None:
        variant = dataclasses.replace(variant, enhancement_kind=v["enhancement"])
    if v["consistency"] is not None:
        variant = dataclasses.replace(variant, consistency_enabled=v["consistency"])
    if v["orthogonality"] is not None:
        variant = dataclasses.replace(variant, orthogonality_enabled=v["orthogonality"])
    if v["complementarity"] is not None:
        variant = dataclasses.replace(variant, complementarity_kind=v["complementarity"])
    variant.validate()

    return ExperimentConfig(
        dataset=full["dataset"], hp=hp, variant=variant, variant_label=v["label"]
    )


def load_config(path: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Load either a sectioned key=value file or a manifest JSON."""
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.read(1)
    if head == "{":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        data.pop("version", None)
        return resolve_config(data, overrides)
    return resolve_config(_read_sectioned(path), overrides)
