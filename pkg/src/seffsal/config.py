"""Flat key=value run configuration shared by all CLI subcommands.

The file format is one `key = value` per line; blank lines and lines starting
with `#` are ignored. Integer tuples are comma-separated. Unknown keys are
rejected. `--set key=value` overrides win over file values.
"""

from dataclasses import asdict, dataclass, fields

from .errors import ConfigError
from .net import NetConfig
from .trainer import TrainConfig


@dataclass
class RunConfig:
    # architecture
    stage_channels: tuple = (16, 32, 64, 128)
    blocks_per_stage: int = 1
    decoder_channels: int = 32
    reduction: int = 4
    scale_sizes: tuple = (352, 176, 88)
    variant: str = "full"          # full | scale2 | scale1
    fusion: str = "seff"           # seff | cbr (the ablation replacement)
    # optimization
    batch_size: int = 10
    lr0: float = 5e-5
    decay_factor: float = 5.0
    decay_every: int = 40
    epochs: int = 100
    max_iters: int = 0
    seed: int = 0
    checkpoint_every: int = 20
    augment_flip: bool = False
    # loss
    lambda_bce: float = 1.0
    lambda_iou: float = 0.5
    lambda_l1: float = 0.3
    omega_mu: float = 0.5
    # io
    dataset_dir: str = ""
    out_dir: str = "runs/default"
    # synth subcommand
    synth_n: int = 100
    synth_canvas: int = 128
    # ablate subcommand
    ablate_train: bool = False
    ablate_iters: int = 150
    ablate_train_n: int = 100
    ablate_test_n: int = 30

    def net_config(self):
        return NetConfig(stage_channels=self.stage_channels,
                         blocks_per_stage=self.blocks_per_stage,
                         decoder_channels=self.decoder_channels,
                         reduction=self.reduction,
                         scale_sizes=self.scale_sizes,
                         fusion=self.fusion)

    def train_config(self):
        return TrainConfig(batch_size=self.batch_size, lr0=self.lr0,
                           decay_factor=self.decay_factor,
                           decay_every=self.decay_every, epochs=self.epochs,
                           seed=self.seed, variant=self.variant,
                           lambda_bce=self.lambda_bce, lambda_iou=self.lambda_iou,
                           lambda_l1=self.lambda_l1, omega_mu=self.omega_mu,
                           max_iters=self.max_iters,
                           checkpoint_every=self.checkpoint_every,
                           augment_flip=self.augment_flip)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(key, text):
    field = _FIELDS[key]
    text = text.strip()
    default = field.default
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(v) for v in text.split(","))
        return text
    except ValueError as exc:
        raise ConfigError(f"invalid value for key {key!r}: {exc}")


def parse_config_text(text):
    """Key/value pairs from config file text; rejects unknown keys."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, value)
    return values


def load_run_config(path=None, overrides=()):
    """RunConfig from an optional file plus `key=value` override strings."""
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, value)
    return RunConfig(**values)


def format_run_config(cfg: RunConfig):
    """Reparseable echo of a config (used for run provenance)."""
    lines = []
    for key, value in asdict(cfg).items():
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_keys_help():
    """One-line-per-key listing for CLI --help epilogs."""
    lines = []
    for f in fields(RunConfig):
        default = f.default
        if isinstance(default, tuple):
            default = ",".join(str(v) for v in default)
        lines.append(f"  {f.name} (default: {default})")
    return "\n".join(lines)
