"""Run configuration files.

INI format with sections ``[model]``, ``[plan]``, ``[train]``, ``[loss]`` and
``[data]``.  Relative data paths resolve against the config file's directory.
``DCRNN_SEED``, ``DCRNN_TRAIN_DATA`` and ``DCRNN_TEST_DATA`` override the seed
and data paths.  Every validation failure raises :class:`ConfigError` naming
the key and, where it appears in the file, its line.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .data import FieldSchema, SynthSpec
from .errors import ConfigError, PlanError
from .models import DcrnnConfig, MmoeConfig
from .sequencing import SharingPlan
from .training import ALICCP_POS_WEIGHTS, LossConfig, TrainConfig

SECTIONS = ("model", "plan", "train", "loss", "data")


@dataclass(frozen=True)
class DataConfig:
    schema: FieldSchema
    kind: str = "synthetic"
    train: str | None = None
    test: str | None = None
    task_names: tuple[str, ...] = ("click", "conversion")
    max_bad_lines: int = 0


@dataclass(frozen=True)
class RunConfig:
    kind: str
    dcrnn: DcrnnConfig
    mmoe: MmoeConfig
    train: TrainConfig
    loss: LossConfig
    data: DataConfig
    source: str | None = field(default=None, compare=False)

    @property
    def model(self):
        return self.dcrnn if self.kind == "dcrnn" else self.mmoe

    @property
    def seed(self) -> int:
        return self.train.seed

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("source")
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        data = dict(d["data"])
        schema = FieldSchema(tuple(data.pop("schema")["keys"]), tuple(d["data"]["schema"]["vocab_sizes"]))
        dc = dict(d["dcrnn"])
        dc["plan"] = SharingPlan(**dc["plan"])
        return cls(
            kind=d["kind"],
            dcrnn=DcrnnConfig(**_tuples(dc)),
            mmoe=MmoeConfig(**_tuples(d["mmoe"])),
            train=TrainConfig(**d["train"]),
            loss=LossConfig(**_tuples(d["loss"])),
            data=DataConfig(schema=schema, **_tuples(data)),
        )


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def _line_index(text: str) -> dict[tuple[str, str], int]:
    """(section, key) -> 1-based line number; key '' marks the section header."""
    index = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            index[(section, "")] = lineno
            continue
        m = re.match(r"\s*([^#;=:\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            index[(section, m.group(1).strip().lower())] = lineno
    return index


class _Reader:
    def __init__(self, parser, lines):
        self.parser = parser
        self.lines = lines

    def fail(self, section, key, message):
        raise ConfigError(message, key=f"{section}.{key}",
                          line=self.lines.get((section, key), self.lines.get((section, ""))))

    def has(self, section, key):
        return self.parser.has_option(section, key)

    def raw(self, section, key, default=None):
        if not self.parser.has_option(section, key):
            if default is None:
                self.fail(section, key, "required key missing")
            return default
        return self.parser.get(section, key).strip()

    def int(self, section, key, default=None, minimum=None):
        value = self.raw(section, key, default)
        try:
            value = int(value)
        except (TypeError, ValueError):
            self.fail(section, key, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            self.fail(section, key, f"must be >= {minimum}, got {value}")
        return value

    def float(self, section, key, default=None):
        value = self.raw(section, key, default)
        try:
            return float(value)
        except (TypeError, ValueError):
            self.fail(section, key, f"expected a number, got {value!r}")

    def bool(self, section, key, default=None):
        value = str(self.raw(section, key, default)).lower()
        if value in ("1", "true", "yes", "on"):
            return True
        if value in ("0", "false", "no", "off"):
            return False
        self.fail(section, key, f"expected a boolean, got {value!r}")

    def choice(self, section, key, options, default=None):
        value = str(self.raw(section, key, default)).lower()
        if value not in options:
            self.fail(section, key, f"must be one of {list(options)}, got {value!r}")
        return value

    def ints(self, section, key, default=None, minimum=1):
        value = self.raw(section, key, default)
        if isinstance(value, tuple):
            return value
        try:
            out = tuple(int(x) for x in value.split(",") if x.strip())
        except ValueError:
            self.fail(section, key, f"expected comma-separated integers, got {value!r}")
        if any(x < minimum for x in out):
            self.fail(section, key, f"every entry must be >= {minimum}, got {value!r}")
        return out

    def floats(self, section, key, default=None):
        value = self.raw(section, key, default)
        if isinstance(value, tuple):
            return value
        try:
            out = tuple(float(x) for x in value.split(",") if x.strip())
        except ValueError:
            self.fail(section, key, f"expected comma-separated numbers, got {value!r}")
        if any(not (x >= 0 and x < float("inf")) for x in out):
            self.fail(section, key, f"weights must be finite and non-negative, got {value!r}")
        return out


def _resolve(base: Path, value):
    if value is None:
        return None
    p = Path(value)
    return str(p if p.is_absolute() else (base / p))


def parse_config(text: str, base_dir=".", env=None, source=None) -> RunConfig:
    env = os.environ if env is None else env
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    r = _Reader(parser, _line_index(text))
    for section in SECTIONS:
        if not parser.has_section(section):
            raise ConfigError("required section missing", key=section)

    # data first: the schema sizes the embedding of both model families
    kind = r.choice("data", "kind", ("synthetic", "aliccp"), "synthetic")
    vocab = r.ints("data", "vocab_sizes")
    if r.has("data", "field_keys"):
        keys = r.ints("data", "field_keys", minimum=0)
    else:
        keys = tuple(range(1, len(vocab) + 1))
    if len(vocab) == 1 and len(keys) > 1:
        vocab = vocab * len(keys)
    try:
        schema = FieldSchema(keys, vocab)
    except ValueError as exc:
        r.fail("data", "vocab_sizes", str(exc))
    names = tuple(x.strip() for x in r.raw("data", "task_names", "click, conversion").split(","))
    base = Path(base_dir)
    data = DataConfig(
        schema=schema, kind=kind,
        train=_resolve(base, env.get("DCRNN_TRAIN_DATA") or r.raw("data", "train", "") or None),
        test=_resolve(base, env.get("DCRNN_TEST_DATA") or r.raw("data", "test", "") or None),
        task_names=names,
        max_bad_lines=r.int("data", "max_bad_lines", "0", minimum=0),
    )

    n_tasks = r.int("plan", "n_tasks", "2", minimum=1)
    L = r.int("plan", "window_len", minimum=1)
    interval = r.int("plan", "interval")
    try:
        plan = SharingPlan(n_tasks, L, interval)
    except PlanError:
        r.fail("plan", "interval", f"interval must satisfy 0 ≤ I ≤ L (got I={interval}, L={L})")
    if len(names) != n_tasks:
        r.fail("data", "task_names", f"{len(names)} task names for {n_tasks} tasks")

    model_kind = r.choice("model", "kind", ("dcrnn", "mmoe"), "dcrnn")
    emb = r.int("model", "embedding_dim", "32", minimum=1)
    towers = r.ints("model", "tower_widths", "64, 32")
    dcrnn = DcrnnConfig(
        vocab_sizes=schema.vocab_sizes, plan=plan, embedding_dim=emb,
        cell=r.choice("model", "cell", ("lstm", "gru"), "lstm"),
        bidirectional=r.choice("model", "direction", ("uni", "bi"), "bi") == "bi",
        hidden_dim=r.int("model", "hidden_dim", "32", minimum=1),
        ada=r.bool("model", "ada", "true"),
        tower_widths=towers,
    )
    mmoe = MmoeConfig(
        vocab_sizes=schema.vocab_sizes, n_tasks=n_tasks, embedding_dim=emb,
        expert_count=r.int("model", "expert_count", "8", minimum=1),
        expert_widths=r.ints("model", "expert_widths", "128, 64"),
        tower_widths=towers,
    )

    seed_text = env.get("DCRNN_SEED")
    if seed_text is not None:
        try:
            seed = int(seed_text)
        except ValueError:
            raise ConfigError(f"DCRNN_SEED must be an integer, got {seed_text!r}") from None
    else:
        seed = r.int("train", "seed", "0", minimum=0)
    lr = r.float("train", "learning_rate", "0.0001")
    if not lr >= 0:
        r.fail("train", "learning_rate", f"must be non-negative, got {lr}")
    train = TrainConfig(
        epochs=r.int("train", "epochs", "3", minimum=0),
        batch_size=r.int("train", "batch_size", "1024", minimum=1),
        learning_rate=lr, seed=seed,
        optimizer=r.choice("train", "optimizer", ("adam", "sgd"), "adam"),
    )

    default_pos = ALICCP_POS_WEIGHTS if kind == "aliccp" and n_tasks == 2 else (1.0,) * n_tasks
    pos = r.floats("loss", "pos_weights", default_pos)
    agg = r.floats("loss", "task_weights", (1.0,) * n_tasks)
    for key, vals in (("pos_weights", pos), ("task_weights", agg)):
        if len(vals) != n_tasks:
            r.fail("loss", key, f"{len(vals)} values for {n_tasks} tasks")
    loss = LossConfig(pos, agg)

    return RunConfig(model_kind, dcrnn, mmoe, train, loss, data, source=source)


def load_config(path, env=None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent, env=env, source=str(path))


def load_synth_spec(path) -> SynthSpec:
    """Read a ``[synth]`` section whose keys are :class:`SynthSpec` fields."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read spec {path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse spec: {exc}") from None
    if not parser.has_section("synth"):
        raise ConfigError("required section missing", key="synth")
    lines = _line_index(text)
    types = {f.name: f.type for f in dataclasses.fields(SynthSpec)}
    kwargs = {}
    for key, value in parser.items("synth"):
        if key not in types:
            raise ConfigError("unknown key", key=f"synth.{key}", line=lines.get(("synth", key)))
        try:
            kwargs[key] = int(value) if types[key] in (int, "int") else float(value)
        except ValueError:
            raise ConfigError(f"bad value {value!r}", key=f"synth.{key}", line=lines.get(("synth", key))) from None
    try:
        return SynthSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), key="synth") from None
