"""Scenario configuration: a JSON file describing workload, policies and outputs.

``validate`` reports every problem at once, each prefixed with the path of
the offending key (``sfs.window_size``, ``policies[2].name``, ...).
``load_scenario`` returns a ready :class:`ScenarioConfig` or raises
:class:`ScenarioError` carrying those diagnostics.

Schema (all keys optional except ``policies``)::

    {
      "workload": {
        "buckets": [{"lo_us": 1, "hi_us": 50000, "probability": 0.406, "group": 1}, ...],
        "cap_us": 60000000,
        "iat": {"kind": "poisson", "mean_us": 100000}
             | {"kind": "uniform", "lo_us": ..., "hi_us": ...}
             | {"kind": "trace", "path": "iats.txt"} | {"kind": "trace", "values": [...]},
        "scale_to_load": true,
        "bursts": {"count": 5, "length": 200, "compress": 10.0},
        "io": {"io_fraction": 0.0, "io_lo_us": 10000, "io_hi_us": 100000},
        "n_requests": 10000, "target_load": 1.0, "cores": 12, "seed": 0
      },
      "policy_config": {"cfs_sched_latency_us": 24000, ...},
      "sfs": {"window_size": 100, "overload_multiplier": 3.0, ...},
      "policies": ["sfs", "cfs", {"name": "sfs", "label": "sfs-s200", "sfs": {"fixed_slice_us": 200000}}],
      "baseline": "cfs",
      "engine": {"switch_cost_us": 0, "count_io_switches": true},
      "output_dir": "out",
      "formats": ["csv", "json"],
      "repeat": 1
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .policies import POLICY_NAMES, ConfigError, PolicyConfig, PolicySpec, SfsConfig
from .sim import EngineConfig
from .workload import (
    DEFAULT_CAP_US, DurationBucket, IatModel, IoProfile, TraceError, WorkloadError,
    WorkloadSpec, azure_buckets, generate, inject_bursts, load_trace, scale_to_load,
)

FORMATS = ("csv", "json")

_TOP_KEYS = {
    "workload", "policy_config", "sfs", "policies", "baseline", "engine",
    "output_dir", "formats", "repeat",
}
_WORKLOAD_KEYS = {
    "buckets", "cap_us", "iat", "scale_to_load", "bursts", "io",
    "n_requests", "target_load", "cores", "seed",
}
_BUCKET_KEYS = {"lo_us", "hi_us", "probability", "group"}
_BURST_KEYS = {"count", "length", "compress"}
_IAT_KEYS = {
    "poisson": {"kind", "mean_us"},
    "uniform": {"kind", "lo_us", "hi_us"},
    "trace": {"kind", "path", "values"},
}
_ENGINE_KEYS = {"switch_cost_us", "count_io_switches"}


class ScenarioError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class BurstSpec:
    count: int
    length: int
    compress: float


@dataclass
class ScenarioConfig:
    workload: WorkloadSpec
    policies: list[PolicySpec]
    scale: bool = True
    bursts: BurstSpec | None = None
    baseline: str | None = None
    engine: EngineConfig = field(default_factory=EngineConfig)
    output_dir: Path = Path("out")
    formats: tuple[str, ...] = FORMATS
    repeat: int = 1

    def workload_for(self, rep: int) -> WorkloadSpec:
        """Workload of repetition ``rep``: seed_i = base seed + i."""
        spec = replace(self.workload, seed=self.workload.seed + rep)
        if self.scale:
            spec = scale_to_load(spec)
        if self.bursts is not None:
            b = self.bursts
            iat = inject_bursts(
                spec.iat, spec.n_requests, b.count, b.length, b.compress,
                np.random.default_rng(spec.seed),
            )
            spec = replace(spec, iat=iat)
        return spec

    def requests_for(self, rep: int):
        return generate(self.workload_for(rep))


# -- type checks --------------------------------------------------------------

def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return _is_int(v) or isinstance(v, float)


def _unknown(path: str, obj: dict, allowed: set, diags: list[str]) -> None:
    for k in sorted(set(obj) - allowed):
        diags.append(f"{path}.{k}: unknown key" if path else f"{k}: unknown key")


def _typed_fields(path: str, cls, raw: Any, diags: list[str]) -> dict | None:
    """Check ``raw`` against the field types of a config dataclass."""
    if not isinstance(raw, dict):
        diags.append(f"{path}: expected an object")
        return None
    fields = {f.name: f for f in dataclasses.fields(cls)}
    _unknown(path, raw, set(fields), diags)
    out = {}
    for k, v in raw.items():
        if k not in fields:
            continue
        default = fields[k].default
        ok = True
        if isinstance(default, bool):
            ok = isinstance(v, bool)
        elif isinstance(default, int) or (default is None and k.endswith("_us")):
            ok = _is_int(v) or (default is None and v is None)
        elif isinstance(default, float):
            ok = _is_num(v)
        elif isinstance(default, str):
            ok = isinstance(v, str)
        if not ok:
            diags.append(f"{path}.{k}: bad value {v!r}")
            continue
        out[k] = float(v) if isinstance(default, float) else v
    return out


def _build(path: str, cls, kwargs: dict, diags: list[str]):
    obj = cls(**kwargs)
    try:
        obj.check()
    except (ConfigError, WorkloadError) as exc:
        diags.append(f"{path}: {exc}")
        return None
    return obj


# -- sections -----------------------------------------------------------------

def _buckets(raw, diags) -> tuple[DurationBucket, ...] | None:
    if raw is None:
        return tuple(azure_buckets())
    if not isinstance(raw, list) or not raw:
        diags.append("workload.buckets: expected a non-empty list")
        return None
    out = []
    for i, b in enumerate(raw):
        p = f"workload.buckets[{i}]"
        if not isinstance(b, dict):
            diags.append(f"{p}: expected an object")
            continue
        _unknown(p, b, _BUCKET_KEYS, diags)
        lo, hi, prob, grp = b.get("lo_us"), b.get("hi_us"), b.get("probability"), b.get("group", i + 1)
        good = True
        if not _is_int(lo):
            diags.append(f"{p}.lo_us: bad value {lo!r}")
            good = False
        if hi is not None and not _is_int(hi):
            diags.append(f"{p}.hi_us: bad value {hi!r}")
            good = False
        if not _is_num(prob):
            diags.append(f"{p}.probability: bad value {prob!r}")
            good = False
        if not _is_int(grp):
            diags.append(f"{p}.group: bad value {grp!r}")
            good = False
        if good:
            out.append(DurationBucket(lo, hi, float(prob), grp))
    return tuple(out) if len(out) == len(raw) else None


def _iat(raw, base_dir: Path, diags) -> IatModel | None:
    if raw is None:
        return IatModel.poisson(100_000)
    if not isinstance(raw, dict):
        diags.append("workload.iat: expected an object")
        return None
    kind = raw.get("kind")
    if kind not in _IAT_KEYS:
        diags.append(f"workload.iat.kind: must be one of {sorted(_IAT_KEYS)}, got {kind!r}")
        return None
    _unknown("workload.iat", raw, _IAT_KEYS[kind], diags)
    if kind == "poisson":
        m = raw.get("mean_us", 100_000)
        if not _is_num(m):
            diags.append(f"workload.iat.mean_us: bad value {m!r}")
            return None
        model = IatModel.poisson(m)
    elif kind == "uniform":
        lo, hi = raw.get("lo_us"), raw.get("hi_us")
        if not (_is_num(lo) and _is_num(hi)):
            diags.append("workload.iat: uniform needs numeric lo_us and hi_us")
            return None
        model = IatModel.uniform(lo, hi)
    elif "path" in raw:
        try:
            model = load_trace(base_dir / raw["path"])
        except TraceError as exc:
            diags.append(f"workload.iat.path: {exc}")
            return None
    else:
        vals = raw.get("values")
        if not isinstance(vals, list) or not all(_is_num(v) for v in vals):
            diags.append("workload.iat: trace needs 'path' or a numeric 'values' list")
            return None
        model = IatModel.trace(vals)
    try:
        model.check()
    except WorkloadError as exc:
        diags.append(f"workload.iat: {exc}")
        return None
    return model


def _workload(raw, base_dir: Path, diags) -> tuple[WorkloadSpec | None, bool, BurstSpec | None]:
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        diags.append("workload: expected an object")
        return None, True, None
    _unknown("workload", raw, _WORKLOAD_KEYS, diags)
    n0 = len(diags)
    buckets = _buckets(raw.get("buckets"), diags)
    iat = _iat(raw.get("iat"), base_dir, diags)
    io_kw = _typed_fields("workload.io", IoProfile, raw.get("io", {}), diags)
    io = _build("workload.io", IoProfile, io_kw, diags) if io_kw is not None else None

    scalars = {}
    for key, default, check in (
        ("n_requests", 10_000, _is_int),
        ("cores", 12, _is_int),
        ("seed", 0, _is_int),
        ("cap_us", DEFAULT_CAP_US, _is_int),
        ("target_load", 1.0, _is_num),
    ):
        v = raw.get(key, default)
        if not check(v):
            diags.append(f"workload.{key}: bad value {v!r}")
        scalars[key] = v
    scale = raw.get("scale_to_load", True)
    if not isinstance(scale, bool):
        diags.append(f"workload.scale_to_load: bad value {scale!r}")

    bursts = None
    if raw.get("bursts") is not None:
        b = raw["bursts"]
        if not isinstance(b, dict):
            diags.append("workload.bursts: expected an object")
        else:
            _unknown("workload.bursts", b, _BURST_KEYS, diags)
            c, ln, cp = b.get("count"), b.get("length"), b.get("compress")
            if not (_is_int(c) and c >= 1):
                diags.append(f"workload.bursts.count: bad value {c!r}")
            elif not (_is_int(ln) and ln >= 1):
                diags.append(f"workload.bursts.length: bad value {ln!r}")
            elif not (_is_num(cp) and cp > 0):
                diags.append(f"workload.bursts.compress: bad value {cp!r}")
            else:
                bursts = BurstSpec(c, ln, float(cp))

    if len(diags) > n0 or buckets is None or iat is None or io is None:
        return None, scale, bursts
    spec = WorkloadSpec(
        buckets=buckets, iat=iat, io=io, n_requests=scalars["n_requests"],
        target_load=float(scalars["target_load"]), cores=scalars["cores"],
        seed=scalars["seed"], cap_us=scalars["cap_us"],
    )
    try:
        spec.check()
    except WorkloadError as exc:
        where = "workload.buckets" if "bucket" in str(exc) else "workload"
        diags.append(f"{where}: {exc}")
        return None, scale, bursts
    return spec, scale, bursts


def _policies(raw, pcfg_raw, sfs_raw, diags) -> tuple[list[PolicySpec], set[str]]:
    """Built specs plus every declared label (including ones that failed to build)."""
    base_p = _typed_fields("policy_config", PolicyConfig, pcfg_raw or {}, diags) or {}
    base_s = _typed_fields("sfs", SfsConfig, sfs_raw or {}, diags) or {}
    # shared sections are reported once here, not again for every policy using them
    _build("policy_config", PolicyConfig, base_p, diags)
    _build("sfs", SfsConfig, base_s, diags)
    if not isinstance(raw, list) or not raw:
        diags.append("policies: expected a non-empty list")
        return [], set()
    out, labels = [], set()
    for i, entry in enumerate(raw):
        p = f"policies[{i}]"
        if isinstance(entry, str):
            entry = {"name": entry}
        if not isinstance(entry, dict):
            diags.append(f"{p}: expected a name or an object")
            continue
        _unknown(p, entry, {"name", "label", "config", "sfs"}, diags)
        name = entry.get("name")
        if name not in POLICY_NAMES:
            diags.append(f"{p}.name: unknown policy {name!r} (choose from {', '.join(POLICY_NAMES)})")
            continue
        label = entry.get("label") or name
        if not isinstance(label, str):
            diags.append(f"{p}.label: bad value {label!r}")
            continue
        if label in labels:
            diags.append(f"{p}.label: duplicate label {label!r}")
            continue
        labels.add(label)
        pk = dict(base_p)
        pk.update(_typed_fields(f"{p}.config", PolicyConfig, entry.get("config", {}), diags) or {})
        sk = dict(base_s)
        sk.update(_typed_fields(f"{p}.sfs", SfsConfig, entry.get("sfs", {}), diags) or {})
        pc = _build(f"{p}.config", PolicyConfig, pk, diags if "config" in entry else [])
        sc = _build(f"{p}.sfs", SfsConfig, sk, diags if "sfs" in entry else [])
        if pc is not None and sc is not None:
            out.append(PolicySpec(name, pc, sc, label))
    return out, labels


def _parse(text: str, source: str) -> tuple[dict | None, list[str]]:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        return None, [f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}"]
    if not isinstance(raw, dict):
        return None, [f"{source}: top level must be an object"]
    return raw, []


def _assemble(
    raw: dict, base_dir: Path, loose_baseline: bool = False
) -> tuple[ScenarioConfig | None, list[str]]:
    diags: list[str] = []
    _unknown("", raw, _TOP_KEYS, diags)
    spec, scale, bursts = _workload(raw.get("workload"), base_dir, diags)
    policies, labels = _policies(raw.get("policies"), raw.get("policy_config"), raw.get("sfs"), diags)

    baseline = raw.get("baseline")
    if baseline is not None and baseline not in labels:
        if loose_baseline:
            baseline = None
        else:
            diags.append(f"baseline: {baseline!r} is not one of the configured policy labels")
    eng_raw = raw.get("engine", {})
    eng = _typed_fields("engine", EngineConfig, eng_raw, diags)
    if isinstance(eng_raw, dict):
        for k in set(eng_raw) - _ENGINE_KEYS:
            if k in {f.name for f in dataclasses.fields(EngineConfig)}:
                diags.append(f"engine.{k}: not settable from a config file")
    if eng and eng.get("switch_cost_us", 0) < 0:
        diags.append("engine.switch_cost_us: must be >= 0")
    out_dir = raw.get("output_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        diags.append(f"output_dir: bad value {out_dir!r}")
    formats = raw.get("formats", list(FORMATS))
    if not isinstance(formats, list) or not formats or any(f not in FORMATS for f in formats):
        diags.append(f"formats: expected a non-empty subset of {list(FORMATS)}")
    repeat = raw.get("repeat", 1)
    if not (_is_int(repeat) and repeat >= 1):
        diags.append(f"repeat: must be an integer >= 1, got {repeat!r}")
    if diags:
        return None, diags
    eng_kw = {k: v for k, v in (eng or {}).items() if k in _ENGINE_KEYS}
    return ScenarioConfig(
        workload=spec,
        policies=policies,
        scale=scale,
        bursts=bursts,
        baseline=baseline,
        engine=EngineConfig(**eng_kw),
        output_dir=Path(out_dir),
        formats=tuple(formats),
        repeat=repeat,
    ), []


def validate(path: str | Path) -> list[str]:
    """All diagnostics for the config file at ``path``; empty means valid."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        return [f"{path}: {exc.strerror or exc}"]
    raw, diags = _parse(text, str(path))
    if raw is None:
        return diags
    return _assemble(raw, path.parent)[1]


def load_scenario(
    path: str | Path, overrides: dict | None = None, loose_baseline: bool = False
) -> ScenarioConfig:
    """Parse, apply overrides (dotted keys such as ``workload.seed``), validate.

    With ``loose_baseline`` a baseline that is no longer among the policies
    (after overriding the policy list) is dropped instead of rejected.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError([f"{path}: {exc.strerror or exc}"]) from None
    raw, diags = _parse(text, str(path))
    if raw is None:
        raise ScenarioError(diags)
    for key, value in (overrides or {}).items():
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ScenarioError([f"{key}: cannot override inside a non-object"])
        node[parts[-1]] = value
    cfg, diags = _assemble(raw, path.parent, loose_baseline)
    if diags:
        raise ScenarioError(diags)
    return cfg


def standard_scenario_path() -> Path:
    """The bundled standard scenario: 10,000 requests on 12 cores at 100% load."""
    return Path(__file__).parent / "data" / "standard_scenario.json"
