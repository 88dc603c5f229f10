"""YAML scenario files: parsing, validation, presets and sweep expansion.

Validation walks the composed YAML node tree so every error can point at
the offending line.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional

import yaml

from .core import DeviceClass
from .engine import GridPoint, Scenario
from .errors import ScenarioError
from .schemes import SCHEME_CONFIGS, AlohaConfig, CrbConfig
from .traffic import UNIFORM_BURST, TrafficModel

PRESETS = ("fig4", "fig5", "earthquake")


@dataclass(frozen=True)
class Variant:
    """One curve of a sweep: a scheme and, optionally, its own PRACH index."""

    label: str
    scheme: Any
    prach_config_index: Optional[int] = None


@dataclass(frozen=True)
class Sweep:
    n_devices: tuple = ()
    m: tuple = ()
    prach_config_index: tuple = ()


@dataclass(frozen=True)
class ScenarioFile:
    base: Scenario
    variants: tuple = ()
    sweep: Sweep = field(default_factory=Sweep)
    traces: bool = False

    def effective_variants(self) -> tuple:
        if self.variants:
            return self.variants
        return (Variant(self.base.scheme.kind, self.base.scheme),)

    def grid(self) -> list[GridPoint]:
        """Variants x PRACH indices x m values (CRB only) x device counts."""
        points = []
        for var in self.effective_variants():
            pcis = self.sweep.prach_config_index or (
                var.prach_config_index if var.prach_config_index is not None else self.base.prach_config_index,)
            is_crb = isinstance(var.scheme, CrbConfig)
            ms = self.sweep.m if (is_crb and self.sweep.m) else (var.scheme.fixed_m if is_crb else None,)
            counts = self.sweep.n_devices or (None,)
            for pci in pcis:
                for m in ms:
                    scheme = replace(var.scheme, fixed_m=m) if is_crb else var.scheme
                    for n in counts:
                        traffic = self.base.traffic if n is None else replace(self.base.traffic, n_devices=n)
                        sc = replace(self.base, traffic=traffic, scheme=scheme, prach_config_index=pci,
                                     name=var.label)
                        params = (("variant", var.label), ("prach_config_index", pci),
                                  ("m", m), ("n_devices", traffic.n_devices))
                        points.append(GridPoint(len(points), var.label, sc, params))
        return points


# ---- schema -------------------------------------------------------------

_INT, _NUM, _STR, _BOOL = "int", "number", "string", "bool"
_OPT_INT = "int or null"
_TOP_SCALARS = {
    "name": _STR, "seed": _INT, "repetitions": _INT, "horizon_ms": _NUM,
    "retransmission_cap": _OPT_INT, "prach_config_index": _INT, "mtc_preambles": _INT, "n_cf": _INT,
}
_TOP_KEYS = set(_TOP_SCALARS) | {"traffic", "scheme", "variants", "sweep", "output"}
_TRAFFIC_TYPES = {
    "kind": _STR, "n_devices": _INT, "window_ms": _NUM, "density_per_km2": _NUM, "cell_radius_km": _NUM,
    "wave_speed_km_s": _NUM, "rate_per_s": _NUM, "horizon_ms": _NUM, "device_class": _STR,
    "htc_fraction": _NUM,
}
_SWEEP_KEYS = {"n_devices", "m", "prach_config_index"}
_OUTPUT_TYPES = {"traces": _BOOL}
_VARIANT_TYPES = {"label": _STR, "prach_config_index": _INT}


def _type_of(default) -> str:
    if isinstance(default, bool):
        return _BOOL
    if isinstance(default, int):
        return _INT
    if isinstance(default, float):
        return _NUM
    return _OPT_INT


def _scheme_types(cls) -> dict:
    return {f.name: _type_of(f.default) for f in fields(cls)}


class _Reader:
    def __init__(self, path):
        self.path = path
        self._constructor = yaml.constructor.SafeConstructor()

    def fail(self, node, message):
        line = node.start_mark.line + 1 if node is not None else None
        raise ScenarioError(message, path=self.path, line=line)

    def value(self, node):
        return self._constructor.construct_object(node, deep=True)

    def mapping(self, node, allowed, where) -> dict:
        """``{key: (key_node, value_node)}`` after rejecting unknown keys."""
        if not isinstance(node, yaml.MappingNode):
            self.fail(node, f"{where} must be a mapping")
        out = {}
        for key_node, value_node in node.value:
            key = self.value(key_node)
            if key not in allowed:
                self.fail(key_node, f"unknown key {key!r} in {where}; allowed: {', '.join(sorted(allowed))}")
            if key in out:
                self.fail(key_node, f"duplicate key {key!r} in {where}")
            out[key] = (key_node, value_node)
        return out

    def scalar(self, node, kind, key):
        v = self.value(node)
        ok = {
            _INT: isinstance(v, int) and not isinstance(v, bool),
            _NUM: isinstance(v, (int, float)) and not isinstance(v, bool),
            _STR: isinstance(v, str),
            _BOOL: isinstance(v, bool),
            _OPT_INT: v is None or (isinstance(v, int) and not isinstance(v, bool)),
        }[kind]
        if not ok:
            self.fail(node, f"{key} must be {kind}, got {v!r}")
        return float(v) if kind == _NUM else v

    def typed(self, node, types, where) -> dict:
        items = self.mapping(node, types, where)
        return {k: self.scalar(vn, types[k], k) for k, (_, vn) in items.items()}

    def int_list(self, node, key) -> tuple:
        if not isinstance(node, yaml.SequenceNode) or not node.value:
            self.fail(node, f"sweep.{key} must be a non-empty list")
        return tuple(self.scalar(item, _INT, f"sweep.{key} entry") for item in node.value)

    def build(self, node, factory, where, **kwargs):
        try:
            obj = factory(**kwargs)
            if hasattr(obj, "validate"):
                obj.validate()
            return obj
        except (ValueError, TypeError) as exc:
            self.fail(node, f"invalid {where}: {exc}")


def _parse_scheme(r: _Reader, node, where):
    if not isinstance(node, yaml.MappingNode):
        r.fail(node, f"{where} must be a mapping")
    kind_node = next((vn for kn, vn in node.value if r.value(kn) == "kind"), None)
    if kind_node is None:
        r.fail(node, f"{where} needs a 'kind' ({', '.join(SCHEME_CONFIGS)})")
    kind = r.scalar(kind_node, _STR, "kind")
    if kind not in SCHEME_CONFIGS:
        r.fail(kind_node, f"unknown scheme kind {kind!r}; expected one of {', '.join(SCHEME_CONFIGS)}")
    cls = SCHEME_CONFIGS[kind]
    types = _scheme_types(cls)
    kwargs = r.typed(node, {**types, "kind": _STR}, f"{where} ({kind})")
    kwargs.pop("kind")
    return r.build(node, cls, f"{kind} config", **kwargs)


def parse_scenario_file(text: str, path: str = "<scenario>") -> ScenarioFile:
    r = _Reader(path)
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", path=path,
                            line=mark.line + 1 if mark else None) from None
    if root is None:
        raise ScenarioError("scenario file is empty", path=path)
    items = r.mapping(root, _TOP_KEYS, "scenario")
    if "traffic" not in items:
        r.fail(root, "missing required key 'traffic'")

    top = {k: r.scalar(vn, _TOP_SCALARS[k], k) for k, (_, vn) in items.items() if k in _TOP_SCALARS}

    traffic_node = items["traffic"][1]
    traffic_kw = r.typed(traffic_node, _TRAFFIC_TYPES, "traffic")
    if "device_class" in traffic_kw:
        try:
            traffic_kw["device_class"] = DeviceClass(traffic_kw["device_class"])
        except ValueError:
            r.fail(traffic_node, f"device_class must be one of {[c.value for c in DeviceClass]}")
    traffic = r.build(traffic_node, TrafficModel, "traffic", **traffic_kw)

    scheme = _parse_scheme(r, items["scheme"][1], "scheme") if "scheme" in items else AlohaConfig()

    variants = []
    if "variants" in items:
        vnode = items["variants"][1]
        if not isinstance(vnode, yaml.SequenceNode) or not vnode.value:
            r.fail(vnode, "variants must be a non-empty list")
        labels = set()
        for entry in vnode.value:
            vitems = r.mapping(entry, set(_VARIANT_TYPES) | {"scheme"}, "variant")
            for required in ("label", "scheme"):
                if required not in vitems:
                    r.fail(entry, f"variant missing required key {required!r}")
            label = r.scalar(vitems["label"][1], _STR, "label")
            if label in labels:
                r.fail(vitems["label"][1], f"duplicate variant label {label!r}")
            labels.add(label)
            pci = r.scalar(vitems["prach_config_index"][1], _INT, "prach_config_index") \
                if "prach_config_index" in vitems else None
            variants.append(Variant(label, _parse_scheme(r, vitems["scheme"][1], f"variant {label} scheme"), pci))

    sweep = Sweep()
    if "sweep" in items:
        snode = items["sweep"][1]
        sitems = r.mapping(snode, _SWEEP_KEYS, "sweep")
        sweep = Sweep(**{k: r.int_list(vn, k) for k, (_, vn) in sitems.items()})
        if sweep.n_devices and traffic.kind != UNIFORM_BURST:
            r.fail(sitems["n_devices"][1], f"sweep.n_devices needs uniform_burst traffic, not {traffic.kind}")

    traces = False
    if "output" in items:
        traces = r.typed(items["output"][1], _OUTPUT_TYPES, "output").get("traces", False)

    base = Scenario(
        traffic=traffic,
        scheme=scheme,
        prach_config_index=top.get("prach_config_index", 6),
        retransmission_cap=top.get("retransmission_cap", 10),
        seed=top.get("seed", 0),
        horizon_ms=top.get("horizon_ms", 60_000.0),
        n_repetitions=top.get("repetitions", 1),
        mtc_preambles=top.get("mtc_preambles", 30),
        n_cf=top.get("n_cf", 10),
        name=top.get("name", "scenario"),
    )
    sf = ScenarioFile(base, tuple(variants), sweep, traces)
    for point in sf.grid():
        try:
            point.scenario.validate()
        except ValueError as exc:
            r.fail(root, f"grid point {point.index} ({point.label}): {exc}")
    return sf


def load_scenario_file(path) -> ScenarioFile:
    path = str(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc.strerror}", path=path) from None
    return parse_scenario_file(text, path)


# ---- serialisation ------------------------------------------------------

def _scheme_dict(cfg) -> dict:
    out = {"kind": cfg.kind}
    out.update(dataclasses.asdict(cfg))
    return out


def _traffic_dict(tm: TrafficModel) -> dict:
    out = dataclasses.asdict(tm)
    out["device_class"] = tm.device_class.value
    return out


def dump_scenario_file(sf: ScenarioFile) -> str:
    b = sf.base
    doc = {
        "name": b.name,
        "seed": b.seed,
        "repetitions": b.n_repetitions,
        "horizon_ms": b.horizon_ms,
        "retransmission_cap": b.retransmission_cap,
        "prach_config_index": b.prach_config_index,
        "mtc_preambles": b.mtc_preambles,
        "n_cf": b.n_cf,
        "traffic": _traffic_dict(b.traffic),
        "scheme": _scheme_dict(b.scheme),
    }
    if sf.variants:
        doc["variants"] = []
        for v in sf.variants:
            entry = {"label": v.label, "scheme": _scheme_dict(v.scheme)}
            if v.prach_config_index is not None:
                entry["prach_config_index"] = v.prach_config_index
            doc["variants"].append(entry)
    sweep = {k: list(getattr(sf.sweep, k)) for k in ("n_devices", "m", "prach_config_index") if getattr(sf.sweep, k)}
    if sweep:
        doc["sweep"] = sweep
    doc["output"] = {"traces": sf.traces}
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


# ---- presets ------------------------------------------------------------

FIG_LOADS = tuple(range(500, 4001, 500))
FIG5_TUNED_M = 4


def preset(name: str) -> ScenarioFile:
    if name == "fig4":
        base = Scenario(TrafficModel(UNIFORM_BURST, 500), AlohaConfig(), prach_config_index=14,
                        retransmission_cap=None, seed=4, n_repetitions=20, name="fig4")
        variants = (
            Variant("aloha-10slots", AlohaConfig(), 14),
            Variant("crb-2slots", CrbConfig(freeze_slots=True), 6),
        )
        return ScenarioFile(base, variants, Sweep(n_devices=FIG_LOADS))
    if name == "fig5":
        base = Scenario(TrafficModel(UNIFORM_BURST, 500), AlohaConfig(), prach_config_index=6,
                        retransmission_cap=10, seed=5, n_repetitions=20, mtc_preambles=30, name="fig5")
        variants = (
            Variant("aloha-2slots", AlohaConfig(), 6),
            Variant("aloha-10slots", AlohaConfig(), 14),
            Variant("crb-m2", CrbConfig(fixed_m=2), 6),
            Variant(f"crb-m{FIG5_TUNED_M}", CrbConfig(fixed_m=FIG5_TUNED_M), 6),
        )
        return ScenarioFile(base, variants, Sweep(n_devices=FIG_LOADS))
    if name == "earthquake":
        traffic = TrafficModel("wavefront", density_per_km2=60.0, cell_radius_km=2.0, wave_speed_km_s=10.0)
        base = Scenario(traffic, AlohaConfig(), prach_config_index=6, retransmission_cap=10, seed=1,
                        n_repetitions=20, name="earthquake")
        return ScenarioFile(base)
    raise ScenarioError(f"unknown preset {name!r}; available presets: {', '.join(PRESETS)}")
