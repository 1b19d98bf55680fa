"""INI-style configuration for the pipeline driver and for synthetic scenes.

Relative paths are resolved against the directory of the config file.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .evaluation import DEFAULT_PENALTY_CAP, OutlierRule
from .exceptions import ConfigError, SceneError
from .geometry import DEFAULT_DEPTH_CAP, CameraIntrinsics
from .interpolation import InterpolatorConfig
from .synthetic import PlaneLayer, SynthScene

_INPUT_KEYS = ("depth_0", "depth_1", "disp_0", "disp_1", "flow", "image", "calibration")
_GT_KEYS = ("disp_0", "disp_1", "flow", "obj_map")


@dataclass
class PipelineConfig:
    inputs: dict[str, Path] = field(default_factory=dict)
    ground_truth: dict[str, Path] = field(default_factory=dict)
    output: Path = Path("out")
    depth_cap: float = DEFAULT_DEPTH_CAP
    jobs: int = 1
    morphology_iterations: int = 2
    morphology: str = "combined"
    interpolator: InterpolatorConfig = field(default_factory=InterpolatorConfig)
    rule: OutlierRule = OutlierRule.KITTI
    masked: bool = False
    domain: str = "joint"
    penalty_cap: float = DEFAULT_PENALTY_CAP
    thresholds: dict[str, float] = field(default_factory=dict)

    @property
    def geometry(self) -> str:
        return "depth" if "depth_0" in self.inputs else "disparity"

    def validate(self) -> None:
        """Check that the inputs form one consistent set and that files exist."""
        has_depth = {"depth_0", "depth_1"} & self.inputs.keys()
        has_disp = {"disp_0", "disp_1"} & self.inputs.keys()
        if has_depth and has_disp:
            raise ConfigError("give either depth_0/depth_1 or disp_0/disp_1, not both")
        pair = ("depth_0", "depth_1") if has_depth else ("disp_0", "disp_1")
        required = [*pair, "flow", "image"]
        if has_depth:
            required.append("calibration")
        missing = [k for k in required if k not in self.inputs]
        if missing:
            raise ConfigError(f"missing input(s): {', '.join(missing)}")
        gt_missing = [k for k in ("disp_0", "disp_1", "flow") if k not in self.ground_truth]
        if self.ground_truth and gt_missing:
            raise ConfigError(f"incomplete ground truth, missing: {', '.join(gt_missing)}")
        for section, paths in (("inputs", self.inputs), ("ground_truth", self.ground_truth)):
            for key, path in paths.items():
                if not Path(path).is_file():
                    raise ConfigError(f"{section}.{key}: file not found: {path}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.morphology not in ("combined", "occlusion"):
            raise ConfigError(f"morphology must be 'combined' or 'occlusion', got {self.morphology!r}")
        if self.domain not in ("joint", "component"):
            raise ConfigError(f"domain must be 'joint' or 'component', got {self.domain!r}")


def _parser(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep case, threshold keys are like SF.all.koe
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return parser


def _get(section, key, conv, default):
    if key not in section:
        return default
    raw = section[key]
    try:
        if conv is bool:
            return section.getboolean(key)
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: invalid value {raw!r}") from None


def load_pipeline_config(path) -> PipelineConfig:
    path = Path(path)
    base = path.parent
    parser = _parser(path)
    cfg = PipelineConfig()

    def resolve(value: str) -> Path:
        p = Path(value).expanduser()
        return p if p.is_absolute() else base / p

    if parser.has_section("inputs"):
        for key, value in parser["inputs"].items():
            if key not in _INPUT_KEYS:
                raise ConfigError(f"[inputs] unknown key {key!r}")
            cfg.inputs[key] = resolve(value)
    if parser.has_section("ground_truth"):
        for key, value in parser["ground_truth"].items():
            if key not in _GT_KEYS:
                raise ConfigError(f"[ground_truth] unknown key {key!r}")
            cfg.ground_truth[key] = resolve(value)
    if parser.has_section("pipeline"):
        sec = parser["pipeline"]
        if "output" in sec:
            cfg.output = resolve(sec["output"])
        cfg.depth_cap = _get(sec, "depth_cap", float, cfg.depth_cap)
        cfg.jobs = _get(sec, "jobs", int, cfg.jobs)
        cfg.morphology_iterations = _get(sec, "morphology_iterations", int, cfg.morphology_iterations)
        cfg.morphology = _get(sec, "morphology", str, cfg.morphology)
    if parser.has_section("interpolation"):
        sec = parser["interpolation"]
        kwargs = {}
        for fld in dataclasses.fields(InterpolatorConfig):
            conv = {"float": float, "int": int, "str": str, "bool": bool}[fld.type]
            if fld.name in sec:
                kwargs[fld.name] = _get(sec, fld.name, conv, None)
        unknown = set(sec) - {f.name for f in dataclasses.fields(InterpolatorConfig)}
        if unknown:
            raise ConfigError(f"[interpolation] unknown key(s): {', '.join(sorted(unknown))}")
        try:
            cfg.interpolator = InterpolatorConfig(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"[interpolation] {exc}") from None
    if parser.has_section("evaluation"):
        sec = parser["evaluation"]
        try:
            cfg.rule = OutlierRule(_get(sec, "rule", str, cfg.rule.value))
        except ValueError:
            raise ConfigError(f"[evaluation] rule: unknown rule {sec['rule']!r}") from None
        cfg.masked = _get(sec, "masked", bool, cfg.masked)
        cfg.domain = _get(sec, "domain", str, cfg.domain)
        cfg.penalty_cap = _get(sec, "penalty_cap", float, cfg.penalty_cap)
    if parser.has_section("thresholds"):
        sec = parser["thresholds"]
        cfg.thresholds = {k: _get(sec, k, float, None) for k in sec}
    return cfg


def _vector(section, key, n, default):
    if key not in section:
        return default
    try:
        values = tuple(float(v) for v in section[key].replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: expected {n} numbers") from None
    if len(values) != n:
        raise ConfigError(f"[{section.name}] {key}: expected {n} numbers, got {len(values)}")
    return values


def load_scene(path) -> SynthScene:
    """Scene from ``[scene]`` plus one ``[layer.<name>]`` section per layer.

    ``[scene] layers`` lists the layer names front to back; the last one is
    the unbounded background.
    """
    parser = _parser(path)
    if not parser.has_section("scene"):
        raise ConfigError(f"{path}: missing [scene] section")
    sec = parser["scene"]
    names = [n.strip() for n in sec.get("layers", "").replace(",", " ").split() if n.strip()]
    layers = []
    for name in names:
        key = f"layer.{name}"
        if not parser.has_section(key):
            raise ConfigError(f"{path}: layer {name!r} has no [{key}] section")
        ls = parser[key]
        extent = _vector(ls, "extent", 4, None)
        try:
            layers.append(
                PlaneLayer(
                    normal=_vector(ls, "normal", 3, (0.0, 0.0, 1.0)),
                    distance=_get(ls, "distance", float, 10.0),
                    rotation=_vector(ls, "rotation", 3, (0.0, 0.0, 0.0)),
                    translation=_vector(ls, "translation", 3, (0.0, 0.0, 0.0)),
                    pivot=_vector(ls, "pivot", 3, (0.0, 0.0, 0.0)),
                    extent=extent,
                    color=_vector(ls, "color", 3, (0.5, 0.5, 0.5)),
                    texture_scale=_get(ls, "texture_scale", float, 0.5),
                    texture_amplitude=_get(ls, "texture_amplitude", float, 0.25),
                    name=name,
                    is_object=_get(ls, "object", bool, False),
                )
            )
        except SceneError as exc:
            raise ConfigError(str(exc)) from None
    try:
        camera = CameraIntrinsics(
            _get(sec, "focal_length", float, 721.5377), _get(sec, "baseline", float, 0.5327)
        )
        return SynthScene(
            camera,
            _get(sec, "width", int, 1242),
            _get(sec, "height", int, 375),
            tuple(layers),
            _get(sec, "seed", int, 0),
        )
    except (SceneError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
