"""
Configuración de corridas: archivo INI con secciones [data] [layout] [priors] [chain]
[fine_tune] [run] [evaluation], validado contra SCHEMA antes de cualquier cómputo.

Los valores por defecto reproducen el procedimiento de análisis de referencia:
ξ_g = ξ_r = (1/3, 3), T = 10000, T_b = 5000, T' = 10, R = 10, 5×5 → 9×9.
"""

import configparser
import hashlib
import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, ClassVar, Dict, List, Optional, Tuple, Union

from dotenv import load_dotenv

from data_model.elements import BUNDLED_ELEMENTS_CSV, DEFAULT_ATOMIC_NUMBER_CUTOFF, MISSING_POLICIES
from evaluation.forest import ForestParams
from gp_kernels.kernels import StationaryKernelParams
from layouts.layouts import LAYOUT_KINDS, LayoutSpec
from sampler.exceptions import SamplerError
from sampler.state import DEFAULT_XI, ChainConfig, Priors

load_dotenv()

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "configs"
DEFAULT_OUTPUT = "runs/ptg"


class ConfigError(Exception):
    """Archivo de configuración inválido: sección, clave o valor fuera del esquema."""


# ---------------- conversores ----------------

def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "yes", "1", "on"):
        return True
    if value in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"booleano inválido '{text}'")


def _parse_int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _parse_float_pair(text: str) -> Tuple[float, float]:
    values = tuple(float(part) for part in text.split(","))
    if len(values) != 2:
        raise ValueError(f"se esperaban dos números, se recibió '{text}'")
    return values


def _optional(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    return lambda text: None if not text.strip() else parse(text.strip())


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class SchemaEntry:
    type_name: str
    parse: Callable[[str], Any]
    description: str


TYPES: Dict[str, Callable[[str], Any]] = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": lambda text: text.strip(),
    "int_list": _parse_int_list,
    "float_pair": _parse_float_pair,
    "optional_int": _optional(int),
    "optional_float": _optional(float),
    "optional_str": _optional(str),
    "optional_bool": _optional(_parse_bool),
}


def _entry(type_name: str, description: str) -> SchemaEntry:
    return SchemaEntry(type_name, TYPES[type_name], description)


# ---------------- secciones ----------------

@dataclass(frozen=True)
class DataSettings:
    elements: Optional[str] = None
    compounds: Optional[str] = None
    cutoff: int = DEFAULT_ATOMIC_NUMBER_CUTOFF
    missing: str = "drop"
    unit: Optional[str] = None
    atomic_number_feature: Optional[bool] = None

    SCHEMA: ClassVar[Dict[str, SchemaEntry]] = {
        "elements": _entry("optional_str", "CSV de elementos; vacío usa el conjunto incluido H–Xe"),
        "compounds": _entry("optional_str", "CSV formula,target para la evaluación"),
        "cutoff": _entry("int", "número atómico máximo"),
        "missing": _entry("str", "columnas con faltantes: drop | error"),
        "unit": _entry("optional_str", "unidad del objetivo; vacío la toma del encabezado # unit:"),
        "atomic_number_feature": _entry(
            "optional_bool", "número atómico como característica; vacío: solo con el conjunto incluido"
        ),
    }

    @property
    def elements_path(self) -> Path:
        return Path(self.elements) if self.elements else BUNDLED_ELEMENTS_CSV


@dataclass(frozen=True)
class LayoutSettings:
    kind: str = "square"
    coarse_side: int = 5
    coarse_rings: Tuple[int, ...] = (1, 4, 8, 12)
    fine_rings: Tuple[int, ...] = (1, 4, 8, 12, 16, 20, 24)
    base_radius: float = 1.0
    coarse_path: Optional[str] = None
    fine_path: Optional[str] = None
    bounds: Tuple[float, float] = (-1.0, 1.0)

    SCHEMA: ClassVar[Dict[str, SchemaEntry]] = {
        "kind": _entry("str", "square | cone | custom"),
        "coarse_side": _entry("int", "lado m de la cuadrícula gruesa; la fina tiene 2m−1"),
        "coarse_rings": _entry("int_list", "nodos por anillo del cono grueso, del vértice a la base"),
        "fine_rings": _entry("int_list", "nodos por anillo del cono fino"),
        "base_radius": _entry("float", "radio de la base del cono"),
        "coarse_path": _entry("optional_str", "CSV de la disposición gruesa personalizada"),
        "fine_path": _entry("optional_str", "CSV de la disposición fina personalizada"),
        "bounds": _entry("float_pair", "límites del espacio latente en cada eje"),
    }

    def spec(self) -> LayoutSpec:
        return LayoutSpec(
            kind=self.kind,
            coarse_side=self.coarse_side,
            coarse_rings=self.coarse_rings,
            fine_rings=self.fine_rings,
            base_radius=self.base_radius,
            coarse_path=self.coarse_path,
            fine_path=self.fine_path,
            bounds=self.bounds,
        )


@dataclass(frozen=True)
class PriorSettings:
    xi_g: Tuple[float, float] = DEFAULT_XI
    xi_r: Tuple[float, float] = DEFAULT_XI
    beta_shape: float = 2.0
    beta_rate: Optional[float] = None
    squared_lengthscale: bool = False

    SCHEMA: ClassVar[Dict[str, SchemaEntry]] = {
        "xi_g": _entry("float_pair", "(ν, l) del kernel de g"),
        "xi_r": _entry("float_pair", "(ν, l) del kernel de r"),
        "beta_shape": _entry("float", "forma d_β0 del prior Gamma de β"),
        "beta_rate": _entry("optional_float", "tasa s_β0; vacío usa 2·D"),
        "squared_lengthscale": _entry("bool", "exponente −d²/(2l²) en lugar de −d²/(2l)"),
    }

    def priors_for(self, n_features: int) -> Priors:
        rate = self.beta_rate if self.beta_rate is not None else 2.0 * n_features
        return Priors(
            xi_g=StationaryKernelParams(*self.xi_g, squared_lengthscale=self.squared_lengthscale),
            xi_r=StationaryKernelParams(*self.xi_r, squared_lengthscale=self.squared_lengthscale),
            beta_shape=self.beta_shape,
            beta_rate=rate,
        )


@dataclass(frozen=True)
class ChainSettings:
    iterations: int = 10_000
    burn_in: int = 5_000
    stride: int = 5
    log_every: int = 500
    checkpoint_every: int = 1_000
    analytic_gradient: bool = True

    SCHEMA: ClassVar[Dict[str, SchemaEntry]] = {
        "iterations": _entry("int", "T, barridos totales de la cadena gruesa"),
        "burn_in": _entry("int", "T_b, barridos descartados"),
        "stride": _entry("int", "adelgazamiento de los estados promediados"),
        "log_every": _entry("int", "progreso cada n iteraciones; 0 lo desactiva"),
        "checkpoint_every": _entry("int", "checkpoint cada n iteraciones; 0 solo al final"),
        "analytic_gradient": _entry("bool", "gradiente analítico de s(r); false usa diferencias finitas"),
    }

    def chain_config(self, seed: int = 0) -> ChainConfig:
        return ChainConfig(
            iterations=self.iterations,
            burn_in=self.burn_in,
            seed=seed,
            stride=self.stride,
            log_every=self.log_every,
            checkpoint_every=self.checkpoint_every,
            analytic_gradient=self.analytic_gradient,
        )


@dataclass(frozen=True)
class FineTuneSettings:
    iterations: int = 10

    SCHEMA: ClassVar[Dict[str, SchemaEntry]] = {
        "iterations": _entry("int", "T', iteraciones de ajuste fino"),
    }


@dataclass(frozen=True)
class RunSettings:
    restarts: int = 10
    seed: int = 0
    workers: int = 1
    output: str = DEFAULT_OUTPUT
    trace_line: bool = False

    SCHEMA: ClassVar[Dict[str, SchemaEntry]] = {
        "restarts": _entry("int", "R, reinicios independientes"),
        "seed": _entry("int", "semilla base; cada reinicio deriva la suya con SeedSequence"),
        "workers": _entry("int", "procesos en paralelo (PTG_WORKERS lo reemplaza)"),
        "output": _entry("str", "directorio de la corrida"),
        "trace_line": _entry("bool", "dibujar la línea por número atómico en los SVG"),
    }


@dataclass(frozen=True)
class EvaluationSettings:
    folds: int = 5
    repeats: int = 5
    n_trees: int = 100
    min_leaf: int = 5
    max_depth: Optional[int] = None
    max_features: Optional[int] = None
    seed: int = 0
    low_threshold: float = 0.3
    margin: float = 1.0

    SCHEMA: ClassVar[Dict[str, SchemaEntry]] = {
        "folds": _entry("int", "pliegues de la validación cruzada"),
        "repeats": _entry("int", "repeticiones independientes"),
        "n_trees": _entry("int", "árboles del bosque"),
        "min_leaf": _entry("int", "muestras mínimas por hoja"),
        "max_depth": _entry("optional_int", "profundidad máxima; vacío sin límite"),
        "max_features": _entry("optional_int", "variables por división; vacío ceil(L/3)"),
        "seed": _entry("int", "semilla de pliegues y bosques"),
        "low_threshold": _entry("float", "error máximo del descriptor favorecido en el enriquecimiento"),
        "margin": _entry("float", "ventaja mínima sobre el otro descriptor"),
    }

    def forest_params(self) -> ForestParams:
        return ForestParams(n_trees=self.n_trees, min_leaf=self.min_leaf,
                            max_depth=self.max_depth, max_features=self.max_features)

    @property
    def thresholds(self) -> Tuple[float, float]:
        return self.low_threshold, self.margin


SECTIONS: Dict[str, type] = {
    "data": DataSettings,
    "layout": LayoutSettings,
    "priors": PriorSettings,
    "chain": ChainSettings,
    "fine_tune": FineTuneSettings,
    "run": RunSettings,
    "evaluation": EvaluationSettings,
}


@dataclass(frozen=True)
class RunConfig:
    data: DataSettings = DataSettings()
    layout: LayoutSettings = LayoutSettings()
    priors: PriorSettings = PriorSettings()
    chain: ChainSettings = ChainSettings()
    fine_tune: FineTuneSettings = FineTuneSettings()
    run: RunSettings = RunSettings()
    evaluation: EvaluationSettings = EvaluationSettings()

    SCHEMA: ClassVar[Dict[str, Dict[str, SchemaEntry]]] = {name: cls.SCHEMA for name, cls in SECTIONS.items()}

    def __post_init__(self):
        _validate(self)

    def with_overrides(
        self,
        seed: Optional[int] = None,
        restarts: Optional[int] = None,
        iterations: Optional[int] = None,
        output: Optional[str] = None,
        workers: Optional[int] = None,
    ) -> "RunConfig":
        """Aplica los parámetros de línea de comandos; con --iters el burn-in se limita a T/2."""
        run = replace(
            self.run,
            seed=self.run.seed if seed is None else seed,
            restarts=self.run.restarts if restarts is None else restarts,
            output=self.run.output if output is None else output,
            workers=self.run.workers if workers is None else workers,
        )
        chain = self.chain
        if iterations is not None:
            chain = replace(chain, iterations=iterations, burn_in=min(chain.burn_in, iterations // 2))
        return replace(self, run=run, chain=chain)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {
            name: {f.name: getattr(getattr(self, name), f.name) for f in fields(getattr(self, name))}
            for name in SECTIONS
        }


def _validate(config: RunConfig) -> None:
    problems: List[str] = []
    if config.data.missing not in MISSING_POLICIES:
        problems.append(f"data.missing debe ser uno de {MISSING_POLICIES}")
    if config.data.cutoff < 1:
        problems.append("data.cutoff debe ser >= 1")
    if config.layout.kind not in LAYOUT_KINDS:
        problems.append(f"layout.kind debe ser uno de {LAYOUT_KINDS}")
    if config.layout.coarse_side < 2:
        problems.append("layout.coarse_side debe ser >= 2")
    if any(n < 1 for n in config.layout.coarse_rings + config.layout.fine_rings):
        problems.append("los anillos del cono requieren al menos un nodo")
    if config.layout.bounds[0] >= config.layout.bounds[1]:
        problems.append("layout.bounds requiere mínimo < máximo")
    if min(config.priors.xi_g + config.priors.xi_r) <= 0:
        problems.append("ξ_g y ξ_r deben ser positivos")
    if config.priors.beta_shape <= 0 or (config.priors.beta_rate is not None and config.priors.beta_rate <= 0):
        problems.append("el prior de β requiere forma y tasa positivas")
    try:
        config.chain.chain_config()
    except SamplerError as exc:
        problems.append(str(exc))
    if config.chain.log_every < 0 or config.chain.checkpoint_every < 0:
        problems.append("chain.log_every y chain.checkpoint_every deben ser >= 0")
    if config.fine_tune.iterations < 0:
        problems.append("fine_tune.iterations debe ser >= 0")
    if config.run.restarts < 1 or config.run.workers < 1:
        problems.append("run.restarts y run.workers deben ser >= 1")
    if config.evaluation.folds < 2 or config.evaluation.repeats < 1:
        problems.append("evaluation requiere folds >= 2 y repeats >= 1")
    if config.evaluation.n_trees < 1 or config.evaluation.min_leaf < 1:
        problems.append("evaluation requiere n_trees >= 1 y min_leaf >= 1")
    if problems:
        raise ConfigError("Configuración inválida: " + "; ".join(problems))


def parse_config(text: str, source: str = "<texto>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"No se pudo leer {source}: {exc}") from exc

    unknown_sections = [s for s in parser.sections() if s not in SECTIONS]
    if unknown_sections:
        raise ConfigError(f"Secciones desconocidas en {source}: {', '.join(unknown_sections)}")

    sections: Dict[str, Any] = {}
    for name, cls in SECTIONS.items():
        values: Dict[str, Any] = {}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                entry = cls.SCHEMA.get(key)
                if entry is None:
                    raise ConfigError(f"Clave desconocida [{name}] {key}. Válidas: {', '.join(cls.SCHEMA)}")
                try:
                    values[key] = entry.parse(raw)
                except ValueError as exc:
                    raise ConfigError(f"[{name}] {key} = '{raw}': se esperaba {entry.type_name} ({exc})") from exc
        sections[name] = cls(**values)
    return RunConfig(**sections)


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"No existe el archivo de configuración: {path}")
    config = parse_config(path.read_text(encoding="utf-8"), source=str(path))
    logger.info(f"Configuración cargada desde {path.name} (hash {config_hash(config)[:12]})")
    return config


def serialize_config(config: RunConfig) -> str:
    """Texto canónico: todas las secciones y claves en el orden del esquema."""
    lines: List[str] = []
    for name, cls in SECTIONS.items():
        section = getattr(config, name)
        lines.append(f"[{name}]")
        for key in cls.SCHEMA:
            value = _format(getattr(section, key))
            lines.append(f"{key} = {value}".rstrip())
        lines.append("")
    return "\n".join(lines)


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(serialize_config(config).encode("utf-8")).hexdigest()


def env_workers() -> Optional[int]:
    """PTG_WORKERS, si está definida, reemplaza el número de procesos del archivo."""
    raw = os.getenv("PTG_WORKERS", "").strip()
    if not raw:
        return None
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ConfigError(f"PTG_WORKERS inválido: '{raw}'") from exc
    if workers < 1:
        raise ConfigError(f"PTG_WORKERS debe ser >= 1, se recibió {workers}")
    return workers


def default_config_path() -> Optional[Path]:
    raw = os.getenv("PTG_CONFIG", "").strip()
    return Path(raw) if raw else None
