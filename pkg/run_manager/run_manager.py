import hashlib
import json
import logging
import os
import platform
import re
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pytz
from dotenv import load_dotenv

from assignment.exceptions import AssignmentError
from assignment.periodic_table import PeriodicTable, load_table
from assignment.pipeline import RestartResult, run_restarts
from data_model.compounds import load_compounds
from data_model.elements import ElementTable, drop_constant_features, load_elements, standardize
from evaluation.cross_validation import cross_validate
from evaluation.descriptors import descriptor_from_table, standard_descriptor
from evaluation.enrichment import enrichment
from landscapes.landscape import resolve_features, table_landscape
from landscapes.svg_renderer import export_table_svg
from layouts.layouts import check_capacity
from sampler.chain import write_trace_csv

from .config import RunConfig, config_hash, load_config, serialize_config

load_dotenv()

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.cfg"
MANIFEST_VERSION = 1
TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "scikit-learn", "reportlab", "pytz", "python-dotenv")
TIMEZONE = os.getenv("PTG_TIMEZONE", "America/Bogota")


class RunManagerError(Exception):
    """Directorio de corrida incompleto o inconsistente."""


def _now() -> str:
    return datetime.now(pytz.timezone(TIMEZONE)).isoformat(timespec="seconds")


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def library_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for package in TRACKED_PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "no instalado"
    return versions


def _safe_name(name: str) -> str:
    return re.sub(r"[^\w.-]+", "_", name).strip("_") or "feature"


class RunManager:
    """
    Directorio de una corrida: configuración, tablas, trazas, checkpoints, evaluación,
    paisajes y el manifiesto con el hash de cada archivo.

    Estructura:
        config.cfg, manifest.json
        tables/table_XX.{csv,json,svg}
        traces/trace_XX.csv
        checkpoints/restart_XX.json
        evaluation/report.json, errors_<descriptor>.csv, enrichment_<a>_vs_<b>.csv
        landscapes/table_XX/<feature>.{csv,svg}
    """

    def __init__(self, run_dir: Union[str, Path], config: RunConfig):
        self.run_dir = Path(run_dir)
        self.config = config
        self.manifest: Dict[str, Any] = {}

    # ---------------- apertura ----------------

    @classmethod
    def open(cls, run_dir: Union[str, Path]) -> "RunManager":
        """Abre un directorio existente a partir de su config.cfg y manifest.json."""
        run_dir = Path(run_dir)
        config_path = run_dir / CONFIG_NAME
        manifest_path = run_dir / MANIFEST_NAME
        if not config_path.exists() or not manifest_path.exists():
            raise RunManagerError(f"{run_dir} no es un directorio de corrida (falta {CONFIG_NAME} o {MANIFEST_NAME}).")
        manager = cls(run_dir, load_config(config_path))
        try:
            manager.manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise RunManagerError(f"Manifiesto corrupto en {run_dir}: {exc}") from exc
        return manager

    # ---------------- rutas ----------------

    def table_path(self, restart: int, suffix: str) -> Path:
        return self.run_dir / "tables" / f"table_{restart:02d}.{suffix}"

    def trace_path(self, restart: int) -> Path:
        return self.run_dir / "traces" / f"trace_{restart:02d}.csv"

    @property
    def checkpoint_dir(self) -> Path:
        return self.run_dir / "checkpoints"

    @property
    def evaluation_dir(self) -> Path:
        return self.run_dir / "evaluation"

    def _relative(self, path: Path) -> str:
        return path.relative_to(self.run_dir).as_posix()

    # ---------------- datos ----------------

    def standardized_elements(self) -> ElementTable:
        data = self.config.data
        table = load_elements(
            data.elements_path,
            cutoff=data.cutoff,
            missing=data.missing,
            identity_as_feature=data.atomic_number_feature,
        )
        return standardize(drop_constant_features(table))

    # ---------------- generate / resume ----------------

    def generate(self, workers: int = 1) -> List[RestartResult]:
        """Corre los R reinicios; los datos se validan antes de crear el directorio."""
        elements = self.standardized_elements()
        _, fine, _ = self.config.layout.spec().build()
        check_capacity(fine, elements.n_elements)
        if self.run_dir.exists() and (self.run_dir / MANIFEST_NAME).exists():
            raise RunManagerError(f"Ya existe una corrida en {self.run_dir}; use resume.")
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / CONFIG_NAME).write_text(serialize_config(self.config), encoding="utf-8")
        self.manifest = self._new_manifest()
        self._write_manifest()
        return self._run(elements, workers, only=None, resume=False)

    def resume(self, workers: int = 1) -> List[RestartResult]:
        """Completa los reinicios sin tabla; las cadenas con checkpoint continúan desde él."""
        missing = [r for r in range(self.config.run.restarts) if not self.table_path(r, "json").exists()]
        if not missing:
            logger.info(f"Corrida {self.run_dir} completa; no hay reinicios pendientes.")
            return []
        logger.info(f"Reanudando reinicios {missing} en {self.run_dir}")
        return self._run(self.standardized_elements(), workers, only=missing, resume=True)

    def _new_manifest(self) -> Dict[str, Any]:
        return {
            "format_version": MANIFEST_VERSION,
            "created_at": _now(),
            "config_hash": config_hash(self.config),
            "base_seed": self.config.run.seed,
            "restarts": [],
            "failures": [],
            "status": "running",
            "selected": None,
            "versions": library_versions(),
            "files": {},
        }

    def _run(self, elements: ElementTable, workers: int, only: Optional[List[int]], resume: bool) -> List[RestartResult]:
        cfg = self.config
        self.manifest["failures"] = []
        self.manifest["status"] = "running"
        try:
            results = run_restarts(
                elements,
                cfg.layout.spec(),
                cfg.priors.priors_for(elements.n_features),
                cfg.chain.chain_config(),
                fine_tune_iterations=cfg.fine_tune.iterations,
                restarts=cfg.run.restarts,
                base_seed=cfg.run.seed,
                workers=workers,
                config_hash=self.manifest["config_hash"],
                checkpoint_dir=self.checkpoint_dir,
                resume=resume,
                only=only,
                on_result=self._store_result,
            )
        except Exception as exc:
            self.manifest["status"] = "failed"
            self.manifest["failures"].append({
                "stage": getattr(exc, "stage", None),
                "seed": getattr(exc, "seed", None),
                "error": f"{type(exc).__name__}: {exc}",
            })
            self._write_manifest()
            raise
        self.manifest["status"] = "complete"
        self._write_manifest()
        logger.info(f"Corrida completa en {self.run_dir}: {len(results)} tabla(s)")
        return results

    def _store_result(self, result: RestartResult) -> None:
        r = result.restart
        result.table.to_csv(self.table_path(r, "csv"))
        result.table.write_json(self.table_path(r, "json"))
        export_table_svg(result.table, path=self.table_path(r, "svg"), trace_line=self.config.run.trace_line)
        self.trace_path(r).parent.mkdir(parents=True, exist_ok=True)
        write_trace_csv(result.summary.trace, self.trace_path(r))
        entry = {
            "restart": r,
            "seed": result.seed,
            "log_likelihood": result.table.log_likelihood,
            "table": self._relative(self.table_path(r, "json")),
            "timings": result.timings,
            "jitter": result.jitter,
        }
        restarts = [e for e in self.manifest.get("restarts", []) if e["restart"] != r] + [entry]
        self.manifest["restarts"] = sorted(restarts, key=lambda e: (-e["log_likelihood"], e["restart"]))
        self._write_manifest()

    # ---------------- manifiesto ----------------

    def _write_manifest(self) -> Path:
        files = {}
        for path in sorted(self.run_dir.rglob("*")):
            if path.is_file() and path.name != MANIFEST_NAME and not path.name.endswith(".tmp"):
                files[self._relative(path)] = file_sha256(path)
        self.manifest["files"] = files
        self.manifest["updated_at"] = _now()
        path = self.run_dir / MANIFEST_NAME
        path.write_text(json.dumps(self.manifest, indent=2, sort_keys=True, default=str), encoding="utf-8")
        return path

    def tables(self) -> List[PeriodicTable]:
        """Tablas listadas en el manifiesto, de mayor a menor ln p(X,θ)."""
        entries = self.manifest.get("restarts", [])
        if not entries:
            raise RunManagerError(f"La corrida {self.run_dir} no contiene tablas.")
        return [self._load_table(self.run_dir / entry["table"]) for entry in entries]

    def _load_table(self, path: Path) -> PeriodicTable:
        try:
            return load_table(path)
        except (AssignmentError, KeyError, TypeError, ValueError) as exc:
            raise RunManagerError(f"Tabla ilegible en la corrida {self.run_dir}: {self._relative(path)} ({exc})") from exc

    # ---------------- evaluate ----------------

    def evaluate(self, compounds: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
        """
        Valida por CV cada tabla y el descriptor estándar, ordena por MAE y marca la mejor tabla
        como seleccionada; el enriquecimiento compara la seleccionada contra la estándar.
        """
        tables = self.tables()
        source = compounds or self.config.data.compounds
        if not source:
            raise RunManagerError("No se indicó el CSV de compuestos (argumento o [data] compounds).")
        settings = self.config.evaluation
        dataset = load_compounds(source, tables[0].symbols, unit=self.config.data.unit)
        params = settings.forest_params()

        descriptors = [descriptor_from_table(table) for table in tables]
        restarts = {d.name: int(t.provenance.get("restart", 0)) for d, t in zip(descriptors, tables)}
        descriptors.append(standard_descriptor(tables[0].symbols))
        reports = {}
        for descriptor in descriptors:
            report = cross_validate(dataset, descriptor, settings.folds, settings.repeats, params, settings.seed)
            reports[descriptor.name] = report
            report.write_errors_csv(self.evaluation_dir / f"errors_{descriptor.name}.csv")

        ranking = sorted(reports.values(), key=lambda report: (report.mae, report.descriptor))
        standard = reports[descriptors[-1].name]
        best = next(report for report in ranking if report.descriptor != standard.descriptor)
        favored, other = enrichment(best, standard, dataset, settings.thresholds)
        for table in (favored, other):
            table.to_csv(self.evaluation_dir / f"enrichment_{table.label}.csv")

        report = {
            "unit": dataset.unit,
            "n_compounds": len(dataset),
            "dropped": len(dataset.dropped),
            "folds": settings.folds,
            "repeats": settings.repeats,
            "seed": settings.seed,
            "forest": params.to_dict(),
            "ranking": [r.summary() for r in ranking],
            "selected": best.descriptor,
            "enrichment": [favored.to_dict(), other.to_dict()],
        }
        path = self.evaluation_dir / "report.json"
        path.write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
        self.manifest["selected"] = {"table": best.descriptor, "restart": restarts[best.descriptor], "mae": best.mae}
        self._write_manifest()
        logger.info(
            f"Tabla seleccionada: {best.descriptor} MAE={best.mae:.4f} "
            f"(estándar {standard.mae:.4f}) {dataset.unit}".rstrip()
        )
        return report

    # ---------------- landscape ----------------

    def landscape(self, feature: str = "all", restart: Optional[int] = None) -> List[Path]:
        """Un CSV y un SVG por característica pedida sobre la tabla elegida (la seleccionada por defecto)."""
        if restart is None:
            selected = self.manifest.get("selected")
            entries = self.manifest.get("restarts", [])
            if selected:
                restart = int(selected["restart"])
            elif entries:
                restart = int(entries[0]["restart"])
            else:
                raise RunManagerError(f"La corrida {self.run_dir} no contiene tablas.")
        path = self.table_path(restart, "json")
        if not path.exists():
            raise RunManagerError(f"No existe la tabla del reinicio {restart}: {path}")
        table = self._load_table(path)
        out_dir = self.run_dir / "landscapes" / f"table_{restart:02d}"
        written: List[Path] = []
        for index in resolve_features(table, feature):
            values = table_landscape(table, index)
            stem = _safe_name(values.feature)
            written.append(values.to_csv(out_dir / f"{stem}.csv"))
            export_table_svg(table, values, path=out_dir / f"{stem}.svg", trace_line=self.config.run.trace_line)
            written.append(out_dir / f"{stem}.svg")
        self._write_manifest()
        logger.info(f"{len(written) // 2} paisaje(s) escritos en {out_dir}")
        return written
