import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from numpy.linalg import LinAlgError

from assignment.exceptions import AssignmentError, PipelineError
from data_model.exceptions import DataModelError
from evaluation.exceptions import EvaluationError
from gp_kernels.kernels import KernelError
from landscapes.exceptions import LandscapeError
from layouts.layouts import LayoutError
from run_manager.config import ConfigError, RunConfig, default_config_path, env_workers, load_config
from run_manager.run_manager import RunManager, RunManagerError
from sampler.exceptions import SamplerError
from utils.logger_config import setup_structured_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_INPUT = 2

INPUT_ERRORS = (ConfigError, DataModelError, LayoutError, RunManagerError, EvaluationError,
                LandscapeError, FileNotFoundError)
NUMERICAL_ERRORS = (SamplerError, KernelError, AssignmentError, LinAlgError, FloatingPointError)


def _config(args: argparse.Namespace) -> RunConfig:
    path = args.config or default_config_path()
    config = load_config(path) if path else RunConfig()
    return config.with_overrides(
        seed=args.seed,
        restarts=args.restarts,
        iterations=args.iters,
        output=args.out,
    )


def _workers(args: argparse.Namespace, config: RunConfig) -> int:
    """Prioridad: --workers, luego PTG_WORKERS, luego [run] workers."""
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError(f"--workers debe ser >= 1, se recibió {args.workers}")
        return args.workers
    return env_workers() or config.run.workers


def cmd_generate(args: argparse.Namespace) -> int:
    config = _config(args)
    manager = RunManager(config.run.output, config)
    results = manager.generate(workers=_workers(args, config))
    for result in results:
        print(f"table_{result.restart:02d}  semilla={result.seed}  ln p(X,θ)={result.table.log_likelihood:.6g}")
    print(f"Corrida escrita en {manager.run_dir}")
    return EXIT_OK


def cmd_resume(args: argparse.Namespace) -> int:
    manager = RunManager.open(args.run_dir)
    results = manager.resume(workers=_workers(args, manager.config))
    print(f"{len(results)} reinicio(s) completados en {manager.run_dir}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    manager = RunManager.open(args.run_dir)
    report = manager.evaluate(args.compounds)
    for row in report["ranking"]:
        marker = "*" if row["descriptor"] == report["selected"] else " "
        print(f"{marker} {row['descriptor']:<10} MAE={row['mae']:.4f}±{row['mae_std']:.4f}  "
              f"RMSE={row['rmse']:.4f} {report['unit']}".rstrip())
    return EXIT_OK


def cmd_landscape(args: argparse.Namespace) -> int:
    manager = RunManager.open(args.run_dir)
    written = manager.landscape(args.feature, restart=args.table)
    print(f"{len(written)} archivo(s) de paisaje en {manager.run_dir / 'landscapes'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptg",
        description="Generador de tablas periódicas con GTM-LDLV.",
    )
    parser.add_argument("--log-level", default=None, help="nivel de logging (por defecto PTG_LOG_LEVEL o INFO)")
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="entrena R tablas y escribe el directorio de la corrida")
    generate.add_argument("--config", type=Path, default=None, help="archivo .cfg (por defecto PTG_CONFIG)")
    generate.add_argument("--seed", type=int, default=None)
    generate.add_argument("--restarts", type=int, default=None)
    generate.add_argument("--iters", type=int, default=None, help="T de la cadena gruesa")
    generate.add_argument("--out", default=None, help="directorio de salida")
    generate.add_argument("--workers", type=int, default=None)
    generate.set_defaults(handler=cmd_generate)

    resume = commands.add_parser("resume", help="completa los reinicios pendientes de una corrida")
    resume.add_argument("run_dir", type=Path)
    resume.add_argument("--workers", type=int, default=None)
    resume.set_defaults(handler=cmd_resume)

    evaluate = commands.add_parser("evaluate", help="valida las tablas como descriptores de compuestos")
    evaluate.add_argument("run_dir", type=Path)
    evaluate.add_argument("compounds", nargs="?", default=None, help="CSV formula,target")
    evaluate.set_defaults(handler=cmd_evaluate)

    landscape = commands.add_parser("landscape", help="paisajes de propiedades sobre una tabla")
    landscape.add_argument("run_dir", type=Path)
    landscape.add_argument("feature", nargs="?", default="all", help='nombre de la característica o "all"')
    landscape.add_argument("--table", type=int, default=None, help="reinicio a usar (por defecto el seleccionado)")
    landscape.set_defaults(handler=cmd_landscape)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_structured_logging(args.log_level)
    try:
        return args.handler(args)
    except PipelineError as exc:
        logger.error(f"Fallo en la etapa {exc.stage}: {exc}")
        return EXIT_NUMERICAL if exc.numerical else EXIT_INPUT
    except INPUT_ERRORS as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return EXIT_INPUT
    except NUMERICAL_ERRORS as exc:
        logger.error(f"Fallo numérico {type(exc).__name__}: {exc}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
