"""
Generador de tablas periódicas en tres pasos, de lo grueso a lo fino:

1. cadena MCMC sobre la disposición gruesa;
2. expansión de nodos e interpolación GP de r, g y H sobre la disposición fina;
3. ajuste fino con asignación uno a uno (ver fine_tune).

Cada reinicio usa una semilla propia derivada de la semilla base con SeedSequence, de modo que
el resultado de un reinicio no depende de cuántos se ejecuten ni del número de procesos.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np
from scipy.linalg import LinAlgError
from scipy.spatial.distance import cdist

from data_model.elements import ElementTable
from gp_kernels.kernels import (
    KernelError,
    gibbs_kernel,
    gp_interpolate,
    stationary_kernel,
    with_length_scales,
)
from layouts.layouts import LayoutError, LayoutSpec, NodeSet, check_capacity
from sampler.chain import resume_chain, run_chain
from sampler.exceptions import SamplerError
from sampler.sampler import LDLVSampler
from sampler.state import R_BOUND, ChainConfig, LatentState, PosteriorSummary, Priors
from utils.logger_config import run_tag

from .exceptions import AssignmentError, PipelineError
from .fine_tune import DEFAULT_FINE_TUNE_ITERATIONS, fine_tune
from .periodic_table import PeriodicTable

logger = logging.getLogger(__name__)

G_FLOOR = 1e-6
NUMERICAL_ERRORS = (SamplerError, KernelError, AssignmentError, LinAlgError, FloatingPointError)


@dataclass(frozen=True)
class RestartResult:
    restart: int
    seed: int
    table: PeriodicTable
    summary: PosteriorSummary
    timings: Dict[str, float] = field(default_factory=dict)
    jitter: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class _RestartJob:
    restart: int
    seed: int
    elements: ElementTable
    coarse: NodeSet
    fine: NodeSet
    priors: Priors
    chain: ChainConfig
    fine_tune_iterations: int
    config_hash: str
    checkpoint_path: Optional[str]
    resume: bool


def restart_seeds(base_seed: int, restarts: int) -> List[int]:
    """Semillas independientes y reproducibles, una por reinicio."""
    children = np.random.SeedSequence(base_seed).spawn(restarts)
    return [int(child.generate_state(1)[0]) for child in children]


def interpolate_state(
    summary_state: LatentState,
    coarse: NodeSet,
    fine: NodeSet,
    priors: Priors,
    X: np.ndarray,
) -> LatentState:
    """
    Lleva el estado grueso a los nodos finos: r y g con sus kernels estacionarios (c_r, c_g),
    H con c_h sobre puntos aumentados [u, r] usando el r interpolado; β se conserva.
    """
    r_fine = gp_interpolate(coarse.coords, summary_state.r, stationary_kernel(priors.xi_r), fine.coords)
    r_fine = np.clip(r_fine, -R_BOUND, R_BOUND)
    g_fine = gp_interpolate(coarse.coords, summary_state.g, stationary_kernel(priors.xi_g), fine.coords)
    g_fine = np.maximum(g_fine, G_FLOOR)
    H_fine = gp_interpolate(
        with_length_scales(coarse.coords, summary_state.r),
        summary_state.H,
        gibbs_kernel(),
        with_length_scales(fine.coords, r_fine),
    )
    Y_fine = g_fine[:, None] * H_fine
    labels = np.argmin(cdist(np.atleast_2d(X), Y_fine, "sqeuclidean"), axis=1)
    return LatentState(labels=labels, beta=summary_state.beta, g=g_fine, H=H_fine, r=r_fine)


def _applied_jitter(X: np.ndarray, nodes: NodeSet, priors: Priors, state: LatentState) -> Dict[str, float]:
    sampler = LDLVSampler(X, nodes, priors)
    return {
        "C_g": sampler.prior_gram_g.jitter,
        "C_r": sampler.prior_gram_r.jitter,
        "C_h": sampler.kernel_gram_h(state.r).jitter,
    }


def _run_restart(job: _RestartJob) -> RestartResult:
    X = job.elements.features
    chain = replace(job.chain, seed=job.seed)
    timings: Dict[str, float] = {}
    stage = "coarse_chain"
    tag = run_tag(job.restart, job.seed, stage)
    try:
        started = time.perf_counter()
        checkpoint = Path(job.checkpoint_path) if job.checkpoint_path else None
        if job.resume and checkpoint is not None and checkpoint.exists():
            summary = resume_chain(X, job.coarse, checkpoint, config=chain, tag=tag)
        else:
            summary = run_chain(X, job.coarse, job.priors, chain, checkpoint_path=checkpoint, tag=tag)
        timings[stage] = time.perf_counter() - started

        stage = "interpolation"
        tag = run_tag(job.restart, job.seed, stage)
        started = time.perf_counter()
        state = interpolate_state(summary.state, job.coarse, job.fine, job.priors, X)
        timings[stage] = time.perf_counter() - started
        logger.info(f"{tag} estado interpolado a K={job.fine.n_nodes} nodos")

        stage = "fine_tune"
        tag = run_tag(job.restart, job.seed, stage)
        started = time.perf_counter()
        provenance = {
            "restart": job.restart,
            "seed": job.seed,
            "config_hash": job.config_hash,
            "chain_acceptance_rate": summary.acceptance_rate,
            "chain_beta": summary.beta,
        }
        table, final_state = fine_tune(
            X, job.fine, state, job.priors,
            iterations=job.fine_tune_iterations,
            elements=job.elements,
            provenance=provenance,
            analytic_gradient=chain.analytic_gradient,
            tag=tag,
        )
        timings[stage] = time.perf_counter() - started
        jitter = _applied_jitter(X, job.fine, job.priors, final_state)
    except NUMERICAL_ERRORS as exc:
        logger.error(f"{tag} {type(exc).__name__}: {exc}")
        raise PipelineError(str(exc), stage=stage, seed=job.seed) from exc
    logger.info(f"{tag} tabla completa | ln p(X,θ)={table.log_likelihood:.5g}")
    return RestartResult(job.restart, job.seed, table, summary, timings, jitter)


def run_restarts(
    elements: ElementTable,
    layout: LayoutSpec,
    priors: Priors,
    chain: ChainConfig,
    fine_tune_iterations: int = DEFAULT_FINE_TUNE_ITERATIONS,
    restarts: int = 1,
    base_seed: int = 0,
    workers: int = 1,
    config_hash: str = "",
    checkpoint_dir: Optional[Path] = None,
    resume: bool = False,
    only: Optional[List[int]] = None,
    on_result: Optional[Callable[[RestartResult], None]] = None,
) -> List[RestartResult]:
    """
    Ejecuta los reinicios (en paralelo si workers > 1) y los ordena por ln p(X,θ) final, de mayor a menor.

    on_result recibe cada reinicio exitoso en orden de reinicio; si alguno falla, los demás
    terminan igual y al final se propaga el primer PipelineError.
    """
    if restarts < 1:
        raise PipelineError(f"Se requiere al menos un reinicio, se recibió {restarts}", stage="setup",
                            seed=base_seed, numerical=False)
    if not elements.standardized:
        logger.warning("La tabla de elementos no está estandarizada; se usa tal cual.")
    try:
        coarse, fine, _ = layout.build()
        check_capacity(fine, elements.n_elements)
    except LayoutError as exc:
        raise PipelineError(str(exc), stage="layout", seed=base_seed, numerical=False) from exc

    seeds = restart_seeds(base_seed, restarts)
    indices = list(range(restarts)) if only is None else sorted(set(only))
    if any(not 0 <= r < restarts for r in indices):
        raise PipelineError(f"Reinicios fuera de rango: {indices}", stage="setup", seed=base_seed, numerical=False)
    jobs = [
        _RestartJob(
            restart=r,
            seed=seeds[r],
            elements=elements,
            coarse=coarse,
            fine=fine,
            priors=priors,
            chain=chain,
            fine_tune_iterations=fine_tune_iterations,
            config_hash=config_hash,
            checkpoint_path=str(checkpoint_dir / f"restart_{r:02d}.json") if checkpoint_dir else None,
            resume=resume,
        )
        for r in indices
    ]
    logger.info(f"Generando {len(jobs)} tablas con {workers} proceso(s)")
    results: List[RestartResult] = []
    failures: List[PipelineError] = []

    def _collect(outcome: Union[RestartResult, PipelineError]) -> None:
        if isinstance(outcome, PipelineError):
            failures.append(outcome)
            return
        results.append(outcome)
        if on_result is not None:
            on_result(outcome)

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = [pool.submit(_run_restart, job) for job in jobs]
            for future in futures:
                _collect(_attempt(future.result))
    else:
        for job in jobs:
            _collect(_attempt(partial(_run_restart, job)))
    if failures:
        # los reinicios exitosos ya se entregaron a on_result
        raise failures[0]
    return sorted(results, key=lambda result: (-result.table.log_likelihood, result.restart))


def _attempt(call: Callable[[], RestartResult]) -> Union[RestartResult, PipelineError]:
    try:
        return call()
    except PipelineError as exc:
        return exc


def run_ptg(
    elements: ElementTable,
    layout: LayoutSpec,
    priors: Priors,
    chain: ChainConfig,
    fine_tune_iterations: int = DEFAULT_FINE_TUNE_ITERATIONS,
    restarts: int = 1,
    base_seed: int = 0,
    workers: int = 1,
) -> List[PeriodicTable]:
    """R tablas periódicas con su procedencia, ordenadas por verosimilitud final."""
    results = run_restarts(elements, layout, priors, chain, fine_tune_iterations, restarts, base_seed, workers)
    return [result.table for result in results]
