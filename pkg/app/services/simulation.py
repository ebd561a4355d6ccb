from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binom, norm

from app.core.errors import ConfigError
from app.core.gf2 import BitVec, RowSpaceOracle, in_row_space, mat_vec, weight
from app.schemas.decoding import DecoderConfig, DepolarizingParams, ErrorType, SiConfig
from app.schemas.experiments import (
    LOGICAL_ERROR_OUTCOMES,
    ExperimentResult,
    ExperimentSpec,
    HistogramBin,
    PointStats,
    RankHistogram,
    SplittingCurve,
    SplittingPoint,
    SweepReport,
    TrialRecord,
)
from app.services.channel import RngStream, a_priori_llrs, channel_llrs, marginal_flip_prob, sample_x_error
from app.services.codes import CssCode, check_lengths, load_code
from app.services.mp_decoder import LlrVector, MessagePassingDecoder
from app.services.osd_postprocess import Osd0Decoder
from app.services.si_postprocess import (
    MP_NONCONVERGENCE,
    UNSOLVABLE_SYSTEM,
    StabilizerInactivationDecoder,
    check_reliabilities,
    rank_of_check,
)

logger = logging.getLogger(__name__)

# Priors need 0 < eps < 1; a noiseless point decodes with near-certain priors instead.
PRIOR_EPS_FLOOR = 1e-12
SPLIT_RESAMPLE_LIMIT = 1000
WILSON_Z = float(norm.ppf(0.975))

ProgressCallback = Callable[[int], None]


def is_success(code: CssCode, e: BitVec, e_hat: BitVec) -> bool:
    """True iff e + e_hat is a stabilizer, i.e. lies in the row space of H_X."""
    check_lengths(code, e, e_hat)
    residual = np.asarray(e, dtype=np.uint8) ^ np.asarray(e_hat, dtype=np.uint8)
    return in_row_space(code.hx, residual)


def wilson_interval(successes: int, total: int, z: float = WILSON_Z) -> Tuple[float, float]:
    if total <= 0:
        return 0.0, 1.0
    phat = successes / total
    denom = 1 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def prior_llrs(n: int, eps: float, config: DecoderConfig) -> LlrVector:
    clipped = min(max(eps, PRIOR_EPS_FLOOR), 1 - PRIOR_EPS_FLOOR)
    if config.prior_policy == "channel":
        return channel_llrs(n, clipped)
    return a_priori_llrs(n, clipped, config.algorithm, gamma=config.gamma)


class DecodingPipeline:
    """MP decoding with the configured post-processing, bound to one code."""

    def __init__(self, code: CssCode, decoder: DecoderConfig, post: str, si: Optional[SiConfig] = None) -> None:
        self.code = code
        self.decoder = decoder
        self.post = post
        self._oracle = RowSpaceOracle(code.hx)
        self._si: Optional[StabilizerInactivationDecoder] = None
        self._osd: Optional[Osd0Decoder] = None
        if post == "si":
            self._si = StabilizerInactivationDecoder(code, decoder, si or SiConfig())
        else:
            self._mp = MessagePassingDecoder(code.hz, decoder)
            if post == "osd0":
                self._osd = Osd0Decoder(code.hz)

    @property
    def lambda_max(self) -> Optional[int]:
        return self._si.lambda_max if self._si is not None else None

    def is_success(self, e: BitVec, e_hat: BitVec) -> bool:
        return self._oracle.contains(e ^ e_hat)

    def run(self, trial: int, p: float, error: BitVec, priors: LlrVector) -> TrialRecord:
        syndrome = mat_vec(self.code.hz, error)
        error_weight = weight(error)

        if self._si is not None:
            outcome = self._si.decode(syndrome, priors)
            if not outcome.post_invoked:
                return self._classify(trial, p, error_weight, error, outcome.estimate, "converged", outcome.iterations)
            if not outcome.success:
                reason = max(outcome.failure_breakdown, key=outcome.failure_breakdown.get)
                return TrialRecord(
                    trial=trial,
                    p=p,
                    error_weight=error_weight,
                    outcome="failure",
                    inactivations_used=outcome.inactivations_used,
                    iterations=outcome.iterations,
                    post_invoked=True,
                    failure_reason=reason,
                )
            record = self._classify(trial, p, error_weight, error, outcome.estimate, "post", outcome.iterations)
            return record.model_copy(update={"inactivations_used": outcome.inactivations_used})

        mp = self._mp.decode(syndrome, priors)
        if mp.converged:
            return self._classify(trial, p, error_weight, error, mp.hard, "converged", mp.iterations)
        if self._osd is None:
            return TrialRecord(
                trial=trial,
                p=p,
                error_weight=error_weight,
                outcome="failure",
                iterations=mp.iterations,
                failure_reason=MP_NONCONVERGENCE,
            )
        estimate = self._osd.decode(syndrome, mp.hard, mp.soft)
        return self._classify(trial, p, error_weight, error, estimate, "post", mp.iterations)

    def _classify(
        self, trial: int, p: float, error_weight: int, error: BitVec, estimate: BitVec, stage: str, iterations: int
    ) -> TrialRecord:
        ok = self.is_success(error, estimate)
        outcome = f"{stage}_success" if ok else f"{stage}_logical_error"
        return TrialRecord(
            trial=trial,
            p=p,
            error_weight=error_weight,
            outcome=outcome,
            iterations=iterations,
            post_invoked=stage == "post",
        )


@dataclass
class TrialContext:
    pipeline: DecodingPipeline
    p: float
    eps: float
    priors: LlrVector
    seed: int

    @classmethod
    def build(cls, code: CssCode, spec: ExperimentSpec, p: float, pipeline: Optional[DecodingPipeline] = None) -> "TrialContext":
        params = DepolarizingParams.symmetric(p)
        eps = marginal_flip_prob(params, spec.error_type)
        pipeline = pipeline or DecodingPipeline(code, spec.decoder, spec.post, spec.si)
        return cls(pipeline=pipeline, p=p, eps=eps, priors=prior_llrs(code.n, eps, spec.decoder), seed=spec.seed)


def run_trial(context: TrialContext, trial: int) -> TrialRecord:
    rng = RngStream(context.seed, trial).generator()
    error = sample_x_error(context.pipeline.code.n, context.eps, rng)
    return context.pipeline.run(trial, context.p, error, context.priors)


_worker_context: Optional[TrialContext] = None


def _init_worker(context: TrialContext) -> None:
    global _worker_context
    _worker_context = context


def _run_chunk(trials: Sequence[int]) -> List[TrialRecord]:
    assert _worker_context is not None
    return [run_trial(_worker_context, t) for t in trials]


def _chunks(start: int, stop: int, size: int) -> List[range]:
    return [range(i, min(i + size, stop)) for i in range(start, stop, size)]


def aggregate(records: Sequence[TrialRecord], p: float, eps: float, early_stopped: bool = False) -> PointStats:
    trials = len(records)
    logical_errors = sum(1 for r in records if r.outcome in LOGICAL_ERROR_OUTCOMES)
    counts: Dict[str, int] = {}
    breakdown: Dict[str, int] = {}
    for r in records:
        counts[r.outcome] = counts.get(r.outcome, 0) + 1
        if r.failure_reason:
            breakdown[r.failure_reason] = breakdown.get(r.failure_reason, 0) + 1
    invoked = [r.inactivations_used for r in records if r.post_invoked and r.inactivations_used is not None]
    converged = sum(1 for r in records if r.outcome.startswith("converged"))
    total_iterations = sum(r.iterations for r in records)
    lo, hi = wilson_interval(logical_errors, trials)
    return PointStats(
        p=p,
        eps=eps,
        trials=trials,
        logical_errors=logical_errors,
        ler=logical_errors / trials if trials else 0.0,
        ci_lo=lo,
        ci_hi=hi,
        lambda_ave=(sum(invoked) / len(invoked)) if invoked else None,
        post_invocations=sum(1 for r in records if r.post_invoked),
        mp_converged_frac=converged / trials if trials else 0.0,
        mean_iterations=total_iterations / trials if trials else 0.0,
        total_iterations=total_iterations,
        outcome_counts=dict(sorted(counts.items())),
        failure_breakdown=dict(sorted(breakdown.items())),
        early_stopped=early_stopped,
    )


def run_point(
    code: CssCode,
    spec: ExperimentSpec,
    p: float,
    pipeline: Optional[DecodingPipeline] = None,
    progress: Optional[ProgressCallback] = None,
) -> Tuple[PointStats, List[TrialRecord]]:
    context = TrialContext.build(code, spec, p, pipeline)
    records: List[TrialRecord] = []
    early_stopped = False
    batches = _chunks(0, spec.trials, spec.batch_size)

    executor = None
    if spec.workers > 1:
        executor = ProcessPoolExecutor(max_workers=spec.workers, initializer=_init_worker, initargs=(context,))
    try:
        for batch in batches:
            if executor is None:
                batch_records = [run_trial(context, t) for t in batch]
            else:
                size = max(1, math.ceil(len(batch) / spec.workers))
                batch_records = [r for chunk in executor.map(_run_chunk, _chunks(batch.start, batch.stop, size)) for r in chunk]
            records.extend(batch_records)
            if progress is not None:
                progress(len(batch_records))
            errors = sum(1 for r in records if r.outcome in LOGICAL_ERROR_OUTCOMES)
            if spec.early_stop_errors and errors >= spec.early_stop_errors and len(records) < spec.trials:
                early_stopped = True
                logger.warning(
                    "p=%g: early stop after %d trials (%d logical errors)", p, len(records), errors
                )
                break
    finally:
        if executor is not None:
            executor.shutdown()

    stats = aggregate(records, p, context.eps, early_stopped)
    logger.info(
        "p=%g eps=%.6g: %d trials, %d logical errors, LER=%.4g",
        p, context.eps, stats.trials, stats.logical_errors, stats.ler,
    )
    return stats, records


def run_experiment(
    spec: ExperimentSpec,
    code: Optional[CssCode] = None,
    progress: Optional[ProgressCallback] = None,
) -> ExperimentResult:
    code = code or load_code(spec.code)
    effective = code.swapped() if spec.error_type == "Z" else code
    pipeline = DecodingPipeline(effective, spec.decoder, spec.post, spec.si)
    logger.info(
        "experiment on %s [[%d,%d]]: %s %s post=%s, %d p points x %d trials",
        code.name, code.n, code.k, spec.decoder.label, spec.decoder.schedule, spec.post, len(spec.p), spec.trials,
    )
    points = [run_point(effective, spec, p, pipeline, progress)[0] for p in spec.p]
    result = ExperimentResult(
        code=code.name,
        n=code.n,
        k=code.k,
        error_type=spec.error_type,
        decoder=spec.decoder,
        post=spec.post,
        si=spec.si if spec.post == "si" else None,
        lambda_max=pipeline.lambda_max,
        seed=spec.seed,
        trials_per_point=spec.trials,
        early_stop_errors=spec.early_stop_errors,
        points=points,
    )
    if spec.out:
        # Imported here to keep the storage stack out of worker start-up.
        from app.services.storage import write_results

        write_results(result, spec.out)
    return result


def sweep(specs: Sequence[ExperimentSpec], progress: Optional[ProgressCallback] = None) -> SweepReport:
    if not specs:
        raise ConfigError("sweep needs at least one experiment")
    grid = list(specs[0].p)
    if any(list(s.p) != grid for s in specs):
        raise ConfigError("every experiment in a sweep must share the same p grid")
    from app.services.storage import result_rows

    results = [run_experiment(s, progress=progress) for s in specs]
    rows = [row for result in results for row in result_rows(result)]
    return SweepReport(p=grid, results=results, rows=rows)


def stabilizer_splitting_error(code: CssCode, rng: np.random.Generator) -> Tuple[int, BitVec]:
    """Error covering exactly half of a random even-weight X-check."""
    for _ in range(SPLIT_RESAMPLE_LIMIT):
        row = int(rng.integers(code.m_x))
        support = code.hx.row_supports[row]
        if support and len(support) % 2 == 0:
            chosen = rng.choice(np.asarray(support), size=len(support) // 2, replace=False)
            error = np.zeros(code.n, dtype=np.uint8)
            error[chosen] = 1
            return row, error
    raise ConfigError(f"no even-weight X-check found in {code.name} after {SPLIT_RESAMPLE_LIMIT} draws")


def histogram_bins(ranks: Iterable[int], m_x: int, bin_width: int) -> List[HistogramBin]:
    n_bins = max(1, math.ceil(m_x / bin_width))
    counts = [0] * n_bins
    for r in ranks:
        counts[min(r // bin_width, n_bins - 1)] += 1
    return [HistogramBin(lo=i * bin_width, hi=(i + 1) * bin_width, count=c) for i, c in enumerate(counts)]


def rank_histogram_experiment(
    code: CssCode,
    p: float,
    decoder: DecoderConfig,
    trials: int,
    seed: int,
    bin_width: int = 5,
    progress: Optional[ProgressCallback] = None,
) -> RankHistogram:
    eps = marginal_flip_prob(DepolarizingParams.symmetric(p))
    priors = prior_llrs(code.n, eps, decoder)
    mp = MessagePassingDecoder(code.hz, decoder)
    ranks: List[int] = []
    for trial in range(trials):
        rng = RngStream(seed, trial).generator()
        row, error = stabilizer_splitting_error(code, rng)
        outcome = mp.decode(mat_vec(code.hz, error), priors)
        if not outcome.converged:
            ranks.append(rank_of_check(row, check_reliabilities(outcome.soft, code.hx)))
        if progress is not None:
            progress(1)
    logger.info("rank histogram on %s at p=%g: %d MP failures out of %d", code.name, p, len(ranks), trials)
    return RankHistogram(
        code=code.name,
        p=p,
        decoder=decoder,
        trials=trials,
        failures=len(ranks),
        m_x=code.m_x,
        bin_width=bin_width,
        bins=histogram_bins(ranks, code.m_x, bin_width),
        ranks=ranks,
    )


def splitting_check_probabilities(code: CssCode, eps: float) -> np.ndarray:
    """Per X-check probability that an i.i.d. flip pattern covers exactly half of the check."""
    weights = np.asarray(code.hx.row_weights(), dtype=np.int64)
    even = (weights > 0) & (weights % 2 == 0)
    probs = np.zeros(weights.size)
    probs[even] = binom.pmf(weights[even] // 2, weights[even], eps)
    return probs


def _at_least_one(probs: np.ndarray) -> float:
    return float(-np.expm1(np.log1p(-probs).sum()))


def stabilizer_splitting_probability(code: CssCode, p: float) -> float:
    """Probability that an X error splits at least one X-check, checks taken as independent.

    For Z errors pass ``code.swapped()``.
    """
    eps = marginal_flip_prob(DepolarizingParams.symmetric(p))
    return _at_least_one(splitting_check_probabilities(code, eps))


def split_checks(code: CssCode, error: BitVec) -> np.ndarray:
    """Indices of the even-weight X-checks that ``error`` covers on exactly half their support."""
    check_lengths(code, error)
    weights = np.asarray(code.hx.row_weights(), dtype=np.int64)
    overlaps = code.hx.csr @ np.asarray(error, dtype=np.int64)
    return np.flatnonzero((weights > 0) & (weights % 2 == 0) & (2 * overlaps == weights))


def stabilizer_splitting_experiment(
    code: CssCode,
    p_grid: Sequence[float],
    decoder: DecoderConfig,
    trials: int,
    seed: int,
    error_type: ErrorType = "X",
    progress: Optional[ProgressCallback] = None,
) -> SplittingCurve:
    """Plain MP decoding next to the rate of stabilizer-splitting errors on the same samples.

    Trial ``t`` draws from ``RngStream(seed, t)``, so the samples match a ``run_experiment``
    without post-processing under the same seed.
    """
    effective = code.swapped() if error_type == "Z" else code
    pipeline = DecodingPipeline(effective, decoder, "none")
    weights = np.asarray(effective.hx.row_weights())
    points: List[SplittingPoint] = []
    for p in p_grid:
        eps = marginal_flip_prob(DepolarizingParams.symmetric(p), error_type)
        priors = prior_llrs(effective.n, eps, decoder)
        probs = splitting_check_probabilities(effective, eps)
        split = failures = logical_errors = 0
        for trial in range(trials):
            error = sample_x_error(effective.n, eps, RngStream(seed, trial))
            if split_checks(effective, error).size:
                split += 1
            record = pipeline.run(trial, p, error, priors)
            failures += record.outcome == "failure"
            logical_errors += record.is_logical_error
            if progress is not None:
                progress(1)
        lo, hi = wilson_interval(logical_errors, trials)
        point = SplittingPoint(
            p=p,
            eps=eps,
            trials=trials,
            split_errors=split,
            split_frac=split / trials,
            split_prob=_at_least_one(probs),
            split_bound=min(1.0, float(probs.sum())),
            mp_failures=failures,
            logical_errors=logical_errors,
            ler=logical_errors / trials,
            ci_lo=lo,
            ci_hi=hi,
        )
        logger.info(
            "p=%g: %d of %d errors split a check (predicted %.4g), LER=%.4g",
            p, split, trials, point.split_prob, point.ler,
        )
        points.append(point)
    return SplittingCurve(
        code=code.name,
        n=code.n,
        k=code.k,
        error_type=error_type,
        decoder=decoder,
        seed=seed,
        trials_per_point=trials,
        even_checks=int(np.count_nonzero((weights > 0) & (weights % 2 == 0))),
        points=points,
    )


__all__ = [
    "DecodingPipeline",
    "MP_NONCONVERGENCE",
    "TrialContext",
    "UNSOLVABLE_SYSTEM",
    "aggregate",
    "is_success",
    "rank_histogram_experiment",
    "run_experiment",
    "run_point",
    "run_trial",
    "split_checks",
    "splitting_check_probabilities",
    "stabilizer_splitting_experiment",
    "stabilizer_splitting_probability",
    "sweep",
    "wilson_interval",
]
