#!/usr/bin/env python3
"""
Command-line interface of the AEL parameter estimation toolkit.

Subcommands follow the stages of the estimation procedure:
    synth      generate synthetic observations with a ground-truth sidecar
    surrogate  build and validate the polynomial surrogate
    fit        Bayesian estimation (surrogate, chains, results bundle)
    ls-fit     Levenberg-Marquardt least-squares baseline
    simulate   forward simulation with explicit parameters
    summarize  recompute summaries from an existing samples CSV

Any ``--<section>.<key> <value>`` argument overrides the job file, e.g.
``--chain.proposal random_walk``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure, 5 accuracy or fit-quality target missed.
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from scripts.data_io import (
    REFERENCE_HTO,
    REFERENCE_POLARIZATION,
    REFERENCE_THERMAL,
    EstimationJob,
    read_job,
    with_paths,
    write_json,
)
from scripts.ael_models import MODEL_PARAMETERS
from scripts.errors import AcceptanceError, AelEstimationError, ConfigError
from scripts.estimation_pipeline import (
    AelEstimationPipeline,
    load_parameter_file,
    summarize_samples,
    write_trajectory,
)
from scripts.surrogate import GridSpec, save_surrogate, sparse_grid_nodes

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def reference_parameters(model: str) -> dict:
    values = {
        'polarization': REFERENCE_POLARIZATION.to_vector(),
        'thermal': REFERENCE_THERMAL.to_vector(),
        'hto': REFERENCE_HTO,
    }[model]
    return {n: float(v) for n, v in zip(MODEL_PARAMETERS[model], values)}


def _add_common(parser: argparse.ArgumentParser, job_required: bool = True) -> None:
    parser.add_argument('--job', type=Path, required=job_required,
                        help='estimation job JSON file')
    parser.add_argument('--seed', type=int, default=None,
                        help='unsigned 64-bit seed overriding the job seed')
    parser.add_argument('--verbose', action='store_true', help='debug logging')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='run_estimation.py',
        description='Estimate polarization, thermal and HTO crossover parameters of an alkaline '
                    'electrolysis plant by surrogate-accelerated Bayesian inference.',
    )
    sub = parser.add_subparsers(dest='command', required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser('synth', help='generate synthetic observations', formatter_class=fmt)
    _add_common(p)
    p.add_argument('--true-params', type=Path, default=None,
                   help='JSON with the true parameter values (SI units; V_an in L, v_lye in L/min); '
                        'reference plant values when omitted')
    p.add_argument('--out', type=Path, required=True, help='output CSV; the sidecar is <stem>.truth.json')

    p = sub.add_parser('surrogate', help='build and validate the surrogate', formatter_class=fmt)
    _add_common(p)
    p.add_argument('--data', type=Path, default=None,
                   help='observation CSV fixing inputs and output times; job schedule when omitted')
    p.add_argument('--out-model', type=Path, required=True, help='surrogate JSON to write')

    p = sub.add_parser('fit', help='Bayesian parameter estimation', formatter_class=fmt)
    _add_common(p)
    p.add_argument('--data', type=Path, default=None, help='observation CSV/XLSX (default $.paths.data)')
    p.add_argument('--out-dir', type=Path, default=None, help='results directory (default $.paths.out_dir)')
    p.add_argument('--surrogate', type=Path, default=None, help='prebuilt surrogate JSON')
    p.add_argument('--forward', choices=('surrogate', 'direct'), default=None,
                   help='forward model used by the chain (default $.forward)')
    p.add_argument('--chains', type=int, default=None, help='number of concurrent chains (default $.chain.n_chains)')

    p = sub.add_parser('ls-fit', help='least-squares baseline fit', formatter_class=fmt)
    _add_common(p)
    p.add_argument('--data', type=Path, default=None, help='observation CSV/XLSX (default $.paths.data)')
    p.add_argument('--out', type=Path, required=True, help='result JSON {params, rmse, iterations, converged, cost}')
    p.add_argument('--surrogate', type=Path, default=None, help='prebuilt surrogate JSON')
    p.add_argument('--forward', choices=('surrogate', 'direct'), default=None,
                   help='forward model for the residuals (default $.forward)')

    p = sub.add_parser('simulate', help='forward simulation', formatter_class=fmt)
    _add_common(p)
    p.add_argument('--params', type=Path, default=None,
                   help='JSON with parameter values; reference plant values when omitted')
    p.add_argument('--schedule', type=Path, default=None,
                   help='input CSV (t_s, i_cell_A_m2 [A/m2], p_bar [bar], t_c_in_K / t_s_out_K [K]); '
                        'job schedule when omitted')
    p.add_argument('--out', type=Path, required=True, help='trajectory CSV to write')

    p = sub.add_parser('summarize', help='summarize an existing samples CSV', formatter_class=fmt)
    _add_common(p, job_required=False)
    p.add_argument('--samples', type=Path, required=True, help='samples CSV written by fit')
    p.add_argument('--out-dir', type=Path, required=True, help='directory for summary.json and histograms.json')
    return parser


def split_overrides(parser: argparse.ArgumentParser, extras: Sequence[str]) -> List[Tuple[str, str]]:
    """Turn leftover ``--section.key value`` (or ``--section.key=value``) pairs into overrides."""
    overrides = []
    k = 0
    while k < len(extras):
        token = extras[k]
        if not token.startswith('--') or '.' not in token.split('=', 1)[0]:
            parser.error(f"unrecognized argument: {token}")
        if '=' in token:
            key, value = token[2:].split('=', 1)
            k += 1
        else:
            if k + 1 >= len(extras):
                parser.error(f"override {token} needs a value")
            key, value = token[2:], extras[k + 1]
            k += 2
        overrides.append((key, value))
    return overrides


def load_job(args: argparse.Namespace, overrides: List[Tuple[str, str]]) -> EstimationJob:
    if args.seed is not None:
        overrides = overrides + [('seed', str(args.seed))]
    return read_job(args.job, overrides)


def cmd_synth(args, overrides) -> int:
    job = load_job(args, overrides)
    true_params = (load_parameter_file(args.true_params, job.model) if args.true_params
                   else reference_parameters(job.model))
    sidecar = AelEstimationPipeline(job).synthesize(true_params, args.out)
    print(sidecar)
    return 0


def cmd_surrogate(args, overrides) -> int:
    job = load_job(args, overrides)
    pipeline = AelEstimationPipeline(job)
    if args.data is not None:
        pipeline.load_data(args.data)
    else:
        pipeline.use_job_schedule()
    start_time = time.time()
    try:
        model, report = pipeline.build_surrogate()
    except AcceptanceError as e:
        print(f"surrogate target missed: max relative error {e.achieved:.6g}")
        raise
    elapsed = time.time() - start_time
    save_surrogate(model, args.out_model)
    level = model.max_degree
    n_nodes = len(sparse_grid_nodes(model.dimension, GridSpec(level)))
    write_json(report.to_dict(), args.out_model.with_name(f"{args.out_model.stem}.validation.json"))
    print(f"level: {level}")
    print(f"nodes: {n_nodes}")
    print(f"max relative error: {report.max_rel_error:.6g}")
    print(f"mean relative error: {report.mean_rel_error:.6g}")
    print(f"build time: {elapsed:.2f} s")
    return 0


def cmd_fit(args, overrides) -> int:
    job = load_job(args, overrides)
    job = with_paths(job, data=args.data and str(args.data), out_dir=args.out_dir and str(args.out_dir),
                     surrogate=args.surrogate and str(args.surrogate))
    if job.paths.data is None:
        raise ConfigError('$.paths.data', "no observation file given (--data)")
    if job.paths.out_dir is None:
        raise ConfigError('$.paths.out_dir', "no results directory given (--out-dir)")
    surrogate = Path(job.paths.surrogate) if job.paths.surrogate else None
    result = AelEstimationPipeline(job).run_fit(Path(job.paths.data), Path(job.paths.out_dir), surrogate,
                                                args.forward, args.chains)
    print(f"{'parameter':<12}{'mean':>14}{'sd':>14}{'q05':>14}{'q95':>14}{'ess':>10}")
    for j, name in enumerate(result.summary.names):
        print(f"{name:<12}{result.summary.mean[j]:>14.5g}{result.summary.sd[j]:>14.4g}"
              f"{result.summary.q05[j]:>14.5g}{result.summary.q95[j]:>14.5g}{result.ess[j]:>10.0f}")
    print(f"acceptance rate: {result.chain.acceptance_rate:.3f}")
    print(f"posterior-mean RMSE: {result.rmse:.6g}")
    for key, value in sorted(result.timings.items()):
        print(f"{key}: {value:.4g}")
    return 0


def cmd_ls_fit(args, overrides) -> int:
    job = load_job(args, overrides)
    data = args.data or (Path(job.paths.data) if job.paths.data else None)
    if data is None:
        raise ConfigError('$.paths.data', "no observation file given (--data)")
    surrogate = args.surrogate or (Path(job.paths.surrogate) if job.paths.surrogate else None)
    result = AelEstimationPipeline(job).run_least_squares(data, args.forward, surrogate)
    write_json(result.to_dict(), args.out)
    for name, value in result.params.as_dict().items():
        print(f"{name:<12}{value:>16.8g}")
    print(f"RMSE: {result.rmse:.6g} ({result.iterations} evaluations, converged: {result.converged})")
    return 0


def cmd_simulate(args, overrides) -> int:
    job = load_job(args, overrides)
    params = load_parameter_file(args.params, job.model) if args.params else reference_parameters(job.model)
    pipeline = AelEstimationPipeline(job)
    if args.schedule is not None:
        pipeline.use_schedule_file(args.schedule)
    else:
        pipeline.use_job_schedule()
    write_trajectory(pipeline.trajectory(params), args.out)
    print(args.out)
    return 0


def cmd_summarize(args, overrides) -> int:
    n_bins = 30
    if args.job is not None:
        n_bins = load_job(args, overrides).n_bins
    elif overrides:
        raise ConfigError('$', "overrides need a job file (--job)")
    document = summarize_samples(args.samples, args.out_dir, n_bins)
    for entry, ess in zip(document['parameters'], document['ess']):
        print(f"{entry['name']:<12}{entry['mean']:>14.5g}{entry['sd']:>14.4g}{ess:>10.0f}")
    return 0


COMMANDS = {
    'synth': cmd_synth,
    'surrogate': cmd_surrogate,
    'fit': cmd_fit,
    'ls-fit': cmd_ls_fit,
    'simulate': cmd_simulate,
    'summarize': cmd_summarize,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
        overrides = split_overrides(parser, extras)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else logging.INFO)

    try:
        return COMMANDS[args.command](args, overrides)
    except AelEstimationError as e:
        logging.error(f"{args.command} failed: {e}")
        return e.exit_code
    except Exception as e:
        logging.exception(f"{args.command} failed unexpectedly: {e}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
