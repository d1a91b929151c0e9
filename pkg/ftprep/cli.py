"""
Command line harness producing the data files of the preparation, insertion
sweep, idle decay and tomography experiments, and fitting them.

Every subcommand reads an :py:class:`ftprep.config.ExperimentConfig` (the
bundled device configuration unless ``--config`` is given) and writes its
outputs under the output directory. Row order always follows the grid, and
identical configurations and seeds give identical files.

Exit codes are 0 on success, 2 for invalid configuration or input files and
3 for numerical failures.
"""
import argparse
import concurrent.futures
import csv
import dataclasses
import json
import logging
import math
import pathlib
import sys

import numpy as np

from ftprep.analytic import (
    DecayModelParams,
    Location,
    decay_model,
    ideal_decay,
)
from ftprep.code422 import LogicalLabel, codespace_metrics
from ftprep.config import ExperimentConfig, SweepKind, load_config
from ftprep.errors import ConfigError, FtprepError, SchemaError, UnknownNameError
from ftprep.fitkit import (
    CurveData,
    InsertionCurves,
    fit_decay,
    fit_ideal_decay,
    fit_insertion,
    match_model_params,
    read_curve_csv,
    write_fit_json,
)
from ftprep.noisemodels import Echo, apply_readout, idle_evolution
from ftprep.postsel import (
    PostSelSummary,
    exact_statistics,
    postprocess_arrays,
    sample_shot_table,
    write_shots_csv,
)
from ftprep.prep import (
    Basis,
    PostRotation,
    PrepTarget,
    build_prep_circuit,
    insert_correlated_error,
    insert_error,
    outcome_probabilities,
    prepared_state,
    target_state,
    to_text,
)
from ftprep.simcore import (
    DATA_QUBITS,
    H,
    QuantumState,
    UnitarySpec,
    apply_unitary,
    measure_probabilities,
    sample_from_probabilities,
)
from ftprep.tomo import (
    logical_difference_matrix,
    logical_mixture,
    read_mixture_csv,
    reconstruct,
    simulate_tomography,
    table_metrics,
    write_mixture_csv,
    write_tomo_csv,
)

__all__ = [
    'SWEEP_COLUMNS',
    'DECAY_COLUMNS',
    'DECAY_X_COLUMNS',
    'cmd_prep',
    'cmd_sweep',
    'cmd_decay',
    'cmd_tomo',
    'cmd_fit',
    'read_sweep_curves',
    'main',
]

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = (
    'theta',
    'accept',
    'accept_stderr',
    'err_protected',
    'err_protected_stderr',
    'err_gauge',
    'err_gauge_stderr',
    'err_joint',
    'err_joint_stderr',
    'accept_exact',
    'err_protected_exact',
    'err_gauge_exact',
    'err_joint_exact',
)

DECAY_COLUMNS = (
    't_us',
    'accept',
    'p1_protected',
    'p1_gauge',
    'accept_model',
    'p1_protected_model',
    'p1_gauge_model',
    'ideal_decay',
)

DECAY_X_COLUMNS = ('t_us', 'accept', 'x_protected', 'x_gauge')

FIT_KINDS = ('insertion', 'decay', 'ideal-decay', 'match')

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _write_json(path, data):
    with open(path, 'w') as f:
        json.dump(_jsonable(data), f, indent=2)
        f.write('\n')


def _summary_dict(summary: PostSelSummary) -> dict:
    return dataclasses.asdict(summary)


def _map_jobs(func, n, jobs):
    if jobs > 1 and n > 1:
        with concurrent.futures.ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(func, range(n)))
    return [func(i) for i in range(n)]


def _output_dir(config: ExperimentConfig) -> pathlib.Path:
    out = pathlib.Path(config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _prep_circuit(config, measure_data=True):
    return build_prep_circuit(
        config.prep.target,
        config.prep.cnot_model,
        stark_theta=config.noise.stark_theta,
        post_rotation=config.prep.post_rotation,
        measure_data=measure_data,
    )


def cmd_prep(config: ExperimentConfig) -> dict[str, pathlib.Path]:
    """Run the preparation circuit and write the shot table, the circuit
    listing and a JSON file with the post-selection summary and the
    codespace metrics of the prepared state."""
    target = config.prep.target
    noise = config.noise.circuit_noise()
    out = _output_dir(config)
    stem = f'prep_{target}'
    circuit = _prep_circuit(config)
    paths = {'circuit': out / f'{stem}_circuit.txt', 'metrics': out / f'{stem}_metrics.json'}
    paths['circuit'].write_text(to_text(circuit))

    probs = outcome_probabilities(circuit, noise)
    exact = exact_statistics(probs, target)
    if config.run.exact:
        sampled = exact
    else:
        table = sample_shot_table(probs, config.run.shots, config.run.seed, config.run.jobs)
        paths['shots'] = out / f'{stem}_shots.csv'
        write_shots_csv(paths['shots'], table)
        sampled = postprocess_arrays(table, target)

    state = prepared_state(
        target, noise, config.prep.cnot_model, config.noise.stark_theta
    )
    metrics = codespace_metrics(state, target_state(target).data)
    _write_json(
        paths['metrics'],
        {
            'target': str(target),
            'summary': _summary_dict(sampled),
            'exact': _summary_dict(exact),
            'codespace': dataclasses.asdict(metrics),
        },
    )
    logger.info(
        "Target %s: acceptance %.4f, codespace fidelity %.4f",
        target,
        sampled.acceptance,
        metrics.fidelity,
    )
    return paths


def _sweep_circuit(base, site: SweepKind, theta):
    if site is SweepKind.yy:
        return insert_correlated_error(base, theta)
    return insert_error(base, site.value, theta)


def cmd_sweep(config: ExperimentConfig, site=None) -> pathlib.Path:
    """Insert an error at every angle of the sweep grid and write one row
    per angle with sampled and exact statistics.

    The correlated ``yy`` rotation uses its own grid ``sweep.yy_theta``.
    With ``run.exact`` the sampled columns repeat the exact values and
    their standard errors are zero.
    """
    site = config.sweep.site if site is None else site
    if not isinstance(site, SweepKind):
        try:
            site = SweepKind(site)
        except ValueError as e:
            raise UnknownNameError(site, 'sweep site', [k.value for k in SweepKind]) from e
    target = config.prep.target
    if str(target) != '00' and config.prep.post_rotation is PostRotation.physical:
        logger.warning(
            "Target %s with physical post-rotation gates is outside the closed-form "
            "insertion model; fitted coefficients will not match it exactly",
            target,
        )
    noise = config.noise.circuit_noise()
    base = _prep_circuit(config)
    thetas = config.sweep.yy_theta if site is SweepKind.yy else config.sweep.theta
    streams = np.random.SeedSequence(config.run.seed).spawn(len(thetas))

    def run(k):
        probs = outcome_probabilities(_sweep_circuit(base, site, thetas[k]), noise)
        exact = exact_statistics(probs, target)
        if config.run.exact:
            sampled = exact
        else:
            table = sample_shot_table(probs, config.run.shots, streams[k])
            sampled = postprocess_arrays(table, target)
        logger.debug(
            "Site %s, theta %.4f: acceptance %.4f", site.value, thetas[k], exact.acceptance
        )
        return (
            float(thetas[k]),
            sampled.acceptance,
            sampled.acceptance_stderr,
            sampled.p_err_protected,
            sampled.p_err_protected_stderr,
            sampled.p_err_gauge,
            sampled.p_err_gauge_stderr,
            sampled.p_err_joint,
            sampled.p_err_joint_stderr,
            exact.acceptance,
            exact.p_err_protected,
            exact.p_err_gauge,
            exact.p_err_joint,
        )

    rows = _map_jobs(run, len(thetas), config.run.jobs)
    path = _output_dir(config) / f'sweep_{site.value}_{target}.csv'
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(SWEEP_COLUMNS)
        writer.writerows(rows)
    logger.info("Wrote %d sweep points to %s", len(rows), path)
    return path


def _decay_target(state: str) -> PrepTarget:
    return PrepTarget.parse('11' if state == '11' else '++')


def _initial_register(target: PrepTarget) -> QuantumState:
    # Ideal codeword with the syndrome qubit left in |1>.
    vec = np.kron(target_state(target).data, np.array([0, 1], dtype=complex))
    return QuantumState(len(DATA_QUBITS) + 1, vec)


def _parity_statistics(probs16):
    bits = (np.arange(16)[:, None] >> np.arange(3, -1, -1)) & 1
    c1, c2, c3, c4 = bits.T
    accepted = (c1 ^ c2 ^ c3 ^ c4) == 0
    acceptance = float(probs16[accepted].sum())
    if acceptance <= 0:
        return acceptance, math.nan, math.nan
    # Probability of reading each logical qubit as 1, given acceptance.
    prot = float(probs16[accepted & ((c1 ^ c2) == 1)].sum()) / acceptance
    gauge = float(probs16[accepted & ((c1 ^ c3) == 1)].sum()) / acceptance
    return acceptance, prot, gauge


def cmd_decay(config: ExperimentConfig, state=None, echo=None) -> pathlib.Path:
    """Idle an encoded state for every time of the decay grid and write the
    logical populations.

    ``'11'`` rows hold the probabilities of reading each logical qubit as 1,
    given acceptance, next to :py:func:`ftprep.analytic.decay_model` (with
    the mean data readout crossovers) and :py:func:`ftprep.analytic.ideal_decay`
    (with the mean data T1). ``'pp'`` rows hold the logical X expectations.
    """
    decay = config.decay
    state = decay.state if state is None else state
    echo = decay.echo if echo is None else Echo(echo)
    target = _decay_target(state)
    noise = config.noise.to_noise_config()
    initial = _initial_register(target)
    times = decay.times_us
    streams = np.random.SeedSequence(config.run.seed).spawn(len(times))

    def run(k):
        idled = idle_evolution(
            initial, noise, float(times[k]), echo, decay.slices, decay.echo_qubits
        )
        if target.basis is Basis.X:
            for q in DATA_QUBITS:
                idled = apply_unitary(idled, UnitarySpec(H, (q,)))
        probs = apply_readout(measure_probabilities(idled), noise.p0, noise.p1)
        # The syndrome qubit is not read out during idling.
        probs = probs.reshape(16, 2).sum(axis=1)
        if not config.run.exact:
            outcomes = sample_from_probabilities(probs, config.run.shots, streams[k])
            probs = np.bincount(outcomes, minlength=16) / config.run.shots
        return _parity_statistics(probs)

    stats = np.array(_map_jobs(run, len(times), config.run.jobs))
    path = _output_dir(config) / f'decay_{state}_{echo.name}.csv'
    if target.basis is Basis.X:
        columns = DECAY_X_COLUMNS
        data = [times, stats[:, 0], 1 - 2 * stats[:, 1], 1 - 2 * stats[:, 2]]
    else:
        columns = DECAY_COLUMNS
        data_t1 = [noise.t1_us[q] for q in DATA_QUBITS]
        model = decay_model(
            times,
            DecayModelParams.pure(
                LogicalLabel(1, 1).index,
                data_t1,
                float(np.mean([noise.p0[q] for q in DATA_QUBITS])),
                float(np.mean([noise.p1[q] for q in DATA_QUBITS])),
            ),
        )
        data = [
            times,
            stats[:, 0],
            stats[:, 1],
            stats[:, 2],
            model.acceptance,
            model.p_protected,
            model.p_gauge,
            ideal_decay(times, float(np.mean(data_t1))),
        ]
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        writer.writerows(zip(*(np.asarray(col, dtype=float).tolist() for col in data)))
    logger.info("Wrote %d decay points to %s", len(times), path)
    return path


def cmd_tomo(config: ExperimentConfig) -> dict[str, pathlib.Path]:
    """Simulate tomography of the prepared data state and write the counts,
    the reconstructed density matrix, its logical difference matrix, the
    mixture of the 16 logical basis states and the acceptance and logical
    populations. The mixture file is the ``--mixture`` input of a decay fit."""
    target = config.prep.target
    noise = config.noise.circuit_noise()
    out = _output_dir(config)
    stem = f'tomo_{target}'
    paths = {
        'counts': out / f'{stem}_counts.csv',
        'rho': out / f'{stem}_rho.txt',
        'difference': out / f'{stem}_difference.csv',
        'mixture': out / f'{stem}_mixture.csv',
        'metrics': out / f'{stem}_metrics.json',
    }
    data = simulate_tomography(
        _prep_circuit(config, measure_data=False),
        noise,
        config.tomo.shots_per_setting,
        seed=config.run.seed,
        exact=config.run.exact,
        lanes=config.run.jobs,
    )
    write_tomo_csv(paths['counts'], data)
    rho = reconstruct(data, config.tomo.estimator)
    np.savetxt(paths['rho'], rho.data, fmt='%.10e')
    difference = logical_difference_matrix(rho, target)
    np.savetxt(paths['difference'], difference, delimiter=',', fmt='%.10e')
    write_mixture_csv(paths['mixture'], logical_mixture(rho))
    row = table_metrics(rho, target.basis)
    metrics = codespace_metrics(rho, target_state(target).data)
    _write_json(
        paths['metrics'],
        {
            'target': str(target),
            'acceptance': row.acceptance,
            'populations': row.populations.tolist(),
            'fidelity': metrics.fidelity,
        },
    )
    logger.info("Tomography of %s: fidelity %.4f", target, metrics.fidelity)
    return paths


def _float_column(rows, name, path):
    values = []
    for lineno, row in rows:
        try:
            values.append(float(row[name]))
        except (TypeError, ValueError) as e:
            raise SchemaError(
                f"{path}: column {name!r} needs a number, got {row[name]!r}",
                wrong_line=lineno,
            ) from e
    return np.array(values)


def _read_columns(path, required):
    with open(path, newline='') as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {', '.join(missing)}", wrong_line=1)
        rows = [(lineno, row) for lineno, row in enumerate(reader, start=2) if any(row.values())]
    return {name: _float_column(rows, name, path) for name in required}


def _curve(x, y, sigma):
    # Exact columns have no sampling error.
    if sigma is None or not np.all(sigma > 0):
        return CurveData(x, y)
    return CurveData(x, y, sigma)


def read_sweep_curves(path, exact: bool = False) -> InsertionCurves:
    """Acceptance and marginal error curves from a sweep file, using the
    exact columns or the sampled ones with their standard errors."""
    if exact:
        names = ('theta', 'accept_exact', 'err_protected_exact', 'err_gauge_exact')
        cols = _read_columns(path, names)
        x = cols['theta']
        return InsertionCurves(
            _curve(x, cols['accept_exact'], None),
            _curve(x, cols['err_protected_exact'], None),
            _curve(x, cols['err_gauge_exact'], None),
        )
    cols = _read_columns(path, SWEEP_COLUMNS[:7])
    x = cols['theta']
    return InsertionCurves(
        _curve(x, cols['accept'], cols['accept_stderr']),
        _curve(x, cols['err_protected'], cols['err_protected_stderr']),
        _curve(x, cols['err_gauge'], cols['err_gauge_stderr']),
    )


def _parse_site_inputs(inputs):
    res = {}
    for item in inputs:
        site, sep, path = item.partition('=')
        if not sep:
            raise ConfigError(f"Insertion inputs are written SITE=PATH, not {item!r}")
        try:
            res[Location(site)] = pathlib.Path(path)
        except ValueError as e:
            raise UnknownNameError(site, 'insertion site', [loc.value for loc in Location]) from e
    return res


def _insertion_json(fits):
    return {
        loc.value: {
            'delta': fit.delta,
            'a': fit.a,
            'b': fit.b,
            'c_protected': fit.c_protected,
            'd_protected': fit.d_protected,
            'c_gauge': fit.c_gauge,
            'd_gauge': fit.d_gauge,
            'delta_source': fit.delta_source,
            'converged': fit.converged,
            'fits': {name: r.as_dict() for name, r in fit.results.items()},
        }
        for loc, fit in fits.items()
    }


_COEFFICIENT_KEYS = ('a', 'b', 'c_protected', 'd_protected', 'c_gauge', 'd_gauge')


def _read_coefficients(path):
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path} is not valid JSON: {e.msg}", wrong_line=e.lineno) from e
    if not isinstance(data, dict):
        raise SchemaError(f"{path} must map sites to coefficients", wrong_line=1)
    res = {}
    for site, entry in data.items():
        if isinstance(entry, dict):
            try:
                entry = [entry[k] for k in _COEFFICIENT_KEYS]
            except KeyError as e:
                raise SchemaError(f"{path}: site {site} lacks {e.args[0]!r}", wrong_line=1) from e
        res[site] = entry
    return res


def _single_input(kind, inputs):
    if len(inputs) != 1:
        raise ConfigError(f"The {kind} fit takes one input file, got {len(inputs)}")
    return pathlib.Path(inputs[0])


def cmd_fit(
    config: ExperimentConfig, kind: str, inputs, exact: bool = False, mixture=None
) -> pathlib.Path:
    """Fit data files and write the results as JSON.

    ``insertion`` takes ``SITE=PATH`` sweep files, ``decay`` a ``'11'``
    decay file, ``ideal-decay`` an ``x,y,sigma`` curve file and ``match``
    the JSON written by an insertion fit or a mapping from site to the six
    coefficients ``a, b, c1, d1, c2, d2``.

    The decay fit starts from the logical mixture in the ``mixture`` file
    written by :py:func:`cmd_tomo`, or from a pure ``|11>`` without one.
    """
    out = _output_dir(config)
    if kind == 'insertion':
        sites = _parse_site_inputs(inputs)
        curves = {loc: read_sweep_curves(p, exact) for loc, p in sites.items()}
        fits = fit_insertion(curves, weighted=not exact, lanes=config.run.jobs)
        path = out / 'fit_insertion.json'
        _write_json(path, _insertion_json(fits))
    elif kind == 'decay':
        source = _single_input(kind, inputs)
        cols = _read_columns(source, DECAY_COLUMNS[:4])
        t = cols['t_us']
        if mixture is None:
            init_mixture = np.eye(16)[LogicalLabel(1, 1).index]
        else:
            init_mixture = read_mixture_csv(mixture)
        res = fit_decay(
            CurveData(t, cols['p1_protected']),
            CurveData(t, cols['p1_gauge']),
            init_mixture,
            acceptance=CurveData(t, cols['accept']),
            weighted=False,
        )
        path = out / 'fit_decay.json'
        write_fit_json(path, {'decay': res})
    elif kind == 'ideal-decay':
        source = _single_input(kind, inputs)
        path = out / 'fit_ideal_decay.json'
        write_fit_json(path, {'ideal_decay': fit_ideal_decay(read_curve_csv(source))})
    elif kind == 'match':
        source = _single_input(kind, inputs)
        match = match_model_params(_read_coefficients(source))
        path = out / 'fit_match.json'
        _write_json(path, dataclasses.asdict(match))
    else:
        raise UnknownNameError(kind, 'fit kind', FIT_KINDS)
    logger.info("Wrote %s fit to %s", kind, path)
    return path


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    run = config.run
    if args.seed is not None:
        run = dataclasses.replace(run, seed=args.seed)
    if args.shots is not None:
        if args.shots < 1:
            raise ConfigError(f"--shots must be positive, not {args.shots}")
        run = dataclasses.replace(run, shots=args.shots)
    if args.jobs is not None:
        run = dataclasses.replace(run, jobs=max(1, args.jobs))
    if args.exact:
        run = dataclasses.replace(run, exact=True)
    config = dataclasses.replace(config, run=run)
    if args.out is not None:
        config = dataclasses.replace(
            config, output=dataclasses.replace(config.output, directory=args.out)
        )
    target = getattr(args, 'target', None)
    if target is not None:
        config = dataclasses.replace(
            config, prep=dataclasses.replace(config.prep, target=PrepTarget.parse(target))
        )
    return config


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="YAML configuration file")
    common.add_argument('--seed', type=int, help="Seed of the sampling streams")
    common.add_argument('--shots', type=int, help="Shots per circuit")
    common.add_argument('--out', help="Output directory")
    common.add_argument(
        '--exact', action='store_true', help="Use exact probabilities instead of sampling"
    )
    common.add_argument('--jobs', type=int, help="Worker threads")
    common.add_argument('-v', '--verbose', action='store_true', help="Debug logging")

    parser = argparse.ArgumentParser(prog='ftprep', description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('prep', parents=[common], help="Prepare a logical state")
    p.add_argument('--target', help="Target such as 00, 11, ++ or +-")

    p = sub.add_parser('sweep', parents=[common], help="Sweep an inserted error")
    p.add_argument('--site', choices=[k.value for k in SweepKind])
    p.add_argument('--target', help="Target such as 00")

    p = sub.add_parser('decay', parents=[common], help="Idle an encoded state")
    p.add_argument('--state', choices=('11', 'pp'))
    p.add_argument('--echo', action='store_true', help="Mid-point X echo")

    p = sub.add_parser('tomo', parents=[common], help="Tomography of the prepared state")
    p.add_argument('--target', help="Target such as 11 or +-")

    p = sub.add_parser('fit', parents=[common], help="Fit data files")
    p.add_argument('kind', help=f"One of {', '.join(FIT_KINDS)}")
    p.add_argument('inputs', nargs='+', help="Input files (SITE=PATH for insertion)")
    p.add_argument(
        '--mixture', help="Initial logical mixture of a decay fit, as written by tomo"
    )
    return parser


def _run(args) -> None:
    config = _apply_overrides(load_config(args.config), args)
    if args.command == 'prep':
        cmd_prep(config)
    elif args.command == 'sweep':
        cmd_sweep(config, args.site)
    elif args.command == 'decay':
        cmd_decay(config, args.state, Echo.midpoint_x if args.echo else None)
    elif args.command == 'tomo':
        cmd_tomo(config)
    elif args.command == 'fit':
        cmd_fit(config, args.kind, args.inputs, exact=args.exact, mixture=args.mixture)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(levelname)s %(name)s: %(message)s',
    )
    try:
        _run(args)
    except (ConfigError, SchemaError, UnknownNameError) as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except OSError as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except FtprepError as e:
        logger.error("%s", e)
        return EXIT_NUMERICAL
    return 0


if __name__ == '__main__':
    sys.exit(main())
