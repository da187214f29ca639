from __future__ import annotations
import json
import logging
import sys
from argparse import ArgumentParser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from .antichain import (antichain_for_n, build_antichain, check_entropy_inequality, codebook_from_antichain,
                        verify_antichain)
from .dimension import (DEFAULT_THETAS, analytic_dimension, counter_schedule, discontinuity_demo,
                        estimate_dimension, perturbed_model, schedule_bounds, stability_experiment, t_sequence)
from .errors import ConfigError, QuantDimError
from .export import (curve_to_dict, resolve_model, write_antichain, write_codebook, write_csv, write_curve,
                     write_json, write_stability)
from .ifs_core import GeometricIfs, truncate
from .measure import SelfSimilarMeasure
from .metrics import continuity_gap, hutchinson_bound, rho1, rho_r
from .quantizer import error_curve


logger = logging.getLogger(__name__)

COMMANDS = ('dim', 'estimate', 'antichain', 'metrics', 'stability')
UNECHOED = ('workers',)  # settings that never change a result


@dataclass
class ExperimentConfig:
    model: str | dict = 'cantor'
    out: str = 'out'
    seed: int = 0
    workers: int = 1
    tol: float = 1e-6
    # dim
    t_list: list = field(default_factory=lambda: [2, 5, 10, 20, 40])
    # estimate
    n_list: list = field(default_factory=lambda: [2 ** k for k in range(2, 11)])
    strategy: str = 'antichain'
    eval_method: str = 'exact'
    samples: int = 100_000
    lloyd_iters: int = 30
    window: list | None = None
    # antichain
    n: int | None = 64
    eps: float | None = None
    trials: int = 1000
    # metrics
    other_model: str | dict | None = None
    r: float = 1.
    truncations: list = field(default_factory=lambda: [5, 10, 20, 40])
    sizes: list = field(default_factory=lambda: [1, 4, 16])
    # stability
    schedule: str = 'theta'
    thetas: list | None = None
    mode: str = 'prob'
    counter_ns: list = field(default_factory=lambda: [2 ** i for i in range(11)])
    check_orders: list = field(default_factory=lambda: [1, 2, 3, 4])
    prob_floor: float = 1e-3
    ratio_floor: float = 1e-12
    schedule_fraction: float = .5
    demo_ms: list = field(default_factory=lambda: [4, 8, 16])
    placement: str = 'midpoint'

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        if not isinstance(data, dict):
            raise ConfigError('Configuration must be a JSON object')
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f'Unknown configuration keys: {", ".join(unknown)}')
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f'Configuration file {path} does not exist')
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f'Configuration file {path} is not valid JSON: {exc}') from exc

    def resolved(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in UNECHOED}


def _output(config: ExperimentConfig, name: str) -> Path:
    return Path(config.out) / name


def _measure(config: ExperimentConfig):
    name, model = resolve_model(config.model)
    return name, model, SelfSimilarMeasure(model, name=name)


def cmd_dim(config: ExperimentConfig) -> str:
    name, model = resolve_model(config.model)
    dim = analytic_dimension(model)
    sequence = t_sequence(model, [n for n in config.t_list if not model.is_finite or n <= model.size],
                          config.workers)
    write_csv(['N', 't_N'], sequence, _output(config, 't_sequence.csv'))
    write_json({'model': name, 'dimension': dim.value, 'tail_bound': dim.tail_bound, 'terms': dim.terms_used,
                't_sequence': sequence, 'config': config.resolved()}, _output(config, 'dim.json'))
    return repr(dim.value)


def cmd_estimate(config: ExperimentConfig) -> str:
    name, model, mu = _measure(config)
    curve = error_curve(mu, config.n_list, config.strategy, config.eval_method, config.tol, config.samples,
                        config.seed, config.workers, config.lloyd_iters)
    estimate = estimate_dimension(curve, tuple(config.window) if config.window else None)
    write_curve(curve, _output(config, 'curve.csv'))
    write_json({'model': name, 'curve': curve_to_dict(curve), 'estimate': asdict(estimate),
                'analytic_dimension': analytic_dimension(model).value, 'config': config.resolved()},
               _output(config, 'estimate.json'))
    return repr(estimate.dimension)


def cmd_antichain(config: ExperimentConfig) -> str:
    name, model = resolve_model(config.model)
    if not model.is_finite:
        model = truncate(model, model.truncation_index(config.tol))
    probs = [model.prob(j) for j in range(1, model.size + 1)]
    ratios = [model.ratio(j) for j in range(1, model.size + 1)]
    if config.eps is not None:
        eps, ac = config.eps, build_antichain(probs, config.eps)
    elif config.n is not None:
        eps, ac = antichain_for_n(model, config.n, strict=False)
    else:
        raise ConfigError('The antichain command needs n or eps')
    report = verify_antichain(probs, ac, config.trials, config.seed)
    entropy = check_entropy_inequality(ac, probs, ratios, analytic_dimension(model).value)
    write_antichain(ac, probs, _output(config, 'antichain.csv'))
    if model.dim == 1:
        write_codebook(codebook_from_antichain(model, ac), _output(config, 'codebook.csv'))
    write_json({'model': name, 'eps': eps, 'card': len(ac), 'depth': ac.depth, 'words': [list(w) for w in ac],
                'check': asdict(report), 'passed': report.passed, 'entropy_inequality': asdict(entropy),
                'config': config.resolved()},
               _output(config, 'antichain.json'))
    return str(len(ac))


def cmd_metrics(config: ExperimentConfig) -> str:
    name, model, mu = _measure(config)
    payload = {'model': name, 'config': config.resolved()}
    if config.other_model is not None:
        other_name, other_model = resolve_model(config.other_model)
        other = SelfSimilarMeasure(other_model, name=other_name)
        payload['rho1'] = asdict(rho1(mu, other, config.tol))
        payload['rho_r'] = asdict(rho_r(mu, other, config.r, config.tol, allow_upper_bound=True))
        if model.dim == other_model.dim:
            payload['hutchinson_bound'] = hutchinson_bound(model, other_model)
        write_json(payload, _output(config, 'metrics.json'))
        return repr(payload['rho1']['value'])
    if model.is_finite:
        raise ConfigError('Continuity checks need an infinite model or an other_model to compare with')
    reports = [continuity_gap(model, N, n, config.tol, config.strategy, config.seed, config.lloyd_iters)
               for N in config.truncations for n in config.sizes]
    write_csv(['N', 'n', 'lhs', 'rhs', 'slack', 'holds'],
              ((r.N, r.n, r.lhs, r.rhs, r.slack, int(r.holds)) for r in reports), _output(config, 'continuity.csv'))
    payload['continuity'] = [asdict(r) for r in reports]
    payload['hutchinson_bound'] = {N: hutchinson_bound(model, truncate(model, N)) for N in config.truncations}
    write_json(payload, _output(config, 'metrics.json'))
    return f'{sum(r.holds for r in reports)}/{len(reports)}'


def cmd_stability(config: ExperimentConfig) -> str:
    name, model = resolve_model(config.model)
    if config.schedule == 'theta':
        models = [(theta, perturbed_model(model, theta, config.mode)) for theta in (config.thetas or DEFAULT_THETAS)]
    elif config.schedule == 'counter':
        models = counter_schedule(config.counter_ns, model.b, model.c) if isinstance(model, GeometricIfs) \
            else counter_schedule(config.counter_ns)
    else:
        raise ConfigError(f'Unknown schedule {config.schedule!r}')
    rows = stability_experiment(model, models=models, check_orders=config.check_orders, prob_floor=config.prob_floor,
                                ratio_floor=config.ratio_floor, tol=config.tol, workers=config.workers,
                                schedule_fraction=config.schedule_fraction)
    bounds = schedule_bounds(model, models, config.check_orders, config.schedule_fraction)
    demo = discontinuity_demo(config.demo_ms, config.placement, min(config.tol, 1e-9))
    write_stability(rows, _output(config, 'stability.csv'))
    write_json({'model': name, 'rows': [asdict(r) for r in rows], 'schedule_bounds': [asdict(b) for b in bounds],
                'discontinuity': asdict(demo), 'config': config.resolved()}, _output(config, 'stability.json'))
    return f'{sum(r.flagged for r in rows)} flagged of {len(rows)}'


HANDLERS = {'dim': cmd_dim, 'estimate': cmd_estimate, 'antichain': cmd_antichain, 'metrics': cmd_metrics,
            'stability': cmd_stability}


def parse_args(args=None):
    parser = ArgumentParser(description="""
        Quantization dimension experiments on self-similar measures.
    """)
    parser.add_argument('command', choices=COMMANDS, help='Pipeline to run.')
    parser.add_argument('--config', help='JSON file with ExperimentConfig fields.')
    parser.add_argument('--model', help='Bundled model name or model file; overrides the config.')
    parser.add_argument('--out', help='Output directory.')
    parser.add_argument('--seed', type=int, help='Seed of every random stream.')
    parser.add_argument('--workers', type=int, help='Worker processes.')
    parser.add_argument('--tol', type=float, help='Numerical tolerance.')
    parser.add_argument('--verbose', '-v', default=0, action='count', help='More log output on stderr.')
    parser.add_argument('--quiet', '-q', action='store_true', help='Only log errors.')
    return parser.parse_args(args)


def build_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    for key in ('model', 'out', 'seed', 'workers', 'tol'):
        value = getattr(args, key)
        if value is not None:
            setattr(config, key, value)
    if config.seed < 0 or config.seed >= 2 ** 64:
        raise ConfigError('Seed must be an unsigned 64-bit integer')
    return config


def main(args=None) -> int:
    args = parse_args(args)
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose > 1 else
                                              logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level, format='%(levelname)s %(name)s: %(message)s')
    try:
        config = build_config(args)
        print(HANDLERS[args.command](config))
    except (QuantDimError, ValueError, ArithmeticError, OSError) as exc:
        logger.debug('Command %s failed', args.command, exc_info=True)
        print(json.dumps({'command': args.command, 'error': type(exc).__name__, 'message': str(exc)}, sort_keys=True))
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
