from __future__ import annotations
import csv
import json
import logging
from fractions import Fraction
from importlib import resources
from numbers import Real
from pathlib import Path
from typing import Iterable, Sequence
import numpy as np
from .antichain import Antichain, Codebook, word_mass
from .errors import ConfigError
from .ifs_core import FiniteIfs, GeometricIfs, IfsModel, SimilarityMap
from .measure import SampleBatch
from .quantizer import ErrorCurve


logger = logging.getLogger(__name__)

BUNDLED_MODELS = ('cantor', 'dyadic-lebesgue', 'geom-a05-b033')


def decode_number(value) -> Real:
    """ int, float or {"num": p, "den": q} (kept exact as a Fraction) """
    if isinstance(value, dict):
        if set(value) != {'num', 'den'}:
            raise ConfigError(f'Rational numbers need exactly the keys num and den, got {sorted(value)}')
        return Fraction(int(value['num']), int(value['den']))
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f'Expected a number, got {value!r}')
    return value


def encode_number(value: Real):
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return value.numerator
        return {'num': value.numerator, 'den': value.denominator}
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _check_dim(spec: dict, model: IfsModel) -> IfsModel:
    if spec['dim'] != model.dim:
        raise ConfigError(f'Model description declares dim {spec["dim"]} but its maps act in dimension {model.dim}')
    return model


def model_from_dict(spec: dict) -> IfsModel:
    """
    Model description: {"dim": k, "ambient": [[lo, hi], ...], "kind": "finite", "maps": [...], "probs": [...]}
    or {"dim": 1, "kind": "geometric", "params": {"a": ..., "b": ..., "c": ..., "head": [...]}}.
    """
    if not isinstance(spec, dict):
        raise ConfigError('A model description must be a JSON object')
    kind = spec.get('kind')
    try:
        if not isinstance(spec['dim'], int) or isinstance(spec['dim'], bool) or spec['dim'] < 1:
            raise ConfigError(f'Model dim must be a positive integer, got {spec["dim"]!r}')
        ambient = spec.get('ambient')
        if ambient is not None:
            ambient = [(decode_number(lo), decode_number(hi)) for lo, hi in ambient]
        if kind == 'finite':
            maps = [SimilarityMap(decode_number(m['ratio']), tuple(decode_number(t) for t in m['translation']),
                                  m.get('orthogonal')) for m in spec['maps']]
            probs = [decode_number(p) for p in spec['probs']]
            return _check_dim(spec, FiniteIfs(maps, probs, ambient))
        if kind == 'geometric':
            if ambient is not None and ambient != [(0, 1)]:
                raise ConfigError('Geometric families live on the ambient interval [0, 1]')
            params = spec['params']
            model = GeometricIfs(decode_number(params['a']), decode_number(params['b']), decode_number(params['c']),
                                 [decode_number(q) for q in params.get('head', [])])
            return _check_dim(spec, model)
    except KeyError as exc:
        raise ConfigError(f'Model description misses the field {exc}') from exc
    raise ConfigError(f'Unknown model kind {kind!r}')


def model_to_dict(model: IfsModel) -> dict:
    ambient = [[encode_number(lo), encode_number(hi)] for lo, hi in model.ambient]
    if isinstance(model, GeometricIfs):
        params = {'a': encode_number(model.a), 'b': encode_number(model.b), 'c': encode_number(model.c),
                  'head': [encode_number(q) for q in model.head]}
        return {'dim': 1, 'ambient': ambient, 'kind': 'geometric', 'params': params}
    if isinstance(model, FiniteIfs):
        maps = []
        for m in model.maps:
            entry = {'ratio': encode_number(m.ratio), 'translation': [encode_number(t) for t in m.translation]}
            if m.orthogonal is not None:
                entry['orthogonal'] = [[encode_number(v) for v in row] for row in m.orthogonal]
            maps.append(entry)
        return {'dim': model.dim, 'ambient': ambient, 'kind': 'finite', 'maps': maps,
                'probs': [encode_number(p) for p in model.probabilities]}
    raise TypeError(f'Cannot serialize {type(model).__name__}')


def load_model(path: str | Path) -> IfsModel:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'Model file {path} does not exist')
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f'Model file {path} is not valid JSON: {exc}') from exc
    return model_from_dict(spec)


def dump_model(model: IfsModel, path: str | Path, name: str | None = None):
    spec = model_to_dict(model)
    if name is not None:
        spec['name'] = name
    write_json(spec, path)


def bundled_model(name: str) -> IfsModel:
    if name not in BUNDLED_MODELS:
        raise ConfigError(f'Unknown bundled model {name!r}, choose from {", ".join(BUNDLED_MODELS)}')
    text = resources.files('quantdim').joinpath('models', f'{name}.json').read_text()
    return model_from_dict(json.loads(text))


def resolve_model(ref) -> tuple[str, IfsModel]:
    """
    A bundled model name, a path to a model file or an inline description.
    :return: name and model
    """
    if isinstance(ref, dict):
        return ref.get('name', ref.get('kind', 'inline')), model_from_dict(ref)
    if not isinstance(ref, str):
        raise ConfigError('Model must be a bundled name, a file path or an inline description')
    if ref in BUNDLED_MODELS:
        return ref, bundled_model(ref)
    return Path(ref).stem, load_model(ref)


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, Fraction):
        return float(value)
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def write_json(payload: dict, path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + '\n')
    logger.debug('Wrote %s', path)


def write_csv(header: Sequence[str], rows: Iterable[Sequence], path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in _plain(list(row))])
    logger.debug('Wrote %s', path)


def write_samples(batch: SampleBatch, path: str | Path):
    header = ['index'] + [f'x{i}' for i in range(batch.points.shape[1])] + ['depth']
    rows = zip(batch.points.tolist(), batch.depth_used)
    write_csv(header, ([k] + list(p) + [int(d)] for k, (p, d) in enumerate(rows)), path)


def write_codebook(codebook: Codebook, path: str | Path):
    header = ['index'] + [f'x{i}' for i in range(codebook.dim)]
    if codebook.antichain is not None:
        header.append('word')
        rows = ([k] + list(p) + ['.'.join(map(str, w))]
                for k, (p, w) in enumerate(zip(codebook.points.tolist(), codebook.antichain)))
    else:
        rows = ([k] + list(p) for k, p in enumerate(codebook.points.tolist()))
    write_csv(header, rows, path)


def write_antichain(ac: Antichain, probs: Sequence[Real], path: str | Path):
    write_csv(['word', 'length', 'mass'],
              (('.'.join(map(str, w)), len(w), float(word_mass(probs, w))) for w in ac), path)


def write_curve(curve: ErrorCurve, path: str | Path):
    write_csv(['n', 'log_n', 'e_hat_lower', 'e_hat_upper', 'method'], curve.rows(), path)


def curve_to_dict(curve: ErrorCurve) -> dict:
    return {'measure': curve.measure_id, 'method': curve.method,
            'entries': [{'n': e.n, 'card': e.card, 'lower': e.bracket.lower, 'upper': e.bracket.upper,
                         'converged': e.bracket.converged, 'degenerate': e.bracket.degenerate,
                         'reference': e.reference, 'gap': e.gap} for e in curve]}


def write_stability(rows: Sequence, path: str | Path):
    header = ['theta', 'dimension', 'dimension_bound', 'delta', 'prob_l1', 'map_sup_l1', 'hutchinson',
              'rho1', 'flagged']
    write_csv(header, ((r.theta, r.dimension, r.dimension_bound, r.delta, r.prob_l1, r.map_sup_l1, r.hutchinson,
                        None if r.rho1 is None else r.rho1.value, int(r.flagged)) for r in rows), path)
