import json
import math
import pytest
from quantdim.cli import ExperimentConfig, main
from quantdim.errors import ConfigError


def write_config(path, **values):
    path.write_text(json.dumps(values))
    return str(path)


def test_dim_command(tmp_path, capsys):
    assert main(['dim', '--out', str(tmp_path), '--model', 'cantor', '-q']) == 0
    assert float(capsys.readouterr().out) == pytest.approx(math.log(2) / math.log(3), abs=1e-12)
    payload = json.loads((tmp_path / 'dim.json').read_text())
    assert payload['model'] == 'cantor'
    assert payload['t_sequence'] == [[2, pytest.approx(math.log(2) / math.log(3))]]
    assert 'workers' not in payload['config']
    assert (tmp_path / 't_sequence.csv').is_file()


def test_estimate_is_deterministic(tmp_path, capsys):
    config = write_config(tmp_path / 'config.json', n_list=[2 ** k for k in range(1, 9)], tol=1e-6)
    out = tmp_path / 'out'
    assert main(['estimate', '--config', config, '--out', str(out), '-q']) == 0
    first = (out / 'estimate.json').read_bytes()
    curve = (out / 'curve.csv').read_bytes()
    assert float(capsys.readouterr().out) == pytest.approx(math.log(2) / math.log(3), abs=1e-4)
    assert main(['estimate', '--config', config, '--out', str(out), '-q']) == 0
    assert (out / 'estimate.json').read_bytes() == first
    assert main(['estimate', '--config', config, '--out', str(out), '--workers', '2', '-q']) == 0
    assert (out / 'estimate.json').read_bytes() == first
    assert (out / 'curve.csv').read_bytes() == curve


def test_antichain_command(tmp_path, capsys):
    config = write_config(tmp_path / 'config.json', n=8, trials=200)
    assert main(['antichain', '--config', config, '--out', str(tmp_path), '-q']) == 0
    assert capsys.readouterr().out.strip() == '8'
    payload = json.loads((tmp_path / 'antichain.json').read_text())
    assert payload['passed']
    assert payload['entropy_inequality']['holds']
    assert (tmp_path / 'codebook.csv').is_file()


def test_metrics_between_models(tmp_path, capsys):
    config = write_config(tmp_path / 'config.json', model='cantor', other_model='dyadic-lebesgue', tol=1e-5)
    assert main(['metrics', '--config', config, '--out', str(tmp_path), '-q']) == 0
    payload = json.loads((tmp_path / 'metrics.json').read_text())
    assert payload['rho1']['lower'] <= float(capsys.readouterr().out) <= payload['rho1']['upper']
    assert payload['rho_r']['optimal']


def test_unknown_config_key(tmp_path, capsys):
    config = write_config(tmp_path / 'config.json', bogus=1)
    assert main(['dim', '--config', config, '-q']) == 2
    error = json.loads(capsys.readouterr().out)
    assert error == {'command': 'dim', 'error': 'ConfigError', 'message': 'Unknown configuration keys: bogus'}


def test_bad_values(tmp_path, capsys):
    assert main(['dim', '--seed', '-1', '-q', '--out', str(tmp_path)]) == 2
    assert main(['dim', '--model', str(tmp_path / 'missing.json'), '-q', '--out', str(tmp_path)]) == 2
    config = write_config(tmp_path / 'config.json', n=4)
    assert main(['antichain', '--config', config, '--out', str(tmp_path), '-q']) == 0
    config = write_config(tmp_path / 'config.json', n_list=[4, 8], tol=1e-6)
    assert main(['estimate', '--config', config, '--out', str(tmp_path), '-q']) == 1
    assert json.loads(capsys.readouterr().out.splitlines()[-1])['error'] == 'IllConditioned'


def test_config_round_trip():
    config = ExperimentConfig.from_dict({'model': 'cantor', 'n_list': [2, 4]})
    assert config.n_list == [2, 4]
    assert 'workers' not in config.resolved()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict([1, 2])


@pytest.mark.slow
def test_counter_schedule_command(tmp_path, capsys):
    config = write_config(tmp_path / 'config.json', model='geom-a05-b033', schedule='counter', counter_ns=[1, 1024],
                          demo_ms=[4, 8])
    assert main(['stability', '--config', config, '--out', str(tmp_path), '-q']) == 0
    assert capsys.readouterr().out.strip() == '1 flagged of 2'
    payload = json.loads((tmp_path / 'stability.json').read_text())
    assert [row['violations'] != [] for row in payload['rows']] == [False, True]
    assert payload['discontinuity']['rows'][0]['degenerate']
