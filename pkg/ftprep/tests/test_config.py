import math

import numpy as np
import pytest
from validobj import ValidationError

from ftprep.config import (
    DEFAULT_CONFIG_PATH,
    ExperimentConfig,
    SweepKind,
    load_config,
    parse_angle,
    parse_config,
)
from ftprep.errors import ConfigError
from ftprep.noisemodels import Echo
from ftprep.prep import CnotModel, PrepTarget

NOISE = """\
noise:
  t1_us: {D1: 50, D2: 60, D3: 70, D4: 80, S1: 90}
"""


def _write(tmp_path, text):
    path = tmp_path / 'config.yaml'
    path.write_text(text)
    return path


def test_default_config():
    config = load_config()
    assert isinstance(config, ExperimentConfig)
    assert config.noise.t1_us == (50.4, 70.3, 77.7, 68.5, 68.0)
    assert config.noise.zz_khz[0, 4] == config.noise.zz_khz[4, 0] == -94.5
    assert config.noise.zz_khz[1, 2] == 0
    assert config.prep.target == PrepTarget.parse('11')
    assert config.sweep.site is SweepKind.B
    np.testing.assert_allclose(config.sweep.theta, np.linspace(0, math.pi, 13))
    np.testing.assert_allclose(config.sweep.yy_theta, np.linspace(0, math.pi / 6, 9))
    assert config.decay.echo is Echo.none
    assert config.decay.echo_qubits == (0, 1, 2, 3)
    assert config.run.seed == 20211
    noise = config.noise.to_noise_config()
    assert noise.p0[4] == 0.0424
    assert DEFAULT_CONFIG_PATH.exists()


def test_empty_config_uses_defaults(tmp_path):
    config = load_config(_write(tmp_path, ''))
    assert config.run == ExperimentConfig().run
    assert config.noise.p0 == (0.0,) * 5


def test_overrides(tmp_path):
    text = NOISE + """\
prep:
  target: 01
  cnot_model: stark
decay:
  state: pp
  echo: midpoint_x
  times_us: [0, 10, 20]
sweep:
  site: yy
  theta: [0, pi/2, -3*pi/4]
"""
    config = load_config(_write(tmp_path, text))
    assert config.noise.t1_us == (50.0, 60.0, 70.0, 80.0, 90.0)
    assert config.prep.target == PrepTarget.parse('01')
    assert config.prep.cnot_model is CnotModel.stark
    assert config.decay.state == 'pp'
    assert config.decay.echo is Echo.midpoint_x
    np.testing.assert_allclose(config.decay.times_us, [0, 10, 20])
    assert config.sweep.site is SweepKind.yy
    np.testing.assert_allclose(config.sweep.theta, [0, math.pi / 2, -3 * math.pi / 4])


def test_gate_damping_switch(tmp_path):
    config = load_config(_write(tmp_path, NOISE + '  gate_damping: false\n'))
    assert config.noise.circuit_noise().t1_us == (math.inf,) * 5
    assert config.noise.to_noise_config().t1_us[0] == 50


def test_parse_angle():
    assert parse_angle('pi') == pytest.approx(math.pi)
    assert parse_angle('-pi/2') == pytest.approx(-math.pi / 2)
    assert parse_angle('3*pi/4') == pytest.approx(3 * math.pi / 4)
    assert parse_angle('0.5 pi') == pytest.approx(math.pi / 2)
    assert parse_angle('1.25') == 1.25
    with pytest.raises(ValidationError):
        parse_angle('tau')
    with pytest.raises(ValidationError):
        parse_angle('__import__("os")')


def test_unknown_key_reports_line(tmp_path):
    text = 'run:\n  shots: 10\n  sede: 3\n'
    with pytest.raises(ConfigError) as exinfo:
        load_config(_write(tmp_path, text))
    message = str(exinfo.value)
    assert "'sede'" in message
    assert 'line 3' in message
    assert exinfo.value.path is not None


def test_wrong_value_reports_line(tmp_path):
    text = 'output:\n  directory: out\nrun:\n  shots: 0\n'
    with pytest.raises(ConfigError) as exinfo:
        load_config(_write(tmp_path, text))
    message = str(exinfo.value)
    assert "'shots' at line 4" in message
    assert 'positive' in message


def test_per_qubit_tables(tmp_path):
    text = 'noise:\n  p0: {D1: 0.1, D2: 0.1, D3: 0.1, D4: 0.1}\n'
    with pytest.raises(ConfigError) as exinfo:
        load_config(_write(tmp_path, text))
    assert 'S1' in str(exinfo.value)
    text = 'noise:\n  p1: {D1: 0.1, D2: 0.1, D3: 0.1, D4: 0.1, S1: 1.5}\n'
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, text))
    text = 'noise:\n  t1_us: {D1: 0, D2: 1, D3: 1, D4: 1, S1: 1}\n'
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, text))


@pytest.mark.parametrize(
    'pairs',
    [
        '{D1-D1: 10}',
        '{D1-X9: 10}',
        '{D1+S1: 10}',
        '{D1-S1: 10, S1-D1: 20}',
    ],
)
def test_bad_zz_tables(tmp_path, pairs):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, f'noise:\n  zz_khz: {pairs}\n'))


def test_zz_pair_order_does_not_matter():
    config = parse_config({'noise': {'zz_khz': {'S1-D2': -30.0, 'D2-S1': -30.0}}})
    assert config.noise.zz_khz[1, 4] == config.noise.zz_khz[4, 1] == -30.0


def test_grids():
    config = parse_config({'decay': {'times_us': {'start': 0, 'stop': 50, 'num': 6}}})
    np.testing.assert_allclose(config.decay.times_us, [0, 10, 20, 30, 40, 50])
    with pytest.raises(ConfigError):
        parse_config({'decay': {'times_us': []}})
    with pytest.raises(ConfigError):
        parse_config({'sweep': {'theta': {'start': 0, 'stop': 'pi'}}})


def test_bad_names():
    with pytest.raises(ConfigError):
        parse_config({'prep': {'target': '0+'}})
    with pytest.raises(ConfigError):
        parse_config({'decay': {'state': '00'}})
    with pytest.raises(ConfigError):
        parse_config({'decay': {'echo_qubits': ['D5']}})
    with pytest.raises(ConfigError):
        parse_config({'sweep': {'site': 'D'}})


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError) as exinfo:
        load_config(tmp_path / 'missing.yaml')
    assert 'Cannot read' in str(exinfo.value)
    with pytest.raises(ConfigError) as exinfo:
        load_config(_write(tmp_path, 'run: [1, 2\n'))
    assert 'not valid YAML' in str(exinfo.value)
