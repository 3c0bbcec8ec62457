import json

import pandas as pd
import pytest

import run_estimation
from scripts.cli import build_parser, main, split_overrides


@pytest.fixture
def synthetic(tmp_path, small_job):
    job = small_job()
    data = tmp_path / 'obs.csv'
    assert main(['synth', '--job', str(job), '--out', str(data)]) == 0
    return job, data


def test_runner_without_arguments_prints_overview(capsys):
    assert run_estimation.main([]) == 0
    out = capsys.readouterr().out
    assert 'AEL Parameter Estimation' in out
    assert 'summarize' in out


def test_help_and_usage_errors(small_job):
    assert main(['--help']) == 0
    assert main([]) == 2
    assert main(['synth', '--job', str(small_job())]) == 2
    assert main(['fit']) == 2
    assert main(['fit', '--job', str(small_job()), 'stray']) == 2


def test_overrides_are_split_from_extras():
    parser = build_parser()
    assert split_overrides(parser, ['--chain.n_steps', '50', '--surrogate.level=2']) == [
        ('chain.n_steps', '50'), ('surrogate.level', '2'),
    ]


def test_configuration_errors_exit_with_two(tmp_path, small_job):
    out = str(tmp_path / 'x.csv')
    assert main(['synth', '--job', str(tmp_path / 'absent.json'), '--out', out]) == 2
    assert main(['synth', '--job', str(small_job()), '--out', out, '--chain.n_stepz', '5']) == 2
    assert main(['fit', '--job', str(small_job())]) == 2


def test_synth_prints_sidecar_and_is_reproducible(tmp_path, small_job, capsys):
    job = small_job()
    first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
    assert main(['synth', '--job', str(job), '--out', str(first)]) == 0
    assert capsys.readouterr().out.strip() == str(tmp_path / 'a.truth.json')
    assert main(['synth', '--job', str(job), '--out', str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()

    assert main(['synth', '--job', str(job), '--out', str(second), '--seed', '6']) == 0
    assert first.read_bytes() != second.read_bytes()


def test_corrupt_observations_exit_with_three(tmp_path, synthetic):
    job, data = synthetic
    df = pd.read_csv(data)
    df.loc[3, 't_s'] = df.loc[2, 't_s']
    df.to_csv(data, index=False)
    assert main(['fit', '--job', str(job), '--data', str(data), '--out-dir', str(tmp_path / 'out')]) == 3


def test_unreachable_surrogate_target_exits_with_five(tmp_path, small_job, capsys):
    code = main(['surrogate', '--job', str(small_job()), '--out-model', str(tmp_path / 'model.json'),
                 '--surrogate.target', '1e-14', '--surrogate.max_level', '1'])
    assert code == 5
    assert 'surrogate target missed' in capsys.readouterr().out


def test_surrogate_command_writes_model_and_validation(tmp_path, synthetic, capsys):
    job, data = synthetic
    model = tmp_path / 'model.json'
    assert main(['surrogate', '--job', str(job), '--data', str(data), '--out-model', str(model)]) == 0
    out = capsys.readouterr().out
    assert 'level: 1' in out
    assert 'nodes: 15' in out
    with open(tmp_path / 'model.validation.json', 'r', encoding='utf-8') as f:
        assert json.load(f)['n_test'] == 10


def test_fit_and_summarize_round(tmp_path, synthetic, capsys):
    job, data = synthetic
    out_a, out_b = tmp_path / 'a', tmp_path / 'b'
    assert main(['fit', '--job', str(job), '--data', str(data), '--out-dir', str(out_a)]) == 0
    assert main(['fit', '--job', str(job), '--data', str(data), '--out-dir', str(out_b)]) == 0
    assert (out_a / 'samples.csv').read_bytes() == (out_b / 'samples.csv').read_bytes()
    assert (out_a / 'summary.json').read_bytes() == (out_b / 'summary.json').read_bytes()
    assert 'acceptance rate' in capsys.readouterr().out

    summary_dir = tmp_path / 'summary'
    assert main(['summarize', '--samples', str(out_a / 'samples.csv'), '--out-dir', str(summary_dir)]) == 0
    with open(summary_dir / 'summary.json', 'r', encoding='utf-8') as f:
        document = json.load(f)
    with open(out_a / 'summary.json', 'r', encoding='utf-8') as f:
        original = json.load(f)
    for recomputed, stored in zip(document['parameters'], original['parameters']):
        assert recomputed['name'] == stored['name']
        assert recomputed['mean'] == pytest.approx(stored['mean'], rel=1e-9)
        assert recomputed['q95'] == pytest.approx(stored['q95'], rel=1e-9)


def test_fit_with_overrides_and_chains(tmp_path, synthetic):
    job, data = synthetic
    out = tmp_path / 'out'
    assert main(['fit', '--job', str(job), '--data', str(data), '--out-dir', str(out), '--chains', '2',
                 '--chain.n_steps', '100']) == 0
    assert len(pd.read_csv(out / 'samples.csv')) == 160
    with open(out / 'resolved_job.json', 'r', encoding='utf-8') as f:
        assert json.load(f)['chain']['n_steps'] == 100


def test_ls_fit_writes_result(tmp_path, synthetic):
    job, data = synthetic
    out = tmp_path / 'ls.json'
    assert main(['ls-fit', '--job', str(job), '--data', str(data), '--out', str(out)]) == 0
    with open(out, 'r', encoding='utf-8') as f:
        result = json.load(f)
    assert set(result) == {'params', 'rmse', 'iterations', 'converged', 'message', 'cost', 'initial_cost', 'optimality'}
    assert result['cost'] <= result['initial_cost']
    assert list(result['params']) == ['r1', 'r2', 'r3', 's', 't1', 't2', 't3']


def test_simulate_writes_trajectory(tmp_path, small_job, synthetic):
    job, data = synthetic
    out = tmp_path / 'trajectory.csv'
    assert main(['simulate', '--job', str(job), '--out', str(out)]) == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == ['t_s', 'i_cell_A_m2', 'p_bar', 't_s_out_K', 'u_cell_V']
    assert len(frame) == 8

    from_file = tmp_path / 'from_file.csv'
    assert main(['simulate', '--job', str(job), '--schedule', str(data), '--out', str(from_file)]) == 0
    pd.testing.assert_frame_equal(pd.read_csv(from_file), frame)
