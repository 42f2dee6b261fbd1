import pytest

from kpgan import gradcheck


@pytest.fixture(scope="module")
def results():
    return gradcheck.run_gradcheck(seed=0)


def test_covers_ops_and_losses(results):
    names = [r.name for r in results]
    assert len(names) >= 8 and len(set(names)) == len(names)
    assert {"gru_sequence_rev", "softmax_masked", "generator_nll", "discriminator_bce", "rl_surrogate"} <= set(names)


def test_all_within_tolerance(results):
    assert all(r.passed and r.max_rel_error < gradcheck.TOLERANCE for r in results)


@pytest.mark.parametrize("seed", [1, 2])
def test_other_seeds(seed):
    assert all(r.passed for r in gradcheck.run_gradcheck(seed=seed))


def test_corruption_is_detected():
    results = gradcheck.run_gradcheck(seed=0, corrupt="rl_surrogate")
    failed = [r.name for r in results if not r.passed]
    assert failed == ["rl_surrogate"]


def test_table_lists_every_check(results):
    table = gradcheck.format_table(results)
    assert all(r.name in table for r in results)
