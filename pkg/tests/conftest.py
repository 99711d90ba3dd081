import numpy as np
import pytest

from bplc.float_format import get_format, word_dtype


def special_words(fmt):
    """Zero, +-Inf, NaNs, subnormals and extremes for a float format."""
    fmt = get_format(fmt)
    if not fmt.is_float:
        return np.array([0, 1, fmt.word_mask, fmt.word_mask >> 1], dtype=word_dtype(fmt))
    top = fmt.exp_mask << fmt.frac_bits
    sign = 1 << (fmt.total_bits - 1)
    words = [0, sign, top, top | sign, top | 1, top | fmt.frac_mask, 1, fmt.frac_mask, sign | 1, top - 1, fmt.word_mask]
    return np.array(words, dtype=word_dtype(fmt))


def random_words(rng, fmt, size, specials=0.1):
    fmt = get_format(fmt)
    w = rng.integers(0, 1 << fmt.total_bits, size, dtype=np.uint64).astype(word_dtype(fmt))
    if specials and size:
        pool = special_words(fmt)
        mask = rng.random(size) < specials
        w[mask] = rng.choice(pool, int(mask.sum()))
    return w


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria record (number, title, PASS/FAIL, detail) here; printed at the end of the run
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        title, status, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"{status} criterion {num:>2}: {title} :: {detail}")
