import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from histnorm.data import (
    CorpusFormatError, Dataset, TokenPair, apply_casing_policy, corpus_stats, format_stats_table,
    load_tsv, parse_tsv, resplit, save_tsv,
)

field_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\t\n\r"),
    min_size=1, max_size=12).filter(lambda s: s.strip())


def _pairs(n, tag="p"):
    return [TokenPair(f"{tag}{i}", f"{tag}{i}") for i in range(n)]


def test_load_examples(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("gyf\tgive\nlate\tlate\n", encoding="utf-8")
    pairs = load_tsv(path)
    assert pairs == [TokenPair("gyf", "give"), TokenPair("late", "late")]
    assert not pairs[0].unchanged and pairs[1].unchanged


def test_three_fields_name_the_line(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("gyf\tgive\nlate\tlate\textra\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError, match=r"bad\.tsv:2"):
        load_tsv(path)


def test_empty_file_is_an_error(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(CorpusFormatError):
        load_tsv(path)


def test_blank_lines_skipped_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        pairs = parse_tsv("a\tb\n\n  \nc\td\n", "x.tsv")
    assert len(pairs) == 2
    assert "x.tsv:2" in caplog.text


def test_crlf_and_nfc():
    pairs = parse_tsv("á\tá\r\n")
    assert pairs[0].historical == "á" and pairs[0].unchanged


def test_token_pair_validation():
    with pytest.raises(ValueError):
        TokenPair("", "a")
    with pytest.raises(ValueError):
        TokenPair("a\tb", "c")
    assert TokenPair(" late ", "late").unchanged


@given(st.lists(st.builds(TokenPair, field_text, field_text), min_size=1, max_size=20))
def test_save_load_roundtrip(tmp_path_factory, pairs):
    path = tmp_path_factory.mktemp("rt") / "c.tsv"
    save_tsv(pairs, path)
    assert load_tsv(path) == pairs


def test_casing_policy():
    pairs = [TokenPair("Late", "Late")]
    for phase in ("train", "dev", "test_input"):
        assert apply_casing_policy(pairs, phase) == pairs
    assert apply_casing_policy(["City"], "eval") == ["city"]
    p = apply_casing_policy([TokenPair("CITY", "city")], "eval")[0]
    assert p.unchanged
    with pytest.raises(ValueError):
        apply_casing_policy(pairs, "predict")


def test_stats_single_pair():
    one = [TokenPair("a", "a")]
    st_ = corpus_stats(Dataset(one, one, one))
    assert st_.unchanged_rate_test == 1.0
    assert st_.char_vocab == 1
    assert st_.avg_len == 1 and st_.max_len == 1
    assert (st_.n_train, st_.n_dev, st_.n_test) == (1, 1, 1)


def test_stats_are_case_sensitive():
    train = [TokenPair("Late", "late"), TokenPair("gyf", "give")]
    test = [TokenPair("Late", "late"), TokenPair("late", "late")]
    s = corpus_stats(Dataset(train, train, test))
    assert s.unchanged_rate_test == 0.5
    assert s.token_vocab == 4                 # Late, late, gyf, give
    assert s.token_vocab_historical == 2
    assert s.token_vocab_modern == 2
    assert s.char_vocab == len(set("Lategyfliv"))
    assert s.max_len == 4
    assert s.avg_len == pytest.approx(15 / 4)
    assert s.avg_len <= s.max_len
    assert "unchanged_rate_test=0.500000" in s.to_keyvalue()
    assert "Late" not in format_stats_table([s])


def test_resplit_identity():
    ds = Dataset(_pairs(3, "a"), _pairs(2, "b"), _pairs(4, "c"))
    new = resplit(ds, 0, 0)
    assert (new.train, new.dev, new.test) == (ds.train, ds.dev, ds.test)


def test_resplit_takes_from_the_front_in_order():
    ds = Dataset(_pairs(1, "a"), _pairs(1, "b"), _pairs(5, "c"))
    new = resplit(ds, 2, 1)
    assert [p.historical for p in new.train] == ["a0", "c0", "c1"]
    assert [p.historical for p in new.dev] == ["b0", "c2"]
    assert [p.historical for p in new.test] == ["c3", "c4"]


def test_resplit_too_many_is_an_error():
    ds = Dataset(_pairs(1), _pairs(1), _pairs(3))
    with pytest.raises(ValueError):
        resplit(ds, 2, 2)


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.data())
def test_resplit_conserves_pairs(n_train, n_dev, n_test, data):
    ds = Dataset(_pairs(n_train, "a"), _pairs(n_dev, "b"), _pairs(n_test, "c"))
    a = data.draw(st.integers(0, n_test))
    b = data.draw(st.integers(0, n_test - a))
    new = resplit(ds, a, b)
    assert sum(new.sizes()) == sum(ds.sizes())
    assert new.sizes() == (n_train + a, n_dev + b, n_test - a - b)


def test_resplit_swedish_table_sizes():
    ds = Dataset(_pairs(28_327, "a"), _pairs(2_590, "b"), _pairs(33_544, "c"))
    # both target splits hold 90 pairs fewer than the original 64,461
    assert resplit(ds, 22_910, 4_000, discard=90).sizes() == (51_237, 6_590, 6_544)
    assert resplit(ds, 29_310, 600, discard=90).sizes() == (57_637, 3_190, 3_544)
