import pytest

from lorafuse.errors import InvalidConfig, MissingColumn
from lorafuse.prng import SplitMix64
from lorafuse.textprep import FlatExample, TaskSpec, sample_per_task, unify_row, unify_rows


def nli_spec():
    return TaskSpec(
        task_name="nli",
        hint="Determine if the two sentences convey the same meaning.",
        text_columns=("premise", "hypothesis"),
        separator_labels=("[P]", "[H]"),
    )


def test_unify_row_hint_and_separators():
    out = unify_row({"premise": "A", "hypothesis": "B"}, nli_spec(), 0)
    assert out.text == "Determine if the two sentences convey the same meaning. [P] A [H] B"
    assert out.id == "nli:0"
    assert out.task == "nli"


def test_unify_row_empty_value_passthrough():
    spec = TaskSpec(task_name="t", hint="Do the thing.", text_columns=("text",), separator_labels=("[T]",))
    out = unify_row({"text": ""}, spec, 3)
    assert out.text == "Do the thing. [T] "
    assert out.id == "t:3"


def test_unify_row_no_hint_matches_concat_oracle():
    spec = TaskSpec(task_name="t", hint="", text_columns=("c1", "c2", "c3"), separator_labels=("[C1]", "[C2]", "[C3]"))
    row = {"c1": "x", "c2": "y", "c3": "z"}
    # independent string-concat oracle
    expected = " ".join(f"{sep} {row[col]}" for col, sep in zip(spec.text_columns, spec.separator_labels))
    assert unify_row(row, spec, 0).text == expected == "[C1] x [C2] y [C3] z"


def test_unify_row_is_pure():
    row = {"premise": "p q r", "hypothesis": "s"}
    assert unify_row(row, nli_spec(), 5) == unify_row(row, nli_spec(), 5)


def test_unify_row_missing_column():
    with pytest.raises(MissingColumn) as err:
        unify_row({"premise": "A"}, nli_spec(), 0)
    assert err.value.column == "hypothesis"


def test_spec_rejects_label_leakage():
    with pytest.raises(InvalidConfig):
        TaskSpec(
            task_name="t",
            hint="",
            text_columns=("text", "label"),
            separator_labels=("[T]", "[L]"),
            label_columns=("label",),
        )


def test_spec_rejects_separator_count_mismatch():
    with pytest.raises(InvalidConfig):
        TaskSpec(task_name="t", hint="", text_columns=("a", "b"), separator_labels=("[A]",))


def test_spec_rejects_empty_fields():
    with pytest.raises(InvalidConfig):
        TaskSpec(task_name="", hint="", text_columns=("a",), separator_labels=("[A]",))
    with pytest.raises(InvalidConfig):
        TaskSpec(task_name="t", hint="", text_columns=(), separator_labels=())


def _rows(n, task="t"):
    return [FlatExample(id=f"{task}:{i}", text=f"row {i}", task=task) for i in range(n)]


def test_sample_caps_large_input():
    assert len(sample_per_task(_rows(5000), cap=2000, seed=42)) == 2000


def test_sample_keeps_small_input():
    out = sample_per_task(_rows(100), cap=2000, seed=42)
    assert len(out) == 100
    assert sorted(r.id for r in out) == sorted(r.id for r in _rows(100))


def test_sample_deterministic():
    rows = _rows(500)
    assert sample_per_task(rows, cap=50, seed=7) == sample_per_task(rows, cap=50, seed=7)
    assert sample_per_task(rows, cap=50, seed=7) != sample_per_task(rows, cap=50, seed=8)


def test_sample_subset_without_duplicates():
    rows = _rows(300)
    out = sample_per_task(rows, cap=120, seed=11)
    ids = [r.id for r in out]
    assert len(set(ids)) == len(ids)
    assert set(ids) <= {r.id for r in rows}


def test_sample_empty_and_bad_cap():
    assert sample_per_task([], cap=10, seed=0) == []
    with pytest.raises(ValueError):
        sample_per_task(_rows(3), cap=0, seed=0)


def test_shuffle_matches_documented_algorithm():
    # re-derive the documented SplitMix64 Fisher-Yates by hand and compare
    mask = (1 << 64) - 1

    def splitmix_stream(seed):
        state = seed & mask
        while True:
            state = (state + 0x9E3779B97F4A7C15) & mask
            z = state
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
            yield z ^ (z >> 31)

    rows = _rows(17)
    expected = list(rows)
    stream = splitmix_stream(99)
    for i in range(len(expected) - 1, 0, -1):
        j = next(stream) % (i + 1)
        expected[i], expected[j] = expected[j], expected[i]
    assert sample_per_task(rows, cap=17, seed=99) == expected
    # and the generator itself agrees with the written-out recurrence
    gen = SplitMix64(99)
    stream = splitmix_stream(99)
    assert [gen.next_u64() for _ in range(5)] == [next(stream) for _ in range(5)]
