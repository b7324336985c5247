import numpy as np
import pytest
from scipy import stats

from adaptreg.data import (
    chronological_split, filter_min_count, frequency_groups, load_id_map,
    load_interactions, load_manifest, sample_triplets, save_id_map,
    save_manifest,
)
from adaptreg.errors import EmptyCorpusError, ParseError

from conftest import toy_log


def write_lines(path, lines):
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
    return str(path)


class TestLoadInteractions:
    def test_dedup_keeps_earliest(self, tmp_path):
        p = write_lines(tmp_path / "raw.csv", ["a,x,1", "a,x,5", "b,y,2"])
        log = load_interactions(p)
        assert log.num_users == 2
        assert log.num_items == 2
        assert len(log) == 2
        # (a, x) keeps timestamp 1
        assert log.times[0] == 1

    def test_empty_file(self, tmp_path):
        p = write_lines(tmp_path / "raw.csv", [])
        with pytest.raises(EmptyCorpusError):
            load_interactions(p)

    def test_malformed_row_names_line(self, tmp_path):
        p = write_lines(tmp_path / "raw.csv", ["a,x,1", "broken-row", "b,y,2"])
        with pytest.raises(ParseError) as exc:
            load_interactions(p)
        assert exc.value.line_no == 2

    def test_header_and_delimiter(self, tmp_path):
        p = write_lines(tmp_path / "raw.tsv", ["user\titem\tts", "a\tx\t3"])
        log = load_interactions(p, delimiter="\t", has_header=True)
        assert len(log) == 1
        assert log.user_tokens == ["a"]

    def test_dense_ids(self, tmp_path):
        p = write_lines(tmp_path / "raw.csv", ["u9,i7,1", "u2,i7,2", "u9,i1,3"])
        log = load_interactions(p)
        assert set(log.users) == {0, 1}
        assert set(log.items) == {0, 1}


class TestFilterMinCount:
    def test_noop_threshold(self):
        log = toy_log([(0, 0, 1), (0, 1, 2), (1, 0, 3)])
        out = filter_min_count(log, 0, 0)
        assert len(out) == 3
        assert out.num_users == 2

    def test_cascading_removal(self):
        # user 0 has 3 events, user 1 has 1; item 3 is touched only by user 1
        log = toy_log([(0, 0, 1), (0, 1, 2), (0, 2, 3), (1, 3, 4)])
        out = filter_min_count(log, 2, 0)
        assert out.num_users == 1
        assert out.num_items == 3  # item 3 dropped with its only user
        assert len(out) == 3

    def test_fixed_point_cascade(self):
        # dropping item 0 (1 event) starves user 2; users 0/1 survive intact
        log = toy_log([(0, 1, 1), (0, 2, 2), (1, 1, 3), (1, 2, 4), (2, 0, 5)])
        out = filter_min_count(log, 2, 2)
        assert out.num_users == 2
        assert out.num_items == 2
        assert len(out) == 4

    def test_remove_everything(self):
        log = toy_log([(0, 0, 1)])
        with pytest.raises(EmptyCorpusError):
            filter_min_count(log, 5, 5)


class TestChronologicalSplit:
    @pytest.mark.parametrize("n,expected", [
        (10, (6, 2, 2)),
        (5, (3, 1, 1)),
        (21, (13, 5, 3)),
    ])
    def test_rounding(self, n, expected):
        events = [(0, i, i) for i in range(n)]
        split = chronological_split(toy_log(events, num_items=n))
        assert (len(split.train[0]), len(split.val[0]), len(split.test[0])) == expected

    def test_chronology_and_disjointness(self):
        rng = np.random.default_rng(3)
        events = []
        for u in range(12):
            n = int(rng.integers(1, 25))
            for _ in range(n):
                events.append((u, int(rng.integers(0, 40)), int(rng.integers(0, 1000))))
        log = toy_log(events, num_items=40)
        # dedup (u, i): keep earliest, mirroring ingestion
        seen = {}
        for u, i, t in events:
            if (u, i) not in seen or t < seen[(u, i)]:
                seen[(u, i)] = t
        log = toy_log([(u, i, t) for (u, i), t in seen.items()], num_items=40)
        split = chronological_split(log)
        for u in range(12):
            tr, va, te = set(split.train[u]), set(split.val[u]), set(split.test[u])
            assert not (tr & va) and not (tr & te) and not (va & te)
            user_events = {i for (uu, i) in seen if uu == u}
            assert tr | va | te == user_events
            if len(split.train_times[u]) and len(split.val_times[u]):
                assert split.train_times[u].max() <= split.val_times[u].min()
            if len(split.val_times[u]) and len(split.test_times[u]):
                assert split.val_times[u].max() <= split.test_times[u].min()

    def test_single_event_user_keeps_train(self):
        log = toy_log([(0, 0, 1), (1, 0, 1), (1, 1, 2), (1, 2, 3)], num_items=3)
        split = chronological_split(log)
        assert len(split.train[0]) == 1
        assert 0 in split.degenerate_users

    def test_frequency_tables(self):
        log = toy_log([(0, 0, 1), (0, 1, 2), (0, 2, 3), (0, 0, 4)][:3], num_items=3)
        split = chronological_split(log)
        assert split.user_frequency[0] == len(split.train[0])
        assert split.item_frequency.sum() == sum(len(t) for t in split.train)


class TestSampling:
    def test_forced_train_triplet(self):
        # 1 user, items {0,1}, train={0} -> always (0, 0, 1)
        log = toy_log([(0, 0, 1), (0, 1, 2), (0, 1, 3)][:1], num_items=2)
        split = chronological_split(log)
        rng = np.random.default_rng(0)
        for _ in range(10):
            b = sample_triplets(split, rng, 4, "train")
            assert (b.users == 0).all() and (b.pos == 0).all() and (b.neg == 1).all()

    def test_forced_validation_triplet(self):
        # train={0}, val={1}, items {0,1,2} -> only eligible negative is 2
        from adaptreg.data import _build_split
        z = np.empty(0, dtype=np.int64)
        split = _build_split(
            1, 3,
            [np.array([0])], [np.array([1])], [z],
            [np.array([1])], [np.array([2])], [z],
            degenerate=[0])
        assert list(split.val[0]) == [1]
        rng = np.random.default_rng(0)
        b = sample_triplets(split, rng, 8, "validation")
        assert (b.users == 0).all() and (b.pos == 1).all() and (b.neg == 2).all()

    def test_membership_constraints(self, small_split):
        rng = np.random.default_rng(1)
        for partition in ("train", "validation"):
            b = sample_triplets(small_split, rng, 5000, partition)
            for u, i, j in zip(b.users, b.pos, b.neg):
                if partition == "train":
                    assert i in small_split.user_pos_train[u]
                    assert j not in small_split.user_pos_train[u]
                else:
                    assert i in small_split.val[u]
                    assert j not in small_split.user_pos_train_val[u]

    def test_seeded_determinism(self, small_split):
        a = sample_triplets(small_split, np.random.default_rng(42), 100, "train")
        b = sample_triplets(small_split, np.random.default_rng(42), 100, "train")
        assert (a.users == b.users).all()
        assert (a.pos == b.pos).all()
        assert (a.neg == b.neg).all()

    def test_negative_distribution_uniform(self):
        # single user with 2 train items out of 10: negatives uniform over the 8
        log = toy_log([(0, 0, 1), (0, 1, 2), (0, 2, 3)], num_items=10)
        split = chronological_split(log)
        eligible = sorted(set(range(10)) - set(split.user_pos_train[0]))
        rng = np.random.default_rng(5)
        b = sample_triplets(split, rng, 100_000, "train")
        counts = np.bincount(b.neg, minlength=10)[eligible]
        _, p = stats.chisquare(counts)
        assert p > 1e-3

    def test_empty_partition(self):
        log = toy_log([(0, 0, 1)], num_items=2)
        split = chronological_split(log)
        with pytest.raises(EmptyCorpusError):
            sample_triplets(split, np.random.default_rng(0), 1, "validation")


class TestFrequencyGroups:
    def test_boundary_rule(self):
        groups = frequency_groups([10, 15, 45, 100], [15, 30, 60])
        assert list(groups) == [0, 1, 2, 3]

    def test_below_first_boundary(self):
        assert frequency_groups([14], [15, 30, 60])[0] == 0

    def test_no_boundaries_single_bucket(self):
        assert (frequency_groups([0, 7, 999], []) == 0).all()

    def test_non_ascending_rejected(self):
        with pytest.raises(ValueError):
            frequency_groups([1], [30, 15])


class TestPersistence:
    def test_manifest_round_trip(self, tmp_path, small_split):
        path = tmp_path / "manifest.csv"
        save_manifest(path, small_split)
        loaded = load_manifest(path)
        assert loaded.num_users == small_split.num_users
        assert loaded.num_items == small_split.num_items
        for u in range(small_split.num_users):
            assert (loaded.train[u] == small_split.train[u]).all()
            assert (loaded.val[u] == small_split.val[u]).all()
            assert (loaded.test[u] == small_split.test[u]).all()
        assert (loaded.train_keys == small_split.train_keys).all()
        assert (loaded.item_frequency == small_split.item_frequency).all()

    def test_id_map_round_trip(self, tmp_path):
        path = tmp_path / "idmap.csv"
        save_id_map(path, ["alpha", "beta", "gamma"])
        assert load_id_map(path) == ["alpha", "beta", "gamma"]

    def test_ingest_reproducible(self, tmp_path):
        lines = ["a,x,5", "a,y,1", "b,x,3", "a,z,9", "b,z,2", "b,y,8"]
        p1 = tmp_path / "r1.csv"
        p1.write_text("\n".join(lines) + "\n")
        log1 = load_interactions(p1)
        log2 = load_interactions(p1)
        s1 = chronological_split(log1)
        s2 = chronological_split(log2)
        assert (s1.train_keys == s2.train_keys).all()
        for u in range(s1.num_users):
            assert (s1.train[u] == s2.train[u]).all()
