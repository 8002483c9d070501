import struct

import numpy as np
import pytest

from slp import corpus as data
from slp.configuration import CorpusConfig
from slp.exceptions import (
    ConfigError, ContractError, DataError, DimensionError, IncompatibleVersion, MagicMismatch,
    MalformedHeader, TruncatedPayload
)
from slp.peruse import Segment


def cosine(u, v):
    return u.dot(v) / (np.linalg.norm(u) * np.linalg.norm(v))


def record_size(config):
    return 12 + 4 * config.T * config.d_in + 4 * config.N * config.d_in


class TestGenerate(object):

    def test_same_seed_same_records(self, corpus_config):
        assert data.generate_corpus(corpus_config) == data.generate_corpus(corpus_config)

    def test_other_seed_other_records(self, corpus_config):
        other = corpus_config.replace(seed=corpus_config.seed + 1)
        assert data.generate_corpus(corpus_config) != data.generate_corpus(other)

    def test_examples_do_not_depend_on_generation_order(self, corpus_config):
        window = data.generate_corpus(corpus_config, count=3, offset=5)
        assert window == [data.generate_example(corpus_config, i) for i in (5, 6, 7)]

    def test_shapes_and_bounds(self, corpus_config, corpus):
        assert len(corpus) == corpus_config.count
        for record in corpus:
            assert record.features.shape == (corpus_config.T, corpus_config.d_in)
            assert record.query.shape == (corpus_config.N, corpus_config.d_in)
            assert corpus_config.min_len <= record.gt.length <= corpus_config.max_len
            assert 0 <= record.gt.start <= record.gt.end < corpus_config.T
            assert 0 <= record.activity_id < corpus_config.vocab

    def test_values_survive_single_precision(self, corpus):
        for record in corpus:
            assert np.array_equal(record.features.astype(np.float32).astype(np.float64), record.features)

    def test_noiseless_frames_match_the_query(self, corpus_config):
        config = corpus_config.replace(noise_sigma=0.0)
        for record in data.generate_corpus(config):
            word = record.query.mean(axis=0)
            for t in range(record.T):
                similarity = cosine(record.features[t], word)
                if record.gt.contains(t):
                    assert similarity == pytest.approx(1.0)
                else:
                    # background frames carry some other activity's code
                    assert similarity == 0.0

    def test_background_never_repeats_the_activity(self, corpus_config):
        config = corpus_config.replace(noise_sigma=0.0, count=50)
        for record in data.generate_corpus(config):
            labels = record.features.argmax(axis=1)
            for t in range(record.T):
                assert (labels[t] == record.activity_id) == record.gt.contains(t)

    def test_query_and_ground_truth_separate(self):
        config = CorpusConfig(T=16, N=2, d_in=8, vocab=8, noise_sigma=0.1, min_len=3, max_len=8, seed=21)
        inside, outside = [], []
        for record in data.generate_corpus(config, count=1000):
            word = record.query[0]
            for t in range(record.T):
                target = inside if record.gt.contains(t) else outside
                target.append(cosine(record.features[t], word))
        assert np.mean(inside) - np.mean(outside) > 0.5

    def test_intervals_are_uniform(self):
        config = CorpusConfig(T=12, N=1, d_in=4, vocab=2, min_len=2, max_len=5, seed=3)
        cells = data.interval_count(config)
        assert cells == 11 + 10 + 9 + 8
        index = dict((data.nth_interval(config, k), k) for k in range(cells))
        counts = np.zeros(cells)
        draws = 10000
        for record in data.generate_corpus(config, count=draws):
            counts[index[(record.gt.start, record.gt.length)]] += 1
        expected = draws / float(cells)
        chi_square = ((counts - expected) ** 2 / expected).sum()
        # 37 degrees of freedom, p = 0.001
        assert chi_square < 69.3

    def test_interval_enumeration(self):
        config = CorpusConfig(T=5, N=1, d_in=2, vocab=2, min_len=2, max_len=3)
        intervals = [data.nth_interval(config, k) for k in range(data.interval_count(config))]
        assert intervals == [(0, 2), (1, 2), (2, 2), (3, 2), (0, 3), (1, 3), (2, 3)]
        with pytest.raises(IndexError):
            data.nth_interval(config, 7)

    @pytest.mark.parametrize('bounds', [(20, 10), (0, 3), (4, 100)])
    def test_infeasible_length_bounds(self, bounds):
        min_len, max_len = bounds
        with pytest.raises(ConfigError):
            CorpusConfig(T=48, min_len=min_len, max_len=max_len)


class TestPersistence(object):

    def test_round_trip(self, corpus_config, tmpdir):
        records = data.generate_corpus(corpus_config, count=10)
        path = str(tmpdir.join('train.slpc'))
        data.save_corpus(path, records)
        assert data.load_corpus(path) == records

    def test_dump_is_deterministic(self, corpus):
        assert data.dump_corpus(corpus) == data.dump_corpus(list(corpus))

    def test_file_size(self, corpus_config, corpus):
        raw = data.dump_corpus(corpus)
        assert len(raw) == 8 + 20 + len(corpus) * record_size(corpus_config)

    def test_empty_corpus(self, tmpdir):
        path = str(tmpdir.join('empty.slpc'))
        data.save_corpus(path, [], dims=(12, 3, 8))
        assert data.load_corpus(path) == []

    def test_truncated_file_names_the_offset(self, corpus_config, corpus):
        raw = data.dump_corpus(corpus)
        with pytest.raises(TruncatedPayload) as error:
            data.parse_corpus(raw[:-3])
        query_bytes = 4 * corpus_config.N * corpus_config.d_in
        assert error.value.offset == len(raw) - query_bytes
        assert error.value.needed == query_bytes
        assert error.value.available == query_bytes - 3
        assert 'offset %s' % error.value.offset in str(error.value)

    def test_magic_mismatch(self, corpus):
        raw = data.dump_corpus(corpus)
        with pytest.raises(MagicMismatch):
            data.parse_corpus(b'SLPCKPT1' + raw[8:])

    def test_empty_file(self):
        with pytest.raises(MagicMismatch):
            data.parse_corpus(b'')

    def test_short_header(self):
        with pytest.raises(MalformedHeader):
            data.parse_corpus(data.MAGIC + b'\x01\x00\x00\x00')

    def test_unknown_version(self, corpus):
        raw = data.dump_corpus(corpus)
        with pytest.raises(IncompatibleVersion):
            data.parse_corpus(raw[:8] + struct.pack('<I', 2) + raw[12:])

    def test_ground_truth_outside_the_video(self, corpus_config, corpus):
        raw = bytearray(data.dump_corpus(corpus[:1]))
        raw[32:40] = struct.pack('<2I', 3, corpus_config.T)
        with pytest.raises(MalformedHeader):
            data.parse_corpus(bytes(raw))

    def test_records_without_dimensions(self):
        with pytest.raises(MalformedHeader):
            data.parse_corpus(data.MAGIC + struct.pack('<5I', 1, 2, 0, 0, 0))

    def test_trailing_bytes(self, corpus):
        with pytest.raises(DataError):
            data.parse_corpus(data.dump_corpus(corpus) + b'\x00')

    def test_mixed_dimensions_are_rejected(self, corpus_config):
        small = data.generate_example(corpus_config, 0)
        large = data.generate_example(corpus_config.replace(T=20), 1)
        with pytest.raises(DimensionError):
            data.dump_corpus([small, large])

    def test_missing_file(self, tmpdir):
        with pytest.raises(DataError):
            data.load_corpus(str(tmpdir.join('absent.slpc')))

    def test_every_format_error_is_a_data_error(self):
        for cls in (MagicMismatch, MalformedHeader, IncompatibleVersion, TruncatedPayload):
            assert issubclass(cls, DataError)
            assert cls.exit_code == 2


class TestExampleRecord(object):

    def test_ground_truth_must_fit(self):
        with pytest.raises(ContractError):
            data.ExampleRecord(np.zeros((4, 2)), np.zeros((1, 2)), Segment(2, 5), 0)

    def test_properties(self, corpus_config, corpus):
        record = corpus[0]
        assert (record.T, record.N, record.d_in) == (corpus_config.T, corpus_config.N, corpus_config.d_in)
