import numpy as np
import pytest
from scipy import stats

from diul.data import (
    AugmentSpec,
    BlobSpec,
    DatasetBundle,
    augment,
    concat_bundles,
    dataset_file_size,
    generate,
    read_dataset,
    write_dataset,
)
from diul.errors import ContractError, FormatError


def small_spec(**kw):
    base = dict(n_categories=4, n_domains_total=5, cat_dims=4, dom_dims=5,
                noise_dims=3, alpha_cat=1.0, gamma_dom=1.0, noise_sigma=0.2,
                spurious_rho=0.0, n_per_domain=100)
    base.update(kw)
    return BlobSpec(**base)


class TestGenerate:
    def test_sample_count_and_ranges(self):
        b = generate(small_spec(), [0, 1, 2], seed=0)
        assert b.n_samples == 300
        assert b.n_dims == 12
        assert set(np.unique(b.domain_labels)) <= {0, 1, 2}
        assert b.category_labels.min() >= 0 and b.category_labels.max() < 4

    def test_pure_function_of_seed(self):
        a = generate(small_spec(), [0, 1], seed=42)
        b = generate(small_spec(), [0, 1], seed=42)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.category_labels, b.category_labels)
        np.testing.assert_array_equal(a.domain_labels, b.domain_labels)
        c = generate(small_spec(), [0, 1], seed=43)
        assert not np.array_equal(a.features, c.features)

    def test_rho_one_is_deterministic_pairing(self):
        spec = small_spec(n_categories=2, spurious_rho=1.0)
        b = generate(spec, [0, 1], seed=7)
        np.testing.assert_array_equal(b.domain_labels, b.category_labels % 2)

    def test_zero_noise_gives_two_hot_rows(self):
        spec = small_spec(noise_sigma=0.0, alpha_cat=1.0, gamma_dom=1.0)
        b = generate(spec, [0, 1, 2], seed=3)
        for i in range(b.n_samples):
            row = np.zeros(spec.n_dims)
            row[b.category_labels[i]] = 1.0
            row[spec.cat_dims + b.domain_labels[i]] = 1.0
            np.testing.assert_array_equal(b.features[i], row)

    def test_independence_at_rho_zero(self):
        """Pooled chi-square over 20 seeds must accept independence at alpha=0.01."""
        spec = small_spec(spurious_rho=0.0)
        counts = np.zeros((4, 3))
        for seed in range(20):
            b = generate(spec, [0, 1, 2], seed=seed)
            for c, d in zip(b.category_labels, b.domain_labels):
                counts[c, d] += 1
        _, p_value, _, _ = stats.chi2_contingency(counts)
        assert p_value >= 0.01

    def test_dependence_at_high_rho(self):
        spec = small_spec(spurious_rho=0.9)
        b = generate(spec, [0, 1, 2], seed=0)
        counts = np.zeros((4, 3))
        for c, d in zip(b.category_labels, b.domain_labels):
            counts[c, d] += 1
        _, p_value, _, _ = stats.chi2_contingency(counts)
        assert p_value < 1e-6

    def test_empty_domains_rejected(self):
        with pytest.raises(ContractError):
            generate(small_spec(), [], seed=0)

    def test_unknown_domain_rejected(self):
        with pytest.raises(ContractError):
            generate(small_spec(), [0, 9], seed=0)


class TestAugment:
    def test_identity_spec(self):
        rng = np.random.default_rng(0)
        x = np.arange(8.0)
        out = augment(x, AugmentSpec(0.0, 0.0, 0.0), rng)
        np.testing.assert_array_equal(out, x)

    def test_full_mask(self):
        rng = np.random.default_rng(0)
        out = augment(np.ones(6), AugmentSpec(0.1, 0.1, 1.0), rng)
        np.testing.assert_array_equal(out, np.zeros(6))

    def test_mask_count(self):
        rng = np.random.default_rng(1)
        out = augment(np.ones(16), AugmentSpec(0.0, 0.0, 0.25), rng)
        assert int((out == 0).sum()) == 4

    def test_replay_is_bit_reproducible(self):
        x = np.linspace(-1, 1, 12)
        spec = AugmentSpec(0.1, 0.1, 0.25)
        a = augment(x, spec, np.random.default_rng(99))
        b = augment(x, spec, np.random.default_rng(99))
        np.testing.assert_array_equal(a, b)

    def test_bad_spec_rejected(self):
        with pytest.raises(ContractError):
            AugmentSpec(scale_jitter=1.0)
        with pytest.raises(ContractError):
            AugmentSpec(mask_fraction=1.5)


class TestDatasetFile:
    def test_round_trip(self, tmp_path):
        b = generate(small_spec(), [0, 1, 2], seed=5)
        path = tmp_path / "d.udg"
        write_dataset(b, path)
        back = read_dataset(path)
        # storage is float32; quantization is the only allowed difference
        np.testing.assert_array_equal(back.features, b.features.astype(np.float32).astype(np.float64))
        np.testing.assert_array_equal(back.category_labels, b.category_labels)
        np.testing.assert_array_equal(back.domain_labels, b.domain_labels)
        assert back.category_names == b.category_names
        assert back.domain_names == b.domain_names

    def test_file_level_round_trip_bit_exact(self, tmp_path):
        b = generate(small_spec(), [0, 1], seed=8)
        p1, p2 = tmp_path / "a.udg", tmp_path / "b.udg"
        write_dataset(b, p1)
        write_dataset(read_dataset(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.udg"
        b = generate(small_spec(), [0], seed=0)
        write_dataset(b, path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError) as err:
            read_dataset(path)
        assert err.value.offset == 0

    def test_truncation_reports_offset(self, tmp_path):
        path = tmp_path / "trunc.udg"
        b = generate(small_spec(), [0], seed=0)
        write_dataset(b, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(FormatError) as err:
            read_dataset(path)
        assert err.value.offset is not None

    def test_size_formula(self, tmp_path):
        spec = BlobSpec(n_categories=4, n_domains_total=5, cat_dims=10, dom_dims=10,
                        noise_dims=12, n_per_domain=2000)
        b = generate(spec, [0, 1, 2, 3, 4], seed=1)
        assert b.n_samples == 10000 and b.n_dims == 32
        path = tmp_path / "big.udg"
        write_dataset(b, path)
        names = b.category_names + b.domain_names
        expected = (20 + sum(4 + len(s.encode()) for s in names)
                    + 4 * 10000 * 32 + 2 * 10000 + 2 * 10000)
        assert path.stat().st_size == expected == dataset_file_size(b)


class TestBundles:
    def test_take_and_concat(self):
        b = generate(small_spec(), [0, 1], seed=2)
        head, tail = b.take(range(50)), b.take(range(50, b.n_samples))
        merged = concat_bundles(head, tail)
        np.testing.assert_array_equal(merged.features, b.features)
        np.testing.assert_array_equal(merged.domain_labels, b.domain_labels)

    def test_label_range_validated(self):
        with pytest.raises(ContractError):
            DatasetBundle(np.zeros((2, 3)), [0, 5], [0, 0], ["a"], ["x"])

    def test_spurious_trap_property(self):
        """With rho=1 and zero noise the domain block alone predicts the
        category perfectly on source domains and at chance on a held-out one."""
        spec = small_spec(n_categories=3, noise_sigma=0.0, spurious_rho=1.0,
                          n_per_domain=200)
        src = generate(spec, [0, 1, 2], seed=0)
        tgt = generate(spec, [3], seed=1)
        dom_block = slice(spec.cat_dims, spec.cat_dims + spec.dom_dims)
        # lookup classifier: the category observed with each source domain row
        mapping = {}
        for i in range(src.n_samples):
            key = tuple(src.features[i, dom_block])
            mapping[key] = src.category_labels[i]
        src_acc = np.mean([mapping[tuple(src.features[i, dom_block])] == src.category_labels[i]
                           for i in range(src.n_samples)])
        assert src_acc == 1.0
        # the target rows all share one unseen domain direction: chance only
        tgt_keys = {tuple(tgt.features[i, dom_block]) for i in range(tgt.n_samples)}
        assert len(tgt_keys) == 1
        assert not (tgt_keys & set(mapping))
