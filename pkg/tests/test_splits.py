import numpy as np
import pytest

from diul.data import BlobSpec, concat_bundles, generate
from diul.errors import ConstraintError, ContractError
from diul.splits import (
    SETTINGS,
    SplitParams,
    UdgSplit,
    make_split,
    read_split,
    split_from_json,
    split_to_json,
    validate_split,
    write_split,
)


def bundle_with(domains, n_per_domain=60, n_categories=10, seed=0, rho=0.0):
    spec = BlobSpec(n_categories=n_categories, n_domains_total=8, cat_dims=n_categories,
                    dom_dims=8, noise_dims=2, noise_sigma=0.2, spurious_rho=rho,
                    n_per_domain=n_per_domain)
    return generate(spec, domains, seed=seed)


def full_bundle(seed=0):
    src = bundle_with([0, 1, 2, 3], seed=seed)
    tgt = bundle_with([4, 5], seed=seed + 1)
    return concat_bundles(src, tgt)


class TestDomainCorrelated:
    def test_supports_forced_by_definition(self):
        b = full_bundle()
        params = SplitParams(source_domains=(0, 1, 2), target_domains=(4,),
                             labeled_categories=tuple(range(4)),
                             unlabeled_categories=tuple(range(4, 10)))
        s = make_split(b, "domain_correlated", params, seed=3)
        y_pre = set(b.category_labels[s.pretrain_unlabeled].tolist())
        y_fin = set(b.category_labels[s.finetune_labeled].tolist())
        assert not (y_pre & y_fin)
        d_pre = set(b.domain_labels[s.pretrain_unlabeled].tolist())
        d_fin = set(b.domain_labels[s.finetune_labeled].tolist())
        assert d_pre == d_fin == {0, 1, 2}

    def test_overlapping_categories_rejected(self):
        b = full_bundle()
        params = SplitParams(source_domains=(0, 1), target_domains=(4,),
                             labeled_categories=(0, 1, 2),
                             unlabeled_categories=(2, 3))
        with pytest.raises(ConstraintError) as err:
            make_split(b, "domain_correlated", params, seed=0)
        assert err.value.code == "setting_category_support"


class TestAllCorrelated:
    def test_full_fraction_degenerates(self):
        b = full_bundle()
        params = SplitParams(source_domains=(0, 1, 2), target_domains=(4,), label_fraction=1.0)
        s = make_split(b, "all_correlated", params, seed=1)
        universe = np.nonzero(np.isin(b.domain_labels, [0, 1, 2]))[0]
        assert len(s.pretrain_unlabeled) == 0
        got = np.sort(np.concatenate([s.finetune_labeled, s.validation]))
        np.testing.assert_array_equal(got, universe)
        assert validate_split(s, b)["ok"]

    def test_fraction_applied_per_cell(self):
        b = full_bundle()
        frac = 0.05
        params = SplitParams(source_domains=(0, 1, 2), target_domains=(4,), label_fraction=frac)
        s = make_split(b, "all_correlated", params, seed=1)
        expected = 0
        for d in (0, 1, 2):
            for c in range(10):
                n_cell = int(np.sum((b.domain_labels == d) & (b.category_labels == c)))
                if n_cell:
                    expected += max(1, int(frac * n_cell))
        assert len(s.finetune_labeled) + len(s.validation) == expected
        # labeled pool is disjoint from the pretraining remainder
        assert not (set(s.pretrain_unlabeled.tolist())
                    & (set(s.finetune_labeled.tolist()) | set(s.validation.tolist())))

    def test_validation_is_tenth_of_labeled_per_cell(self):
        b = full_bundle()
        params = SplitParams(source_domains=(0, 1, 2), target_domains=(4,), label_fraction=0.5)
        s = make_split(b, "all_correlated", params, seed=5)
        labeled = np.concatenate([s.finetune_labeled, s.validation])
        expected_val = 0
        for d in (0, 1, 2):
            for c in range(10):
                in_cell = (b.domain_labels[labeled] == d) & (b.category_labels[labeled] == c)
                expected_val += int(0.10 * int(in_cell.sum()))
        assert len(s.validation) == expected_val


class TestOtherSettings:
    def test_category_correlated_needs_finetune_domains(self):
        b = full_bundle()
        with pytest.raises(ConstraintError):
            make_split(b, "category_correlated",
                       SplitParams(source_domains=(0, 1), target_domains=(4,)), seed=0)

    def test_category_correlated(self):
        b = full_bundle()
        params = SplitParams(source_domains=(0, 1), target_domains=(4,),
                             finetune_domains=(2, 3))
        s = make_split(b, "category_correlated", params, seed=0)
        rep = validate_split(s, b)
        assert rep["ok"], rep
        d_pre = set(b.domain_labels[s.pretrain_unlabeled].tolist())
        d_fin = set(b.domain_labels[s.finetune_labeled].tolist())
        assert not (d_pre & d_fin)

    def test_uncorrelated(self):
        b = full_bundle()
        params = SplitParams(source_domains=(0, 1), target_domains=(4,),
                             finetune_domains=(2, 3),
                             labeled_categories=tuple(range(5)),
                             unlabeled_categories=tuple(range(5, 10)))
        s = make_split(b, "uncorrelated", params, seed=0)
        assert validate_split(s, b)["ok"]

    def test_target_overlap_rejected(self):
        b = full_bundle()
        with pytest.raises(ConstraintError) as err:
            make_split(b, "all_correlated",
                       SplitParams(source_domains=(0, 1), target_domains=(1, 4)), seed=0)
        assert err.value.code == "domain_overlap"


class TestValidate:
    def test_injected_test_domain_sample_flagged(self):
        b = full_bundle()
        params = SplitParams(source_domains=(0, 1, 2), target_domains=(4,), label_fraction=0.3)
        s = make_split(b, "all_correlated", params, seed=2)
        target_rows = np.nonzero(b.domain_labels == 4)[0]
        injected = UdgSplit(
            setting=s.setting,
            pretrain_unlabeled=np.concatenate([s.pretrain_unlabeled, target_rows[:1]]),
            finetune_labeled=s.finetune_labeled,
            validation=s.validation,
            test=s.test,
        )
        rep = validate_split(injected, b)
        assert not rep["ok"]
        assert any(v["code"] == "domain_overlap" for v in rep["violations"])

    def test_out_of_range_is_contract_error(self):
        b = full_bundle()
        s = UdgSplit("uncorrelated", [b.n_samples + 5], [], [], [])
        with pytest.raises(ContractError):
            validate_split(s, b)

    def test_overlapping_sets_flagged(self):
        b = full_bundle()
        params = SplitParams(source_domains=(0, 1, 2), target_domains=(4,), label_fraction=0.3)
        s = make_split(b, "all_correlated", params, seed=2)
        tampered = UdgSplit(s.setting, s.pretrain_unlabeled, s.finetune_labeled,
                            s.validation, np.concatenate([s.test, s.finetune_labeled[:1]]))
        rep = validate_split(tampered, b)
        assert any(v["code"] == "index_overlap" for v in rep["violations"])


class TestDeterminismAndIO:
    def test_same_seed_same_split(self):
        b = full_bundle()
        params = SplitParams(source_domains=(0, 1, 2), target_domains=(4,), label_fraction=0.2)
        s1 = make_split(b, "all_correlated", params, seed=9)
        s2 = make_split(b, "all_correlated", params, seed=9)
        for name in ("pretrain_unlabeled", "finetune_labeled", "validation", "test"):
            np.testing.assert_array_equal(getattr(s1, name), getattr(s2, name))
        s3 = make_split(b, "all_correlated", params, seed=10)
        assert not np.array_equal(s1.finetune_labeled, s3.finetune_labeled)

    def test_json_round_trip(self, tmp_path):
        b = full_bundle()
        params = SplitParams(source_domains=(0, 1, 2), target_domains=(4,), label_fraction=0.2)
        s = make_split(b, "all_correlated", params, seed=9)
        doc = split_to_json(s)
        back = split_from_json(doc)
        assert split_to_json(back) == doc
        path = tmp_path / "split.json"
        write_split(s, path)
        again = read_split(path)
        np.testing.assert_array_equal(again.test, s.test)
        assert validate_split(again, b)["ok"]


class TestTwoBundles:
    def test_pretrain_addresses_first_bundle(self):
        pre = bundle_with([0, 1], seed=3)
        ev = bundle_with([2, 3, 4], seed=4)
        params = SplitParams(source_domains=(0, 1), target_domains=(4,),
                             finetune_domains=(2, 3))
        s = make_split((pre, ev), "category_correlated", params, seed=0)
        assert s.two_bundles
        assert set(pre.domain_labels[s.pretrain_unlabeled].tolist()) == {0, 1}
        assert validate_split(s, (pre, ev))["ok"]


def random_feasible_request(rng, setting):
    """A feasible random make_split request for the round-trip property.

    Bundles are resampled (deterministically) until every (domain, category)
    cell the request relies on is populated, so make_split never sees a
    genuinely infeasible request here.
    """
    n_domains = int(rng.integers(4, 7))
    n_cats = int(rng.integers(3, 7))
    spec = BlobSpec(n_categories=n_cats, n_domains_total=8, cat_dims=n_cats, dom_dims=8,
                    noise_dims=2, noise_sigma=0.3,
                    spurious_rho=float(rng.uniform(0.0, 0.7)),
                    n_per_domain=int(rng.integers(40, 90)))
    domains = rng.permutation(n_domains)
    n_target = 1
    if setting in ("category_correlated", "uncorrelated"):
        n_fin = int(rng.integers(1, n_domains - 1))
        n_src = n_domains - n_fin - n_target
        if n_src < 1:
            n_src, n_fin = 1, n_domains - 2
        source = tuple(domains[:n_src].tolist())
        finetune = tuple(domains[n_src:n_src + n_fin].tolist())
    else:
        source = tuple(domains[:-1].tolist())
        finetune = None
    target = tuple(domains[-1:].tolist())
    if setting in ("domain_correlated", "uncorrelated"):
        n_lab = int(rng.integers(1, n_cats))
        cats = rng.permutation(n_cats)
        labeled = tuple(cats[:n_lab].tolist())
        unlabeled = tuple(cats[n_lab:].tolist())
    else:
        labeled = unlabeled = None
    frac = float(rng.uniform(0.1, 1.0))
    params = SplitParams(source_domains=source, target_domains=target,
                         labeled_categories=labeled, unlabeled_categories=unlabeled,
                         finetune_domains=finetune, label_fraction=frac)

    lab_cats = labeled if labeled is not None else tuple(range(n_cats))
    unlab_cats = unlabeled if unlabeled is not None else lab_cats
    need = [(d, c) for d in (finetune if finetune is not None else source) + target
            for c in lab_cats]
    need += [(d, c) for d in source for c in unlab_cats]
    while True:
        bundle = generate(spec, domains.tolist(), seed=int(rng.integers(1 << 31)))
        if all(np.any((bundle.domain_labels == d) & (bundle.category_labels == c))
               for d, c in need):
            return bundle, params


class TestRoundTripProperty:
    @pytest.mark.parametrize("setting", SETTINGS)
    def test_make_then_validate_ok(self, setting):
        rng = np.random.default_rng(SETTINGS.index(setting) + 1)
        for trial in range(40):
            bundle, params = random_feasible_request(rng, setting)
            split = make_split(bundle, setting, params, seed=int(rng.integers(1 << 31)))
            rep = validate_split(split, bundle)
            assert rep["ok"], (setting, trial, rep)
