import pytest

from specflow import ConfigError, EigenCache, get_eigen_cache, get_max_workers, init_eigen_cache, init_pool, parallel_map
from specflow.output import ExperimentWriter
from specflow.models import ExperimentName, ExperimentReport


def test_cache_hits_and_misses():
    cache = EigenCache(max_entries=4)
    assert cache.get("a") is None
    cache.set("a", 1)
    assert cache.get("a") == 1
    stats = cache.stats()
    assert stats["hits"] == 1 and stats["misses"] == 1
    assert stats["hit_rate"] == 0.5


def test_cache_evicts_oldest_entries():
    cache = EigenCache(max_entries=2)
    cache.set("a", 1)
    cache.set("b", 2)
    cache.set("c", 3)
    assert len(cache) == 2
    assert cache.get("a") is None
    assert cache.get("c") == 3


def test_cache_eviction_follows_insertion_order():
    cache = EigenCache(max_entries=3)
    for key in "abc":
        cache.set(key, key)
    # rewriting a key makes it the newest entry
    cache.set("a", "again")
    cache.set("d", "d")
    assert cache.get("b") is None
    assert cache.get("a") == "again"
    for key in "efgh":
        cache.set(key, key)
    assert len(cache) == 3
    assert [cache.get(k) for k in "fgh"] == ["f", "g", "h"]


def test_cache_delete_and_clear():
    cache = EigenCache()
    cache.set(("key", 1), "value")
    assert cache.delete(("key", 1))
    assert not cache.delete(("key", 1))
    cache.set("x", 1)
    cache.set("y", 2)
    assert cache.clear() == 2
    assert len(cache) == 0


def test_disabled_cache_stores_nothing():
    cache = EigenCache(max_entries=0)
    cache.set("a", 1)
    assert len(cache) == 0


def test_global_cache_is_replaced_by_init():
    cache = init_eigen_cache(8)
    assert get_eigen_cache() is cache
    assert cache.max_entries == 8


def test_pool_keeps_input_order():
    assert init_pool(3) == 3
    assert get_max_workers() == 3
    assert parallel_map(lambda x: x * x, range(10)) == [x * x for x in range(10)]
    with pytest.raises(ConfigError):
        init_pool(0)


def test_writer_layout(tmp_path):
    writer = ExperimentWriter(str(tmp_path), "winding")
    writer.write_csv("table", ["a", "b"], [(1, 0.5)], units="s", params={"K": 4})
    report = ExperimentReport(experiment=ExperimentName.WINDING, passed=True)
    writer.write_summary(report)
    lines = (tmp_path / "winding" / "table.csv").read_text().splitlines()
    assert lines[0] == '# units: s; params: {"K": 4}'
    assert lines[1:] == ["a,b", "1,0.5"]
    assert report.files == ["table.csv", "summary.json"]
