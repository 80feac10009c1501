#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "byzsim/data.hpp"
#include "byzsim/rng.hpp"

using namespace byzsim;

namespace {

// Writes content to a scratch file in the working directory and returns the
// path. Each fixture uses a distinct name so reruns stay independent.
std::string write_file(const std::string& name, const std::string& content) {
  const std::string path = "data_fixture_" + name + ".txt";
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << content;
  out.close();
  return path;
}

Dataset tricky_dataset() {
  Dataset ds;
  ds.dim = 6;
  ds.rows = {
      SparseRow{{0, 2, 5}, {1.0 / 3.0, -2.5e17, 0.1 + 0.2}},
      SparseRow{{1}, {1e-300}},
      SparseRow{{}, {}},             // all-zero row
      SparseRow{{3, 4}, {-0.0, 7}},  // negative zero survives as 0
  };
  ds.labels = {1, 0, 1, 0};
  return ds;
}

}  // namespace

TEST_CASE("parser maps labels and one-based indices") {
  const std::string path = write_file(
      "basic",
      "+1 1:0.5 3:-2\n"
      "-1 2:1.25\n"
      "0 1:3\n"
      "2 4:1e-3\n");
  const Dataset ds = load_libsvm(path);
  REQUIRE(ds.size() == 4);
  CHECK(ds.dim == 4);
  CHECK(ds.labels == std::vector<double>{1, 0, 0, 1});
  CHECK(ds.rows[0].idx == std::vector<std::uint32_t>{0, 2});
  CHECK(ds.rows[0].val == std::vector<double>{0.5, -2.0});
  CHECK(ds.rows[1].idx == std::vector<std::uint32_t>{1});
  CHECK(ds.rows[3].val == std::vector<double>{1e-3});
}

TEST_CASE("parser tolerates comments, blank lines, and CRLF endings") {
  const std::string path = write_file(
      "crlf",
      "# leading comment\r\n"
      "\r\n"
      "1 1:2\r\n"
      "   \t  \n"
      "  # indented comment\n"
      "-1 2:3\n");
  const Dataset ds = load_libsvm(path);
  REQUIRE(ds.size() == 2);
  CHECK(ds.dim == 2);
  CHECK(ds.labels == std::vector<double>{1, 0});
  CHECK(ds.rows[0].val == std::vector<double>{2.0});
}

TEST_CASE("out-of-order feature indices are canonicalized ascending") {
  const std::string path = write_file("order", "1 3:3 1:1 2:2\n");
  const Dataset ds = load_libsvm(path);
  CHECK(ds.rows[0].idx == std::vector<std::uint32_t>{0, 1, 2});
  CHECK(ds.rows[0].val == std::vector<double>{1, 2, 3});
}

TEST_CASE("duplicate feature index reports file and line") {
  const std::string path = write_file("dup", "1 1:1\n0 2:5 2:6\n");
  CHECK_THROWS_WITH_AS(load_libsvm(path),
                       doctest::Contains((path + ":2").c_str()), std::runtime_error);
  CHECK_THROWS_WITH_AS(load_libsvm(path), doctest::Contains("duplicate"),
                       std::runtime_error);
}

TEST_CASE("malformed lines are rejected with location") {
  CHECK_THROWS_WITH_AS(load_libsvm(write_file("badlabel", "x 1:1\n")),
                       doctest::Contains("bad label"), std::runtime_error);
  CHECK_THROWS_WITH_AS(load_libsvm(write_file("zeroindex", "1 0:5\n")),
                       doctest::Contains("bad feature token"), std::runtime_error);
  CHECK_THROWS_WITH_AS(load_libsvm(write_file("nocolon", "1 1\n")),
                       doctest::Contains("bad feature token"), std::runtime_error);
  CHECK_THROWS_WITH_AS(load_libsvm(write_file("badvalue", "1 1:abc\n")),
                       doctest::Contains("bad feature value"), std::runtime_error);
  CHECK_THROWS_WITH_AS(load_libsvm(write_file("empty", "# nothing\n")),
                       doctest::Contains("no samples"), std::runtime_error);
  CHECK_THROWS_AS(load_libsvm("data_fixture_does_not_exist.txt"),
                  std::runtime_error);
}

TEST_CASE("dim_override must cover the largest index") {
  const std::string path = write_file("dims", "1 3:1\n0 1:2\n");
  CHECK_THROWS_WITH_AS(load_libsvm(path, 2), doctest::Contains("dim_override"),
                       std::runtime_error);
  CHECK(load_libsvm(path).dim == 3);
  CHECK(load_libsvm(path, 3).dim == 3);
  CHECK(load_libsvm(path, 7).dim == 7);
}

TEST_CASE("add_bias appends an explicit constant-one feature") {
  const std::string path = write_file("bias", "1 2:4\n0 1:5\n");
  const Dataset plain = load_libsvm(path);
  const Dataset biased = load_libsvm(path, 0, true);
  CHECK(plain.dim == 2);
  REQUIRE(biased.dim == 3);
  CHECK(biased.rows[0].idx == std::vector<std::uint32_t>{1, 2});
  CHECK(biased.rows[0].val == std::vector<double>{4.0, 1.0});
  CHECK(biased.rows[1].idx == std::vector<std::uint32_t>{0, 2});
  CHECK(biased.rows[1].val == std::vector<double>{5.0, 1.0});

  // With an override the bias lands just past the overridden width.
  const Dataset wide = load_libsvm(path, 5, true);
  REQUIRE(wide.dim == 6);
  CHECK(wide.rows[0].idx.back() == 5);
  CHECK(wide.rows[0].val.back() == 1.0);
}

TEST_CASE("save/load round trip reproduces the dataset exactly") {
  const Dataset ds = tricky_dataset();
  const std::string path = "data_fixture_roundtrip.txt";
  save_libsvm(ds, path);
  // dim came from the struct, not the indices, so pass it back explicitly.
  const Dataset back = load_libsvm(path, ds.dim);
  CHECK(back == ds);

  // A second save of the loaded copy is byte-identical (canonical format).
  const std::string path2 = "data_fixture_roundtrip2.txt";
  save_libsvm(back, path2);
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("disjoint shards partition the samples with near-equal sizes") {
  auto data = std::make_shared<Dataset>(tricky_dataset());
  // Need more samples; synthesize 23 single-feature rows.
  data->rows.clear();
  data->labels.clear();
  data->dim = 1;
  for (int i = 0; i < 23; ++i) {
    data->rows.push_back(SparseRow{{0}, {static_cast<double>(i)}});
    data->labels.push_back(i % 2);
  }
  const auto shards = shard_dataset(data, 5, ShardMode::DisjointShuffle, 42);
  REQUIRE(shards.size() == 5);

  // 23 = 5+5+5+4+4: the first size%n workers absorb the remainder.
  CHECK(shards[0].size() == 5);
  CHECK(shards[1].size() == 5);
  CHECK(shards[2].size() == 5);
  CHECK(shards[3].size() == 4);
  CHECK(shards[4].size() == 4);

  std::set<std::uint32_t> seen;
  for (const auto& sh : shards) {
    CHECK(sh.worker_id == &sh - shards.data());
    for (std::uint32_t id : *sh.ids) CHECK(seen.insert(id).second);
  }
  CHECK(seen.size() == 23);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 22);

  // Same seed reproduces the split; a different seed moves samples around.
  const auto again = shard_dataset(data, 5, ShardMode::DisjointShuffle, 42);
  const auto other = shard_dataset(data, 5, ShardMode::DisjointShuffle, 43);
  bool same42 = true, same43 = true;
  for (std::size_t w = 0; w < 5; ++w) {
    same42 = same42 && (*again[w].ids == *shards[w].ids);
    same43 = same43 && (*other[w].ids == *shards[w].ids);
  }
  CHECK(same42);
  CHECK_FALSE(same43);
}

TEST_CASE("disjoint shuffle is a replay of the named shuffle stream") {
  auto data = std::make_shared<Dataset>();
  data->dim = 1;
  for (int i = 0; i < 17; ++i) {
    data->rows.push_back(SparseRow{{0}, {1.0}});
    data->labels.push_back(1.0);
  }
  const std::uint64_t seed = 99;
  const auto shards = shard_dataset(data, 4, ShardMode::DisjointShuffle, seed);

  std::vector<std::uint32_t> perm(17);
  std::iota(perm.begin(), perm.end(), 0u);
  RngStream rng(seed, StreamRole::DataShuffle, 0);
  shuffle(perm, rng);

  std::size_t cursor = 0;
  for (const auto& sh : shards) {
    const std::vector<std::uint32_t> expect(perm.begin() + cursor,
                                            perm.begin() + cursor + sh.size());
    CHECK(*sh.ids == expect);
    cursor += sh.size();
  }
  CHECK(cursor == 17);
}

TEST_CASE("full-copy shards share one dataset and one id vector") {
  auto data = std::make_shared<Dataset>(tricky_dataset());
  const auto shards = shard_dataset(data, 3, ShardMode::FullCopy, 1);
  REQUIRE(shards.size() == 3);
  for (const auto& sh : shards) {
    CHECK(sh.data.get() == data.get());
    CHECK(sh.size() == data->size());
    CHECK(sh.ids.get() == shards[0].ids.get());
  }
  std::vector<std::uint32_t> expect(data->size());
  std::iota(expect.begin(), expect.end(), 0u);
  CHECK(*shards[0].ids == expect);

  const WorkerShard extra = full_copy_shard(data, 7);
  CHECK(extra.worker_id == 7);
  CHECK(extra.data.get() == data.get());
  CHECK(*extra.ids == expect);
}

TEST_CASE("shard accessors resolve through the id indirection") {
  auto data = std::make_shared<Dataset>(tricky_dataset());
  const auto shards = shard_dataset(data, 2, ShardMode::DisjointShuffle, 5);
  for (const auto& sh : shards) {
    for (std::size_t j = 0; j < sh.size(); ++j) {
      const std::uint32_t id = (*sh.ids)[j];
      CHECK(sh.row(j) == data->rows[id]);
      CHECK(sh.label(j) == data->labels[id]);
    }
  }
}

TEST_CASE("flip_labels deep-copies labels and shares nothing mutable") {
  auto data = std::make_shared<Dataset>(tricky_dataset());
  const WorkerShard shard = full_copy_shard(data, 0);
  const WorkerShard flipped = flip_labels(shard);

  CHECK(flipped.data.get() != shard.data.get());  // deep copy
  CHECK(flipped.ids.get() == shard.ids.get());    // ids can be shared
  CHECK(flipped.worker_id == shard.worker_id);
  REQUIRE(flipped.size() == shard.size());
  for (std::size_t j = 0; j < shard.size(); ++j) {
    CHECK(flipped.label(j) == 1.0 - shard.label(j));
    CHECK(flipped.row(j) == shard.row(j));
  }
  // The original is untouched.
  CHECK(data->labels == tricky_dataset().labels);
}

TEST_CASE("shard_dataset rejects degenerate inputs") {
  auto data = std::make_shared<Dataset>(tricky_dataset());
  CHECK_THROWS_AS(shard_dataset(data, 0, ShardMode::FullCopy, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(shard_dataset(data, 5, ShardMode::DisjointShuffle, 1),
                  std::invalid_argument);  // more workers than samples
  CHECK_THROWS_AS(shard_dataset(nullptr, 2, ShardMode::FullCopy, 1),
                  std::invalid_argument);
}
