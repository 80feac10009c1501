#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "byzsim/rng.hpp"

namespace byzsim {

// One sample's feature vector in sparse form; indices are 0-based, strictly
// ascending, all < Dataset::dim.
struct SparseRow {
  std::vector<std::uint32_t> idx;
  std::vector<double> val;

  bool operator==(const SparseRow&) const = default;
};

// A labeled dataset. For classification data the labels are 0/1; the
// quadratic test problem reuses the label slot for its per-sample curvature
// (see problems.hpp).
struct Dataset {
  std::vector<SparseRow> rows;
  std::vector<double> labels;
  std::size_t dim = 0;

  std::size_t size() const { return rows.size(); }
  bool operator==(const Dataset&) const = default;
};

// Reads a file in the common sparse text format: one sample per line,
//   <label> <index>:<value> <index>:<value> ...
// Indices are 1-based in the file and shifted to 0-based in memory. Labels
// <= 0 map to 0 and everything else to 1. Lines whose first non-blank
// character is '#' are skipped, as are blank lines; CRLF line endings are
// tolerated. A repeated feature index within one line is an error.
//
// dim_override = 0 means "use the largest index seen"; a nonzero override
// must be >= that maximum (used to align train/test feature spaces).
// add_bias appends an explicit constant-1 feature at the end of every row
// (index = dim before the append); nothing is ever added implicitly.
Dataset load_libsvm(const std::string& path, std::size_t dim_override = 0,
                    bool add_bias = false);

// Writes the same text format (1-based indices, labels as 0/1, values with
// 17 significant digits) so that load(save(ds)) == ds exactly.
void save_libsvm(const Dataset& ds, const std::string& path);

// A worker's view of a dataset: a shared immutable dataset plus the sample
// ids this worker owns. Shards produced together share storage.
struct WorkerShard {
  std::shared_ptr<const Dataset> data;
  std::shared_ptr<const std::vector<std::uint32_t>> ids;
  int worker_id = 0;

  std::size_t size() const { return ids->size(); }
  const SparseRow& row(std::size_t j) const { return data->rows[(*ids)[j]]; }
  double label(std::size_t j) const { return data->labels[(*ids)[j]]; }
};

enum class ShardMode {
  FullCopy,         // every worker sees the whole dataset
  DisjointShuffle,  // seeded random permutation, split into contiguous runs
};

// Splits a dataset among n workers. Under DisjointShuffle the shard sizes
// differ by at most one (the first size%n shards get the extra sample) and
// the split is a function of the seed alone. Worker ids are 0..n-1.
std::vector<WorkerShard> shard_dataset(std::shared_ptr<const Dataset> data,
                                       std::size_t n_workers, ShardMode mode,
                                       std::uint64_t seed);

// A full-copy shard for one extra worker (used for adversarial workers that
// hold the entire dataset).
WorkerShard full_copy_shard(std::shared_ptr<const Dataset> data, int worker_id);

// Deep-copies the shard's dataset with every label y replaced by 1-y.
// Feature rows are copied unchanged.
WorkerShard flip_labels(const WorkerShard& shard);

}  // namespace byzsim
