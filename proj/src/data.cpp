#include "byzsim/data.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace byzsim {

namespace {

std::string at_line(const std::string& path, std::size_t line_no) {
  return path + ":" + std::to_string(line_no);
}

const char* skip_blanks(const char* p) {
  while (*p == ' ' || *p == '\t') ++p;
  return p;
}

}  // namespace

Dataset load_libsvm(const std::string& path, std::size_t dim_override,
                    bool add_bias) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_libsvm: cannot open " + path);

  Dataset ds;
  std::size_t max_index = 0;  // 1-based maximum seen in the file
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const char* p = skip_blanks(line.c_str());
    if (*p == '\0' || *p == '#') continue;

    char* end = nullptr;
    const double raw_label = std::strtod(p, &end);
    if (end == p) {
      throw std::runtime_error("load_libsvm: bad label at " + at_line(path, line_no));
    }
    p = end;

    SparseRow row;
    while (true) {
      p = skip_blanks(p);
      if (*p == '\0') break;
      const unsigned long file_index = std::strtoul(p, &end, 10);
      if (end == p || *end != ':' || file_index == 0) {
        throw std::runtime_error("load_libsvm: bad feature token at " + at_line(path, line_no));
      }
      p = end + 1;
      const double value = std::strtod(p, &end);
      if (end == p) {
        throw std::runtime_error("load_libsvm: bad feature value at " + at_line(path, line_no));
      }
      p = end;
      row.idx.push_back(static_cast<std::uint32_t>(file_index - 1));
      row.val.push_back(value);
      max_index = std::max(max_index, static_cast<std::size_t>(file_index));
    }

    // Canonicalize to ascending index order and reject duplicates.
    std::vector<std::size_t> order(row.idx.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return row.idx[a] < row.idx[b]; });
    SparseRow sorted;
    sorted.idx.reserve(order.size());
    sorted.val.reserve(order.size());
    for (std::size_t t : order) {
      if (!sorted.idx.empty() && sorted.idx.back() == row.idx[t]) {
        throw std::runtime_error("load_libsvm: duplicate feature index " +
                                 std::to_string(row.idx[t] + 1) + " at " +
                                 at_line(path, line_no));
      }
      sorted.idx.push_back(row.idx[t]);
      sorted.val.push_back(row.val[t]);
    }

    ds.rows.push_back(std::move(sorted));
    ds.labels.push_back(raw_label <= 0.0 ? 0.0 : 1.0);
  }

  if (ds.rows.empty()) throw std::runtime_error("load_libsvm: no samples in " + path);

  if (dim_override != 0 && dim_override < max_index) {
    throw std::runtime_error("load_libsvm: dim_override " + std::to_string(dim_override) +
                             " is smaller than the largest index " + std::to_string(max_index));
  }
  ds.dim = dim_override != 0 ? dim_override : max_index;

  if (add_bias) {
    const std::uint32_t bias_index = static_cast<std::uint32_t>(ds.dim);
    for (SparseRow& row : ds.rows) {
      row.idx.push_back(bias_index);
      row.val.push_back(1.0);
    }
    ds.dim += 1;
  }
  return ds;
}

void save_libsvm(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_libsvm: cannot open " + path);
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << (ds.labels[i] <= 0.0 ? '0' : '1');
    const SparseRow& row = ds.rows[i];
    for (std::size_t t = 0; t < row.idx.size(); ++t) {
      std::snprintf(buf, sizeof(buf), "%.17g", row.val[t]);
      out << ' ' << (row.idx[t] + 1) << ':' << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_libsvm: write failed for " + path);
}

std::vector<WorkerShard> shard_dataset(std::shared_ptr<const Dataset> data,
                                       std::size_t n_workers, ShardMode mode,
                                       std::uint64_t seed) {
  if (!data || data->size() == 0) throw std::invalid_argument("shard_dataset: empty dataset");
  if (n_workers == 0) throw std::invalid_argument("shard_dataset: n_workers must be positive");
  const std::size_t n_samples = data->size();

  std::vector<WorkerShard> shards;
  shards.reserve(n_workers);

  if (mode == ShardMode::FullCopy) {
    auto all = std::make_shared<std::vector<std::uint32_t>>(n_samples);
    std::iota(all->begin(), all->end(), 0u);
    for (std::size_t w = 0; w < n_workers; ++w) {
      shards.push_back(WorkerShard{data, all, static_cast<int>(w)});
    }
    return shards;
  }

  if (n_workers > n_samples) {
    throw std::invalid_argument("shard_dataset: more workers than samples");
  }
  std::vector<std::uint32_t> perm(n_samples);
  std::iota(perm.begin(), perm.end(), 0u);
  RngStream rng(seed, StreamRole::DataShuffle, 0);
  shuffle(perm, rng);

  const std::size_t base = n_samples / n_workers;
  const std::size_t extra = n_samples % n_workers;
  std::size_t cursor = 0;
  for (std::size_t w = 0; w < n_workers; ++w) {
    const std::size_t take = base + (w < extra ? 1 : 0);
    auto ids = std::make_shared<std::vector<std::uint32_t>>(
        perm.begin() + cursor, perm.begin() + cursor + take);
    cursor += take;
    shards.push_back(WorkerShard{data, ids, static_cast<int>(w)});
  }
  return shards;
}

WorkerShard full_copy_shard(std::shared_ptr<const Dataset> data, int worker_id) {
  if (!data || data->size() == 0) throw std::invalid_argument("full_copy_shard: empty dataset");
  auto all = std::make_shared<std::vector<std::uint32_t>>(data->size());
  std::iota(all->begin(), all->end(), 0u);
  return WorkerShard{std::move(data), std::move(all), worker_id};
}

WorkerShard flip_labels(const WorkerShard& shard) {
  auto flipped = std::make_shared<Dataset>(*shard.data);
  for (double& y : flipped->labels) y = 1.0 - y;
  return WorkerShard{flipped, shard.ids, shard.worker_id};
}

}  // namespace byzsim
