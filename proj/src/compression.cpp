#include "byzsim/compression.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace byzsim {

CompressorKind compressor_kind_from_string(const std::string& s) {
  if (s == "identity") return CompressorKind::Identity;
  if (s == "rand_k") return CompressorKind::RandK;
  throw std::invalid_argument("compressor_kind_from_string: unknown compressor '" + s + "'");
}

double compressor_omega(const Compressor& c, std::size_t dim) {
  if (c.kind == CompressorKind::Identity) return 0.0;
  if (c.k == 0 || c.k > dim) {
    throw std::invalid_argument("compressor_omega: rand_k budget must be in [1, dim]");
  }
  return static_cast<double>(dim) / static_cast<double>(c.k) - 1.0;
}

double compressor_expected_density(const Compressor& c, std::size_t dim) {
  if (c.kind == CompressorKind::Identity) return static_cast<double>(dim);
  if (c.k == 0 || c.k > dim) {
    throw std::invalid_argument("compressor_expected_density: rand_k budget must be in [1, dim]");
  }
  return static_cast<double>(c.k);
}

std::size_t index_bits(std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("index_bits: dim must be positive");
  std::size_t bits = 0;
  std::size_t span = 1;
  while (span < dim) {
    span <<= 1;
    ++bits;
  }
  return bits;  // ceil(log2(dim)); 0 when dim == 1
}

std::uint64_t dense_bit_cost(std::size_t dim, std::size_t value_bits) {
  return static_cast<std::uint64_t>(dim) * static_cast<std::uint64_t>(value_bits);
}

std::uint64_t sparse_bit_cost(std::size_t k, std::size_t dim, std::size_t value_bits) {
  return static_cast<std::uint64_t>(k) *
         static_cast<std::uint64_t>(value_bits + index_bits(dim));
}

CompressedMessage compress(const Compressor& c, const Vec& x, RngStream& rng) {
  const std::size_t dim = x.size();
  if (dim == 0) throw std::invalid_argument("compress: empty vector");

  if (c.kind == CompressorKind::Identity) {
    return make_dense_message(x, c.value_bits);
  }

  const std::size_t k = c.k;
  if (k == 0 || k > dim) {
    throw std::invalid_argument("compress: rand_k budget must be in [1, dim]");
  }

  // Partial Fisher-Yates over coordinate indices: exactly k uniform draws,
  // giving a uniform k-subset regardless of k relative to dim.
  std::vector<std::uint32_t> pool(dim);
  std::iota(pool.begin(), pool.end(), 0u);
  for (std::size_t t = 0; t < k; ++t) {
    const std::size_t j = t + static_cast<std::size_t>(rng.uniform_index(dim - t));
    std::swap(pool[t], pool[j]);
  }
  std::vector<std::uint32_t> idx(pool.begin(), pool.begin() + k);
  std::sort(idx.begin(), idx.end());

  const double scale_up = static_cast<double>(dim) / static_cast<double>(k);
  Vec val(k);
  for (std::size_t t = 0; t < k; ++t) val[t] = scale_up * x[idx[t]];

  CompressedMessage msg;
  msg.dense = false;
  msg.idx = std::move(idx);
  msg.val = std::move(val);
  msg.bit_cost = sparse_bit_cost(k, dim, c.value_bits);
  return msg;
}

CompressedMessage make_sparse_message(std::vector<std::uint32_t> idx, Vec val,
                                      std::size_t dim, std::size_t value_bits) {
  if (idx.size() != val.size()) {
    throw std::invalid_argument("make_sparse_message: index/value size mismatch");
  }
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (idx[t] >= dim) throw std::invalid_argument("make_sparse_message: index out of range");
    if (t > 0 && idx[t] <= idx[t - 1]) {
      throw std::invalid_argument("make_sparse_message: indices must be strictly increasing");
    }
  }
  CompressedMessage msg;
  msg.dense = false;
  msg.idx = std::move(idx);
  msg.val = std::move(val);
  msg.bit_cost = sparse_bit_cost(msg.idx.size(), dim, value_bits);
  return msg;
}

CompressedMessage make_dense_message(Vec payload, std::size_t value_bits) {
  CompressedMessage msg;
  msg.dense = true;
  msg.dense_payload = std::move(payload);
  msg.bit_cost = dense_bit_cost(msg.dense_payload.size(), value_bits);
  return msg;
}

Vec decompress(const CompressedMessage& msg, std::size_t dim) {
  if (msg.dense) {
    if (msg.dense_payload.size() != dim) {
      throw std::invalid_argument("decompress: dense payload has wrong dimension");
    }
    return msg.dense_payload;
  }
  Vec out = zeros(dim);
  for (std::size_t t = 0; t < msg.idx.size(); ++t) {
    if (msg.idx[t] >= dim) throw std::invalid_argument("decompress: index out of range");
    out[msg.idx[t]] = msg.val[t];
  }
  return out;
}

}  // namespace byzsim
