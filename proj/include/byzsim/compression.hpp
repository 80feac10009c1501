#ifndef BYZSIM_COMPRESSION_HPP
#define BYZSIM_COMPRESSION_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "byzsim/rng.hpp"
#include "byzsim/vec.hpp"

namespace byzsim {

// Unbiased lossy compressors for worker-to-server messages.
enum class CompressorKind { Identity, RandK };

CompressorKind compressor_kind_from_string(const std::string& s);

struct Compressor {
  CompressorKind kind = CompressorKind::Identity;
  std::size_t k = 0;               // sparsifier budget; ignored for identity
  std::size_t value_bits = 64;     // wire width of one coordinate value
};

// A message on the wire: either a dense vector or a sorted sparse
// (index, value) list, plus the uplink cost of sending it.
struct CompressedMessage {
  bool dense = false;
  Vec dense_payload;
  std::vector<std::uint32_t> idx;  // strictly increasing when sparse
  Vec val;
  std::uint64_t bit_cost = 0;
};

// Variance parameter: E||Q(x) - x||^2 <= omega ||x||^2.
double compressor_omega(const Compressor& c, std::size_t dim);

// Expected number of nonzero coordinates a worker sends per message.
double compressor_expected_density(const Compressor& c, std::size_t dim);

// Bits needed to index one coordinate of a dim-dimensional vector.
std::size_t index_bits(std::size_t dim);

// Uplink cost of a dense dim-vector / of a k-sparse message.
std::uint64_t dense_bit_cost(std::size_t dim, std::size_t value_bits);
std::uint64_t sparse_bit_cost(std::size_t k, std::size_t dim, std::size_t value_bits);

// Applies the compressor. RandK picks a uniform k-subset of coordinates
// (consuming exactly k draws from rng) and scales survivors by dim/k so the
// result is unbiased. Identity passes the vector through densely.
CompressedMessage compress(const Compressor& c, const Vec& x, RngStream& rng);

// Wraps an already-sparse vector (e.g. an attacker's crafted payload) in the
// sparse wire format without touching the values. Indices must be sorted.
CompressedMessage make_sparse_message(std::vector<std::uint32_t> idx, Vec val,
                                      std::size_t dim, std::size_t value_bits);

// Wraps a dense vector in the dense wire format.
CompressedMessage make_dense_message(Vec payload, std::size_t value_bits);

// Reconstructs the dense vector a message encodes.
Vec decompress(const CompressedMessage& msg, std::size_t dim);

}  // namespace byzsim

#endif  // BYZSIM_COMPRESSION_HPP
