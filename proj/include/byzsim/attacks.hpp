#ifndef BYZSIM_ATTACKS_HPP
#define BYZSIM_ATTACKS_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "byzsim/vec.hpp"

namespace byzsim {

// Byzantine worker behaviours. Na and Lf workers run the honest pipeline
// (Lf on a label-flipped shard), so their crafted message equals the honest
// message computed upstream; Bf, Alie and Ipm replace it.
enum class AttackKind { Na, Lf, Bf, Alie, Ipm };

AttackKind attack_kind_from_string(const std::string& s);

struct AttackSpec {
  AttackKind kind = AttackKind::Na;
  double ipm_epsilon = 0.1;
  double alie_z = 0.0;  // 0 selects the order-statistic value for (n, byz)
};

// What the adversary sees when crafting a round's messages: the effective
// (post-compression) messages of the good workers, omniscient as usual.
struct AttackContext {
  const std::vector<Vec>* good_messages = nullptr;
  std::size_t n_total = 0;
  std::size_t byz_count = 0;
  std::uint64_t round = 0;
};

// Standard-normal quantile via a rational approximation refined with one
// Halley step against the erfc-based CDF; |error| stays near machine level.
double inverse_normal_cdf(double p);

// z used by the Alie attack when not overridden: with s = floor(n/2 + 1) - byz
// supporters needed, z = Phi^{-1}((n - byz - s) / (n - byz)), floored at 0.3
// when the quantile argument is <= 0.5. Requires byz < n/2.
double alie_auto_z(std::size_t n, std::size_t byz);

// The message a Byzantine worker submits this round. honest_message is what
// the worker's own honest pipeline produced (already the Lf-poisoned one for
// label flipping); Na/Lf return it unchanged, Bf negates it, Alie and Ipm
// craft a common vector from the good messages.
Vec byz_message(const AttackSpec& spec, const AttackContext& ctx,
                const Vec& honest_message);

// Indices of the k largest-magnitude coordinates, ties toward the lower
// index, returned sorted ascending. Used to frame a crafted dense vector as
// a legal k-sparse wire message.
std::vector<std::uint32_t> top_k_indices(const Vec& v, std::size_t k);

}  // namespace byzsim

#endif  // BYZSIM_ATTACKS_HPP
