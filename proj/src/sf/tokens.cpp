#include "vqsf/sf/tokens.hpp"

#include <algorithm>

#include "vqsf/common/error.hpp"

namespace vqsf::sf {

std::size_t TokenStream::loss_positions() const {
  return static_cast<std::size_t>(std::count(loss_mask.begin(), loss_mask.end(), std::uint8_t{1}));
}

std::size_t TokenStream::partial_end() const {
  for (std::size_t i = 0; i < coord.size(); ++i)
    if (coord[i] == vocab.end_c()) return i;
  throw DataError("token stream has no END token");
}

namespace {

void push(TokenStream& s, std::int64_t c, std::int64_t v, Segment seg) {
  if (!s.coord.empty()) s.next_coord.back() = c;
  s.coord.push_back(c);
  s.value.push_back(v);
  s.segment.push_back(seg);
  s.next_coord.push_back(s.vocab.end_c());
  s.loss_mask.push_back(0);
  s.target_c.push_back(-1);
  s.target_v.push_back(-1);
}

}  // namespace

TokenStream build_prefix(const vqdif::SparseSeq& partial, std::size_t max_len) {
  partial.validate();
  if (partial.size() + 1 > max_len)
    throw DataError("partial sequence of length " + std::to_string(partial.size()) + " exceeds max_seq_len " +
                    std::to_string(max_len));
  TokenStream s;
  s.vocab = {partial.R, partial.V};
  for (const auto& t : partial.entries) push(s, t.c, t.v, Segment::partial);
  push(s, s.vocab.end_c(), s.vocab.pad_v(), Segment::partial);
  return s;
}

void append_element(TokenStream& s, std::int64_t c, std::int64_t v) {
  const std::size_t i = s.size() - 1;  // the position predicting the new element
  s.loss_mask[i] = 1;
  s.target_c[i] = c;
  s.target_v[i] = c == s.vocab.end_c() ? -1 : v;
  push(s, c, c == s.vocab.end_c() ? s.vocab.pad_v() : v, Segment::complete);
}

TokenStream build_training_sequence(const vqdif::SparseSeq& partial, const vqdif::SparseSeq& complete,
                                    double mask_prob, Rng& rng, std::size_t max_len) {
  complete.validate();
  if (partial.R != complete.R || partial.V != complete.V)
    throw DataError("partial (R=" + std::to_string(partial.R) + ", V=" + std::to_string(partial.V) +
                    ") and complete (R=" + std::to_string(complete.R) + ", V=" + std::to_string(complete.V) +
                    ") sequences disagree");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) throw UsageError("mask_prob must lie in [0, 1]");
  vqdif::SparseSeq kept{partial.R, partial.V, {}};
  for (const auto& t : partial.entries) {
    const bool drop = mask_prob >= 1.0 || (mask_prob > 0.0 && rng.bernoulli(mask_prob));
    if (!drop) kept.entries.push_back(t);
  }
  const std::size_t total = kept.size() + complete.size() + 2;
  if (total > max_len)
    throw DataError("token stream of length " + std::to_string(total) + " exceeds max_seq_len " +
                    std::to_string(max_len));
  TokenStream s = build_prefix(kept, max_len);
  for (const auto& t : complete.entries) append_element(s, t.c, t.v);
  append_element(s, s.vocab.end_c(), s.vocab.pad_v());
  return s;
}

}  // namespace vqsf::sf
