#pragma once

#include <cstdint>
#include <vector>

#include "vqsf/common/rng.hpp"
#include "vqsf/vqdif/sparse_seq.hpp"

namespace vqsf::sf {

enum class Segment : std::uint8_t { partial = 0, complete = 1 };

// Id conventions for a vocabulary of R^3 cells and V codes:
//   coordinate ids 0..R^3-1 are cells, R^3 is END;
//   value ids 0..V-1 are codes, V is PAD (the value slot of an END token).
struct Vocab {
  std::uint32_t R = 0;
  std::uint32_t V = 0;
  std::int64_t cells() const { return std::int64_t{R} * R * R; }
  std::int64_t end_c() const { return cells(); }
  std::int64_t pad_v() const { return V; }
  std::int64_t coord_classes() const { return cells() + 1; }
};

// Layout [S_P tuples..., END, S_C tuples..., END]. Position i predicts the
// element at i + 1; `target_*` hold those labels on loss positions and -1
// elsewhere (the value target is also -1 when the next element is END).
struct TokenStream {
  Vocab vocab;
  std::vector<std::int64_t> coord;
  std::vector<std::int64_t> value;
  std::vector<Segment> segment;
  // coordinate of the next element, fed to the value stream; END past the last position
  std::vector<std::int64_t> next_coord;
  std::vector<std::uint8_t> loss_mask;
  std::vector<std::int64_t> target_c;
  std::vector<std::int64_t> target_v;

  std::size_t size() const { return coord.size(); }
  std::size_t loss_positions() const;
  // Index of the partial segment's END token.
  std::size_t partial_end() const;
};

// Each partial tuple is dropped independently with probability mask_prob
// (draws from rng, one per tuple, only when 0 < mask_prob < 1). Throws
// DataError when the layout exceeds max_len positions or the sequences
// disagree on R/V.
TokenStream build_training_sequence(const vqdif::SparseSeq& partial, const vqdif::SparseSeq& complete,
                                    double mask_prob, Rng& rng, std::size_t max_len);

// Prefix for generation: the partial segment, its END, and nothing else.
TokenStream build_prefix(const vqdif::SparseSeq& partial, std::size_t max_len);

// Appends a complete-segment element (c may be END, in which case v is PAD)
// and refreshes next_coord of the previous position.
void append_element(TokenStream& stream, std::int64_t c, std::int64_t v);

}  // namespace vqsf::sf
