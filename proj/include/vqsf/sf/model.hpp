#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vqsf/ad/adam.hpp"
#include "vqsf/ad/nn.hpp"
#include "vqsf/sf/tokens.hpp"

namespace vqsf::sf {

struct TransformerConfig {
  std::uint32_t R = 8;
  std::uint32_t V = 256;
  std::size_t n_blocks_coord = 4;
  std::size_t n_blocks_value = 2;
  std::size_t n_heads = 4;
  std::size_t embed_dim = 128;
  std::size_t max_seq_len = 160;
  double dropout = 0.0;
  std::uint64_t seed = 0;  // parameter init

  void validate() const;  // UsageError on inconsistent values
};

// Multi-head causal self-attention over x [L, d].
struct CausalSelfAttention {
  ad::Linear q, k, v, out;
  std::size_t heads = 1;

  CausalSelfAttention() = default;
  CausalSelfAttention(ad::ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads, Rng& rng);
  // Concatenated head outputs before the output projection, [L, d].
  ad::Var attend(const ad::Var& x) const;
  ad::Var operator()(const ad::Var& x) const { return out(attend(x)); }
};

// Pre-LN transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
struct Block {
  ad::LayerNorm ln1, ln2;
  CausalSelfAttention attn;
  ad::Linear fc1, fc2;

  Block() = default;
  Block(ad::ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads, Rng& rng);
  ad::Var operator()(const ad::Var& x, double dropout, Rng* rng) const;
};

// Per-position next-element distributions (probabilities).
struct NextElementDistribution {
  std::vector<double> p_c;  // over coordinate ids, END last
  std::vector<double> p_v;  // over value ids
};

class ShapeFormer {
 public:
  explicit ShapeFormer(const TransformerConfig& config);

  const TransformerConfig& config() const { return config_; }
  Vocab vocab() const { return {config_.R, config_.V}; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  // Coordinate-transformer features h [L, d]. `dropout_rng` enables dropout.
  ad::Var coord_features(const TokenStream& s, Rng* dropout_rng = nullptr) const;
  // Coordinate logits [N, R^3 + 1] for any rows of h.
  ad::Var coord_head(const ad::Var& h) const;
  // Value-transformer features [L, d]: h additively mixed with the embedding
  // of each position's next coordinate.
  ad::Var value_features(const ad::Var& h, std::span<const std::int64_t> next_coord,
                         Rng* dropout_rng = nullptr) const;
  // Value logits [N, V] for any rows of the value features.
  ad::Var value_head(const ad::Var& g) const;

  std::vector<NextElementDistribution> distributions(const TokenStream& s) const;

  // Mean over loss positions of -[log p_c(target) + log p_v(target)], the
  // value term omitted where the target is END. DataError if no loss positions.
  ad::Var nll(const TokenStream& s, Rng* dropout_rng = nullptr) const;

  // "shapeformer/..." tensors, including the vocabulary under shapeformer/meta/.
  std::vector<NamedTensor> snapshot() const;
  void load(const std::vector<NamedTensor>& tensors);

 private:
  void check_stream(const TokenStream& s) const;

  TransformerConfig config_;
  ad::ParamStore params_;
  ad::Var coord_embed_, value_embed_, pos_embed_, seg_embed_, next_embed_;
  std::vector<Block> coord_blocks_, value_blocks_;
  ad::LayerNorm coord_ln_, value_ln_;
  ad::Linear coord_head0_, coord_head1_, value_head0_, value_head1_;
};

// Sort descending (ties by lower index), keep the minimal prefix whose mass
// reaches p (at least one element), zero the rest and renormalize.
std::vector<double> top_p_filter(std::span<const double> probs, double p);

struct SampleOptions {
  double top_p = 0.4;
  std::size_t max_len = 0;  // max complete tuples; 0 = bounded by max_seq_len only
  std::uint64_t seed = 0;
  std::uint64_t index = 0;  // sample number, selects the random sub-stream
};

struct SampleResult {
  vqdif::SparseSeq sequence;
  bool ended = false;  // false when truncated by max_len / max_seq_len
};

// Autoregressive completion: coordinates restricted to ids above the current
// maximum (END always allowed), both draws through top_p_filter.
SampleResult sample_completion(const ShapeFormer& model, const vqdif::SparseSeq& partial, const SampleOptions& options);

// Replays the generation loop with the given tokens forced (no masking or
// filtering) and returns the summed -log probabilities of every complete
// element and the final END.
double score_completion(const ShapeFormer& model, const vqdif::SparseSeq& partial, const vqdif::SparseSeq& complete);

struct SfTrainOptions {
  std::size_t batch_size = 8;
  double lr = 3e-4;
  double mask_prob = 0.3;
  std::uint64_t seed = 0;
};

struct TrainPair {
  vqdif::SparseSeq partial;
  vqdif::SparseSeq complete;
};

class ShapeFormerTrainer {
 public:
  ShapeFormerTrainer(ShapeFormer& model, SfTrainOptions options);

  std::uint64_t steps() const { return step_; }
  const SfTrainOptions& options() const { return options_; }

  // One Adam step on the mean nll of a batch drawn with Rng(seed, train, step).
  // Throws DivergenceError on a non-finite loss.
  double step(std::span<const TrainPair> data);

  std::vector<NamedTensor> snapshot() const;
  void load(const std::vector<NamedTensor>& tensors);

 private:
  ShapeFormer& model_;
  SfTrainOptions options_;
  ad::Adam adam_;
  std::uint64_t step_ = 0;
};

}  // namespace vqsf::sf
