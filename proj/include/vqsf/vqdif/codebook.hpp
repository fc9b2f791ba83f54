#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vqsf/ad/tensor.hpp"
#include "vqsf/common/checkpoint.hpp"
#include "vqsf/common/rng.hpp"

namespace vqsf::vqdif {

struct CodebookOptions {
  double decay = 0.99;        // EMA decay gamma, in [0, 1]
  double epsilon = 1e-5;      // floor on the EMA count when normalizing
  std::uint32_t dead_after = 200;  // reseed entries unused for this many updates; 0 disables
};

// V x D embedding table maintained by exponential moving averages. All state
// is f64 regardless of the model precision.
class Codebook {
 public:
  Codebook() = default;
  Codebook(std::size_t V, std::size_t D, CodebookOptions options = {});

  std::size_t size() const { return V_; }
  std::size_t dim() const { return D_; }
  const CodebookOptions& options() const { return options_; }
  bool initialized() const { return initialized_; }

  std::span<const double> entry(std::size_t j) const { return {e_.data() + j * D_, D_}; }
  const std::vector<double>& embeddings() const { return e_; }
  const std::vector<double>& counts() const { return N_; }
  const std::vector<double>& sums() const { return m_; }
  const std::vector<std::uint32_t>& idle_steps() const { return idle_; }

  // Overwrites the table directly (tests, checkpoint loading). N = 1, m = e.
  void set_embeddings(std::vector<double> e);

  // argmin_j ||z - e_j||, computed in f64; ties go to the lowest index.
  // Throws DataError on non-finite z.
  std::uint32_t quantize(std::span<const double> z) const;
  // Row-wise quantization of z [K, D] (either dtype).
  std::vector<std::uint32_t> quantize_rows(const ad::Tensor& z) const;
  // [K, D] tensor of the assigned entries, in `dtype`.
  ad::Tensor lookup(std::span<const std::uint32_t> codes, ad::DType dtype) const;

  // Seeds every entry from a random row of z [K, D] (K >= 1) with N = 1, m = e.
  void data_init(const ad::Tensor& z, Rng& rng);

  // N_j <- g N_j + (1-g) count_j, m_j <- g m_j + (1-g) sum_{v_i = j} z_i,
  // e_j <- m_j / max(N_j, eps). Returns the per-entry assignment counts.
  std::vector<std::uint64_t> ema_update(const ad::Tensor& z, std::span<const std::uint32_t> codes);

  // Entries idle for `dead_after` updates are moved onto random rows of z
  // (N = 1, m = e). Returns how many were reseeded.
  std::size_t reseed_dead(const ad::Tensor& z, Rng& rng);

  // Names prefix + {e, N, m, idle, initialized}.
  std::vector<NamedTensor> snapshot(const std::string& prefix) const;
  void load(const std::vector<NamedTensor>& tensors, const std::string& prefix);

 private:
  void set_row(std::size_t j, std::span<const double> value);

  std::size_t V_ = 0, D_ = 0;
  CodebookOptions options_;
  std::vector<double> e_, N_, m_;
  std::vector<std::uint32_t> idle_;
  bool initialized_ = false;
};

}  // namespace vqsf::vqdif
