#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vqsf/ad/nn.hpp"
#include "vqsf/geo/mesh.hpp"
#include "vqsf/vqdif/codebook.hpp"
#include "vqsf/vqdif/sparse_seq.hpp"

namespace vqsf::vqdif {

struct VqdifConfig {
  // encoder
  std::uint32_t base_resolution = 32;  // grid the point features are pooled into
  std::uint32_t R = 8;                 // feature grid / sequence resolution
  std::size_t point_dim = 32;
  std::size_t D = 32;
  std::uint32_t V = 256;
  // decoder
  std::size_t unet_depth = 2;
  std::size_t unet_channels = 32;  // doubles per level
  std::size_t upsample_stages = 1;
  std::size_t upsample_channels = 16;
  std::size_t mlp_hidden = 64;
  std::size_t mlp_layers = 3;
  CodebookOptions codebook;
  std::uint64_t seed = 0;  // parameter init

  // Throws UsageError on an inconsistent configuration.
  void validate() const;
};

// One training or evaluation batch; every shape carries the same number of queries.
struct VqdifBatch {
  std::vector<geo::PointCloud> clouds;
  ad::Tensor queries;    // [B, T, 3]
  ad::Tensor occupancy;  // [B, T] in {0, 1}
};

// Pre-quantization encoder output for a batch.
struct EncodedFeatures {
  ad::Var z;                               // [K, D], rows grouped by shape, cells ascending
  std::vector<std::int64_t> rows;          // b * R^3 + c for every row of z
  std::vector<std::size_t> offsets;        // shape b owns rows [offsets[b], offsets[b + 1])
  std::size_t batch = 0;
};

struct LossTerms {
  ad::Var bce;
  ad::Var commit;
  ad::Var total;
  ad::Tensor z;                       // detached pre-quantization features
  std::vector<std::uint32_t> codes;   // assignments of z
};

class VqdifModel {
 public:
  explicit VqdifModel(const VqdifConfig& config);

  const VqdifConfig& config() const { return config_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }

  // Builds the encoder graph. Every cloud must be non-empty and inside [0,1)^3.
  EncodedFeatures encode_features(std::span<const geo::PointCloud> clouds) const;
  // Inference: sequence plus pre-quantization features [K, D].
  std::pair<SparseSeq, ad::Tensor> encode(const geo::PointCloud& cloud) const;

  // Decoder feature grid [B, G, G, G, C] from quantized rows [K, D] placed at
  // `rows` (b * R^3 + c); all other cells get the learned empty feature.
  ad::Var decode_grid(const ad::Var& zq, std::span<const std::int64_t> rows, std::size_t batch) const;
  // Occupancy logits [B, T] at queries [B, T, 3].
  ad::Var implicit_logits(const ad::Var& grid, const ad::Tensor& queries) const;

  // Full objective: mean BCE + beta * commitment. Initializes the codebook
  // from the batch features on first use.
  LossTerms loss(const VqdifBatch& batch, double beta);

  // Decoded occupancy probabilities in (0,1) at arbitrary points of [0,1)^3.
  std::vector<double> occupancy(const SparseSeq& seq, std::span<const geo::Vec3> points) const;
  // Occupancy on the resolution^3 grid of cell centres, x-major.
  std::vector<float> occupancy_grid(const SparseSeq& seq, std::size_t resolution) const;
  // Marching cubes of the decoded field at iso 0.5.
  geo::Mesh reconstruct(const SparseSeq& seq, std::size_t resolution = 64) const;

  // Tensors "vqdif/encoder/...", "vqdif/decoder/...", "vqdif/codebook/...".
  std::vector<NamedTensor> snapshot() const;
  void load(const std::vector<NamedTensor>& tensors);

 private:
  void check_sequence(const SparseSeq& seq) const;

  VqdifConfig config_;
  ad::ParamStore params_;
  Codebook codebook_;
  // encoder
  std::vector<ad::Linear> mlp1_, mlp2_;
  std::vector<ad::Conv3d> down_;
  // decoder
  ad::Var empty_;
  ad::Conv3d unet_in_;
  std::vector<ad::Conv3d> unet_down_, unet_mid_, unet_up_, upsample_;
  std::vector<ad::Linear> mlp_;
};

// Sum of squared residuals between z [K, D] and their assigned entries,
// divided by K; the codebook side is a constant.
ad::Var commitment_loss(const ad::Var& z, const Codebook& codebook, std::span<const std::uint32_t> codes);

}  // namespace vqsf::vqdif
