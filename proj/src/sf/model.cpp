#include "vqsf/sf/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "vqsf/common/error.hpp"

namespace vqsf::sf {

using ad::Tensor;
using ad::Var;

namespace {

constexpr double kMasked = -1e9;

Var dropout(const Var& x, double p, Rng* rng) {
  if (p <= 0.0 || rng == nullptr) return x;
  Tensor mask(x.shape(), x.dtype());
  const double keep = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.numel(); ++i) mask.set(i, rng->bernoulli(p) ? 0.0 : keep);
  return ad::mul(x, ad::constant(std::move(mask)));
}

Tensor normal_init(ad::Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(0.0, stddev));
  return t;
}

Var last_row(const Var& x) {
  const std::int64_t last = static_cast<std::int64_t>(x.dim(0)) - 1;
  return ad::embedding(x, std::span<const std::int64_t>(&last, 1), {1});
}

// Softmax of one logit row in f64; entries with allowed[i] == 0 get probability 0.
std::vector<double> softmax_row(const Tensor& logits, const std::vector<std::uint8_t>* allowed = nullptr) {
  const std::size_t n = logits.numel();
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (!allowed || (*allowed)[i]) mx = std::max(mx, logits.get(i));
  std::vector<double> p(n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (!allowed || (*allowed)[i]) z += p[i] = std::exp(logits.get(i) - mx);
  for (auto& x : p) x /= z;
  return p;
}

std::size_t draw(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;  // rounding left u above the total mass
}

}  // namespace

void TransformerConfig::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("transformer config: " + what); };
  if (R == 0 || V == 0) fail("R and V must be positive");
  if (embed_dim == 0 || n_heads == 0 || embed_dim % n_heads != 0) fail("embed_dim must be divisible by n_heads");
  if (n_blocks_coord == 0 || n_blocks_value == 0) fail("block counts must be positive");
  if (max_seq_len < 2) fail("max_seq_len must be at least 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

CausalSelfAttention::CausalSelfAttention(ad::ParamStore& store, const std::string& name, std::size_t dim,
                                         std::size_t n_heads, Rng& rng)
    : q(store, name + ".q", dim, dim, rng, 1.0),
      k(store, name + ".k", dim, dim, rng, 1.0),
      v(store, name + ".v", dim, dim, rng, 1.0),
      out(store, name + ".out", dim, dim, rng, 1.0),
      heads(n_heads) {}

Var CausalSelfAttention::attend(const Var& x) const {
  const std::size_t L = x.dim(0), d = x.dim(1), dh = d / heads;
  static constexpr std::size_t kSplit[] = {1, 0, 2};
  auto split = [&](const Var& t) { return ad::permute(ad::reshape(t, {L, heads, dh}), kSplit); };
  Var qh = split(q(x)), kh = split(k(x)), vh = split(v(x));
  Var scores = ad::scale(ad::bmm(qh, kh, true), 1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<std::uint8_t> future(heads * L * L, 0);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = i + 1; j < L; ++j) future[(h * L + i) * L + j] = 1;
  Var att = ad::softmax(ad::masked_fill(scores, future, kMasked));
  return ad::reshape(ad::permute(ad::bmm(att, vh), kSplit), {L, d});
}

Block::Block(ad::ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads, Rng& rng)
    : ln1(store, name + ".ln1", dim),
      ln2(store, name + ".ln2", dim),
      attn(store, name + ".attn", dim, heads, rng),
      fc1(store, name + ".fc1", dim, 4 * dim, rng),
      fc2(store, name + ".fc2", 4 * dim, dim, rng, 1.0) {}

Var Block::operator()(const Var& x, double p, Rng* rng) const {
  Var y = ad::add(x, dropout(attn(ln1(x)), p, rng));
  return ad::add(y, dropout(fc2(ad::relu(fc1(ln2(y)))), p, rng));
}

ShapeFormer::ShapeFormer(const TransformerConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed, Purpose::init, 0);
  const std::size_t d = config_.embed_dim;
  const auto classes = static_cast<std::size_t>(vocab().coord_classes());
  coord_embed_ = params_.add("coord_embed", normal_init({classes, d}, 0.02, rng));
  value_embed_ = params_.add("value_embed", normal_init({config_.V + 1u, d}, 0.02, rng));
  pos_embed_ = params_.add("pos_embed", normal_init({config_.max_seq_len, d}, 0.02, rng));
  seg_embed_ = params_.add("seg_embed", normal_init({2, d}, 0.02, rng));
  next_embed_ = params_.add("next_coord_embed", normal_init({classes, d}, 0.02, rng));
  for (std::size_t b = 0; b < config_.n_blocks_coord; ++b)
    coord_blocks_.emplace_back(params_, "coord_blocks." + std::to_string(b), d, config_.n_heads, rng);
  for (std::size_t b = 0; b < config_.n_blocks_value; ++b)
    value_blocks_.emplace_back(params_, "value_blocks." + std::to_string(b), d, config_.n_heads, rng);
  coord_ln_ = ad::LayerNorm(params_, "coord_ln", d);
  value_ln_ = ad::LayerNorm(params_, "value_ln", d);
  coord_head0_ = ad::Linear(params_, "coord_head.0", d, d, rng);
  coord_head1_ = ad::Linear(params_, "coord_head.1", d, classes, rng, 1.0);
  value_head0_ = ad::Linear(params_, "value_head.0", d, d, rng);
  value_head1_ = ad::Linear(params_, "value_head.1", d, config_.V, rng, 1.0);
}

void ShapeFormer::check_stream(const TokenStream& s) const {
  const auto L = s.size();
  if (L == 0) throw DataError("empty token stream");
  if (L > config_.max_seq_len)
    throw DataError("token stream of length " + std::to_string(L) + " exceeds max_seq_len " +
                    std::to_string(config_.max_seq_len));
  if (s.vocab.R != config_.R || s.vocab.V != config_.V)
    throw DataError("token stream vocabulary (R=" + std::to_string(s.vocab.R) + ", V=" + std::to_string(s.vocab.V) +
                    ") does not match the model (R=" + std::to_string(config_.R) +
                    ", V=" + std::to_string(config_.V) + ")");
  const auto v = vocab();
  for (std::size_t i = 0; i < L; ++i) {
    if (s.coord[i] < 0 || s.coord[i] > v.end_c() || s.next_coord[i] < 0 || s.next_coord[i] > v.end_c())
      throw DataError("unknown coordinate token id at position " + std::to_string(i));
    if (s.value[i] < 0 || s.value[i] > v.pad_v())
      throw DataError("unknown value token id at position " + std::to_string(i));
  }
}

Var ShapeFormer::coord_features(const TokenStream& s, Rng* rng) const {
  check_stream(s);
  const std::size_t L = s.size();
  std::vector<std::int64_t> pos(L), seg(L);
  std::iota(pos.begin(), pos.end(), std::int64_t{0});
  for (std::size_t i = 0; i < L; ++i) seg[i] = static_cast<std::int64_t>(s.segment[i]);
  Var x = ad::add(ad::add(ad::embedding(coord_embed_, s.coord, {L}), ad::embedding(value_embed_, s.value, {L})),
                  ad::add(ad::embedding(pos_embed_, pos, {L}), ad::embedding(seg_embed_, seg, {L})));
  x = dropout(x, config_.dropout, rng);
  for (const auto& b : coord_blocks_) x = b(x, config_.dropout, rng);
  return coord_ln_(x);
}

Var ShapeFormer::coord_head(const Var& h) const { return coord_head1_(ad::relu(coord_head0_(h))); }

Var ShapeFormer::value_features(const Var& h, std::span<const std::int64_t> next_coord, Rng* rng) const {
  if (next_coord.size() != h.dim(0)) throw DataError("value stream: one next coordinate per position required");
  for (auto c : next_coord)
    if (c < 0 || c > vocab().end_c()) throw DataError("unknown coordinate token id " + std::to_string(c));
  Var x = ad::add(h, ad::embedding(next_embed_, next_coord, {h.dim(0)}));
  for (const auto& b : value_blocks_) x = b(x, config_.dropout, rng);
  return value_ln_(x);
}

Var ShapeFormer::value_head(const Var& g) const { return value_head1_(ad::relu(value_head0_(g))); }

std::vector<NextElementDistribution> ShapeFormer::distributions(const TokenStream& s) const {
  ad::NoGradScope no_grad;
  Var h = coord_features(s);
  const Tensor pc = ad::softmax(coord_head(h)).value();
  const Tensor pv = ad::softmax(value_head(value_features(h, s.next_coord))).value();
  const std::size_t C = pc.dim(1), V = pv.dim(1);
  std::vector<NextElementDistribution> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[i].p_c.resize(C);
    out[i].p_v.resize(V);
    for (std::size_t j = 0; j < C; ++j) out[i].p_c[j] = pc.get(i * C + j);
    for (std::size_t j = 0; j < V; ++j) out[i].p_v[j] = pv.get(i * V + j);
  }
  return out;
}

Var ShapeFormer::nll(const TokenStream& s, Rng* rng) const {
  const std::size_t n = s.loss_positions();
  if (n == 0) throw DataError("nll: token stream has no loss positions");
  Var h = coord_features(s, rng);
  const std::vector<double> w(s.size(), 1.0 / static_cast<double>(n));
  Var lc = ad::cross_entropy(coord_head(h), s.target_c, w);
  Var lv = ad::cross_entropy(value_head(value_features(h, s.next_coord, rng)), s.target_v, w);
  return ad::add(lc, lv);
}

std::vector<NamedTensor> ShapeFormer::snapshot() const {
  auto out = params_.snapshot("shapeformer/");
  auto meta = [&](const char* name, double v) {
    out.push_back({std::string("shapeformer/meta/") + name, Tensor::scalar(v, ad::DType::f64)});
  };
  meta("R", config_.R);
  meta("V", config_.V);
  return out;
}

void ShapeFormer::load(const std::vector<NamedTensor>& tensors) {
  const auto R = static_cast<std::uint32_t>(find_tensor(tensors, "shapeformer/meta/R").item());
  const auto V = static_cast<std::uint32_t>(find_tensor(tensors, "shapeformer/meta/V").item());
  if (R != config_.R || V != config_.V)
    throw DataError("shapeformer checkpoint has R=" + std::to_string(R) + ", V=" + std::to_string(V) +
                    " but the configuration has R=" + std::to_string(config_.R) + ", V=" + std::to_string(config_.V));
  params_.load(tensors, "shapeformer/");
}

std::vector<double> top_p_filter(std::span<const double> probs, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw UsageError("top-p must lie in [0, 1]");
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<double> out(probs.size(), 0.0);
  double mass = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const std::size_t i = order[r];
    if (r > 0 && (mass >= p || probs[i] <= 0.0)) break;
    out[i] = probs[i];
    mass += probs[i];
  }
  for (auto& x : out) x /= mass;
  return out;
}

SampleResult sample_completion(const ShapeFormer& model, const vqdif::SparseSeq& partial,
                               const SampleOptions& options) {
  const auto& cfg = model.config();
  if (partial.R != cfg.R || partial.V != cfg.V)
    throw DataError("partial sequence (R=" + std::to_string(partial.R) + ", V=" + std::to_string(partial.V) +
                    ") does not match the model (R=" + std::to_string(cfg.R) + ", V=" + std::to_string(cfg.V) + ")");
  ad::NoGradScope no_grad;
  Rng rng(options.seed, Purpose::sampling, options.index);
  TokenStream s = build_prefix(partial, cfg.max_seq_len);
  const Vocab v = model.vocab();
  std::vector<std::uint8_t> allowed(static_cast<std::size_t>(v.coord_classes()), 1);
  SampleResult result;
  result.sequence = {cfg.R, cfg.V, {}};
  while (s.size() < cfg.max_seq_len && (options.max_len == 0 || result.sequence.size() < options.max_len)) {
    Var h = model.coord_features(s);
    auto pc = top_p_filter(softmax_row(model.coord_head(last_row(h)).value(), &allowed), options.top_p);
    const auto c = static_cast<std::int64_t>(draw(pc, rng));
    if (c == v.end_c()) {
      result.ended = true;
      break;
    }
    auto next = s.next_coord;
    next.back() = c;
    auto pv = top_p_filter(softmax_row(model.value_head(last_row(model.value_features(h, next))).value()),
                           options.top_p);
    const auto code = static_cast<std::int64_t>(draw(pv, rng));
    append_element(s, c, code);
    result.sequence.entries.push_back({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(code)});
    // monotonicity: every id up to the current maximum is now invalid
    std::fill(allowed.begin(), allowed.begin() + c + 1, std::uint8_t{0});
  }
  return result;
}

double score_completion(const ShapeFormer& model, const vqdif::SparseSeq& partial, const vqdif::SparseSeq& complete) {
  ad::NoGradScope no_grad;
  complete.validate();
  TokenStream s = build_prefix(partial, model.config().max_seq_len);
  const Vocab v = model.vocab();
  double total = 0.0;
  for (std::size_t i = 0; i <= complete.size(); ++i) {
    const bool end = i == complete.size();
    const std::int64_t c = end ? v.end_c() : complete.entries[i].c;
    Var h = model.coord_features(s);
    total -= std::log(softmax_row(model.coord_head(last_row(h)).value())[static_cast<std::size_t>(c)]);
    if (end) break;
    auto next = s.next_coord;
    next.back() = c;
    const auto pv = softmax_row(model.value_head(last_row(model.value_features(h, next))).value());
    total -= std::log(pv[complete.entries[i].v]);
    append_element(s, c, complete.entries[i].v);
  }
  return total;
}

ShapeFormerTrainer::ShapeFormerTrainer(ShapeFormer& model, SfTrainOptions options)
    : model_(model), options_(options), adam_(model.params().params(), ad::AdamOptions{options.lr}) {
  if (options.batch_size == 0) throw UsageError("shapeformer training: batch_size must be positive");
  if (!(options.lr > 0.0)) throw UsageError("shapeformer training: lr must be positive");
  if (!(options.mask_prob >= 0.0 && options.mask_prob <= 1.0)) throw UsageError("mask_prob must lie in [0, 1]");
}

double ShapeFormerTrainer::step(std::span<const TrainPair> data) {
  if (data.empty()) throw DataError("shapeformer training: empty dataset");
  Rng rng(options_.seed, Purpose::train, step_);
  const double w = 1.0 / static_cast<double>(options_.batch_size);
  double loss = 0.0;
  for (std::size_t b = 0; b < options_.batch_size; ++b) {
    const auto& pair = data[static_cast<std::size_t>(rng.below(data.size()))];
    const auto stream =
        build_training_sequence(pair.partial, pair.complete, options_.mask_prob, rng, model_.config().max_seq_len);
    Var l = ad::scale(model_.nll(stream, &rng), w);
    const double value = l.item();
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "shapeformer training diverged at step " << step_ << " (batch item " << b << ")";
      throw DivergenceError(msg.str());
    }
    loss += value;
    l.backward();  // gradients accumulate across the batch
  }
  adam_.step();
  ++step_;
  return loss;
}

std::vector<NamedTensor> ShapeFormerTrainer::snapshot() const {
  auto out = model_.snapshot();
  for (auto& t : adam_.state("shapeformer/adam/")) out.push_back(std::move(t));
  out.push_back({"shapeformer/train/step", Tensor::scalar(static_cast<double>(step_), ad::DType::f64)});
  return out;
}

void ShapeFormerTrainer::load(const std::vector<NamedTensor>& tensors) {
  model_.load(tensors);
  adam_.load_state(tensors, "shapeformer/adam/");
  step_ = static_cast<std::uint64_t>(find_tensor(tensors, "shapeformer/train/step").item());
}

}  // namespace vqsf::sf
