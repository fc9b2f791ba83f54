#include "vqsf/ad/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "vqsf/common/error.hpp"
#include "vqsf/common/rng.hpp"

namespace vqsf::ad {
namespace {

using Fn = std::function<Var(const std::vector<Var>&)>;

struct Case {
  std::vector<Tensor> inputs;
  std::vector<bool> differentiable;
  Fn fn;
  // Rejects points where the op is not differentiable (ReLU kinks, max ties).
  std::function<bool(const std::vector<Tensor>&)> valid;
};

constexpr double kKinkMargin = 1e-3;

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape, DType::f64);
  for (auto& x : t.span<double>()) x = rng.uniform(lo, hi);
  return t;
}

std::size_t dim_in(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

Shape random_shape(Rng& rng, std::size_t min_rank = 1, std::size_t max_rank = 3) {
  Shape s(dim_in(rng, min_rank, max_rank));
  for (auto& d : s) d = dim_in(rng, 1, 4);
  return s;
}

std::string describe(const std::vector<Tensor>& inputs) {
  std::string out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (i) out += "+";
    out += to_string(inputs[i].shape());
  }
  return out;
}

bool away_from_zero(const Tensor& t) {
  for (double x : t.span<const double>())
    if (std::abs(x) < kKinkMargin) return false;
  return true;
}

// Binary elementwise op with same-shape, suffix or scalar right operand.
Case binary_case(Rng& rng, Var (*op)(const Var&, const Var&)) {
  Shape a = random_shape(rng);
  Shape b = a;
  switch (rng.below(3)) {
    case 0: break;
    case 1: b.erase(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(rng.below(a.size()))); break;
    default: b = {1}; break;
  }
  return {{random_tensor(a, rng), random_tensor(b, rng)}, {true, true}, [op](const auto& v) { return op(v[0], v[1]); }, {}};
}

Case unary_case(Rng& rng, Fn fn) { return {{random_tensor(random_shape(rng), rng)}, {true}, std::move(fn), {}}; }

Case conv_case(Rng& rng, std::size_t index) {
  std::size_t n = 5, k = 2, stride = 1, pad = 0, cin = 1, cout = 1;
  if (index > 0) {
    k = dim_in(rng, 1, 3);
    stride = dim_in(rng, 1, 2);
    pad = rng.below(2);
    n = dim_in(rng, std::max<std::size_t>(2, k), 5);
    cin = dim_in(rng, 1, 3);
    cout = dim_in(rng, 1, 3);
  }
  const std::size_t batch = index == 0 ? 1 : dim_in(rng, 1, 2);
  Conv3dOptions opts{stride, pad};
  return {{random_tensor({batch, n, n, n, cin}, rng), random_tensor({k, k, k, cin, cout}, rng), random_tensor({cout}, rng)},
          {true, true, true},
          [opts](const auto& v) { return conv3d(v[0], v[1], v[2], opts); },
          {}};
}

Case scatter_max_case(Rng& rng, std::size_t index) {
  const std::size_t n = index == 0 ? 10 : dim_in(rng, 2, 16);
  const std::size_t cells = index == 0 ? 8 : dim_in(rng, 1, 8);
  const std::size_t c = dim_in(rng, 1, 4);
  auto cell_of = std::make_shared<std::vector<std::int64_t>>(n);
  for (auto& x : *cell_of) x = static_cast<std::int64_t>(rng.below(cells));
  auto valid = [cell_of, cells, c](const std::vector<Tensor>& in) {
    auto f = in[0].span<const double>();
    for (std::size_t cell = 0; cell < cells; ++cell)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double best = -1e300, second = -1e300;
        for (std::size_t r = 0; r < cell_of->size(); ++r) {
          if (static_cast<std::size_t>((*cell_of)[r]) != cell) continue;
          double x = f[r * c + ch];
          if (x > best) second = std::exchange(best, x);
          else if (x > second) second = x;
        }
        if (second > -1e300 && best - second < kKinkMargin) return false;
      }
    return true;
  };
  return {{random_tensor({n, c}, rng)},
          {true},
          [cell_of, cells](const auto& v) { return scatter_max_pool(v[0], *cell_of, cells); },
          valid};
}

Case mlp2_case(Rng& rng) {
  const std::size_t n = dim_in(rng, 1, 5), din = dim_in(rng, 1, 4), hidden = dim_in(rng, 2, 6), dout = dim_in(rng, 1, 3);
  auto valid = [](const std::vector<Tensor>& in) {
    NoGradScope ng;
    Var pre = add(matmul(Var(in[0]), Var(in[1])), Var(in[2]));
    return away_from_zero(pre.value());
  };
  return {{random_tensor({n, din}, rng), random_tensor({din, hidden}, rng), random_tensor({hidden}, rng),
           random_tensor({hidden, dout}, rng), random_tensor({dout}, rng)},
          {true, true, true, true, true},
          [](const auto& v) { return add(matmul(relu(add(matmul(v[0], v[1]), v[2])), v[3]), v[4]); },
          valid};
}

Case make_case(const std::string& op, Rng& rng, std::size_t index) {
  if (op == "add") return binary_case(rng, add);
  if (op == "sub") return binary_case(rng, sub);
  if (op == "mul") return binary_case(rng, mul);
  if (op == "scale") {
    double f = rng.uniform(-2, 2);
    return unary_case(rng, [f](const auto& v) { return scale(v[0], f); });
  }
  if (op == "add_scalar") {
    double s = rng.uniform(-2, 2);
    return unary_case(rng, [s](const auto& v) { return add_scalar(v[0], s); });
  }
  if (op == "relu") {
    Case c = unary_case(rng, [](const auto& v) { return relu(v[0]); });
    c.valid = [](const std::vector<Tensor>& in) { return away_from_zero(in[0]); };
    return c;
  }
  if (op == "sigmoid") return unary_case(rng, [](const auto& v) { return sigmoid(v[0]); });
  if (op == "softmax") return unary_case(rng, [](const auto& v) { return softmax(v[0]); });
  if (op == "sum") return unary_case(rng, [](const auto& v) { return sum(v[0]); });
  if (op == "mean") return unary_case(rng, [](const auto& v) { return mean(v[0]); });
  if (op == "matmul") {
    Shape a = random_shape(rng);
    const std::size_t n = dim_in(rng, 1, 4);
    return {{random_tensor(a, rng), random_tensor({a.back(), n}, rng)},
            {true, true},
            [](const auto& v) { return matmul(v[0], v[1]); },
            {}};
  }
  if (op == "bmm") {
    const std::size_t b = dim_in(rng, 1, 3), m = dim_in(rng, 1, 4), k = dim_in(rng, 1, 4), n = dim_in(rng, 1, 4);
    const bool t = rng.bernoulli(0.5);
    return {{random_tensor({b, m, k}, rng), random_tensor(t ? Shape{b, n, k} : Shape{b, k, n}, rng)},
            {true, true},
            [t](const auto& v) { return bmm(v[0], v[1], t); },
            {}};
  }
  if (op == "conv3d") return conv_case(rng, index);
  if (op == "upsample2x") {
    Shape s{dim_in(rng, 1, 2), dim_in(rng, 1, 3), dim_in(rng, 1, 3), dim_in(rng, 1, 3), dim_in(rng, 1, 3)};
    return {{random_tensor(s, rng)}, {true}, [](const auto& v) { return upsample2x(v[0]); }, {}};
  }
  if (op == "trilinear_sample") {
    Shape s{dim_in(rng, 1, 2), dim_in(rng, 1, 4), dim_in(rng, 1, 4), dim_in(rng, 1, 4), dim_in(rng, 1, 3)};
    auto pts = std::make_shared<Tensor>(random_tensor({s[0], dim_in(rng, 1, 6), 3}, rng, 0.0, 0.999));
    return {{random_tensor(s, rng)}, {true}, [pts](const auto& v) { return trilinear_sample(v[0], *pts); }, {}};
  }
  if (op == "scatter_max_pool") return scatter_max_case(rng, index);
  if (op == "scatter_rows") {
    const std::size_t rows = dim_in(rng, 1, 6), d = dim_in(rng, 1, 4), k = dim_in(rng, 0, rows);
    std::vector<std::int64_t> perm(rows);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span(perm));
    auto idx = std::make_shared<std::vector<std::int64_t>>(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
    return {{random_tensor({d}, rng), random_tensor({k, d}, rng)},
            {true, true},
            [idx, rows](const auto& v) { return scatter_rows(v[0], v[1], *idx, rows); },
            {}};
  }
  if (op == "embedding") {
    const std::size_t vocab = dim_in(rng, 1, 6), d = dim_in(rng, 1, 4);
    Shape id_shape = random_shape(rng, 1, 2);
    auto ids = std::make_shared<std::vector<std::int64_t>>(numel(id_shape));
    for (auto& x : *ids) x = static_cast<std::int64_t>(rng.below(vocab));
    return {{random_tensor({vocab, d}, rng)},
            {true},
            [ids, id_shape](const auto& v) { return embedding(v[0], *ids, id_shape); },
            {}};
  }
  if (op == "layer_norm") {
    Shape s = random_shape(rng);
    s.back() = dim_in(rng, 2, 6);
    return {{random_tensor(s, rng), random_tensor({s.back()}, rng), random_tensor({s.back()}, rng)},
            {true, true, true},
            [](const auto& v) { return layer_norm(v[0], v[1], v[2]); },
            {}};
  }
  if (op == "bce_with_logits") {
    Shape s = random_shape(rng);
    auto targets = std::make_shared<Tensor>(s, DType::f64);
    for (auto& x : targets->span<double>()) x = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return {{random_tensor(s, rng, -3, 3)}, {true}, [targets](const auto& v) { return bce_with_logits(v[0], *targets); }, {}};
  }
  if (op == "cross_entropy") {
    const std::size_t n = dim_in(rng, 1, 5), c = dim_in(rng, 2, 6);
    auto targets = std::make_shared<std::vector<std::int64_t>>(n);
    auto weights = std::make_shared<std::vector<double>>(n);
    for (std::size_t i = 0; i < n; ++i) {
      (*targets)[i] = rng.bernoulli(0.2) ? -1 : static_cast<std::int64_t>(rng.below(c));
      (*weights)[i] = rng.uniform(0.1, 1.0);
    }
    return {{random_tensor({n, c}, rng, -3, 3)},
            {true},
            [targets, weights](const auto& v) { return cross_entropy(v[0], *targets, *weights); },
            {}};
  }
  if (op == "reshape") {
    Shape s = random_shape(rng);
    Shape flat{numel(s)};
    return {{random_tensor(s, rng)}, {true}, [flat](const auto& v) { return reshape(v[0], flat); }, {}};
  }
  if (op == "permute") {
    Shape s = random_shape(rng, 2, 4);
    auto perm = std::make_shared<std::vector<std::size_t>>(s.size());
    std::iota(perm->begin(), perm->end(), 0);
    rng.shuffle(std::span(*perm));
    return {{random_tensor(s, rng)}, {true}, [perm](const auto& v) { return permute(v[0], *perm); }, {}};
  }
  if (op == "concat") {
    Shape a = random_shape(rng);
    const std::size_t axis = rng.below(a.size());
    Shape b = a;
    b[axis] = dim_in(rng, 1, 4);
    return {{random_tensor(a, rng), random_tensor(b, rng)},
            {true, true},
            [axis](const auto& v) {
              std::vector<Var> parts{v[0], v[1]};
              return concat(parts, axis);
            },
            {}};
  }
  if (op == "masked_fill") {
    Shape s = random_shape(rng);
    auto mask = std::make_shared<std::vector<std::uint8_t>>(numel(s));
    for (auto& m : *mask) m = rng.bernoulli(0.3) ? 1 : 0;
    return {{random_tensor(s, rng)}, {true}, [mask](const auto& v) { return masked_fill(v[0], *mask, -4.0); }, {}};
  }
  if (op == "mlp2") return mlp2_case(rng);
  throw UsageError("grad-check: unknown op '" + op + "'");
}

double loss_of(const Fn& fn, const std::vector<Var>& vars, const Tensor& weights) {
  Var out = fn(vars);
  return sum(mul(out, constant(weights))).item();
}

}  // namespace

bool GradCheckReport::passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed; });
}

std::vector<std::pair<std::string, double>> GradCheckReport::per_op() const {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& c : cases) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == c.op; });
    if (it == out.end()) out.emplace_back(c.op, c.max_rel_error);
    else it->second = std::max(it->second, c.max_rel_error);
  }
  return out;
}

double max_relative_error(const Fn& fn, const std::vector<Tensor>& inputs, const std::vector<bool>& differentiable,
                          double step, std::uint64_t seed) {
  PrecisionScope f64(DType::f64);
  std::vector<Var> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) vars.emplace_back(inputs[i].cast(DType::f64), bool(differentiable[i]));

  Tensor weights;
  {
    NoGradScope ng;
    Var out = fn(vars);
    Rng rng(seed, Purpose::test, 0x6c);
    weights = random_tensor(out.shape(), rng, 0.5, 1.5);
  }
  Var loss = sum(mul(fn(vars), constant(weights)));
  loss.backward();

  NoGradScope ng;
  double worst = 0.0;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (!differentiable[i]) continue;
    Tensor analytic = vars[i].has_grad() ? vars[i].grad() : Tensor::zeros(vars[i].shape(), DType::f64);
    auto x = vars[i].mutable_value().span<double>();
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double saved = x[k];
      x[k] = saved + step;
      const double up = loss_of(fn, vars, weights);
      x[k] = saved - step;
      const double down = loss_of(fn, vars, weights);
      x[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.get(k);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

std::vector<std::string> grad_check_ops() {
  return {"add",     "sub",          "mul",          "scale",     "add_scalar",      "relu",          "sigmoid",
          "softmax", "sum",          "mean",         "matmul",    "bmm",             "conv3d",        "upsample2x",
          "trilinear_sample",        "scatter_max_pool",          "scatter_rows",    "embedding",     "layer_norm",
          "bce_with_logits",         "cross_entropy",             "reshape",         "permute",       "concat",
          "masked_fill",             "mlp2"};
}

GradCheckReport grad_check(const std::string& op, const GradCheckOptions& options) {
  GradCheckReport report;
  const auto ops = grad_check_ops();
  const auto op_index = static_cast<std::uint64_t>(std::find(ops.begin(), ops.end(), op) - ops.begin());
  for (std::size_t i = 0; i < options.cases; ++i) {
    Rng rng(options.seed, Purpose::test, (op_index << 32) | i);
    Case c = make_case(op, rng, i);
    for (int attempt = 0; c.valid && !c.valid(c.inputs); ++attempt) {
      if (attempt == 1000) throw DataError("grad-check: could not sample a differentiable point for " + op);
      c = make_case(op, rng, i);
    }
    GradCheckCase result{op, describe(c.inputs), 0.0, false};
    try {
      result.max_rel_error = max_relative_error(c.fn, c.inputs, c.differentiable, options.step, options.seed + i);
      result.passed = result.max_rel_error < options.tolerance;
    } catch (const Error& e) {
      result.max_rel_error = std::numeric_limits<double>::infinity();
      result.shapes += " (" + std::string(e.what()) + ")";
    }
    report.cases.push_back(std::move(result));
  }
  return report;
}

GradCheckReport grad_check_all(const GradCheckOptions& options) {
  GradCheckReport all;
  for (const auto& op : grad_check_ops()) {
    auto r = grad_check(op, options);
    all.cases.insert(all.cases.end(), r.cases.begin(), r.cases.end());
  }
  return all;
}

}  // namespace vqsf::ad
