// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/entropy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "lhbvc/ops.hpp"

namespace lhbvc {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double gaussian_bin_probability(double y, double mu, double sigma) {
  // Evaluate on the lower tail, where erfc keeps full relative precision.
  const double v = std::abs(y - mu);
  return normal_cdf((0.5 - v) / sigma) - normal_cdf((-0.5 - v) / sigma);
}

BitsResult bits_gaussian(const Tensor& y, const Tensor& mean, const Tensor& scale, double floor) {
  require_same(y, mean, "bits_gaussian");
  require_same(y, scale, "bits_gaussian");
  const auto yv = y.values(), mv = mean.values(), sv = scale.values();
  const std::size_t n = yv.size();
  BitsResult r;
  r.elements.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::max(sv[i], floor);
    const double p = std::max(gaussian_bin_probability(yv[i], mv[i], s), kMinLikelihood);
    r.elements[i] = -std::log2(p);
    total += r.elements[i];
  }
  r.total = Tensor::scalar(total);
  if (detail::should_record({&y, &mean, &scale})) {
    r.total.set_requires_grad(true);
    Tensor out = r.total;
    Tape::active()->record(out, [y, mean, scale, out, floor]() {
      const double g = out.grad()[0];
      const auto yv = y.values(), mv = mean.values(), sv = scale.values();
      double* gy = y.requires_grad() ? y.mutable_grad().data() : nullptr;
      double* gm = mean.requires_grad() ? mean.mutable_grad().data() : nullptr;
      double* gs = scale.requires_grad() ? scale.mutable_grad().data() : nullptr;
      for (std::size_t i = 0; i < yv.size(); ++i) {
        const double s = std::max(sv[i], floor);
        const double d = yv[i] - mv[i];
        const double v = std::abs(d);
        const double up = (0.5 - v) / s, lo = (-0.5 - v) / s;
        const double p = normal_cdf(up) - normal_cdf(lo);
        if (p <= kMinLikelihood) continue;
        const double dbits_dp = -g / (p * std::numbers::ln2);
        const double pu = normal_pdf(up), pl = normal_pdf(lo);
        const double dp_dv = (pl - pu) / s;
        const double dp_dd = d > 0.0 ? dp_dv : (d < 0.0 ? -dp_dv : 0.0);
        if (gy) gy[i] += dbits_dp * dp_dd;
        if (gm) gm[i] -= dbits_dp * dp_dd;
        if (gs && sv[i] >= floor) gs[i] += dbits_dp * (lo * pl - up * pu) / s;
      }
    });
  }
  return r;
}

double bits_under_cdf(double z, const std::function<double(double)>& cdf) {
  return -std::log2(std::max(cdf(z + 0.5) - cdf(z - 0.5), kMinLikelihood));
}

Tensor scale_from_raw(const Tensor& raw, double floor) { return add_scalar(log_cosh(raw), floor); }

// --- factorized prior -------------------------------------------------------------

namespace {

constexpr std::array<int, 5> kDims{1, 3, 3, 3, 1};
constexpr int kLayers = 4;
constexpr int kWidth = 3;

// Per-channel constants derived from the raw parameters.
struct ChannelChain {
  std::array<std::array<double, kWidth * kWidth>, kLayers> h{};  // softplus(raw), row-major [out][in]
  std::array<std::array<double, kWidth>, kLayers> b{};
  std::array<std::array<double, kWidth>, kLayers - 1> a{};       // tanh(raw factor)
};

struct ChainCache {
  std::array<std::array<double, kWidth>, kLayers> u{};  // layer inputs
  std::array<std::array<double, kWidth>, kLayers> t{};      // pre-nonlinearity
};

ChannelChain load_chain(const std::vector<Tensor>& m, const std::vector<Tensor>& b, const std::vector<Tensor>& f,
                        std::int64_t c) {
  ChannelChain ch;
  for (int k = 0; k < kLayers; ++k) {
    const int rows = kDims[k + 1], cols = kDims[k];
    const auto mv = m[k].values(), bv = b[k].values();
    for (int i = 0; i < rows * cols; ++i) ch.h[k][i] = softplus(mv[static_cast<std::size_t>(c * rows * cols + i)]);
    for (int i = 0; i < rows; ++i) ch.b[k][i] = bv[static_cast<std::size_t>(c * rows + i)];
    if (k < kLayers - 1) {
      const auto fv = f[k].values();
      for (int i = 0; i < rows; ++i) ch.a[k][i] = std::tanh(fv[static_cast<std::size_t>(c * rows + i)]);
    }
  }
  return ch;
}

double chain_forward(const ChannelChain& ch, double x, ChainCache* cache) {
  std::array<double, kWidth> u{x, 0.0, 0.0};
  for (int k = 0; k < kLayers; ++k) {
    const int rows = kDims[k + 1], cols = kDims[k];
    if (cache) cache->u[k] = u;
    std::array<double, kWidth> t{};
    for (int j = 0; j < rows; ++j) {
      double acc = ch.b[k][j];
      for (int i = 0; i < cols; ++i) acc += ch.h[k][j * cols + i] * u[i];
      t[j] = acc;
    }
    if (cache) cache->t[k] = t;
    if (k < kLayers - 1) {
      for (int j = 0; j < rows; ++j) u[j] = t[j] + ch.a[k][j] * std::tanh(t[j]);
    } else {
      u = t;
    }
  }
  return u[0];
}

// Gradient buffers for one channel, indexed like ChannelChain.
struct ChainGrad {
  std::array<std::array<double, kWidth * kWidth>, kLayers> h{};
  std::array<std::array<double, kWidth>, kLayers> b{};
  std::array<std::array<double, kWidth>, kLayers - 1> a{};
};

// Backpropagates dlogit through one evaluation and returns the gradient for x.
double chain_backward(const ChannelChain& ch, const ChainCache& cache, double dlogit, ChainGrad& g) {
  std::array<double, kWidth> du{dlogit, 0.0, 0.0};
  for (int k = kLayers - 1; k >= 0; --k) {
    const int rows = kDims[k + 1], cols = kDims[k];
    std::array<double, kWidth> dt{};
    for (int j = 0; j < rows; ++j) {
      if (k < kLayers - 1) {
        const double th = std::tanh(cache.t[k][j]);
        dt[j] = du[j] * (1.0 + ch.a[k][j] * (1.0 - th * th));
        g.a[k][j] += du[j] * th;
      } else {
        dt[j] = du[j];
      }
      g.b[k][j] += dt[j];
    }
    std::array<double, kWidth> dnext{};
    for (int j = 0; j < rows; ++j)
      for (int i = 0; i < cols; ++i) {
        g.h[k][j * cols + i] += dt[j] * cache.u[k][i];
        dnext[i] += ch.h[k][j * cols + i] * dt[j];
      }
    du = dnext;
  }
  return du[0];
}

struct BinMass {
  double p;
  double dp_dup;  // d p / d logit(x + 0.5)
  double dp_dlo;  // d p / d logit(x - 0.5)
};

BinMass bin_mass(double l_up, double l_lo) {
  // Flip to the side where both sigmoids are small for precision.
  const double s = (l_up + l_lo > 0.0) ? -1.0 : 1.0;
  const double su = sigmoid(s * l_up), sl = sigmoid(s * l_lo);
  return {s * (su - sl), su * (1.0 - su), -sl * (1.0 - sl)};
}

std::int64_t channel_of(const Shape& shape, std::size_t flat) {
  std::size_t inner = 1;
  for (std::size_t d = 2; d < shape.size(); ++d) inner *= static_cast<std::size_t>(shape[d]);
  return static_cast<std::int64_t>((flat / inner) % static_cast<std::size_t>(shape[1]));
}

}  // namespace

FactorizedPrior::FactorizedPrior(std::int64_t channels, std::uint64_t seed, double init_scale)
    : channels_(channels) {
  if (channels < 1) throw std::invalid_argument("FactorizedPrior: channels must be positive");
  Rng rng(seed);
  const double scale = std::pow(init_scale, 1.0 / kLayers);
  for (int k = 0; k < kLayers; ++k) {
    const int rows = kDims[k + 1], cols = kDims[k];
    const double init = std::log(std::expm1(1.0 / scale / rows));
    Tensor m(Shape{channels, rows, cols}, init);
    Tensor b(Shape{channels, rows, 1});
    for (double& v : b.mutable_values()) v = rng.uniform(-0.5, 0.5);
    m.set_requires_grad(true);
    b.set_requires_grad(true);
    matrices_.push_back(m);
    biases_.push_back(b);
    if (k < kLayers - 1) {
      Tensor f(Shape{channels, rows, 1});
      f.set_requires_grad(true);
      factors_.push_back(f);
    }
  }
}

std::vector<Tensor*> FactorizedPrior::parameters() {
  std::vector<Tensor*> out;
  for (auto& t : matrices_) out.push_back(&t);
  for (auto& t : biases_) out.push_back(&t);
  for (auto& t : factors_) out.push_back(&t);
  return out;
}

double FactorizedPrior::logit(std::int64_t c, double x) const {
  return chain_forward(load_chain(matrices_, biases_, factors_, c), x, nullptr);
}

double FactorizedPrior::cdf(std::int64_t c, double x) const { return sigmoid(logit(c, x)); }

double FactorizedPrior::bin_probability(std::int64_t c, double x) const {
  const ChannelChain ch = load_chain(matrices_, biases_, factors_, c);
  return bin_mass(chain_forward(ch, x + 0.5, nullptr), chain_forward(ch, x - 0.5, nullptr)).p;
}

BitsResult bits_factorized(const Tensor& z, const FactorizedPrior& prior) {
  if (z.rank() < 2 || z.dim(1) != prior.channels()) {
    throw std::invalid_argument("bits_factorized: expected [B," + std::to_string(prior.channels()) + ",...], got " +
                                shape_string(z.shape()));
  }
  std::vector<ChannelChain> chains;
  for (std::int64_t c = 0; c < prior.channels(); ++c)
    chains.push_back(load_chain(prior.matrices_, prior.biases_, prior.factors_, c));
  const auto zv = z.values();
  BitsResult r;
  r.elements.resize(zv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < zv.size(); ++i) {
    const auto& ch = chains[static_cast<std::size_t>(channel_of(z.shape(), i))];
    const double p = bin_mass(chain_forward(ch, zv[i] + 0.5, nullptr), chain_forward(ch, zv[i] - 0.5, nullptr)).p;
    r.elements[i] = -std::log2(std::max(p, kMinLikelihood));
    total += r.elements[i];
  }
  r.total = Tensor::scalar(total);

  std::vector<const Tensor*> inputs{&z};
  for (const auto& t : prior.matrices_) inputs.push_back(&t);
  for (const auto& t : prior.biases_) inputs.push_back(&t);
  for (const auto& t : prior.factors_) inputs.push_back(&t);
  bool record = false;
  for (const Tensor* t : inputs) record = record || detail::should_record({t});
  if (!record) return r;

  r.total.set_requires_grad(true);
  Tensor out = r.total;
  Tape::active()->record(out, [z, out, chains, m = prior.matrices_, b = prior.biases_, f = prior.factors_]() {
    const double g = out.grad()[0];
    const auto zv = z.values();
    const std::size_t nc = chains.size();
    std::vector<ChainGrad> grads(nc);
    double* gz = z.requires_grad() ? z.mutable_grad().data() : nullptr;
    for (std::size_t i = 0; i < zv.size(); ++i) {
      const auto c = static_cast<std::size_t>(channel_of(z.shape(), i));
      const auto& ch = chains[c];
      ChainCache cu, cl;
      const double lu = chain_forward(ch, zv[i] + 0.5, &cu);
      const double ll = chain_forward(ch, zv[i] - 0.5, &cl);
      const BinMass bm = bin_mass(lu, ll);
      if (bm.p <= kMinLikelihood) continue;
      const double dp = -g / (bm.p * std::numbers::ln2);
      const double dx = chain_backward(ch, cu, dp * bm.dp_dup, grads[c]) + chain_backward(ch, cl, dp * bm.dp_dlo, grads[c]);
      if (gz) gz[i] += dx;
    }
    // Map chain gradients back through softplus / tanh onto the raw tensors.
    for (int k = 0; k < kLayers; ++k) {
      const int rows = kDims[k + 1], cols = kDims[k];
      double* gm = m[k].requires_grad() ? m[k].mutable_grad().data() : nullptr;
      double* gb = b[k].requires_grad() ? b[k].mutable_grad().data() : nullptr;
      double* gf = (k < kLayers - 1 && f[k].requires_grad()) ? f[k].mutable_grad().data() : nullptr;
      const auto mv = m[k].values();
      const double* fv = k < kLayers - 1 ? f[k].values().data() : nullptr;
      for (std::size_t c = 0; c < nc; ++c) {
        for (int i = 0; i < rows * cols; ++i) {
          const auto idx = c * static_cast<std::size_t>(rows * cols) + static_cast<std::size_t>(i);
          if (gm) gm[idx] += grads[c].h[k][i] * sigmoid(mv[idx]);
        }
        for (int j = 0; j < rows; ++j) {
          const auto idx = c * static_cast<std::size_t>(rows) + static_cast<std::size_t>(j);
          if (gb) gb[idx] += grads[c].b[k][j];
          if (gf) {
            const double th = std::tanh(fv[idx]);
            gf[idx] += grads[c].a[k][j] * (1.0 - th * th);
          }
        }
      }
    }
  });
  return r;
}

// --- tables ------------------------------------------------------------------

namespace {

// Escape mass never drops below this, keeping out-of-support values cheap
// enough to be harmless.
constexpr double kMinEscape = 1.0 / kCdfTotal;
constexpr double kTailMass = 1e-7;
constexpr std::int64_t kSearchLimit = 1 << 20;

SymbolTable finish_table(std::int64_t lo, std::vector<double> probs, double escape) {
  probs.push_back(std::max(escape, kMinEscape));
  return {lo, build_cdf_table(probs)};
}

}  // namespace

SymbolTable gaussian_table(double mu, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(mu)) throw std::invalid_argument("gaussian_table: invalid parameters");
  std::int64_t lo = static_cast<std::int64_t>(std::floor(mu - kSupportSigmas * sigma));
  std::int64_t hi = static_cast<std::int64_t>(std::ceil(mu + kSupportSigmas * sigma));
  if (hi - lo + 1 > kMaxSupport) {
    const auto center = static_cast<std::int64_t>(std::llround(mu));
    lo = center - kMaxSupport / 2;
    hi = lo + kMaxSupport - 1;
  }
  std::vector<double> probs;
  probs.reserve(static_cast<std::size_t>(hi - lo + 2));
  for (std::int64_t k = lo; k <= hi; ++k) probs.push_back(gaussian_bin_probability(static_cast<double>(k), mu, sigma));
  const double escape =
      normal_cdf((static_cast<double>(lo) - 0.5 - mu) / sigma) + normal_cdf((mu - static_cast<double>(hi) - 0.5) / sigma);
  return finish_table(lo, std::move(probs), escape);
}

std::vector<SymbolTable> factorized_tables(const FactorizedPrior& prior) {
  std::vector<SymbolTable> out;
  const double lo_logit = std::log(kTailMass / (1.0 - kTailMass));
  for (std::int64_t c = 0; c < prior.channels(); ++c) {
    // Smallest lo with CDF(lo + 0.5) > tail and largest hi with CDF(hi - 0.5) < 1 - tail.
    std::int64_t a = -kSearchLimit, b = kSearchLimit;
    while (a < b) {
      const std::int64_t m = a + (b - a) / 2;
      if (prior.logit(c, static_cast<double>(m) + 0.5) > lo_logit) b = m; else a = m + 1;
    }
    const std::int64_t lo = a;
    a = lo;
    b = kSearchLimit;
    while (a < b) {
      const std::int64_t m = a + (b - a + 1) / 2;
      if (prior.logit(c, static_cast<double>(m) - 0.5) < -lo_logit) a = m; else b = m - 1;
    }
    std::int64_t hi = std::max(a, lo);
    if (hi - lo + 1 > kMaxSupport) hi = lo + kMaxSupport - 1;
    std::vector<double> probs;
    for (std::int64_t k = lo; k <= hi; ++k) probs.push_back(prior.bin_probability(c, static_cast<double>(k)));
    const double escape = prior.cdf(c, static_cast<double>(lo) - 0.5) + (1.0 - prior.cdf(c, static_cast<double>(hi) + 0.5));
    out.push_back(finish_table(lo, std::move(probs), escape));
  }
  return out;
}

void encode_symbol(RangeEncoder& enc, const SymbolTable& t, std::int64_t value) {
  const std::int64_t idx = value - t.lo;
  if (idx >= 0 && idx < static_cast<std::int64_t>(t.regular())) {
    enc.encode(t.table, static_cast<std::size_t>(idx));
    return;
  }
  if (value < std::numeric_limits<std::int32_t>::min() || value > std::numeric_limits<std::int32_t>::max()) {
    throw std::out_of_range("encode_symbol: value " + std::to_string(value) + " exceeds 32 bits");
  }
  enc.encode(t.table, t.regular());
  const auto bits = static_cast<std::uint32_t>(static_cast<std::int32_t>(value));
  enc.encode_raw16(bits >> 16);
  enc.encode_raw16(bits & 0xFFFFu);
}

std::int64_t decode_symbol(RangeDecoder& dec, const SymbolTable& t) {
  const std::size_t s = dec.decode(t.table);
  if (s < t.regular()) return t.lo + static_cast<std::int64_t>(s);
  const std::uint32_t hi = dec.decode_raw16();
  const std::uint32_t lo = dec.decode_raw16();
  return static_cast<std::int32_t>((hi << 16) | lo);
}

namespace {

std::int64_t as_symbol(double v) {
  const double r = std::round(v);
  if (r != v || !(std::abs(v) < 4.0e9)) throw std::invalid_argument("entropy coder: symbol is not an integer");
  return static_cast<std::int64_t>(r);
}

}  // namespace

std::vector<std::uint8_t> encode_gaussian(const Tensor& symbols, const Tensor& mean, const Tensor& scale) {
  require_same(symbols, mean, "encode_gaussian");
  require_same(symbols, scale, "encode_gaussian");
  const auto sv = symbols.values(), mv = mean.values(), cv = scale.values();
  RangeEncoder enc;
  for (std::size_t i = 0; i < sv.size(); ++i)
    encode_symbol(enc, gaussian_table(mv[i], std::max(cv[i], kScaleFloor)), as_symbol(sv[i]));
  return enc.finish();
}

Tensor decode_gaussian(std::span<const std::uint8_t> bytes, const Tensor& mean, const Tensor& scale) {
  require_same(mean, scale, "decode_gaussian");
  const auto mv = mean.values(), cv = scale.values();
  Tensor out(mean.shape());
  auto o = out.mutable_values();
  RangeDecoder dec(bytes);
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = static_cast<double>(decode_symbol(dec, gaussian_table(mv[i], std::max(cv[i], kScaleFloor))));
  dec.finish();
  return out;
}

std::vector<std::uint8_t> encode_factorized(const Tensor& symbols, const std::vector<SymbolTable>& tables) {
  if (symbols.rank() < 2 || symbols.dim(1) != static_cast<std::int64_t>(tables.size())) {
    throw std::invalid_argument("encode_factorized: channel count does not match tables");
  }
  const auto sv = symbols.values();
  RangeEncoder enc;
  for (std::size_t i = 0; i < sv.size(); ++i)
    encode_symbol(enc, tables[static_cast<std::size_t>(channel_of(symbols.shape(), i))], as_symbol(sv[i]));
  return enc.finish();
}

Tensor decode_factorized(std::span<const std::uint8_t> bytes, const Shape& shape,
                         const std::vector<SymbolTable>& tables) {
  if (shape.size() < 2 || shape[1] != static_cast<std::int64_t>(tables.size())) {
    throw std::invalid_argument("decode_factorized: channel count does not match tables");
  }
  Tensor out(shape);
  auto o = out.mutable_values();
  RangeDecoder dec(bytes);
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = static_cast<double>(decode_symbol(dec, tables[static_cast<std::size_t>(channel_of(shape, i))]));
  dec.finish();
  return out;
}

}  // namespace lhbvc
