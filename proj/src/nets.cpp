#include "rtrl/nets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "rtrl/error.hpp"
#include "rtrl/kernels.hpp"

namespace rtrl {

// ---- parameter trees

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void MlpParams::validate() const {
  if (layers.empty() || layers.size() != activations.size())
    throw ConfigError("mlp: layer/activation count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].bias.size() != layers[l].weight.rows())
      throw ConfigError("mlp: layer " + std::to_string(l) + " bias length mismatch");
    if (l > 0 && layers[l].weight.cols() != layers[l - 1].weight.rows())
      throw ConfigError("mlp: layer " + std::to_string(l) + " input " +
                        std::to_string(layers[l].weight.cols()) + " != previous output " +
                        std::to_string(layers[l - 1].weight.rows()));
  }
}

namespace {
std::vector<Dense> zero_layers(const std::vector<Dense>& like) {
  std::vector<Dense> out;
  out.reserve(like.size());
  for (const auto& l : like) out.push_back({Mat(l.weight.rows(), l.weight.cols()), Vec(l.bias.size(), 0.0)});
  return out;
}
}  // namespace

Gradients zeros_like(const MlpParams& params) { return {zero_layers(params.layers)}; }
Gradients zeros_like(const Gradients& grads) { return {zero_layers(grads.layers)}; }

bool congruent(const MlpParams& params, const Gradients& grads) {
  if (params.layers.size() != grads.layers.size()) return false;
  for (std::size_t l = 0; l < grads.layers.size(); ++l)
    if (!params.layers[l].weight.same_shape(grads.layers[l].weight) ||
        params.layers[l].bias.size() != grads.layers[l].bias.size())
      return false;
  return true;
}

void add_scaled(Gradients& a, double s, const Gradients& b) {
  if (a.layers.size() != b.layers.size()) throw LogicError("add_scaled: layer count mismatch");
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    axpy(s, b.layers[l].weight, a.layers[l].weight);
    auto& ab = a.layers[l].bias;
    const auto& bb = b.layers[l].bias;
    for (std::size_t i = 0; i < ab.size(); ++i) ab[i] += s * bb[i];
  }
}

void scale(Gradients& g, double s) {
  for (auto& l : g.layers) {
    for (double& v : l.weight.values()) v *= s;
    for (double& v : l.bias) v *= s;
  }
}

double dot(const Gradients& a, const Gradients& b) {
  double s = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    s += dot(a.layers[l].weight.values(), b.layers[l].weight.values()) +
         dot(a.layers[l].bias, b.layers[l].bias);
  return s;
}

double norm(const Gradients& g) { return std::sqrt(dot(g, g)); }

bool all_finite(const Gradients& g) {
  return std::all_of(g.layers.begin(), g.layers.end(), [](const Dense& l) {
    return all_finite(l.weight) && all_finite(std::span<const double>(l.bias));
  });
}

Vec flatten(const std::vector<Dense>& layers) {
  Vec flat;
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weight.values().begin(), l.weight.values().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void unflatten(std::span<const double> flat, std::vector<Dense>& layers) {
  std::size_t pos = 0;
  for (auto& l : layers) {
    if (pos + l.weight.size() + l.bias.size() > flat.size()) throw ConfigError("unflatten: too short");
    std::copy_n(flat.begin() + pos, l.weight.size(), l.weight.data());
    pos += l.weight.size();
    std::copy_n(flat.begin() + pos, l.bias.size(), l.bias.begin());
    pos += l.bias.size();
  }
  if (pos != flat.size()) throw ConfigError("unflatten: length mismatch");
}

// ---- construction

Mat orthogonal_init(std::size_t rows, std::size_t cols, double gain, RngStream& rng) {
  const std::size_t n = std::max(rows, cols), m = std::min(rows, cols);
  Mat q(n, m);
  for (double& v : q.values()) v = rng.normal();
  // Modified Gram-Schmidt on the columns.
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double proj = 0.0;
      for (std::size_t i = 0; i < n; ++i) proj += q(i, k) * q(i, j);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= proj * q(i, k);
    }
    double len = 0.0;
    for (std::size_t i = 0; i < n; ++i) len += q(i, j) * q(i, j);
    len = std::sqrt(len);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= len;
  }
  Mat w = rows >= cols ? q : transpose(q);
  for (double& v : w.values()) v *= gain;
  return w;
}

namespace {
Dense dense(Mat w) {
  Dense d{std::move(w), {}};
  d.bias.assign(d.weight.rows(), 0.0);
  return d;
}
}  // namespace

MlpParams init_policy_params(std::size_t state_dim, std::size_t action_dim, RngStream& rng,
                             std::size_t hidden) {
  MlpParams p;
  p.layers.push_back(dense(orthogonal_init(hidden, state_dim, std::sqrt(2.0), rng)));
  p.layers.push_back(dense(orthogonal_init(hidden, hidden, std::sqrt(2.0), rng)));
  Mat head(2 * action_dim, hidden);
  const Mat mean_rows = orthogonal_init(action_dim, hidden, 0.01, rng);
  std::copy(mean_rows.values().begin(), mean_rows.values().end(), head.data());
  p.layers.push_back(dense(std::move(head)));
  p.activations = {Activation::kTanh, Activation::kTanh, Activation::kLinear};
  return p;
}

MlpParams init_value_params(std::size_t state_dim, RngStream& rng, std::size_t hidden) {
  MlpParams p;
  p.layers.push_back(dense(orthogonal_init(hidden, state_dim, std::sqrt(2.0), rng)));
  p.layers.push_back(dense(orthogonal_init(hidden, hidden, std::sqrt(2.0), rng)));
  p.layers.push_back(dense(orthogonal_init(1, hidden, 1.0, rng)));
  p.activations = {Activation::kTanh, Activation::kTanh, Activation::kLinear};
  return p;
}

// ---- batched MLP

MlpTrace mlp_forward(const MlpParams& params, const Mat& x) {
  if (x.cols() != params.input_dim())
    throw ConfigError("mlp_forward: input dim " + std::to_string(x.cols()) + " != " +
                      std::to_string(params.input_dim()));
  MlpTrace trace;
  trace.inputs.reserve(params.layers.size());
  Mat h = x;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Dense& layer = params.layers[l];
    Mat z = matmul_nt(h, layer.weight);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto row = z.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
    }
    if (params.activations[l] == Activation::kTanh) kernels::tanh_inplace(z.data(), z.size());
    if (!all_finite(z)) throw NumericError("non-finite activation in layer " + std::to_string(l));
    trace.inputs.push_back(std::move(h));
    h = std::move(z);
  }
  trace.output = std::move(h);
  return trace;
}

Gradients mlp_backward(const MlpParams& params, const MlpTrace& trace, Mat delta,
                       std::vector<Mat>* preact_grads, bool want_param_grads) {
  const std::size_t n_layers = params.layers.size();
  Gradients grads;
  if (want_param_grads) grads.layers.resize(n_layers);
  if (preact_grads) preact_grads->assign(n_layers, Mat());
  for (std::size_t l = n_layers; l-- > 0;) {
    if (params.activations[l] == Activation::kTanh) {
      const Mat& y = l + 1 < n_layers ? trace.inputs[l + 1] : trace.output;
      for (std::size_t i = 0; i < delta.size(); ++i) delta.data()[i] *= 1.0 - y.data()[i] * y.data()[i];
    }
    if (want_param_grads) {
      grads.layers[l].weight = matmul_tn(delta, trace.inputs[l]);
      Vec bias(delta.cols(), 0.0);
      for (std::size_t i = 0; i < delta.rows(); ++i) {
        const auto row = delta.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) bias[j] += row[j];
      }
      grads.layers[l].bias = std::move(bias);
    }
    Mat next;
    if (l > 0) next = matmul(delta, params.layers[l].weight);
    if (preact_grads) (*preact_grads)[l] = std::move(delta);
    delta = std::move(next);
  }
  if (want_param_grads && !all_finite(grads)) throw NumericError("non-finite gradient in backward pass");
  return grads;
}

// ---- policy

double bounded_cov(double logit, CovBounds b) {
  const double s = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
  return b.min + (b.max - b.min) * s;
}

double bounded_cov_slope(double logit, CovBounds b) {
  const double s = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
  return (b.max - b.min) * s * (1.0 - s);
}

GaussianHead PolicyBatch::head(std::size_t i) const {
  const auto m = mean.row(i);
  const auto c = cov.row(i);
  return {Vec(m.begin(), m.end()), Vec(c.begin(), c.end())};
}

PolicyBatch policy_forward_batch(const MlpParams& theta, const Mat& states, CovBounds bounds) {
  PolicyBatch out;
  out.trace = mlp_forward(theta, states);
  const Mat& z = out.trace.output;
  const std::size_t d = z.cols() / 2;
  out.mean = Mat(z.rows(), d);
  out.cov = Mat(z.rows(), d);
  out.cov_logit = Mat(z.rows(), d);
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) {
      out.mean(i, j) = z(i, j);
      out.cov_logit(i, j) = z(i, d + j);
      out.cov(i, j) = bounded_cov(z(i, d + j), bounds);
    }
  return out;
}

GaussianHead policy_forward(const MlpParams& theta, std::span<const double> state, CovBounds bounds) {
  return policy_forward_batch(theta, Mat(1, state.size(), Vec(state.begin(), state.end())), bounds).head(0);
}

Vec sample_action(const GaussianHead& head, RngStream& rng) {
  Vec a(head.mean.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = head.mean[i] + std::sqrt(head.cov[i]) * rng.normal();
  return a;
}

double log_prob(const GaussianHead& head, std::span<const double> action) {
  if (action.size() != head.mean.size()) throw ConfigError("log_prob: action dimension mismatch");
  double lp = 0.0;
  for (std::size_t i = 0; i < action.size(); ++i) {
    const double d = action[i] - head.mean[i];
    lp += -0.5 * std::log(2.0 * std::numbers::pi * head.cov[i]) - d * d / (2.0 * head.cov[i]);
  }
  return lp;
}

double entropy(const GaussianHead& head) {
  double h = 0.0;
  for (double c : head.cov) h += 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * c);
  return h;
}

Gradients policy_backward(const MlpParams& theta, const PolicyBatch& batch, const Mat& d_mean,
                          const Mat& d_cov, CovBounds bounds, std::vector<Mat>* preact_grads,
                          bool want_param_grads) {
  const std::size_t n = batch.size(), d = batch.mean.cols();
  if (!d_mean.same_shape(batch.mean) || !d_cov.same_shape(batch.cov))
    throw ConfigError("policy_backward: upstream shape mismatch");
  Mat d_out(n, 2 * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      d_out(i, j) = d_mean(i, j);
      d_out(i, d + j) = d_cov(i, j) * bounded_cov_slope(batch.cov_logit(i, j), bounds);
    }
  return mlp_backward(theta, batch.trace, std::move(d_out), preact_grads, want_param_grads);
}

void add_log_prob_grads(const PolicyBatch& batch, const Mat& actions, std::span<const double> weights,
                        Mat& d_mean, Mat& d_cov) {
  if (!actions.same_shape(batch.mean) || weights.size() != batch.size())
    throw ConfigError("add_log_prob_grads: shape mismatch");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double w = weights[i];
    for (std::size_t j = 0; j < actions.cols(); ++j) {
      const double c = batch.cov(i, j);
      const double diff = actions(i, j) - batch.mean(i, j);
      d_mean(i, j) += w * diff / c;
      d_cov(i, j) += w * 0.5 * (diff * diff / (c * c) - 1.0 / c);
    }
  }
}

Gradients backprop_policy(const MlpParams& theta, std::span<const double> state,
                          std::span<const double> action, double upstream, CovBounds bounds) {
  const Mat s(1, state.size(), Vec(state.begin(), state.end()));
  const PolicyBatch batch = policy_forward_batch(theta, s, bounds);
  const Mat a(1, action.size(), Vec(action.begin(), action.end()));
  Mat dm(1, batch.mean.cols()), dc(1, batch.mean.cols());
  const double w[] = {upstream};
  add_log_prob_grads(batch, a, w, dm, dc);
  return policy_backward(theta, batch, dm, dc, bounds);
}

// ---- value

Vec value_forward_batch(const MlpParams& psi, const Mat& states) {
  MlpTrace t = mlp_forward(psi, states);
  return std::move(t.output.values());
}

double value_forward(const MlpParams& psi, std::span<const double> state) {
  return value_forward_batch(psi, Mat(1, state.size(), Vec(state.begin(), state.end())))[0];
}

std::pair<double, Gradients> backprop_value(const MlpParams& psi, const Mat& states,
                                            std::span<const double> targets) {
  if (states.rows() == 0 || targets.size() != states.rows())
    throw ConfigError("backprop_value: batch must be nonempty with one target per state");
  const MlpTrace trace = mlp_forward(psi, states);
  Mat d_out(states.rows(), 1);
  double loss = 0.0;
  for (std::size_t i = 0; i < states.rows(); ++i) {
    const double err = trace.output(i, 0) - targets[i];
    loss += err * err;
    d_out(i, 0) = 2.0 * err;
  }
  return {loss, mlp_backward(psi, trace, std::move(d_out))};
}

// ---- observation normalization

ObsNormalizer::ObsNormalizer(double count, Vec mean, Vec m2)
    : count_(count), mean_(std::move(mean)), m2_(std::move(m2)) {
  if (mean_.size() != m2_.size()) throw ConfigError("ObsNormalizer: mean/m2 length mismatch");
}

Vec ObsNormalizer::variance() const {
  Vec v(dim(), 1.0);
  if (count_ > 0)
    for (std::size_t i = 0; i < dim(); ++i) v[i] = m2_[i] / count_;
  return v;
}

void ObsNormalizer::update(const Mat& states) {
  if (states.rows() == 0) return;
  if (states.cols() != dim()) throw ConfigError("ObsNormalizer: state dim mismatch");
  const double nb = static_cast<double>(states.rows());
  Vec bmean(dim(), 0.0), bm2(dim(), 0.0);
  for (std::size_t i = 0; i < states.rows(); ++i)
    for (std::size_t j = 0; j < dim(); ++j) bmean[j] += states(i, j);
  for (double& m : bmean) m /= nb;
  for (std::size_t i = 0; i < states.rows(); ++i)
    for (std::size_t j = 0; j < dim(); ++j) {
      const double d = states(i, j) - bmean[j];
      bm2[j] += d * d;
    }
  const double total = count_ + nb;
  for (std::size_t j = 0; j < dim(); ++j) {
    const double delta = bmean[j] - mean_[j];
    mean_[j] += delta * nb / total;
    m2_[j] += bm2[j] + delta * delta * count_ * nb / total;
  }
  count_ = total;
}

Vec ObsNormalizer::normalize(std::span<const double> state) const {
  Vec out(state.begin(), state.end());
  if (count_ <= 0) return out;
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = std::clamp((out[j] - mean_[j]) / std::sqrt(m2_[j] / count_ + kEpsilon), -kClip, kClip);
  return out;
}

Mat ObsNormalizer::normalize(const Mat& states) const {
  Mat out = states;
  if (count_ <= 0) return out;
  Vec inv(dim());
  for (std::size_t j = 0; j < dim(); ++j) inv[j] = 1.0 / std::sqrt(m2_[j] / count_ + kEpsilon);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < dim(); ++j)
      out(i, j) = std::clamp((out(i, j) - mean_[j]) * inv[j], -kClip, kClip);
  return out;
}

// ---- checkpoints

namespace {

constexpr char kMagic[8] = {'R', 'T', 'R', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::vector<std::uint8_t> bytes;
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
  void need(std::size_t n) {
    if (pos + n > bytes.size()) throw ConfigError("checkpoint: truncated data at byte " + std::to_string(pos));
  }
  std::uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

void write_net(Writer& w, const MlpParams& p) {
  w.u32(static_cast<std::uint32_t>(p.layers.size()));
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    w.u32(static_cast<std::uint32_t>(p.layers[l].weight.cols()));
    w.u32(static_cast<std::uint32_t>(p.layers[l].weight.rows()));
    w.u8(static_cast<std::uint8_t>(p.activations[l]));
  }
  for (const auto& layer : p.layers) {
    for (double v : layer.weight.values()) w.f64(v);
    for (double v : layer.bias) w.f64(v);
  }
}

MlpParams read_net(Reader& r) {
  MlpParams p;
  const std::uint32_t n = r.u32();
  if (n == 0 || n > 64) throw ConfigError("checkpoint: implausible layer count " + std::to_string(n));
  for (std::uint32_t l = 0; l < n; ++l) {
    const std::uint32_t in = r.u32(), out = r.u32();
    const std::uint8_t act = r.u8();
    if (act > 1) throw ConfigError("checkpoint: unknown activation tag " + std::to_string(act));
    if (in == 0 || out == 0 || static_cast<std::size_t>(in) * out > r.bytes.size() / 8)
      throw ConfigError("checkpoint: implausible layer shape " + std::to_string(out) + "x" + std::to_string(in));
    p.layers.push_back({Mat(out, in), Vec(out, 0.0)});
    p.activations.push_back(static_cast<Activation>(act));
  }
  for (auto& layer : p.layers) {
    for (double& v : layer.weight.values()) v = r.f64();
    for (double& v : layer.bias) v = r.f64();
  }
  p.validate();
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes.insert(w.bytes.end(), std::begin(kMagic), std::end(kMagic));
  w.u32(kVersion);
  w.u32(2);
  write_net(w, ckpt.policy);
  write_net(w, ckpt.value);
  const ObsNormalizer& n = ckpt.normalizer;
  w.u32(static_cast<std::uint32_t>(n.dim()));
  w.f64(n.count());
  for (double v : n.mean()) w.f64(v);
  for (double v : n.m2()) w.f64(v);
  return w.bytes;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r{bytes};
  r.need(8);
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw ConfigError("checkpoint: bad magic bytes");
  r.pos = 8;
  if (const auto v = r.u32(); v != kVersion) throw ConfigError("checkpoint: unsupported version " + std::to_string(v));
  if (const auto nets = r.u32(); nets != 2) throw ConfigError("checkpoint: expected 2 networks, found " + std::to_string(nets));
  Checkpoint c;
  c.policy = read_net(r);
  c.value = read_net(r);
  const std::uint32_t dim = r.u32();
  const double count = r.f64();
  Vec mean(dim), m2(dim);
  for (double& v : mean) v = r.f64();
  for (double& v : m2) v = r.f64();
  c.normalizer = ObsNormalizer(count, std::move(mean), std::move(m2));
  if (r.pos != bytes.size()) throw ConfigError("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt,
                     const std::map<std::string, std::string>& metadata) {
  const auto bytes = encode_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("short write on checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
  std::ofstream meta(path + ".meta");
  meta << "format = RTRLCKPT v" << kVersion << "\n";
  meta << "policy_layers = " << ckpt.policy.layers.size() << "\n";
  meta << "policy_parameters = " << ckpt.policy.parameter_count() << "\n";
  meta << "value_parameters = " << ckpt.value.parameter_count() << "\n";
  for (const auto& [k, v] : metadata) meta << k << " = " << v << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace rtrl
