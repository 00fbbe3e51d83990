#include "rtrl/optimizers.hpp"

#include <cmath>
#include <string>

#include "rtrl/error.hpp"

namespace rtrl {

// ---- Adam

AdamState::AdamState(const MlpParams& like, AdamConfig cfg)
    : cfg_(cfg), m_(zeros_like(like)), v_(zeros_like(like)) {}

void adam_step(AdamState& state, MlpParams& params, const Gradients& grads, double lr, StepDirection direction) {
  if (!congruent(params, grads) || !congruent(params, state.m_))
    throw LogicError("adam_step: gradient shape does not match parameters");
  const AdamConfig& c = state.cfg_;
  ++state.step_;
  const double t = static_cast<double>(state.step_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double sign = direction == StepDirection::kAscend ? 1.0 : -1.0;

  auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      p[i] += sign * lr * mh / (std::sqrt(vh) + c.epsilon);
    }
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Dense& p = params.layers[l];
    const Dense& g = grads.layers[l];
    update(p.weight.values(), g.weight.values(), state.m_.layers[l].weight.values(),
           state.v_.layers[l].weight.values());
    update(p.bias, g.bias, state.m_.layers[l].bias, state.v_.layers[l].bias);
  }
}

// ---- K-FAC

KfacState::KfacState(const MlpParams& like, KfacConfig cfg) : cfg_(cfg) {
  if (!(cfg.damping >= 0.0) || !(cfg.decay >= 0.0 && cfg.decay < 1.0))
    throw ConfigError("kfac: damping must be >= 0 and decay in [0, 1)");
  for (const Dense& d : like.layers) {
    const std::size_t in = d.weight.cols() + 1, out = d.weight.rows();
    factors_.push_back({Mat(in, in), Mat(out, out)});
  }
}

KfacState kfac_with_factors(std::vector<KfacFactors> factors, KfacConfig cfg) {
  KfacState s;
  s.cfg_ = cfg;
  s.factors_ = std::move(factors);
  s.updates_ = 1;
  return s;
}

namespace {

Mat second_moment(const Mat& x) {
  Mat m = matmul_tn(x, x);
  const double inv = 1.0 / static_cast<double>(x.rows());
  for (double& v : m.values()) v *= inv;
  return m;
}

Mat with_ones_column(const Mat& x) {
  Mat out(x.rows(), x.cols() + 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto src = x.row(i);
    auto dst = out.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
    dst[x.cols()] = 1.0;
  }
  return out;
}

void blend(Mat& target, const Mat& batch, double decay, bool first) {
  if (first) {
    target = batch;
    return;
  }
  auto& t = target.values();
  const auto& b = batch.values();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = decay * t[i] + (1.0 - decay) * b[i];
}

Mat damped(const Mat& m, double d) {
  Mat out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) out(i, i) += d;
  return out;
}

}  // namespace

void kfac_accumulate(KfacState& state, const std::vector<Mat>& layer_inputs,
                     const std::vector<Mat>& layer_output_grads) {
  const std::size_t layers = state.factors_.size();
  if (layer_inputs.size() != layers || layer_output_grads.size() != layers)
    throw ConfigError("kfac_accumulate: expected statistics for " + std::to_string(layers) + " layers");
  const bool first = state.updates_ == 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const Mat& x = layer_inputs[l];
    const Mat& g = layer_output_grads[l];
    KfacFactors& f = state.factors_[l];
    if (x.rows() == 0 || x.rows() != g.rows() || x.cols() + 1 != f.a.rows() || g.cols() != f.g.rows())
      throw ConfigError("kfac_accumulate: layer " + std::to_string(l) + " statistics have wrong shape");
    blend(f.a, second_moment(with_ones_column(x)), state.cfg_.decay, first);
    blend(f.g, second_moment(g), state.cfg_.decay, first);
  }
  ++state.updates_;
}

Mat layer_matrix(const Dense& layer) {
  const std::size_t out = layer.weight.rows(), in = layer.weight.cols();
  Mat m(out, in + 1);
  for (std::size_t i = 0; i < out; ++i) {
    for (std::size_t j = 0; j < in; ++j) m(i, j) = layer.weight(i, j);
    m(i, in) = layer.bias[i];
  }
  return m;
}

Dense split_layer_matrix(const Mat& m) {
  const std::size_t out = m.rows(), in = m.cols() - 1;
  Dense d{Mat(out, in), Vec(out)};
  for (std::size_t i = 0; i < out; ++i) {
    for (std::size_t j = 0; j < in; ++j) d.weight(i, j) = m(i, j);
    d.bias[i] = m(i, in);
  }
  return d;
}

namespace {

Mat precondition_factored(const KfacFactors& f, const Mat& v, double eta, std::size_t layer) {
  const double s = std::sqrt(eta);
  try {
    Mat left = solve_spd(damped(f.g, s), v);              // (G + sI)^-1 V
    Mat right = solve_spd(damped(f.a, s), transpose(left));  // (A + sI)^-1 (..)^T, A symmetric
    return transpose(right);
  } catch (const NumericError& e) {
    throw NumericError("kfac layer " + std::to_string(layer) + ": " + e.what());
  }
}

Mat precondition_exact(const KfacFactors& f, const Mat& v, double eta, std::size_t layer) {
  const SymmetricEigen eg = symmetric_eigen(f.g);
  const SymmetricEigen ea = symmetric_eigen(f.a);
  Mat t = matmul(matmul_tn(eg.vectors, v), ea.vectors);
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) {
      const double denom = eg.values[i] * ea.values[j] + eta;
      if (!(denom > 0.0))
        throw NumericError("kfac layer " + std::to_string(layer) + ": damped Kronecker Fisher is not positive definite"
                           " (eigenvalue product " + std::to_string(eg.values[i] * ea.values[j]) + ")");
      t(i, j) /= denom;
    }
  return matmul_nt(matmul(eg.vectors, t), ea.vectors);
}

}  // namespace

Gradients kfac_precondition(const KfacState& state, const Gradients& grads) {
  if (state.updates() == 0) throw LogicError("kfac_precondition: factors were never accumulated");
  if (grads.layers.size() != state.factors().size()) throw LogicError("kfac_precondition: layer count mismatch");
  const KfacConfig& cfg = state.config();
  Gradients out;
  out.layers.reserve(grads.layers.size());
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    const KfacFactors& f = state.factors()[l];
    const Mat v = layer_matrix(grads.layers[l]);
    if (v.rows() != f.g.rows() || v.cols() != f.a.rows())
      throw LogicError("kfac_precondition: layer " + std::to_string(l) + " gradient shape mismatch");
    const Mat p = cfg.mode == KfacDamping::kExact ? precondition_exact(f, v, cfg.damping, l)
                                                  : precondition_factored(f, v, cfg.damping, l);
    out.layers.push_back(split_layer_matrix(p));
  }
  return out;
}

// ---- KL and barrier

namespace {

inline double kl_term(double mo, double co, double mn, double cn) {
  const double dm = mo - mn;
  return 0.5 * (std::log(cn / co) + (co + dm * dm) / cn - 1.0);
}

void check_cov(double c, double min_cov) {
  if (!(c >= min_cov))
    throw LogicError("gaussian_kl: variance " + std::to_string(c) + " below minimum " + std::to_string(min_cov));
}

}  // namespace

double gaussian_kl(const GaussianHead& old_head, const GaussianHead& new_head, double min_cov) {
  if (old_head.mean.size() != new_head.mean.size() || old_head.cov.size() != old_head.mean.size() ||
      new_head.cov.size() != new_head.mean.size())
    throw ConfigError("gaussian_kl: head dimensions differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < old_head.mean.size(); ++i) {
    check_cov(old_head.cov[i], min_cov);
    check_cov(new_head.cov[i], min_cov);
    kl += kl_term(old_head.mean[i], old_head.cov[i], new_head.mean[i], new_head.cov[i]);
  }
  return kl;
}

double gaussian_kl(const std::vector<GaussianHead>& old_heads, const std::vector<GaussianHead>& new_heads,
                   double min_cov) {
  if (old_heads.size() != new_heads.size()) throw ConfigError("gaussian_kl: sequences have different lengths");
  if (old_heads.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < old_heads.size(); ++i) sum += gaussian_kl(old_heads[i], new_heads[i], min_cov);
  return sum / static_cast<double>(old_heads.size());
}

void BarrierConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
  if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
}

double barrier_objective(double rho, double kl, const BarrierConfig& cfg) {
  return rho - cfg.alpha * std::max(0.0, kl - cfg.delta);
}

// ---- multi-policy objective

PolicyObjectiveData make_policy_objective_data(const PolicyReplayBuffer& buffer, const Vec& advantages,
                                               const ObsNormalizer& normalizer, const MlpParams& theta_old,
                                               PolicyWeighting weighting, bool kl_newest_only, CovBounds bounds) {
  const std::size_t n = buffer.total_steps();
  if (advantages.size() != n)
    throw ConfigError("policy objective: " + std::to_string(advantages.size()) + " advantages for " +
                      std::to_string(n) + " buffered steps");
  if (n == 0) throw ConfigError("policy objective: empty replay buffer");
  const std::size_t sd = buffer.records().front().paths.front().states.front().size();
  const std::size_t ad = buffer.records().front().paths.front().actions.front().size();

  PolicyObjectiveData data;
  Mat raw(n, sd);
  data.actions = Mat(n, ad);
  data.kl_weights = Vec(n, 0.0);
  std::size_t row = 0, kl_count = 0;
  for (const PolicyRecord& rec : buffer.records()) {
    const bool in_kl = !kl_newest_only || rec.policy_id() == buffer.newest().policy_id();
    for (const Path& path : rec.paths)
      for (std::size_t t = 0; t < path.size(); ++t, ++row) {
        std::copy(path.states[t].begin(), path.states[t].end(), raw.row(row).begin());
        std::copy(path.actions[t].begin(), path.actions[t].end(), data.actions.row(row).begin());
        if (in_kl) {
          data.kl_weights[row] = 1.0;
          ++kl_count;
        }
      }
  }
  for (double& w : data.kl_weights) w /= static_cast<double>(kl_count);
  data.states = normalizer.normalize(raw);
  data.advantages = advantages;
  data.weights = buffer.step_weights(weighting);
  PolicyBatch old = policy_forward_batch(theta_old, data.states, bounds);
  data.old_mean = std::move(old.mean);
  data.old_cov = std::move(old.cov);
  return data;
}

PolicyEvaluation evaluate_policy_objective(const MlpParams& theta, const PolicyObjectiveData& data,
                                           const BarrierConfig& barrier, CovBounds bounds, RngStream* fisher_rng) {
  const std::size_t n = data.states.rows();
  if (data.actions.rows() != n || data.advantages.size() != n || data.weights.size() != n ||
      data.kl_weights.size() != n || data.old_mean.rows() != n || data.old_cov.rows() != n)
    throw ConfigError("policy objective: inconsistent batch sizes");
  PolicyEvaluation ev;
  ev.batch = policy_forward_batch(theta, data.states, bounds);
  const PolicyBatch& b = ev.batch;
  const std::size_t d = b.mean.cols();

  Vec upstream(n);
  double surrogate = 0.0, kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    upstream[i] = data.weights[i] * data.advantages[i];
    double lp = 0.0, kli = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = b.cov(i, j), diff = data.actions(i, j) - b.mean(i, j);
      lp += -0.5 * std::log(2.0 * M_PI * c) - diff * diff / (2.0 * c);
      if (data.kl_weights[i] != 0.0) {
        check_cov(data.old_cov(i, j), bounds.min);
        check_cov(c, bounds.min);
        kli += kl_term(data.old_mean(i, j), data.old_cov(i, j), b.mean(i, j), c);
      }
    }
    surrogate += upstream[i] * lp;
    kl += data.kl_weights[i] * kli;
  }
  ev.surrogate = surrogate;
  ev.kl = kl;
  ev.objective = barrier_objective(surrogate, kl, barrier);
  ev.barrier_active = barrier_active(kl, barrier);

  Mat d_mean(n, d), d_cov(n, d);
  add_log_prob_grads(b, data.actions, upstream, d_mean, d_cov);
  if (ev.barrier_active) {
    for (std::size_t i = 0; i < n; ++i) {
      const double w = barrier.alpha * data.kl_weights[i];
      if (w == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        const double mo = data.old_mean(i, j), co = data.old_cov(i, j);
        const double mn = b.mean(i, j), cn = b.cov(i, j);
        const double dm = mo - mn;
        d_mean(i, j) -= w * (mn - mo) / cn;
        d_cov(i, j) -= w * 0.5 * (1.0 / cn - (co + dm * dm) / (cn * cn));
      }
    }
  }
  ev.gradient = policy_backward(theta, b, d_mean, d_cov, bounds);

  if (fisher_rng) {
    Mat fm(n, d), fc(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = b.cov(i, j), z = fisher_rng->normal();
        fm(i, j) = z / std::sqrt(c);
        fc(i, j) = 0.5 * (z * z - 1.0) / c;
      }
    policy_backward(theta, b, fm, fc, bounds, &ev.fisher_output_grads, false);
  }
  return ev;
}

Gradients policy_gradient(const PolicyReplayBuffer& buffer, const MlpParams& theta, const Vec& advantages,
                          const ObsNormalizer& normalizer, const MlpParams& theta_old,
                          const BarrierConfig& barrier, PolicyWeighting weighting, CovBounds bounds) {
  const PolicyObjectiveData data =
      make_policy_objective_data(buffer, advantages, normalizer, theta_old, weighting, false, bounds);
  return evaluate_policy_objective(theta, data, barrier, bounds).gradient;
}

}  // namespace rtrl
