#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rtrl/rng.hpp"
#include "rtrl/tensor.hpp"

namespace rtrl {

enum class Activation : std::uint8_t { kLinear = 0, kTanh = 1 };

struct Dense {
  Mat weight;  // out x in
  Vec bias;    // out
};

struct MlpParams {
  std::vector<Dense> layers;
  std::vector<Activation> activations;

  std::size_t input_dim() const { return layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.back().weight.rows(); }
  std::size_t parameter_count() const;
  /// Throws ConfigError if consecutive shapes do not chain.
  void validate() const;
};

/// Shape-congruent with the MlpParams it was computed for.
struct Gradients {
  std::vector<Dense> layers;
};

Gradients zeros_like(const MlpParams& params);
Gradients zeros_like(const Gradients& grads);
bool congruent(const MlpParams& params, const Gradients& grads);
/// a += s * b
void add_scaled(Gradients& a, double s, const Gradients& b);
void scale(Gradients& g, double s);
double dot(const Gradients& a, const Gradients& b);
double norm(const Gradients& g);
bool all_finite(const Gradients& g);

/// Layer-order flattening: each layer's weight (row-major) then its bias.
Vec flatten(const std::vector<Dense>& layers);
void unflatten(std::span<const double> flat, std::vector<Dense>& layers);

inline constexpr double kMinCovEl = 0.2;
inline constexpr double kMaxCovEl = 5.0;
inline constexpr std::size_t kHiddenUnits = 64;

struct CovBounds {
  double min = kMinCovEl;
  double max = kMaxCovEl;
};

/// Diagonal Gaussian over actions; `cov` holds variances.
struct GaussianHead {
  Vec mean;
  Vec cov;
};

// ---- construction

/// Orthogonal matrix (rows or columns orthonormal, whichever fits) times gain.
Mat orthogonal_init(std::size_t rows, std::size_t cols, double gain, RngStream& rng);

/// in -> 64 tanh -> 64 tanh -> 2*action_dim linear. The first action_dim
/// outputs are the mean (orthogonal, gain 0.01), the rest drive the
/// covariance map (zero, so the initial variance is the mid-range value).
MlpParams init_policy_params(std::size_t state_dim, std::size_t action_dim, RngStream& rng,
                             std::size_t hidden = kHiddenUnits);
/// in -> 64 tanh -> 64 tanh -> 1 linear.
MlpParams init_value_params(std::size_t state_dim, RngStream& rng, std::size_t hidden = kHiddenUnits);

// ---- batched MLP

/// inputs[l] is the (N x in_l) input of layer l; output is the last layer's
/// post-activation value.
struct MlpTrace {
  std::vector<Mat> inputs;
  Mat output;
};

MlpTrace mlp_forward(const MlpParams& params, const Mat& x);

/// Reverse pass from dLoss/dOutput. When `preact_grads` is given it receives
/// the per-sample pre-activation gradients of every layer (the K-FAC output
/// statistics). Parameter gradients are skipped if `want_param_grads` is false.
Gradients mlp_backward(const MlpParams& params, const MlpTrace& trace, Mat d_output,
                       std::vector<Mat>* preact_grads = nullptr, bool want_param_grads = true);

// ---- policy

double bounded_cov(double logit, CovBounds bounds);
/// d cov / d logit of the bounded-sigmoid map.
double bounded_cov_slope(double logit, CovBounds bounds);

struct PolicyBatch {
  Mat mean;       // N x d
  Mat cov;        // N x d
  Mat cov_logit;  // N x d
  MlpTrace trace;

  std::size_t size() const { return mean.rows(); }
  GaussianHead head(std::size_t i) const;
};

PolicyBatch policy_forward_batch(const MlpParams& theta, const Mat& states, CovBounds bounds = {});
GaussianHead policy_forward(const MlpParams& theta, std::span<const double> state, CovBounds bounds = {});

/// a = mean + sqrt(cov) * z, z ~ N(0, I).
Vec sample_action(const GaussianHead& head, RngStream& rng);
double log_prob(const GaussianHead& head, std::span<const double> action);
double entropy(const GaussianHead& head);

/// Backpropagates per-sample upstream gradients on (mean, cov) into theta.
Gradients policy_backward(const MlpParams& theta, const PolicyBatch& batch, const Mat& d_mean,
                          const Mat& d_cov, CovBounds bounds = {},
                          std::vector<Mat>* preact_grads = nullptr, bool want_param_grads = true);

/// Accumulates weight_i * d log pi(a_i|s_i) / d(mean, cov) into d_mean, d_cov.
void add_log_prob_grads(const PolicyBatch& batch, const Mat& actions, std::span<const double> weights,
                        Mat& d_mean, Mat& d_cov);

/// upstream * grad_theta log pi(action | state), covariance path included.
Gradients backprop_policy(const MlpParams& theta, std::span<const double> state,
                          std::span<const double> action, double upstream, CovBounds bounds = {});

// ---- value

double value_forward(const MlpParams& psi, std::span<const double> state);
Vec value_forward_batch(const MlpParams& psi, const Mat& states);
/// loss = sum_i (V(s_i) - target_i)^2 and its exact gradient.
std::pair<double, Gradients> backprop_value(const MlpParams& psi, const Mat& states,
                                            std::span<const double> targets);

// ---- observation normalization

/// Running per-dimension mean/variance, merged batch-wise (Chan et al.).
/// With no data it is the identity map.
class ObsNormalizer {
 public:
  static constexpr double kEpsilon = 1e-8;
  static constexpr double kClip = 10.0;

  ObsNormalizer() = default;
  explicit ObsNormalizer(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}
  ObsNormalizer(double count, Vec mean, Vec m2);

  std::size_t dim() const { return mean_.size(); }
  double count() const { return count_; }
  const Vec& mean() const { return mean_; }
  const Vec& m2() const { return m2_; }
  Vec variance() const;

  void update(const Mat& states);
  Vec normalize(std::span<const double> state) const;
  Mat normalize(const Mat& states) const;

  bool operator==(const ObsNormalizer&) const = default;

 private:
  double count_ = 0.0;
  Vec mean_;
  Vec m2_;
};

// ---- checkpoints

/// Binary layout, all integers and floats little-endian:
///   "RTRLCKPT" | u32 version=1 | u32 net_count
///   per net: u32 layers, per layer (u32 in, u32 out, u8 activation),
///            then per layer out*in f64 weights (row-major) and out f64 biases
///   u32 obs_dim | f64 count | obs_dim f64 mean | obs_dim f64 m2
struct Checkpoint {
  MlpParams policy;
  MlpParams value;
  ObsNormalizer normalizer;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt,
                     const std::map<std::string, std::string>& metadata = {});
Checkpoint load_checkpoint(const std::string& path);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace rtrl
