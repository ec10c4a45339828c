#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "risn/autodiff/dual.hpp"
#include "risn/autodiff/tape.hpp"

namespace risn::net {

enum class Activation { Tanh, Sin };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpConfig {
  std::size_t input_dim = 1;
  std::size_t hidden_width = 20;
  std::size_t hidden_layers = 7;
  std::size_t output_dim = 1;
  Activation activation = Activation::Tanh;
  /// Identity skip around every hidden layer whose input width matches.
  bool residual = true;

  void validate() const;
  bool operator==(const MlpConfig&) const = default;
};

struct Layer {
  ad::Tensor weight;  // fan_in x fan_out
  ad::Tensor bias;    // 1 x fan_out
};

/// Weights and biases of every affine map, first hidden layer to output.
struct ResidualMlpParams {
  MlpConfig config;
  std::vector<Layer> layers;
  std::uint64_t seed = 0;

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  /// Inverse of flatten(); throws on a length mismatch.
  void assign(std::span<const double> flat);
};

/// Glorot-uniform weights, zero biases. Deterministic in (config, seed).
ResidualMlpParams init_params(const MlpConfig& config, std::uint64_t seed);

/// Parameters registered as leaves of one tape.
class BoundMlp {
 public:
  BoundMlp(const ResidualMlpParams& params, ad::Tape& tape);

  const std::vector<ad::Var>& variables() const { return vars_; }
  const MlpConfig& config() const { return config_; }

  /// Works for plain Vars and for (nested) Duals, so input derivatives of
  /// the network can be taken with ad::input_derivative.
  template <class V>
  V forward(const V& x) const {
    const std::size_t n_layers = config_.hidden_layers + 1;
    const std::size_t in_cols = ad::primal_value(x).cols();
    if (in_cols != config_.input_dim) {
      throw ad::ShapeError("network expects " + std::to_string(config_.input_dim) + " input columns, got " +
                           std::to_string(in_cols));
    }
    V a = x;
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
      V z = add(matmul(a, ad::lift<V>(vars_[2 * l])), ad::lift<V>(vars_[2 * l + 1]));
      V h = config_.activation == Activation::Tanh ? tanh(z) : sin(z);
      const bool skip = config_.residual && (l > 0 || config_.input_dim == config_.hidden_width);
      a = skip ? add(h, a) : h;
    }
    const std::size_t last = n_layers - 1;
    return add(matmul(a, ad::lift<V>(vars_[2 * last])), ad::lift<V>(vars_[2 * last + 1]));
  }

 private:
  MlpConfig config_;
  std::vector<ad::Var> vars_;  // weight, bias, weight, bias, ...
};

/// Tape-free evaluation, N x d -> N x output_dim.
ad::Tensor forward(const ResidualMlpParams& params, const ad::Tensor& x);

nlohmann::json to_json(const ResidualMlpParams& params);
ResidualMlpParams params_from_json(const nlohmann::json& j);
void save_params(const ResidualMlpParams& params, const std::filesystem::path& path);
ResidualMlpParams load_params(const std::filesystem::path& path);

nlohmann::json to_json(const MlpConfig& config);
MlpConfig mlp_config_from_json(const nlohmann::json& j);

}  // namespace risn::net
