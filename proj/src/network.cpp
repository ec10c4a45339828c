#include "risn/network.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace risn::net {

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "sin"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "sin") return Activation::Sin;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

void MlpConfig::validate() const {
  if (input_dim < 1) throw std::invalid_argument("MlpConfig: input_dim must be >= 1");
  if (hidden_width < 1) throw std::invalid_argument("MlpConfig: hidden_width must be >= 1");
  if (hidden_layers < 1) throw std::invalid_argument("MlpConfig: hidden_layers must be >= 1");
  if (output_dim < 1) throw std::invalid_argument("MlpConfig: output_dim must be >= 1");
}

std::size_t ResidualMlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<double> ResidualMlpParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
    flat.insert(flat.end(), l.bias.data().begin(), l.bias.data().end());
  }
  return flat;
}

void ResidualMlpParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw std::invalid_argument("assign: expected " + std::to_string(parameter_count()) + " values, got " +
                                std::to_string(flat.size()));
  }
  std::size_t k = 0;
  for (auto& l : layers) {
    for (double& v : l.weight.data()) v = flat[k++];
    for (double& v : l.bias.data()) v = flat[k++];
  }
}

ResidualMlpParams init_params(const MlpConfig& config, std::uint64_t seed) {
  config.validate();
  ResidualMlpParams params;
  params.config = config;
  params.seed = seed;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> widths{config.input_dim};
  for (std::size_t i = 0; i < config.hidden_layers; ++i) widths.push_back(config.hidden_width);
  widths.push_back(config.output_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer{ad::Tensor(fan_in, fan_out), ad::Tensor(1, fan_out)};
    for (double& v : layer.weight.data()) v = dist(rng);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

BoundMlp::BoundMlp(const ResidualMlpParams& params, ad::Tape& tape) : config_(params.config) {
  if (params.layers.size() != config_.hidden_layers + 1) {
    throw std::invalid_argument("parameter layer count does not match config");
  }
  vars_.reserve(2 * params.layers.size());
  for (const auto& l : params.layers) {
    vars_.push_back(tape.leaf(l.weight));
    vars_.push_back(tape.leaf(l.bias));
  }
}

ad::Tensor forward(const ResidualMlpParams& params, const ad::Tensor& x) {
  ad::Tape tape;
  BoundMlp net(params, tape);
  return net.forward(tape.constant(x)).value();
}

namespace {

nlohmann::json tensor_json(const ad::Tensor& t) {
  return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.values()}};
}

ad::Tensor tensor_from(const nlohmann::json& j) {
  return ad::Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                    j.at("data").get<std::vector<double>>());
}

}  // namespace

nlohmann::json to_json(const MlpConfig& c) {
  return {{"input_dim", c.input_dim},   {"hidden_width", c.hidden_width},
          {"hidden_layers", c.hidden_layers}, {"output_dim", c.output_dim},
          {"activation", to_string(c.activation)}, {"residual", c.residual}};
}

MlpConfig mlp_config_from_json(const nlohmann::json& j) {
  MlpConfig c;
  c.input_dim = j.value("input_dim", c.input_dim);
  c.hidden_width = j.value("hidden_width", c.hidden_width);
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.output_dim = j.value("output_dim", c.output_dim);
  c.activation = activation_from_string(j.value("activation", std::string("tanh")));
  c.residual = j.value("residual", c.residual);
  c.validate();
  return c;
}

nlohmann::json to_json(const ResidualMlpParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers) layers.push_back({{"weight", tensor_json(l.weight)}, {"bias", tensor_json(l.bias)}});
  return {{"config", to_json(p.config)}, {"seed", p.seed}, {"layers", layers}};
}

ResidualMlpParams params_from_json(const nlohmann::json& j) {
  ResidualMlpParams p;
  p.config = mlp_config_from_json(j.at("config"));
  p.seed = j.value("seed", std::uint64_t{0});
  std::vector<std::size_t> widths{p.config.input_dim};
  for (std::size_t i = 0; i < p.config.hidden_layers; ++i) widths.push_back(p.config.hidden_width);
  widths.push_back(p.config.output_dim);
  const auto& layers = j.at("layers");
  if (layers.size() + 1 != widths.size()) throw std::invalid_argument("parameter file: wrong layer count");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Layer layer{tensor_from(layers[l].at("weight")), tensor_from(layers[l].at("bias"))};
    if (layer.weight.rows() != widths[l] || layer.weight.cols() != widths[l + 1] || layer.bias.rows() != 1 ||
        layer.bias.cols() != widths[l + 1]) {
      throw std::invalid_argument("parameter file: layer " + std::to_string(l) + " has wrong shape");
    }
    ad::check_finite(layer.weight, "parameter file");
    ad::check_finite(layer.bias, "parameter file");
    p.layers.push_back(std::move(layer));
  }
  return p;
}

void save_params(const ResidualMlpParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(params).dump();
}

ResidualMlpParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return params_from_json(nlohmann::json::parse(in));
}

}  // namespace risn::net
