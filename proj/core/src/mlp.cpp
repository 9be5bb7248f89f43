#include "lcpvae/mlp.hpp"

#include <cmath>

#include "lcpvae/error.hpp"

namespace lcpvae {

MlpBlock::MlpBlock(std::string name, std::vector<std::size_t> widths)
    : name_(std::move(name)), widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ConfigError("MlpBlock " + name_ + ": needs at least input and output widths");
  for (std::size_t w : widths_) {
    if (w == 0) throw ConfigError("MlpBlock " + name_ + ": zero layer width");
  }
}

MlpBlock::MlpBlock(std::string name, std::vector<std::size_t> widths, std::mt19937_64& rng)
    : MlpBlock(std::move(name), std::move(widths)) {
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    std::vector<double> w(in * out);
    for (double& v : w) v = uniform(rng);
    weights_.push_back(Var::parameter(Tensor::matrix(in, out, std::move(w))));
    biases_.push_back(Var::parameter(Tensor::zeros({1, out})));
  }
}

MlpBlock MlpBlock::zeros(std::string name, std::vector<std::size_t> widths) {
  MlpBlock block(std::move(name), std::move(widths));
  for (std::size_t l = 0; l + 1 < block.widths_.size(); ++l) {
    block.weights_.push_back(Var::parameter(Tensor::zeros({block.widths_[l], block.widths_[l + 1]})));
    block.biases_.push_back(Var::parameter(Tensor::zeros({1, block.widths_[l + 1]})));
  }
  return block;
}

Var MlpBlock::forward(const Var& input) const {
  if (input.value().rank() != 2 || input.value().cols() != input_width()) {
    throw ShapeError("MlpBlock " + name_ + ": input shape " + shape_string(input.shape()) + ", expected [*, " +
                     std::to_string(input_width()) + "]");
  }
  Var h = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = add_rowwise(matmul(h, weights_[l]), biases_[l]);
    if (l + 1 < weights_.size()) h = tanh(h);
  }
  return h;
}

std::vector<NamedParameter> MlpBlock::parameters() const {
  std::vector<NamedParameter> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back({name_ + ".w" + std::to_string(l), weights_[l]});
    out.push_back({name_ + ".b" + std::to_string(l), biases_[l]});
  }
  return out;
}

DiagGaussian encode(const MlpBlock& block, const Var& input) {
  const std::size_t width = block.output_width();
  if (width % 2 != 0) {
    throw ConfigError("encode: block " + block.name() + " has odd output width " + std::to_string(width));
  }
  const Var out = block.forward(input);
  return DiagGaussian::from_encoder(slice_cols(out, 0, width / 2), slice_cols(out, width / 2, width));
}

}  // namespace lcpvae
