#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lcpvae/autodiff.hpp"
#include "lcpvae/distributions.hpp"

namespace lcpvae {

struct NamedParameter {
  std::string name;
  Var var;
};

/// Feedforward stack: tanh on hidden layers, linear output.
///
/// `widths` lists input, hidden and output sizes, so a block has
/// widths.size() - 1 affine layers. Weights are [in, out], biases [1, out].
class MlpBlock {
 public:
  MlpBlock() = default;
  /// Glorot-uniform weights, zero biases.
  MlpBlock(std::string name, std::vector<std::size_t> widths, std::mt19937_64& rng);
  /// All weights and biases zero.
  static MlpBlock zeros(std::string name, std::vector<std::size_t> widths);

  const std::string& name() const { return name_; }
  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t input_width() const { return widths_.front(); }
  std::size_t output_width() const { return widths_.back(); }

  /// input: [batch, input_width] -> [batch, output_width].
  Var forward(const Var& input) const;

  /// "<name>.w<i>" and "<name>.b<i>" in layer order.
  std::vector<NamedParameter> parameters() const;

  Var& weight(std::size_t layer) { return weights_.at(layer); }
  Var& bias(std::size_t layer) { return biases_.at(layer); }

 private:
  MlpBlock(std::string name, std::vector<std::size_t> widths);

  std::string name_;
  std::vector<std::size_t> widths_;
  std::vector<Var> weights_;
  std::vector<Var> biases_;
};

/// Splits the block output in half into (mean, log_std). The output width
/// must be even.
DiagGaussian encode(const MlpBlock& block, const Var& input);

}  // namespace lcpvae
