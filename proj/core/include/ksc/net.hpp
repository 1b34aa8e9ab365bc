#pragma once

#include <vector>

#include "ksc/linalg.hpp"
#include "ksc/rng.hpp"

namespace ksc {

// Fully connected lifting network: tanh hidden layers, linear output.
// Forward and backward passes are batched; a batch is a matrix whose
// columns are samples.
struct LiftingNetwork {
  std::vector<Mat> weights;  // weights[l] is (out x in)
  std::vector<Vec> biases;

  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  std::size_t parameter_count() const;

  void validate() const;

  // Cached post-activation values, h[0] is the input batch.
  struct Workspace {
    std::vector<Mat> h;
  };

  Mat forward(const Mat& input) const;
  Mat forward(const Mat& input, Workspace& ws) const;

  // Accumulates parameter gradients for the batch and returns dL/d(input).
  // grad_w / grad_b must be zero-initialized to the network's shapes.
  Mat backward(const Mat& upstream, const Workspace& ws,
               std::vector<Mat>& grad_w, std::vector<Vec>& grad_b) const;

  std::vector<Mat> zero_like_weights() const;
  std::vector<Vec> zero_like_biases() const;

  // Weights uniform in +-1/sqrt(fan_in), biases zero.
  static LiftingNetwork create(int input, const std::vector<int>& hidden,
                               int output, Rng& rng);
};

}  // namespace ksc
