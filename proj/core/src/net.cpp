#include "ksc/net.hpp"

#include <cmath>
#include <stdexcept>

namespace ksc {

std::size_t LiftingNetwork::parameter_count() const {
  std::size_t total = 0;
  for (int l = 0; l < layer_count(); ++l)
    total += static_cast<std::size_t>(weights[l].size()) + biases[l].size();
  return total;
}

void LiftingNetwork::validate() const {
  if (weights.empty() || weights.size() != biases.size())
    throw std::invalid_argument("LiftingNetwork: inconsistent layer lists");
  for (int l = 0; l < layer_count(); ++l) {
    if (biases[l].size() != weights[l].rows())
      throw std::invalid_argument("LiftingNetwork: bias/weight shape mismatch");
    if (l > 0 && weights[l].cols() != weights[l - 1].rows())
      throw std::invalid_argument("LiftingNetwork: layer shapes do not chain");
    if (!all_finite(weights[l]) || !all_finite(biases[l]))
      throw std::invalid_argument("LiftingNetwork: non-finite parameters");
  }
}

Mat LiftingNetwork::forward(const Mat& input) const {
  Workspace ws;
  return forward(input, ws);
}

Mat LiftingNetwork::forward(const Mat& input, Workspace& ws) const {
  if (input.rows() != input_dim())
    throw std::invalid_argument("LiftingNetwork: input dimension mismatch");
  const int layers = layer_count();
  ws.h.assign(layers + 1, Mat());
  ws.h[0] = input;
  for (int l = 0; l < layers; ++l) {
    Mat a = (weights[l] * ws.h[l]).colwise() + biases[l];
    ws.h[l + 1] = (l < layers - 1) ? a.array().tanh().matrix() : std::move(a);
  }
  return ws.h[layers];
}

Mat LiftingNetwork::backward(const Mat& upstream, const Workspace& ws,
                             std::vector<Mat>& grad_w,
                             std::vector<Vec>& grad_b) const {
  const int layers = layer_count();
  Mat delta = upstream;  // dL/da of the layer being processed
  for (int l = layers - 1; l >= 0; --l) {
    if (l < layers - 1) {
      // tanh'(a) = 1 - h^2 with h the cached post-activation
      delta.array() *= 1.0 - ws.h[l + 1].array().square();
    }
    grad_w[l].noalias() += delta * ws.h[l].transpose();
    grad_b[l] += delta.rowwise().sum();
    delta = weights[l].transpose() * delta;
  }
  return delta;
}

std::vector<Mat> LiftingNetwork::zero_like_weights() const {
  std::vector<Mat> out;
  for (const auto& w : weights) out.push_back(Mat::Zero(w.rows(), w.cols()));
  return out;
}

std::vector<Vec> LiftingNetwork::zero_like_biases() const {
  std::vector<Vec> out;
  for (const auto& b : biases) out.push_back(Vec::Zero(b.size()));
  return out;
}

LiftingNetwork LiftingNetwork::create(int input, const std::vector<int>& hidden,
                                      int output, Rng& rng) {
  LiftingNetwork net;
  std::vector<int> dims;
  dims.push_back(input);
  for (int h : hidden) dims.push_back(h);
  dims.push_back(output);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int rows = dims[l + 1];
    const int cols = dims[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    Mat w(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) w(r, c) = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vec::Zero(rows));
  }
  net.validate();
  return net;
}

}  // namespace ksc
