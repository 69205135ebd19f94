#pragma once

#include <functional>
#include <vector>

#include "tarpro/numerics.hpp"

namespace tarpro::test {

inline Tensor2 random_tensor(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor2 t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

inline Mlp random_mlp(std::vector<std::size_t> dims, Activation hidden, Activation out, Rng& rng) {
  Mlp m = Mlp::init(dims, hidden, out, rng);
  // Nonzero biases so relu kinks are not all at the origin.
  for (auto& l : m.layers()) l.bias = random_tensor(1, l.bias.cols(), rng, 0.1);
  return m;
}

inline std::vector<Tensor2> unpack(const MlpGrads& g) {
  std::vector<Tensor2> out;
  for (std::size_t i = 0; i < g.weight.size(); ++i) {
    out.push_back(g.weight[i]);
    out.push_back(g.bias[i]);
  }
  return out;
}

/// Grad-check problem over every parameter of `net`, for a loss computed from
/// the network output and its gradient with respect to that output.
inline GradCheckProblem mlp_problem(Mlp& net, const Tensor2& input,
                                    std::function<double(const Tensor2&, Tensor2*)> head) {
  GradCheckProblem p;
  p.params = net.parameters();
  p.loss = [&net, input, head] { return head(net.forward(input), nullptr); };
  p.gradient = [&net, input, head] {
    const auto cache = net.forward_cached(input);
    Tensor2 up;
    head(cache.output, &up);
    return unpack(net.backward(cache, up));
  };
  return p;
}

}  // namespace tarpro::test
