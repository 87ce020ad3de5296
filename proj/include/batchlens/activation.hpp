#ifndef BATCHLENS_ACTIVATION_HPP
#define BATCHLENS_ACTIVATION_HPP

#include <batchlens/errors.hpp>

#include <string>
#include <string_view>

namespace batchlens {

enum class Activation { linear, relu };

inline double activate(Activation act, double z) noexcept {
  return act == Activation::linear ? z : (z > 0.0 ? z : 0.0);
}

// ReLU subgradient at 0 is 0.
inline double activate_derivative(Activation act, double z) noexcept {
  return act == Activation::linear ? 1.0 : (z > 0.0 ? 1.0 : 0.0);
}

inline std::string to_string(Activation act) { return act == Activation::linear ? "linear" : "relu"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  throw InvalidParameter("unknown activation '" + std::string(s) + "'");
}

}  // namespace batchlens

#endif  // BATCHLENS_ACTIVATION_HPP
