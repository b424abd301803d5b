#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "simcal/errors.hpp"

namespace simcal {

/// One calibratable parameter with a positive physical range [low, high].
struct ParameterSpec {
    std::string name;
    std::string unit; // free-text, e.g. "flop/s", "byte/s"
    double low = 0;
    double high = 0;
};

/// Ordered list of parameters; the ordering defines coordinate indices.
class ParameterSpace {
  public:
    explicit ParameterSpace(std::vector<ParameterSpec> specs);

    std::size_t dimension() const { return specs_.size(); }
    const std::vector<ParameterSpec>& specs() const { return specs_; }
    const ParameterSpec& spec(std::size_t i) const { return specs_.at(i); }

  private:
    std::vector<ParameterSpec> specs_;
};

/// A candidate in physical units, keyed by parameter name.
struct Point {
    std::map<std::string, double> values;
};

/// The same candidate in log2-normalized [0,1]^p coordinates.
struct NormPoint {
    std::vector<double> coords;
};

/// Maps physical values to [0,1] coordinates: t_i = (log2 v_i - log2 low_i) / (log2 high_i - log2 low_i).
NormPoint normalize(const ParameterSpace& space, const Point& point);

/// Exact inverse of normalize up to floating-point round-off; endpoints map exactly.
Point denormalize(const ParameterSpace& space, const NormPoint& n);

/// Draws each coordinate independently uniform on [0,1]; consumes exactly p draws.
NormPoint sample_uniform(const ParameterSpace& space, std::mt19937_64& rng);

} // namespace simcal
