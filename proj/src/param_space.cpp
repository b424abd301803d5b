#include "simcal/param_space.hpp"

#include <cmath>
#include <set>

namespace simcal {

ParameterSpace::ParameterSpace(std::vector<ParameterSpec> specs)
    : specs_(std::move(specs)) {
    if (specs_.empty())
        throw ConfigurationError("parameter space must have at least one parameter");
    std::set<std::string> names;
    for (const auto& s : specs_) {
        if (!(s.low > 0))
            throw ConfigurationError("parameter '" + s.name + "': low bound must be positive");
        if (!(s.high > s.low))
            throw ConfigurationError("parameter '" + s.name + "': high bound must exceed low bound");
        if (!names.insert(s.name).second)
            throw ConfigurationError("duplicate parameter name '" + s.name + "'");
    }
}

NormPoint normalize(const ParameterSpace& space, const Point& point) {
    NormPoint n;
    n.coords.reserve(space.dimension());
    for (const auto& spec : space.specs()) {
        auto it = point.values.find(spec.name);
        if (it == point.values.end())
            throw RangeViolation("point is missing parameter '" + spec.name + "'");
        const double v = it->second;
        if (!(v >= spec.low) || !(v <= spec.high))
            throw RangeViolation("parameter '" + spec.name + "' value " + std::to_string(v) +
                                 " outside range [" + std::to_string(spec.low) + ", " +
                                 std::to_string(spec.high) + "]");
        n.coords.push_back((std::log2(v) - std::log2(spec.low)) /
                           (std::log2(spec.high) - std::log2(spec.low)));
    }
    return n;
}

Point denormalize(const ParameterSpace& space, const NormPoint& n) {
    if (n.coords.size() != space.dimension())
        throw RangeViolation("normalized point has wrong dimension");
    Point p;
    for (std::size_t i = 0; i < n.coords.size(); ++i) {
        const auto& spec = space.spec(i);
        const double t = n.coords[i];
        if (!(t >= 0.0) || !(t <= 1.0))
            throw RangeViolation("parameter '" + spec.name + "' coordinate " +
                                 std::to_string(t) + " outside [0,1]");
        double v;
        if (t == 0.0)
            v = spec.low;
        else if (t == 1.0)
            v = spec.high;
        else
            v = std::exp2(std::log2(spec.low) + t * (std::log2(spec.high) - std::log2(spec.low)));
        p.values[spec.name] = v;
    }
    return p;
}

NormPoint sample_uniform(const ParameterSpace& space, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    NormPoint n;
    n.coords.reserve(space.dimension());
    for (std::size_t i = 0; i < space.dimension(); ++i)
        n.coords.push_back(unit(rng));
    return n;
}

} // namespace simcal
