#include "synthdata/attributes.hpp"

#include <cmath>
#include <string>

#include "common/error.hpp"

namespace crg {

std::string_view attribute_name(Attribute a) {
    switch (a) {
        case Attribute::FaceSize: return "face_size";
        case Attribute::HairShade: return "hair_shade";
        case Attribute::MouthCurve: return "mouth_curve";
        case Attribute::Eyewear: return "eyewear";
    }
    return "unknown";
}

std::optional<Attribute> parse_attribute(std::string_view name) {
    for (auto a : kAllAttributes)
        if (attribute_name(a) == name) return a;
    return std::nullopt;
}

AttributeRange attribute_range(Attribute a) {
    if (a == Attribute::MouthCurve) return {-1.0, 1.0};
    return {0.0, 1.0};
}

bool is_attributed(Attribute a, double value) { return value > attribute_range(a).midpoint(); }

AttributeConfig::AttributeConfig(double face_size, double hair_shade, double mouth_curve,
                                 double eyewear, std::uint64_t nuisance_seed)
    : values_{face_size, hair_shade, mouth_curve, eyewear}, nuisance_seed_(nuisance_seed) {
    for (auto a : kAllAttributes) {
        const double v = get(a);
        const auto r = attribute_range(a);
        require(std::isfinite(v) && v >= r.lo && v <= r.hi, ErrorCode::InvalidArgument,
                std::string(attribute_name(a)) + " = " + std::to_string(v) + " outside [" +
                    std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
    }
}

AttributeConfig AttributeConfig::neutral(std::uint64_t nuisance_seed) {
    return AttributeConfig(0.5, 0.5, 0.0, 0.5, nuisance_seed);
}

AttributeConfig AttributeConfig::with(Attribute a, double value) const {
    auto v = values_;
    v[static_cast<std::size_t>(a)] = value;
    return AttributeConfig(v[0], v[1], v[2], v[3], nuisance_seed_);
}

AttributeConfig AttributeConfig::with_seed(std::uint64_t seed) const {
    return AttributeConfig(values_[0], values_[1], values_[2], values_[3], seed);
}

}  // namespace crg
