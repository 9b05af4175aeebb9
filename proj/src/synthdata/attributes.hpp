#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace crg {

enum class Attribute { FaceSize = 0, HairShade = 1, MouthCurve = 2, Eyewear = 3 };

inline constexpr std::array<Attribute, 4> kAllAttributes = {
    Attribute::FaceSize, Attribute::HairShade, Attribute::MouthCurve, Attribute::Eyewear};

struct AttributeRange {
    double lo;
    double hi;
    double midpoint() const { return 0.5 * (lo + hi); }
};

std::string_view attribute_name(Attribute a);
std::optional<Attribute> parse_attribute(std::string_view name);
AttributeRange attribute_range(Attribute a);

// Label used for neutral/attributed splits: value above the range midpoint.
bool is_attributed(Attribute a, double value);

class AttributeConfig {
public:
    // Throws Error(InvalidArgument) when a field leaves its closed range.
    AttributeConfig(double face_size, double hair_shade, double mouth_curve, double eyewear,
                    std::uint64_t nuisance_seed = 0);

    // Range midpoints.
    static AttributeConfig neutral(std::uint64_t nuisance_seed = 0);

    double face_size() const noexcept { return values_[0]; }
    double hair_shade() const noexcept { return values_[1]; }
    double mouth_curve() const noexcept { return values_[2]; }
    double eyewear() const noexcept { return values_[3]; }
    std::uint64_t nuisance_seed() const noexcept { return nuisance_seed_; }

    double get(Attribute a) const noexcept { return values_[static_cast<std::size_t>(a)]; }
    AttributeConfig with(Attribute a, double value) const;
    AttributeConfig with_seed(std::uint64_t seed) const;

    const std::array<double, 4>& values() const noexcept { return values_; }

    bool operator==(const AttributeConfig&) const = default;

private:
    std::array<double, 4> values_;
    std::uint64_t nuisance_seed_;
};

}  // namespace crg
