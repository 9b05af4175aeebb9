#include "editing/editing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "common/error.hpp"
#include "common/io.hpp"

namespace crg {
namespace {

void check_dims(std::size_t a, std::size_t b, const char* what) {
    require(a == b, ErrorCode::Shape,
            std::string(what) + ": dimension " + std::to_string(a) + " does not match " + std::to_string(b));
}

double dot(const LatentVector& a, const LatentVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const LatentVector& v) { return std::sqrt(dot(v, v)); }

void check_finite(const LatentVector& v, const char* what) {
    for (double c : v) require(std::isfinite(c), ErrorCode::InvalidArgument, std::string(what) + " is not finite");
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double unbiased_sd(std::span<const double> v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

AttributeDirection AttributeDirection::negated() const {
    AttributeDirection d = *this;
    for (auto& c : d.raw) c = -c;
    for (auto& c : d.unit) c = -c;
    return d;
}

nlohmann::json AttributeDirection::to_json() const {
    return {{"dimension", dimension()}, {"raw", raw}, {"unit", unit}, {"provenance", provenance},
            {"attribute", attribute}};
}

AttributeDirection AttributeDirection::from_json(const nlohmann::json& j) {
    AttributeDirection d;
    try {
        d.raw = j.at("raw").get<LatentVector>();
        d.unit = j.at("unit").get<LatentVector>();
        d.provenance = j.value("provenance", std::string());
        d.attribute = j.value("attribute", std::string());
        if (j.contains("dimension"))
            require(j.at("dimension").get<std::size_t>() == d.unit.size(), ErrorCode::InvalidArgument,
                    "direction dimension field disagrees with its vectors");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed direction document: ") + e.what());
    }
    require(d.raw.size() == d.unit.size() && !d.unit.empty(), ErrorCode::InvalidArgument,
            "direction raw and unit forms must be non-empty and of equal dimension");
    require(std::abs(norm(d.unit) - 1.0) <= 1e-9, ErrorCode::InvalidArgument, "direction unit form is not unit length");
    return d;
}

AttributeDirection attribute_direction(const LatentVector& z1, const LatentVector& z2, std::string attribute,
                                       std::string provenance) {
    check_dims(z1.size(), z2.size(), "attribute_direction");
    require(!z1.empty(), ErrorCode::InvalidArgument, "attribute_direction needs non-empty latents");
    check_finite(z1, "z1");
    check_finite(z2, "z2");
    LatentVector delta(z1.size());
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = z2[i] - z1[i];
    const double sq = dot(delta, delta);
    require(std::sqrt(sq) > 1e-12, ErrorCode::Degenerate, "degenerate reference pair: z1 and z2 coincide");
    AttributeDirection d;
    d.raw.resize(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) d.raw[i] = delta[i] / sq;
    const double rn = norm(d.raw);
    d.unit.resize(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) d.unit[i] = d.raw[i] / rn;
    d.attribute = std::move(attribute);
    d.provenance = provenance.empty() ? "pair" : std::move(provenance);
    return d;
}

AttributeDirection average_direction(std::span<const AttributeDirection> directions) {
    require(!directions.empty(), ErrorCode::InvalidArgument, "average_direction needs at least one direction");
    const auto dim = directions.front().dimension();
    LatentVector mean(dim, 0.0);
    for (const auto& d : directions) {
        check_dims(d.dimension(), dim, "average_direction");
        for (std::size_t i = 0; i < dim; ++i) mean[i] += d.unit[i];
    }
    for (auto& c : mean) c /= static_cast<double>(directions.size());
    const double n = norm(mean);
    require(n >= 1e-9, ErrorCode::Degenerate, "directions cancel: their mean has (near) zero norm");
    AttributeDirection out;
    out.unit.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) out.unit[i] = mean[i] / n;
    out.raw = out.unit;
    out.provenance = "average-of-" + std::to_string(directions.size());
    out.attribute = directions.front().attribute;
    return out;
}

LatentVector edit_latent(const LatentVector& z_p, const AttributeDirection& d, double k, bool use_unit) {
    check_dims(z_p.size(), d.dimension(), "edit_latent");
    require(std::isfinite(k), ErrorCode::InvalidArgument, "edit strength k must be finite");
    const auto& f = use_unit ? d.unit : d.raw;
    LatentVector out(z_p.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = z_p[i] + k * f[i];
    return out;
}

double project_onto_direction(const LatentVector& z, const AttributeDirection& d) {
    check_dims(z.size(), d.dimension(), "project_onto_direction");
    return dot(z, d.unit);
}

double ProjectionStats::separation() const {
    return std::abs(mu_attributed - mu_neutral) / std::max(sigma_attributed, sigma_neutral);
}

nlohmann::json ProjectionStats::to_json() const {
    return {{"direction", direction},
            {"mu_neutral", mu_neutral},
            {"sigma_neutral", sigma_neutral},
            {"mu_attributed", mu_attributed},
            {"sigma_attributed", sigma_attributed},
            {"count_neutral", count_neutral},
            {"count_attributed", count_attributed},
            {"separation", separation()}};
}

ProjectionStats ProjectionStats::from_json(const nlohmann::json& j) {
    ProjectionStats s;
    try {
        s.direction = j.value("direction", LatentVector{});
        s.mu_neutral = j.at("mu_neutral").get<double>();
        s.sigma_neutral = j.at("sigma_neutral").get<double>();
        s.mu_attributed = j.at("mu_attributed").get<double>();
        s.sigma_attributed = j.at("sigma_attributed").get<double>();
        s.count_neutral = j.value("count_neutral", std::size_t{2});
        s.count_attributed = j.value("count_attributed", std::size_t{2});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed projection stats: ") + e.what());
    }
    require(s.sigma_neutral > 0 && s.sigma_attributed > 0, ErrorCode::InvalidArgument,
            "projection stats need positive standard deviations");
    return s;
}

ProjectionStats fit_two_gaussians(std::span<const double> neutral, std::span<const double> attributed) {
    require(neutral.size() >= 2 && attributed.size() >= 2, ErrorCode::InvalidArgument,
            "fit_two_gaussians needs at least two samples per class");
    for (double x : neutral) require(std::isfinite(x), ErrorCode::InvalidArgument, "non-finite projection");
    for (double x : attributed) require(std::isfinite(x), ErrorCode::InvalidArgument, "non-finite projection");
    ProjectionStats s;
    s.mu_neutral = mean_of(neutral);
    s.mu_attributed = mean_of(attributed);
    s.sigma_neutral = unbiased_sd(neutral, s.mu_neutral);
    s.sigma_attributed = unbiased_sd(attributed, s.mu_attributed);
    s.count_neutral = neutral.size();
    s.count_attributed = attributed.size();
    require(s.sigma_neutral > 0 && s.sigma_attributed > 0, ErrorCode::Degenerate,
            "a projected class has zero spread; its standard deviation must be positive");
    return s;
}

KRange k_range(const LatentVector& z_p, const AttributeDirection& d, const ProjectionStats& stats, bool use_unit) {
    check_dims(z_p.size(), d.dimension(), "k_range");
    if (!stats.direction.empty()) {
        check_dims(stats.direction.size(), d.dimension(), "k_range stats");
        for (std::size_t i = 0; i < d.unit.size(); ++i)
            require(std::abs(stats.direction[i] - d.unit[i]) <= 1e-9, ErrorCode::InvalidArgument,
                    "projection stats were computed on a different direction");
    }
    require(stats.mu_attributed > stats.mu_neutral, ErrorCode::Orientation,
            "direction points away from the attribute (mu_attributed <= mu_neutral); negate it");
    const double scale = use_unit ? 1.0 : norm(d.raw);
    const double p = project_onto_direction(z_p, d);
    const double upper = stats.upper_bound(), lower = stats.lower_bound();
    KRange r{(lower - p) / scale, (upper - p) / scale};
    // Pull each end inward by whole ulps until its floating-point projection
    // lies inside the band.
    auto proj = [&](double k) { return project_onto_direction(edit_latent(z_p, d, k, use_unit), d); };
    for (int i = 0; i < 64 && proj(r.hi) > upper; ++i) r.hi = std::nextafter(r.hi, -INFINITY);
    for (int i = 0; i < 64 && proj(r.lo) < lower; ++i) r.lo = std::nextafter(r.lo, INFINITY);
    return r;
}

std::vector<HistogramBin> projection_histogram(std::span<const double> neutral, std::span<const double> attributed,
                                               int bins) {
    require(bins >= 1, ErrorCode::InvalidArgument, "histogram needs at least one bin");
    require(!neutral.empty() || !attributed.empty(), ErrorCode::InvalidArgument, "histogram needs samples");
    double lo = INFINITY, hi = -INFINITY;
    for (auto set : {neutral, attributed})
        for (double x : set) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    if (hi <= lo) hi = lo + 1.0;
    const double width = (hi - lo) / bins;
    std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) {
        out[b].lo = lo + b * width;
        out[b].hi = b + 1 == bins ? hi : lo + (b + 1) * width;
    }
    auto index = [&](double x) {
        return std::clamp(static_cast<int>(std::floor((x - lo) / width)), 0, bins - 1);
    };
    for (double x : neutral) ++out[index(x)].neutral;
    for (double x : attributed) ++out[index(x)].attributed;
    return out;
}

std::string histogram_csv(const std::vector<HistogramBin>& bins) {
    std::ostringstream os;
    os.precision(17);
    os << "bin_lo,bin_hi,count_neutral,count_attributed\n";
    for (const auto& b : bins) os << b.lo << ',' << b.hi << ',' << b.neutral << ',' << b.attributed << '\n';
    return os.str();
}

AttributeAnalysis analyze_attribute(const EncoderModel& encoder, std::span<const ImageTensor> neutral,
                                    std::span<const ImageTensor> attributed, const AttributeDirection& d,
                                    const std::optional<std::filesystem::path>& histogram_path, int bins) {
    require(!neutral.empty() && !attributed.empty(), ErrorCode::InvalidArgument,
            "attribute analysis needs neutral and attributed images");
    check_dims(static_cast<std::size_t>(encoder.latent_dim()), d.dimension(), "analyze_attribute");
    AttributeAnalysis out;
    for (const auto& z : encoder_forward(encoder, neutral)) out.neutral_projections.push_back(project_onto_direction(z, d));
    for (const auto& z : encoder_forward(encoder, attributed))
        out.attributed_projections.push_back(project_onto_direction(z, d));
    out.stats = fit_two_gaussians(out.neutral_projections, out.attributed_projections);
    out.stats.direction = d.unit;
    out.histogram = projection_histogram(out.neutral_projections, out.attributed_projections, bins);
    if (histogram_path) write_file_atomic(*histogram_path, histogram_csv(out.histogram));
    return out;
}

AttributeDirection direction_from_images(const EncoderModel& encoder, const ImageTensor& neutral,
                                         const ImageTensor& attributed, std::string attribute) {
    std::vector<ImageTensor> pair = {neutral, attributed};
    auto z = encoder_forward(encoder, pair);
    return attribute_direction(z[0], z[1], std::move(attribute), "pair");
}

}  // namespace crg
