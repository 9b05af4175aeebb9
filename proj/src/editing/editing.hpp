#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "models/networks.hpp"

namespace crg {

struct AttributeDirection {
    LatentVector raw;   // (z2 - z1) / |z2 - z1|^2
    LatentVector unit;  // raw / |raw|
    std::string provenance;
    std::string attribute;

    std::size_t dimension() const noexcept { return unit.size(); }
    AttributeDirection negated() const;
    nlohmann::json to_json() const;
    // Throws Error(InvalidArgument) on a malformed document or a non-unit
    // `unit` field.
    static AttributeDirection from_json(const nlohmann::json& j);
};

// z1 is the neutral reference, z2 the attributed one. Throws
// Error(Degenerate) when |z2 - z1| <= 1e-12.
AttributeDirection attribute_direction(const LatentVector& z1, const LatentVector& z2, std::string attribute = {},
                                       std::string provenance = {});

// Mean of the unit forms, re-normalized; raw equals unit. Throws
// Error(Degenerate) when the mean has norm < 1e-9.
AttributeDirection average_direction(std::span<const AttributeDirection> directions);

// z_p + k * raw, or z_p + k * unit when use_unit is set.
LatentVector edit_latent(const LatentVector& z_p, const AttributeDirection& d, double k, bool use_unit = false);

// <z, d.unit>
double project_onto_direction(const LatentVector& z, const AttributeDirection& d);

struct ProjectionStats {
    LatentVector direction;  // unit form used for the projections
    double mu_neutral = 0.0, sigma_neutral = 0.0;
    double mu_attributed = 0.0, sigma_attributed = 0.0;
    std::size_t count_neutral = 0, count_attributed = 0;

    double separation() const;
    double lower_bound() const { return mu_neutral - 3.0 * sigma_neutral; }
    double upper_bound() const { return mu_attributed + 3.0 * sigma_attributed; }
    nlohmann::json to_json() const;
    static ProjectionStats from_json(const nlohmann::json& j);
};

// Sample means and unbiased standard deviations per class. Throws
// Error(InvalidArgument) with fewer than two samples in a class and
// Error(Degenerate) when a class has zero spread.
ProjectionStats fit_two_gaussians(std::span<const double> neutral, std::span<const double> attributed);

struct KRange {
    double lo = 0.0;
    double hi = 0.0;
};

// Edit strengths keeping <edit(z_p, d, k), unit> inside
// [mu_n - 3 sigma_n, mu_a + 3 sigma_a]. Throws Error(Orientation) when
// mu_a <= mu_n.
KRange k_range(const LatentVector& z_p, const AttributeDirection& d, const ProjectionStats& stats,
               bool use_unit = false);

struct HistogramBin {
    double lo = 0.0, hi = 0.0;
    std::size_t neutral = 0, attributed = 0;
};

std::vector<HistogramBin> projection_histogram(std::span<const double> neutral, std::span<const double> attributed,
                                               int bins = 20);
std::string histogram_csv(const std::vector<HistogramBin>& bins);

struct AttributeAnalysis {
    ProjectionStats stats;
    std::vector<double> neutral_projections;
    std::vector<double> attributed_projections;
    std::vector<HistogramBin> histogram;
};

// Encodes both image sets, projects onto d and fits the two populations.
// Writes the histogram CSV when histogram_path is set.
AttributeAnalysis analyze_attribute(const EncoderModel& encoder, std::span<const ImageTensor> neutral,
                                    std::span<const ImageTensor> attributed, const AttributeDirection& d,
                                    const std::optional<std::filesystem::path>& histogram_path = std::nullopt,
                                    int bins = 20);

// Direction between the encodings of a neutral and an attributed image.
AttributeDirection direction_from_images(const EncoderModel& encoder, const ImageTensor& neutral,
                                         const ImageTensor& attributed, std::string attribute = {});

}  // namespace crg
