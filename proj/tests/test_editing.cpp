#include "test_support.hpp"

#include <cmath>
#include <random>

#include "common/io.hpp"
#include "editing/editing.hpp"
#include "fixtures.hpp"

using namespace crg;

namespace {

double dot(const LatentVector& a, const LatentVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const LatentVector& a) { return std::sqrt(dot(a, a)); }

void check_close(const LatentVector& a, const LatentVector& b, double tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

ProjectionStats stats_of(double mu_n, double sigma_n, double mu_a, double sigma_a) {
    ProjectionStats s;
    s.mu_neutral = mu_n;
    s.sigma_neutral = sigma_n;
    s.mu_attributed = mu_a;
    s.sigma_attributed = sigma_a;
    s.count_neutral = s.count_attributed = 10;
    return s;
}

}  // namespace

TEST_SUITE("editing") {

TEST_CASE("direction from a reference pair") {
    auto d = attribute_direction({0.0, 0.0}, {2.0, 0.0}, "eyewear");
    CHECK((d.raw == LatentVector{0.5, 0.0}));
    CHECK((d.unit == LatentVector{1.0, 0.0}));
    CHECK(d.attribute == "eyewear");

    auto e = attribute_direction({1.0, 1.0}, {1.0, 3.0});
    CHECK((e.raw == LatentVector{0.0, 0.5}));
    CHECK((e.unit == LatentVector{0.0, 1.0}));
}

TEST_CASE("direction antisymmetry and unit norm on random pairs") {
    auto zs = test::random_latents(40, 16, 3);
    for (std::size_t i = 0; i + 1 < zs.size(); i += 2) {
        auto ab = attribute_direction(zs[i], zs[i + 1]);
        auto ba = attribute_direction(zs[i + 1], zs[i]);
        for (std::size_t k = 0; k < 16; ++k) {
            CHECK(ab.raw[k] == -ba.raw[k]);
            CHECK(ab.unit[k] == -ba.unit[k]);
        }
        CHECK(std::abs(norm(ab.unit) - 1.0) < 1e-9);
        // raw is a positive multiple of unit with |raw| = 1 / |z2 - z1|
        CHECK(dot(ab.raw, ab.unit) > 0.0);
        LatentVector delta(16);
        for (std::size_t k = 0; k < 16; ++k) delta[k] = zs[i + 1][k] - zs[i][k];
        CHECK(norm(ab.raw) == doctest::Approx(1.0 / norm(delta)).epsilon(1e-12));
    }
}

TEST_CASE("degenerate reference pairs are rejected") {
    CHECK_ERROR_CODE(attribute_direction({1.0, 2.0}, {1.0, 2.0}), Degenerate);
    CHECK_ERROR_CODE(attribute_direction({0.0}, {1e-13}), Degenerate);
    CHECK_ERROR_CODE(attribute_direction({0.0, 1.0}, {1.0}), Shape);
}

TEST_CASE("averaging directions") {
    auto a = attribute_direction({0.0, 0.0}, {4.0, 0.0});
    std::vector<AttributeDirection> one = {a};
    auto avg1 = average_direction(one);
    CHECK((avg1.unit == a.unit));
    CHECK((avg1.raw == a.unit));
    CHECK(avg1.provenance == "average-of-1");

    std::vector<AttributeDirection> same = {a, a};
    CHECK((average_direction(same).unit == a.unit));

    auto b = attribute_direction({0.0, 0.0}, {0.0, 0.25});
    std::vector<AttributeDirection> two = {a, b};
    auto avg = average_direction(two);
    CHECK(avg.unit[0] == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-15));
    CHECK(avg.unit[1] == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-15));
    CHECK(avg.provenance == "average-of-2");

    std::vector<AttributeDirection> opposite = {a, a.negated()};
    CHECK_ERROR_CODE(average_direction(opposite), Degenerate);
    std::vector<AttributeDirection> none;
    CHECK_ERROR_CODE(average_direction(none), InvalidArgument);
}

TEST_CASE("editing a latent") {
    auto d = attribute_direction({0.0, 0.0}, {2.0, 0.0});
    CHECK((edit_latent({0.0, 0.0}, d, 2.0) == LatentVector{1.0, 0.0}));
    CHECK((edit_latent({0.0, 0.0}, d, 2.0, true) == LatentVector{2.0, 0.0}));
    CHECK((edit_latent({0.3, -0.7}, d, 0.0) == LatentVector{0.3, -0.7}));

    auto zs = test::random_latents(20, 8, 5);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> k(-3.0, 3.0);
    for (std::size_t i = 0; i + 1 < zs.size(); i += 2) {
        auto dir = attribute_direction(zs[i], zs[i + 1]);
        const double k1 = k(rng), k2 = k(rng);
        check_close(edit_latent(edit_latent(zs[i], dir, k1), dir, k2), edit_latent(zs[i], dir, k1 + k2), 1e-12);
    }
}

TEST_CASE("projection onto a direction") {
    auto d = attribute_direction({0.0, 0.0, 0.0}, {0.0, 2.0, 0.0});
    CHECK(project_onto_direction({0.0, 3.0, 0.0}, d) == 3.0);
    CHECK(project_onto_direction({5.0, 0.0, -2.0}, d) == 0.0);

    auto zs = test::random_latents(30, 12, 8);
    for (std::size_t i = 0; i + 2 < zs.size(); i += 3) {
        auto dir = attribute_direction(zs[i], zs[i + 1]);
        for (double k : {-2.5, 0.3, 4.0}) {
            const double lhs = project_onto_direction(edit_latent(zs[i + 2], dir, k), dir) -
                               project_onto_direction(zs[i + 2], dir);
            CHECK(std::abs(lhs - k * norm(dir.raw)) < 1e-9);
        }
    }
}

TEST_CASE("two-Gaussian fit") {
    std::vector<double> n = {-1.0, 1.0}, a = {9.0, 11.0};
    auto s = fit_two_gaussians(n, a);
    CHECK(s.mu_neutral == 0.0);
    CHECK(s.mu_attributed == 10.0);
    CHECK(s.sigma_neutral == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(s.sigma_attributed == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(s.separation() == doctest::Approx(10.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(s.count_neutral == 2);

    std::vector<double> n2 = {2.5, 4.5}, a2 = {12.5, 14.5};
    auto t = fit_two_gaussians(n2, a2);
    CHECK(t.mu_neutral == doctest::Approx(3.5));
    CHECK(t.mu_attributed == doctest::Approx(13.5));
    CHECK(t.sigma_neutral == doctest::Approx(s.sigma_neutral));
    CHECK(t.separation() == doctest::Approx(s.separation()));

    std::vector<double> z = {0.0, 0.0}, o = {1.0, 1.0};
    CHECK_ERROR_CODE(fit_two_gaussians(z, o), Degenerate);
    std::vector<double> single = {1.0};
    CHECK_ERROR_CODE(fit_two_gaussians(single, a), InvalidArgument);

    auto round = ProjectionStats::from_json(s.to_json());
    CHECK(round.mu_attributed == s.mu_attributed);
    CHECK(round.sigma_neutral == s.sigma_neutral);
}

TEST_CASE("k range examples") {
    auto d = attribute_direction({0.0, 0.0}, {1.0, 0.0});  // |raw| = 1
    auto st = stats_of(-1.0, 0.1, 1.0, 0.2);
    auto r = k_range({0.0, 0.0}, d, st);
    CHECK(r.hi == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(r.lo == doctest::Approx(-1.3).epsilon(1e-12));

    auto at_top = k_range({1.6, 0.0}, d, st);
    CHECK(std::abs(at_top.hi) <= 1e-12);

    auto half = attribute_direction({0.0, 0.0}, {2.0, 0.0});  // |raw| = 0.5
    auto r2 = k_range({0.2, 0.0}, half, st);
    auto r1 = k_range({0.2, 0.0}, d, st);
    CHECK(r2.hi == doctest::Approx(2.0 * r1.hi).epsilon(1e-12));
    CHECK(r2.lo == doctest::Approx(2.0 * r1.lo).epsilon(1e-12));

    CHECK_ERROR_CODE(k_range({0.0, 0.0}, d, stats_of(1.0, 0.1, -1.0, 0.1)), Orientation);
}

TEST_CASE("k range containment on random latents") {
    auto zs = test::random_latents(100, 8, 21);
    auto refs = test::random_latents(2, 8, 22);
    auto d = attribute_direction(refs[0], refs[1]);
    auto st = stats_of(-0.7, 0.3, 1.1, 0.25);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (bool use_unit : {false, true}) {
        for (const auto& z : zs) {
            auto r = k_range(z, d, st, use_unit);
            REQUIRE(r.lo <= r.hi);
            for (double k : {r.lo, r.hi, r.lo + u(rng) * (r.hi - r.lo)}) {
                const double p = project_onto_direction(edit_latent(z, d, k, use_unit), d);
                CHECK(p >= st.lower_bound());
                CHECK(p <= st.upper_bound());
            }
        }
    }
}

TEST_CASE("projection histogram") {
    std::vector<double> n = {0.0, 0.1, 0.2, 0.9}, a = {0.8, 0.95, 1.0};
    auto bins = projection_histogram(n, a, 4);
    REQUIRE(bins.size() == 4);
    std::size_t tn = 0, ta = 0;
    for (const auto& b : bins) {
        tn += b.neutral;
        ta += b.attributed;
        CHECK(b.lo < b.hi);
    }
    CHECK(tn == n.size());
    CHECK(ta == a.size());
    CHECK(bins.front().lo == 0.0);
    CHECK(bins.back().hi == 1.0);
    CHECK(bins.front().neutral == 3);
    CHECK(bins.back().attributed == 3);
    auto csv = histogram_csv(bins);
    CHECK(csv.rfind("bin_lo,bin_hi,count_neutral,count_attributed\n", 0) == 0);
}

TEST_CASE("direction JSON round trip") {
    auto d = attribute_direction({0.1, -0.4, 2.0}, {1.3, 0.6, -1.0}, "eyewear", "pair:test");
    auto back = AttributeDirection::from_json(nlohmann::json::parse(d.to_json().dump()));
    CHECK((back.raw == d.raw));
    CHECK((back.unit == d.unit));
    CHECK(back.attribute == "eyewear");
    CHECK(back.provenance == "pair:test");
    auto bad = d.to_json();
    bad["unit"] = {1.0, 1.0, 0.0};
    CHECK_ERROR_CODE(AttributeDirection::from_json(bad), InvalidArgument);
}

TEST_CASE("attribute analysis with the exact inverse encoder") {
    const int res = 32;
    auto enc = test::exact_inverse_encoder(res);
    auto gen = GeneratorModel::oracle(4, res, "float64");
    auto zs = test::random_latents(40, 4, 31, 0.8);
    std::vector<LatentVector> zn, za;
    for (auto z : zs) {
        z[3] = -1.5;
        zn.push_back(z);
        z[3] = 1.5;
        za.push_back(z);
    }
    auto neutral = generator_forward(gen, zn);
    auto attributed = generator_forward(gen, za);
    auto d = direction_from_images(enc, neutral[0], attributed[0], "eyewear");
    CHECK(std::abs(d.unit[3] - 1.0) < 1e-6);

    test::TempDir tmp;
    auto first = analyze_attribute(enc, neutral, attributed, d, tmp / "hist.csv", 10);
    auto second = analyze_attribute(enc, neutral, attributed, d);
    CHECK(first.stats.mu_neutral == second.stats.mu_neutral);
    CHECK(first.stats.sigma_attributed == second.stats.sigma_attributed);
    CHECK(std::filesystem::exists(tmp / "hist.csv"));
    CHECK(first.stats.mu_attributed > first.stats.mu_neutral);

    auto flipped = analyze_attribute(enc, neutral, attributed, d.negated());
    CHECK(flipped.stats.mu_neutral == doctest::Approx(-first.stats.mu_neutral).epsilon(1e-12));
    CHECK(flipped.stats.mu_attributed == doctest::Approx(-first.stats.mu_attributed).epsilon(1e-12));
    CHECK(flipped.stats.mu_attributed < flipped.stats.mu_neutral);
    CHECK(flipped.stats.separation() == doctest::Approx(first.stats.separation()).epsilon(1e-12));
}

}
