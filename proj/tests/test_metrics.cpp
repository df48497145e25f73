#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "emoseg/metrics.hpp"
#include "emoseg/rng.hpp"

using namespace emoseg;

namespace {

Mask square(int h, int w, int top, int left, int size) {
    Mask m(h, w);
    for (int i = top; i < top + size; ++i)
        for (int j = left; j < left + size; ++j) m.at(i, j) = 1;
    return m;
}

Mask random_mask(int h, int w, Rng& rng, double density = 0.3) {
    Mask m(h, w);
    for (auto& v : m.v) v = rng.uniform() < density ? 1 : 0;
    return m;
}

}  // namespace

TEST_CASE("jaccard basics") {
    Mask a = square(8, 8, 1, 1, 3);
    CHECK(jaccard(a, a) == 1.0);

    Mask b = square(8, 8, 5, 5, 2);
    CHECK(jaccard(a, b) == 0.0);

    Mask p(4, 4), g(4, 4);
    p.at(0, 0) = p.at(0, 1) = 1;
    g.at(0, 1) = g.at(0, 2) = 1;
    CHECK(jaccard(p, g) == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Mask empty(4, 4);
    CHECK(jaccard(empty, empty) == 1.0);
    CHECK_THROWS_AS(jaccard(a, p), std::invalid_argument);
}

TEST_CASE("boundary_f basics") {
    Mask a = square(32, 32, 4, 4, 10);
    CHECK(boundary_f(a, a) == 1.0);

    Mask empty(32, 32);
    CHECK(boundary_f(empty, a) == 0.0);
    CHECK(boundary_f(empty, empty) == 1.0);
}

TEST_CASE("boundary_f tolerates a one-pixel shift at 64x64") {
    // radius = ceil(0.008 * sqrt(64^2+64^2)) = ceil(0.724) = 1
    Mask a = square(64, 64, 10, 10, 10);
    Mask b = square(64, 64, 10, 11, 10);
    CHECK(boundary_f(a, b) == 1.0);
}

TEST_CASE("jaccard and boundary_f are symmetric") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Mask a = random_mask(20, 20, rng);
        Mask b = random_mask(20, 20, rng);
        CHECK(jaccard(a, b) == jaccard(b, a));
        CHECK(boundary_f(a, b) == doctest::Approx(boundary_f(b, a)).epsilon(1e-12));
    }
}

TEST_CASE("removing a false positive never decreases jaccard") {
    Rng rng(32);
    for (int trial = 0; trial < 20; ++trial) {
        Mask gt = random_mask(16, 16, rng);
        Mask pred = random_mask(16, 16, rng, 0.5);
        double before = jaccard(pred, gt);
        // drop one false-positive pixel, if any
        for (size_t i = 0; i < pred.v.size(); ++i)
            if (pred.v[i] && !gt.v[i]) {
                pred.v[i] = 0;
                break;
            }
        CHECK(jaccard(pred, gt) >= before);
    }
}

TEST_CASE("aggregate means, recalls and J&F") {
    std::vector<FrameScore> perfect(5, FrameScore{1.0, 1.0});
    Report r = aggregate(perfect);
    CHECK(r.j_mean == 100.0);
    CHECK(r.j_recall == 100.0);
    CHECK(r.f_mean == 100.0);
    CHECK(r.f_recall == 100.0);
    CHECK(r.j_and_f == 100.0);

    // benchmark arithmetic: (63.5 + 81.5) / 2 = 72.5 and (68.9 + 83.7) / 2 = 76.3
    Report med = aggregate({{0.635, 0.815}, {0.635, 0.815}});
    CHECK(med.j_and_f == doctest::Approx(72.5).epsilon(1e-9));
    Report emo = aggregate({{0.689, 0.837}});
    CHECK(emo.j_and_f == doctest::Approx(76.3).epsilon(1e-9));

    Report mixed = aggregate({{0.6, 0.6}, {0.4, 0.4}});
    CHECK(mixed.j_mean == doctest::Approx(50.0));
    CHECK(mixed.j_recall == doctest::Approx(50.0));  // 0.5 is not > 0.5

    CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
}

TEST_CASE("report text format") {
    Report r = aggregate({{0.635, 0.815}});
    std::string text = format_report(r);
    CHECK(text.find("J_mean 63.5") != std::string::npos);
    CHECK(text.find("F_mean 81.5") != std::string::npos);
    CHECK(text.find("JandF 72.5") != std::string::npos);
}
