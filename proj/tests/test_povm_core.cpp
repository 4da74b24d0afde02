#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <povmkit/analysis.hpp>
#include <povmkit/io.hpp>
#include <povmkit/models.hpp>
#include <povmkit/povm.hpp>
#include <povmkit/tomography.hpp>

#include <algorithm>
#include <string>

using namespace povmkit;

namespace {

PovmSet on_off_set(double eta) {
    PovmSet set;
    set.weights.resize(2, 2);
    set.weights << 1.0, 1.0 - eta, 0.0, eta;
    return set;
}

}  // namespace

TEST_CASE("validate accepts a consistent two-outcome set") {
    CHECK(validate(on_off_set(0.5), 1e-9).empty());
}

TEST_CASE("validate flags an incomplete single-outcome set") {
    PovmSet set;
    set.weights.resize(1, 2);
    set.weights << 0.5, 0.5;
    const auto report = validate(set, 1e-9);
    REQUIRE(!report.empty());
    bool found = false;
    for (const auto& line : report) {
        if (line.find("photon number 0") != std::string::npos) found = true;
    }
    CHECK(found);
}

TEST_CASE("validate accepts a reconstructed set at 1e-6") {
    Eigen::MatrixXd p(5, 3);
    p << 0.7, 0.2, 0.1,
         0.1, 0.8, 0.1,
         0.3, 0.3, 0.4,
         0.0, 0.5, 0.5,
         0.25, 0.25, 0.5;
    const Eigen::MatrixXd f = Eigen::MatrixXd::Identity(5, 5);
    ReconstructionConfig config;
    config.gamma = 0.0;
    const auto result = reconstruct(p, f, 3, config);
    CHECK(validate(result.povm, 1e-6).empty());
}

TEST_CASE("extend_to pads a saturated projector") {
    PovmSet set;
    set.weights.resize(2, 2);
    set.weights << 1.0, 0.0, 0.0, 1.0;
    const PovmSet big = extend_to(set, 4);
    Eigen::MatrixXd expected(2, 4);
    expected << 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0;
    CHECK(big.weights == expected);
}

TEST_CASE("extend_to preserves low-outcome purities and dilutes the top") {
    const PovmSet base = equal_split_povm({4, 0.72, 0.0, 0.0}, 200);
    const PovmSet big = extend_to(base, 5000);
    for (int n = 0; n < 4; ++n) {
        CHECK(purity(big.weights.row(n)) ==
              doctest::Approx(purity(base.weights.row(n))).epsilon(1e-6));
    }
    CHECK(purity(big.weights.row(4)) < purity(base.weights.row(4)));
}

TEST_CASE("extend_to rejects an unsaturated set") {
    PovmSet set;
    set.weights.resize(2, 2);
    set.weights << 1.0, 0.7, 0.0, 0.3;
    CHECK_THROWS_AS(extend_to(set, 10), SaturationError);
}

TEST_CASE("extend then truncate is the identity") {
    const PovmSet base = equal_split_povm({4, 0.72, 0.0, 0.0}, 200);
    const PovmSet back = truncate_to(extend_to(base, 5000), 200);
    CHECK(back.weights == base.weights);
}

TEST_CASE("truncate_to slices weights bitwise") {
    const PovmSet base = extend_to(equal_split_povm({4, 0.72, 0.0, 0.0}, 200), 5000);
    const PovmSet cut = truncate_to(base, 100);
    REQUIRE(cut.dimension() == 100);
    CHECK(cut.weights == base.weights.leftCols(100));
}

TEST_CASE("truncate_to rejects dimension below 2") {
    CHECK_THROWS_AS(truncate_to(on_off_set(0.5), 1), DimensionError);
}

TEST_CASE("extended columns sum to one exactly") {
    const PovmSet big = extend_to(equal_split_povm({4, 0.72, 0.0, 0.0}, 200), 400);
    for (int i = 200; i < 400; ++i) {
        CHECK(big.weights.col(i).sum() == 1.0);
    }
}

TEST_CASE("model-built sets validate at 1e-9") {
    CHECK(validate(equal_split_povm({4, 0.72, 0.0, 0.0}, 300), 1e-9).empty());
    CHECK(validate(equal_split_povm({4, 0.63, 1.5e-6, 0.14}, 300), 1e-9).empty());
    CHECK(validate(equal_split_povm({8, 0.69, 0.0, 4.3e-7}, 300), 1e-9).empty());
    CHECK(validate(loop_povm({10, 0.5, 0.9, 0.9, 0.0}, 300), 1e-9).empty());
}

TEST_CASE("povm JSON round trip is bit exact") {
    const PovmSet base = equal_split_povm({4, 0.63, 1.5e-6, 0.14}, 60);
    const PovmSet back = povm_from_json(povm_to_json(base));
    REQUIRE(back.outcome_count() == base.outcome_count());
    REQUIRE(back.dimension() == base.dimension());
    CHECK(back.weights == base.weights);
}

TEST_CASE("povm CSV carries the documented header") {
    const PovmSet base = on_off_set(0.25);
    const std::string csv = povm_to_csv(base);
    CHECK(csv.rfind("n,i0,i1", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
